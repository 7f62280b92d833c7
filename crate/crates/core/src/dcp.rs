//! Dark channel prior dehazing.
//!
//! The chain is: dark channel, atmospheric light, raw transmission,
//! optional guided-filter refinement, transmission floor, radiance recovery.
//! Each stage is exposed on its own so the regression model can reuse the
//! exact transmission and airlight that inference sees.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{box_filter, min_filter, Image, Rgb, ScalarMap};

/// How the raw transmission map is smoothed before clamping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refine {
    None,
    Guided,
}

impl fmt::Display for Refine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Refine::None => "none",
            Refine::Guided => "guided",
        })
    }
}

impl FromStr for Refine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Refine::None),
            "guided" => Ok(Refine::Guided),
            other => Err(Error::InvalidParameter(format!(
                "refine must be `none` or `guided`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcpParams {
    /// Radius of the dark-channel window (side `2r + 1`).
    pub window_radius: usize,
    /// Fraction of haze removed; `1 - omega` of it is kept.
    pub omega: f64,
    /// Lower bound applied to the transmission before recovery.
    pub t0: f64,
    /// Fraction of pixels, ranked by dark channel, considered for airlight.
    pub airlight_fraction: f64,
    pub refine: Refine,
    pub guided_radius: usize,
    pub guided_eps: f64,
}

impl Default for DcpParams {
    fn default() -> Self {
        DcpParams {
            window_radius: 7,
            omega: 0.95,
            t0: 0.1,
            airlight_fraction: 0.001,
            refine: Refine::Guided,
            guided_radius: 30,
            guided_eps: 1e-3,
        }
    }
}

impl DcpParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return bad(format!("omega must be in (0, 1], got {}", self.omega));
        }
        if !(self.t0 > 0.0 && self.t0 < 1.0) {
            return bad(format!("t0 must be in (0, 1), got {}", self.t0));
        }
        if !(self.airlight_fraction > 0.0 && self.airlight_fraction <= 1.0) {
            return bad(format!(
                "airlight fraction must be in (0, 1], got {}",
                self.airlight_fraction
            ));
        }
        if self.refine == Refine::Guided && !(self.guided_eps > 0.0 && self.guided_eps.is_finite())
        {
            return bad(format!(
                "guided eps must be positive, got {}",
                self.guided_eps
            ));
        }
        Ok(())
    }
}

/// Windowed minimum of the per-pixel channel minimum.
pub fn dark_channel(img: &Image, radius: usize) -> ScalarMap {
    min_filter(&img.channel_min(), radius)
}

/// Picks the airlight from the brightest pixels of the dark channel.
///
/// The `max(1, round(fraction * n))` pixels with the largest dark-channel
/// value form the candidate set; the candidate with the highest channel
/// mean wins. Both rankings break ties by the smaller row-major index.
pub fn estimate_atmospheric_light(img: &Image, dark: &ScalarMap, fraction: f64) -> Result<Rgb> {
    img.ensure_same_dims(dark.height(), dark.width())?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "airlight fraction must be in (0, 1], got {fraction}"
        )));
    }
    let n = dark.len();
    let k = ((fraction * n as f64).round() as usize).clamp(1, n);
    let values = dark.data();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the lower index first among equal values.
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let mut best = order[0];
    let mut best_intensity = img.pixel_at(best).mean();
    for &idx in &order[1..k] {
        let intensity = img.pixel_at(idx).mean();
        if intensity > best_intensity || (intensity == best_intensity && idx < best) {
            best = idx;
            best_intensity = intensity;
        }
    }
    Ok(img.pixel_at(best))
}

fn ensure_positive_airlight(airlight: Rgb) -> Result<()> {
    let a = airlight.to_array();
    if a.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositiveAirlight(a));
    }
    Ok(())
}

/// Raw transmission `1 - omega * dark(I / A)`, with each ratio clipped to
/// `[0, 1]` before the minimum is taken.
pub fn estimate_transmission(
    img: &Image,
    airlight: Rgb,
    omega: f64,
    radius: usize,
) -> Result<ScalarMap> {
    ensure_positive_airlight(airlight)?;
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "omega must be in (0, 1], got {omega}"
        )));
    }
    let a = airlight.to_array();
    let normalized: Vec<f64> = (0..img.len())
        .map(|i| {
            (0..3)
                .map(|c| (img.plane(c)[i] / a[c]).clamp(0.0, 1.0))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let normalized = ScalarMap::from_raw(img.height(), img.width(), normalized);
    let dark = min_filter(&normalized, radius);
    dark.map(|d| (1.0 - omega * d).clamp(0.0, 1.0))
}

/// Guided-filter refinement of a transmission map using the gray version
/// of `guide` as guidance. Output is clipped to `[0, 1]`.
pub fn refine_transmission(
    guide: &Image,
    t: &ScalarMap,
    radius: usize,
    eps: f64,
) -> Result<ScalarMap> {
    guide.ensure_same_dims(t.height(), t.width())?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "guided eps must be positive, got {eps}"
        )));
    }
    let gray = guide.gray();
    let out = guided_filter(&gray, t, radius, eps);
    out.map(|v| v.clamp(0.0, 1.0))
}

/// Gray-guide guided filter with border-clipped box means.
pub fn guided_filter(guide: &ScalarMap, input: &ScalarMap, radius: usize, eps: f64) -> ScalarMap {
    let (h, w) = guide.dims();
    let product = |a: &ScalarMap, b: &ScalarMap| {
        ScalarMap::from_raw(
            h,
            w,
            a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect(),
        )
    };
    let mean_g = box_filter(guide, radius);
    let mean_p = box_filter(input, radius);
    let mean_gp = box_filter(&product(guide, input), radius);
    let mean_gg = box_filter(&product(guide, guide), radius);

    let mut a = Vec::with_capacity(h * w);
    let mut b = Vec::with_capacity(h * w);
    for i in 0..h * w {
        let (mg, mp) = (mean_g.data()[i], mean_p.data()[i]);
        let cov = mean_gp.data()[i] - mg * mp;
        let var = mean_gg.data()[i] - mg * mg;
        let ai = cov / (var + eps);
        a.push(ai);
        b.push(mp - ai * mg);
    }
    let mean_a = box_filter(&ScalarMap::from_raw(h, w, a), radius);
    let mean_b = box_filter(&ScalarMap::from_raw(h, w, b), radius);
    let out = (0..h * w)
        .map(|i| mean_a.data()[i] * guide.data()[i] + mean_b.data()[i])
        .collect();
    ScalarMap::from_raw(h, w, out)
}

/// Floors the transmission at `t0`.
pub fn clamp_transmission(t: &ScalarMap, t0: f64) -> Result<ScalarMap> {
    if !(t0 > 0.0 && t0 < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "t0 must be in (0, 1), got {t0}"
        )));
    }
    t.map(|v| v.max(t0))
}

fn ensure_positive_transmission(t: &ScalarMap) -> Result<()> {
    match t.data().iter().position(|&v| v <= 0.0) {
        Some(index) => Err(Error::NonPositiveTransmission {
            index,
            value: t.data()[index],
        }),
        None => Ok(()),
    }
}

/// Inverts the scattering model without clipping: `(I - A) / t + A`.
pub fn recover_radiance_unclipped(
    img: &Image,
    t: &ScalarMap,
    airlight: Rgb,
) -> Result<[Vec<f64>; 3]> {
    img.ensure_same_dims(t.height(), t.width())?;
    ensure_positive_transmission(t)?;
    let a = airlight.to_array();
    Ok(std::array::from_fn(|c| {
        img.plane(c)
            .iter()
            .zip(t.data())
            .map(|(&i, &tv)| (i - a[c]) / tv + a[c])
            .collect()
    }))
}

/// Scene radiance `(I - A) / t + A`, clipped to `[0, 1]`.
pub fn recover_radiance(img: &Image, t: &ScalarMap, airlight: Rgb) -> Result<Image> {
    let planes = recover_radiance_unclipped(img, t, airlight)?;
    Image::from_planes_clipped(img.height(), img.width(), planes)
}

/// Transmission (already refined and floored) and airlight for an image.
#[derive(Debug, Clone, PartialEq)]
pub struct DcpEstimate {
    pub transmission: ScalarMap,
    pub airlight: Rgb,
}

/// Runs every stage up to and including the transmission floor.
pub fn estimate(img: &Image, params: &DcpParams) -> Result<DcpEstimate> {
    params.validate()?;
    let dark = dark_channel(img, params.window_radius);
    let airlight = estimate_atmospheric_light(img, &dark, params.airlight_fraction)?;
    // A black airlight cannot be divided by; fall back to the smallest
    // representable positive intensity.
    let airlight = Rgb::from_array(airlight.to_array().map(|v| v.max(1.0 / 255.0)));
    let raw = estimate_transmission(img, airlight, params.omega, params.window_radius)?;
    let refined = match params.refine {
        Refine::None => raw,
        Refine::Guided => {
            refine_transmission(img, &raw, params.guided_radius, params.guided_eps)?
        }
    };
    let transmission = clamp_transmission(&refined, params.t0)?;
    Ok(DcpEstimate {
        transmission,
        airlight,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dehazed {
    pub image: Image,
    pub transmission: ScalarMap,
    pub airlight: Rgb,
}

/// Full dark-channel-prior dehazing of one image.
pub fn dehaze_dcp(img: &Image, params: &DcpParams) -> Result<Dehazed> {
    let DcpEstimate {
        transmission,
        airlight,
    } = estimate(img, params)?;
    let image = recover_radiance(img, &transmission, airlight)?;
    Ok(Dehazed {
        image,
        transmission,
        airlight,
    })
}
