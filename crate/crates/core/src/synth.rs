//! Forward scattering model: synthetic haze from clean images, a depth
//! model, a scattering coefficient and an airlight colour.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{list_images, PairManifest, PairRecord, MANIFEST_FILE_NAME};
use crate::error::{Error, Result};
use crate::image::{load_image, save_image, Image, Rgb, ScalarMap};

/// Parametric scene depth (arbitrary units, scaled by `beta`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthModel {
    Constant(f64),
    /// Linear in the row index: `far` at the top row, `near` at the bottom.
    VerticalRamp { near: f64, far: f64 },
    /// Linear in distance from the image centre, normalized so the corners
    /// are at distance 1.
    Radial { center: f64, edge: f64 },
}

impl DepthModel {
    pub fn validate(&self) -> Result<()> {
        let depths: &[f64] = match self {
            DepthModel::Constant(c) => &[*c],
            DepthModel::VerticalRamp { near, far } => &[*near, *far],
            DepthModel::Radial { center, edge } => &[*center, *edge],
        };
        if depths.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "depths must be finite and nonnegative: {self}"
            )));
        }
        Ok(())
    }
}

impl Default for DepthModel {
    fn default() -> Self {
        DepthModel::VerticalRamp {
            near: 0.2,
            far: 1.2,
        }
    }
}

impl fmt::Display for DepthModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DepthModel::Constant(c) => write!(f, "constant:{c}"),
            DepthModel::VerticalRamp { near, far } => write!(f, "ramp:{near}:{far}"),
            DepthModel::Radial { center, edge } => write!(f, "radial:{center}:{edge}"),
        }
    }
}

impl FromStr for DepthModel {
    type Err = Error;

    /// Accepts `constant:C`, `ramp:NEAR:FAR` and `radial:CENTER:EDGE`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidParameter(format!(
                "depth model must be constant:C, ramp:NEAR:FAR or radial:CENTER:EDGE, got `{s}`"
            ))
        };
        let mut parts = s.split(':');
        let kind = parts.next().ok_or_else(bad)?;
        let values = parts
            .map(|p| p.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        let model = match (kind, values.as_slice()) {
            ("constant", [c]) => DepthModel::Constant(*c),
            ("ramp", [near, far]) => DepthModel::VerticalRamp {
                near: *near,
                far: *far,
            },
            ("radial", [center, edge]) => DepthModel::Radial {
                center: *center,
                edge: *edge,
            },
            _ => return Err(bad()),
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn render_depth(model: DepthModel, height: usize, width: usize) -> Result<ScalarMap> {
    model.validate()?;
    match model {
        DepthModel::Constant(c) => ScalarMap::filled(height, width, c),
        DepthModel::VerticalRamp { near, far } => {
            let denom = height.saturating_sub(1).max(1) as f64;
            ScalarMap::from_fn(height, width, |y, _| far + (near - far) * y as f64 / denom)
        }
        DepthModel::Radial { center, edge } => {
            let cy = (height as f64 - 1.0) / 2.0;
            let cx = (width as f64 - 1.0) / 2.0;
            let corner = cy.hypot(cx);
            ScalarMap::from_fn(height, width, |y, x| {
                let r = if corner > 0.0 {
                    (y as f64 - cy).hypot(x as f64 - cx) / corner
                } else {
                    0.0
                };
                center + (edge - center) * r
            })
        }
    }
}

/// `t = exp(-beta * d)`.
pub fn transmission_from_depth(depth: &ScalarMap, beta: f64) -> Result<ScalarMap> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta must be finite and nonnegative, got {beta}"
        )));
    }
    depth.map(|d| (-beta * d).exp())
}

/// `I = J * t + A * (1 - t)` per channel.
pub fn apply_haze(clean: &Image, t: &ScalarMap, airlight: Rgb) -> Result<Image> {
    clean.ensure_same_dims(t.height(), t.width())?;
    let a = airlight.to_array();
    if a.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidParameter(format!(
            "airlight components must be in [0, 1], got {a:?}"
        )));
    }
    let planes = std::array::from_fn(|c| {
        clean
            .plane(c)
            .iter()
            .zip(t.data())
            .map(|(&j, &tv)| j * tv + a[c] * (1.0 - tv))
            .collect()
    });
    // A convex combination of values in [0, 1] can only leave the range by
    // rounding.
    Image::from_planes_clipped(clean.height(), clean.width(), planes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub betas: Vec<f64>,
    pub airlights: Vec<Rgb>,
    pub depth: DepthModel,
    /// Standard deviation of additive Gaussian sensor noise; 0 disables it.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            betas: (2..=10).map(|i| f64::from(i) * 0.2).collect(),
            airlights: [0.7, 0.8, 0.9, 1.0].into_iter().map(Rgb::gray).collect(),
            depth: DepthModel::default(),
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() || self.airlights.is_empty() {
            return Err(Error::NoHazeParameters);
        }
        if let Some(b) = self.betas.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "beta must be finite and nonnegative, got {b}"
            )));
        }
        for a in &self.airlights {
            if a.to_array().iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
                return Err(Error::InvalidParameter(format!(
                    "airlight components must be in (0, 1], got {a:?}"
                )));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        self.depth.validate()
    }
}

/// Formats a haze parameter for file names: up to six decimals, trailing
/// zeros dropped.
pub fn format_param(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Hazy file name for a clean stem: `<stem>_<A-mean>_<beta>.png`.
pub fn hazy_file_name(stem: &str, airlight: Rgb, beta: f64) -> String {
    format!(
        "{stem}_{}_{}.png",
        format_param(airlight.mean()),
        format_param(beta)
    )
}

/// Hazes every image of `clean_dir` under every `(beta, airlight)` pair,
/// writing PNGs plus `manifest.tsv` into `out_dir`.
pub fn synth_set(clean_dir: &Path, out_dir: &Path, config: &SynthConfig) -> Result<PairManifest> {
    config.validate()?;
    let clean_files = list_images(clean_dir)?;
    if clean_files.is_empty() {
        return Err(Error::NoInputImages(clean_dir.to_path_buf()));
    }

    let mut jobs = Vec::new();
    for clean in &clean_files {
        let stem = clean
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for &beta in &config.betas {
            for &airlight in &config.airlights {
                let hazy = out_dir.join(hazy_file_name(&stem, airlight, beta));
                jobs.push(PairRecord {
                    hazy,
                    clean: clean.clone(),
                    beta: Some(beta),
                    airlight: Some(airlight),
                    depth_kind: Some(config.depth.to_string()),
                });
            }
        }
    }
    // Fails on colliding file names before anything is written.
    let manifest = PairManifest::new(jobs.clone())?;

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let noise = Normal::new(0.0, config.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cached: Option<(&Path, Image, ScalarMap)> = None;
    for job in &jobs {
        if cached.as_ref().map(|c| c.0) != Some(job.clean.as_path()) {
            let img = load_image(&job.clean)?;
            let depth = render_depth(config.depth, img.height(), img.width())?;
            cached = Some((job.clean.as_path(), img, depth));
        }
        let (_, clean, depth) = cached.as_ref().expect("loaded above");
        let beta = job.beta.expect("set above");
        let t = transmission_from_depth(depth, beta)?;
        let mut hazy = apply_haze(clean, &t, job.airlight.expect("set above"))?;
        if config.noise_sigma > 0.0 {
            let planes = hazy
                .into_planes()
                .map(|p| p.into_iter().map(|v| v + noise.sample(&mut rng)).collect());
            hazy = Image::from_planes_clipped(clean.height(), clean.width(), planes)?;
        }
        save_image(&hazy, &job.hazy)?;
    }
    manifest.write(out_dir.join(MANIFEST_FILE_NAME))?;
    Ok(manifest)
}
