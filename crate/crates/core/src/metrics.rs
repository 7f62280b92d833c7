//! Full-reference quality metrics and the paired-set evaluation harness.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dataset::PairManifest;
use crate::dcp::{self, DcpParams};
use crate::error::{Error, Result};
use crate::image::{load_image, Image};
use crate::regression::{dehaze_mlr, RegressionModel};

/// PSNR in dB over every sample of both images. Identical images give
/// `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    a.ensure_same_dims(b.height(), b.width())?;
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "peak must be positive, got {peak}"
        )));
    }
    let mut sum = 0.0;
    for c in 0..3 {
        for (x, y) in a.plane(c).iter().zip(b.plane(c)) {
            let d = x - y;
            sum += d * d;
        }
    }
    let mse = sum / (3 * a.len()) as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsimParams {
    /// Side of the square Gaussian window.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "SSIM window must be odd, got {}",
                self.window
            )));
        }
        if !(self.sigma > 0.0 && self.k1 > 0.0 && self.k2 > 0.0 && self.dynamic_range > 0.0) {
            return Err(Error::InvalidParameter(
                "SSIM sigma, k1, k2 and dynamic range must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Unnormalized 1-D Gaussian taps centred on the middle tap.
    pub fn kernel(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        (0..self.window)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect()
    }
}

// Weighted mean with a separable kernel; at the borders the kernel is
// truncated and renormalized. Because the truncated window is a rectangle
// the normalization factors as well.
fn gaussian_mean(plane: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let r = kernel.len() / 2;
    let pass = |get: &dyn Fn(usize) -> f64, n: usize, i: usize| -> f64 {
        let lo = i.saturating_sub(r);
        let hi = (i + r).min(n - 1);
        let (mut acc, mut norm) = (0.0, 0.0);
        for j in lo..=hi {
            let k = kernel[j + r - i];
            acc += k * get(j);
            norm += k;
        }
        acc / norm
    };
    let mut horizontal = vec![0.0; h * w];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            horizontal[y * w + x] = pass(&|j| row[j], w, x);
        }
    }
    let mut out = vec![0.0; h * w];
    for x in 0..w {
        for y in 0..h {
            out[y * w + x] = pass(&|j| horizontal[j * w + x], h, y);
        }
    }
    out
}

/// Mean SSIM over the three channels.
pub fn ssim(a: &Image, b: &Image, params: &SsimParams) -> Result<f64> {
    a.ensure_same_dims(b.height(), b.width())?;
    params.validate()?;
    let (h, w) = a.dims();
    if h.min(w) < params.window {
        return Err(Error::ImageTooSmall {
            found: (h, w),
            window: params.window,
        });
    }
    let kernel = params.kernel();
    let c1 = (params.k1 * params.dynamic_range).powi(2);
    let c2 = (params.k2 * params.dynamic_range).powi(2);

    let mut total = 0.0;
    for c in 0..3 {
        let (pa, pb) = (a.plane(c), b.plane(c));
        let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
        let mu_a = gaussian_mean(pa, h, w, &kernel);
        let mu_b = gaussian_mean(pb, h, w, &kernel);
        let e_aa = gaussian_mean(&prod(pa, pa), h, w, &kernel);
        let e_bb = gaussian_mean(&prod(pb, pb), h, w, &kernel);
        let e_ab = gaussian_mean(&prod(pa, pb), h, w, &kernel);
        let mut sum = 0.0;
        for i in 0..h * w {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
        total += sum / (h * w) as f64;
    }
    Ok(total / 3.0)
}

/// Which restoration the harness runs on each hazy image.
#[derive(Debug, Clone, PartialEq)]
pub enum Dehazer {
    /// The hazy input is scored as-is.
    Passthrough,
    Dcp(DcpParams),
    Mlr {
        model: RegressionModel,
        dcp: DcpParams,
    },
}

impl Dehazer {
    pub fn run(&self, img: &Image) -> Result<Image> {
        match self {
            Dehazer::Passthrough => Ok(img.clone()),
            Dehazer::Dcp(params) => Ok(dcp::dehaze_dcp(img, params)?.image),
            Dehazer::Mlr { model, dcp } => dehaze_mlr(img, model, dcp),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub hazy: PathBuf,
    pub clean: PathBuf,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Mean over rows with finite PSNR; infinite when every scored row was exact.
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub infinite_psnr: usize,
    pub failed: usize,
}

fn evaluate_pair(hazy: &Path, clean: &Path, dehazer: &Dehazer, ssim_params: &SsimParams) -> Result<(f64, f64)> {
    let hazy = load_image(hazy)?;
    let clean = load_image(clean)?;
    let restored = dehazer.run(&hazy)?;
    Ok((
        psnr(&restored, &clean, 1.0)?,
        ssim(&restored, &clean, ssim_params)?,
    ))
}

/// Runs `dehazer` over every pair and scores it against the clean image.
/// Rows keep manifest order. Fails only when no pair could be scored.
pub fn evaluate_set(manifest: &PairManifest, dehazer: &Dehazer) -> Result<EvalReport> {
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let ssim_params = SsimParams::default();
    let rows: Vec<EvalRow> = manifest
        .records()
        .iter()
        .map(|r| {
            let (psnr_db, ssim, status) = match evaluate_pair(&r.hazy, &r.clean, dehazer, &ssim_params) {
                Ok((p, s)) => (Some(p), Some(s), RowStatus::Ok),
                Err(e) => (None, None, RowStatus::Failed(e.to_string())),
            };
            EvalRow {
                hazy: r.hazy.clone(),
                clean: r.clean.clone(),
                psnr_db,
                ssim,
                status,
            }
        })
        .collect();

    let failed = rows.iter().filter(|r| r.status != RowStatus::Ok).count();
    if failed == rows.len() {
        return Err(Error::AllPairsFailed);
    }
    let finite: Vec<f64> = rows.iter().filter_map(|r| r.psnr_db).filter(|p| p.is_finite()).collect();
    let infinite_psnr = rows
        .iter()
        .filter(|r| r.psnr_db.is_some_and(f64::is_infinite))
        .count();
    let ssims: Vec<f64> = rows.iter().filter_map(|r| r.ssim).collect();
    let mean_psnr = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    let mean_ssim = ssims.iter().sum::<f64>() / ssims.len() as f64;
    Ok(EvalReport {
        rows,
        mean_psnr,
        mean_ssim,
        infinite_psnr,
        failed,
    })
}

pub fn format_metric(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

fn csv_field(s: &str) -> String {
    s.replace([',', '\n', '\r'], " ")
}

impl EvalReport {
    /// CSV with a leading comment describing the metric conventions, the
    /// `hazy,clean,psnr_db,ssim,status` header, one row per pair and a
    /// closing `#mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(
            "# psnr: all RGB samples, float before quantization, peak 1; \
             ssim: mean of per-channel SSIM, 11x11 gaussian sigma 1.5, k1 0.01, k2 0.03, clipped borders\n",
        );
        out.push_str("hazy,clean,psnr_db,ssim,status\n");
        for row in &self.rows {
            let status = match &row.status {
                RowStatus::Ok => "ok".to_string(),
                RowStatus::Failed(msg) => format!("failed: {}", csv_field(msg)),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                csv_field(&row.hazy.to_string_lossy()),
                csv_field(&row.clean.to_string_lossy()),
                row.psnr_db.map(format_metric).unwrap_or_default(),
                row.ssim.map(format_metric).unwrap_or_default(),
                status,
            );
        }
        let _ = writeln!(
            out,
            "#mean,,{},{},ok={} inf={} failed={}",
            format_metric(self.mean_psnr),
            format_metric(self.mean_ssim),
            self.rows.len() - self.failed,
            self.infinite_psnr,
            self.failed,
        );
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
