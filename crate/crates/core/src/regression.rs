//! Per-channel multiple linear regression on top of the dark channel prior.
//!
//! For each pixel and colour channel the dehazed value is predicted as
//!
//! ```text
//! J = w0 * I/t + w1 * A/t + w2 * A + b
//! ```
//!
//! where `t` and `A` come from the DCP stages. The weights `(1, -1, 1, 0)`
//! reproduce plain DCP recovery exactly, so training starts there and
//! learns a correction by full-batch gradient descent on each image.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::PairManifest;
use crate::dcp::{self, DcpParams};
use crate::error::{Error, Result};
use crate::image::{load_image, Image, Rgb, ScalarMap};

/// Three weights and a bias, one value per colour channel each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionModel {
    pub w0: Rgb,
    pub w1: Rgb,
    pub w2: Rgb,
    pub b: Rgb,
}

impl RegressionModel {
    /// The weights under which prediction equals DCP recovery.
    pub const IDENTITY: RegressionModel = RegressionModel {
        w0: Rgb::gray(1.0),
        w1: Rgb::gray(-1.0),
        w2: Rgb::gray(1.0),
        b: Rgb::gray(0.0),
    };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    /// Flattened as `[w0 rgb, w1 rgb, w2 rgb, b rgb]`.
    pub fn to_params(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for (k, v) in [self.w0, self.w1, self.w2, self.b].iter().enumerate() {
            out[3 * k..3 * k + 3].copy_from_slice(&v.to_array());
        }
        out
    }

    pub fn from_params(p: [f64; 12]) -> Self {
        let rgb = |k: usize| Rgb::new(p[3 * k], p[3 * k + 1], p[3 * k + 2]);
        RegressionModel {
            w0: rgb(0),
            w1: rgb(1),
            w2: rgb(2),
            b: rgb(3),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_params().iter().all(|v| v.is_finite())
    }

    // (w0, w1, w2, b) for one channel.
    fn channel(&self, c: usize) -> [f64; 4] {
        [self.w0.get(c), self.w1.get(c), self.w2.get(c), self.b.get(c)]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Text form: a `MLRHAZE 1` header, then one labelled line per
    /// parameter group with three shortest-round-trip decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::from("MLRHAZE 1\n");
        for (name, v) in self.named() {
            let _ = writeln!(out, "{name} {} {} {}", v.r, v.g, v.b);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        let mut head = header.split_whitespace();
        if head.next() != Some("MLRHAZE") {
            return Err(Error::UnrecognizedModel(format!(
                "expected `MLRHAZE 1`, found `{header}`"
            )));
        }
        match head.next() {
            Some("1") if head.next().is_none() => {}
            other => return Err(Error::ModelVersion(other.unwrap_or("").to_string())),
        }
        let mut groups = [Rgb::gray(0.0); 4];
        for (slot, name) in groups.iter_mut().zip(["w0", "w1", "w2", "b"]) {
            let line = lines
                .next()
                .ok_or_else(|| Error::MalformedModel(format!("missing `{name}` line")))?;
            let mut fields = line.split_whitespace();
            if fields.next() != Some(name) {
                return Err(Error::MalformedModel(format!(
                    "expected `{name}` line, found `{line}`"
                )));
            }
            let values = fields
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::MalformedModel(format!("{name}: bad number `{f}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            let [r, g, b] = values[..] else {
                return Err(Error::MalformedModel(format!(
                    "{name}: expected 3 values, found {}",
                    values.len()
                )));
            };
            *slot = Rgb::new(r, g, b);
        }
        if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
            return Err(Error::MalformedModel(format!("unexpected line `{extra}`")));
        }
        let [w0, w1, w2, b] = groups;
        Ok(RegressionModel { w0, w1, w2, b })
    }

    fn named(&self) -> [(&'static str, Rgb); 4] {
        [("w0", self.w0), ("w1", self.w1), ("w2", self.w2), ("b", self.b)]
    }
}

impl Default for RegressionModel {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Regressors for a set of pixels: `x0 = I/t`, `x1 = A/t` per channel, and
/// the constant `x2 = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    height: usize,
    width: usize,
    pub x0: [Vec<f64>; 3],
    pub x1: [Vec<f64>; 3],
    pub x2: Rgb,
}

impl Features {
    pub fn len(&self) -> usize {
        self.x0[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Features at the given linear pixel indices, as a `1 x k` field.
    pub fn select(&self, indices: &[usize]) -> Features {
        let pick = |planes: &[Vec<f64>; 3]| planes.each_ref().map(|p| indices.iter().map(|&i| p[i]).collect());
        Features {
            height: 1,
            width: indices.len(),
            x0: pick(&self.x0),
            x1: pick(&self.x1),
            x2: self.x2,
        }
    }

    /// Builds features from raw per-channel samples.
    pub fn from_samples(x0: [Vec<f64>; 3], x1: [Vec<f64>; 3], x2: Rgb) -> Result<Features> {
        let n = x0[0].len();
        if x0.iter().chain(&x1).any(|p| p.len() != n) {
            return Err(Error::InvalidParameter("feature planes differ in length".into()));
        }
        if x0.iter().chain(&x1).flatten().any(|v| !v.is_finite()) || !x2.is_finite() {
            return Err(Error::InvalidSample("non-finite feature".into()));
        }
        Ok(Features {
            height: 1,
            width: n,
            x0,
            x1,
            x2,
        })
    }
}

pub fn compute_features(img: &Image, t: &ScalarMap, airlight: Rgb) -> Result<Features> {
    img.ensure_same_dims(t.height(), t.width())?;
    if let Some(index) = t.data().iter().position(|&v| v <= 0.0) {
        return Err(Error::NonPositiveTransmission {
            index,
            value: t.data()[index],
        });
    }
    let a = airlight.to_array();
    let x0 = std::array::from_fn(|c| {
        img.plane(c)
            .iter()
            .zip(t.data())
            .map(|(&i, &tv)| i / tv)
            .collect()
    });
    let x1 = std::array::from_fn(|c| t.data().iter().map(|&tv| a[c] / tv).collect());
    Ok(Features {
        height: img.height(),
        width: img.width(),
        x0,
        x1,
        x2: airlight,
    })
}

/// Unclipped per-channel prediction.
pub fn predict_raw(model: &RegressionModel, features: &Features) -> [Vec<f64>; 3] {
    std::array::from_fn(|c| {
        let [w0, w1, w2, b] = model.channel(c);
        let x2 = features.x2.get(c);
        features.x0[c]
            .iter()
            .zip(&features.x1[c])
            .map(|(&x0, &x1)| w0 * x0 + w1 * x1 + w2 * x2 + b)
            .collect()
    })
}

/// Prediction clipped to `[0, 1]` as an image with the features' shape.
pub fn predict(model: &RegressionModel, features: &Features) -> Result<Image> {
    Image::from_planes_clipped(features.height, features.width, predict_raw(model, features))
}

/// `1/(2n) * sum over pixels of the channel-mean squared error`.
pub fn mse_loss(pred: &Image, target: &Image) -> Result<f64> {
    pred.ensure_same_dims(target.height(), target.width())?;
    Ok(mse_loss_planes(pred.planes(), target.planes()))
}

pub fn mse_loss_planes(pred: &[Vec<f64>; 3], target: &[Vec<f64>; 3]) -> f64 {
    let n = pred[0].len();
    let mut total = 0.0;
    for i in 0..n {
        let mut sq = 0.0;
        for c in 0..3 {
            let e = target[c][i] - pred[c][i];
            sq += e * e;
        }
        total += sq / 3.0;
    }
    total / (2.0 * n as f64)
}

/// Sum over channels of each channel's own `1/(2n) * sum (J - J_w)^2`.
/// This is the objective whose gradient [`sgd_step`] follows; it equals
/// three times [`mse_loss`].
pub fn channel_cost(model: &RegressionModel, features: &Features, target: &[Vec<f64>; 3]) -> f64 {
    let pred = predict_raw(model, features);
    3.0 * mse_loss_planes(&pred, target)
}

/// Gradient of [`channel_cost`] with respect to all twelve parameters,
/// laid out like the model.
pub fn gradient(
    model: &RegressionModel,
    features: &Features,
    target: &[Vec<f64>; 3],
) -> Result<RegressionModel> {
    let n = features.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    if target.iter().any(|p| p.len() != n) {
        return Err(Error::InvalidParameter(format!(
            "target has {} samples, features have {n}",
            target[0].len()
        )));
    }
    let mut grads = [[0.0; 3]; 4];
    for c in 0..3 {
        let [w0, w1, w2, b] = model.channel(c);
        let x2 = features.x2.get(c);
        let (mut g0, mut g1, mut gb) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let (x0, x1) = (features.x0[c][i], features.x1[c][i]);
            // d/dJ_w of (J - J_w)^2 / 2
            let err = w0 * x0 + w1 * x1 + w2 * x2 + b - target[c][i];
            g0 += err * x0;
            g1 += err * x1;
            gb += err;
        }
        let inv = 1.0 / n as f64;
        grads[0][c] = g0 * inv;
        grads[1][c] = g1 * inv;
        grads[2][c] = gb * inv * x2;
        grads[3][c] = gb * inv;
    }
    let [w0, w1, w2, b] = grads.map(Rgb::from_array);
    Ok(RegressionModel { w0, w1, w2, b })
}

/// One full-batch descent step:
/// `w_k += alpha/n * sum (J - J_w) x_k`, `b += alpha/n * sum (J - J_w)`.
pub fn sgd_step(
    model: &RegressionModel,
    features: &Features,
    target: &[Vec<f64>; 3],
    alpha: f64,
) -> Result<RegressionModel> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "learning rate must be positive, got {alpha}"
        )));
    }
    let grad = gradient(model, features, target)?.to_params();
    let mut params = model.to_params();
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= alpha * g;
    }
    let next = RegressionModel::from_params(params);
    if !next.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(next)
}

/// Pixels drawn from each image per update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelBudget {
    All,
    Count(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub pixels_per_image: PixelBudget,
    pub seed: u64,
    pub dcp: DcpParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 30,
            pixels_per_image: PixelBudget::Count(4096),
            seed: 0,
            dcp: DcpParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        if self.pixels_per_image == PixelBudget::Count(0) {
            return Err(Error::InvalidParameter(
                "pixels per image must be at least 1".into(),
            ));
        }
        self.dcp.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean pre-update loss of each completed epoch.
    pub epoch_losses: Vec<f64>,
    pub model: RegressionModel,
    pub images_seen: usize,
}

struct PreparedPair {
    features: Features,
    target: [Vec<f64>; 3],
}

fn prepare(manifest: &PairManifest, dcp: &DcpParams) -> Result<Vec<PreparedPair>> {
    manifest
        .records()
        .iter()
        .map(|record| {
            let hazy = load_image(&record.hazy)?;
            let clean = load_image(&record.clean)?;
            hazy.ensure_same_dims(clean.height(), clean.width())?;
            let est = dcp::estimate(&hazy, dcp)?;
            Ok(PreparedPair {
                features: compute_features(&hazy, &est.transmission, est.airlight)?,
                target: clean.into_planes(),
            })
        })
        .collect()
}

pub fn train(manifest: &PairManifest, config: &TrainConfig) -> Result<TrainReport> {
    train_with_progress(manifest, config, |_, _| {})
}

/// Trains from the identity model. `on_epoch(epoch, mean_loss)` is called
/// after each completed epoch, counting from 1.
///
/// The DCP estimate of each pair depends only on the hazy image, so it is
/// computed once up front rather than every epoch.
pub fn train_with_progress(
    manifest: &PairManifest,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    config.validate()?;
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let pairs = prepare(manifest, &config.dcp)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(config.epochs),
        model: RegressionModel::identity(),
        images_seen: 0,
    };
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &p in &order {
            let pair = &pairs[p];
            let n = pair.features.len();
            let (features, target) = match config.pixels_per_image {
                PixelBudget::Count(k) if k < n => {
                    let mut picked = index::sample(&mut rng, n, k).into_vec();
                    picked.sort_unstable();
                    let target = pair
                        .target
                        .each_ref()
                        .map(|plane| picked.iter().map(|&i| plane[i]).collect());
                    (pair.features.select(&picked), target)
                }
                _ => (pair.features.clone(), pair.target.clone()),
            };
            let loss = mse_loss_planes(&predict_raw(&report.model, &features), &target);
            let stepped = sgd_step(&report.model, &features, &target, config.learning_rate);
            match stepped {
                Ok(model) if loss.is_finite() => report.model = model,
                Ok(_) | Err(Error::NonFinite) => {
                    return Err(Error::Diverged {
                        epoch,
                        partial: Box::new(report),
                    })
                }
                Err(e) => return Err(e),
            }
            loss_sum += loss;
            report.images_seen += 1;
        }
        let mean = loss_sum / pairs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged {
                epoch,
                partial: Box::new(report),
            });
        }
        report.epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(report)
}

/// DCP stages followed by the regression correction, clipped to `[0, 1]`.
pub fn dehaze_mlr(img: &Image, model: &RegressionModel, dcp: &DcpParams) -> Result<Image> {
    let est = dcp::estimate(img, dcp)?;
    let features = compute_features(img, &est.transmission, est.airlight)?;
    predict(model, &features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_features(rng: &mut ChaCha8Rng, n: usize) -> (Features, [Vec<f64>; 3]) {
        let mut plane = |lo: f64, hi: f64| -> [Vec<f64>; 3] {
            std::array::from_fn(|_| (0..n).map(|_| rng.gen_range(lo..hi)).collect())
        };
        let x0 = plane(0.0, 5.0);
        let x1 = plane(0.5, 8.0);
        let target = plane(0.0, 1.0);
        let x2 = Rgb::new(rng.gen_range(0.5..1.0), rng.gen_range(0.5..1.0), rng.gen_range(0.5..1.0));
        (Features::from_samples(x0, x1, x2).unwrap(), target)
    }

    fn random_model(rng: &mut ChaCha8Rng) -> RegressionModel {
        RegressionModel::from_params(std::array::from_fn(|_| rng.gen_range(-1.5..1.5)))
    }

    #[test]
    fn features_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = Image::from_fn(4, 5, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap();
        let a = Rgb::new(0.8, 0.7, 0.9);
        let f = compute_features(&img, &ScalarMap::filled(4, 5, 1.0).unwrap(), a).unwrap();
        for c in 0..3 {
            assert_eq!(f.x0[c], img.plane(c));
            assert!(f.x1[c].iter().all(|&v| v == a.get(c)));
        }
        assert_eq!(f.x2, a);

        let flat = Image::filled(2, 2, a).unwrap();
        let f = compute_features(&flat, &ScalarMap::filled(2, 2, 0.5).unwrap(), a).unwrap();
        for c in 0..3 {
            assert!(f.x0[c].iter().all(|&v| v == 2.0 * a.get(c)));
            assert_eq!(f.x0[c], f.x1[c]);
        }

        let t = ScalarMap::from_fn(4, 5, |_, _| rng.gen_range(0.1..1.0)).unwrap();
        let f = compute_features(&img, &t, a).unwrap();
        for c in 0..3 {
            for i in 0..img.len() {
                assert!((f.x0[c][i] * t.data()[i] - img.plane(c)[i]).abs() < 1e-7);
            }
        }

        let bad = ScalarMap::new(1, 1, vec![0.0]).unwrap();
        let one = Image::filled(1, 1, a).unwrap();
        assert!(matches!(
            compute_features(&one, &bad, a),
            Err(Error::NonPositiveTransmission { .. })
        ));
    }

    #[test]
    fn predict_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = Image::from_fn(6, 6, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap();
        let t = ScalarMap::from_fn(6, 6, |_, _| rng.gen_range(0.1..1.0)).unwrap();
        let a = Rgb::new(0.9, 0.85, 0.8);
        let f = compute_features(&img, &t, a).unwrap();
        let ours = predict(&RegressionModel::identity(), &f).unwrap();
        let dcp = dcp::recover_radiance(&img, &t, a).unwrap();
        for c in 0..3 {
            for (p, q) in ours.plane(c).iter().zip(dcp.plane(c)) {
                assert!((p - q).abs() < 1e-12);
            }
        }

        let bias = RegressionModel {
            w0: Rgb::gray(0.0),
            w1: Rgb::gray(0.0),
            w2: Rgb::gray(0.0),
            b: Rgb::new(0.25, 0.5, 0.75),
        };
        let out = predict(&bias, &f).unwrap();
        assert_eq!(out, Image::filled(6, 6, Rgb::new(0.25, 0.5, 0.75)).unwrap());

        let model = random_model(&mut rng);
        let raw = predict_raw(&model, &f);
        for c in 0..3 {
            for i in 0..f.len() {
                let p = model.to_params();
                let expected = p[c] * f.x0[c][i] + p[3 + c] * f.x1[c][i] + p[6 + c] * a.get(c) + p[9 + c];
                assert!((raw[c][i] - expected).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn loss_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Image::from_fn(5, 4, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap();
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);

        let p = Image::filled(1, 1, Rgb::new(0.5, 0.5, 0.5)).unwrap();
        let q = Image::filled(1, 1, Rgb::new(0.7, 0.3, 0.7)).unwrap();
        assert!((mse_loss(&p, &q).unwrap() - 0.02).abs() < 1e-15);

        let b = Image::from_fn(5, 4, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap();
        let mut naive = 0.0;
        for y in 0..5 {
            for x in 0..4 {
                let (pa, pb) = (a.pixel(y, x).to_array(), b.pixel(y, x).to_array());
                naive += (0..3).map(|c| (pa[c] - pb[c]).powi(2)).sum::<f64>() / 3.0;
            }
        }
        naive /= 2.0 * 20.0;
        assert!((mse_loss(&a, &b).unwrap() - naive).abs() < 1e-9);

        let c = Image::filled(4, 5, Rgb::gray(0.1)).unwrap();
        assert!(matches!(mse_loss(&a, &c), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sgd_step_hand_computed() {
        let f = Features::from_samples(
            [vec![0.5], vec![0.5], vec![0.5]],
            [vec![0.25], vec![0.25], vec![0.25]],
            Rgb::gray(0.8),
        )
        .unwrap();
        let target = [vec![0.6], vec![0.6], vec![0.6]];
        let next = sgd_step(&RegressionModel::identity(), &f, &target, 0.1).unwrap();
        let close = |v: Rgb, e: f64| {
            for x in v.to_array() {
                assert!((x - e).abs() < 1e-12, "{x} vs {e}");
            }
        };
        close(next.w0, 0.9775);
        close(next.w1, -1.01125);
        close(next.w2, 0.964);
        close(next.b, -0.045);
    }

    #[test]
    fn sgd_step_tiny_alpha_barely_moves() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (f, target) = random_features(&mut rng, 16);
        let model = random_model(&mut rng);
        let next = sgd_step(&model, &f, &target, 1e-30).unwrap();
        for (a, b) in model.to_params().iter().zip(next.to_params()) {
            assert!((a - b).abs() <= 1e-20);
        }
        assert!(sgd_step(&model, &f, &target, 0.0).is_err());
    }

    #[test]
    fn sgd_step_divergence_is_an_error() {
        let f = Features::from_samples(std::array::from_fn(|_| vec![1e300]), std::array::from_fn(|_| vec![1e300]), Rgb::gray(0.8)).unwrap();
        let target = [vec![0.5], vec![0.5], vec![0.5]];
        assert!(matches!(
            sgd_step(&RegressionModel::identity(), &f, &target, 1e10),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let (f, target) = random_features(&mut rng, 8);
            let model = random_model(&mut rng);
            let analytic = gradient(&model, &f, &target).unwrap().to_params();
            let base = model.to_params();
            let h = 1e-5;
            for k in 0..12 {
                let mut plus = base;
                let mut minus = base;
                plus[k] += h;
                minus[k] -= h;
                let fd = (channel_cost(&RegressionModel::from_params(plus), &f, &target)
                    - channel_cost(&RegressionModel::from_params(minus), &f, &target))
                    / (2.0 * h);
                let rel = (analytic[k] - fd).abs() / analytic[k].abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-4, "param {k}: {} vs {fd}", analytic[k]);
            }
        }
    }

    #[test]
    fn small_step_never_increases_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let (f, target) = random_features(&mut rng, 32);
            let model = random_model(&mut rng);
            let before = channel_cost(&model, &f, &target);
            let next = sgd_step(&model, &f, &target, 1e-6).unwrap();
            assert!(channel_cost(&next, &f, &target) <= before + 1e-12);
        }
    }

    #[test]
    fn channels_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (f, target) = random_features(&mut rng, 12);
        let mut zeroed = f.clone();
        let mut zeroed_target = target.clone();
        for c in 1..3 {
            zeroed.x0[c].iter_mut().for_each(|v| *v = 0.0);
            zeroed.x1[c].iter_mut().for_each(|v| *v = 0.0);
            zeroed_target[c].iter_mut().for_each(|v| *v = 0.0);
        }
        zeroed.x2 = Rgb::new(f.x2.r, 0.0, 0.0);
        let (mut a, mut b) = (RegressionModel::identity(), RegressionModel::identity());
        for _ in 0..50 {
            a = sgd_step(&a, &f, &target, 1e-2).unwrap();
            b = sgd_step(&b, &zeroed, &zeroed_target, 1e-2).unwrap();
            for k in [0, 3, 6, 9] {
                assert_eq!(a.to_params()[k], b.to_params()[k]);
            }
        }
    }

    #[test]
    fn model_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = random_model(&mut rng);
        assert_eq!(RegressionModel::from_text(&model.to_text()).unwrap(), model);
        assert_eq!(
            RegressionModel::identity().to_text(),
            "MLRHAZE 1\nw0 1 1 1\nw1 -1 -1 -1\nw2 1 1 1\nb 0 0 0\n"
        );
    }

    #[test]
    fn model_text_errors() {
        assert!(matches!(
            RegressionModel::from_text("HAZE 1\nw0 1 1 1\n"),
            Err(Error::UnrecognizedModel(_))
        ));
        assert!(matches!(
            RegressionModel::from_text("MLRHAZE 2\n"),
            Err(Error::ModelVersion(_))
        ));
        let eleven = "MLRHAZE 1\nw0 1 1 1\nw1 -1 -1 -1\nw2 1 1 1\nb 0 0\n";
        match RegressionModel::from_text(eleven) {
            Err(Error::MalformedModel(msg)) => assert!(msg.starts_with("b:"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let missing = "MLRHAZE 1\nw0 1 1 1\nw1 -1 -1 -1\n";
        match RegressionModel::from_text(missing) {
            Err(Error::MalformedModel(msg)) => assert!(msg.contains("w2"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(RegressionModel::from_text("MLRHAZE 1\nw0 1 x 1\nw1 -1 -1 -1\nw2 1 1 1\nb 0 0 0\n").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { pixels_per_image: PixelBudget::Count(0), ..TrainConfig::default() }
            .validate()
            .is_err());
    }
}
