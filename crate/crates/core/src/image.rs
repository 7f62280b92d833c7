//! Image and scalar-map containers, raster I/O and the windowed filters
//! the rest of the pipeline is built from.
//!
//! Images are stored planar (one `Vec<f64>` per colour channel, row-major)
//! with samples in `[0, 1]`. Windows are always clipped at the image border:
//! a window never reads samples that are not in the image.

use std::collections::VecDeque;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::{Error, Result};

/// A colour triple. Used for atmospheric light and per-channel coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl Rgb {
    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        Rgb { r, g, b }
    }

    pub const fn gray(v: f64) -> Self {
        Rgb { r: v, g: v, b: v }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Rgb::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn get(self, channel: usize) -> f64 {
        match channel {
            0 => self.r,
            1 => self.g,
            2 => self.b,
            _ => panic!("channel index {channel} out of range"),
        }
    }

    pub fn mean(self) -> f64 {
        (self.r + self.g + self.b) / 3.0
    }

    pub fn is_finite(self) -> bool {
        self.r.is_finite() && self.g.is_finite() && self.b.is_finite()
    }
}

/// A three-channel image with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    planes: [Vec<f64>; 3],
}

fn check_dims(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidParameter(format!(
            "image dimensions must be nonzero, got {height}x{width}"
        )));
    }
    if len != height * width {
        return Err(Error::InvalidParameter(format!(
            "plane has {len} samples, expected {}",
            height * width
        )));
    }
    Ok(())
}

impl Image {
    /// Builds an image from three row-major planes. Every sample must be
    /// finite and inside `[0, 1]`.
    pub fn from_planes(height: usize, width: usize, planes: [Vec<f64>; 3]) -> Result<Self> {
        for plane in &planes {
            check_dims(height, width, plane.len())?;
            if let Some(v) = plane.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidSample(format!("{v} is outside [0, 1]")));
            }
        }
        Ok(Image {
            height,
            width,
            planes,
        })
    }

    /// Like [`Image::from_planes`] but clips finite out-of-range samples
    /// into `[0, 1]`. Non-finite samples are still rejected.
    pub fn from_planes_clipped(
        height: usize,
        width: usize,
        mut planes: [Vec<f64>; 3],
    ) -> Result<Self> {
        for plane in &mut planes {
            check_dims(height, width, plane.len())?;
            for v in plane.iter_mut() {
                if !v.is_finite() {
                    return Err(Error::InvalidSample(format!("non-finite sample {v}")));
                }
                *v = v.clamp(0.0, 1.0);
            }
        }
        Ok(Image {
            height,
            width,
            planes,
        })
    }

    pub fn filled(height: usize, width: usize, color: Rgb) -> Result<Self> {
        let n = height * width;
        Image::from_planes(
            height,
            width,
            [vec![color.r; n], vec![color.g; n], vec![color.b; n]],
        )
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let n = height * width;
        let mut planes = [
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        ];
        for y in 0..height {
            for x in 0..width {
                let px = f(y, x);
                for c in 0..3 {
                    planes[c].push(px[c]);
                }
            }
        }
        Image::from_planes(height, width, planes)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        &self.planes[channel]
    }

    pub fn planes(&self) -> &[Vec<f64>; 3] {
        &self.planes
    }

    pub fn into_planes(self) -> [Vec<f64>; 3] {
        self.planes
    }

    pub fn pixel(&self, row: usize, col: usize) -> Rgb {
        self.pixel_at(row * self.width + col)
    }

    /// Pixel at a row-major linear index.
    pub fn pixel_at(&self, index: usize) -> Rgb {
        Rgb::new(
            self.planes[0][index],
            self.planes[1][index],
            self.planes[2][index],
        )
    }

    /// Per-pixel minimum over the three channels.
    pub fn channel_min(&self) -> ScalarMap {
        let data = (0..self.len())
            .map(|i| self.planes[0][i].min(self.planes[1][i]).min(self.planes[2][i]))
            .collect();
        ScalarMap {
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Per-pixel channel mean `(R + G + B) / 3`.
    pub fn gray(&self) -> ScalarMap {
        let data = (0..self.len())
            .map(|i| (self.planes[0][i] + self.planes[1][i] + self.planes[2][i]) / 3.0)
            .collect();
        ScalarMap {
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub(crate) fn ensure_same_dims(&self, height: usize, width: usize) -> Result<()> {
        if (self.height, self.width) != (height, width) {
            return Err(Error::DimensionMismatch {
                expected: (self.height, self.width),
                found: (height, width),
            });
        }
        Ok(())
    }

    /// Interleaved 8-bit RGB with round-half-up quantization.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * 3);
        for i in 0..self.len() {
            for c in 0..3 {
                out.push(quantize(self.planes[c][i]));
            }
        }
        out
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width * 3 {
            return Err(Error::InvalidParameter(format!(
                "expected {} bytes, got {}",
                height * width * 3,
                bytes.len()
            )));
        }
        let mut planes = [
            Vec::with_capacity(height * width),
            Vec::with_capacity(height * width),
            Vec::with_capacity(height * width),
        ];
        for px in bytes.chunks_exact(3) {
            for c in 0..3 {
                planes[c].push(f64::from(px[c]) / 255.0);
            }
        }
        Image::from_planes(height, width, planes)
    }
}

/// Clip to `[0, 1]` and map to a byte with `round(v * 255)`, halves rounding up.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// A single-channel float map: dark channels, transmission and depth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScalarMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width, data.len())?;
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!("non-finite sample {v}")));
        }
        Ok(ScalarMap {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        ScalarMap::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        ScalarMap::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies `f` to every sample. The result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ScalarMap> {
        ScalarMap::new(
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    // Internal constructor for values already known to be finite.
    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> ScalarMap {
        debug_assert_eq!(data.len(), height * width);
        ScalarMap {
            height,
            width,
            data,
        }
    }
}

/// Windowed minimum over a `(2r+1)x(2r+1)` window clipped at the borders.
pub fn min_filter(map: &ScalarMap, radius: usize) -> ScalarMap {
    if radius == 0 {
        return map.clone();
    }
    let (h, w) = map.dims();
    let mut horizontal = vec![0.0; h * w];
    for y in 0..h {
        sliding_min(
            &map.data[y * w..(y + 1) * w],
            radius,
            &mut horizontal[y * w..(y + 1) * w],
        );
    }
    let mut column = vec![0.0; h];
    let mut column_out = vec![0.0; h];
    let mut out = vec![0.0; h * w];
    for x in 0..w {
        for y in 0..h {
            column[y] = horizontal[y * w + x];
        }
        sliding_min(&column, radius, &mut column_out);
        for y in 0..h {
            out[y * w + x] = column_out[y];
        }
    }
    ScalarMap::from_raw(h, w, out)
}

// Monotone-deque running minimum over [i - r, i + r] clipped to the slice.
fn sliding_min(input: &[f64], radius: usize, out: &mut [f64]) {
    let n = input.len();
    let mut deque: VecDeque<usize> = VecDeque::with_capacity(2 * radius + 1);
    let mut next = 0;
    for i in 0..n {
        let hi = (i + radius).min(n - 1);
        while next <= hi {
            while deque.back().is_some_and(|&j| input[j] >= input[next]) {
                deque.pop_back();
            }
            deque.push_back(next);
            next += 1;
        }
        let lo = i.saturating_sub(radius);
        while deque.front().is_some_and(|&j| j < lo) {
            deque.pop_front();
        }
        out[i] = input[deque[0]];
    }
}

/// Windowed mean over a `(2r+1)x(2r+1)` window clipped at the borders. The
/// divisor is the number of samples actually inside the window.
pub fn box_filter(map: &ScalarMap, radius: usize) -> ScalarMap {
    if radius == 0 {
        return map.clone();
    }
    let (h, w) = map.dims();
    let mut horizontal = vec![0.0; h * w];
    for y in 0..h {
        sliding_mean(
            &map.data[y * w..(y + 1) * w],
            radius,
            &mut horizontal[y * w..(y + 1) * w],
        );
    }
    let mut column = vec![0.0; h];
    let mut column_out = vec![0.0; h];
    let mut out = vec![0.0; h * w];
    for x in 0..w {
        for y in 0..h {
            column[y] = horizontal[y * w + x];
        }
        sliding_mean(&column, radius, &mut column_out);
        for y in 0..h {
            out[y * w + x] = column_out[y];
        }
    }
    // Prefix differencing can land a rounding error outside the input range.
    let (lo, hi) = (map.min_value(), map.max_value());
    for v in &mut out {
        *v = v.clamp(lo, hi);
    }
    ScalarMap::from_raw(h, w, out)
}

fn sliding_mean(input: &[f64], radius: usize, out: &mut [f64]) {
    let n = input.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in input {
        acc += v;
        prefix.push(acc);
    }
    for i in 0..n {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(n - 1);
        out[i] = (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64;
    }
}

/// Reads a PNG, binary PPM or JPEG file as an 8-bit RGB image mapped to `v / 255`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = match image::guess_format(&bytes) {
        Ok(f @ (ImageFormat::Png | ImageFormat::Pnm | ImageFormat::Jpeg)) => f,
        _ => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    };
    let decoded = image::load_from_memory_with_format(&bytes, format).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::EmptyImage(path.to_path_buf()));
    }
    Image::from_rgb8(h, w, rgb.as_raw())
}

/// Writes an image as 8-bit PNG or binary PPM (chosen by extension).
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let bytes = img.to_rgb8();
    match ext.as_deref() {
        Some("png") => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut writer = BufWriter::new(file);
            PngEncoder::new(&mut writer)
                .write_image(
                    &bytes,
                    img.width() as u32,
                    img.height() as u32,
                    ExtendedColorType::Rgb8,
                )
                .map_err(|e| Error::Encode {
                    path: path.to_path_buf(),
                    message: e.to_string(),
                })?;
            writer.flush().map_err(|e| Error::io(path, e))
        }
        Some("ppm") => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut writer = BufWriter::new(file);
            write!(writer, "P6\n{} {}\n255\n", img.width(), img.height())
                .and_then(|_| writer.write_all(&bytes))
                .and_then(|_| writer.flush())
                .map_err(|e| Error::io(path, e))
        }
        _ => Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
}

/// True for file names this crate can read as images.
pub fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png" | "ppm" | "jpg" | "jpeg")
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ScalarMap {
        ScalarMap::from_fn(h, w, |_, _| rng.gen()).unwrap()
    }

    fn brute_window(map: &ScalarMap, r: usize, reduce: fn(&[f64]) -> f64) -> ScalarMap {
        let (h, w) = map.dims();
        ScalarMap::from_fn(h, w, |y, x| {
            let mut vals = Vec::new();
            for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    vals.push(map.get(yy, xx));
                }
            }
            reduce(&vals)
        })
        .unwrap()
    }

    fn min_of(v: &[f64]) -> f64 {
        v.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn mean_of(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn quantize_rounds_half_up_and_clips() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(1.2), 255);
        assert_eq!(quantize(-0.3), 0);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        for b in 0..=255u8 {
            assert_eq!(quantize(f64::from(b) / 255.0), b);
        }
    }

    #[test]
    fn constructors_reject_out_of_range() {
        assert!(Image::from_planes(1, 1, [vec![1.5], vec![0.0], vec![0.0]]).is_err());
        assert!(Image::from_planes(0, 1, [vec![], vec![], vec![]]).is_err());
        assert!(Image::from_planes(1, 2, [vec![0.1], vec![0.0], vec![0.0]]).is_err());
        assert!(ScalarMap::new(1, 1, vec![f64::NAN]).is_err());
        let img = Image::from_planes_clipped(1, 1, [vec![1.5], vec![-0.2], vec![0.3]]).unwrap();
        assert_eq!(img.pixel(0, 0), Rgb::new(1.0, 0.0, 0.3));
        assert!(Image::from_planes_clipped(1, 1, [vec![f64::NAN], vec![0.0], vec![0.0]]).is_err());
    }

    #[test]
    fn min_filter_constant_and_identity() {
        let m = ScalarMap::filled(6, 9, 0.37).unwrap();
        for r in 0..5 {
            assert_eq!(min_filter(&m, r), m);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_map(&mut rng, 7, 5);
        assert_eq!(min_filter(&m, 0), m);
    }

    #[test]
    fn min_filter_single_dark_pixel() {
        let m = ScalarMap::from_fn(5, 5, |y, x| if (y, x) == (2, 2) { 0.0 } else { 1.0 }).unwrap();
        let out = min_filter(&m, 1);
        for y in 0..5 {
            for x in 0..5 {
                let inside = (1..=3).contains(&y) && (1..=3).contains(&x);
                assert_eq!(out.get(y, x), if inside { 0.0 } else { 1.0 }, "({y},{x})");
            }
        }
    }

    #[test]
    fn filters_match_brute_force_exhaustively() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..4 {
            let m = random_map(&mut rng, 16, 16);
            for r in 0..=17 {
                assert_eq!(min_filter(&m, r), brute_window(&m, r, min_of), "radius {r}");
                let fast = box_filter(&m, r);
                let slow = brute_window(&m, r, mean_of);
                for (a, b) in fast.data().iter().zip(slow.data()) {
                    assert!((a - b).abs() < 1e-12, "radius {r}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn box_filter_constant_and_identity() {
        let m = ScalarMap::filled(5, 8, 0.25).unwrap();
        for r in 0..6 {
            let out = box_filter(&m, r);
            for &v in out.data() {
                assert!((v - 0.25).abs() < 1e-15);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_map(&mut rng, 8, 8);
        assert_eq!(box_filter(&m, 0), m);
    }

    #[test]
    fn box_filter_random_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_map(&mut rng, 8, 8);
        let fast = box_filter(&m, 2);
        let slow = brute_window(&m, 2, mean_of);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn load_png_pixel_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("px.png");
        image::RgbImage::from_raw(1, 1, vec![255, 0, 128])
            .unwrap()
            .save(&path)
            .unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.dims(), (1, 1));
        assert_eq!(img.pixel(0, 0), Rgb::new(1.0, 0.0, 128.0 / 255.0));
    }

    #[test]
    fn load_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_image(dir.path().join("missing.png")),
            Err(Error::NotFound(_))
        ));
        let junk = dir.path().join("junk.png");
        std::fs::write(&junk, b"definitely not an image").unwrap();
        assert!(matches!(load_image(&junk), Err(Error::UnsupportedFormat(_))));
        let truncated = dir.path().join("cut.png");
        let mut bytes = Vec::new();
        PngEncoder::new(&mut bytes)
            .write_image(&[1, 2, 3, 4, 5, 6], 2, 1, ExtendedColorType::Rgb8)
            .unwrap();
        bytes.truncate(bytes.len() - 20);
        std::fs::write(&truncated, &bytes).unwrap();
        assert!(matches!(load_image(&truncated), Err(Error::Decode { .. })));
    }

    #[test]
    fn save_quantization_and_clip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_planes(1, 3, [vec![0.5, 0.0, 1.0], vec![0.0; 3], vec![1.0; 3]])
            .unwrap();
        for name in ["q.png", "q.ppm"] {
            let path = dir.path().join(name);
            save_image(&img, &path).unwrap();
            let back = load_image(&path).unwrap();
            assert_eq!(back.to_rgb8(), vec![128, 0, 255, 0, 0, 255, 255, 0, 255]);
        }
        let zeros = Image::filled(4, 3, Rgb::gray(0.0)).unwrap();
        let path = dir.path().join("z.png");
        save_image(&zeros, &path).unwrap();
        assert!(load_image(&path).unwrap().to_rgb8().iter().all(|&b| b == 0));
    }

    #[test]
    fn save_errors() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::filled(2, 2, Rgb::gray(0.5)).unwrap();
        assert!(matches!(
            save_image(&img, dir.path().join("nope/x.png")),
            Err(Error::NotFound(_) | Error::Io { .. })
        ));
        assert!(matches!(
            save_image(&img, dir.path().join("x.bmp")),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = Image::from_fn(16, 16, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap();
        for name in ["rt.png", "rt.ppm"] {
            let path = dir.path().join(name);
            save_image(&img, &path).unwrap();
            let back = load_image(&path).unwrap();
            for c in 0..3 {
                for (a, b) in img.plane(c).iter().zip(back.plane(c)) {
                    assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
                }
            }
        }
    }
}
