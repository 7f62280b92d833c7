//! Brute-force reference implementations. These deliberately share no code
//! with the library's fast paths: every window is enumerated directly.

#![allow(dead_code)]

use hazeclear::{Image, ScalarMap};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image {
    Image::from_fn(h, w, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap()
}

pub fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ScalarMap {
    ScalarMap::from_fn(h, w, |_, _| rng.gen()).unwrap()
}

fn window(h: usize, w: usize, y: usize, x: usize, r: usize) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    for yy in 0..h {
        for xx in 0..w {
            if yy.abs_diff(y) <= r && xx.abs_diff(x) <= r {
                cells.push((yy, xx));
            }
        }
    }
    cells
}

pub fn min_filter(map: &ScalarMap, r: usize) -> Vec<f64> {
    let (h, w) = map.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let mut m = f64::INFINITY;
            for (yy, xx) in window(h, w, y, x, r) {
                if map.get(yy, xx) < m {
                    m = map.get(yy, xx);
                }
            }
            out.push(m);
        }
    }
    out
}

pub fn box_filter(map: &ScalarMap, r: usize) -> Vec<f64> {
    let (h, w) = map.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let cells = window(h, w, y, x, r);
            let s: f64 = cells.iter().map(|&(yy, xx)| map.get(yy, xx)).sum();
            out.push(s / cells.len() as f64);
        }
    }
    out
}

pub fn dark_channel(img: &Image, r: usize) -> Vec<f64> {
    let (h, w) = img.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let mut m = f64::INFINITY;
            for (yy, xx) in window(h, w, y, x, r) {
                for c in img.pixel(yy, xx).to_array() {
                    m = m.min(c);
                }
            }
            out.push(m);
        }
    }
    out
}

/// Guided filter by explicit per-window least squares: fit `t = a g + b`
/// in every window, then average the fitted lines covering each pixel.
pub fn guided_filter(guide: &Image, t: &ScalarMap, r: usize, eps: f64) -> Vec<f64> {
    let (h, w) = t.dims();
    let g = |y: usize, x: usize| {
        let p = guide.pixel(y, x);
        (p.r + p.g + p.b) / 3.0
    };
    let mut a = vec![0.0; h * w];
    let mut b = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let cells = window(h, w, y, x, r);
            let n = cells.len() as f64;
            let mg = cells.iter().map(|&(yy, xx)| g(yy, xx)).sum::<f64>() / n;
            let mt = cells.iter().map(|&(yy, xx)| t.get(yy, xx)).sum::<f64>() / n;
            let cov = cells
                .iter()
                .map(|&(yy, xx)| (g(yy, xx) - mg) * (t.get(yy, xx) - mt))
                .sum::<f64>()
                / n;
            let var = cells.iter().map(|&(yy, xx)| (g(yy, xx) - mg).powi(2)).sum::<f64>() / n;
            a[y * w + x] = cov / (var + eps);
            b[y * w + x] = mt - a[y * w + x] * mg;
        }
    }
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let cells = window(h, w, y, x, r);
            let n = cells.len() as f64;
            let v: f64 = cells
                .iter()
                .map(|&(yy, xx)| a[yy * w + xx] * g(y, x) + b[yy * w + xx])
                .sum::<f64>()
                / n;
            out.push(v.clamp(0.0, 1.0));
        }
    }
    out
}

pub fn psnr(a: &Image, b: &Image, peak: f64) -> f64 {
    let (h, w) = a.dims();
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let (p, q) = (a.pixel(y, x).to_array(), b.pixel(y, x).to_array());
            for c in 0..3 {
                sum += (p[c] - q[c]).powi(2);
            }
        }
    }
    let mse = sum / (3 * h * w) as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// SSIM with explicit 2-D Gaussian weights, renormalized over the part of
/// the 11x11 window inside the image; variances from centred sums.
pub fn ssim(a: &Image, b: &Image) -> f64 {
    let (h, w) = a.dims();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let weight = |dy: i64, dx: i64| (-((dy * dy + dx * dx) as f64) / (2.0 * 1.5 * 1.5)).exp();
    let mut total = 0.0;
    for c in 0..3 {
        let pa = |y: usize, x: usize| a.pixel(y, x).get(c);
        let pb = |y: usize, x: usize| b.pixel(y, x).get(c);
        let mut sum = 0.0;
        for y in 0..h {
            for x in 0..w {
                let cells = window(h, w, y, x, 5);
                let ws: Vec<f64> = cells
                    .iter()
                    .map(|&(yy, xx)| weight(yy as i64 - y as i64, xx as i64 - x as i64))
                    .collect();
                let norm: f64 = ws.iter().sum();
                let mean = |f: &dyn Fn(usize, usize) -> f64| {
                    cells.iter().zip(&ws).map(|(&(yy, xx), wt)| wt * f(yy, xx)).sum::<f64>() / norm
                };
                let ma = mean(&pa);
                let mb = mean(&pb);
                let va = mean(&|yy, xx| (pa(yy, xx) - ma).powi(2));
                let vb = mean(&|yy, xx| (pb(yy, xx) - mb).powi(2));
                let cov = mean(&|yy, xx| (pa(yy, xx) - ma) * (pb(yy, xx) - mb));
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        }
        total += sum / (h * w) as f64;
    }
    total / 3.0
}

/// Prints a criterion line in a fixed, greppable format.
pub fn report(id: u32, pass: bool, detail: &str) {
    println!(
        "criterion {id}: {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}
