//! Procedural clean outdoor scenes for self-contained experiments: a sky
//! gradient above a textured ground plane dotted with buildings and trees.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::image::Image;

/// Smooth lattice value noise in `[0, 1]`.
struct ValueNoise {
    cells: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, cells: usize) -> Self {
        let lattice = (0..(cells + 1) * (cells + 1)).map(|_| rng.gen()).collect();
        ValueNoise { cells, lattice }
    }

    // u, v in [0, 1]
    fn sample(&self, u: f64, v: f64) -> f64 {
        let n = self.cells as f64;
        let (fx, fy) = (u * n, v * n);
        let (x0, y0) = ((fx.floor() as usize).min(self.cells - 1), (fy.floor() as usize).min(self.cells - 1));
        let (tx, ty) = (smooth(fx - x0 as f64), smooth(fy - y0 as f64));
        let at = |x: usize, y: usize| self.lattice[y * (self.cells + 1) + x];
        let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
        let bottom = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

enum Shape {
    Rect { y0: f64, y1: f64, x0: f64, x1: f64 },
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Rect { y0, y1, x0, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
            Shape::Ellipse { cy, cx, ry, rx } => {
                let (dy, dx) = ((y - cy) / ry, (x - cx) / rx);
                dy * dy + dx * dx <= 1.0
            }
        }
    }
}

/// Deterministic scene for `seed`. Coordinates are resolution-independent,
/// so one seed renders the same layout at any size.
pub fn synthetic_scene(height: usize, width: usize, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = rng.gen_range(0.3..0.6);
    let sky_top = [
        rng.gen_range(0.45..0.65),
        rng.gen_range(0.6..0.78),
        rng.gen_range(0.8..0.98),
    ];
    let sky_low = [
        rng.gen_range(0.78..0.93),
        rng.gen_range(0.82..0.95),
        rng.gen_range(0.88..1.0),
    ];
    // Paved or dry ground: bright and weakly saturated.
    let ground_level = rng.gen_range(0.35..0.65);
    let ground = [
        ground_level * rng.gen_range(0.95..1.1),
        ground_level * rng.gen_range(0.9..1.05),
        ground_level * rng.gen_range(0.75..0.95),
    ];
    let texture = ValueNoise::new(&mut rng, 12);
    let clouds = ValueNoise::new(&mut rng, 5);

    let mut objects: Vec<(Shape, [f64; 3])> = Vec::new();
    for _ in 0..rng.gen_range(2..6) {
        let w = rng.gen_range(0.08..0.25);
        let x0 = rng.gen_range(0.0..1.0 - w);
        let top = horizon - rng.gen_range(0.05..0.3);
        let bottom = horizon + rng.gen_range(0.05..0.35);
        let level = rng.gen_range(0.4..0.9);
        let color = [
            level * rng.gen_range(0.85..1.1),
            level * rng.gen_range(0.85..1.05),
            level * rng.gen_range(0.75..1.0),
        ];
        objects.push((
            Shape::Rect {
                y0: top,
                y1: bottom,
                x0,
                x1: x0 + w,
            },
            color,
        ));
    }
    for _ in 0..rng.gen_range(1..6) {
        let cy = rng.gen_range(horizon + 0.05..0.95);
        let ry = rng.gen_range(0.04..0.12);
        let color = [
            rng.gen_range(0.05..0.25),
            rng.gen_range(0.2..0.45),
            rng.gen_range(0.05..0.2),
        ];
        objects.push((
            Shape::Ellipse {
                cy,
                cx: rng.gen_range(0.0..1.0),
                ry,
                rx: ry * rng.gen_range(0.6..1.4),
            },
            color,
        ));
    }

    let grain: Vec<f64> = (0..height * width).map(|_| rng.gen_range(-0.02..0.02)).collect();
    Image::from_fn(height, width, |row, col| {
        let v = (row as f64 + 0.5) / height as f64;
        let u = (col as f64 + 0.5) / width as f64;
        let mut px = if v < horizon {
            let s = v / horizon;
            let cloud = (clouds.sample(u, v) - 0.5).max(0.0) * 0.6;
            std::array::from_fn(|c| sky_top[c] * (1.0 - s) + sky_low[c] * s + cloud)
        } else {
            let shade = 0.75 + 0.5 * texture.sample(u, v);
            ground.map(|g| g * shade)
        };
        // Later objects are drawn on top.
        if let Some((_, color)) = objects.iter().rev().find(|(shape, _)| shape.contains(v, u)) {
            let shade = 0.8 + 0.4 * texture.sample(v, u);
            px = color.map(|c| c * shade);
        }
        let g = grain[row * width + col];
        px.map(|c| (c + g).clamp(0.0, 1.0))
    })
}
