//! Procedural test scenes: piecewise-smooth images with sharp edges and a
//! little texture, standing in for natural photographs in tests and examples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Image;

enum Shape {
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64, cos: f64, sin: f64 },
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
    Stripe { cy: f64, cx: f64, ny: f64, nx: f64, half: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Ellipse { cy, cx, ry, rx, cos, sin } => {
                let (dy, dx) = (y - cy, x - cx);
                let (u, v) = (dy * cos - dx * sin, dy * sin + dx * cos);
                (u / ry).powi(2) + (v / rx).powi(2) <= 1.0
            }
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y <= y1 && x >= x0 && x <= x1,
            Shape::Stripe { cy, cx, ny, nx, half } => ((y - cy) * ny + (x - cx) * nx).abs() <= half,
        }
    }
}

/// Deterministic `height x width` scene for a given seed.
pub fn scene(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (height as f64, width as f64);

    let base = rng.random_range(0.25..0.6);
    let gy = rng.random_range(-0.25..0.25) / h;
    let gx = rng.random_range(-0.25..0.25) / w;

    let area = h * w;
    let count = ((area / 300.0) as usize).clamp(4, 40);
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let cy = rng.random_range(0.0..h);
        let cx = rng.random_range(0.0..w);
        let scale = rng.random_range(0.08..0.3) * h.min(w);
        let shape = match rng.random_range(0..3) {
            0 => {
                let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
                Shape::Ellipse {
                    cy,
                    cx,
                    ry: scale,
                    rx: scale * rng.random_range(0.4..1.0),
                    cos: a.cos(),
                    sin: a.sin(),
                }
            }
            1 => Shape::Rect {
                y0: cy - scale,
                x0: cx - scale * rng.random_range(0.3..1.2),
                y1: cy + scale * rng.random_range(0.3..1.2),
                x1: cx + scale,
            },
            _ => {
                let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
                Shape::Stripe {
                    cy,
                    cx,
                    ny: a.cos(),
                    nx: a.sin(),
                    half: rng.random_range(1.0..3.5),
                }
            }
        };
        let level = rng.random_range(0.0..1.0);
        let opacity = rng.random_range(0.5..1.0);
        shapes.push((shape, level, opacity));
    }

    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.01..0.04),
                rng.random_range(0.15..0.6),
                rng.random_range(0.15..0.6),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();

    Image::from_fn(height, width, |r, c| {
        let (y, x) = (r as f64, c as f64);
        let mut v = base + gy * y + gx * x;
        for (shape, level, opacity) in &shapes {
            if shape.contains(y, x) {
                v = (1.0 - opacity) * v + opacity * level;
            }
        }
        for &(amp, fy, fx, phase) in &waves {
            v += amp * (fy * y + fx * x + phase).sin();
        }
        v.clamp(0.0, 1.0)
    })
}
