use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use crate::tensor::{Shape, Tensor};

/// Coverage of a signed distance `d` (negative inside) with a one-pixel ramp.
fn coverage(d: f64) -> f64 {
    (0.5 - d).clamp(0.0, 1.0)
}

fn random_color(rng: &mut Pcg64, channels: usize) -> Vec<f64> {
    (0..channels).map(|_| rng.random_range(0.0..1.0)).collect()
}

/// A deterministic synthetic image with values in `[0, 1]`: a linear
/// gradient background overlaid with oriented bars (infinite strips, so they
/// always cross the image border) and filled ellipses.
///
/// Panics if any dimension is zero.
pub fn synth_image(height: usize, width: usize, channels: usize, seed: u64) -> Tensor {
    let shape = Shape::new(height, width, channels).expect("non-empty image");
    let mut rng = Pcg64::seed_from_u64(seed);
    let (h, w) = (height as f64, width as f64);
    let extent = h.min(w);
    let diag = (h * h + w * w).sqrt();

    let base = random_color(&mut rng, channels);
    let slope: Vec<f64> = (0..channels).map(|_| rng.random_range(-0.6..0.6)).collect();
    let theta = rng.random_range(0.0..2.0 * PI);
    let (gc, gs) = (theta.cos(), theta.sin());

    let mut data = Vec::with_capacity(shape.len());
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 + 0.5 - w / 2.0, y as f64 + 0.5 - h / 2.0);
            let t = (px * gc + py * gs) / diag;
            for c in 0..channels {
                data.push(base[c] + slope[c] * t);
            }
        }
    }

    let bars = rng.random_range(2..=5);
    for _ in 0..bars {
        let (cx, cy) = (rng.random_range(0.0..w), rng.random_range(0.0..h));
        let phi = rng.random_range(0.0..PI);
        let half = rng.random_range(0.03..0.12) * extent;
        let opacity = rng.random_range(0.6..1.0);
        let color = random_color(&mut rng, channels);
        let (nx, ny) = (-phi.sin(), phi.cos());
        paint(
            &mut data,
            height,
            width,
            channels,
            &color,
            opacity,
            |px, py| ((px - cx) * nx + (py - cy) * ny).abs() - half,
        );
    }

    let ellipses = rng.random_range(1..=4);
    for _ in 0..ellipses {
        let (cx, cy) = (rng.random_range(0.0..w), rng.random_range(0.0..h));
        let (ra, rb) = (
            rng.random_range(0.08..0.35) * extent,
            rng.random_range(0.08..0.35) * extent,
        );
        let rot = rng.random_range(0.0..PI);
        let opacity = rng.random_range(0.6..1.0);
        let color = random_color(&mut rng, channels);
        let (rc, rs) = (rot.cos(), rot.sin());
        paint(
            &mut data,
            height,
            width,
            channels,
            &color,
            opacity,
            |px, py| {
                let (dx, dy) = (px - cx, py - cy);
                let (u, v) = ((dx * rc + dy * rs) / ra, (-dx * rs + dy * rc) / rb);
                // Approximate signed distance in pixels.
                ((u * u + v * v).sqrt() - 1.0) * ra.min(rb)
            },
        );
    }

    data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Tensor::from_vec(shape, data).expect("length matches shape")
}

fn paint(
    data: &mut [f64],
    height: usize,
    width: usize,
    channels: usize,
    color: &[f64],
    opacity: f64,
    distance: impl Fn(f64, f64) -> f64,
) {
    for y in 0..height {
        for x in 0..width {
            let a = opacity * coverage(distance(x as f64 + 0.5, y as f64 + 0.5));
            if a == 0.0 {
                continue;
            }
            let px = &mut data[(y * width + x) * channels..(y * width + x + 1) * channels];
            for (v, c) in px.iter_mut().zip(color) {
                *v = (1.0 - a) * *v + a * c;
            }
        }
    }
}
