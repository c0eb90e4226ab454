//! Independent reference implementations used by the integration tests and
//! the acceptance harness. Nothing here calls into the convolution code.

#![allow(dead_code)]

use edgeconv::conv::{BoundaryMode, KernelSet};
use edgeconv::net::Network;
use edgeconv::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

pub fn rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut Pcg64, h: usize, w: usize, c: usize) -> Tensor {
    let shape = Shape::new(h, w, c).unwrap();
    Tensor::from_vec(
        shape,
        (0..shape.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

pub fn random_kernels(
    rng: &mut Pcg64,
    regions: usize,
    cin: usize,
    cout: usize,
    r: usize,
) -> KernelSet {
    let mut k = KernelSet::new(regions, cin, cout, r).unwrap();
    k.weights_mut()
        .iter_mut()
        .for_each(|w| *w = rng.random_range(-1.0..1.0));
    k.bias_mut()
        .iter_mut()
        .for_each(|b| *b = rng.random_range(-1.0..1.0));
    k
}

/// Case of one coordinate: `0..r` near the start, `r` inside, `r+1..=2r` near
/// the end, written as distances to the edges rather than the closed form.
pub fn axis_case(i: usize, n: usize, r: usize) -> usize {
    let from_start = i;
    let from_end = n - 1 - i;
    if from_start < r {
        from_start
    } else if from_end < r {
        2 * r - from_end
    } else {
        r
    }
}

pub fn region_oracle(y: usize, x: usize, h: usize, w: usize, r: usize) -> usize {
    axis_case(y, h, r) * (2 * r + 1) + axis_case(x, w, r)
}

/// Mirror without repeating the edge, by walking back and forth.
fn mirror(mut i: i64, n: i64) -> i64 {
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i;
        }
    }
}

/// Explicitly padded copy of `t` with `r` extra pixels per side, as a
/// row-major `Vec<Vec<Vec<f64>>>` indexed `[y][x][c]`.
pub fn pad(t: &Tensor, r: usize, mode: BoundaryMode) -> Vec<Vec<Vec<f64>>> {
    let s = t.shape();
    let (h, w, c) = (s.height() as i64, s.width() as i64, s.channels());
    let means: Vec<f64> = (0..c)
        .map(|ch| {
            let mut sum = 0.0;
            for y in 0..h as usize {
                for x in 0..w as usize {
                    sum += t.get(y, x, ch);
                }
            }
            sum / (h * w) as f64
        })
        .collect();
    let r = r as i64;
    let mut out = Vec::new();
    for py in -r..h + r {
        let mut row = Vec::new();
        for px in -r..w + r {
            let inside = (0..h).contains(&py) && (0..w).contains(&px);
            let px_vals: Vec<f64> = (0..c)
                .map(|ch| {
                    if inside {
                        return t.get(py as usize, px as usize, ch);
                    }
                    match mode {
                        BoundaryMode::Zero | BoundaryMode::Explicit => 0.0,
                        BoundaryMode::Mean => means[ch],
                        BoundaryMode::Clamp => {
                            t.get(py.clamp(0, h - 1) as usize, px.clamp(0, w - 1) as usize, ch)
                        }
                        BoundaryMode::Reflect => {
                            t.get(mirror(py, h) as usize, mirror(px, w) as usize, ch)
                        }
                    }
                })
                .collect();
            row.push(px_vals);
        }
        out.push(row);
    }
    out
}

/// Triple-loop convolution over an explicitly padded image.
pub fn conv_oracle(input: &Tensor, kernels: &KernelSet, mode: BoundaryMode) -> Tensor {
    let s = input.shape();
    let (h, w, c) = (s.height(), s.width(), s.channels());
    let r = kernels.radius();
    let side = 2 * r + 1;
    let padded = pad(input, r, mode);
    let features = kernels.out_features();
    let mut out = Tensor::zeros(Shape::new(h, w, features).unwrap());
    for y in 0..h {
        for x in 0..w {
            let region = if mode == BoundaryMode::Explicit {
                region_oracle(y, x, h, w, r)
            } else {
                0
            };
            for f in 0..features {
                let k = kernels.kernel(region, f);
                let mut acc = 0.0;
                for ty in 0..side {
                    for tx in 0..side {
                        for ch in 0..c {
                            acc += padded[y + ty][x + tx][ch] * k[(ty * side + tx) * c + ch];
                        }
                    }
                }
                out.set(y, x, f, acc + kernels.bias()[f]);
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Sum of squared errors, so gradients stay O(1) for small images.
pub fn sse(pred: &Tensor, target: &Tensor) -> f64 {
    pred.data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum()
}

pub fn sse_grad(pred: &Tensor, target: &Tensor) -> Tensor {
    Tensor::from_vec(
        pred.shape(),
        pred.data()
            .iter()
            .zip(target.data())
            .map(|(p, t)| 2.0 * (p - t))
            .collect(),
    )
    .unwrap()
}

/// Central differences of the SSE loss with respect to every parameter.
pub fn finite_difference_grads(net: &Network, input: &Tensor, target: &Tensor, h: f64) -> Vec<f64> {
    let mut probe = net.clone();
    let base = net.flat_params();
    let mut grads = Vec::with_capacity(base.len());
    let mut params = base.clone();
    for i in 0..base.len() {
        params[i] = base[i] + h;
        probe.set_flat_params(&params).unwrap();
        let plus = sse(&probe.predict(input).unwrap(), target);
        params[i] = base[i] - h;
        probe.set_flat_params(&params).unwrap();
        let minus = sse(&probe.predict(input).unwrap(), target);
        params[i] = base[i];
        grads.push((plus - minus) / (2.0 * h));
    }
    grads
}

/// Relative error with a floor on the denominator for parameters whose
/// gradient is essentially zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Largest relative error between analytic and finite-difference gradients of
/// `net` on one random input/target pair.
pub fn gradient_check(net: &Network, input: &Tensor, target: &Tensor) -> f64 {
    let trace = net.trace(input).unwrap();
    let out = net.predict(input).unwrap();
    let analytic = net
        .backward_trace(&trace, &sse_grad(&out, target))
        .unwrap()
        .flatten();
    let numeric = finite_difference_grads(net, input, target, 1e-5);
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max)
}
