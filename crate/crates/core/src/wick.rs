//! Renormalisation constants, Hermite polynomials, Wick powers, and an
//! exact iterated-integral toolkit on finite measure spaces.

use std::f64::consts::{PI, SQRT_2, TAU};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::heat::HeatKernelSpec;
use crate::noise::Mollifier;
use crate::quad::{geometric_points, integrate_pieces, normal_cdf, QuadOptions};
use crate::rng::Stream;
use crate::spectral::{freq, SpatialFft};

#[derive(Clone, Debug, PartialEq)]
pub enum WickMethod {
    /// Gaussian-bump mollifier, `t`-integral over `[0, horizon]`, torus side `l`.
    Quadrature { l: f64, images: usize, horizon: f64 },
    /// Exact variance of the on-grid `Z_δ` at time `t_ref`.
    GridSpectral { t_ref: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct WickConstants {
    pub c_delta: f64,
    /// Zero when not computed (`d ≠ 3`).
    pub c_tilde_delta: f64,
    pub delta: f64,
    pub d: usize,
    pub method: WickMethod,
}

impl WickConstants {
    pub fn quadrature(delta: f64, d: usize, spec: &HeatKernelSpec) -> Result<Self> {
        let c = compute_c_delta(delta, d, spec)?;
        let ct = if d == 3 { compute_c_tilde_delta(delta, d, spec)? } else { 0.0 };
        Ok(WickConstants {
            c_delta: c,
            c_tilde_delta: ct,
            delta,
            d,
            method: WickMethod::Quadrature { l: spec.l, images: spec.image_terms, horizon: 1.0 },
        })
    }

    /// `σ²` from the exact discrete variance; `C̃` left at zero.
    pub fn grid_spectral(grid: &Grid, m: &Mollifier) -> Result<Self> {
        let t_ref = grid.t.min(1.0);
        let v = grid_variance(grid, m, t_ref)?;
        Ok(WickConstants { c_delta: v, c_tilde_delta: 0.0, delta: m.delta, d: grid.d, method: WickMethod::GridSpectral { t_ref } })
    }

    pub fn convention(&self) -> String {
        match &self.method {
            WickMethod::Quadrature { l, images, horizon } => {
                format!("gaussian-bump; t in [0,{horizon}]; torus L={l}; images={images}; Ct=2*int K*Q^2 full space")
            }
            WickMethod::GridSpectral { t_ref } => format!("grid-spectral variance at t={t_ref}"),
        }
    }
}

/// One-dimensional periodised Gaussian density at the origin.
pub fn theta(v: f64, l: f64, images: usize) -> f64 {
    if v <= 0.0 {
        return f64::INFINITY;
    }
    if v < l * l / TAU {
        let mut s = 1.0;
        for n in 1..=images.max(1) {
            s += 2.0 * (-((n as f64 * l).powi(2)) / (2.0 * v)).exp();
        }
        s / (TAU * v).sqrt()
    } else {
        let mut s = 1.0;
        for k in 1..200 {
            let term = (-2.0 * (PI * k as f64 / l).powi(2) * v).exp();
            s += 2.0 * term;
            if term < 1e-18 {
                break;
            }
        }
        s / l
    }
}

fn opts(rel: f64) -> QuadOptions {
    QuadOptions { abs_tol: 0.0, rel_tol: rel, max_intervals: 4000 }
}

/// `C_δ = ∫_{[0,1]×T^d} (K ⋆ ρ_δ)²` for the Gaussian-bump mollifier,
/// reduced to one dimension in the variable `p = (t-s₁)+(t-s₂)`.
pub fn compute_c_delta(delta: f64, d: usize, spec: &HeatKernelSpec) -> Result<f64> {
    if delta <= 0.0 || d == 0 {
        return Err(Error::Invalid("C_delta needs delta > 0 and d ≥ 1".into()));
    }
    let sigma = delta * delta;
    let sp = sigma / SQRT_2;
    let f = |p: f64| {
        let th = theta(2.0 * p + 2.0 * sigma, spec.l, spec.image_terms).powi(d as i32);
        let window = normal_cdf((1.0 - 0.5 * p) / sp) - normal_cdf(-0.5 * p / sp);
        0.5 * th * erf(p / (2.0 * sigma)) * window
    };
    let top = 2.0 + 12.0 * sigma;
    let pts = geometric_points(sigma, top, &[2.0 - 10.0 * sigma, 2.0]);
    integrate_pieces(f, &pts, false, opts(1e-10))
}

/// `∫_{R^d} G_{v1} G_{v2} G_{v3}` for centred Gaussian densities of variance `v_i`.
fn triple_gauss(d: usize, v1: f64, v2: f64, v3: f64) -> f64 {
    let s = 1.0 / v1 + 1.0 / v2 + 1.0 / v3;
    (TAU.recip() / (v1 * v2 * v3 * s).sqrt()).powi(d as i32)
}

/// `C̃_δ = 2∫ K(z) Q_δ(z)² dz` with `Q_δ` the stationary covariance of
/// `K ⋆ ρ_δ ⋆ ξ` on full space; the time integral runs over `(0, r²]` with `r`
/// the kernel cutoff radius (1 when unset).
pub fn compute_c_tilde_delta(delta: f64, d: usize, spec: &HeatKernelSpec) -> Result<f64> {
    if d != 3 {
        return Err(Error::Invalid("C~_delta is defined for d = 3".into()));
    }
    if delta <= 0.0 {
        return Err(Error::Invalid("C~_delta needs delta > 0".into()));
    }
    let sigma = delta * delta;
    let s2 = SQRT_2 * sigma;
    let horizon = spec.cutoff_radius.map_or(1.0, |r| r * r);
    let w = move |p: f64, t: f64| normal_cdf((p - t) / s2) - normal_cdf((-p - t) / s2);
    let o = opts(1e-6);
    let outer = |t: f64| -> f64 {
        let pts = geometric_points(sigma, 1e3 * (t + sigma), &[t, (t - 3.0 * s2).max(0.0), t + 3.0 * s2]);
        let middle = |p: f64| -> f64 {
            let wp = w(p, t);
            if wp == 0.0 {
                return 0.0;
            }
            let inner = |q: f64| w(q, t) * triple_gauss(d, 2.0 * t, 2.0 * p + 2.0 * sigma, 2.0 * q + 2.0 * sigma);
            wp * integrate_pieces(inner, &pts, true, o).unwrap_or(f64::NAN)
        };
        integrate_pieces(middle, &pts, true, o).unwrap_or(f64::NAN)
    };
    let tp = geometric_points(sigma * 1e-2, horizon, &[]);
    let v = integrate_pieces(outer, &tp, false, opts(1e-5))?;
    if !v.is_finite() {
        return Err(Error::Quadrature("C~_delta inner integral failed".into()));
    }
    Ok(0.5 * v)
}

/// Exact variance of `Z_δ(t_ref, x)` for `Z_δ` = exponential-Euler Duhamel
/// solve of the spectrally mollified grid noise.
pub fn grid_variance(grid: &Grid, m: &Mollifier, t_ref: f64) -> Result<f64> {
    m.check_resolved(grid)?;
    let n = ((t_ref / grid.dt()).round() as usize).min(grid.m);
    let slices = grid.m + 1;
    let sp = SpatialFft::for_grid(grid);
    let ksq = sp.k_squared(grid.l);
    let fft = FftPlanner::new().plan_fft_forward(slices);
    let dt = grid.dt();
    let wt = TAU / (slices as f64 * dt);
    let wx = TAU / grid.l;
    let total: f64 = (0..grid.cells())
        .into_par_iter()
        .map(|c| {
            let lam = ksq[c];
            let phi = if lam == 0.0 { dt } else { -(-lam * dt).exp_m1() / lam };
            let mut a = vec![Complex64::new(0.0, 0.0); slices];
            for (mi, slot) in a.iter_mut().enumerate().take(n) {
                *slot = Complex64::new((-lam * (n - 1 - mi) as f64 * dt).exp() * phi, 0.0);
            }
            fft.process(&mut a);
            let k: Vec<f64> = sp.mode(c).iter().map(|&v| wx * v as f64).collect();
            let s: f64 = a
                .iter()
                .enumerate()
                .map(|(j, v)| v.norm_sqr() * m.multiplier(wt * freq(j, slices) as f64, &k).powi(2))
                .sum();
            s / slices as f64
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(total / (dt * grid.l.powi(grid.d as i32)))
}

/// `H_n(z, σ)` through `H_{n+1} = z H_n - n σ² H_{n-1}`.
pub fn hermite(n: u32, z: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let (mut h0, mut h1) = (1.0, z);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = z * h1 - k as f64 * s2 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Pointwise `H_n(Z_δ, √C_δ)`.
pub fn wick_power(z: &Field, n: u32, c: &WickConstants) -> Result<Field> {
    if z.grid.d != c.d {
        return Err(Error::GridMismatch("Wick constants computed for another dimension".into()));
    }
    if c.d == 3 && n >= 5 {
        return Err(Error::Invalid(format!("Wick power {n} is not defined in d = 3")));
    }
    let s = c.c_delta.sqrt();
    Ok(z.map(|v| hermite(n, v, s)))
}

/// Finite measure space of disjoint cells with Gaussian masses `ξ(A_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteNoiseSpace {
    pub measures: Vec<f64>,
}

impl DiscreteNoiseSpace {
    pub fn new(measures: Vec<f64>) -> Result<Self> {
        if measures.is_empty() || measures.iter().any(|&m| m <= 0.0 || !m.is_finite()) {
            return Err(Error::Invalid("cell measures must be positive".into()));
        }
        Ok(DiscreteNoiseSpace { measures })
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    /// Each cell split into `r` equal parts; returns the parent of every subcell.
    pub fn refine(&self, r: usize) -> (DiscreteNoiseSpace, Vec<usize>) {
        let mut m = Vec::with_capacity(self.len() * r);
        let mut parent = Vec::with_capacity(self.len() * r);
        for (j, &mu) in self.measures.iter().enumerate() {
            for _ in 0..r {
                m.push(mu / r as f64);
                parent.push(j);
            }
        }
        (DiscreteNoiseSpace { measures: m }, parent)
    }

    /// `ξ(A_j)` for replica `rep` of `seed`.
    pub fn sample(&self, seed: u64, rep: u64) -> Vec<f64> {
        let s = Stream::named(seed, "wick", "cells", 0);
        let base = rep * self.len() as u64;
        self.measures.iter().enumerate().map(|(j, &mu)| mu.sqrt() * s.normal(base + j as u64)).collect()
    }

    /// `∫ f dξ` for a cell function.
    pub fn integral(&self, f: &[f64], xi: &[f64]) -> f64 {
        f.iter().zip(xi).map(|(a, b)| a * b).sum()
    }

    pub fn l2_sq(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.measures).map(|(a, m)| a * a * m).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelRepr {
    /// Row-major `cells^order` coefficients.
    Dense(Vec<f64>),
    /// `f ⊗ … ⊗ f` restricted to pairwise distinct indices.
    Tensor(Vec<f64>),
}

/// Elementary kernel: constant on products of cells, zero on diagonals.
#[derive(Clone, Debug, PartialEq)]
pub struct SimpleKernel {
    pub order: usize,
    pub cells: usize,
    pub repr: KernelRepr,
}

fn tuple_of(mut flat: usize, cells: usize, order: usize) -> Vec<usize> {
    let mut t = vec![0; order];
    for slot in t.iter_mut().rev() {
        *slot = flat % cells;
        flat /= cells;
    }
    t
}

fn distinct(t: &[usize]) -> bool {
    (0..t.len()).all(|i| (i + 1..t.len()).all(|j| t[i] != t[j]))
}

impl SimpleKernel {
    pub fn dense(order: usize, cells: usize, coeffs: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&order) || coeffs.len() != cells.pow(order as u32) {
            return Err(Error::Invalid("kernel order must be 1..=3 with cells^order coefficients".into()));
        }
        for (i, &c) in coeffs.iter().enumerate() {
            if c != 0.0 && !distinct(&tuple_of(i, cells, order)) {
                return Err(Error::Invalid("elementary kernels vanish on the diagonal".into()));
            }
        }
        Ok(SimpleKernel { order, cells, repr: KernelRepr::Dense(coeffs) })
    }

    pub fn tensor(order: usize, f: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&order) {
            return Err(Error::Invalid("kernel order must be 1..=3".into()));
        }
        Ok(SimpleKernel { order, cells: f.len(), repr: KernelRepr::Tensor(f) })
    }

    /// Uniform `[-1, 1]` coefficients off the diagonal.
    pub fn random(order: usize, cells: usize, seed: u64) -> Result<Self> {
        let s = Stream::named(seed, "wick", "kernel", order as u64);
        let coeffs = (0..cells.pow(order as u32))
            .map(|i| if distinct(&tuple_of(i, cells, order)) { 2.0 * s.uniform(i as u64) - 1.0 } else { 0.0 })
            .collect();
        SimpleKernel::dense(order, cells, coeffs)
    }

    /// Symmetric kernel with uniform `[-1, 1]` values on increasing tuples.
    pub fn random_symmetric(order: usize, cells: usize, seed: u64) -> Result<Self> {
        let s = Stream::named(seed, "wick", "kernel-sym", order as u64);
        let coeffs = (0..cells.pow(order as u32))
            .map(|i| {
                let mut t = tuple_of(i, cells, order);
                if !distinct(&t) {
                    return 0.0;
                }
                t.sort_unstable();
                let key = t.iter().fold(0, |acc, &j| acc * cells + j);
                2.0 * s.uniform(key as u64) - 1.0
            })
            .collect();
        SimpleKernel::dense(order, cells, coeffs)
    }

    pub fn scale(&self, a: f64) -> SimpleKernel {
        let repr = match &self.repr {
            KernelRepr::Dense(c) => KernelRepr::Dense(c.iter().map(|v| a * v).collect()),
            KernelRepr::Tensor(f) => {
                let r = a.abs().powf(1.0 / self.order as f64) * if self.order % 2 == 1 { a.signum() } else { 1.0 };
                if self.order % 2 == 0 && a < 0.0 {
                    return self.to_dense().scale(a);
                }
                KernelRepr::Tensor(f.iter().map(|v| r * v).collect())
            }
        };
        SimpleKernel { repr, ..*self }
    }

    pub fn to_dense(&self) -> SimpleKernel {
        match &self.repr {
            KernelRepr::Dense(_) => self.clone(),
            KernelRepr::Tensor(f) => {
                let coeffs = (0..self.cells.pow(self.order as u32))
                    .map(|i| {
                        let t = tuple_of(i, self.cells, self.order);
                        if distinct(&t) {
                            t.iter().map(|&j| f[j]).product()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                SimpleKernel { order: self.order, cells: self.cells, repr: KernelRepr::Dense(coeffs) }
            }
        }
    }

    fn coeffs(&self) -> Vec<f64> {
        match self.to_dense().repr {
            KernelRepr::Dense(c) => c,
            KernelRepr::Tensor(_) => unreachable!(),
        }
    }

    /// `‖f‖²_{L²(μ^{⊗n})}`.
    pub fn l2_sq(&self, space: &DiscreteNoiseSpace) -> f64 {
        let c = self.coeffs();
        c.iter()
            .enumerate()
            .map(|(i, v)| v * v * tuple_of(i, self.cells, self.order).iter().map(|&j| space.measures[j]).product::<f64>())
            .sum()
    }

    /// `‖sym f‖²`.
    pub fn sym_l2_sq(&self, space: &DiscreteNoiseSpace) -> f64 {
        let c = self.coeffs();
        let n = self.order;
        let perms: Vec<Vec<usize>> = match n {
            1 => vec![vec![0]],
            2 => vec![vec![0, 1], vec![1, 0]],
            _ => vec![vec![0, 1, 2], vec![0, 2, 1], vec![1, 0, 2], vec![1, 2, 0], vec![2, 0, 1], vec![2, 1, 0]],
        };
        let flat = |t: &[usize]| t.iter().fold(0, |acc, &j| acc * self.cells + j);
        (0..c.len())
            .map(|i| {
                let t = tuple_of(i, self.cells, n);
                let s: f64 = perms.iter().map(|p| c[flat(&p.iter().map(|&k| t[k]).collect::<Vec<_>>())]).sum::<f64>() / perms.len() as f64;
                s * s * t.iter().map(|&j| space.measures[j]).product::<f64>()
            })
            .sum()
    }
}

/// `Σ α_{j…k} ξ(A_j)…ξ(A_k)` for one draw of the cell masses.
pub fn iterated_integral_values(f: &SimpleKernel, xi: &[f64]) -> Result<f64> {
    if xi.len() != f.cells {
        return Err(Error::GridMismatch("kernel and noise space differ in cell count".into()));
    }
    Ok(match &f.repr {
        KernelRepr::Dense(c) => match f.order {
            1 => c.iter().zip(xi).map(|(a, x)| a * x).sum(),
            2 => {
                let n = f.cells;
                (0..n).map(|j| xi[j] * (0..n).map(|k| c[j * n + k] * xi[k]).sum::<f64>()).sum()
            }
            _ => {
                let n = f.cells;
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let row = &c[(i * n + j) * n..(i * n + j + 1) * n];
                        s += xi[i] * xi[j] * row.iter().zip(xi).map(|(a, x)| a * x).sum::<f64>();
                    }
                }
                s
            }
        },
        KernelRepr::Tensor(g) => {
            let (mut p1, mut p2, mut p3) = (0.0, 0.0, 0.0);
            for (a, x) in g.iter().zip(xi) {
                let v = a * x;
                p1 += v;
                p2 += v * v;
                p3 += v * v * v;
            }
            match f.order {
                1 => p1,
                2 => p1 * p1 - p2,
                _ => p1 * p1 * p1 - 3.0 * p1 * p2 + 2.0 * p3,
            }
        }
    })
}

pub fn iterated_integral(f: &SimpleKernel, space: &DiscreteNoiseSpace, seed: u64) -> Result<f64> {
    iterated_integral_values(f, &space.sample(seed, 0))
}

/// Mean and standard error of Monte Carlo samples, summed pairwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl McEstimate {
    pub fn from_samples(v: &[f64]) -> Self {
        let n = v.len();
        let mean = pairwise_sum(v) / n as f64;
        let dev: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        McEstimate { mean, stderr: (var / n as f64).sqrt(), samples: n }
    }

    /// `|mean - target| ≤ k·stderr`, with a floor for exact zero-variance cases.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + 1e-12 * (1.0 + target.abs())
    }
}

pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn replicate(seeds: usize, g: impl Fn(u64) -> f64 + Sync + Send) -> Vec<f64> {
    (0..seeds as u64).into_par_iter().map(g).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubeReport {
    /// `(∫fξ)³ - ∭f⊗f⊗f ξξξ - 3‖f‖²∫fξ`.
    pub residual: McEstimate,
    /// `∭f⊗f⊗f ξξξ - H_3(∫fξ, ‖f‖)`.
    pub hermite_residual: McEstimate,
}

/// Checks the cube identity for a cell function `f` on `space`, the triple
/// integral taken off-diagonal on `refine`-fold subcells.
pub fn verify_cube_identity(f: &[f64], space: &DiscreteNoiseSpace, seeds: usize, refine: usize, seed: u64) -> Result<CubeReport> {
    if f.len() != space.len() {
        return Err(Error::GridMismatch("function and space differ in cell count".into()));
    }
    let norm2 = space.l2_sq(f);
    if norm2 <= 0.0 {
        return Err(Error::Invalid("f must have positive norm".into()));
    }
    let (fine, parent) = space.refine(refine);
    let g: Vec<f64> = parent.iter().map(|&j| f[j]).collect();
    let k3 = SimpleKernel::tensor(3, g.clone())?;
    let pairs: Vec<(f64, f64)> = (0..seeds as u64)
        .into_par_iter()
        .map(|r| {
            let xi = fine.sample(seed, r);
            let i1 = fine.integral(&g, &xi);
            let i3 = iterated_integral_values(&k3, &xi).unwrap_or(f64::NAN);
            (i1.powi(3) - i3 - 3.0 * norm2 * i1, i3 - hermite(3, i1, norm2.sqrt()))
        })
        .collect();
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(CubeReport { residual: McEstimate::from_samples(&a), hermite_residual: McEstimate::from_samples(&b) })
}

/// Residual of `(∫fξ)² - ∬f⊗f ξξ - ∫f²dμ`.
pub fn verify_square_identity(f: &[f64], space: &DiscreteNoiseSpace, seeds: usize, refine: usize, seed: u64) -> Result<McEstimate> {
    if f.len() != space.len() {
        return Err(Error::GridMismatch("function and space differ in cell count".into()));
    }
    let norm2 = space.l2_sq(f);
    let (fine, parent) = space.refine(refine);
    let g: Vec<f64> = parent.iter().map(|&j| f[j]).collect();
    let k2 = SimpleKernel::tensor(2, g.clone())?;
    let v = replicate(seeds, |r| {
        let xi = fine.sample(seed, r);
        let i1 = fine.integral(&g, &xi);
        i1 * i1 - iterated_integral_values(&k2, &xi).unwrap_or(f64::NAN) - norm2
    });
    Ok(McEstimate::from_samples(&v))
}

/// Monte Carlo `E[(I_n f)²]` together with `2‖sym f‖²` and `2‖f‖²` (order 2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsometryReport {
    pub second_moment: McEstimate,
    pub sym_bound: f64,
    pub plain_bound: f64,
}

pub fn verify_isometry(f: &SimpleKernel, space: &DiscreteNoiseSpace, seeds: usize, seed: u64) -> Result<IsometryReport> {
    if f.order != 2 {
        return Err(Error::Invalid("isometry check is for order-2 kernels".into()));
    }
    let v = replicate(seeds, |r| iterated_integral_values(f, &space.sample(seed, r)).unwrap_or(f64::NAN).powi(2));
    Ok(IsometryReport {
        second_moment: McEstimate::from_samples(&v),
        sym_bound: 2.0 * f.sym_l2_sq(space),
        plain_bound: 2.0 * f.l2_sq(space),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NelsonReport {
    /// `E|I_n f|^p / ‖f‖^p`.
    pub ratio: McEstimate,
}

pub fn verify_nelson(n: usize, p: u32, f: &SimpleKernel, space: &DiscreteNoiseSpace, seeds: usize, seed: u64) -> Result<NelsonReport> {
    if !(1..=3).contains(&n) || f.order != n {
        return Err(Error::Invalid("Nelson check needs n ∈ {1,2,3} matching the kernel order".into()));
    }
    if p == 0 || p % 2 == 1 {
        return Err(Error::Invalid("Nelson check needs an even moment".into()));
    }
    let norm = f.l2_sq(space).powf(p as f64 / 2.0);
    let v = replicate(seeds, |r| iterated_integral_values(f, &space.sample(seed, r)).unwrap_or(f64::NAN).abs().powi(p as i32) / norm);
    Ok(NelsonReport { ratio: McEstimate::from_samples(&v) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_examples() {
        assert_eq!(hermite(2, 3.0, 1.0), 8.0);
        assert_eq!(hermite(3, 2.0, 1.0), 2.0);
        for n in 0..=6 {
            assert!((hermite(n, 1.7, 0.0) - 1.7f64.powi(n as i32)).abs() < 1e-12);
        }
        assert!((hermite(4, 1.3, 0.7) - (1.3f64.powi(4) - 6.0 * 0.49 * 1.69 + 3.0 * 0.49 * 0.49)).abs() < 1e-12);
    }

    #[test]
    fn theta_branches_agree() {
        for v in [0.05, 0.5, 1.0, 3.0] {
            let l = 2.0;
            let direct: f64 = (-40..=40).map(|n: i32| (-(n as f64 * l).powi(2) / (2.0 * v)).exp()).sum::<f64>() / (TAU * v).sqrt();
            assert!((theta(v, l, 5) / direct - 1.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn diagonal_coefficients_are_rejected() {
        let mut c = vec![0.0; 9];
        c[4] = 1.0;
        assert!(SimpleKernel::dense(2, 3, c).is_err());
    }

    #[test]
    fn tensor_matches_dense() {
        let f = vec![0.3, -1.2, 0.7, 2.0];
        let space = DiscreteNoiseSpace::new(vec![0.5, 1.0, 0.25, 2.0]).unwrap();
        let xi = space.sample(4, 0);
        for order in 1..=3 {
            let t = SimpleKernel::tensor(order, f.clone()).unwrap();
            let a = iterated_integral_values(&t, &xi).unwrap();
            let b = iterated_integral_values(&t.to_dense(), &xi).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_kernel_integrates_to_zero() {
        let space = DiscreteNoiseSpace::new(vec![1.0; 5]).unwrap();
        let k = SimpleKernel::dense(3, 5, vec![0.0; 125]).unwrap();
        assert_eq!(iterated_integral(&k, &space, 1).unwrap(), 0.0);
    }
}
