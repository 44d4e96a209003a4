//! Space-time white noise on periodic grids, mollification and pairing
//! with parabolically scaled test functions.

use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::quad::{integrate, QuadOptions};
use crate::rng::{stream_id, Stream};
use crate::spectral::{freq, SpaceTimeFft};

pub fn noise_stream(seed: u64) -> Stream {
    Stream::new(seed, stream_id("noise", "xi", 0))
}

/// Cell values are i.i.d. `N(0, 1/(dt·dx^d))`; cells `2i` and `2i+1` share
/// one Philox block.
pub fn sample_white_noise(grid: &Grid, seed: u64) -> Field {
    let s = noise_stream(seed);
    let sd = grid.cell_volume().recip().sqrt();
    let mut values = vec![0.0; grid.len()];
    values.par_chunks_mut(1 << 14).enumerate().for_each(|(c, chunk)| {
        let base = (c << 14) as u64;
        for (i, pair) in chunk.chunks_mut(2).enumerate() {
            let (a, b) = s.normal_pair((base >> 1) + i as u64);
            pair[0] = sd * a;
            if pair.len() > 1 {
                pair[1] = sd * b;
            }
        }
    });
    Field { grid: *grid, values, seed_lineage: vec![(seed, s.stream)] }
}

/// Value of a single noise cell, identical to the corresponding entry of
/// `sample_white_noise`.
pub fn white_noise_cell(grid: &Grid, seed: u64, flat: usize) -> f64 {
    let (a, b) = noise_stream(seed).normal_pair((flat >> 1) as u64);
    grid.cell_volume().recip().sqrt() * if flat & 1 == 0 { a } else { b }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// Standard Gaussian in all `d+1` variables before scaling.
    GaussianBump,
    /// Sharp box in Fourier space: `|k_i| ≤ π/δ`, `|ω| ≤ π/δ²`.
    SpectralCutoff,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mollifier {
    pub profile: Profile,
    pub delta: f64,
}

impl Mollifier {
    pub fn new(profile: Profile, delta: f64) -> Self {
        Mollifier { profile, delta }
    }

    /// Fourier multiplier at temporal frequency `omega` and spatial
    /// wavevector `k`.
    pub fn multiplier(&self, omega: f64, k: &[f64]) -> f64 {
        let d2 = self.delta * self.delta;
        match self.profile {
            Profile::GaussianBump => {
                let k2: f64 = k.iter().map(|v| v * v).sum();
                (-0.5 * (d2 * d2 * omega * omega + d2 * k2)).exp()
            }
            Profile::SpectralCutoff => {
                let kc = PI / self.delta;
                let ok = omega.abs() <= PI / d2 * (1.0 + 1e-12) && k.iter().all(|v| v.abs() <= kc * (1.0 + 1e-12));
                if ok {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Spatial multiplier alone.
    pub fn space_multiplier(&self, k: &[f64]) -> f64 {
        match self.profile {
            Profile::GaussianBump => (-0.5 * self.delta * self.delta * k.iter().map(|v| v * v).sum::<f64>()).exp(),
            Profile::SpectralCutoff => self.multiplier(0.0, k),
        }
    }

    /// Temporal multiplier alone.
    pub fn time_multiplier(&self, omega: f64) -> f64 {
        match self.profile {
            Profile::GaussianBump => (-0.5 * self.delta.powi(4) * omega * omega).exp(),
            Profile::SpectralCutoff => {
                if omega.abs() <= PI / (self.delta * self.delta) * (1.0 + 1e-12) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Unscaled profile `ρ(t, x)`; `None` for the spectral cutoff.
    pub fn profile_value(&self, t: f64, x: &[f64]) -> Option<f64> {
        match self.profile {
            Profile::GaussianBump => {
                let r2 = t * t + x.iter().map(|v| v * v).sum::<f64>();
                Some((TAU).powf(-((x.len() + 1) as f64) / 2.0) * (-0.5 * r2).exp())
            }
            Profile::SpectralCutoff => None,
        }
    }

    /// `∫ρ_δ²` in `d` space dimensions.
    pub fn l2_norm_sq(&self, d: usize) -> f64 {
        match self.profile {
            Profile::GaussianBump => (4.0 * PI).powf(-((d + 1) as f64) / 2.0) * self.delta.powi(-(d as i32) - 2),
            Profile::SpectralCutoff => {
                let kc = PI / self.delta;
                (2.0 * kc / TAU).powi(d as i32) * (2.0 * kc / (self.delta * TAU))
            }
        }
    }

    pub fn check_resolved(&self, grid: &Grid) -> Result<()> {
        let need = 2.0 * grid.dx().max(grid.dt().sqrt());
        if self.delta < need * (1.0 - 1e-12) {
            return Err(Error::Unresolved(format!("delta {} below 2·max(dx, √dt) = {need}", self.delta)));
        }
        Ok(())
    }
}

/// Periodic space-time convolution with `ρ_δ`, computed spectrally.
pub fn mollify(xi: &Field, m: &Mollifier) -> Result<Field> {
    let g = xi.grid;
    m.check_resolved(&g)?;
    let st = SpaceTimeFft::new(&g);
    let mut h = st.forward(&xi.values);
    let cells = g.cells();
    let wt = TAU / ((g.m + 1) as f64 * g.dt());
    let wx = TAU / g.l;
    let sp = st.spatial();
    let kvecs: Vec<Vec<f64>> = (0..cells).map(|c| sp.mode(c).iter().map(|&v| wx * v as f64).collect()).collect();
    h.par_chunks_mut(cells).enumerate().for_each(|(i, sl)| {
        let omega = wt * freq(i, g.m + 1) as f64;
        for (c, v) in sl.iter_mut().enumerate() {
            *v *= m.multiplier(omega, &kvecs[c]);
        }
    });
    let values = st.inverse_real(h);
    Ok(Field { grid: g, values, seed_lineage: xi.seed_lineage.clone() })
}

fn bump_raw(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

fn bump_norm() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let v = integrate(bump_raw, -1.0, 1.0, QuadOptions { abs_tol: 1e-15, rel_tol: 1e-14, max_intervals: 500 })
            .expect("bump normalization");
        1.0 / v
    })
}

/// Unit-mass C^∞ bump `c·exp(-1/(1-u²))` on `[-1, 1]`.
pub fn bump(u: f64) -> f64 {
    bump_norm() * bump_raw(u)
}

/// `∫ u² bump(u) du`.
pub fn bump_second_moment() -> f64 {
    static M: OnceLock<f64> = OnceLock::new();
    *M.get_or_init(|| {
        integrate(|u| u * u * bump(u), -1.0, 1.0, QuadOptions { abs_tol: 1e-15, rel_tol: 1e-13, max_intervals: 500 })
            .unwrap()
    })
}

/// `∫ bump(u)² du`.
pub fn bump_l2_sq() -> f64 {
    static M: OnceLock<f64> = OnceLock::new();
    *M.get_or_init(|| {
        integrate(|u| bump(u).powi(2), -1.0, 1.0, QuadOptions { abs_tol: 1e-15, rel_tol: 1e-13, max_intervals: 500 })
            .unwrap()
    })
}

/// `S^λ_z η` with `η(t, x) = bump(t)·Π bump(x_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledTestFunction {
    pub t: f64,
    pub x: Vec<f64>,
    pub lambda: f64,
}

impl ScaledTestFunction {
    pub fn new(t: f64, x: Vec<f64>, lambda: f64) -> Self {
        ScaledTestFunction { t, x, lambda }
    }

    pub fn eval(&self, s: f64, y: &[f64]) -> f64 {
        let l = self.lambda;
        let d = self.x.len();
        let mut v = l.powi(-(d as i32) - 2) * bump((s - self.t) / (l * l));
        for j in 0..d {
            v *= bump((y[j] - self.x[j]) / l);
        }
        v
    }

    /// `‖S^λ η‖²_{L²} = λ^{-d-2} ‖η‖²`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.lambda.powi(-(self.x.len() as i32) - 2) * bump_l2_sq().powi(self.x.len() as i32 + 1)
    }
}

/// Quadrature weights `(index, weight)` of a 1-d scaled bump on nodes
/// `i·h`, with optional periodic wrapping. Trapezoid weights rescaled to
/// unit sum, so constants pair exactly.
pub fn bump_weights(center: f64, scale: f64, h: f64, n: usize, periodic: bool) -> Vec<(usize, f64)> {
    let raw = unit_weights(center, scale, h);
    let mut out = Vec::new();
    for (i, w) in raw {
        let idx = if periodic {
            i.rem_euclid(n as i64) as usize
        } else if i < 0 || i as usize >= n {
            continue;
        } else {
            i as usize
        };
        out.push((idx, w));
    }
    out
}

pub(crate) fn unit_weights(center: f64, scale: f64, h: f64) -> Vec<(i64, f64)> {
    let lo = ((center - scale) / h).floor() as i64;
    let hi = ((center + scale) / h).ceil() as i64;
    let mut w: Vec<(i64, f64)> =
        (lo..=hi).map(|i| (i, bump((i as f64 * h - center) / scale))).filter(|p| p.1 != 0.0).collect();
    let s: f64 = w.iter().map(|p| p.1).sum();
    w.iter_mut().for_each(|p| p.1 /= s);
    w
}

pub fn check_pairing(grid: &Grid, tf: &ScaledTestFunction) -> Result<()> {
    if tf.x.len() != grid.d {
        return Err(Error::GridMismatch("test function dimension".into()));
    }
    let l = tf.lambda;
    if !(l > 0.0 && l <= 1.0 + 1e-12) {
        return Err(Error::Invalid(format!("lambda {l} outside (0, 1]")));
    }
    if l < 4.0 * grid.dx() * (1.0 - 1e-9) || l * l < 4.0 * grid.dt() * (1.0 - 1e-9) {
        return Err(Error::Unresolved(format!("lambda {l} spans fewer than 4 cells")));
    }
    if 2.0 * l > grid.l {
        return Err(Error::Invalid("test function wider than the period".into()));
    }
    if tf.t - l * l < -1e-12 || tf.t + l * l > grid.t + 1e-12 {
        return Err(Error::Invalid(format!("time support [{}, {}] leaves [0, {}]", tf.t - l * l, tf.t + l * l, grid.t)));
    }
    Ok(())
}

fn tensor_sum(grid: &Grid, tf: &ScaledTestFunction, value: impl Fn(usize) -> f64) -> f64 {
    let l = tf.lambda;
    let wt = bump_weights(tf.t, l * l, grid.dt(), grid.m + 1, false);
    let wx: Vec<Vec<(usize, f64)>> = tf.x.iter().map(|&c| bump_weights(c, l, grid.dx(), grid.n, true)).collect();
    let cells = grid.cells();
    let mut total = 0.0;
    let mut idx = vec![0usize; grid.d];
    for &(ti, w0) in &wt {
        let base = ti * cells;
        'outer: loop {
            let mut w = w0;
            let mut flat = 0;
            for j in 0..grid.d {
                let (i, wj) = wx[j][idx[j]];
                w *= wj;
                flat = flat * grid.n + i;
            }
            total += w * value(base + flat);
            for j in (0..grid.d).rev() {
                idx[j] += 1;
                if idx[j] < wx[j].len() {
                    continue 'outer;
                }
                idx[j] = 0;
            }
            break;
        }
    }
    total
}

/// Trapezoid pairing `⟨f, S^λ_z η⟩` on the grid nodes.
pub fn pair(f: &Field, tf: &ScaledTestFunction) -> Result<f64> {
    check_pairing(&f.grid, tf)?;
    Ok(tensor_sum(&f.grid, tf, |i| f.values[i]))
}

/// Pairing of the white noise of `seed` without materializing the field.
pub fn pair_noise(grid: &Grid, seed: u64, tf: &ScaledTestFunction) -> Result<f64> {
    check_pairing(grid, tf)?;
    Ok(tensor_sum(grid, tf, |i| white_noise_cell(grid, seed, i)))
}

/// Pairings at every node of a lattice: times `time_idx`, spatial nodes
/// every `stride` cells on each axis. Output is time-major.
pub fn pair_lattice(f: &Field, lambda: f64, time_idx: &[usize], stride: usize) -> Result<Vec<f64>> {
    let g = f.grid;
    let probe = ScaledTestFunction::new(time_idx.first().map_or(0.0, |&i| i as f64 * g.dt()), vec![0.0; g.d], lambda);
    check_pairing(&g, &probe)?;
    for &i in time_idx {
        let t = i as f64 * g.dt();
        check_pairing(&g, &ScaledTestFunction::new(t, vec![0.0; g.d], lambda))?;
    }
    let cells = g.cells();
    let wx = unit_weights(0.0, lambda, g.dx());
    let slabs: Vec<Vec<f64>> = time_idx
        .par_iter()
        .map(|&ti| {
            let mut acc = vec![0.0; cells];
            for (si, w) in bump_weights(ti as f64 * g.dt(), lambda * lambda, g.dt(), g.m + 1, false) {
                let sl = f.slice(si);
                acc.iter_mut().zip(sl).for_each(|(a, v)| *a += w * v);
            }
            let mut cur = acc;
            let mut shape = vec![g.n; g.d];
            for axis in 0..g.d {
                cur = axis_conv(&cur, &shape, axis, &wx, stride, g.n);
                shape[axis] = g.n.div_ceil(stride);
            }
            cur
        })
        .collect();
    Ok(slabs.concat())
}

/// Periodic convolution along `axis`, sampled every `stride` points.
pub(crate) fn axis_conv(x: &[f64], shape: &[usize], axis: usize, w: &[(i64, f64)], stride: usize, n: usize) -> Vec<f64> {
    let out_len = n.div_ceil(stride);
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0; outer * out_len * inner];
    for o in 0..outer {
        for (k, p) in (0..n).step_by(stride).enumerate() {
            let dst = (o * out_len + k) * inner;
            for &(off, wt) in w {
                let src_i = (p as i64 + off).rem_euclid(n as i64) as usize;
                let src = (o * n + src_i) * inner;
                for q in 0..inner {
                    out[dst + q] += wt * x[src + q];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_is_normalized() {
        let v = integrate(bump, -1.0, 1.0, QuadOptions::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cell_variance_matches_volume() {
        // dt·dx = 0.01 → variance 100
        let g = Grid::new(1, 10, 1.0, 0.1, 1).unwrap();
        assert!((g.cell_volume() - 0.01).abs() < 1e-15);
        let mut s2 = 0.0;
        let n = 4000;
        for seed in 0..n / 20 {
            let f = sample_white_noise(&g, seed);
            s2 += f.values.iter().map(|v| v * v).sum::<f64>();
        }
        let var = s2 / (n / 20 * g.len() as u64) as f64;
        assert!((var / 100.0 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn deterministic_and_random_access() {
        let g = Grid::new(2, 16, 1.0, 0.5, 64).unwrap();
        let a = sample_white_noise(&g, 11);
        let b = sample_white_noise(&g, 11);
        assert_eq!(a.values, b.values);
        assert_eq!(a.values[77], white_noise_cell(&g, 11, 77));
        let tf = ScaledTestFunction::new(0.25, vec![0.5, 0.5], 0.25);
        assert_eq!(pair(&a, &tf).unwrap(), pair_noise(&g, 11, &tf).unwrap());
    }

    #[test]
    fn constant_pairs_to_unit_mass() {
        let g = Grid::new(2, 64, 1.0, 1.0, 512).unwrap();
        let f = Field::constant(g, 1.0);
        for lam in [1.0 / 2.0, 1.0 / 4.0, 1.0 / 8.0] {
            let tf = ScaledTestFunction::new(0.5, vec![0.3, 0.9], lam);
            let v = pair(&f, &tf).unwrap();
            assert!((v - 1.0).abs() < 1e-9, "{lam}: {v}");
        }
    }

    #[test]
    fn polynomial_pairing_matches_closed_form() {
        // ∫ (s + y²) S^λ_z η = t + x² + λ²·m₂
        let g = Grid::new(1, 256, 4.0, 1.0, 4096).unwrap();
        let f = Field::from_fn(g, |t, x| t + x[0] * x[0]);
        let (t, x, lam) = (0.5, 1.7, 0.5);
        let tf = ScaledTestFunction::new(t, vec![x], lam);
        let want = t + x * x + lam * lam * bump_second_moment();
        assert!((pair(&f, &tf).unwrap() - want).abs() < 1e-6);
    }

    #[test]
    fn unresolved_scale_rejected() {
        let g = Grid::new(1, 16, 1.0, 1.0, 16).unwrap();
        let f = Field::zeros(g);
        assert!(pair(&f, &ScaledTestFunction::new(0.5, vec![0.5], 0.2)).is_err());
    }

    #[test]
    fn lattice_matches_pointwise_pairing() {
        let g = Grid::new(2, 32, 1.0, 0.5, 256).unwrap();
        let f = sample_white_noise(&g, 3);
        let lam = 0.25;
        let times = [64usize, 128];
        let lat = pair_lattice(&f, lam, &times, 8).unwrap();
        let per = 4 * 4;
        for (a, &ti) in times.iter().enumerate() {
            for i in 0..4 {
                for j in 0..4 {
                    let tf = ScaledTestFunction::new(ti as f64 * g.dt(), vec![i as f64 * 0.25, j as f64 * 0.25], lam);
                    let p = pair(&f, &tf).unwrap();
                    assert!((lat[a * per + i * 4 + j] - p).abs() < 1e-9 * (1.0 + p.abs()));
                }
            }
        }
    }

    #[test]
    fn mollify_constant_and_idempotent_cutoff() {
        let g = Grid::new(1, 32, 1.0, 0.25, 64).unwrap();
        let m = Mollifier::new(Profile::GaussianBump, 0.15);
        let c = mollify(&Field::constant(g, 2.5), &m).unwrap();
        assert!(c.values.iter().all(|v| (v - 2.5).abs() < 1e-12));
        let xi = sample_white_noise(&g, 5);
        let s = Mollifier::new(Profile::SpectralCutoff, 0.15);
        let a = mollify(&xi, &s).unwrap();
        let b = mollify(&a, &s).unwrap();
        let scale = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| (x - y).abs() < 1e-12 * scale));
        assert!(mollify(&xi, &Mollifier::new(Profile::GaussianBump, 0.1)).is_err());
    }
}
