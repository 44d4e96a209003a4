//! Heat semigroup on the torus: exponential-Euler Duhamel stepping,
//! stochastic convolution and tabulated kernel convolution.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::noise::bump;
use crate::quad::{integrate, normal_cdf, QuadOptions};
use crate::spectral::SpatialFft;

/// Per-mode exponential-Euler propagator for `∂u = Δu - m²u + f`.
#[derive(Clone)]
pub struct Propagator {
    pub fft: SpatialFft,
    pub decay: Vec<f64>,
    pub gain: Vec<f64>,
}

impl Propagator {
    pub fn new(grid: &Grid, mass_sq: f64) -> Self {
        let fft = SpatialFft::for_grid(grid);
        let dt = grid.dt();
        let lam: Vec<f64> = fft.k_squared(grid.l).into_iter().map(|k2| k2 + mass_sq).collect();
        let decay = lam.iter().map(|&l| (-l * dt).exp()).collect();
        let gain = lam.iter().map(|&l| if l == 0.0 { dt } else { -(-l * dt).exp_m1() / l }).collect();
        Propagator { fft, decay, gain }
    }

    /// `û ← e^{-λdt} û + ((1 - e^{-λdt})/λ) f̂`.
    pub fn step(&self, uhat: &mut [Complex64], fhat: &[Complex64]) {
        for i in 0..uhat.len() {
            uhat[i] = uhat[i] * self.decay[i] + fhat[i] * self.gain[i];
        }
    }

    pub fn decay_only(&self, uhat: &mut [Complex64]) {
        for i in 0..uhat.len() {
            uhat[i] *= self.decay[i];
        }
    }
}

/// Spectral state of a running solve.
#[derive(Clone, Debug)]
pub struct SpectralState {
    pub coeffs: Vec<Complex64>,
    pub time: f64,
}

/// Slices `start..=end` of the mild solution started from `u0` at slice
/// `start`, forcing taken at the left endpoint of each step.
pub fn duhamel_segment(f: &Field, u0: &[f64], start: usize, end: usize) -> Result<Vec<Vec<f64>>> {
    segment(&Propagator::new(&f.grid, 0.0), f, u0, start, end)
}

fn segment(p: &Propagator, f: &Field, u0: &[f64], start: usize, end: usize) -> Result<Vec<Vec<f64>>> {
    let g = f.grid;
    if u0.len() != g.cells() || end > g.m || start > end {
        return Err(Error::GridMismatch("initial data or range does not match the grid".into()));
    }
    let mut state = SpectralState { coeffs: p.fft.forward(u0), time: start as f64 * g.dt() };
    let mut out = vec![u0.to_vec()];
    for n in start..end {
        let fh = p.fft.forward(f.slice(n));
        p.step(&mut state.coeffs, &fh);
        state.time += g.dt();
        out.push(p.fft.inverse_real(state.coeffs.clone()));
    }
    Ok(out)
}

pub fn duhamel_solve(f: &Field, u0: &[f64]) -> Result<Field> {
    duhamel_solve_with_mass(f, u0, 0.0)
}

/// Mild solution of `∂u = Δu - m²u + f`.
pub fn duhamel_solve_with_mass(f: &Field, u0: &[f64], mass_sq: f64) -> Result<Field> {
    let slices = segment(&Propagator::new(&f.grid, mass_sq), f, u0, 0, f.grid.m)?;
    Ok(Field { grid: f.grid, values: slices.concat(), seed_lineage: f.seed_lineage.clone() })
}

/// `Z = K ⋆ ξ` with zero initial data.
pub fn stochastic_convolution(xi: &Field) -> Result<Field> {
    duhamel_solve(xi, &vec![0.0; xi.grid.cells()])
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatKernelSpec {
    pub d: usize,
    pub l: f64,
    pub image_terms: usize,
    /// Parabolic radius `r` of the smooth cutoff `χ(ρ/r)`.
    pub cutoff_radius: Option<f64>,
    /// Kill discrete moments of parabolic degree ≤ this value.
    pub moment_degree: Option<u32>,
}

impl HeatKernelSpec {
    pub fn torus(d: usize, l: f64) -> Self {
        HeatKernelSpec { d, l, image_terms: 5, cutoff_radius: None, moment_degree: None }
    }

    pub fn with_cutoff(mut self, r: f64) -> Self {
        self.cutoff_radius = Some(r);
        self
    }

    pub fn with_moments(mut self, deg: u32) -> Self {
        self.moment_degree = Some(deg);
        self
    }

    fn images(&self) -> i64 {
        self.image_terms as i64
    }
}

/// Periodic heat kernel `Σ_n (4πt)^{-d/2} exp(-|x+nL|²/4t)`, zero for `t ≤ 0`.
pub fn heat_kernel(spec: &HeatKernelSpec, t: f64, x: &[f64]) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let mut v = 1.0;
    for &xj in x {
        let mut s = 0.0;
        for n in -spec.images()..=spec.images() {
            let y = xj + n as f64 * spec.l;
            s += (-y * y / (4.0 * t)).exp();
        }
        v *= s / (4.0 * PI * t).sqrt();
    }
    v
}

/// `D^k K` for multi-indices over `(t, x_1, …)` of parabolic degree ≤ 2,
/// for the uncut kernel.
pub fn heat_kernel_derivative(spec: &HeatKernelSpec, k: &[u32], t: f64, x: &[f64]) -> Result<f64> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    let deg = 2 * k[0] + k[1..].iter().sum::<u32>();
    if deg > 2 {
        return Err(Error::Invalid("kernel derivatives above parabolic degree 2".into()));
    }
    // One-dimensional factor and its first two x-derivatives.
    let factor = |xj: f64, order: u32| -> f64 {
        let mut s = 0.0;
        for n in -spec.images()..=spec.images() {
            let y = xj + n as f64 * spec.l;
            let e = (-y * y / (4.0 * t)).exp();
            s += match order {
                0 => e,
                1 => -y / (2.0 * t) * e,
                _ => (y * y / (4.0 * t * t) - 1.0 / (2.0 * t)) * e,
            };
        }
        s / (4.0 * PI * t).sqrt()
    };
    if k[0] == 1 {
        // ∂_t K = ΔK
        let mut total = 0.0;
        for j in 0..x.len() {
            let mut v = 1.0;
            for (i, &xi) in x.iter().enumerate() {
                v *= factor(xi, if i == j { 2 } else { 0 });
            }
            total += v;
        }
        return Ok(total);
    }
    Ok(x.iter().enumerate().map(|(i, &xi)| factor(xi, k[i + 1])).product())
}

/// Smooth cutoff: 1 on `[0, 1/2]`, 0 on `[1, ∞)`.
pub fn chi(u: f64) -> f64 {
    if u <= 0.5 {
        1.0
    } else if u >= 1.0 {
        0.0
    } else {
        let s = 2.0 * u - 1.0;
        let a = (-1.0 / (1.0 - s)).exp();
        let b = (-1.0 / s).exp();
        a / (a + b)
    }
}

/// Smooth parabolic radius `(t² + |x|⁴)^{1/4}`.
pub fn parabolic_radius(t: f64, x: &[f64]) -> f64 {
    let x2: f64 = x.iter().map(|v| v * v).sum();
    (t * t + x2 * x2).sqrt().sqrt()
}

/// Parabolic norm `√|t| + Σ|x_i|`.
pub fn parabolic_norm(t: f64, x: &[f64]) -> f64 {
    t.abs().sqrt() + x.iter().map(|v| v.abs()).sum::<f64>()
}

const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// Integral of `g` over the box `lo..hi` by a 4-point Gauss–Legendre
/// product rule.
fn gl_box(lo: &[f64], hi: &[f64], g: &dyn Fn(&[f64]) -> f64) -> f64 {
    let dim = lo.len();
    let mut idx = vec![0usize; dim];
    let mut p = vec![0.0; dim];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for j in 0..dim {
            let (x, wj) = GL4[idx[j]];
            let h = 0.5 * (hi[j] - lo[j]);
            p[j] = lo[j] + h * (x + 1.0);
            w *= wj * h;
        }
        total += w * g(&p);
        let mut j = 0;
        loop {
            if j == dim {
                return total;
            }
            idx[j] += 1;
            if idx[j] < 4 {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Cell integrals `W[l][r] = ∫_{(l-1)dt}^{l·dt} ∫_{cell r} K` of the
/// (optionally cut off and moment-corrected) kernel; `r` is a periodic
/// spatial offset index.
#[derive(Clone, Debug)]
pub struct KernelTable {
    pub grid: Grid,
    pub spec: HeatKernelSpec,
    /// `weights[l-1]` holds lag `l`.
    pub weights: Vec<Vec<f64>>,
    /// Coefficients of the smooth correction bumps, if any.
    pub correction: Vec<f64>,
}

fn offset(idx: usize, n: usize, dx: f64) -> f64 {
    let i = idx as i64;
    let n = n as i64;
    (if i > n / 2 { i - n } else { i }) as f64 * dx
}

/// Exact-in-space, adaptive-in-time cell integral of the periodic kernel.
fn cell_integral_uncut(spec: &HeatKernelSpec, grid: &Grid, lag: usize, x: &[f64]) -> Result<f64> {
    let dx = grid.dx();
    let dt = grid.dt();
    let mass = |tau: f64| -> f64 {
        if tau <= 0.0 {
            return if x.iter().all(|v| v.abs() < 0.5 * dx) { 1.0 } else { 0.0 };
        }
        let s = (2.0 * tau).sqrt();
        let mut v = 1.0;
        for &xj in x {
            let mut acc = 0.0;
            for n in -spec.images()..=spec.images() {
                let c = xj + n as f64 * spec.l;
                acc += normal_cdf((c + 0.5 * dx) / s) - normal_cdf((c - 0.5 * dx) / s);
            }
            v *= acc;
        }
        v
    };
    let (a, b) = ((lag - 1) as f64 * dt, lag as f64 * dt);
    integrate(mass, a, b, QuadOptions { abs_tol: 1e-14 * dt, rel_tol: 1e-10, max_intervals: 400 })
}

fn correction_bumps(d: usize, r: f64, grid: &Grid) -> Vec<(f64, f64, f64)> {
    // (time centre, time half-width, space half-width)
    let r2 = r * r;
    let sw = (0.35 * r).max(3.0 * grid.dx());
    let sw2 = (0.6 * r).max(4.0 * grid.dx());
    let tw = (0.15 * r2).max(3.0 * grid.dt());
    let mut out = vec![
        (0.3 * r2, tw, sw),
        (0.6 * r2, tw, sw),
        (0.45 * r2, tw, sw2),
        (0.75 * r2, 0.5 * tw, sw2),
    ];
    if d > 1 {
        out.push((0.5 * r2, tw, 0.5 * (sw + sw2)));
    }
    out
}

fn bump_value(b: (f64, f64, f64), t: f64, x: &[f64]) -> f64 {
    let (c, tw, sw) = b;
    let mut v = bump((t - c) / tw) / tw;
    for &xj in x {
        v *= bump(xj / sw) / sw;
    }
    v
}

/// Moment exponents `(a, β)` with `2a + |β| ≤ deg` and every `β_j` even;
/// odd moments vanish by symmetry.
fn moment_list(d: usize, deg: u32) -> Vec<(u32, Vec<u32>)> {
    let mut out = Vec::new();
    for a in 0..=deg / 2 {
        let mut beta = vec![0u32; d];
        loop {
            if 2 * a + beta.iter().sum::<u32>() <= deg {
                out.push((a, beta.clone()));
            }
            let mut j = 0;
            loop {
                if j == d {
                    break;
                }
                beta[j] += 2;
                if beta[j] <= deg {
                    break;
                }
                beta[j] = 0;
                j += 1;
            }
            if j == d {
                break;
            }
        }
    }
    out.sort();
    out
}

impl KernelTable {
    pub fn build(spec: &HeatKernelSpec, grid: &Grid) -> Result<Self> {
        if spec.d != grid.d || (spec.l - grid.l).abs() > 1e-12 * grid.l {
            return Err(Error::GridMismatch("kernel spec and grid differ".into()));
        }
        let dt = grid.dt();
        let dx = grid.dx();
        let cells = grid.cells();
        let lags = match spec.cutoff_radius {
            Some(r) => {
                if r > 0.5 * grid.l || r < 4.0 * dx || r * r < 4.0 * dt {
                    return Err(Error::Unresolved(format!("cutoff radius {r} on this grid")));
                }
                ((r * r / dt).ceil() as usize).min(grid.m)
            }
            None => grid.m,
        };
        let weights: Vec<Vec<f64>> = (1..=lags)
            .into_par_iter()
            .map(|lag| -> Result<Vec<f64>> {
                let mut w = vec![0.0; cells];
                for (c, slot) in w.iter_mut().enumerate() {
                    let x: Vec<f64> = grid.spatial_coords(c).iter().map(|&i| offset(i, grid.n, dx)).collect();
                    *slot = match spec.cutoff_radius {
                        None => cell_integral_uncut(spec, grid, lag, &x)?,
                        Some(r) => {
                            let t_lo = (lag - 1) as f64 * dt;
                            let t_hi = lag as f64 * dt;
                            let near: Vec<f64> = x.iter().map(|v| (v.abs() - 0.5 * dx).max(0.0)).collect();
                            let far: Vec<f64> = x.iter().map(|v| v.abs() + 0.5 * dx).collect();
                            if parabolic_radius(t_lo, &near) >= r {
                                0.0
                            } else if parabolic_radius(t_hi, &far) <= 0.5 * r {
                                cell_integral_uncut(spec, grid, lag, &x)?
                            } else {
                                let mut lo = vec![t_lo];
                                let mut hi = vec![t_hi];
                                for &v in &x {
                                    lo.push(v - 0.5 * dx);
                                    hi.push(v + 0.5 * dx);
                                }
                                gl_box(&lo, &hi, &|p: &[f64]| chi(parabolic_radius(p[0], &p[1..]) / r) * heat_kernel(spec, p[0], &p[1..]))
                            }
                        }
                    };
                }
                Ok(w)
            })
            .collect::<Result<_>>()?;
        let mut table = KernelTable { grid: *grid, spec: spec.clone(), weights, correction: Vec::new() };
        if let (Some(deg), Some(r)) = (spec.moment_degree, spec.cutoff_radius) {
            table.correct_moments(deg, r)?;
        } else if spec.moment_degree.is_some() {
            return Err(Error::Invalid("moment correction needs a cutoff radius".into()));
        }
        Ok(table)
    }

    pub fn lags(&self) -> usize {
        self.weights.len()
    }

    /// Discrete moment `Σ W[l][r] (-l·dt)^a Π(-r_j dx)^{β_j}`.
    pub fn moment(&self, a: u32, beta: &[u32]) -> f64 {
        let g = &self.grid;
        let mut s = 0.0;
        for (li, w) in self.weights.iter().enumerate() {
            let tl = -((li + 1) as f64) * g.dt();
            for (c, &v) in w.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let mut m = v * tl.powi(a as i32);
                for (j, i) in g.spatial_coords(c).into_iter().enumerate() {
                    m *= (-offset(i, g.n, g.dx())).powi(beta[j] as i32);
                }
                s += m;
            }
        }
        s
    }

    fn correct_moments(&mut self, deg: u32, r: f64) -> Result<()> {
        let g = self.grid;
        let dt = g.dt();
        let dx = g.dx();
        let bumps = correction_bumps(g.d, r, &g);
        let moments = moment_list(g.d, deg);
        let lags = self.lags();
        let tables: Vec<Vec<Vec<f64>>> = bumps
            .iter()
            .map(|&b| {
                (1..=lags)
                    .map(|lag| {
                        (0..g.cells())
                            .map(|c| {
                                let x: Vec<f64> = g.spatial_coords(c).iter().map(|&i| offset(i, g.n, dx)).collect();
                                let mut lo = vec![(lag - 1) as f64 * dt];
                                let mut hi = vec![lag as f64 * dt];
                                for &v in &x {
                                    lo.push(v - 0.5 * dx);
                                    hi.push(v + 0.5 * dx);
                                }
                                gl_box(&lo, &hi, &|p: &[f64]| bump_value(b, p[0], &p[1..]))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut a = DMatrix::zeros(moments.len(), bumps.len());
        let mut rhs = DVector::zeros(moments.len());
        for (i, (ta, beta)) in moments.iter().enumerate() {
            rhs[i] = self.moment(*ta, beta);
            for (j, t) in tables.iter().enumerate() {
                let tmp = KernelTable { grid: g, spec: self.spec.clone(), weights: t.clone(), correction: vec![] };
                a[(i, j)] = tmp.moment(*ta, beta);
            }
        }
        let tol = 1e-12 * a.amax();
        let coef = a
            .svd(true, true)
            .solve(&rhs, tol)
            .map_err(|e| Error::Quadrature(format!("moment system: {e}")))?;
        for (j, t) in tables.iter().enumerate() {
            for (wl, tl) in self.weights.iter_mut().zip(t) {
                for (w, v) in wl.iter_mut().zip(tl) {
                    *w -= coef[j] * v;
                }
            }
        }
        self.correction = coef.iter().copied().collect();
        Ok(())
    }

    /// Discrete spatial derivative table `D^k W` by periodic central
    /// differences (compact second difference for order 2).
    pub fn derivative(&self, k: &[u32]) -> Result<KernelTable> {
        let g = self.grid;
        if k.len() != g.d + 1 || k[0] != 0 || k[1..].iter().sum::<u32>() > 2 {
            return Err(Error::Invalid("only spatial derivative tables of order ≤ 2".into()));
        }
        let h = g.dx();
        let shift = |c: usize, axis: usize, s: i64| -> usize {
            let mut co = g.spatial_coords(c);
            co[axis] = (co[axis] as i64 + s).rem_euclid(g.n as i64) as usize;
            g.spatial_index(&co)
        };
        let mut cur = self.weights.clone();
        for (axis, &order) in k[1..].iter().enumerate() {
            cur = match order {
                0 => cur,
                1 => cur
                    .iter()
                    .map(|w| (0..w.len()).map(|c| (w[shift(c, axis, 1)] - w[shift(c, axis, -1)]) / (2.0 * h)).collect())
                    .collect(),
                _ => cur
                    .iter()
                    .map(|w| (0..w.len()).map(|c| (w[shift(c, axis, 1)] - 2.0 * w[c] + w[shift(c, axis, -1)]) / (h * h)).collect())
                    .collect(),
            };
        }
        Ok(KernelTable { grid: g, spec: self.spec.clone(), weights: cur, correction: self.correction.clone() })
    }
}

/// Sup of `|K(z)|·‖z‖_s^{d+2-2}` over dyadic shells `2^{-j-1} ≤ ‖z‖_s < 2^{-j}`
/// sampled at the grid nodes, for `j` in `shells`.
pub fn shell_profile(spec: &HeatKernelSpec, g: &Grid, shells: std::ops::Range<i32>) -> Vec<(i32, f64)> {
    let ds = g.d as f64 + 2.0;
    let mut sup = vec![0.0f64; shells.len()];
    for lag in 1..=g.m {
        let t = lag as f64 * g.dt();
        for c in 0..g.cells() {
            let x: Vec<f64> = g.spatial_coords(c).iter().map(|&i| offset(i, g.n, g.dx())).collect();
            let r = parabolic_norm(t, &x);
            let j = (-r.log2()).floor() as i32;
            if shells.contains(&j) {
                let mut v = heat_kernel(spec, t, &x);
                if let Some(rc) = spec.cutoff_radius {
                    v *= chi(parabolic_radius(t, &x) / rc);
                }
                let slot = &mut sup[(j - shells.start) as usize];
                *slot = slot.max(v.abs() * r.powf(ds - 2.0));
            }
        }
    }
    shells.zip(sup).collect()
}

/// `(K ⋆ f)(t_n, ·) = Σ_{l≥1} W[l] ∗ f(t_{n-l}, ·)`: causal in time (zero
/// history before `t = 0`), periodic in space.
pub fn kernel_convolve(f: &Field, table: &KernelTable) -> Result<Field> {
    let g = f.grid;
    if !g.same_shape(&table.grid) {
        return Err(Error::GridMismatch("kernel table built for another grid".into()));
    }
    let fft = SpatialFft::for_grid(&g);
    let what: Vec<Vec<Complex64>> = table.weights.par_iter().map(|w| fft.forward(w)).collect();
    let fhat: Vec<Vec<Complex64>> = (0..=g.m).into_par_iter().map(|n| fft.forward(f.slice(n))).collect();
    let cells = g.cells();
    let slices: Vec<Vec<f64>> = (0..=g.m)
        .into_par_iter()
        .map(|n| {
            let mut acc = vec![Complex64::new(0.0, 0.0); cells];
            for l in 1..=n.min(what.len()) {
                let (wl, fl) = (&what[l - 1], &fhat[n - l]);
                for i in 0..cells {
                    acc[i] += wl[i] * fl[i];
                }
            }
            fft.inverse_real(acc)
        })
        .collect();
    Ok(Field { grid: g, values: slices.concat(), seed_lineage: f.seed_lineage.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mode_decays_exactly() {
        let g = Grid::new(1, 32, 2.0 * PI, 1.0, 100).unwrap();
        let u0: Vec<f64> = (0..32).map(|i| (i as f64 * g.dx()).cos()).collect();
        let u = duhamel_solve(&Field::zeros(g), &u0).unwrap();
        for n in [0, 37, 100] {
            let t = n as f64 * g.dt();
            for (i, v) in u.slice(n).iter().enumerate() {
                assert!((v - (-t).exp() * (i as f64 * g.dx()).cos()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn constant_forcing_grows_linearly() {
        let g = Grid::new(2, 8, 1.0, 0.5, 10).unwrap();
        let u = duhamel_solve(&Field::constant(g, 3.0), &vec![0.0; 64]).unwrap();
        for n in 0..=10 {
            let t = n as f64 * g.dt();
            assert!(u.slice(n).iter().all(|v| (v - 3.0 * t).abs() < 1e-12));
        }
    }

    #[test]
    fn cos_forcing_matches_mode_ode() {
        // u' = -k²u + cos(kx) for constant-in-time forcing: u = (1-e^{-k²t})/k² cos(kx)
        let g = Grid::new(1, 16, 2.0 * PI, 0.7, 13).unwrap();
        let k = 3.0;
        let f = Field::from_fn(g, |_, x| (k * x[0]).cos());
        let u = duhamel_solve(&f, &vec![0.0; 16]).unwrap();
        let t = 0.7;
        for (i, v) in u.slice(13).iter().enumerate() {
            let want = (1.0 - (-k * k * t).exp()) / (k * k) * (k * i as f64 * g.dx()).cos();
            assert!((v - want).abs() < 1e-10);
        }
    }

    #[test]
    fn semigroup_split_agrees() {
        let g = Grid::new(1, 32, 1.0, 0.2, 40).unwrap();
        let f = crate::noise::sample_white_noise(&g, 9);
        let u0: Vec<f64> = (0..32).map(|i| (i as f64).sin()).collect();
        let full = duhamel_segment(&f, &u0, 0, 40).unwrap();
        let a = duhamel_segment(&f, &u0, 0, 17).unwrap();
        let b = duhamel_segment(&f, a.last().unwrap(), 17, 40).unwrap();
        let scale = full[40].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in full[40].iter().zip(b.last().unwrap()) {
            assert!((x - y).abs() < 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn kernel_cell_integrals_have_unit_spatial_mass() {
        let g = Grid::new(1, 32, 1.0, 0.1, 20).unwrap();
        let t = KernelTable::build(&HeatKernelSpec::torus(1, 1.0), &g).unwrap();
        for w in &t.weights {
            let s: f64 = w.iter().sum();
            assert!((s - g.dt()).abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn impulse_response_is_kernel() {
        let g = Grid::new(1, 32, 1.0, 0.05, 20).unwrap();
        let spec = HeatKernelSpec::torus(1, 1.0);
        let table = KernelTable::build(&spec, &g).unwrap();
        let mut f = Field::zeros(g);
        f.values[2 * 32 + 5] = 1.0 / g.cell_volume();
        let u = kernel_convolve(&f, &table).unwrap();
        for n in 3..=20 {
            for i in 0..32 {
                let w = table.weights[n - 3][(i + 32 - 5) % 32] / g.cell_volume();
                assert!((u.slice(n)[i] - w).abs() < 1e-9 * (1.0 + w.abs()));
            }
        }
        // far from the origin the cell average is close to the point value
        let t = 10.5 * g.dt();
        let v = table.weights[10][3] / g.cell_volume();
        assert!((v / heat_kernel(&spec, t, &[3.0 * g.dx()]) - 1.0).abs() < 0.02);
    }

    #[test]
    fn derivative_formula_matches_finite_differences() {
        let spec = HeatKernelSpec::torus(2, 1.0);
        let (t, x) = (0.01, [0.05, -0.03]);
        let h = 1e-5;
        let dxk = heat_kernel_derivative(&spec, &[0, 1, 0], t, &x).unwrap();
        let fd = (heat_kernel(&spec, t, &[x[0] + h, x[1]]) - heat_kernel(&spec, t, &[x[0] - h, x[1]])) / (2.0 * h);
        assert!((dxk - fd).abs() < 1e-5 * fd.abs());
        let dtk = heat_kernel_derivative(&spec, &[1, 0, 0], t, &x).unwrap();
        let fd = (heat_kernel(&spec, t + h * 0.01, &x) - heat_kernel(&spec, t - h * 0.01, &x)) / (2.0 * h * 0.01);
        assert!((dtk - fd).abs() < 1e-5 * fd.abs());
    }

    #[test]
    fn moment_list_degree_two() {
        assert_eq!(moment_list(1, 2), vec![(0, vec![0]), (0, vec![2]), (1, vec![0])]);
        assert_eq!(moment_list(2, 2).len(), 4);
    }
}
