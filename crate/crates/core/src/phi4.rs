//! Φ⁴ time stepping in d = 1, 2: naive, Wick-renormalised and
//! remainder (`φ = Z + v`) formulations.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::heat::{duhamel_solve_with_mass, Propagator};
use crate::noise::{mollify, sample_white_noise, Mollifier, Profile};
use crate::wick::{hermite, WickConstants};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    Naive,
    Renormalized,
    Remainder,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Forcing {
    /// Mollified white noise of the problem seed.
    WhiteNoise,
    Zero,
    /// Used as `ξ_δ` directly.
    Given(Field),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phi4Problem {
    pub grid: Grid,
    pub mass_sq: f64,
    pub mollifier: Mollifier,
    pub seed: u64,
    pub formulation: Formulation,
    pub forcing: Forcing,
    pub u0: Option<Vec<f64>>,
    pub blowup_cap: f64,
    pub dealias: bool,
}

impl Phi4Problem {
    /// Defaults: `m² = 0`, spectral cutoff at `δ = 2·max(dx, √dt)`, zero
    /// initial data, cap `1e6`, 2/3 de-aliasing.
    pub fn new(grid: Grid, seed: u64, formulation: Formulation) -> Result<Self> {
        if !(1..=2).contains(&grid.d) {
            return Err(Error::Invalid("Φ⁴ solves are implemented for d = 1, 2".into()));
        }
        let delta = 2.0 * grid.dx().max(grid.dt().sqrt());
        Ok(Phi4Problem {
            grid,
            mass_sq: 0.0,
            mollifier: Mollifier::new(Profile::SpectralCutoff, delta),
            seed,
            formulation,
            forcing: Forcing::WhiteNoise,
            u0: None,
            blowup_cap: 1e6,
            dealias: true,
        })
    }

    pub fn with_mollifier(mut self, m: Mollifier) -> Self {
        self.mollifier = m;
        self
    }

    pub fn with_forcing(mut self, f: Forcing) -> Self {
        self.forcing = f;
        self
    }

    pub fn with_initial(mut self, u0: Vec<f64>) -> Self {
        self.u0 = Some(u0);
        self
    }

    pub fn with_mass(mut self, mass_sq: f64) -> Self {
        self.mass_sq = mass_sq;
        self
    }

    /// `ξ_δ` on the grid.
    pub fn noise(&self) -> Result<Field> {
        match &self.forcing {
            Forcing::WhiteNoise => mollify(&sample_white_noise(&self.grid, self.seed), &self.mollifier),
            Forcing::Zero => Ok(Field::zeros(self.grid)),
            Forcing::Given(f) => {
                if !f.grid.same_shape(&self.grid) {
                    return Err(Error::GridMismatch("forcing grid differs from problem grid".into()));
                }
                Ok(f.clone())
            }
        }
    }

    fn initial(&self) -> Result<Vec<f64>> {
        match &self.u0 {
            Some(u) if u.len() == self.grid.cells() => Ok(u.clone()),
            Some(_) => Err(Error::GridMismatch("initial data size".into())),
            None => Ok(vec![0.0; self.grid.cells()]),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub t: Vec<f64>,
    pub sup: Vec<f64>,
    pub l2: Vec<f64>,
    pub energy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    /// Truncated at the last finite slice when blow-up is flagged.
    pub field: Field,
    pub blowup_time: Option<f64>,
    pub diagnostics: Diagnostics,
    /// `v` for the remainder formulation.
    pub remainder: Option<Field>,
}

struct Stepper {
    prop: Propagator,
    mask: Vec<bool>,
    k2: Vec<f64>,
    grid: Grid,
    mass_sq: f64,
}

impl Stepper {
    fn new(p: &Phi4Problem) -> Self {
        let prop = Propagator::new(&p.grid, p.mass_sq);
        let mask = if p.dealias { prop.fft.dealias_mask() } else { vec![true; p.grid.cells()] };
        let k2 = prop.fft.k_squared(p.grid.l);
        Stepper { prop, mask, k2, grid: p.grid, mass_sq: p.mass_sq }
    }

    fn project(&self, h: &mut [Complex64]) {
        for (v, &keep) in h.iter_mut().zip(&self.mask) {
            if !keep {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// `∫ ½|∇u|² + ½m²u² + ¼u⁴`.
    fn energy(&self, u: &[f64], uh: &[Complex64]) -> f64 {
        let g = &self.grid;
        let vol = g.dx().powi(g.d as i32);
        let cells = g.cells() as f64;
        let grad: f64 = uh.iter().zip(&self.k2).map(|(c, k)| k * c.norm_sqr()).sum::<f64>() * vol / cells;
        let pot: f64 = u.iter().map(|v| 0.5 * self.mass_sq * v * v + 0.25 * v.powi(4)).sum::<f64>() * vol;
        0.5 * grad + pot
    }

    /// Steps `û ← e^{-λdt}û + φ·(N̂(u_n, n) + ξ̂_n)`.
    fn run(
        &self,
        u0: &[f64],
        noise: &Field,
        cap: f64,
        mut nonlin: impl FnMut(usize, &[f64], &[Complex64]) -> Vec<Complex64>,
    ) -> (Vec<f64>, Option<f64>, Diagnostics) {
        let g = self.grid;
        let fft = &self.prop.fft;
        let mut uh = fft.forward(u0);
        let mut u = u0.to_vec();
        let mut out = Vec::with_capacity(g.len());
        let mut diag = Diagnostics::default();
        let vol = g.dx().powi(g.d as i32);
        let record = |n: usize, u: &[f64], uh: &[Complex64], out: &mut Vec<f64>, diag: &mut Diagnostics| {
            out.extend_from_slice(u);
            diag.t.push(n as f64 * g.dt());
            diag.sup.push(u.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            diag.l2.push((u.iter().map(|v| v * v).sum::<f64>() * vol).sqrt());
            diag.energy.push(self.energy(u, uh));
        };
        record(0, &u, &uh, &mut out, &mut diag);
        for n in 0..g.m {
            let mut f = nonlin(n, &u, &uh);
            let xh = fft.forward(noise.slice(n));
            for (a, b) in f.iter_mut().zip(&xh) {
                *a += b;
            }
            self.prop.step(&mut uh, &f);
            u = fft.inverse_real(uh.clone());
            let sup = u.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
            if sup > cap {
                return (out, Some((n + 1) as f64 * g.dt()), diag);
            }
            record(n + 1, &u, &uh, &mut out, &mut diag);
        }
        (out, None, diag)
    }

    /// `-P[u³] + 3c·û`.
    fn cubic(&self, u: &[f64], uh: &[Complex64], c: f64) -> Vec<Complex64> {
        let cube: Vec<f64> = u.iter().map(|v| v * v * v).collect();
        let mut h = self.prop.fft.forward(&cube);
        self.project(&mut h);
        h.iter().zip(uh).map(|(a, b)| -a + b * (3.0 * c)).collect()
    }
}

fn finish(p: &Phi4Problem, values: Vec<f64>, blowup: Option<f64>, lineage: Vec<(u64, u64)>) -> Result<Field> {
    let cells = p.grid.cells();
    let slices = values.len() / cells;
    let grid = if let Some(t) = blowup {
        if slices < 2 {
            return Err(Error::Blowup(t));
        }
        Grid::new(p.grid.d, p.grid.n, p.grid.l, (slices - 1) as f64 * p.grid.dt(), slices - 1)?
    } else {
        p.grid
    };
    Ok(Field { grid, values, seed_lineage: lineage })
}

fn lineage(p: &Phi4Problem, noise: &Field) -> Vec<(u64, u64)> {
    match p.forcing {
        Forcing::WhiteNoise => noise.seed_lineage.clone(),
        _ => Vec::new(),
    }
}

fn check_formulation(p: &Phi4Problem, f: Formulation) -> Result<()> {
    if p.formulation != f {
        return Err(Error::Invalid(format!("problem formulation is {:?}, solver expects {f:?}", p.formulation)));
    }
    Ok(())
}

fn solve_cubic(p: &Phi4Problem, c: f64) -> Result<SolveResult> {
    let noise = p.noise()?;
    let st = Stepper::new(p);
    let (values, blowup, diagnostics) = st.run(&p.initial()?, &noise, p.blowup_cap, |_, u, uh| st.cubic(u, uh, c));
    let field = finish(p, values, blowup, lineage(p, &noise))?;
    Ok(SolveResult { field, blowup_time: blowup, diagnostics, remainder: None })
}

/// `∂φ = Δφ - φ³ - m²φ + ξ_δ`.
pub fn solve_naive(p: &Phi4Problem) -> Result<SolveResult> {
    check_formulation(p, Formulation::Naive)?;
    solve_cubic(p, 0.0)
}

/// `∂φ = Δφ - (φ³ - 3C_δφ) - m²φ + ξ_δ`.
pub fn solve_renormalized(p: &Phi4Problem, c: &WickConstants) -> Result<SolveResult> {
    check_formulation(p, Formulation::Renormalized)?;
    if c.d != p.grid.d {
        return Err(Error::Invalid("Wick constants computed for another dimension".into()));
    }
    solve_cubic(p, c.c_delta)
}

/// `[<1>_δ, <2>_δ, <3>_δ]` = `H_n(Z_δ, √C_δ)` with `Z_δ` the massive
/// stochastic convolution of the problem noise.
pub fn wick_fields(p: &Phi4Problem, c: &WickConstants) -> Result<[Field; 3]> {
    let noise = p.noise()?;
    let z = duhamel_solve_with_mass(&noise, &vec![0.0; p.grid.cells()], p.mass_sq)?;
    let s = c.c_delta.sqrt();
    Ok([z.clone(), z.map(|v| hermite(2, v, s)), z.map(|v| hermite(3, v, s))])
}

/// `∂v = Δv - m²v - (v³ + 3<1>v² + 3<2>v + <3>)`, `v(0) = u0`; returns
/// `φ = <1> + v`. With de-aliasing on, each Wick field is first projected
/// onto the retained band.
pub fn solve_remainder(p: &Phi4Problem, wick: &[Field; 3]) -> Result<SolveResult> {
    check_formulation(p, Formulation::Remainder)?;
    for w in wick {
        if !w.grid.same_shape(&p.grid) {
            return Err(Error::GridMismatch("Wick field grid differs from problem grid".into()));
        }
    }
    let st = Stepper::new(p);
    let fft = &st.prop.fft;
    let cells = p.grid.cells();
    let proj = |f: &Field| -> Field {
        if !p.dealias {
            return f.clone();
        }
        let mut values = Vec::with_capacity(f.values.len());
        for n in 0..=p.grid.m {
            let mut h = fft.forward(f.slice(n));
            st.project(&mut h);
            values.extend(fft.inverse_real(h));
        }
        Field { grid: f.grid, values, seed_lineage: f.seed_lineage.clone() }
    };
    let w: Vec<Field> = wick.iter().map(proj).collect();
    let zero = Field::zeros(p.grid);
    let (values, blowup, diagnostics) = st.run(&p.initial()?, &zero, p.blowup_cap, |n, v, _| {
        let (w1, w2, w3) = (w[0].slice(n), w[1].slice(n), w[2].slice(n));
        let t: Vec<f64> = (0..cells).map(|i| v[i] * v[i] * v[i] + 3.0 * w1[i] * v[i] * v[i] + 3.0 * w2[i] * v[i] + w3[i]).collect();
        let mut h = fft.forward(&t);
        st.project(&mut h);
        h.iter().map(|a| -a).collect()
    });
    let v = finish(p, values, blowup, wick[0].seed_lineage.clone())?;
    let phi_values: Vec<f64> = v.values.iter().zip(&wick[0].values).map(|(a, b)| a + b).collect();
    let field = Field { grid: v.grid, values: phi_values, seed_lineage: wick[0].seed_lineage.clone() };
    Ok(SolveResult { field, blowup_time: blowup, diagnostics, remainder: Some(v) })
}

/// Relative grid-L² distance `‖a - b‖/‖b‖` at slice `n`.
pub fn relative_l2(a: &Field, b: &Field, n: usize) -> f64 {
    let (x, y) = (a.slice(n), b.slice(n));
    let num: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
    let den: f64 = y.iter().map(|q| q * q).sum();
    (num / den).sqrt()
}

/// Grid `H^{-1}` norm `(Σ_k |û_k|²/(1 + k²))^{1/2}` of slice `n`, scaled to
/// agree with the L² norm on constants.
pub fn h_minus_one(f: &Field, n: usize) -> f64 {
    let g = f.grid;
    let fft = crate::spectral::SpatialFft::for_grid(&g);
    let h = fft.forward(f.slice(n));
    let k2 = fft.k_squared(g.l);
    let s: f64 = h.iter().zip(&k2).map(|(c, k)| c.norm_sqr() / (1.0 + k)).sum();
    (s * g.dx().powi(g.d as i32) / g.cells() as f64).sqrt()
}
