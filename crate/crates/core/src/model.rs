//! Grid realizations of models, modelled distributions, reconstruction,
//! the integration map `𝒦_γ` and the abstract Φ⁴ fixed point.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use crate::algebra::group::GroupElement;
use crate::algebra::renorm::RenormMap;
use crate::algebra::symbol::trees::t1;
use crate::algebra::{RegularityStructure, Symbol, Vector};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::heat::{duhamel_solve_with_mass, kernel_convolve, parabolic_norm, KernelTable};
use crate::noise::unit_weights;
use crate::rng::{derive_seed, stream_id};
use crate::spectral::SpatialFft;
use crate::wick::WickConstants;

/// Kernel used for abstract integration and for realizing `ℐ[Ξ]`.
#[derive(Clone, Debug)]
pub enum IntegrationKernel {
    /// Truncated, possibly moment-corrected kernel table.
    Table(KernelTable),
    /// Full semigroup `e^{t(Δ - m²)}`, the same integrator as the Φ⁴ solvers.
    Heat { mass_sq: f64 },
}

fn spectral_derivative(f: &Field, k: &[u32]) -> Field {
    if k.iter().all(|&v| v == 0) {
        return f.clone();
    }
    let g = f.grid;
    let fft = SpatialFft::for_grid(&g);
    let w = std::f64::consts::TAU / g.l;
    let mult: Vec<Complex64> = (0..g.cells())
        .map(|i| {
            let mode = fft.mode(i);
            let mut c = Complex64::new(1.0, 0.0);
            for (j, &kj) in k.iter().enumerate() {
                if kj % 2 == 1 && g.n % 2 == 0 && mode[j] == -(g.n as i64) / 2 {
                    return Complex64::new(0.0, 0.0);
                }
                c *= Complex64::new(0.0, w * mode[j] as f64).powu(kj);
            }
            c
        })
        .collect();
    let mut values = Vec::with_capacity(f.values.len());
    for n in 0..=g.m {
        let h: Vec<Complex64> = fft.forward(f.slice(n)).iter().zip(&mult).map(|(a, b)| a * b).collect();
        values.extend(fft.inverse_real(h));
    }
    Field { grid: g, values, seed_lineage: f.seed_lineage.clone() }
}

impl IntegrationKernel {
    /// `D^k K ⋆ f` for a spatial multi-index `k` of order ≤ 2.
    pub fn convolve(&self, f: &Field, k: &[u32]) -> Result<Field> {
        if k.iter().sum::<u32>() > 2 {
            return Err(Error::Unresolved(format!("kernel derivative of order {:?} not tabulated", k)));
        }
        match self {
            IntegrationKernel::Table(t) => {
                let mut full = vec![0];
                full.extend_from_slice(k);
                let dt = if k.iter().all(|&v| v == 0) { t.clone() } else { t.derivative(&full)? };
                kernel_convolve(f, &dt)
            }
            IntegrationKernel::Heat { mass_sq } => {
                let z = duhamel_solve_with_mass(f, &vec![0.0; f.grid.cells()], *mass_sq)?;
                Ok(spectral_derivative(&z, k))
            }
        }
    }
}

/// A space-time grid node: time index and spatial indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub ti: usize,
    pub x: Vec<usize>,
}

impl Node {
    pub fn new(ti: usize, x: Vec<usize>) -> Self {
        Node { ti, x }
    }
}

fn signed_offset(a: usize, b: usize, n: usize) -> i64 {
    let d = (b as i64 - a as i64).rem_euclid(n as i64);
    if d > n as i64 / 2 {
        d - n as i64
    } else {
        d
    }
}

/// `(b - a)` as real coordinates, minimal image in space.
fn displacement(g: &Grid, a: &Node, b: &Node) -> Vec<f64> {
    let mut h = vec![(b.ti as f64 - a.ti as f64) * g.dt()];
    h.extend(a.x.iter().zip(&b.x).map(|(&p, &q)| signed_offset(p, q, g.n) as f64 * g.dx()));
    h
}

fn monomial(h: &[f64], k: &[u32]) -> f64 {
    h.iter().zip(k).map(|(v, &e)| v.powi(e as i32)).product()
}

fn factorial(k: &[u32]) -> f64 {
    k.iter().map(|&e| (1..=e).product::<u32>() as f64).product()
}

/// `τ = X^m · τ₀` with `τ₀` free of polynomial factors.
pub fn split_symbol(tau: &Symbol, d: usize) -> (Vec<u32>, Symbol) {
    match tau {
        Symbol::Poly(k) => (k.clone(), Symbol::unit(d)),
        Symbol::Product(ch) => {
            let mut m = vec![0; d + 1];
            let mut rest = Vec::new();
            for c in ch {
                match c {
                    Symbol::Poly(k) => m.iter_mut().zip(k).for_each(|(a, b)| *a += b),
                    o => rest.push(o.clone()),
                }
            }
            (m, Symbol::product(d, rest))
        }
        s => (vec![0; d + 1], s.clone()),
    }
}

/// Model whose non-polynomial symbols are realized by `z`-independent
/// fields; `Π_z(X^m τ₀)(z̄) = (z̄ - z)^m Πτ₀(z̄)` and `Γ_{xy}` is the
/// translation by `y - x`.
#[derive(Clone, Debug)]
pub struct GridModel {
    pub structure: RegularityStructure,
    pub grid: Grid,
    pub kernel: IntegrationKernel,
    pub fields: BTreeMap<Symbol, Field>,
    pub kappa: f64,
}

fn check_supported(structure: &RegularityStructure) -> Result<()> {
    if structure.dimension == 3 && structure.contains(&Symbol::Xi) {
        return Err(Error::Invalid("Φ⁴₃ grid models are out of scope".into()));
    }
    if structure.planted.iter().any(|p| structure.order_f64(p) >= 0.0) {
        return Err(Error::Invalid("planted symbols of positive order need recentred realizations".into()));
    }
    if structure.planted.iter().any(|p| *p != t1()) {
        return Err(Error::Invalid(format!(
            "grid models support the polynomial structure and Φ⁴ below the first recentred integral; found planted {}",
            structure.planted.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(())
}

fn realize(tau0: &Symbol, xi: &Field, kernel: &IntegrationKernel, cache: &mut BTreeMap<Symbol, Field>) -> Result<Field> {
    if let Some(f) = cache.get(tau0) {
        return Ok(f.clone());
    }
    let f = match tau0 {
        Symbol::Xi => xi.clone(),
        Symbol::Integ(c) if **c == Symbol::Xi => kernel.convolve(xi, &vec![0; xi.grid.d])?,
        Symbol::Product(ch) => {
            let mut acc: Option<Field> = None;
            for c in ch {
                let fc = realize(c, xi, kernel, cache)?;
                acc = Some(match acc {
                    None => fc,
                    Some(a) => Field { grid: a.grid, values: a.values.iter().zip(&fc.values).map(|(p, q)| p * q).collect(), seed_lineage: a.seed_lineage },
                });
            }
            acc.ok_or_else(|| Error::Invalid("empty product".into()))?
        }
        s => return Err(Error::Invalid(format!("cannot realize {s}"))),
    };
    cache.insert(tau0.clone(), f.clone());
    Ok(f)
}

/// Canonical (unrenormalized) model built from a smooth noise `ξ_δ`.
pub fn canonical_model(xi_delta: &Field, structure: &RegularityStructure, kernel: IntegrationKernel) -> Result<GridModel> {
    check_supported(structure)?;
    let g = xi_delta.grid;
    if structure.dimension != g.d {
        return Err(Error::GridMismatch("structure dimension differs from the grid".into()));
    }
    let mut cache = BTreeMap::new();
    let mut fields = BTreeMap::new();
    for (tau, _) in &structure.symbols {
        let (_, tau0) = split_symbol(tau, g.d);
        if tau0.is_unit() || fields.contains_key(&tau0) {
            continue;
        }
        fields.insert(tau0.clone(), realize(&tau0, xi_delta, &kernel, &mut cache)?);
    }
    Ok(GridModel { structure: structure.clone(), grid: g, kernel, fields, kappa: structure.kappa_f64() })
}

/// `Π̂τ = Π(Mτ)` with the constants of `c` substituted.
pub fn renormalized_model(
    xi_delta: &Field,
    structure: &RegularityStructure,
    m: &RenormMap,
    c: &WickConstants,
    kernel: IntegrationKernel,
) -> Result<GridModel> {
    let base = canonical_model(xi_delta, structure, kernel)?;
    let numeric = m.numeric(c.c_delta, c.c_tilde_delta);
    let mut fields = base.fields.clone();
    for (tau0, f) in fields.iter_mut() {
        if let Some(v) = numeric.get(tau0) {
            let mut acc = vec![0.0; f.values.len()];
            for (s, k) in v.iter() {
                if s.is_unit() {
                    acc.iter_mut().for_each(|a| *a += k);
                } else {
                    let src = base.fields.get(s).ok_or_else(|| Error::UnknownSymbol(s.to_string()))?;
                    acc.iter_mut().zip(&src.values).for_each(|(a, b)| *a += k * b);
                }
            }
            f.values = acc;
        }
    }
    Ok(GridModel { fields, ..base })
}

impl GridModel {
    pub fn order(&self, tau: &Symbol) -> f64 {
        tau.order(self.grid.d).to_f64(self.kappa)
    }

    /// `Π τ₀` at a flat grid index; 1 for the unit.
    fn base_value(&self, tau0: &Symbol, flat: usize) -> Result<f64> {
        if tau0.is_unit() {
            return Ok(1.0);
        }
        self.fields.get(tau0).map(|f| f.values[flat]).ok_or_else(|| Error::UnknownSymbol(tau0.to_string()))
    }

    fn flat(&self, z: &Node) -> usize {
        z.ti * self.grid.cells() + self.grid.spatial_index(&z.x)
    }

    /// `(Π_z τ)(z̄)`.
    pub fn pi(&self, tau: &Symbol, z: &Node, zbar: &Node) -> Result<f64> {
        let (m, tau0) = split_symbol(tau, self.grid.d);
        let h = displacement(&self.grid, z, zbar);
        Ok(monomial(&h, &m) * self.base_value(&tau0, self.flat(zbar))?)
    }

    /// `Γ_{xy}`, the translation by `y - x`.
    pub fn gamma_xy(&self, x: &Node, y: &Node) -> GroupElement<f64> {
        GroupElement::translation(displacement(&self.grid, x, y))
    }

    /// Largest `|Π_y τ(z̄) - (Π_x Γ_{xy} τ)(z̄)|` over the given triples and
    /// every symbol of the structure.
    pub fn compatibility_defect(&self, triples: &[(Node, Node, Node)]) -> Result<f64> {
        let mut worst = 0.0f64;
        for (x, y, zb) in triples {
            let g = self.gamma_xy(x, y);
            for (tau, _) in &self.structure.symbols {
                let lhs = self.pi(tau, y, zb)?;
                let v = g.apply(tau, &self.structure)?;
                let mut rhs = 0.0;
                for (s, c) in v.iter() {
                    rhs += c * self.pi(s, x, zb)?;
                }
                worst = worst.max((lhs - rhs).abs());
            }
        }
        Ok(worst)
    }

    /// `Σ w_t(o_t) Π_j w_x(o_j) · (Π_z τ)(z + o)` over tensor weights.
    fn local_sum(&self, tau: &Symbol, z: &Node, wt: &[(i64, f64)], wx: &[(i64, f64)]) -> Result<f64> {
        let g = &self.grid;
        let (m, tau0) = split_symbol(tau, g.d);
        let cells = g.cells();
        let d = g.d;
        let mut total = 0.0;
        let mut idx = vec![0usize; d];
        for &(ot, w0) in wt {
            let ti = z.ti as i64 + ot;
            if ti < 0 || ti as usize > g.m {
                return Err(Error::Invalid("local pairing leaves the time interval".into()));
            }
            let tpow = (ot as f64 * g.dt()).powi(m[0] as i32);
            'odo: loop {
                let mut w = w0 * tpow;
                let mut flat = 0usize;
                for j in 0..d {
                    let (o, wj) = wx[idx[j]];
                    w *= wj * (o as f64 * g.dx()).powi(m[j + 1] as i32);
                    flat = flat * g.n + (z.x[j] as i64 + o).rem_euclid(g.n as i64) as usize;
                }
                if w != 0.0 {
                    total += w * self.base_value(&tau0, ti as usize * cells + flat)?;
                }
                for j in (0..d).rev() {
                    idx[j] += 1;
                    if idx[j] < wx.len() {
                        continue 'odo;
                    }
                    idx[j] = 0;
                }
                break;
            }
        }
        Ok(total)
    }

    /// `(Π_x τ)(S^λ_x η)` with the unit-mass bump.
    pub fn pair_at(&self, tau: &Symbol, x: &Node, lambda: f64) -> Result<f64> {
        let g = &self.grid;
        self.local_sum(tau, x, &unit_weights(0.0, lambda * lambda, g.dt()), &unit_weights(0.0, lambda, g.dx()))
    }

    /// Fitted exponent and constant of `sup_x |Π_x τ(S^λ_x η)|` over
    /// `λ = 2^{-k}`, `k ∈ levels`, using `points` evenly spread base points.
    pub fn bound_fit(&self, tau: &Symbol, levels: &[i32], points: usize) -> Result<(f64, f64)> {
        let mut stats = Vec::new();
        for &k in levels {
            let lambda = 2f64.powi(-k);
            let mut sup = 0.0f64;
            for x in spread_nodes(&self.grid, lambda, points)? {
                sup = sup.max(self.pair_at(tau, &x, lambda)?.abs());
            }
            stats.push((k, sup));
        }
        Ok(power_fit(&stats))
    }
}

/// `symbol,fitted_exponent,constant` rows.
pub fn bound_fit_csv(rows: &[(Symbol, f64, f64)]) -> String {
    let mut out = String::from("symbol,fitted_exponent,constant\n");
    for (s, e, c) in rows {
        out.push_str(&format!("\"{s}\",{e},{c}\n"));
    }
    out
}

/// Slope and prefactor of `log₂ s = log₂ c + α log₂ λ`.
pub fn power_fit(stats: &[(i32, f64)]) -> (f64, f64) {
    let n = stats.len() as f64;
    let xs: Vec<f64> = stats.iter().map(|p| -(p.0 as f64)).collect();
    let ys: Vec<f64> = stats.iter().map(|p| p.1.max(f64::MIN_POSITIVE).log2()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = xs.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, 2f64.powf(my - slope * mx))
}

/// Base points spread over the nodes whose `λ`-neighbourhood stays inside
/// the time interval.
fn spread_nodes(g: &Grid, lambda: f64, count: usize) -> Result<Vec<Node>> {
    let reach = (lambda * lambda / g.dt()).ceil() as usize;
    if lambda < 4.0 * g.dx() * (1.0 - 1e-9) || lambda * lambda < 4.0 * g.dt() * (1.0 - 1e-9) {
        return Err(Error::Unresolved(format!("lambda {lambda} spans fewer than 4 cells")));
    }
    if 2 * reach > g.m {
        return Err(Error::Invalid(format!("lambda {lambda} too large for the time interval")));
    }
    let times = g.m + 1 - 2 * reach;
    let total = times * g.cells();
    let step = (total / count.max(1)).max(1);
    Ok((0..total)
        .step_by(step)
        .take(count)
        .map(|i| Node::new(reach + i / g.cells(), g.spatial_coords((i % g.cells()).wrapping_mul(7919) % g.cells())))
        .collect())
}

/// Coefficient fields of a modelled distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelledField {
    pub gamma: f64,
    /// Lowest order present.
    pub alpha: f64,
    pub coeffs: BTreeMap<Symbol, Field>,
}

impl ModelledField {
    pub fn new(model: &GridModel, gamma: f64, coeffs: BTreeMap<Symbol, Field>) -> Result<Self> {
        let mut alpha = gamma;
        for (s, f) in &coeffs {
            if !model.structure.contains(s) {
                return Err(Error::UnknownSymbol(s.to_string()));
            }
            if !f.grid.same_shape(&model.grid) {
                return Err(Error::GridMismatch(format!("coefficient of {s}")));
            }
            let o = model.order(s);
            if o >= gamma {
                return Err(Error::Invalid(format!("symbol {s} of order {o} not below gamma {gamma}")));
            }
            alpha = alpha.min(o);
        }
        Ok(ModelledField { gamma, alpha, coeffs })
    }

    /// Coefficients given by `f(τ, t, x)` for every symbol of order `< γ`.
    pub fn from_fn(model: &GridModel, gamma: f64, f: impl Fn(&Symbol, f64, &[f64]) -> f64) -> Result<Self> {
        let coeffs = model
            .structure
            .symbols
            .iter()
            .filter(|(s, _)| model.order(s) < gamma)
            .map(|(s, _)| (s.clone(), Field::from_fn(model.grid, |t, x| f(s, t, x))))
            .collect();
        ModelledField::new(model, gamma, coeffs)
    }

    /// Lift of a smooth periodic `f`: `F_{X^k} = D^k f / k!` for spatial
    /// `k` with `|k| < γ`, derivatives taken spectrally.
    pub fn lift(model: &GridModel, f: &Field, gamma: f64) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        for (s, _) in &model.structure.symbols {
            if let Symbol::Poly(k) = s {
                if model.order(s) >= gamma {
                    continue;
                }
                if k[0] > 0 || k[1..].iter().sum::<u32>() > 2 {
                    return Err(Error::Unresolved(format!("lift needs the derivative {k:?}")));
                }
                let mut df = spectral_derivative(f, &k[1..]);
                let kf = factorial(k);
                df.values.iter_mut().for_each(|v| *v /= kf);
                coeffs.insert(s.clone(), df);
            }
        }
        ModelledField::new(model, gamma, coeffs)
    }

    pub fn coeff(&self, s: &Symbol, flat: usize) -> f64 {
        self.coeffs.get(s).map_or(0.0, |f| f.values[flat])
    }

    /// `F(z)` as a vector in `T`.
    pub fn at(&self, model: &GridModel, z: &Node) -> Vector<f64> {
        let flat = model.flat(z);
        let mut v = Vector::zero();
        for (s, f) in &self.coeffs {
            v.add_term(s.clone(), f.values[flat]);
        }
        v
    }

    pub fn scale(&self, a: f64) -> ModelledField {
        let coeffs = self.coeffs.iter().map(|(s, f)| (s.clone(), f.map(|v| a * v))).collect();
        ModelledField { coeffs, ..self.clone() }
    }

    /// Writes one RSF1 file per coefficient and `manifest.csv`
    /// (`symbol,order,file`).
    pub fn write_dir(&self, model: &GridModel, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = format!("# gamma={}\nsymbol,order,file\n", self.gamma);
        for (i, (s, f)) in self.coeffs.iter().enumerate() {
            let name = format!("coeff_{i:03}.rsf1");
            f.write_rsf1(BufWriter::new(File::create(dir.join(&name))?))?;
            manifest.push_str(&format!("\"{s}\",{},{name}\n", model.order(s)));
        }
        std::fs::write(dir.join("manifest.csv"), manifest)?;
        Ok(())
    }

    pub fn read_dir(model: &GridModel, dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("manifest.csv"))?;
        let mut lines = text.lines();
        let gamma: f64 = lines
            .next()
            .and_then(|l| l.strip_prefix("# gamma="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format("manifest.csv: missing gamma line".into()))?;
        let mut coeffs = BTreeMap::new();
        for line in lines.skip(1).filter(|l| !l.trim().is_empty()) {
            let (sym, rest) = line
                .strip_prefix('"')
                .and_then(|l| l.split_once("\","))
                .ok_or_else(|| Error::Format(format!("manifest.csv: bad row {line}")))?;
            let file = rest.rsplit(',').next().unwrap_or_default();
            let f = Field::read_rsf1(BufReader::new(File::open(dir.join(file))?))?;
            coeffs.insert(Symbol::parse(sym)?, f);
        }
        ModelledField::new(model, gamma, coeffs)
    }

    /// `aF + bG` on the same model.
    pub fn combine(&self, a: f64, other: &ModelledField, b: f64) -> Result<ModelledField> {
        let mut coeffs = BTreeMap::new();
        for s in self.coeffs.keys().chain(other.coeffs.keys()) {
            if coeffs.contains_key(s) {
                continue;
            }
            let f = match (self.coeffs.get(s), other.coeffs.get(s)) {
                (Some(p), Some(q)) => p.axpby(a, q, b)?,
                (Some(p), None) => p.map(|v| a * v),
                (None, Some(q)) => q.map(|v| b * v),
                (None, None) => unreachable!(),
            };
            coeffs.insert(s.clone(), f);
        }
        Ok(ModelledField { gamma: self.gamma.min(other.gamma), alpha: self.alpha.min(other.alpha), coeffs })
    }
}

/// Product `F·G` truncated below `(γ₁ + α₂) ∧ (γ₂ + α₁)`.
pub fn multiply(model: &GridModel, f: &ModelledField, g: &ModelledField) -> Result<ModelledField> {
    let gamma = (f.gamma + g.alpha).min(g.gamma + f.alpha);
    let mut coeffs: BTreeMap<Symbol, Field> = BTreeMap::new();
    for (a, fa) in &f.coeffs {
        for (b, gb) in &g.coeffs {
            let Some(p) = model.structure.multiply(a, b) else { continue };
            if model.order(&p) >= gamma {
                continue;
            }
            let e = coeffs.entry(p).or_insert_with(|| Field::zeros(model.grid));
            e.values.iter_mut().zip(fa.values.iter().zip(&gb.values)).for_each(|(o, (x, y))| *o += x * y);
        }
    }
    let mut out = ModelledField::new(model, gamma, coeffs)?;
    out.gamma = gamma;
    Ok(out)
}

/// `(RF)(z) = (Π_z F(z))(z)`, valid for continuous models.
pub fn reconstruct(f: &ModelledField, model: &GridModel) -> Result<Field> {
    if f.gamma <= 0.0 {
        return Err(Error::Invalid(format!("reconstruction needs gamma > 0, got {}", f.gamma)));
    }
    let d = model.grid.d;
    let mut out = Field::zeros(model.grid);
    for (s, c) in &f.coeffs {
        let (m, tau0) = split_symbol(s, d);
        if m.iter().any(|&v| v > 0) {
            continue;
        }
        if tau0.is_unit() {
            out.values.iter_mut().zip(&c.values).for_each(|(o, a)| *o += a);
        } else {
            let pf = model.fields.get(&tau0).ok_or_else(|| Error::UnknownSymbol(tau0.to_string()))?;
            out.values.iter_mut().zip(c.values.iter().zip(&pf.values)).for_each(|(o, (a, p))| *o += a * p);
        }
    }
    Ok(out)
}

/// Quadratic B-spline: unit mass, integer translates sum to one.
pub fn bspline2(u: f64) -> f64 {
    let a = u.abs();
    if a <= 0.5 {
        0.75 - a * a
    } else if a < 1.5 {
        0.5 * (a - 1.5) * (a - 1.5)
    } else {
        0.0
    }
}

/// Tensor B-spline family `ψ^n_x` on the lattice of spacing
/// `(h_n², h_n)`, `h_n = L·2^{-n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct StitchKernel {
    pub n_max: u32,
}

/// Interior time window `[lo, hi]` (slice indices) on which level `n`'s
/// family is complete, with the lattice spacings in cells.
#[derive(Clone, Debug, PartialEq)]
pub struct StitchLevel {
    pub n: u32,
    pub t_step: usize,
    pub x_step: usize,
    pub lattice_times: Vec<usize>,
    pub window: (usize, usize),
}

impl StitchKernel {
    pub fn level(&self, g: &Grid, n: u32) -> Result<StitchLevel> {
        if n > self.n_max {
            return Err(Error::Invalid(format!("level {n} above n_max {}", self.n_max)));
        }
        let h = g.l / 2f64.powi(n as i32);
        let xs = h / g.dx();
        let ts = h * h / g.dt();
        if (xs - xs.round()).abs() > 1e-9 || (ts - ts.round()).abs() > 1e-9 || xs.round() < 1.0 || ts.round() < 1.0 {
            return Err(Error::Unresolved(format!("level {n} lattice is not a sub-lattice of the grid")));
        }
        let (x_step, t_step) = (xs.round() as usize, ts.round() as usize);
        let reach = (3 * t_step).div_ceil(2);
        let lattice_times: Vec<usize> = (0..=g.m).step_by(t_step).filter(|&i| i >= reach && i + reach <= g.m).collect();
        if lattice_times.len() < 3 {
            return Err(Error::Invalid(format!("time interval too short for level {n}")));
        }
        let lo = lattice_times[0] + reach;
        let hi = lattice_times[lattice_times.len() - 1] - reach;
        Ok(StitchLevel { n, t_step, x_step, lattice_times, window: (lo, hi) })
    }

    fn weights(step: usize) -> Vec<(i64, f64)> {
        let r = (3 * step) as i64 / 2 + 1;
        (-r..=r).map(|o| (o, bspline2(o as f64 / step as f64))).filter(|p| p.1 != 0.0).collect()
    }

    /// Largest `|Σ_x ψ^n_x - 1|` over the window of level `n`.
    pub fn partition_defect(&self, g: &Grid, n: u32) -> Result<f64> {
        let lv = self.level(g, n)?;
        let wt = Self::weights(lv.t_step);
        let wx = Self::weights(lv.x_step);
        let mut worst = 0.0f64;
        for ti in lv.window.0..=lv.window.1 {
            let st: f64 = wt.iter().filter(|(o, _)| (ti as i64 - o).rem_euclid(lv.t_step as i64) == 0).map(|p| p.1).sum();
            for xi in 0..lv.x_step {
                let sx: f64 = wx.iter().filter(|(o, _)| (xi as i64 - o).rem_euclid(lv.x_step as i64) == 0).map(|p| p.1).sum();
                worst = worst.max((st * sx.powi(g.d as i32) - 1.0).abs());
            }
        }
        Ok(worst)
    }
}

/// `R^n F = Σ_x ⟨Π_x F(x), ρ^n_x⟩ ψ^n_x` with `ρ^n_x` the unit-mass
/// rescaling of `ψ^n_x`. Values outside the level window are zero.
pub fn reconstruct_stitched(f: &ModelledField, model: &GridModel, kernel: &StitchKernel, n: u32) -> Result<(Field, (usize, usize))> {
    let g = model.grid;
    let lv = kernel.level(&g, n)?;
    let wt = StitchKernel::weights(lv.t_step);
    let wx = StitchKernel::weights(lv.x_step);
    let norm = |w: &[(i64, f64)]| -> Vec<(i64, f64)> {
        let s: f64 = w.iter().map(|p| p.1).sum();
        w.iter().map(|&(o, v)| (o, v / s)).collect()
    };
    let (rt, rx) = (norm(&wt), norm(&wx));
    let d = g.d;
    let per_axis = g.n / lv.x_step;
    let lattice_x = per_axis.pow(d as u32);
    let mut out = Field::zeros(g);
    for &ti in &lv.lattice_times {
        for lx in 0..lattice_x {
            let mut x = vec![0; d];
            let mut r = lx;
            for j in (0..d).rev() {
                x[j] = (r % per_axis) * lv.x_step;
                r /= per_axis;
            }
            let z = Node::new(ti, x.clone());
            let mut c = 0.0;
            for (s, cf) in &f.coeffs {
                let a = cf.values[model.flat(&z)];
                if a != 0.0 {
                    c += a * model.local_sum(s, &z, &rt, &rx)?;
                }
            }
            // scatter c·ψ over the support
            let mut idx = vec![0usize; d];
            for &(ot, w0) in &wt {
                let tt = ti as i64 + ot;
                if tt < lv.window.0 as i64 || tt > lv.window.1 as i64 {
                    continue;
                }
                'odo: loop {
                    let mut w = w0;
                    let mut flat = 0;
                    for j in 0..d {
                        let (o, wj) = wx[idx[j]];
                        w *= wj;
                        flat = flat * g.n + (x[j] as i64 + o).rem_euclid(g.n as i64) as usize;
                    }
                    out.values[tt as usize * g.cells() + flat] += c * w;
                    for j in (0..d).rev() {
                        idx[j] += 1;
                        if idx[j] < wx.len() {
                            continue 'odo;
                        }
                        idx[j] = 0;
                    }
                    break;
                }
            }
        }
    }
    Ok((out, lv.window))
}

/// Fitted exponent and constant of `sup_z |(RF - Π_z F(z))(S^λ_z η)|`.
pub fn reconstruction_bound_fit(f: &ModelledField, model: &GridModel, levels: &[i32], points: usize) -> Result<(f64, f64)> {
    let rf = reconstruct(f, model)?;
    let g = model.grid;
    let mut stats = Vec::new();
    for &k in levels {
        let lambda = 2f64.powi(-k);
        let wt = unit_weights(0.0, lambda * lambda, g.dt());
        let wx = unit_weights(0.0, lambda, g.dx());
        let mut sup = 0.0f64;
        for z in spread_nodes(&g, lambda, points)? {
            let mut v = local_field_sum(&rf, &z, &wt, &wx);
            for (s, c) in &f.coeffs {
                let a = c.values[model.flat(&z)];
                if a != 0.0 {
                    v -= a * model.local_sum(s, &z, &wt, &wx)?;
                }
            }
            sup = sup.max(v.abs());
        }
        stats.push((k, sup));
    }
    Ok(power_fit(&stats))
}

fn local_field_sum(f: &Field, z: &Node, wt: &[(i64, f64)], wx: &[(i64, f64)]) -> f64 {
    let g = f.grid;
    let d = g.d;
    let mut total = 0.0;
    let mut idx = vec![0usize; d];
    for &(ot, w0) in wt {
        let ti = (z.ti as i64 + ot) as usize;
        'odo: loop {
            let mut w = w0;
            let mut flat = 0;
            for j in 0..d {
                let (o, wj) = wx[idx[j]];
                w *= wj;
                flat = flat * g.n + (z.x[j] as i64 + o).rem_euclid(g.n as i64) as usize;
            }
            total += w * f.values[ti * g.cells() + flat];
            for j in (0..d).rev() {
                idx[j] += 1;
                if idx[j] < wx.len() {
                    continue 'odo;
                }
                idx[j] = 0;
            }
            break;
        }
    }
    total
}

/// Pair sampling for `D^γ` seminorms: base points in `window` (time and
/// every spatial axis, as fractions of the domain), distances in
/// `[min_dist, max_dist]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSampling {
    pub pairs: usize,
    pub seed: u64,
    pub min_dist: Option<f64>,
    pub max_dist: f64,
    pub window: ((f64, f64), (f64, f64)),
}

impl Default for PairSampling {
    fn default() -> Self {
        PairSampling { pairs: 2000, seed: 0, min_dist: None, max_dist: 1.0, window: ((0.0, 1.0), (0.0, 1.0)) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DgammaReport {
    pub sup: f64,
    pub holder: f64,
    /// Largest Hölder quotient per dyadic distance bin `2^{-j-1} < ‖x-y‖_s ≤ 2^{-j}`.
    pub by_scale: Vec<(i32, f64)>,
    pub pairs: usize,
}

impl DgammaReport {
    pub fn total(&self) -> f64 {
        self.sup + self.holder
    }
}

fn sample_pairs(g: &Grid, opts: &PairSampling) -> Vec<(Node, Node)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, stream_id("model", "pairs", 0)));
    let min = opts.min_dist.unwrap_or(2.0 * g.dx());
    let ((t0, t1), (x0, x1)) = opts.window;
    let (tlo, thi) = ((t0 * g.m as f64).ceil() as i64, (t1 * g.m as f64).floor() as i64);
    let (xlo, xhi) = ((x0 * g.n as f64).ceil() as i64, ((x1 * g.n as f64).floor() as i64).min(g.n as i64 - 1));
    let mut out = Vec::with_capacity(opts.pairs);
    let mut attempts = 0;
    while out.len() < opts.pairs && attempts < 50 * opts.pairs {
        attempts += 1;
        let x = Node::new(rng.gen_range(tlo..=thi) as usize, (0..g.d).map(|_| rng.gen_range(xlo..=xhi) as usize).collect());
        let r = (min.ln() + rng.gen::<f64>() * (opts.max_dist.ln() - min.ln())).exp();
        let share: f64 = rng.gen();
        let dt = (r * share).powi(2) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let mut parts: Vec<f64> = (0..g.d).map(|_| rng.gen::<f64>()).collect();
        let ps: f64 = parts.iter().sum::<f64>().max(1e-300);
        parts.iter_mut().for_each(|p| *p *= r * (1.0 - share) / ps * if rng.gen::<bool>() { 1.0 } else { -1.0 });
        let ty = x.ti as i64 + (dt / g.dt()).round() as i64;
        let yx: Vec<i64> = x.x.iter().zip(&parts).map(|(&a, p)| a as i64 + (p / g.dx()).round() as i64).collect();
        if ty < tlo || ty > thi || yx.iter().any(|&v| v < xlo || v > xhi) {
            continue;
        }
        let y = Node::new(ty as usize, yx.iter().map(|&v| v as usize).collect());
        let h = displacement(g, &x, &y);
        let dist = parabolic_norm(h[0], &h[1..]);
        if dist < min * (1.0 - 1e-12) || dist > opts.max_dist {
            continue;
        }
        out.push((x, y));
    }
    out
}

/// `sup_z max_β ‖F(z)‖_β + max_{pairs} max_β ‖F(x) - Γ_{xy}F(y)‖_β / ‖x-y‖_s^{γ-β}`.
pub fn dgamma_report(f: &ModelledField, model: &GridModel, gamma: f64, opts: &PairSampling) -> Result<DgammaReport> {
    let g = model.grid;
    let mut sup = 0.0f64;
    for (s, c) in &f.coeffs {
        if model.order(s) < gamma {
            sup = sup.max(c.values.iter().fold(0.0, |m, v| m.max(v.abs())));
        }
    }
    let pairs = sample_pairs(&g, opts);
    let mut holder = 0.0f64;
    let mut bins: BTreeMap<i32, f64> = BTreeMap::new();
    for (x, y) in &pairs {
        let fx = f.at(model, x);
        let gy = model.gamma_xy(x, y).apply_vec(&f.at(model, y), &model.structure)?;
        let diff = fx.sub(&gy);
        let h = displacement(&g, x, y);
        let dist = parabolic_norm(h[0], &h[1..]);
        let mut q = 0.0f64;
        for (s, c) in diff.iter() {
            let beta = model.order(s);
            if beta < gamma {
                q = q.max(c.abs() / dist.powf(gamma - beta));
            }
        }
        holder = holder.max(q);
        let j = (-dist.log2()).floor() as i32;
        let e = bins.entry(j).or_insert(0.0);
        *e = e.max(q);
    }
    Ok(DgammaReport { sup, holder, by_scale: bins.into_iter().collect(), pairs: pairs.len() })
}

pub fn dgamma_seminorm(f: &ModelledField, model: &GridModel, gamma: f64, opts: &PairSampling) -> Result<f64> {
    Ok(dgamma_report(f, model, gamma, opts)?.total())
}

/// `𝒦_γ F = ℐF + 𝒥_γ F + 𝒩_γ F`, truncated below `out_gamma ≤ γ + 2`.
/// The polynomial part at `z` is
/// `(1/k!)[(D^k K ⋆ RF)(z) - Σ_{|τ|+2 ≤ |k|} F_τ(z)(D^k K ⋆ Π_z τ)(z)]`.
pub fn integrate(f: &ModelledField, model: &GridModel, out_gamma: f64) -> Result<ModelledField> {
    if out_gamma > f.gamma + 2.0 + 1e-12 {
        return Err(Error::Invalid(format!("output gamma {out_gamma} exceeds {} + 2", f.gamma)));
    }
    let d = model.grid.d;
    let rf = reconstruct(f, model)?;
    let mut coeffs = BTreeMap::new();
    for (s, _) in &model.structure.symbols {
        let o = model.order(s);
        if o >= out_gamma {
            continue;
        }
        match s {
            Symbol::Poly(k) => {
                if k[0] > 0 {
                    return Err(Error::Unresolved("time derivative of the kernel is not tabulated".into()));
                }
                let mut acc = model.kernel.convolve(&rf, &k[1..])?;
                for (tau, c) in &f.coeffs {
                    if model.order(tau) + 2.0 > o {
                        continue;
                    }
                    let (m, tau0) = split_symbol(tau, d);
                    if m.iter().any(|&v| v > 0) {
                        return Err(Error::Invalid(format!("{tau} would need a weighted kernel")));
                    }
                    let base = if tau0.is_unit() {
                        Field::constant(model.grid, 1.0)
                    } else {
                        model.fields.get(&tau0).ok_or_else(|| Error::UnknownSymbol(tau0.to_string()))?.clone()
                    };
                    let kb = model.kernel.convolve(&base, &k[1..])?;
                    acc.values.iter_mut().zip(c.values.iter().zip(&kb.values)).for_each(|(a, (x, y))| *a -= x * y);
                }
                let kf = factorial(k);
                acc.values.iter_mut().for_each(|v| *v /= kf);
                coeffs.insert(s.clone(), acc);
            }
            Symbol::Integ(inner) => {
                if let Some(c) = f.coeffs.get(inner.as_ref()) {
                    coeffs.insert(s.clone(), c.clone());
                }
            }
            _ => {}
        }
    }
    let mut out = ModelledField::new(model, out_gamma, coeffs)?;
    out.gamma = out_gamma;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub min_t_end: f64,
    pub sampling: PairSampling,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions { tol: 1e-8, max_iter: 200, min_t_end: 1e-3, sampling: PairSampling { pairs: 500, ..Default::default() } }
    }
}

#[derive(Clone, Debug)]
pub struct FixedPointResult {
    pub phi: ModelledField,
    /// The model restricted to `[0, t_end]`.
    pub model: GridModel,
    pub iterations: usize,
    /// `D^γ` distance between `Φ` and `-𝒦_γΦ³ + 𝒦_γΞ`.
    pub residual: f64,
    pub t_end: f64,
    pub history: Vec<f64>,
}

fn truncate_field(f: &Field, m: usize) -> Result<Field> {
    let g = f.grid;
    let grid = Grid::new(g.d, g.n, g.l, m as f64 * g.dt(), m)?;
    Ok(Field { grid, values: f.values[..(m + 1) * g.cells()].to_vec(), seed_lineage: f.seed_lineage.clone() })
}

fn truncate_model(model: &GridModel, m: usize) -> Result<GridModel> {
    let fields = model.fields.iter().map(|(s, f)| Ok((s.clone(), truncate_field(f, m)?))).collect::<Result<_>>()?;
    let kernel = match &model.kernel {
        IntegrationKernel::Table(_) => return Err(Error::Invalid("fixed point uses the semigroup kernel".into())),
        k => k.clone(),
    };
    let grid = Grid::new(model.grid.d, model.grid.n, model.grid.l, m as f64 * model.grid.dt(), m)?;
    Ok(GridModel { structure: model.structure.clone(), grid, kernel, fields, kappa: model.kappa })
}

fn iterate_fixed_point(model: &GridModel, gamma: f64, opts: &FixedPointOptions) -> Result<Option<(ModelledField, usize, f64, Vec<f64>)>> {
    let g = model.grid;
    let xi_sym = Symbol::Xi;
    let one = Symbol::unit(g.d);
    let xi = ModelledField::new(model, gamma, BTreeMap::from([(xi_sym, Field::constant(g, 1.0))]))?;
    let k_xi = integrate(&xi, model, gamma)?;
    let mut phi = k_xi.clone();
    let mut history = Vec::new();
    let mut rising = 0;
    for it in 1..=opts.max_iter {
        let p2 = multiply(model, &phi, &phi)?;
        let p3 = multiply(model, &p2, &phi)?;
        let k3 = integrate(&p3.scale(-1.0), model, gamma)?;
        let next = k3.combine(1.0, &k_xi, 1.0)?;
        let next = ModelledField { gamma, alpha: next.alpha, coeffs: next.coeffs.into_iter().filter(|(s, _)| model.order(s) < gamma).collect() };
        if !next.coeffs.values().all(|f| f.all_finite()) {
            return Ok(None);
        }
        let diff = next.combine(1.0, &phi, -1.0)?;
        let dist = dgamma_seminorm(&diff, model, gamma, &opts.sampling)?;
        history.push(dist);
        phi = next;
        if dist < opts.tol {
            phi.coeffs.entry(one.clone()).or_insert_with(|| Field::zeros(g));
            return Ok(Some((phi, it, dist, history)));
        }
        if history.len() > 1 && dist > history[history.len() - 2] {
            rising += 1;
            if rising >= 3 || !dist.is_finite() {
                return Ok(None);
            }
        } else {
            rising = 0;
        }
    }
    Ok(None)
}

/// Picard iteration of `Φ = -𝒦_γ Φ³ + 𝒦_γ Ξ`; halves `t_end` when the
/// iteration fails to contract.
pub fn abstract_fixed_point(model: &GridModel, gamma: f64, t_end: f64, opts: &FixedPointOptions) -> Result<FixedPointResult> {
    if !model.fields.contains_key(&Symbol::Xi) {
        return Err(Error::Invalid("fixed point needs a Φ⁴ model".into()));
    }
    let mut t = t_end.min(model.grid.t);
    while t >= opts.min_t_end {
        let m = ((t / model.grid.dt()).round() as usize).max(1);
        let sub = truncate_model(model, m)?;
        if let Some((phi, iterations, residual, history)) = iterate_fixed_point(&sub, gamma, opts)? {
            return Ok(FixedPointResult { phi, model: sub, iterations, residual, t_end: m as f64 * model.grid.dt(), history });
        }
        t /= 2.0;
    }
    Err(Error::Invalid(format!("no contraction down to t_end = {}", opts.min_t_end)))
}
