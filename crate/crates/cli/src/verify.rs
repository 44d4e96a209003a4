//! Acceptance suite. Each criterion runs its checks and reports one
//! pass/fail line; `fast` lowers sample counts and widens the bands.

use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::time::Instant;

use num_rational::BigRational;
use rayon::prelude::*;
use rslab_core::algebra::coeff::q;
use rslab_core::algebra::counterterm::derive_counterterm;
use rslab_core::algebra::group::{shift_domain, GroupElement};
use rslab_core::algebra::renorm::{RenormMap, C, CT};
use rslab_core::algebra::symbol::{multi_indices, parabolic_degree};
use rslab_core::algebra::{trees, FormalPoly, OrderExpr, RegularityStructure, Symbol, Q};
use rslab_core::grid::{Field, Grid};
use rslab_core::heat::{stochastic_convolution, HeatKernelSpec, KernelTable};
use rslab_core::ising::*;
use rslab_core::model::*;
use rslab_core::noise::{pair_noise, sample_white_noise, ScaledTestFunction};
use rslab_core::phi4::*;
use rslab_core::regularity::*;
use rslab_core::rng::Stream;
use rslab_core::wick::*;

use crate::commands::{execute, replay, slope, spread};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug)]
pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!("{} criterion {:>2} {:<28} {:>8.1}s  {}", if self.pass { "PASS" } else { "FAIL" }, self.id, self.name, self.seconds, self.detail)
    }
}

/// Collects named sub-checks of one criterion.
#[derive(Default)]
struct Checks {
    ok: bool,
    parts: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Checks { ok: true, parts: Vec::new() }
    }

    fn check(&mut self, label: &str, ok: bool, value: impl std::fmt::Display) {
        self.ok &= ok;
        self.parts.push(format!("{label}{}={value}", if ok { "" } else { "[X]" }));
    }
}

type Runner = fn(&Ctx) -> CliResult<Checks>;

struct Ctx<'a> {
    fast: bool,
    work: &'a Path,
}

impl Ctx<'_> {
    fn pick<T>(&self, full: T, fast: T) -> T {
        if self.fast {
            fast
        } else {
            full
        }
    }
}

pub const CRITERIA: &[(u32, &str, &str)] = &[
    (1, "symbol-tables", "symbolic"),
    (2, "counterterm", "symbolic"),
    (3, "group-axioms", "symbolic"),
    (4, "white-noise-covariance", "noise"),
    (5, "appendix-identities", "appendix"),
    (6, "renormalization-rates", "wick"),
    (7, "regularity-estimates", "regularity"),
    (8, "remainder-consistency", "solver"),
    (9, "reconstruction", "model"),
    (10, "abstract-fixed-point", "model"),
    (11, "kac-ising", "ising"),
    (12, "determinism", "determinism"),
];

fn runner(id: u32) -> Runner {
    match id {
        1 => c1_symbol_tables,
        2 => c2_counterterm,
        3 => c3_group_axioms,
        4 => c4_white_noise,
        5 => c5_appendix,
        6 => c6_rates,
        7 => c7_regularity,
        8 => c8_remainder,
        9 => c9_reconstruction,
        10 => c10_fixed_point,
        11 => c11_ising,
        _ => c12_determinism,
    }
}

/// Criterion ids selected by `suite`: `all`, a suite name, or a
/// comma-separated list of names and ids.
pub fn select(suite: &str) -> CliResult<Vec<u32>> {
    let mut ids = Vec::new();
    for part in suite.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let hit: Vec<u32> = if part == "all" {
            CRITERIA.iter().map(|c| c.0).collect()
        } else if let Ok(n) = part.parse::<u32>() {
            CRITERIA.iter().filter(|c| c.0 == n).map(|c| c.0).collect()
        } else {
            CRITERIA.iter().filter(|c| c.2 == part || c.1 == part).map(|c| c.0).collect()
        };
        if hit.is_empty() {
            return Err(CliError::Config(format!("verify.suite: unknown selector '{part}'")));
        }
        ids.extend(hit);
    }
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(CliError::Config("verify.suite selects nothing".into()));
    }
    Ok(ids)
}

/// Runs one criterion; scratch files go below `work`.
pub fn run_one(id: u32, fast: bool, work: &Path) -> Outcome {
    let (_, name, _) = *CRITERIA.iter().find(|c| c.0 == id).expect("criterion id");
    let start = Instant::now();
    let ctx = Ctx { fast, work };
    let (pass, detail) = match runner(id)(&ctx) {
        Ok(c) => (c.ok, c.parts.join("; ")),
        Err(e) => (false, format!("error: {e}")),
    };
    Outcome { id, name, pass, detail, seconds: start.elapsed().as_secs_f64() }
}

pub fn run_suite(suite: &str, fast: bool, work: &Path, report: &mut dyn FnMut(&Outcome)) -> CliResult<Vec<Outcome>> {
    let mut out = Vec::new();
    for id in select(suite)? {
        let o = run_one(id, fast, work);
        report(&o);
        out.push(o);
    }
    Ok(out)
}

pub fn write_csv(outcomes: &[Outcome], path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "name", "pass", "detail", "seconds"])?;
    for o in outcomes {
        w.write_record([o.id.to_string(), o.name.to_string(), o.pass.to_string(), o.detail.clone(), format!("{:.3}", o.seconds)])?;
    }
    w.flush()?;
    Ok(())
}

fn o(n: i64, d: i64, k: i64) -> OrderExpr {
    OrderExpr::new(Q::new(n, d), k)
}

fn c1_symbol_tables(_: &Ctx) -> CliResult<Checks> {
    use trees::*;
    let mut c = Checks::new();
    let s2 = RegularityStructure::phi4(2, OrderExpr::rat(1, 10))?;
    let table1 = [(Symbol::Xi, o(-2, 1, -1)), (t1(), o(0, 1, -1)), (tn(2, 2), o(0, 1, -2)), (tn(2, 3), o(0, 1, -3)), (Symbol::unit(2), o(0, 1, 0))];
    let t1_ok = s2.len() == table1.len() && table1.iter().all(|(t, ord)| s2.order_of(t).ok().as_ref() == Some(ord));
    c.check("d2_rows", t1_ok, s2.len());

    let d = 3;
    let s3 = RegularityStructure::phi4(3, OrderExpr::rat(21, 20))?;
    let mut rows: Vec<(Symbol, OrderExpr)> = vec![
        (Symbol::Xi, o(-5, 2, -1)),
        (tn(d, 3), o(-3, 2, -3)),
        (tn0(d, 3), o(1, 2, -3)),
        (tab(d, 1, 2), o(1, 2, -3)),
        (tn0(d, 2), o(1, 1, -2)),
        (tab(d, 3, 1), o(0, 1, -4)),
        (tab(d, 3, 2), o(-1, 2, -5)),
        (tab(d, 2, 2), o(0, 1, -4)),
        (Symbol::product(d, [tn0(d, 3), tn0(d, 3)]), o(1, 1, -6)),
        (tab(d, 2, 1), o(1, 2, -3)),
    ];
    for k in multi_indices(d, 2) {
        let deg = parabolic_degree(&k) as i64;
        let xk = Symbol::Poly(k.clone());
        if deg <= 1 {
            rows.push((xk.clone(), o(deg, 1, 0)));
        }
        rows.push((Symbol::product(d, [t1(), xk.clone()]), o(2 * deg - 1, 2, -1)));
        rows.push((Symbol::product(d, [tn(d, 2), xk.clone()]), o(deg - 1, 1, -2)));
        rows.push((Symbol::product(d, [tab(d, 3, 1), xk]), o(deg, 1, -4)));
    }
    let kappa = s3.kappa.eval;
    let (mut expected, mut matched) = (0, 0);
    for (sym, ord) in rows {
        if ord.eval(kappa) <= s3.gamma.eval(kappa) {
            expected += 1;
            if s3.order_of(&sym).ok().as_ref() == Some(&ord) && s3.symbols.iter().filter(|(t, _)| *t == sym).count() == 1 {
                matched += 1;
            }
        }
    }
    c.check("d3_rows", matched == expected, format!("{matched}/{expected}"));
    Ok(c)
}

fn c2_counterterm(_: &Ctx) -> CliResult<Checks> {
    let mut c = Checks::new();
    let s = RegularityStructure::phi4(3, OrderExpr::rat(21, 20))?;
    let got = derive_counterterm(&s, &RenormMap::phi4_3())?.c;
    let want = FormalPoly::var(C).scale(3) + FormalPoly::var(CT).scale(9);
    c.check("c", got == want, format!("{got} (expected {want})"));
    Ok(c)
}

fn random_element(s: &RegularityStructure, stream: Stream) -> GroupElement<BigRational> {
    let mut i = 0u64;
    let mut draw = || {
        let n = ((stream.uniform(i) * 13.0).ceil() as i64 - 7).clamp(-6, 6);
        let den = ((stream.uniform(i + 1) * 4.0).ceil() as i64).clamp(1, 4);
        i += 2;
        q(n, den)
    };
    let mut e = GroupElement::translation((0..=s.dimension).map(|_| draw()).collect());
    for key in shift_domain(s) {
        e.integ_shifts.insert(key, draw());
    }
    e
}

fn c3_group_axioms(ctx: &Ctx) -> CliResult<Checks> {
    let mut c = Checks::new();
    let n = ctx.pick(1000usize, 100);
    for s in [RegularityStructure::phi4(2, OrderExpr::int(1))?, RegularityStructure::phi4(3, OrderExpr::rat(21, 20))?] {
        let d = s.dimension;
        let k = s.kappa.eval;
        let els: Vec<_> = (0..n as u64).map(|i| random_element(&s, Stream::named(1, "verify", "group", i))).collect();
        let id = GroupElement::identity(d);
        let (mut basic, mut law, mut assoc, mut ident) = (0, 0, 0, 0);
        for i in 0..n {
            let (g1, g2, g3) = (&els[i], &els[(i + 1) % n], &els[(i + 2) % n]);
            let c12 = g1.compose(g2, &s);
            let left = c12.compose(g3, &s);
            let right = g1.compose(&g2.compose(g3, &s), &s);
            let idg = id.compose(g1, &s);
            for (tau, ord) in &s.symbols {
                let v1 = g1.apply(tau, &s)?;
                let lower = v1.iter().all(|(t, _)| t == tau || t.order(d).eval(k) < ord.eval(k));
                basic += usize::from(v1.get(tau) != q(1, 1) || !lower);
                law += usize::from(c12.apply(tau, &s)? != g1.apply_vec(&g2.apply(tau, &s)?, &s)?);
                assoc += usize::from(left.apply(tau, &s)? != right.apply(tau, &s)?);
                ident += usize::from(id.apply(tau, &s)? != rslab_core::algebra::Vector::basis(tau.clone()) || idg.apply(tau, &s)? != v1);
            }
        }
        let tag = format!("d{d}");
        c.check(&format!("{tag}_basic_relation_violations"), basic == 0, basic);
        c.check(&format!("{tag}_composition_violations"), law == 0, law);
        c.check(&format!("{tag}_associativity_violations"), assoc == 0, assoc);
        c.check(&format!("{tag}_identity_violations"), ident == 0, ident);
    }
    c.parts.push(format!("elements={n}"));
    Ok(c)
}

/// `E[X²]` over seeds of the noise pairing with `tf`.
fn pairing_second_moment(g: &Grid, tf: &ScaledTestFunction, seeds: u64) -> CliResult<McEstimate> {
    let sq: Vec<f64> = (0..seeds)
        .into_par_iter()
        .map(|s| pair_noise(g, s, tf).map(|v| v * v))
        .collect::<Result<_, _>>()?;
    Ok(McEstimate::from_samples(&sq))
}

fn c4_white_noise(ctx: &Ctx) -> CliResult<Checks> {
    let mut c = Checks::new();
    let seeds = ctx.pick(10_000u64, 2_000);
    let band = ctx.pick(3.0, 4.0);
    for d in [1usize, 2] {
        let (g, lambdas): (Grid, Vec<f64>) = if d == 1 {
            (Grid::new(1, 256, 1.0, 1.0 / 32.0, 128)?, vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0])
        } else {
            (Grid::new(2, 64, 1.0, 1.0 / 32.0, 32)?, vec![1.0 / 8.0, 2f64.powf(-3.5), 1.0 / 16.0])
        };
        let (mut logs, mut logv) = (Vec::new(), Vec::new());
        for (j, &lam) in lambdas.iter().enumerate() {
            let tf = ScaledTestFunction::new(lam * lam, vec![0.5; d], lam);
            let est = pairing_second_moment(&g, &tf, seeds)?;
            let norm = tf.l2_norm_sq();
            if j == 0 {
                let (r, se) = (est.mean / norm, est.stderr / norm);
                c.check(&format!("d{d}_var_ratio"), (r - 1.0).abs() <= band * se, format!("{r:.4}±{se:.4}"));
            }
            logs.push(lam.ln());
            logv.push(est.mean.ln());
        }
        let e = slope(&logs, &logv);
        let want = -(d as f64 + 2.0);
        c.check(&format!("d{d}_exponent"), (e - want).abs() <= 0.3, format!("{e:.3}"));
    }
    c.parts.push(format!("seeds={seeds}"));
    Ok(c)
}

fn c5_appendix(ctx: &Ctx) -> CliResult<Checks> {
    let mut c = Checks::new();
    let n = ctx.pick(100_000usize, 20_000);
    let k = ctx.pick(3.0, 4.0);
    let space = DiscreteNoiseSpace::new(vec![0.5, 1.0, 0.2, 0.8, 1.3, 0.4])?;
    let mut worst: f64 = 0.0;
    for s in 0..3 {
        let kern = SimpleKernel::random(2, 6, s)?;
        let r = verify_isometry(&kern, &space, n, 10 + s)?;
        worst = worst.max((r.second_moment.mean - r.sym_bound).abs() / r.second_moment.stderr);
    }
    c.check("isometry_z", worst <= k, format!("{worst:.2}"));

    let space8 = DiscreteNoiseSpace::new(vec![0.25, 0.5, 1.0, 0.75, 0.1, 0.6, 0.3, 0.9])?;
    let f = [0.4, -1.1, 0.8, 0.3, 2.0, -0.5, 1.2, 0.7];
    let z = |e: &McEstimate| e.mean.abs() / e.stderr;
    let sq = verify_square_identity(&f, &space8, n, 8, 21)?;
    c.check("square_identity_z", sq.within(0.0, k), format!("{:.2}", z(&sq)));
    let cube = verify_cube_identity(&f, &space8, n, 8, 22)?;
    c.check("cube_identity_z", cube.residual.within(0.0, k), format!("{:.2}", z(&cube.residual)));
    c.check("hermite_z", cube.hermite_residual.within(0.0, k), format!("{:.2}", z(&cube.hermite_residual)));

    let k1 = SimpleKernel::random(1, 6, 4)?;
    let r1 = verify_nelson(1, 4, &k1, &space, n, 30)?.ratio;
    c.check("nelson_gaussian_fourth", r1.within(3.0, k), format!("{:.3}±{:.3}", r1.mean, r1.stderr));
    let k2 = SimpleKernel::random(2, 6, 5)?;
    let r2 = verify_nelson(2, 2, &k2, &space, n, 31)?.ratio;
    c.check("nelson_second_moment_bound", r2.mean <= 2.0 + k * r2.stderr, format!("{:.3}", r2.mean));
    let kernels = ctx.pick(20u64, 8);
    for (order, p) in [(2usize, 6u32), (3, 4)] {
        let ratios: Vec<f64> = (0..kernels)
            .map(|s| -> CliResult<f64> {
                let kern = SimpleKernel::random_symmetric(order, 6, 100 + s)?;
                Ok(verify_nelson(order, p, &kern, &space, n / 2, 40 + s)?.ratio.mean)
            })
            .collect::<CliResult<_>>()?;
        let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        c.check(&format!("nelson_spread_n{order}_p{p}"), hi / lo < 10.0, format!("{:.2}", hi / lo));
    }
    c.parts.push(format!("samples={n}"));
    Ok(c)
}

fn c6_rates(ctx: &Ctx) -> CliResult<Checks> {
    let mut c = Checks::new();
    let deltas: Vec<f64> = (3..=7).map(|j| 2f64.powi(-j)).collect();
    let logs: Vec<f64> = deltas.iter().map(|d| (1.0 / d).ln()).collect();
    let (b2, b3, bt) = ctx.pick((0.05, 0.10, 0.10), (0.07, 0.15, 0.15));
    let c_of = |d: usize, tilde: bool| -> CliResult<Vec<f64>> {
        let spec = HeatKernelSpec::torus(d, 2.0 * PI);
        deltas
            .iter()
            .map(|&dl| Ok(if tilde { compute_c_tilde_delta(dl, d, &spec)? } else { compute_c_delta(dl, d, &spec)? }))
            .collect()
    };
    let c2 = c_of(2, false)?;
    let r2: Vec<f64> = c2.iter().zip(&logs).map(|(a, l)| a / l).collect();
    c.check("d2_c_over_log_spread", spread(&r2) <= b2, format!("{:.4}", spread(&r2)));
    c.parts.push(format!("d2_log_slope={:.5} (1/4π={:.5})", slope(&logs, &c2), 1.0 / (4.0 * PI)));
    let c3 = c_of(3, false)?;
    let r3: Vec<f64> = c3.iter().zip(&deltas).map(|(a, d)| a * d).collect();
    c.check("d3_c_times_delta_spread", spread(&r3) <= b3, format!("{:.4}", spread(&r3)));
    let ct = c_of(3, true)?;
    let rt: Vec<f64> = ct.iter().zip(&logs).map(|(a, l)| a / l).collect();
    c.check("c_tilde_over_log_spread", spread(&rt) <= bt, format!("{:.4}", spread(&rt)));
    Ok(c)
}

fn pooled_alpha(seeds: u64, f: impl Fn(u64) -> CliResult<ScaleSweep> + Sync) -> CliResult<f64> {
    let sweeps: Vec<ScaleSweep> = (0..seeds).map(f).collect::<CliResult<_>>()?;
    Ok(estimate_pooled(&sweeps)?.alpha_hat)
}

fn c7_regularity(ctx: &Ctx) -> CliResult<Checks> {
    let mut c = Checks::new();
    let seeds = ctx.pick(100u64, 10);
    let widen = ctx.pick(1.0, 1.5);
    let g1 = Grid::new(1, 512, 1.0, 0.5, 16384)?;
    let cfg1 = SweepConfig::default_for(1);
    let (mut xs, mut zs) = (Vec::new(), Vec::new());
    for seed in 0..seeds {
        let xi = sample_white_noise(&g1, seed);
        let z = stochastic_convolution(&xi)?;
        xs.push(besov_statistics(&xi, &cfg1)?);
        zs.push(positive_order_statistics(&z, 1, &cfg1)?);
    }
    let a_xi = estimate_pooled(&xs)?.alpha_hat;
    let a_z = estimate_pooled(&zs)?.alpha_hat;
    c.check("xi_d1", (a_xi + 1.5).abs() <= 0.15 * widen, format!("{a_xi:.3}"));
    c.check("Z_d1", (a_z - 0.5).abs() <= 0.1 * widen, format!("{a_z:.3}"));
    c.check("schauder_gain_d1", (a_z - a_xi - 2.0).abs() <= 0.25 * widen, format!("{:.3}", a_z - a_xi));
    let g2 = Grid::new(2, 256, 1.0, 0.125, 512)?;
    let cfg2 = SweepConfig::default_for(2);
    let a2 = pooled_alpha(seeds, |s| Ok(besov_statistics(&sample_white_noise(&g2, s), &cfg2)?))?;
    c.check("xi_d2", (a2 + 2.0).abs() <= 0.2 * widen, format!("{a2:.3}"));
    c.parts.push(format!("seeds={seeds}"));
    Ok(c)
}

fn remainder_gap(n: usize) -> CliResult<f64> {
    let g = Grid::parabolic(2, n, 2.0 * PI, 0.25, 1.0)?;
    let pr = Phi4Problem::new(g, 1, Formulation::Renormalized)?;
    let c = WickConstants::grid_spectral(&g, &pr.mollifier)?;
    let phi = solve_renormalized(&pr, &c)?.field;
    let pv = Phi4Problem { formulation: Formulation::Remainder, ..pr };
    let w = wick_fields(&pv, &c)?;
    let rem = solve_remainder(&pv, &w)?.field;
    Ok(relative_l2(&rem, &phi, g.m))
}

fn c8_remainder(_: &Ctx) -> CliResult<Checks> {
    let mut c = Checks::new();
    let gaps: Vec<f64> = [32, 64, 128].iter().map(|&n| remainder_gap(n)).collect::<CliResult<_>>()?;
    c.check("gap_n128", gaps[2] <= 1e-3, format!("{:.2e}", gaps[2]));
    let ratios: Vec<f64> = gaps.windows(2).map(|w| w[1] / w[0]).collect();
    let ok = ratios.iter().all(|&r| r <= 0.7);
    c.check("refinement_ratios", ok, format!("{ratios:.3?}"));
    Ok(c)
}

fn poly_1d() -> CliResult<RegularityStructure> {
    Ok(RegularityStructure::polynomial(1, OrderExpr::int(2))?)
}

fn phi4_2() -> CliResult<RegularityStructure> {
    Ok(RegularityStructure::phi4(2, OrderExpr::int(1))?)
}

fn heat() -> IntegrationKernel {
    IntegrationKernel::Heat { mass_sq: 0.0 }
}

/// Noise, problem and grid Wick constants for a d = 2 run on the unit torus.
fn phi4_inputs(n: usize, t: f64, m: usize, seed: u64) -> CliResult<(Phi4Problem, Field, WickConstants)> {
    let g = Grid::new(2, n, 1.0, t, m)?;
    let p = Phi4Problem::new(g, seed, Formulation::Renormalized)?;
    let xi = p.noise()?;
    let c = WickConstants::grid_spectral(&g, &p.mollifier)?;
    Ok((p, xi, c))
}

fn l2_window(a: &Field, b: &Field, lo: usize, hi: usize) -> f64 {
    let c = a.grid.cells();
    let s: f64 = a.values[lo * c..(hi + 1) * c].iter().zip(&b.values[lo * c..(hi + 1) * c]).map(|(x, y)| (x - y).powi(2)).sum();
    (s / ((hi + 1 - lo) * c) as f64).sqrt()
}

fn c9_reconstruction(_: &Ctx) -> CliResult<Checks> {
    let mut c = Checks::new();
    let g = Grid::new(1, 128, 1.0, 0.25, 256)?;
    let m = canonical_model(&Field::zeros(g), &poly_1d()?, heat())?;
    let f = Field::from_fn(g, |t, x| (TAU * x[0]).sin() * (1.0 + t) + 0.3 * (2.0 * TAU * x[0]).cos());
    let rf = reconstruct(&ModelledField::lift(&m, &f, 2.0)?, &m)?;
    c.check("lift_exact", rf == f, rf == f);

    let g = Grid::new(1, 256, 1.0, 0.5, 8192)?;
    let m = canonical_model(&Field::zeros(g), &poly_1d()?, heat())?;
    let f = Field::from_fn(g, |t, x| (TAU * x[0]).sin() * (2.0 + (TAU * t).sin()));
    let (e, _) = reconstruction_bound_fit(&ModelledField::lift(&m, &f, 2.0)?, &m, &[2, 3, 4, 5], 32)?;
    c.check("bound_exponent_poly(γ=2)", e >= 2.0 - 0.15, format!("{e:.3}"));
    let (_, xi, _) = phi4_inputs(64, 0.125, 1024, 6)?;
    let pm = canonical_model(&xi, &phi4_2()?, heat())?;
    let one = Symbol::unit(2);
    let ansatz = ModelledField::from_fn(&pm, 1.0, |s, t, x| {
        if *s == one {
            (TAU * x[0]).cos() * (TAU * x[1]).sin() * (1.0 + t)
        } else if *s == trees::t1() {
            1.0
        } else {
            0.0
        }
    })?;
    let (e, _) = reconstruction_bound_fit(&ansatz, &pm, &[2, 3, 4], 64)?;
    c.check("bound_exponent_phi(γ=1)", e >= 1.0 - 0.15, format!("{e:.3}"));

    let g = Grid::new(1, 128, 1.0, 0.25, 1024)?;
    let spec = HeatKernelSpec::torus(1, 1.0).with_cutoff(0.25).with_moments(2);
    let m = canonical_model(&Field::zeros(g), &poly_1d()?, IntegrationKernel::Table(KernelTable::build(&spec, &g)?))?;
    let stream = Stream::named(8, "verify", "reconstruction", 0);
    let mut worst: f64 = 0.0;
    for r in 0..3u64 {
        let a: Vec<f64> = (0..4).map(|i| 2.0 * stream.uniform(4 * r + i) - 1.0).collect();
        let f = Field::from_fn(g, |t, x| a[0] * (TAU * x[0]).sin() + a[1] * (2.0 * TAU * x[0] + t).cos() + a[2] * t + a[3]);
        let lifted = ModelledField::lift(&m, &f, 2.0)?;
        let lhs = reconstruct(&integrate(&lifted, &m, 3.0)?, &m)?;
        let rhs = m.kernel.convolve(&f, &[0])?;
        worst = worst.max(relative_l2(&lhs, &rhs, g.m));
    }
    c.check("integration_commutes_d1", worst <= 1e-3, format!("{worst:.2e}"));

    let g = Grid::new(1, 128, 1.0, 1.0, 16384)?;
    let m = canonical_model(&Field::zeros(g), &poly_1d()?, heat())?;
    let f = Field::from_fn(g, |t, x| (TAU * x[0]).sin() * (1.0 + 0.5 * (TAU * t).cos()) + 0.2 * (2.0 * TAU * x[0] + 1.0).cos());
    let lifted = ModelledField::lift(&m, &f, 2.0)?;
    let rf = reconstruct(&lifted, &m)?;
    let k = StitchKernel { n_max: 7 };
    let window = k.level(&g, 2)?.window;
    let errs: Vec<f64> = (2..=6)
        .map(|n| -> CliResult<f64> {
            let (rn, _) = reconstruct_stitched(&lifted, &m, &k, n)?;
            Ok(l2_window(&rn, &rf, window.0, window.1))
        })
        .collect::<CliResult<_>>()?;
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[1] / w[0]).collect();
    c.check("stitched_ratios", ratios.iter().all(|&r| r <= 0.6), format!("{ratios:.3?}"));
    Ok(c)
}

fn c10_fixed_point(_: &Ctx) -> CliResult<Checks> {
    let mut c = Checks::new();
    let (p, xi, wc) = phi4_inputs(32, 0.25, 256, 9)?;
    let m = renormalized_model(&xi, &phi4_2()?, &RenormMap::phi4_2(), &wc, heat())?;
    let r = abstract_fixed_point(&m, 1.0, 0.25, &FixedPointOptions::default())?;
    let support: Vec<&Symbol> = r.phi.coeffs.keys().collect();
    let want = [Symbol::unit(2), trees::t1()];
    c.check("support", support.len() == 2 && support.iter().zip(&want).all(|(a, b)| *a == b), support.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "));
    let unit = r.phi.coeffs.get(&trees::t1()).is_some_and(|f| f.values.iter().all(|&v| v == 1.0));
    c.check("unit_first_tree_coefficient", unit, unit);
    let rphi = reconstruct(&r.phi, &r.model)?;
    let q = Phi4Problem { grid: r.model.grid, dealias: false, ..p };
    let sol = solve_renormalized(&q, &wc)?;
    let err = relative_l2(&rphi, &sol.field, r.model.grid.m / 2);
    c.check("solver_gap", err <= 1e-2, format!("{err:.2e}"));
    c.parts.push(format!("t_end={} iterations={}", r.t_end, r.iterations));
    Ok(c)
}

fn c11_ising(ctx: &Ctx) -> CliResult<Checks> {
    let mut c = Checks::new();
    let mut worst_db: f64 = 0.0;
    for (d, n) in [(1usize, 8usize), (2, 3)] {
        let k = KacKernel::new(0.3, d, n)?;
        let sites = k.sites();
        let stream = Stream::named(3, "verify", "balance", d as u64);
        for r in 0..500u64 {
            let s = SpinConfiguration::random(&k, r);
            let j = (stream.uniform(2 * r) * sites as f64) as usize % sites;
            let beta = 3.0 * stream.uniform(2 * r + 1);
            let mut flipped = s.spins.clone();
            flipped[j] = -flipped[j];
            let sf = SpinConfiguration::new(&k, flipped.clone())?;
            let (h, hf) = (hamiltonian(&k, &s.spins), hamiltonian(&k, &flipped));
            let lhs = (-beta * h).exp() * glauber_rate(&k, &s, j, beta);
            let rhs = (-beta * hf).exp() * glauber_rate(&k, &sf, j, beta);
            worst_db = worst_db.max((lhs - rhs).abs() / lhs.max(rhs));
        }
    }
    c.check("detailed_balance_rel", worst_db <= 1e-12, format!("{worst_db:.1e}"));
    let mut worst_norm: f64 = 0.0;
    for d in 1..=3usize {
        for (gamma, n) in [(0.5, 2usize), (0.3, 4), (0.2, 6), (0.1, 12)] {
            if d == 3 && n > 6 {
                continue;
            }
            let k = KacKernel::new(gamma, d, n)?;
            worst_norm = worst_norm.max((k.table.iter().sum::<f64>() - 1.0).abs());
        }
    }
    c.check("kernel_mass_error", worst_norm <= 1e-14, format!("{worst_norm:.1e}"));
    let mut exps_ok = true;
    for d in 1..=3usize {
        let e = ScalingExponents::new(0.1, d)?;
        let den = 4 - d as i64;
        exps_ok &= e.eps_power == Q::new(4, den) && e.alpha_power == Q::new(2 * d as i64, den) && e.delta_power == Q::new(d as i64, den);
        exps_ok &= e.eps == 0.1f64.powf(4.0 / den as f64) && e.alpha == 0.1f64.powf(2.0 * d as f64 / den as f64);
    }
    c.check("scaling_exponents", exps_ok, exps_ok);
    let k = KacKernel::new(0.4, 1, 2)?;
    let beta = 0.8;
    let gibbs = gibbs_weights(&k, beta)?;
    let s0 = SpinConfiguration::uniform(&k, 1)?;
    let tr = glauber_run(&k, &s0, beta, ctx.pick(40_000.0, 10_000.0), 7, &GlauberOptions::default())?;
    let occ = tr.occupation.ok_or_else(|| CliError::Failed("no occupation record".into()))?;
    let total: f64 = occ.iter().sum();
    let tv = 0.5 * occ.iter().zip(&gibbs).map(|(o, g)| (o / total - g).abs()).sum::<f64>();
    c.check("stationary_tv", tv <= ctx.pick(0.02, 0.04), format!("{tv:.4}"));
    Ok(c)
}

/// Small configs exercising every artifact-producing command.
fn determinism_configs(work: &Path) -> CliResult<Vec<(String, RunConfig)>> {
    let set = |pairs: &[(&str, &str)]| pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<Vec<_>>();
    let input = work.join("estimate-input");
    let sample1 = RunConfig::resolve("sample", None, &set(&[("run.seed", "5"), ("grid.d", "1"), ("grid.n", "128"), ("grid.t", "0.25"), ("grid.m", "2048")]))?;
    execute(&sample1, &input)?;
    let noise = input.join("noise.rsf1").display().to_string();
    Ok(vec![
        ("symbols".into(), RunConfig::resolve("symbols", None, &set(&[("structure.d", "3"), ("structure.gamma", "1.05")]))?),
        ("sample".into(), RunConfig::resolve("sample", None, &set(&[("run.seed", "3"), ("grid.n", "16"), ("grid.t", "0.0625"), ("grid.m", "16")]))?),
        ("solve".into(), RunConfig::resolve("solve", None, &set(&[("run.seed", "7"), ("grid.n", "16"), ("grid.t", "0.0625"), ("grid.m", "32")]))?),
        ("ising".into(), RunConfig::resolve("ising", None, &set(&[("run.seed", "2"), ("ising.log_events", "true"), ("ising.rescale", "true")]))?),
        ("estimate".into(), RunConfig::resolve("estimate", None, &set(&[("estimator.input", &noise), ("estimator.k_min", "2"), ("estimator.k_max", "4")]))?),
        ("wick".into(), RunConfig::resolve("wick", None, &set(&[("wick.deltas", "3..4")]))?),
        (
            "reconstruct".into(),
            RunConfig::resolve("reconstruct", None, &set(&[("run.seed", "4"), ("grid.n", "32"), ("grid.t", "0.125"), ("grid.m", "128"), ("model.levels", "2..3"), ("model.basepoints", "4")]))?,
        ),
    ])
}

fn c12_determinism(ctx: &Ctx) -> CliResult<Checks> {
    let mut c = Checks::new();
    let root = ctx.work.join("determinism");
    if root.exists() {
        std::fs::remove_dir_all(&root)?;
    }
    for (name, cfg) in determinism_configs(&root)? {
        let dir = root.join(&name);
        let run = || -> CliResult<(usize, Vec<String>)> {
            let (manifest, failure) = execute(&cfg, &dir.join("first"))?;
            if let Some(e) = failure {
                return Err(e);
            }
            let n = manifest.outputs.len();
            Ok((n, replay(&dir.join("first").join(crate::manifest::MANIFEST_FILE), &dir.join("replay"), false)?))
        };
        match run() {
            Ok((rsf1, diff)) if diff.is_empty() => c.check(&name, true, format!("{rsf1} files identical")),
            Ok((_, diff)) => c.check(&name, false, format!("differs: {}", diff.join(" "))),
            Err(e) => c.check(&name, false, format!("error: {e}")),
        }
    }
    if c.ok {
        std::fs::remove_dir_all(&root)?;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_selection() {
        assert_eq!(select("all").unwrap(), (1..=12).collect::<Vec<_>>());
        assert_eq!(select("symbolic").unwrap(), vec![1, 2, 3]);
        assert_eq!(select("model,4,11").unwrap(), vec![4, 9, 10, 11]);
        assert_eq!(select("determinism").unwrap(), vec![12]);
        assert!(select("13").is_err());
        assert!(select("").is_err());
    }
}
