//! Command implementations. Each writes its artifacts into an output
//! directory; `execute` adds the manifest.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rslab_core::algebra::renorm::RenormMap;
use rslab_core::algebra::{generate_symbols, trees, GenerateOptions, OrderExpr, RegularityStructure, RuleSet, Symbol, Truncation};
use rslab_core::error::Error as CoreError;
use rslab_core::grid::{Field, Grid};
use rslab_core::heat::HeatKernelSpec;
use rslab_core::ising::*;
use rslab_core::model::*;
use rslab_core::noise::{mollify, sample_white_noise, Mollifier, Profile};
use rslab_core::phi4::*;
use rslab_core::regularity::*;
use rslab_core::wick::{compute_c_delta, compute_c_tilde_delta, WickConstants};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::verify;

/// What a command reports back besides its files.
#[derive(Debug, Default)]
pub struct Produced {
    pub inputs: Vec<PathBuf>,
    pub lineage: Vec<(u64, u64)>,
    /// Set when artifacts were written but the run itself failed.
    pub failure: Option<CliError>,
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn write_field(f: &Field, path: &Path) -> CliResult<()> {
    f.write_rsf1(BufWriter::new(File::create(path)?))?;
    Ok(())
}

fn grid_of(cfg: &RunConfig) -> CliResult<Grid> {
    Ok(Grid::new(cfg.get("grid", "d")?, cfg.get("grid", "n")?, cfg.get("grid", "l")?, cfg.get("grid", "t")?, cfg.get("grid", "m")?)?)
}

fn mollifier_of(cfg: &RunConfig, g: &Grid) -> CliResult<Option<Mollifier>> {
    let delta = cfg.get_auto::<f64>("noise", "delta")?.unwrap_or(2.0 * g.dx().max(g.dt().sqrt()));
    let profile = match cfg.raw("noise", "profile")? {
        "none" => return Ok(None),
        "spectral" => Profile::SpectralCutoff,
        "gaussian" => Profile::GaussianBump,
        p => return Err(CliError::Config(format!("noise.profile: unknown profile '{p}'"))),
    };
    Ok(Some(Mollifier::new(profile, delta)))
}

fn order_of(text: &str) -> CliResult<OrderExpr> {
    Ok(OrderExpr::new(OrderExpr::parse_rational(text)?, 0))
}

fn run_symbols(cfg: &RunConfig, out: &Path) -> CliResult<Produced> {
    let rule = RuleSet::by_name(cfg.raw("structure", "rule")?)?;
    let d: usize = cfg.get("structure", "d")?;
    let gamma = order_of(cfg.raw("structure", "gamma")?)?;
    let truncation = match cfg.raw("structure", "truncation")? {
        "product" => Truncation::ProductAware,
        "strict" => Truncation::Strict,
        t => return Err(CliError::Config(format!("structure.truncation: unknown mode '{t}'"))),
    };
    let s = generate_symbols(&rule, d, gamma, &GenerateOptions { truncation, ..Default::default() })?;
    let mut w = csv_writer(&out.join("symbols.csv"))?;
    w.write_record(["symbol", "order", "kappa_coefficient", "order_at_kappa"])?;
    for ((sym, ord, k), (tau, _)) in s.table().into_iter().zip(&s.symbols) {
        w.write_record([sym, ord, k.to_string(), format!("{}", s.order_f64(tau))])?;
    }
    w.flush()?;
    Ok(Produced::default())
}

fn run_sample(cfg: &RunConfig, out: &Path) -> CliResult<Produced> {
    let g = grid_of(cfg)?;
    let seed: u64 = cfg.get("run", "seed")?;
    let xi = sample_white_noise(&g, seed);
    write_field(&xi, &out.join("noise.rsf1"))?;
    if let Some(m) = mollifier_of(cfg, &g)? {
        write_field(&mollify(&xi, &m)?, &out.join("noise_mollified.rsf1"))?;
    }
    Ok(Produced { lineage: xi.seed_lineage.clone(), ..Default::default() })
}

fn run_solve(cfg: &RunConfig, out: &Path) -> CliResult<Produced> {
    let g = grid_of(cfg)?;
    let seed: u64 = cfg.get("run", "seed")?;
    let form = match cfg.raw("solver", "form")? {
        "naive" => Formulation::Naive,
        "renormalized" => Formulation::Renormalized,
        "remainder" => Formulation::Remainder,
        f => return Err(CliError::Config(format!("solver.form: unknown formulation '{f}'"))),
    };
    let mut p = Phi4Problem::new(g, seed, form)?.with_mass(cfg.get("solver", "mass_sq")?);
    match mollifier_of(cfg, &g)? {
        Some(m) => p = p.with_mollifier(m),
        None => return Err(CliError::Config("solve needs a mollifier (noise.profile != none)".into())),
    }
    p.dealias = cfg.get_bool("solver", "dealias")?;
    p.blowup_cap = cfg.get("solver", "blowup_cap")?;
    let c = WickConstants::grid_spectral(&g, &p.mollifier)?;
    let res = match form {
        Formulation::Naive => solve_naive(&p)?,
        Formulation::Renormalized => solve_renormalized(&p, &c)?,
        Formulation::Remainder => solve_remainder(&p, &wick_fields(&p, &c)?)?,
    };
    write_field(&res.field, &out.join("phi.rsf1"))?;
    if let Some(v) = &res.remainder {
        write_field(v, &out.join("v.rsf1"))?;
    }
    let mut w = csv_writer(&out.join("diagnostics.csv"))?;
    w.write_record(["t", "sup_norm", "L2_norm", "energy"])?;
    let dg = &res.diagnostics;
    for i in 0..dg.t.len() {
        w.write_record([dg.t[i], dg.sup[i], dg.l2[i], dg.energy[i]].map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    let mut w = csv_writer(&out.join("constants.csv"))?;
    w.write_record(["c_delta", "delta", "convention"])?;
    w.write_record([format!("{:e}", c.c_delta), format!("{:e}", c.delta), c.convention()])?;
    w.flush()?;
    let failure = res.blowup_time.map(|t| CliError::Numerical(CoreError::Blowup(t)));
    Ok(Produced { lineage: res.field.seed_lineage.clone(), failure, ..Default::default() })
}

fn run_ising(cfg: &RunConfig, out: &Path) -> CliResult<Produced> {
    let (n, d, gamma): (usize, usize, f64) = (cfg.get("ising", "n")?, cfg.get("ising", "d")?, cfg.get("ising", "gamma")?);
    let seed: u64 = cfg.get("run", "seed")?;
    let k = KacKernel::new(gamma, d, n)?;
    let beta = match cfg.get_auto::<f64>("ising", "beta")? {
        Some(b) => b,
        None => critical_shift(cfg.get("ising", "mass_sq")?, gamma, d, default_c_gamma(gamma, d))?,
    };
    let t_end: f64 = cfg.get("ising", "t_end")?;
    let opts = GlauberOptions {
        snapshot_dt: Some(cfg.get("ising", "snapshot_dt")?),
        log_events: cfg.get_bool("ising", "log_events")?,
        ..Default::default()
    };
    let s0 = SpinConfiguration::random(&k, seed);
    let tr = glauber_run(&k, &s0, beta, t_end, seed, &opts)?;
    let m = tr.snapshots.len().saturating_sub(1);
    if m == 0 {
        return Err(CliError::Config("ising: need at least two snapshots".into()));
    }
    let span = tr.snapshots[m].time - tr.snapshots[0].time;
    let grid = Grid::new(d, k.side, k.side as f64, span, m)?;
    let values = tr.snapshots.iter().flat_map(|s| s.spins.iter().map(|&v| v as f64)).collect();
    write_field(&Field::from_values(grid, values)?, &out.join("snapshots.rsf1"))?;
    if cfg.get_bool("ising", "rescale")? {
        write_field(&rescale_field(&tr, &ScalingExponents::new(gamma, d)?)?, &out.join("rescaled.rsf1"))?;
    }
    if opts.log_events {
        let mut w = csv_writer(&out.join("events.csv"))?;
        w.write_record(["time", "site", "accepted"])?;
        for e in &tr.events {
            w.write_record([format!("{:e}", e.time), e.site.to_string(), e.accepted.to_string()])?;
        }
        w.flush()?;
    }
    let mut w = csv_writer(&out.join("summary.csv"))?;
    w.write_record(["beta", "proposals", "accepted", "final_magnetization"])?;
    w.write_record([format!("{beta:e}"), tr.proposals.to_string(), tr.accepted.to_string(), format!("{:e}", tr.final_state.magnetization())])?;
    w.flush()?;
    Ok(Produced::default())
}

fn run_estimate(cfg: &RunConfig, out: &Path) -> CliResult<Produced> {
    let input = PathBuf::from(cfg.raw("estimator", "input")?);
    if input.as_os_str().is_empty() {
        return Err(CliError::Config("estimator.input is required".into()));
    }
    let f = Field::read_rsf1(std::io::BufReader::new(File::open(&input)?))?;
    let mut sc = SweepConfig::default_for(f.grid.d);
    if let Some(k) = cfg.get_auto("estimator", "k_min")? {
        sc.k_min = k;
    }
    if let Some(k) = cfg.get_auto("estimator", "k_max")? {
        sc.k_max = k;
    }
    match cfg.raw("estimator", "max_basepoints")? {
        "auto" => {}
        "all" => sc.max_basepoints = None,
        v => sc.max_basepoints = Some(v.parse().map_err(|_| CliError::Config(format!("estimator.max_basepoints: '{v}'")))?),
    }
    sc.aggregation = match cfg.raw("estimator", "aggregation")? {
        "sup" => Aggregation::Sup,
        "rms" => Aggregation::Rms,
        a => return Err(CliError::Config(format!("estimator.aggregation: unknown '{a}'"))),
    };
    sc.periodic = cfg.get_bool("estimator", "periodic")?;
    let sweep = match cfg.raw("estimator", "mode")? {
        "negative" => besov_statistics(&f, &sc)?,
        "positive" => positive_order_statistics(&f, cfg.get("estimator", "degree")?, &sc)?,
        m => return Err(CliError::Config(format!("estimator.mode: unknown '{m}'"))),
    };
    let est = estimate_exponent(&sweep)?;
    std::fs::write(out.join("sweep.csv"), sweep.to_csv())?;
    std::fs::write(out.join("estimate.csv"), est.to_csv())?;
    Ok(Produced { inputs: vec![input], lineage: f.seed_lineage.clone(), ..Default::default() })
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `max_i |v_i / mean(v) - 1|`.
pub fn spread(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x / mean - 1.0).abs()).fold(0.0, f64::max)
}

fn run_wick(cfg: &RunConfig, out: &Path) -> CliResult<Produced> {
    let d: usize = cfg.get("wick", "d")?;
    let (a, b) = cfg.get_range("wick", "deltas")?;
    let spec = HeatKernelSpec::torus(d, cfg.get("wick", "l")?);
    let tilde = cfg.get_bool("wick", "tilde")?;
    if tilde && d != 3 {
        return Err(CliError::Config("wick.tilde needs d = 3".into()));
    }
    let mut w = csv_writer(&out.join("wick.csv"))?;
    w.write_record(["j", "delta", "c_delta", "c_tilde_delta"])?;
    let (mut logs, mut cs) = (Vec::new(), Vec::new());
    for j in a..=b {
        let delta = 2f64.powi(-j);
        let c = compute_c_delta(delta, d, &spec)?;
        let ct = if tilde { format!("{:e}", compute_c_tilde_delta(delta, d, &spec)?) } else { String::new() };
        w.write_record([j.to_string(), format!("{delta:e}"), format!("{c:e}"), ct])?;
        logs.push((1.0 / delta).ln());
        cs.push(c);
    }
    w.flush()?;
    let mut w = csv_writer(&out.join("fit.csv"))?;
    w.write_record(["quantity", "value"])?;
    if cs.len() >= 2 {
        w.write_record(["log_slope".to_string(), format!("{:e}", slope(&logs, &cs))])?;
        let ratio: Vec<f64> = cs.iter().zip(&logs).map(|(c, l)| c / l).collect();
        w.write_record(["c_over_log_spread".to_string(), format!("{:e}", spread(&ratio))])?;
        let scaled: Vec<f64> = cs.iter().zip(&logs).map(|(c, l)| c * (-l).exp()).collect();
        w.write_record(["c_times_delta_spread".to_string(), format!("{:e}", spread(&scaled))])?;
    }
    w.flush()?;
    Ok(Produced::default())
}

fn run_reconstruct(cfg: &RunConfig, out: &Path) -> CliResult<Produced> {
    let g = grid_of(cfg)?;
    if g.d != 2 {
        return Err(CliError::Config("reconstruct runs the Φ⁴ fixed point in d = 2".into()));
    }
    let seed: u64 = cfg.get("run", "seed")?;
    let gamma_text = cfg.raw("model", "gamma")?;
    let gamma = order_of(gamma_text)?;
    let structure = RegularityStructure::phi4(2, gamma.clone())?;
    let p = Phi4Problem::new(g, seed, Formulation::Renormalized)?;
    let xi = p.noise()?;
    let c = WickConstants::grid_spectral(&g, &p.mollifier)?;
    let model = renormalized_model(&xi, &structure, &RenormMap::phi4_2(), &c, IntegrationKernel::Heat { mass_sq: 0.0 })?;
    let opts = FixedPointOptions { tol: cfg.get("model", "tol")?, max_iter: cfg.get("model", "max_iter")?, ..Default::default() };
    let r = abstract_fixed_point(&model, gamma.to_f64(0.0), cfg.get("model", "t_end")?, &opts)?;
    r.phi.write_dir(&r.model, &out.join("phi"))?;
    let rphi = reconstruct(&r.phi, &r.model)?;
    write_field(&rphi, &out.join("r_phi.rsf1"))?;
    let q = Phi4Problem { grid: r.model.grid, dealias: false, ..p };
    let sol = solve_renormalized(&q, &c)?;
    let half = r.model.grid.m / 2;
    let mut w = csv_writer(&out.join("fixed_point.csv"))?;
    w.write_record(["t_end", "iterations", "residual", "solver_gap_half"])?;
    w.write_record([format!("{:e}", r.t_end), r.iterations.to_string(), format!("{:e}", r.residual), format!("{:e}", relative_l2(&rphi, &sol.field, half))])?;
    w.flush()?;
    let (k0, k1) = cfg.get_range("model", "levels")?;
    let levels: Vec<i32> = (k0..=k1).collect();
    let points: usize = cfg.get("model", "basepoints")?;
    let mut rows = Vec::new();
    for tau in [Symbol::Xi, trees::t1(), trees::tn(2, 2), trees::tn(2, 3)] {
        let (e, k) = r.model.bound_fit(&tau, &levels, points)?;
        rows.push((tau, e, k));
    }
    std::fs::write(out.join("bound_fit.csv"), bound_fit_csv(&rows))?;
    Ok(Produced { lineage: xi.seed_lineage.clone(), ..Default::default() })
}

fn run_verify(cfg: &RunConfig, out: &Path) -> CliResult<Produced> {
    let suite = cfg.raw("verify", "suite")?;
    let fast = cfg.get_bool("verify", "fast")?;
    let outcomes = verify::run_suite(suite, fast, out, &mut |o| println!("{}", o.line()))?;
    verify::write_csv(&outcomes, &out.join("verify.csv"))?;
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id.to_string()).collect();
    let failure = (!failed.is_empty()).then(|| CliError::Failed(format!("criteria failed: {}", failed.join(", "))));
    Ok(Produced { failure, ..Default::default() })
}

/// Runs `cfg` into `out` without writing a manifest.
pub fn dispatch(cfg: &RunConfig, out: &Path) -> CliResult<Produced> {
    std::fs::create_dir_all(out)?;
    match cfg.command() {
        "symbols" => run_symbols(cfg, out),
        "sample" => run_sample(cfg, out),
        "solve" => run_solve(cfg, out),
        "ising" => run_ising(cfg, out),
        "estimate" => run_estimate(cfg, out),
        "wick" => run_wick(cfg, out),
        "reconstruct" => run_reconstruct(cfg, out),
        "verify" => run_verify(cfg, out),
        c => Err(CliError::Config(format!("unknown command '{c}'"))),
    }
}

/// Runs `cfg` into `out` and writes the manifest. Returns the manifest and
/// the run's failure, if any (artifacts and manifest are written either way).
pub fn execute(cfg: &RunConfig, out: &Path) -> CliResult<(RunManifest, Option<CliError>)> {
    let start = Instant::now();
    let produced = dispatch(cfg, out)?;
    let lineage: Vec<(u64, u64)> = produced.lineage.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let manifest = RunManifest::collect(cfg, out, &produced.inputs, start.elapsed().as_secs_f64(), lineage)?;
    manifest.write(out)?;
    Ok((manifest, produced.failure))
}

/// Re-runs the config stored in `manifest_path` into `out` and returns the
/// outputs (RSF1 only when `rsf1_only`) whose digests differ.
pub fn replay(manifest_path: &Path, out: &Path, rsf1_only: bool) -> CliResult<Vec<String>> {
    let original = RunManifest::read(manifest_path)?;
    let (again, _) = execute(&original.config, out)?;
    Ok(original.differing_outputs(&again, rsf1_only))
}
