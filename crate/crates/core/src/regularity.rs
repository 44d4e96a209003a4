//! Empirical parabolic Hölder exponents from multiscale pairings with a
//! fixed bump, optionally after subtracting a local polynomial fit.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::noise::{axis_conv, unit_weights};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    NegativeOrder,
    /// Subtract the least-squares fit of parabolic degree `< degree`.
    PositiveOrder { degree: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregation {
    Sup,
    Rms,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub k_min: i32,
    pub k_max: i32,
    /// Let test functions wrap around the spatial period.
    pub periodic: bool,
    pub aggregation: Aggregation,
    /// Aggregate over this many evenly spread lattice points per level
    /// instead of the whole lattice.
    pub max_basepoints: Option<usize>,
}

impl SweepConfig {
    pub fn levels(k_min: i32, k_max: i32) -> Self {
        SweepConfig { k_min, k_max, periodic: true, aggregation: Aggregation::Sup, max_basepoints: None }
    }

    /// Default fit levels for the usual resolutions, sup over a fixed
    /// number of base points per level.
    pub fn default_for(d: usize) -> Self {
        if d == 1 {
            SweepConfig { max_basepoints: Some(24), ..SweepConfig::levels(2, 6) }
        } else {
            SweepConfig { max_basepoints: Some(16), ..SweepConfig::levels(2, 5) }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelStat {
    pub k: i32,
    pub lambda: f64,
    pub stat: f64,
    pub n_basepoints: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaleSweep {
    pub mode: Mode,
    pub levels: Vec<LevelStat>,
    /// Levels left out, with the reason.
    pub dropped: Vec<(i32, String)>,
}

impl ScaleSweep {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,lambda,sup_stat,n_basepoints\n");
        for l in &self.levels {
            s.push_str(&format!("{},{:e},{:e},{}\n", l.k, l.lambda, l.stat, l.n_basepoints));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityEstimate {
    pub alpha_hat: f64,
    pub residual: f64,
    pub levels: Vec<i32>,
    pub mode: Mode,
}

impl RegularityEstimate {
    pub fn to_csv(&self) -> String {
        let mode = match self.mode {
            Mode::NegativeOrder => "negative-order".to_string(),
            Mode::PositiveOrder { degree } => format!("positive-order-{degree}"),
        };
        format!("alpha_hat,residual,mode\n{:e},{:e},{}\n", self.alpha_hat, self.residual, mode)
    }
}

/// Trapezoid weights on `[-r, r]`, either unit mass or normalized first
/// moment.
fn box_weights(r: f64, h: f64, moment: bool) -> Vec<(i64, f64)> {
    let k = (r / h + 1e-9).floor() as i64;
    if k == 0 {
        return vec![(0, if moment { 0.0 } else { 1.0 })];
    }
    let trap = |o: i64| if o.abs() == k { 0.5 } else { 1.0 };
    if moment {
        let s: f64 = (-k..=k).map(|o| trap(o) * (o as f64 * h).powi(2)).sum();
        (-k..=k).map(|o| (o, trap(o) * o as f64 * h / s)).collect()
    } else {
        (-k..=k).map(|o| (o, trap(o) / (2 * k) as f64)).collect()
    }
}

/// Separable weighted sums at base times `time_idx` and spatial nodes every
/// `stride` cells; time-major output.
fn lattice(f: &Field, time_idx: &[usize], wt: &[(i64, f64)], wx: &[Vec<(i64, f64)>], stride: usize) -> Vec<f64> {
    let g = f.grid;
    let cells = g.cells();
    let slabs: Vec<Vec<f64>> = time_idx
        .par_iter()
        .map(|&ti| {
            let mut acc = vec![0.0; cells];
            for &(o, w) in wt {
                let sl = f.slice((ti as i64 + o) as usize);
                acc.iter_mut().zip(sl).for_each(|(a, v)| *a += w * v);
            }
            let mut shape = vec![g.n; g.d];
            for (axis, w) in wx.iter().enumerate() {
                acc = axis_conv(&acc, &shape, axis, w, stride, g.n);
                shape[axis] = g.n.div_ceil(stride);
            }
            acc
        })
        .collect();
    slabs.concat()
}

fn level(f: &Field, k: i32, mode: Mode, cfg: &SweepConfig) -> Result<LevelStat> {
    let g = f.grid;
    let (dt, dx) = (g.dt(), g.dx());
    let lambda = (2.0f64).powi(-k);
    if lambda < 4.0 * dx * (1.0 - 1e-9) || lambda * lambda < 4.0 * dt * (1.0 - 1e-9) {
        return Err(Error::Unresolved(format!("lambda 2^-{k} spans fewer than 4 cells")));
    }
    if matches!(mode, Mode::PositiveOrder { .. }) && lambda * lambda < 8.0 * dt * (1.0 - 1e-9) {
        return Err(Error::Unresolved(format!("local fit box at lambda 2^-{k} spans fewer than 2 time cells")));
    }
    if 2.0 * lambda > g.l {
        return Err(Error::Invalid(format!("lambda 2^-{k} wider than the period")));
    }
    let t_stride = ((lambda * lambda / dt).round() as usize).max(1);
    let t_reach = (lambda * lambda / dt).ceil() as usize;
    let time_idx: Vec<usize> = (0..=g.m).step_by(t_stride).filter(|&i| i >= t_reach && i + t_reach <= g.m).collect();
    if time_idx.is_empty() {
        return Err(Error::Invalid(format!("time horizon too short for lambda 2^-{k}")));
    }
    let stride = ((lambda / dx).round() as usize).max(1);
    let eta_t = unit_weights(0.0, lambda * lambda, dt);
    let eta_x = unit_weights(0.0, lambda, dx);
    let d = g.d;
    let paired = lattice(f, &time_idx, &eta_t, &vec![eta_x.clone(); d], stride);

    let mut skipped = 0;
    let values: Vec<f64> = match mode {
        Mode::NegativeOrder => paired.iter().map(|v| v.abs()).collect(),
        Mode::PositiveOrder { degree } => {
            if !(1..=2).contains(&degree) {
                return Err(Error::Invalid(format!("polynomial degree {degree} not in 1..=2")));
            }
            let r = lambda / 2.0;
            let bt = box_weights(r * r, dt, false);
            let bx = box_weights(r, dx, false);
            let mean = lattice(f, &time_idx, &bt, &vec![bx.clone(); d], stride);
            let mut resid: Vec<f64> = paired.iter().zip(&mean).map(|(p, c)| p - c).collect();
            if degree == 2 {
                let lin = box_weights(r, dx, true);
                if lin.len() < 3 {
                    skipped = resid.len();
                    resid.clear();
                } else {
                    let first_moment: f64 = eta_x.iter().map(|&(o, w)| o as f64 * dx * w).sum();
                    for j in 0..d {
                        let mut wx = vec![bx.clone(); d];
                        wx[j] = lin.clone();
                        let slope = lattice(f, &time_idx, &bt, &wx, stride);
                        resid.iter_mut().zip(&slope).for_each(|(v, s)| *v -= s * first_moment);
                    }
                }
            }
            resid.iter().map(|v| v.abs()).collect()
        }
    };

    let out_len = g.n.div_ceil(stride);
    let per_time = out_len.pow(d as u32);
    let keep = |flat: usize| -> bool {
        if cfg.periodic {
            return true;
        }
        let mut idx = flat % per_time;
        for _ in 0..d {
            let p = (idx % out_len * stride) as f64 * dx;
            idx /= out_len;
            if p - lambda < -1e-12 || p + lambda > (g.n - 1) as f64 * dx + 1e-12 {
                return false;
            }
        }
        true
    };
    let mut kept: Vec<f64> = values.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, v)| *v).collect();
    if let Some(n) = cfg.max_basepoints {
        if kept.len() > n {
            kept = (0..n).map(|i| kept[i * kept.len() / n]).collect();
        }
    }
    if kept.is_empty() {
        return Err(Error::Unresolved(format!("no usable base points at lambda 2^-{k}")));
    }
    let stat = match cfg.aggregation {
        Aggregation::Sup => kept.iter().cloned().fold(0.0, f64::max),
        Aggregation::Rms => (kept.iter().map(|v| v * v).sum::<f64>() / kept.len() as f64).sqrt(),
    };
    Ok(LevelStat { k, lambda, stat, n_basepoints: kept.len(), skipped })
}

fn sweep(f: &Field, mode: Mode, cfg: &SweepConfig) -> Result<ScaleSweep> {
    let mut levels = Vec::new();
    let mut dropped = Vec::new();
    for k in cfg.k_min..=cfg.k_max {
        match level(f, k, mode, cfg) {
            Ok(l) => levels.push(l),
            Err(Error::Unresolved(msg)) => dropped.push((k, msg)),
            Err(e) => return Err(e),
        }
    }
    Ok(ScaleSweep { mode, levels, dropped })
}

/// `s_k = sup_z |⟨f, S^{λ_k}_z η⟩|` over the parabolic lattice of spacing
/// `(λ_k², λ_k)`.
pub fn besov_statistics(f: &Field, cfg: &SweepConfig) -> Result<ScaleSweep> {
    sweep(f, Mode::NegativeOrder, cfg)
}

/// As `besov_statistics`, with the local least-squares polynomial of
/// parabolic degree `< degree` on the `λ/2`-box subtracted first.
pub fn positive_order_statistics(f: &Field, degree: u32, cfg: &SweepConfig) -> Result<ScaleSweep> {
    sweep(f, Mode::PositiveOrder { degree }, cfg)
}

fn fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum::<f64>() / n).sqrt();
    (slope, rms)
}

/// Least-squares slope of `log₂ s_k` against `log₂ λ_k`.
pub fn estimate_exponent(s: &ScaleSweep) -> Result<RegularityEstimate> {
    estimate_pooled(std::slice::from_ref(s))
}

/// Slope of the mean of `log₂ s_k` over several sweeps with the same levels.
pub fn estimate_pooled(sweeps: &[ScaleSweep]) -> Result<RegularityEstimate> {
    let first = sweeps.first().ok_or_else(|| Error::Invalid("no sweeps".into()))?;
    let ks: Vec<i32> = first.levels.iter().map(|l| l.k).collect();
    if sweeps.iter().any(|s| s.levels.iter().map(|l| l.k).ne(ks.iter().cloned())) {
        return Err(Error::Invalid("sweeps cover different levels".into()));
    }
    if ks.len() < 3 {
        return Err(Error::Unresolved(format!("{} usable levels, need 3", ks.len())));
    }
    if sweeps.iter().all(|s| s.levels.iter().all(|l| l.stat == 0.0)) {
        return Ok(RegularityEstimate { alpha_hat: f64::INFINITY, residual: 0.0, levels: ks, mode: first.mode });
    }
    let x: Vec<f64> = ks.iter().map(|&k| -(k as f64)).collect();
    let y: Vec<f64> = (0..ks.len())
        .map(|i| sweeps.iter().map(|s| s.levels[i].stat.log2()).sum::<f64>() / sweeps.len() as f64)
        .collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("zero statistic on some but not all levels".into()));
    }
    let (alpha_hat, residual) = fit(&x, &y);
    Ok(RegularityEstimate { alpha_hat, residual, levels: ks, mode: first.mode })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn synthetic(stats: &[(i32, f64)]) -> ScaleSweep {
        ScaleSweep {
            mode: Mode::NegativeOrder,
            levels: stats.iter().map(|&(k, s)| LevelStat { k, lambda: 2f64.powi(-k), stat: s, n_basepoints: 1, skipped: 0 }).collect(),
            dropped: vec![],
        }
    }

    #[test]
    fn exact_power_law() {
        let s = synthetic(&(2..7).map(|k| (k, 2f64.powf(-k as f64 / 2.0))).collect::<Vec<_>>());
        let e = estimate_exponent(&s).unwrap();
        assert!((e.alpha_hat - 0.5).abs() < 1e-14 && e.residual < 1e-14);
    }

    #[test]
    fn zero_and_constant_fields() {
        let g = Grid::new(1, 128, 1.0, 0.25, 1024).unwrap();
        let cfg = SweepConfig::levels(2, 5);
        let z = besov_statistics(&Field::zeros(g), &cfg).unwrap();
        assert!(z.levels.iter().all(|l| l.stat == 0.0));
        assert_eq!(estimate_exponent(&z).unwrap().alpha_hat, f64::INFINITY);
        let one = besov_statistics(&Field::constant(g, 1.0), &cfg).unwrap();
        assert!(one.levels.iter().all(|l| (l.stat - 1.0).abs() < 1e-13));
    }

    #[test]
    fn unresolved_levels_are_dropped() {
        let g = Grid::new(1, 64, 1.0, 0.25, 1024).unwrap();
        let s = besov_statistics(&Field::constant(g, 1.0), &SweepConfig::levels(2, 6)).unwrap();
        assert_eq!(s.levels.len(), 3);
        assert_eq!(s.dropped.iter().map(|p| p.0).collect::<Vec<_>>(), vec![5, 6]);
    }
}
