//! Kac–Ising model on `Z^d/(2N+1)Z^d` with continuous-time Glauber
//! dynamics, and the rescaled local-average field.

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::noise::bump;
use crate::rng::{derive_seed, stream_id};

/// `κ_γ(k) = c_γ γ^d 𝔎(γk)` on the periodic lattice, `𝔎 = Π bump(x_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KacKernel {
    pub gamma: f64,
    pub d: usize,
    /// Lattice side `2N+1`.
    pub side: usize,
    pub normalizer: f64,
    /// Values indexed by periodic offset.
    pub table: Vec<f64>,
    /// Nonzero offsets as `(flat offset, signed coordinates, value)`.
    support: Vec<(Vec<i64>, f64)>,
}

fn signed(i: usize, side: usize) -> i64 {
    let i = i as i64;
    let s = side as i64;
    if i > s / 2 {
        i - s
    } else {
        i
    }
}

fn coords(mut idx: usize, side: usize, d: usize) -> Vec<usize> {
    let mut out = vec![0; d];
    for j in (0..d).rev() {
        out[j] = idx % side;
        idx /= side;
    }
    out
}

fn flat(c: &[usize], side: usize) -> usize {
    c.iter().fold(0, |acc, &v| acc * side + v)
}

impl KacKernel {
    pub fn new(gamma: f64, d: usize, n: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) || d == 0 || n == 0 {
            return Err(Error::Invalid("Kac kernel needs γ ∈ (0,1), d ≥ 1, N ≥ 1".into()));
        }
        let side = 2 * n + 1;
        let sites = side.pow(d as u32);
        let raw: Vec<f64> = (0..sites)
            .map(|i| {
                coords(i, side, d).iter().map(|&c| bump(gamma * signed(c, side) as f64)).product::<f64>() * gamma.powi(d as i32)
            })
            .collect();
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::Invalid("Kac kernel vanishes on the lattice".into()));
        }
        let table: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let support = (0..sites)
            .filter(|&i| table[i] != 0.0)
            .map(|i| (coords(i, side, d).iter().map(|&c| signed(c, side)).collect(), table[i]))
            .collect();
        Ok(KacKernel { gamma, d, side, normalizer: 1.0 / total, table, support })
    }

    pub fn sites(&self) -> usize {
        self.table.len()
    }

    pub fn at_zero(&self) -> f64 {
        self.table[0]
    }

    /// `κ(a - b)` for flat site indices.
    pub fn between(&self, a: usize, b: usize) -> f64 {
        let (ca, cb) = (coords(a, self.side, self.d), coords(b, self.side, self.d));
        let off: Vec<usize> = ca.iter().zip(&cb).map(|(x, y)| (x + self.side - y) % self.side).collect();
        self.table[flat(&off, self.side)]
    }

    fn shifted(&self, site: usize, off: &[i64]) -> usize {
        let c = coords(site, self.side, self.d);
        let s = self.side as i64;
        let moved: Vec<usize> = c.iter().zip(off).map(|(&x, &o)| (x as i64 + o).rem_euclid(s) as usize).collect();
        flat(&moved, self.side)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinConfiguration {
    pub spins: Vec<i8>,
    /// `h(k) = Σ_ℓ κ(k-ℓ)σ(ℓ)`.
    pub fields: Vec<f64>,
    pub time: f64,
}

impl SpinConfiguration {
    pub fn new(kernel: &KacKernel, spins: Vec<i8>) -> Result<Self> {
        if spins.len() != kernel.sites() || spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Invalid("spins must be ±1 on every site".into()));
        }
        let fields = local_fields(kernel, &spins);
        Ok(SpinConfiguration { spins, fields, time: 0.0 })
    }

    pub fn uniform(kernel: &KacKernel, s: i8) -> Result<Self> {
        SpinConfiguration::new(kernel, vec![s; kernel.sites()])
    }

    pub fn random(kernel: &KacKernel, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream_id("ising", "init", 0)));
        let spins = (0..kernel.sites()).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
        SpinConfiguration::new(kernel, spins).expect("valid spins")
    }

    /// `σ ↦ -σ`.
    pub fn negated(&self) -> Self {
        SpinConfiguration { spins: self.spins.iter().map(|s| -s).collect(), fields: self.fields.iter().map(|h| -h).collect(), time: self.time }
    }

    fn flip(&mut self, kernel: &KacKernel, j: usize) {
        let old = self.spins[j] as f64;
        self.spins[j] = -self.spins[j];
        for (off, v) in &kernel.support {
            let k = kernel.shifted(j, off);
            self.fields[k] -= 2.0 * old * v;
        }
    }

    pub fn magnetization(&self) -> f64 {
        self.spins.iter().map(|&s| s as f64).sum::<f64>() / self.spins.len() as f64
    }

    /// Largest deviation between the cached and the recomputed fields.
    pub fn cache_error(&self, kernel: &KacKernel) -> f64 {
        local_fields(kernel, &self.spins).iter().zip(&self.fields).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

pub fn local_fields(kernel: &KacKernel, spins: &[i8]) -> Vec<f64> {
    (0..spins.len())
        .map(|k| kernel.support.iter().map(|(off, v)| v * spins[kernel.shifted(k, &off.iter().map(|o| -o).collect::<Vec<_>>())] as f64).sum())
        .collect()
}

/// `H(σ) = -½ Σ_{k,j} κ(k-j)σ(j)σ(k)`, self-interaction included.
pub fn hamiltonian(kernel: &KacKernel, spins: &[i8]) -> f64 {
    let h = local_fields(kernel, spins);
    -0.5 * spins.iter().zip(&h).map(|(&s, v)| s as f64 * v).sum::<f64>()
}

/// `H(σ^j) - H(σ) = 2σ(j)h(j) - 2κ(0)` from the cached fields.
pub fn delta_h(kernel: &KacKernel, sigma: &SpinConfiguration, j: usize) -> f64 {
    2.0 * sigma.spins[j] as f64 * sigma.fields[j] - 2.0 * kernel.at_zero()
}

/// `c(σ, j) = λ(σ^j)/(λ(σ) + λ(σ^j)) = 1/(1 + e^{βΔH})`.
pub fn glauber_rate(kernel: &KacKernel, sigma: &SpinConfiguration, j: usize, beta: f64) -> f64 {
    rate_from_delta(beta * delta_h(kernel, sigma, j))
}

fn rate_from_delta(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlauberOptions {
    /// Snapshot spacing in microscopic time; `None` keeps only the end state.
    pub snapshot_dt: Option<f64>,
    pub log_events: bool,
    /// Recompute the local fields every this many events and compare.
    pub check_every: Option<u64>,
}

impl Default for GlauberOptions {
    fn default() -> Self {
        GlauberOptions { snapshot_dt: None, log_events: false, check_every: Some(10_000) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub site: usize,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub spins: Vec<i8>,
    pub fields: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub kernel: KacKernel,
    pub beta: f64,
    pub snapshots: Vec<Snapshot>,
    pub events: Vec<Event>,
    pub final_state: SpinConfiguration,
    /// Time spent in each configuration, keyed by bit pattern, when the
    /// lattice has at most 20 sites.
    pub occupation: Option<Vec<f64>>,
    pub proposals: u64,
    pub accepted: u64,
}

fn state_code(spins: &[i8]) -> usize {
    spins.iter().enumerate().fold(0, |acc, (i, &s)| if s > 0 { acc | 1 << i } else { acc })
}

/// Thinning: every site carries a unit-rate Poisson clock; a ring at `j`
/// flips `σ(j)` with probability `c(σ, j) ≤ 1`.
pub fn glauber_run(kernel: &KacKernel, sigma0: &SpinConfiguration, beta: f64, t_end: f64, seed: u64, opts: &GlauberOptions) -> Result<Trajectory> {
    if !(t_end > 0.0) {
        return Err(Error::Invalid("t_end must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream_id("ising", "glauber", 0)));
    let mut s = sigma0.clone();
    let start = s.time;
    let sites = kernel.sites();
    let rate = sites as f64;
    let mut snapshots = Vec::new();
    let mut next_snap = start;
    let mut events = Vec::new();
    let mut occupation = if sites <= 20 { Some(vec![0.0; 1 << sites]) } else { None };
    let (mut proposals, mut accepted) = (0u64, 0u64);
    let stop = start + t_end;
    loop {
        let wait = -(1.0 - rng.gen::<f64>()).ln() / rate;
        let t_next = (s.time + wait).min(stop);
        if let Some(dt) = opts.snapshot_dt {
            while next_snap <= t_next + 1e-12 * stop.max(1.0) && next_snap <= stop + 1e-12 * stop.max(1.0) {
                snapshots.push(Snapshot { time: next_snap, spins: s.spins.clone(), fields: s.fields.clone() });
                next_snap += dt;
            }
        }
        if let Some(occ) = occupation.as_mut() {
            occ[state_code(&s.spins)] += t_next - s.time;
        }
        if t_next >= stop {
            s.time = stop;
            break;
        }
        s.time = t_next;
        let j = rng.gen_range(0..sites);
        let c = glauber_rate(kernel, &s, j, beta);
        let flip = rng.gen::<f64>() < c;
        proposals += 1;
        if flip {
            s.flip(kernel, j);
            accepted += 1;
        }
        if opts.log_events {
            events.push(Event { time: s.time, site: j, accepted: flip });
        }
        if let Some(every) = opts.check_every {
            if proposals % every == 0 && s.cache_error(kernel) > 1e-9 {
                return Err(Error::Invalid(format!("local-field cache drifted after {proposals} events")));
            }
        }
    }
    if opts.snapshot_dt.is_none() {
        snapshots.push(Snapshot { time: s.time, spins: s.spins.clone(), fields: s.fields.clone() });
    }
    Ok(Trajectory { kernel: kernel.clone(), beta, snapshots, events, final_state: s, occupation, proposals, accepted })
}

/// Exact Gibbs weights `λ_{β,γ}(σ)` indexed by bit pattern (site `i` up ⇔ bit `i`).
pub fn gibbs_weights(kernel: &KacKernel, beta: f64) -> Result<Vec<f64>> {
    let sites = kernel.sites();
    if sites > 20 {
        return Err(Error::Invalid("exact enumeration limited to 20 sites".into()));
    }
    let energies: Vec<f64> = (0..1usize << sites)
        .map(|code| {
            let spins: Vec<i8> = (0..sites).map(|i| if code >> i & 1 == 1 { 1 } else { -1 }).collect();
            -beta * hamiltonian(kernel, &spins)
        })
        .collect();
    let top = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = energies.iter().map(|e| (e - top).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / z).collect())
}

/// `(ε, α, δ) = (γ^{4/(4-d)}, γ^{2d/(4-d)}, γ^{d/(4-d)})`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingExponents {
    pub gamma: f64,
    pub d: usize,
    pub eps_power: Ratio<i64>,
    pub alpha_power: Ratio<i64>,
    pub delta_power: Ratio<i64>,
    pub eps: f64,
    pub alpha: f64,
    pub delta: f64,
}

impl ScalingExponents {
    pub fn new(gamma: f64, d: usize) -> Result<Self> {
        if d == 0 || d >= 4 {
            return Err(Error::Invalid(format!("scaling relations undefined for d = {d}")));
        }
        let den = 4 - d as i64;
        let eps_power = Ratio::new(4, den);
        let alpha_power = Ratio::new(2 * d as i64, den);
        let delta_power = Ratio::new(d as i64, den);
        let pow = |r: Ratio<i64>| gamma.powf(*r.numer() as f64 / *r.denom() as f64);
        Ok(ScalingExponents { gamma, d, eps_power, alpha_power, delta_power, eps: pow(eps_power), alpha: pow(alpha_power), delta: pow(delta_power) })
    }
}

/// `X_γ(t, x) = h(t/α, x/ε)/δ` on the grid with `2N+1` points of spacing `ε`
/// and time step `α·snapshot_dt`.
pub fn rescale_field(traj: &Trajectory, exps: &ScalingExponents) -> Result<Field> {
    let k = &traj.kernel;
    if exps.d != k.d || (exps.gamma - k.gamma).abs() > 1e-15 {
        return Err(Error::Invalid("exponents computed for another γ or d".into()));
    }
    let snaps = &traj.snapshots;
    if snaps.len() < 2 {
        return Err(Error::Unresolved("need at least two snapshots".into()));
    }
    let dt = snaps[1].time - snaps[0].time;
    if snaps.windows(2).any(|w| ((w[1].time - w[0].time) - dt).abs() > 1e-9 * dt.max(1.0)) {
        return Err(Error::Unresolved("snapshots are not equally spaced".into()));
    }
    let m = snaps.len() - 1;
    let grid = Grid::new(k.d, k.side, k.side as f64 * exps.eps, m as f64 * dt * exps.alpha, m)?;
    let values = snaps.iter().flat_map(|s| s.fields.iter().map(|h| h / exps.delta)).collect();
    Field::from_values(grid, values)
}

/// `𝔠_γ` default: `log(1/γ)` in d = 2, zero otherwise.
pub fn default_c_gamma(gamma: f64, d: usize) -> f64 {
    if d == 2 {
        (1.0 / gamma).ln()
    } else {
        0.0
    }
}

/// `β = 1 + α(𝔠_γ - m²)`.
pub fn critical_shift(mass_sq: f64, gamma: f64, d: usize, c_gamma: f64) -> Result<f64> {
    Ok(1.0 + ScalingExponents::new(gamma, d)?.alpha * (c_gamma - mass_sq))
}
