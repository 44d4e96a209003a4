use proptest::prelude::*;
use rslab_core::ising::*;

fn spins_from_code(code: usize, sites: usize) -> Vec<i8> {
    (0..sites).map(|i| if code >> i & 1 == 1 { 1 } else { -1 }).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn detailed_balance_holds(seed in any::<u64>(), j in 0usize..49, beta in 0.0f64..3.0) {
        let k = KacKernel::new(0.3, 2, 3).unwrap();
        let s = SpinConfiguration::random(&k, seed);
        let mut flipped = s.spins.clone();
        flipped[j] = -flipped[j];
        let sf = SpinConfiguration::new(&k, flipped.clone()).unwrap();
        let (h, hf) = (hamiltonian(&k, &s.spins), hamiltonian(&k, &flipped));
        let lhs = (-beta * h).exp() * glauber_rate(&k, &s, j, beta);
        let rhs = (-beta * hf).exp() * glauber_rate(&k, &sf, j, beta);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(rhs));
        prop_assert!((delta_h(&k, &s, j) - (hf - h)).abs() < 1e-12);
    }

    #[test]
    fn kernel_normalization_exact(gamma in 0.05f64..0.95, n in 1usize..12) {
        let k = KacKernel::new(gamma, 1, n).unwrap();
        prop_assert!((k.table.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        prop_assert!(k.table.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rate_is_symmetric_flip_at_zero_beta(seed in any::<u64>(), j in 0usize..11) {
        let k = KacKernel::new(0.4, 1, 5).unwrap();
        let s = SpinConfiguration::random(&k, seed);
        prop_assert_eq!(glauber_rate(&k, &s, j, 0.0), 0.5);
    }
}

#[test]
fn zero_energy_change_gives_half() {
    // every neighbour of site 0 differs in sign pattern so that h(0) = κ(0)σ(0)
    let k = KacKernel::new(0.5, 1, 1).unwrap();
    let s = SpinConfiguration::new(&k, vec![1, 1, -1]).unwrap();
    let dh = delta_h(&k, &s, 0);
    assert!(dh.abs() < 1e-15, "ΔH = {dh}");
    assert!((glauber_rate(&k, &s, 0, 1.7) - 0.5).abs() < 1e-15);
}

#[test]
fn small_lattice_matches_gibbs() {
    let k = KacKernel::new(0.4, 1, 2).unwrap();
    let beta = 0.8;
    let gibbs = gibbs_weights(&k, beta).unwrap();
    let s0 = SpinConfiguration::uniform(&k, 1).unwrap();
    let tr = glauber_run(&k, &s0, beta, 40_000.0, 7, &GlauberOptions::default()).unwrap();
    let occ = tr.occupation.unwrap();
    let total: f64 = occ.iter().sum();
    let tv = 0.5 * occ.iter().zip(&gibbs).map(|(o, g)| (o / total - g).abs()).sum::<f64>();
    println!("TV = {tv:.4}");
    assert!(tv <= 0.02);
    // exact-enumeration sanity: flip symmetry of the weights
    for code in 0..32 {
        assert!((gibbs[code] - gibbs[31 ^ code]).abs() < 1e-15);
        let e = hamiltonian(&k, &spins_from_code(code, 5));
        let e2 = hamiltonian(&k, &spins_from_code(31 ^ code, 5));
        assert_eq!(e, e2);
    }
}

#[test]
fn infinite_temperature_marginals() {
    let k = KacKernel::new(0.3, 1, 10).unwrap();
    let sites = k.sites();
    let reps = 400;
    let ups: Vec<f64> = (0..reps)
        .map(|r| {
            let s0 = SpinConfiguration::uniform(&k, 1).unwrap();
            let tr = glauber_run(&k, &s0, 0.0, 20.0, r, &GlauberOptions::default()).unwrap();
            tr.final_state.spins.iter().filter(|&&s| s > 0).count() as f64
        })
        .collect();
    let n = (reps as usize * sites) as f64;
    let p = ups.iter().sum::<f64>() / n;
    let stderr = (0.25 / n).sqrt();
    assert!((p - 0.5).abs() <= 3.0 * stderr, "p = {p}, stderr = {stderr}");
}

#[test]
fn spin_flip_symmetry_in_law() {
    let k = KacKernel::new(0.25, 1, 8).unwrap();
    let beta = 0.9;
    let stats = |negate: bool| -> (f64, f64) {
        let m2: Vec<f64> = (0..200u64)
            .map(|r| {
                let s = SpinConfiguration::random(&k, r);
                let s = if negate { s.negated() } else { s };
                let seed = if negate { 10_000 + r } else { r };
                let tr = glauber_run(&k, &s, beta, 10.0, seed, &GlauberOptions::default()).unwrap();
                tr.final_state.magnetization().powi(2)
            })
            .collect();
        let mean = m2.iter().sum::<f64>() / m2.len() as f64;
        let var = m2.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m2.len() - 1) as f64;
        (mean, (var / m2.len() as f64).sqrt())
    };
    let (a, sa) = stats(false);
    let (b, sb) = stats(true);
    assert!((a - b).abs() <= 3.0 * (sa * sa + sb * sb).sqrt(), "{a} vs {b}");
}

#[test]
fn magnetization_autocorrelation_decays() {
    let k = KacKernel::new(0.2, 1, 15).unwrap();
    let s0 = SpinConfiguration::random(&k, 3);
    let opts = GlauberOptions { snapshot_dt: Some(0.5), ..Default::default() };
    let tr = glauber_run(&k, &s0, 0.6, 4000.0, 11, &opts).unwrap();
    let m: Vec<f64> = tr.snapshots.iter().map(|s| s.spins.iter().map(|&v| v as f64).sum::<f64>() / s.spins.len() as f64).collect();
    let mean = m.iter().sum::<f64>() / m.len() as f64;
    let acf = |lag: usize| -> f64 {
        let c: f64 = m.windows(lag + 1).map(|w| (w[0] - mean) * (w[lag] - mean)).sum::<f64>() / (m.len() - lag) as f64;
        c / m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() * m.len() as f64
    };
    let lags = [0, 1, 2, 4, 8, 16];
    let vals: Vec<f64> = lags.iter().map(|&l| acf(l)).collect();
    println!("acf {vals:?}");
    assert!(vals.windows(2).all(|w| w[1] < w[0] + 0.02));
    assert!(vals[5].abs() < 0.1);
}

#[test]
fn cache_stays_coherent() {
    let k = KacKernel::new(0.3, 2, 4).unwrap();
    let s0 = SpinConfiguration::random(&k, 5);
    let opts = GlauberOptions { check_every: Some(10_000), log_events: true, ..Default::default() };
    let tr = glauber_run(&k, &s0, 1.2, 1000.0, 9, &opts).unwrap();
    assert!(tr.proposals > 50_000);
    assert_eq!(tr.events.len() as u64, tr.proposals);
    assert_eq!(tr.events.iter().filter(|e| e.accepted).count() as u64, tr.accepted);
    assert!(tr.final_state.cache_error(&k) < 1e-12);
}

#[test]
fn runs_are_deterministic() {
    let k = KacKernel::new(0.3, 1, 6).unwrap();
    let s0 = SpinConfiguration::random(&k, 1);
    let opts = GlauberOptions { snapshot_dt: Some(0.25), ..Default::default() };
    let a = glauber_run(&k, &s0, 1.0, 5.0, 42, &opts).unwrap();
    let b = glauber_run(&k, &s0, 1.0, 5.0, 42, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.snapshots.len(), 21);
    let x = rescale_field(&a, &ScalingExponents::new(0.3, 1).unwrap()).unwrap();
    assert_eq!(x.values.len(), 21 * 13);
}

#[test]
fn d2_gamma_sixteenth_shift() {
    let g = 1.0 / 16.0;
    let b = critical_shift(1.0, g, 2, default_c_gamma(g, 2)).unwrap();
    let parsed: f64 = format!("{b:e}").parse().unwrap();
    assert_eq!(parsed, b);
    assert!((b - (1.0 + g * g * (16f64.ln() - 1.0))).abs() < 1e-15);
}
