use proptest::prelude::*;
use rslab_core::grid::{Field, Grid};
use rslab_core::heat::stochastic_convolution;
use rslab_core::noise::sample_white_noise;
use rslab_core::regularity::*;

fn d1_grid() -> Grid {
    Grid::new(1, 512, 1.0, 0.5, 16384).unwrap()
}

fn pooled(seeds: u64, f: impl Fn(u64) -> ScaleSweep) -> RegularityEstimate {
    let sweeps: Vec<ScaleSweep> = (0..seeds).map(f).collect();
    estimate_pooled(&sweeps).unwrap()
}

#[test]
fn white_noise_and_its_heat_convolution() {
    let g = d1_grid();
    let cfg = SweepConfig::default_for(1);
    let mut xs = Vec::new();
    let mut zs = Vec::new();
    for seed in 0..20 {
        let xi = sample_white_noise(&g, seed);
        let z = stochastic_convolution(&xi).unwrap();
        xs.push(besov_statistics(&xi, &cfg).unwrap());
        zs.push(positive_order_statistics(&z, 1, &cfg).unwrap());
    }
    let a_xi = estimate_pooled(&xs).unwrap();
    let a_z = estimate_pooled(&zs).unwrap();
    println!("xi {a_xi:?}\nZ {a_z:?}");
    assert!((a_xi.alpha_hat + 1.5).abs() <= 0.15);
    assert!((a_z.alpha_hat - 0.5).abs() <= 0.1);
    assert!((a_z.alpha_hat - a_xi.alpha_hat - 2.0).abs() <= 0.25);
}

#[test]
fn white_noise_d2() {
    let g = Grid::new(2, 256, 1.0, 0.125, 512).unwrap();
    let cfg = SweepConfig::default_for(2);
    let a = pooled(4, |s| besov_statistics(&sample_white_noise(&g, s), &cfg).unwrap());
    println!("xi d2 {a:?}");
    assert!((a.alpha_hat + 2.0).abs() <= 0.2);
}

#[test]
fn global_polynomials_are_annihilated() {
    let g = Grid::new(1, 256, 1.0, 0.25, 4096).unwrap();
    let cfg = SweepConfig { periodic: false, ..SweepConfig::levels(2, 5) };
    let c = Field::from_fn(g, |_, _| 3.5);
    let lin = Field::from_fn(g, |_, x| 1.0 - 2.0 * x[0]);
    for (f, deg) in [(&c, 1), (&c, 2), (&lin, 2)] {
        let s = positive_order_statistics(f, deg, &cfg).unwrap();
        assert!(s.levels.iter().all(|l| l.stat < 1e-8), "{s:?}");
    }
}

#[test]
fn kink_has_unit_exponent() {
    let g = Grid::new(1, 512, 1.0, 0.25, 4096).unwrap();
    let f = Field::from_fn(g, |_, x| (x[0] - 0.5).abs());
    let e = estimate_exponent(&positive_order_statistics(&f, 1, &SweepConfig::levels(2, 6)).unwrap()).unwrap();
    assert!((e.alpha_hat - 1.0).abs() < 0.05, "{e:?}");
}

#[test]
fn brownian_path_in_space_has_half_exponent() {
    let g = Grid::new(1, 4096, 1.0, 1.0 / 32.0, 1024).unwrap();
    let mut b = vec![0.0; 4096];
    let noise = sample_white_noise(&Grid::new(1, 4096, 1.0, 1.0, 1).unwrap(), 5);
    for i in 1..4096 {
        b[i] = b[i - 1] + noise.values[i] / 4096.0;
    }
    // periodic bridge
    let end = b[4095] + noise.values[4096] / 4096.0;
    for (i, v) in b.iter_mut().enumerate() {
        *v -= end * i as f64 / 4096.0;
    }
    let f = Field::from_fn(g, |_, x| b[(x[0] * 4096.0).round() as usize % 4096]);
    let s = positive_order_statistics(&f, 1, &SweepConfig { aggregation: Aggregation::Rms, ..SweepConfig::levels(3, 6) }).unwrap();
    let e = estimate_exponent(&s).unwrap();
    assert!((e.alpha_hat - 0.5).abs() < 0.1, "{e:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn scaling_and_shift_invariance(seed in any::<u64>(), shift in (0usize..4).prop_map(|s| 32 * s), c in prop::sample::select(vec![-4.0, 0.5, 2.0, 8.0])) {
        let g = Grid::new(1, 128, 1.0, 0.25, 1024).unwrap();
        let cfg = SweepConfig::levels(2, 4);
        let xi = sample_white_noise(&g, seed);
        let base = estimate_exponent(&besov_statistics(&xi, &cfg).unwrap()).unwrap();
        let mut scaled = xi.clone();
        scaled.values.iter_mut().for_each(|v| *v *= c);
        let sc = besov_statistics(&scaled, &cfg).unwrap();
        let e = estimate_exponent(&sc).unwrap();
        prop_assert!((e.alpha_hat - base.alpha_hat).abs() < 1e-12);
        let mut shifted = xi.clone();
        for i in 0..=g.m {
            let src = xi.slice(i).to_vec();
            let dst = shifted.slice_mut(i);
            for x in 0..128 {
                dst[(x + shift) % 128] = src[x];
            }
        }
        let sh = estimate_exponent(&besov_statistics(&shifted, &cfg).unwrap()).unwrap();
        prop_assert_eq!(sh.alpha_hat, base.alpha_hat);
    }
}
