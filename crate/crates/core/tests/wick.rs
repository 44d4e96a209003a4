use std::f64::consts::PI;

use rslab_core::grid::Grid;
use rslab_core::heat::{stochastic_convolution, HeatKernelSpec};
use rslab_core::noise::{mollify, sample_white_noise, Mollifier, Profile};
use rslab_core::wick::*;

fn spread(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x / mean - 1.0).abs()).fold(0.0, f64::max)
}

#[test]
fn c_delta_rates_by_dimension() {
    let deltas: Vec<f64> = (3..=7).map(|j| 2f64.powi(-j)).collect();
    let c = |d: usize| -> Vec<f64> {
        let spec = HeatKernelSpec::torus(d, 2.0 * PI);
        deltas.iter().map(|&dl| compute_c_delta(dl, d, &spec).unwrap()).collect()
    };
    let c2 = c(2);
    let slopes: Vec<f64> = c2.windows(2).map(|w| (w[1] - w[0]) / 2f64.ln()).collect();
    assert!(spread(&slopes) < 0.05, "{slopes:?}");
    for s in &slopes {
        assert!((s * 4.0 * PI - 1.0).abs() < 0.05, "slope {s}");
    }
    let c3 = c(3);
    let scaled: Vec<f64> = c3.iter().zip(&deltas).map(|(a, b)| a * b).collect();
    assert!(spread(&scaled) < 0.10, "{scaled:?}");
    let c1 = c(1);
    let diffs: Vec<f64> = c1.windows(2).map(|w| w[1] - w[0]).collect();
    for w in diffs.windows(2) {
        assert!(w[1].abs() < 0.6 * w[0].abs(), "{diffs:?}");
    }
    for v in [&c1, &c2, &c3] {
        assert!(v.iter().all(|&x| x > 0.0));
        assert!(v.windows(2).all(|w| w[1] > w[0]), "C_delta decreases in delta");
    }
}

#[test]
fn c_tilde_smoke_and_cutoff_stability() {
    let spec = HeatKernelSpec::torus(3, 2.0 * PI);
    let one = compute_c_tilde_delta(1.0, 3, &spec).unwrap();
    assert!(one.is_finite() && one > 0.0);
    let halved = spec.clone().with_cutoff(0.5);
    let gap = |delta: f64| compute_c_tilde_delta(delta, 3, &spec).unwrap() - compute_c_tilde_delta(delta, 3, &halved).unwrap();
    let (a, b) = (gap(0.125), gap(0.03125));
    assert!(a > 0.0 && b > 0.0);
    assert!((a / b - 1.0).abs() < 0.05, "{a} vs {b}");
    assert!(compute_c_tilde_delta(0.1, 2, &spec).is_err());
}

#[test]
fn grid_variance_matches_monte_carlo() {
    let g = Grid::new(1, 32, 2.0 * PI, 0.5, 52).unwrap();
    for profile in [Profile::SpectralCutoff, Profile::GaussianBump] {
        let m = Mollifier::new(profile, 4.0 * g.dx());
        let wc = WickConstants::grid_spectral(&g, &m).unwrap();
        let samples: Vec<f64> = (0..2000u64)
            .map(|s| {
                let z = stochastic_convolution(&mollify(&sample_white_noise(&g, s), &m).unwrap()).unwrap();
                let sl = z.slice(g.m);
                sl.iter().map(|v| v * v).sum::<f64>() / sl.len() as f64
            })
            .collect();
        let est = McEstimate::from_samples(&samples);
        assert!(est.within(wc.c_delta, 3.0), "{profile:?}: {est:?} vs {}", wc.c_delta);
    }
}

#[test]
fn wick_square_is_centred() {
    let g = Grid::new(1, 64, 2.0 * PI, 0.25, 26).unwrap();
    let m = Mollifier::new(Profile::SpectralCutoff, 2.0 * g.dx().max(g.dt().sqrt()));
    let wc = WickConstants::grid_spectral(&g, &m).unwrap();
    let means: Vec<f64> = (0..1000u64)
        .map(|s| {
            let z = stochastic_convolution(&mollify(&sample_white_noise(&g, s), &m).unwrap()).unwrap();
            let w2 = wick_power(&z, 2, &wc).unwrap();
            let sl = w2.slice(g.m);
            sl.iter().sum::<f64>() / sl.len() as f64
        })
        .collect();
    assert!(McEstimate::from_samples(&means).within(0.0, 3.0));
    let z = stochastic_convolution(&mollify(&sample_white_noise(&g, 3), &m).unwrap()).unwrap();
    assert_eq!(wick_power(&z, 1, &wc).unwrap().values, z.values);
    let w3 = wick_power(&z, 3, &wc).unwrap();
    for (a, v) in w3.values.iter().zip(&z.values) {
        let want = v * v * v - 3.0 * wc.c_delta * v;
        assert!((a - want).abs() <= 4.0 * f64::EPSILON * (v.abs().powi(3) + 3.0 * wc.c_delta * v.abs()));
    }
    let g3 = Grid::new(3, 4, 1.0, 0.1, 2).unwrap();
    let c3 = WickConstants { d: 3, ..wc.clone() };
    assert!(wick_power(&rslab_core::grid::Field::zeros(g3), 5, &c3).is_err());
}

#[test]
fn hermite_orthogonality() {
    let space = DiscreteNoiseSpace::new(vec![1.7]).unwrap();
    let sigma = 1.7f64.sqrt();
    for (n, m) in [(1, 2), (2, 3), (1, 3), (2, 4)] {
        let v: Vec<f64> = (0..100_000u64)
            .map(|r| {
                let z = space.sample(5, r)[0];
                hermite(n, z, sigma) * hermite(m, z, sigma)
            })
            .collect();
        assert!(McEstimate::from_samples(&v).within(0.0, 3.0), "{n} {m}");
    }
}

#[test]
fn product_of_disjoint_cells_has_variance_ab() {
    let space = DiscreteNoiseSpace::new(vec![0.3, 1.5]).unwrap();
    let k = SimpleKernel::dense(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
    let r = verify_isometry(&k, &space, 100_000, 2).unwrap();
    assert!(r.second_moment.within(0.45, 3.0), "{:?}", r.second_moment);
    assert!((r.sym_bound - 0.45).abs() < 1e-12);
}

#[test]
fn ito_isometry_for_random_kernels() {
    let space = DiscreteNoiseSpace::new(vec![0.5, 1.0, 0.2, 0.8, 1.3, 0.4]).unwrap();
    for s in 0..3 {
        let k = SimpleKernel::random(2, 6, s).unwrap();
        let r = verify_isometry(&k, &space, 100_000, 10 + s).unwrap();
        assert!(r.second_moment.within(r.sym_bound, 3.0), "{r:?}");
        assert!(r.sym_bound <= r.plain_bound + 1e-12);
    }
    let sym = {
        let base = SimpleKernel::random(2, 6, 9).unwrap().to_dense();
        let rslab_core::wick::KernelRepr::Dense(c) = base.repr else { unreachable!() };
        let s: Vec<f64> = (0..36).map(|i| 0.5 * (c[i] + c[(i % 6) * 6 + i / 6])).collect();
        SimpleKernel::dense(2, 6, s).unwrap()
    };
    assert!((sym.sym_l2_sq(&space) - sym.l2_sq(&space)).abs() < 1e-12);
}

#[test]
fn square_and_cube_identities() {
    let space = DiscreteNoiseSpace::new(vec![0.25, 0.5, 1.0, 0.75, 0.1, 0.6, 0.3, 0.9]).unwrap();
    let f = [0.4, -1.1, 0.8, 0.3, 2.0, -0.5, 1.2, 0.7];
    let sq = verify_square_identity(&f, &space, 100_000, 8, 21).unwrap();
    assert!(sq.within(0.0, 3.0), "{sq:?}");
    let cube = verify_cube_identity(&f, &space, 100_000, 8, 22).unwrap();
    assert!(cube.residual.within(0.0, 3.0), "{cube:?}");
    assert!(cube.hermite_residual.within(0.0, 3.0), "{cube:?}");
    let one = DiscreteNoiseSpace::new(vec![1.0]).unwrap();
    let c1 = verify_cube_identity(&[1.0], &one, 100_000, 16, 23).unwrap();
    assert!(c1.residual.within(0.0, 3.0), "{c1:?}");
}

#[test]
fn nelson_ratios() {
    let space = DiscreteNoiseSpace::new(vec![0.5, 1.0, 0.2, 0.8, 1.3, 0.4]).unwrap();
    let k1 = SimpleKernel::random(1, 6, 4).unwrap();
    let r = verify_nelson(1, 4, &k1, &space, 100_000, 30).unwrap().ratio;
    assert!((r.mean / 3.0 - 1.0).abs() < 0.05, "{r:?}");
    let k2 = SimpleKernel::random(2, 6, 5).unwrap();
    let r2 = verify_nelson(2, 2, &k2, &space, 100_000, 31).unwrap().ratio;
    assert!(r2.mean <= 2.0 + 3.0 * r2.stderr);
    let r2s = verify_nelson(2, 2, &k2.scale(10.0), &space, 100_000, 31).unwrap().ratio;
    assert!((r2s.mean - r2.mean).abs() < 1e-9 * r2.mean);
    for (n, p) in [(2, 6), (3, 4)] {
        let ratios: Vec<f64> = (0..20)
            .map(|s| {
                let k = SimpleKernel::random_symmetric(n, 6, 100 + s).unwrap();
                assert!((k.sym_l2_sq(&space) / k.l2_sq(&space) - 1.0).abs() < 1e-12);
                verify_nelson(n, p, &k, &space, 50_000, 40 + s).unwrap().ratio.mean
            })
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi / lo < 10.0, "{n} {p}: {ratios:?}");
    }
}
