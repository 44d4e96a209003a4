//! Adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 15-point rule on `[a, b]`: (Kronrod estimate, error estimate).
pub fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-12, rel_tol: 1e-10, max_intervals: 2000 }
    }
}

/// Globally adaptive integration: bisects the interval with the largest
/// error estimate until the tolerance is met.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, opts: QuadOptions) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut ivs: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (v, e) = gk15(&mut f, a, b);
    ivs.push((a, b, v, e));
    loop {
        let total: f64 = ivs.iter().map(|i| i.2).sum();
        let err: f64 = ivs.iter().map(|i| i.3).sum();
        if err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            return Ok(total);
        }
        if ivs.len() >= opts.max_intervals {
            if err <= 1e3 * opts.abs_tol.max(opts.rel_tol * total.abs()) {
                return Ok(total);
            }
            return Err(Error::Quadrature(format!("error {err:e} on [{a}, {b}] after {} intervals", ivs.len())));
        }
        let (imax, _) = ivs.iter().enumerate().fold((0, -1.0), |acc, (i, iv)| if iv.3 > acc.1 { (i, iv.3) } else { acc });
        let (lo, hi, _, _) = ivs.swap_remove(imax);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        ivs.push((lo, mid, v1, e1));
        ivs.push((mid, hi, v2, e2));
    }
}

/// Integration over `[a, ∞)` through `x = a + u/(1-u)`.
pub fn integrate_to_inf(mut f: impl FnMut(f64) -> f64, a: f64, opts: QuadOptions) -> Result<f64> {
    integrate(
        |u| {
            if u >= 1.0 {
                return 0.0;
            }
            let w = 1.0 - u;
            f(a + u / w) / (w * w)
        },
        0.0,
        1.0,
        opts,
    )
}

/// Sum of adaptive integrals over consecutive `points`, plus `[last, ∞)`
/// when `tail` is set.
pub fn integrate_pieces(mut f: impl FnMut(f64) -> f64, points: &[f64], tail: bool, opts: QuadOptions) -> Result<f64> {
    let mut total = 0.0;
    for w in points.windows(2) {
        total += integrate(&mut f, w[0], w[1], opts)?;
    }
    if tail {
        if let Some(&last) = points.last() {
            total += integrate_to_inf(&mut f, last, opts)?;
        }
    }
    Ok(total)
}

/// `0, s, 4s, 16s, …` up to `top` (inclusive), with `extra` points merged in.
pub fn geometric_points(s: f64, top: f64, extra: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0];
    let mut x = s;
    while x < top {
        p.push(x);
        x *= 4.0;
    }
    p.push(top);
    p.extend(extra.iter().copied().filter(|&e| e > 0.0 && e < top));
    p.sort_by(|a, b| a.total_cmp(b));
    p.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
    p
}

/// Gauss–Hermite-free expectation of `g(Z)` for `Z ~ N(0, s²)`, by adaptive
/// quadrature on `[-10s, 10s]`.
pub fn gaussian_expectation(mut g: impl FnMut(f64) -> f64, s: f64, opts: QuadOptions) -> Result<f64> {
    if s == 0.0 {
        return Ok(g(0.0));
    }
    let c = 1.0 / (s * (std::f64::consts::TAU).sqrt());
    integrate(|z| c * (-0.5 * z * z / (s * s)).exp() * g(z), -10.0 * s, 10.0 * s, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let (v, _) = gk15(&mut |x| x.powi(6) - 2.0 * x, 0.0, 2.0);
        assert!((v - (128.0 / 7.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn adaptive_singular_and_infinite() {
        let v = integrate(|x: f64| x.sqrt().recip(), 0.0, 1.0, QuadOptions::default()).unwrap();
        assert!((v - 2.0).abs() < 1e-7);
        let v = integrate_to_inf(|x: f64| (-x).exp(), 0.0, QuadOptions::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        let v = gaussian_expectation(|z| z * z, 0.5, QuadOptions::default()).unwrap();
        assert!((v - 0.25).abs() < 1e-10);
    }
}

/// Standard normal distribution function.
pub fn normal_cdf(u: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-u / std::f64::consts::SQRT_2)
}
