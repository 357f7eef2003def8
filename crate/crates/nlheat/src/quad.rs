//! Small quadrature toolbox shared by kernel normalization and operator
//! assembly: adaptive Simpson on an interval and fixed Gauss–Legendre rules
//! for smooth cell integrals.

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance
/// `tol`. Classic recursive bisection with the Richardson correction term;
/// depth is capped so pathological integrands terminate.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 48)
}

/// Nodes and weights of the 5-point Gauss–Legendre rule on `[-1, 1]`.
pub const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Nodes and weights of the 8-point Gauss–Legendre rule on `[-1, 1]`.
pub const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// Fixed Gauss–Legendre integral of `f` over `[a, b]` with the given rule.
pub fn gauss_interval(rule: &[(f64, f64)], f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    rule.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Tensor-product Gauss–Legendre integral of `f(x, y)` over a rectangle.
pub fn gauss_rect(
    rule: &[(f64, f64)],
    f: &dyn Fn(f64, f64) -> f64,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
) -> f64 {
    let (mx, hx) = (0.5 * (x0 + x1), 0.5 * (x1 - x0));
    let (my, hy) = (0.5 * (y0 + y1), 0.5 * (y1 - y0));
    let mut acc = 0.0;
    for &(xi, wi) in rule {
        for &(yj, wj) in rule {
            acc += wi * wj * f(mx + hx * xi, my + hy * yj);
        }
    }
    acc * hx * hy
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_matches_closed_forms() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-10);
        let v = adaptive_simpson(&|x: f64| (-x).exp(), 0.0, 30.0, 1e-13);
        assert!((v - (1.0 - (-30.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn gauss_exact_on_polynomials() {
        // Gauss-5 integrates degree <= 9 exactly.
        let v = gauss_interval(&GAUSS5, &|x| x.powi(8), -1.0, 1.0);
        assert!((v - 2.0 / 9.0).abs() < 1e-14);
        let v = gauss_rect(&GAUSS5, &|x, y| x * x * y * y * y * y, 0.0, 1.0, 0.0, 1.0);
        assert!((v - 1.0 / 15.0).abs() < 1e-14);
    }
}
