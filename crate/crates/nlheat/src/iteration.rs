//! Numeric iteration lemmas: geometric decay of fast-contracting
//! sequences and the interpolation trick that absorbs a reappearing
//! sup-term into a singular power.
//!
//! Both are pure numeric contracts. The decay check takes a finite prefix
//! of a sequence together with the recursion constants, verifies the
//! recursion hypothesis element by element, and — when the head is small
//! enough — asserts the geometric conclusion on the whole prefix. The
//! interpolation bound returns an explicit constant for the absorption
//! argument and has a verification mode that checks both the hypothesis
//! and the conclusion on a sampled function.

use serde::Serialize;

use crate::error::{Error, Result};

/// Outcome of checking a fast-contracting sequence prefix.
#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    /// Largest admissible head value, `d0^(-1/eps) * e0^(-1/eps^2)`.
    pub smallness_threshold: f64,
    /// Whether the head satisfies the smallness condition.
    pub smallness_holds: bool,
    /// Minimum over the prefix of `e0^(-k/eps) * N_0 - N_k`; present only
    /// when the smallness condition holds (the bound is not implied
    /// otherwise). Nonnegative up to roundoff when present.
    pub conclusion_margin: Option<f64>,
    /// Number of sequence elements examined.
    pub checked: usize,
}

/// Verifies the recursion hypothesis `N_{k+1} <= d0 * e0^k * N_k^(1+eps)`
/// on a finite prefix and, when `N_0 <= d0^(-1/eps) * e0^(-1/eps^2)`,
/// asserts the geometric bound `N_k <= e0^(-k/eps) * N_0` on every
/// element.
///
/// Requires `d0, eps > 0`, `e0 > 1`, and a nonempty prefix of finite
/// nonnegative values. A broken recursion step `k` is an error naming that
/// index; a head that is too large is not an error — the report simply
/// carries no conclusion.
pub fn geometric_decay_check(n: &[f64], d0: f64, e0: f64, eps: f64) -> Result<DecayReport> {
    if !(d0 > 0.0 && d0.is_finite()) || !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "recursion constants must be positive and finite, got d0 = {d0}, eps = {eps}"
        )));
    }
    if !(e0 > 1.0 && e0.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "growth base must exceed 1, got {e0}"
        )));
    }
    if n.is_empty() {
        return Err(Error::InvalidParameter(
            "sequence prefix must not be empty".into(),
        ));
    }
    if let Some(bad) = n.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "sequence values must be finite and nonnegative, got {bad}"
        )));
    }

    // Recursion hypothesis, with relative slack for roundoff: sequences
    // generated exactly at the bound must pass.
    for k in 0..n.len() - 1 {
        let bound = d0 * e0.powi(k as i32) * n[k].powf(1.0 + eps);
        if n[k + 1] > bound * (1.0 + 1e-12) + f64::MIN_POSITIVE {
            return Err(Error::HypothesisViolation {
                index: k,
                detail: format!(
                    "N_{} = {} exceeds d0 * e0^{k} * N_{k}^(1+eps) = {bound}",
                    k + 1,
                    n[k + 1]
                ),
            });
        }
    }

    let smallness_threshold = d0.powf(-1.0 / eps) * e0.powf(-1.0 / (eps * eps));
    let smallness_holds = n[0] <= smallness_threshold * (1.0 + 1e-12);
    let conclusion_margin = smallness_holds.then(|| {
        (0..n.len())
            .map(|k| e0.powf(-(k as f64) / eps) * n[0] - n[k])
            .fold(f64::INFINITY, f64::min)
    });

    Ok(DecayReport {
        smallness_threshold,
        smallness_holds,
        conclusion_margin,
        checked: n.len(),
    })
}

fn check_interpolation_params(
    c1: f64,
    c2: f64,
    theta: f64,
    eps: f64,
    window: (f64, f64),
) -> Result<()> {
    if !(c1 >= 0.0 && c1.is_finite() && c2 >= 0.0 && c2.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "singular and flat coefficients must be finite and nonnegative, \
             got c1 = {c1}, c2 = {c2}"
        )));
    }
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "singularity exponent must be finite and nonnegative, got {theta}"
        )));
    }
    if !((0.0..1.0).contains(&eps) && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "absorption factor must lie in [0, 1), got {eps}"
        )));
    }
    if !(window.0.is_finite() && window.1.is_finite() && window.0 < window.1) {
        return Err(Error::InvalidParameter(format!(
            "window must be a finite nondegenerate interval, got {window:?}"
        )));
    }
    Ok(())
}

/// The iteration constant `c(theta, eps)` for the absorption lemma: if a
/// nonnegative bounded `f` on the window satisfies
/// `f(t) <= c1 (τ - t)^(-theta) + c2 + eps * f(τ)` for all `t < τ`, then
/// `f(ρ) <= c * (c1 (R - ρ)^(-theta) + c2)` for all `ρ < R` in the window.
///
/// The constant comes from iterating along the geometric stations
/// `t_i = ρ + (1 - μ^i)(R - ρ)` with `μ = (2 eps / (1 + eps))^(1/theta)`,
/// which keeps the series ratio `eps * μ^(-theta) = (1 + eps) / 2`
/// strictly below one. It depends only on `theta` and `eps`, increases in
/// `eps`, and diverges as `eps → 1`; `eps = 0` needs no iteration and
/// returns 1.
pub fn interpolation_bound(
    c1: f64,
    c2: f64,
    theta: f64,
    eps: f64,
    window: (f64, f64),
) -> Result<f64> {
    check_interpolation_params(c1, c2, theta, eps, window)?;
    if eps == 0.0 {
        return Ok(1.0);
    }
    if theta == 0.0 {
        return Ok(1.0 / (1.0 - eps));
    }
    let q = (1.0 + eps) / 2.0;
    let mu = (eps / q).powf(1.0 / theta);
    Ok((1.0 - mu).powf(-theta) / (1.0 - q))
}

/// Numeric verification of the absorption lemma on a sampled function.
#[derive(Clone, Debug, Serialize)]
pub struct InterpolationReport {
    /// The constant returned by [`interpolation_bound`].
    pub constant: f64,
    /// Minimum over sample pairs `t < τ` of
    /// `c1 (τ-t)^(-theta) + c2 + eps f(τ) - f(t)`; the hypothesis holds
    /// on the samples iff this is nonnegative.
    pub hypothesis_margin: f64,
    /// Minimum over sample pairs `ρ < R` of
    /// `c (c1 (R-ρ)^(-theta) + c2) - f(ρ)`; the conclusion holds on the
    /// samples iff this is nonnegative.
    pub conclusion_margin: f64,
    /// Number of ordered sample pairs examined.
    pub pairs_checked: usize,
}

/// Checks both sides of the absorption lemma on samples `(t, f(t))` with
/// strictly increasing times inside the window: the hypothesis margin over
/// every ordered pair, and the conclusion margin with the constant from
/// [`interpolation_bound`]. Margins are reported, not enforced, so a
/// violated hypothesis shows up as a negative margin rather than an error.
pub fn verify_interpolation(
    c1: f64,
    c2: f64,
    theta: f64,
    eps: f64,
    samples: &[(f64, f64)],
) -> Result<InterpolationReport> {
    if samples.len() < 2 {
        return Err(Error::InvalidParameter(
            "verification needs at least two samples".into(),
        ));
    }
    let window = (samples[0].0, samples[samples.len() - 1].0);
    check_interpolation_params(c1, c2, theta, eps, window)?;
    for pair in samples.windows(2) {
        if !(pair[1].0 > pair[0].0) {
            return Err(Error::InvalidParameter(
                "sample times must be strictly increasing".into(),
            ));
        }
    }
    if let Some((t, v)) = samples.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "sampled function must be finite and nonnegative, got f({t}) = {v}"
        )));
    }

    let constant = interpolation_bound(c1, c2, theta, eps, window)?;
    let mut hypothesis_margin = f64::INFINITY;
    let mut conclusion_margin = f64::INFINITY;
    let mut pairs_checked = 0usize;
    for (i, &(t, ft)) in samples.iter().enumerate() {
        for &(tau, ftau) in &samples[i + 1..] {
            let gap = (tau - t).powf(-theta);
            hypothesis_margin = hypothesis_margin.min(c1 * gap + c2 + eps * ftau - ft);
            conclusion_margin = conclusion_margin.min(constant * (c1 * gap + c2) - ft);
            pairs_checked += 1;
        }
    }

    Ok(InterpolationReport {
        constant,
        hypothesis_margin,
        conclusion_margin,
        pairs_checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn decay_example_at_the_exact_bound() {
        // d0 = 1, e0 = 2, eps = 1, N_0 = 0.5 sits exactly on the smallness
        // threshold; the recursion N_{k+1} = 2^k N_k^2 then realizes the
        // geometric bound with equality at every step.
        let mut n = vec![0.5];
        for k in 0..12 {
            let prev: f64 = n[k];
            n.push(1.0 * 2f64.powi(k as i32) * prev.powf(2.0));
        }
        assert!((n[1] - 0.25).abs() < 1e-15);
        let report = geometric_decay_check(&n, 1.0, 2.0, 1.0).unwrap();
        assert!(report.smallness_holds);
        assert!((report.smallness_threshold - 0.5).abs() < 1e-15);
        let margin = report.conclusion_margin.unwrap();
        assert!(margin >= -1e-15, "margin {margin}");
        assert!(margin < 1e-12, "equality case should be tight, got {margin}");
    }

    #[test]
    fn decay_accepts_zeros_after_the_head() {
        let n = [0.5, 0.0, 0.0, 0.0];
        let report = geometric_decay_check(&n, 1.0, 2.0, 1.0).unwrap();
        assert!(report.smallness_holds);
        assert!(report.conclusion_margin.unwrap() >= 0.0);
        assert_eq!(report.checked, 4);
    }

    #[test]
    fn decay_names_the_broken_step() {
        let mut n = vec![0.5];
        for k in 0..6 {
            let prev: f64 = n[k];
            n.push(2f64.powi(k as i32) * prev.powf(2.0));
        }
        n[4] *= 10.0; // break the step from index 3 to 4
        let err = geometric_decay_check(&n, 1.0, 2.0, 1.0).unwrap_err();
        match err {
            Error::HypothesisViolation { index, .. } => assert_eq!(index, 3),
            other => panic!("expected hypothesis violation, got {other}"),
        }
    }

    #[test]
    fn decay_holds_for_random_draws_at_the_recursion_bound() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        for draw in 0..100 {
            let d0 = 0.5 + 1.5 * rng.gen::<f64>();
            let e0 = 1.1 + 1.9 * rng.gen::<f64>();
            let eps = 0.3 + 1.2 * rng.gen::<f64>();
            let threshold = d0.powf(-1.0 / eps) * e0.powf(-1.0 / (eps * eps));
            let head = threshold * rng.gen::<f64>().max(1e-3);
            let len = 6 + (rng.gen::<f64>() * 8.0) as usize;
            let mut n = vec![head];
            for k in 0..len {
                let prev: f64 = n[k];
                n.push(d0 * e0.powi(k as i32) * prev.powf(1.0 + eps));
            }
            let report = geometric_decay_check(&n, d0, e0, eps).unwrap();
            assert!(report.smallness_holds, "draw {draw}");
            let margin = report.conclusion_margin.unwrap();
            assert!(margin >= -1e-12 * head, "draw {draw}: margin {margin}");
            // The prefix realizes the advertised limit: its last element
            // already sits under the geometric envelope.
            let k = n.len() - 1;
            assert!(n[k] <= e0.powf(-(k as f64) / eps) * head * (1.0 + 1e-12));
        }
    }

    #[test]
    fn decay_without_smallness_reports_no_conclusion() {
        // Constant sequence at 10 with d0 large enough that the recursion
        // holds but the head is far above the threshold.
        let n = [10.0, 10.0, 10.0];
        let report = geometric_decay_check(&n, 1.0, 2.0, 1.0).unwrap();
        assert!(!report.smallness_holds);
        assert!(report.conclusion_margin.is_none());
    }

    #[test]
    fn decay_rejects_bad_parameters() {
        let n = [0.5, 0.1];
        assert!(geometric_decay_check(&n, 0.0, 2.0, 1.0).is_err());
        assert!(geometric_decay_check(&n, 1.0, 1.0, 1.0).is_err());
        assert!(geometric_decay_check(&n, 1.0, 2.0, 0.0).is_err());
        assert!(geometric_decay_check(&[], 1.0, 2.0, 1.0).is_err());
        assert!(geometric_decay_check(&[0.5, -0.1], 1.0, 2.0, 1.0).is_err());
        assert!(geometric_decay_check(&[0.5, f64::NAN], 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn interpolation_constant_edge_cases() {
        let w = (0.0, 1.0);
        assert_eq!(interpolation_bound(1.0, 1.0, 2.0, 0.0, w).unwrap(), 1.0);
        let c = interpolation_bound(1.0, 1.0, 0.0, 0.25, w).unwrap();
        assert!((c - 4.0 / 3.0).abs() < 1e-14);

        assert!(interpolation_bound(1.0, 0.0, 1.0, 1.0, w).is_err());
        assert!(interpolation_bound(1.0, 0.0, 1.0, -0.1, w).is_err());
        assert!(interpolation_bound(-1.0, 0.0, 1.0, 0.5, w).is_err());
        assert!(interpolation_bound(1.0, -2.0, 1.0, 0.5, w).is_err());
        assert!(interpolation_bound(1.0, 0.0, -1.0, 0.5, w).is_err());
        assert!(interpolation_bound(1.0, 0.0, 1.0, 0.5, (1.0, 0.0)).is_err());
        assert!(interpolation_bound(1.0, 0.0, 1.0, 0.5, (0.0, f64::NAN)).is_err());
    }

    #[test]
    fn interpolation_constant_is_monotone_and_blows_up() {
        let w = (0.0, 1.0);
        for theta in [0.5, 1.0, 2.0] {
            let mut last = 0.0;
            for k in 1..20 {
                let eps = k as f64 / 20.0;
                let c = interpolation_bound(1.0, 1.0, theta, eps, w).unwrap();
                assert!(c > last, "theta {theta}, eps {eps}: {c} <= {last}");
                last = c;
            }
            assert!(interpolation_bound(1.0, 1.0, theta, 0.999, w).unwrap() > 1e3);
        }
    }

    #[test]
    fn constant_functions_at_the_allowed_level_verify() {
        // f ≡ F with F (1 - eps) = c1 Δ^(-theta) + c2 on a window of
        // length Δ is the extremal constant datum; both margins stay
        // nonnegative and the hypothesis margin is tight.
        let (c1, c2, theta, eps) = (2.0, 0.5, 1.0, 0.4);
        let delta: f64 = 0.8;
        let level = (c1 * delta.powf(-theta) + c2) / (1.0 - eps);
        let samples: Vec<(f64, f64)> = (0..9)
            .map(|i| (delta * i as f64 / 8.0, level))
            .collect();
        let report = verify_interpolation(c1, c2, theta, eps, &samples).unwrap();
        assert!(report.hypothesis_margin >= -1e-12 * level);
        assert!(report.hypothesis_margin < 1e-9 * level);
        assert!(report.conclusion_margin >= 0.0);
        assert_eq!(report.pairs_checked, 9 * 8 / 2);
    }

    #[test]
    fn blow_up_profile_verifies_with_the_returned_constant() {
        // f(t) = (1 - t)^(-1) on samples short of the pole satisfies the
        // hypothesis with c1 = 1, c2 = 0 since 1/(a + b) <= 1/a.
        let samples: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let t = 0.95 * i as f64 / 199.0;
                (t, (1.0 - t).powi(-1))
            })
            .collect();
        let report = verify_interpolation(1.0, 0.0, 1.0, 0.5, &samples).unwrap();
        assert!(report.hypothesis_margin >= 0.0);
        assert!(report.conclusion_margin >= 0.0);
        assert!((report.constant - 12.0).abs() < 1e-12);
    }

    #[test]
    fn hypothesis_breaks_show_as_negative_margins() {
        let mut samples: Vec<(f64, f64)> = (0..20)
            .map(|i| (i as f64 / 19.0, 1.0))
            .collect();
        samples[3].1 = 1e6; // spike no admissible hypothesis covers
        let report = verify_interpolation(1.0, 1.0, 1.0, 0.1, &samples).unwrap();
        assert!(report.hypothesis_margin < 0.0);
    }

    #[test]
    fn verification_rejects_bad_samples() {
        assert!(verify_interpolation(1.0, 0.0, 1.0, 0.5, &[(0.0, 1.0)]).is_err());
        assert!(
            verify_interpolation(1.0, 0.0, 1.0, 0.5, &[(0.0, 1.0), (0.0, 2.0)]).is_err()
        );
        assert!(
            verify_interpolation(1.0, 0.0, 1.0, 0.5, &[(0.0, 1.0), (1.0, -3.0)]).is_err()
        );
    }
}
