//! Jump kernels for the nonlocal operator.
//!
//! A kernel is a radially symmetric function `K(y)` on `R^n \ {0}` (n = 1 or
//! 2) trapped between fractional-kernel envelopes:
//!
//! ```text
//! (1 - s) * lambda * |y|^(-n-2s)  <=  K(y)  <=  (1 - s) * Lambda * |y|^(-n-2s)
//! ```
//!
//! with order `s` in `(0, 1)` and ellipticity constants
//! `0 < lambda <= Lambda`. The reference member of the class is the
//! normalized fractional kernel `c(n, s) * |y|^(-n-2s)`, whose constant is
//! chosen so that the induced operator has Fourier symbol exactly
//! `|xi|^(2s)`; that constant is comparable to `s * (1 - s)`, which keeps
//! the family uniformly non-degenerate as `s` approaches either endpoint.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::quad;

/// Number of geometric sample radii used to vet a custom profile.
const ENVELOPE_SAMPLES: usize = 64;
/// Radial span over which custom profiles are vetted.
const ENVELOPE_SPAN: (f64, f64) = (1e-3, 16.0);
/// Relative slack allowed in the envelope test (roundoff only).
const ENVELOPE_SLACK: f64 = 1e-9;

#[derive(Clone)]
enum Profile {
    /// `K(y) = coeff * |y|^(-n-2s)`; admits closed-form cell integrals.
    Power { coeff: f64 },
    /// Arbitrary radial profile `r -> K(r)`, vetted against the envelope.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Kernel")
            .field("dim", &self.dim)
            .field("s", &self.s)
            .field("lambda", &self.lambda)
            .field("big_lambda", &self.big_lambda)
            .field(
                "profile",
                &match &self.profile {
                    Profile::Power { coeff } => format!("power({coeff})"),
                    Profile::Custom(_) => "custom".to_string(),
                },
            )
            .finish()
    }
}

/// A vetted member of the kernel class.
#[derive(Clone)]
pub struct Kernel {
    dim: usize,
    s: f64,
    lambda: f64,
    big_lambda: f64,
    profile: Profile,
}

impl Kernel {
    /// Spatial dimension `n` (1 or 2).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Differentiability order `s` in `(0, 1)`.
    pub fn s(&self) -> f64 {
        self.s
    }

    /// Lower ellipticity constant `lambda`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Upper ellipticity constant `Lambda`.
    pub fn big_lambda(&self) -> f64 {
        self.big_lambda
    }

    /// Kernel value at radius `r > 0`.
    pub fn eval(&self, r: f64) -> f64 {
        debug_assert!(r > 0.0, "kernel evaluated at nonpositive radius");
        match &self.profile {
            Profile::Power { coeff } => coeff * r.powf(-(self.dim as f64) - 2.0 * self.s),
            Profile::Custom(f) => f(r),
        }
    }

    /// The coefficient when the kernel is an exact power law, else `None`.
    /// Assembly uses this to switch to closed-form cell integrals.
    pub(crate) fn power_coefficient(&self) -> Option<f64> {
        match &self.profile {
            Profile::Power { coeff } => Some(*coeff),
            Profile::Custom(_) => None,
        }
    }
}

fn validate_dim_s(dim: usize, s: f64) -> Result<()> {
    if dim != 1 && dim != 2 {
        return Err(Error::InvalidParameter(format!(
            "kernel dimension must be 1 or 2, got {dim}"
        )));
    }
    if !(s > 0.0 && s < 1.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "kernel order s must lie strictly inside (0, 1), got {s}"
        )));
    }
    Ok(())
}

/// Build the normalized fractional kernel `c(n, s) * |y|^(-n-2s)`.
///
/// Both ellipticity constants equal `c(n, s) / (1 - s)`, so the envelope is
/// tight: the fractional member sits exactly on both walls of its class.
pub fn make_fractional_kernel(dim: usize, s: f64) -> Result<Kernel> {
    validate_dim_s(dim, s)?;
    let coeff = normalization_constant(dim, s)?;
    let wall = coeff / (1.0 - s);
    Ok(Kernel {
        dim,
        s,
        lambda: wall,
        big_lambda: wall,
        profile: Profile::Power { coeff },
    })
}

/// Internal constructor for comparison energies: an exact power-law kernel
/// `coeff * |y|^(-n-2s)` with the envelope constants implied by `coeff`.
/// Used for the raw (coefficient-one) difference-quotient energy.
pub(crate) fn power_kernel(dim: usize, s: f64, coeff: f64) -> Kernel {
    let wall = coeff / (1.0 - s);
    Kernel {
        dim,
        s,
        lambda: wall,
        big_lambda: wall,
        profile: Profile::Power { coeff },
    }
}

/// Build a kernel from an arbitrary radial profile, vetting it against the
/// declared envelope on a fixed geometric grid of sample radii.
///
/// The profile is sampled at 64 radii spread geometrically over
/// `[1e-3, 16]`; the first radius where it escapes
/// `[(1-s) lambda r^(-n-2s), (1-s) Lambda r^(-n-2s)]` (up to roundoff slack)
/// is reported in the rejection error.
pub fn make_custom_kernel(
    dim: usize,
    s: f64,
    lambda: f64,
    big_lambda: f64,
    profile: impl Fn(f64) -> f64 + Send + Sync + 'static,
) -> Result<Kernel> {
    validate_dim_s(dim, s)?;
    if !(lambda > 0.0) || !lambda.is_finite() || !big_lambda.is_finite() || big_lambda < lambda {
        return Err(Error::InvalidParameter(format!(
            "ellipticity constants must satisfy 0 < lambda <= Lambda, got \
             lambda = {lambda}, Lambda = {big_lambda}"
        )));
    }
    let (r_lo, r_hi) = ENVELOPE_SPAN;
    let step = (r_hi / r_lo).powf(1.0 / (ENVELOPE_SAMPLES as f64 - 1.0));
    let power = -(dim as f64) - 2.0 * s;
    for i in 0..ENVELOPE_SAMPLES {
        let r = r_lo * step.powi(i as i32);
        let value = profile(r);
        let envelope = r.powf(power) * (1.0 - s);
        let lo = lambda * envelope;
        let hi = big_lambda * envelope;
        if !value.is_finite() {
            return Err(Error::KernelRejected {
                radius: r,
                detail: format!("profile value {value} is not finite"),
            });
        }
        if value < lo * (1.0 - ENVELOPE_SLACK) {
            return Err(Error::KernelRejected {
                radius: r,
                detail: format!("profile value {value} falls below the lower wall {lo}"),
            });
        }
        if value > hi * (1.0 + ENVELOPE_SLACK) {
            return Err(Error::KernelRejected {
                radius: r,
                detail: format!("profile value {value} exceeds the upper wall {hi}"),
            });
        }
    }
    Ok(Kernel {
        dim,
        s,
        lambda,
        big_lambda,
        profile: Profile::Custom(Arc::new(profile)),
    })
}

/// Normalization constant `c(n, s)` of the fractional kernel, defined so
/// that the operator built from `c(n, s) |y|^(-n-2s)` (second-difference
/// convention, no extra 1/2) has Fourier symbol `|xi|^(2s)`:
///
/// ```text
/// c(n, s) = 1 / ( 2 * integral over R^n of (1 - cos z_1) |z|^(-n-2s) dz ).
/// ```
///
/// Evaluated once per `(n, s)` by quadrature and cached. The integral is
/// split at `|z| = 1`: a convergent Taylor series handles the singular ball,
/// adaptive Simpson the mid range, and the far tail is the analytic power
/// integral minus an integration-by-parts asymptotic series for the cosine
/// part. In dimension 2 the second coordinate is marginalized exactly,
/// reducing to the one-dimensional integral times
/// `beta(s) = 2 * integral_0^(pi/2) cos(phi)^(2s) d phi`.
pub fn normalization_constant(dim: usize, s: f64) -> Result<f64> {
    validate_dim_s(dim, s)?;
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (dim, s.to_bits());
    if let Some(&hit) = cache.lock().unwrap().get(&key) {
        return Ok(hit);
    }
    let line = one_d_reference_integral(s);
    let value = match dim {
        1 => 1.0 / (2.0 * line),
        _ => {
            let beta = 2.0 * quad::adaptive_simpson(
                &|phi: f64| phi.cos().powf(2.0 * s),
                0.0,
                std::f64::consts::FRAC_PI_2,
                1e-13,
            );
            1.0 / (2.0 * line * beta)
        }
    };
    cache.lock().unwrap().insert(key, value);
    Ok(value)
}

/// The full-line integral `I(s) = integral over R of (1 - cos t) |t|^(-1-2s) dt`.
fn one_d_reference_integral(s: f64) -> f64 {
    let a = 1.0 + 2.0 * s;
    // Singular ball [0, 1]: termwise integration of the cosine series,
    // Sum_{k>=1} (-1)^(k+1) / ((2k)! (2k - 2s)); factorial decay dominates.
    let mut ball = 0.0;
    let mut factorial = 1.0f64; // (2k)!
    for k in 1..=24u32 {
        factorial *= (2 * k - 1) as f64 * (2 * k) as f64;
        let term = 1.0 / (factorial * (2.0 * k as f64 - 2.0 * s));
        if k % 2 == 1 {
            ball += term;
        } else {
            ball -= term;
        }
        if term < 1e-18 {
            break;
        }
    }
    // Mid range [1, T]: smooth oscillatory integrand, adaptive Simpson.
    let t_cut = 200.0;
    let mid = quad::adaptive_simpson(
        &|t: f64| (1.0 - t.cos()) * t.powf(-a),
        1.0,
        t_cut,
        1e-13,
    );
    // Tail [T, inf): the power part integrates exactly; the cosine part is
    // an asymptotic integration-by-parts series,
    //   C_a(T) = -sin(T) T^(-a) + a cos(T) T^(-a-1) - a(a+1) C_(a+2)(T),
    // truncated once the coefficient product underflows the target accuracy.
    let power_tail = t_cut.powf(1.0 - a) / (a - 1.0);
    let mut cosine_tail = 0.0;
    let mut coeff = 1.0f64;
    let mut sign = 1.0f64;
    let mut order = a;
    for _ in 0..10 {
        let pair = -t_cut.sin() * t_cut.powf(-order)
            + order * t_cut.cos() * t_cut.powf(-order - 1.0);
        cosine_tail += sign * coeff * pair;
        coeff *= order * (order + 1.0);
        if coeff * t_cut.powf(-order - 2.0) < 1e-18 {
            break;
        }
        sign = -sign;
        order += 2.0;
    }
    2.0 * (ball + mid + power_tail - cosine_tail)
}
