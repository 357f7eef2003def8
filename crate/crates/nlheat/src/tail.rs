//! The far-field influence functional of a space-time field.
//!
//! For a center `(x0, t0)` and radius `r > 0` the tail is
//!
//! ```text
//! (2s / |S^(n-1)|) r^(2s) sup_t  integral over |y - x0| > r of
//!                                |u(y, t)| |y - x0|^(-n-2s) dy,
//! ```
//!
//! the supremum running over sampled times in `(t0 - r^(2s), t0]`. The
//! surface measures `|S^0| = 2` and `|S^1| = 2 pi` make the tail of the
//! constant function exactly one for every radius.
//!
//! The lattice resolves the annulus `r < |y - x0| <= R` where `R` is the
//! largest radius whose ball stays inside the stored cell footprint; each
//! cell is clipped against the annulus exactly in one dimension (closed
//! form) and by Gauss sampling in two (an `O(h)` in/out fraction at the
//! `r`-sphere). Beyond `R` the field is known only through its far rule,
//! so the remainder uses the rule's value against the closed-form kernel
//! integral; fields with a zero far rule have zero remainder.

use crate::error::{Error, Result};
use crate::field::SpaceTimeField;
use crate::grid::{euclid, Node, SNAP};
use crate::quad::{gauss_rect, GAUSS5};

/// Which part of the field enters the tail integrand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailComponent {
    /// `|u|`.
    Abs,
    /// The positive part `max(u, 0)`.
    Positive,
    /// The negative part `max(-u, 0)`.
    Negative,
}

impl TailComponent {
    fn apply(self, v: f64) -> f64 {
        match self {
            TailComponent::Abs => v.abs(),
            TailComponent::Positive => v.max(0.0),
            TailComponent::Negative => (-v).max(0.0),
        }
    }
}

/// A tail evaluation request.
pub struct TailQuery<'a> {
    /// The field whose far influence is measured.
    pub field: &'a SpaceTimeField,
    /// Spatial center `x0` (second coordinate ignored in one dimension).
    pub center: [f64; 2],
    /// Temporal anchor `t0`.
    pub t0: f64,
    /// Exclusion radius `r > 0`.
    pub r: f64,
    /// Fractional order of the kernel the field was computed under; sets
    /// both the window depth `r^(2s)` and the integrand exponent.
    pub s: f64,
    /// Component of the field to integrate.
    pub component: TailComponent,
}

/// A computed tail value with its discretization metadata.
#[derive(Clone, Debug, serde::Serialize)]
pub struct TailEstimate {
    /// The tail value.
    pub value: f64,
    /// Number of time samples the supremum ran over.
    pub time_samples: usize,
    /// Radius up to which the lattice resolved the integrand; beyond it
    /// the far rule supplied the remainder.
    pub resolved_radius: f64,
}

/// `(d_lo^(-2s) - d_hi^(-2s)) / (2s)`: the one-dimensional kernel mass
/// between two distances from the center.
fn power_interval(d_lo: f64, d_hi: f64, s: f64) -> f64 {
    (d_lo.powf(-2.0 * s) - d_hi.powf(-2.0 * s)) / (2.0 * s)
}

/// Evaluate the tail of a field. See the module docs for the quadrature.
pub fn tail(q: &TailQuery) -> Result<TailEstimate> {
    let grid = q.field.grid();
    let dim = grid.dim();
    let s = q.s;
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "fractional order must lie in (0, 1), got {s}"
        )));
    }
    if !(q.r > 0.0) || !q.r.is_finite() {
        return Err(Error::InvalidRadius(format!(
            "tail radius must be positive, got {}",
            q.r
        )));
    }

    // Largest ball around the center inside the stored cell footprint.
    let h = grid.h();
    let mut resolved = f64::INFINITY;
    for axis in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in grid.interior_positions().iter().chain(grid.collar_positions()) {
            lo = lo.min(p[axis]);
            hi = hi.max(p[axis]);
        }
        resolved = resolved
            .min(q.center[axis] - (lo - 0.5 * h))
            .min((hi + 0.5 * h) - q.center[axis]);
    }
    if resolved <= q.r {
        return Err(Error::InvalidRadius(format!(
            "radius {} leaves no resolved annulus (footprint ends {}
             from the center)",
            q.r, resolved
        )));
    }

    // Sampled times in (t0 - r^(2s), t0].
    let times = q.field.times();
    let depth = q.r.powf(2.0 * s);
    let span = (times[times.len() - 1] - times[0]).abs().max(1.0);
    let tol = SNAP * span;
    if q.t0 > times[times.len() - 1] + tol || q.t0 - depth < times[0] - tol {
        return Err(Error::OutOfRange(format!(
            "tail window ({}, {}] exits the field's time extent [{}, {}]",
            q.t0 - depth,
            q.t0,
            times[0],
            times[times.len() - 1]
        )));
    }
    let window: Vec<usize> = (0..times.len())
        .filter(|&m| times[m] > q.t0 - depth + tol && times[m] <= q.t0 + tol)
        .collect();
    if window.is_empty() {
        return Err(Error::EmptyCylinder(format!(
            "no time samples fall in the tail window ({}, {}]",
            q.t0 - depth,
            q.t0
        )));
    }

    // Per-node clipped kernel masses, independent of time.
    let mut weights: Vec<(Node, f64)> = Vec::new();
    let mut push = |node: Node, p: &[f64; 2]| {
        let w = if dim == 1 {
            let (a, b) = (p[0] - 0.5 * h, p[0] + 0.5 * h);
            let mut acc = 0.0;
            // Right piece: distances measured from the center.
            let lo = (a - q.center[0]).max(q.r);
            let hi = (b - q.center[0]).min(resolved);
            if hi > lo {
                acc += power_interval(lo, hi, s);
            }
            // Left piece.
            let lo = (q.center[0] - b).max(q.r);
            let hi = (q.center[0] - a).min(resolved);
            if hi > lo {
                acc += power_interval(lo, hi, s);
            }
            acc
        } else {
            let far = euclid(p, &q.center, dim);
            if far + h < q.r || far - h > resolved {
                0.0
            } else {
                gauss_rect(
                    &GAUSS5,
                    &|x, y| {
                        let d = ((x - q.center[0]).powi(2) + (y - q.center[1]).powi(2)).sqrt();
                        if d > q.r && d <= resolved {
                            d.powf(-2.0 - 2.0 * s)
                        } else {
                            0.0
                        }
                    },
                    p[0] - 0.5 * h,
                    p[0] + 0.5 * h,
                    p[1] - 0.5 * h,
                    p[1] + 0.5 * h,
                )
            }
        };
        if w > 0.0 {
            weights.push((node, w));
        }
    };
    for (i, p) in grid.interior_positions().iter().enumerate() {
        push(Node::Interior(i), p);
    }
    for (j, p) in grid.collar_positions().iter().enumerate() {
        push(Node::Collar(j), p);
    }

    let surface = if dim == 1 {
        2.0
    } else {
        2.0 * std::f64::consts::PI
    };
    let remainder_mass = surface * resolved.powf(-2.0 * s) / (2.0 * s);
    let prefactor = (2.0 * s / surface) * depth;

    let mut sup = 0.0_f64;
    for &m in &window {
        let mut lattice = 0.0;
        for &(node, w) in &weights {
            lattice += w * q.component.apply(q.field.value(node, m)?);
        }
        let far = q.component.apply(q.field.far().value(m));
        sup = sup.max(lattice + far * remainder_mass);
    }

    Ok(TailEstimate {
        value: prefactor * sup,
        time_samples: window.len(),
        resolved_radius: resolved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FarRule;
    use crate::grid::{build_grid, Domain, Grid};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn line_grid(h: f64, r_inf: f64) -> Arc<Grid> {
        Arc::new(build_grid(Domain::interval(-0.05, 0.05).unwrap(), h, r_inf).unwrap())
    }

    fn constant_field(grid: &Arc<Grid>, c: f64) -> SpaceTimeField {
        let times = vec![-1.0, -0.5, 0.0];
        SpaceTimeField::sample(
            grid.clone(),
            times.clone(),
            |_, _| c,
            FarRule::PerStep(vec![c; times.len()]),
        )
        .unwrap()
    }

    #[test]
    fn constant_normalizes_to_one_for_every_radius() {
        let grid = line_grid(0.01, 4.0);
        let u = constant_field(&grid, 1.0);
        for s in [0.25, 0.5, 0.75] {
            for r in [0.1, 0.5, 1.0] {
                let est = tail(&TailQuery {
                    field: &u,
                    center: [0.0, 0.0],
                    t0: 0.0,
                    r,
                    s,
                    component: TailComponent::Abs,
                })
                .unwrap();
                assert_relative_eq!(est.value, 1.0, max_relative = 1e-12);
                assert!(est.time_samples >= 1);
            }
        }
    }

    #[test]
    fn vanishing_outside_ball_gives_zero() {
        let grid = line_grid(0.01, 2.0);
        let times = vec![-1.0, 0.0];
        let r = 0.5;
        let u = SpaceTimeField::sample(
            grid.clone(),
            times,
            |x, _| if x[0].abs() < 0.9 * r { 3.0 } else { 0.0 },
            FarRule::Zero,
        )
        .unwrap();
        let est = tail(&TailQuery {
            field: &u,
            center: [0.0, 0.0],
            t0: 0.0,
            r,
            s: 0.5,
            component: TailComponent::Abs,
        })
        .unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn open_annulus_indicator_matches_closed_form() {
        // Center at half a cell so both annulus edges are cell boundaries;
        // the clipped lattice sum then reproduces the radial integral
        // exactly: with s = 1/2 the tail of the indicator of
        // {r < |y - x0| < 2r} is r^1 * (1/r - 1/(2r)) * (2s/2) * 2 = 1/2.
        let h = 0.01;
        let grid = line_grid(h, 4.0);
        let x0 = 0.5 * h;
        let r = 0.1;
        let times = vec![-1.0, -0.5, 0.0];
        let u = SpaceTimeField::sample(
            grid.clone(),
            times,
            |x, _| {
                let d = (x[0] - x0).abs();
                if d > r && d < 2.0 * r {
                    1.0
                } else {
                    0.0
                }
            },
            FarRule::Zero,
        )
        .unwrap();
        let est = tail(&TailQuery {
            field: &u,
            center: [x0, 0.0],
            t0: 0.0,
            r,
            s: 0.5,
            component: TailComponent::Abs,
        })
        .unwrap();
        assert_relative_eq!(est.value, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn two_dimensional_constant_normalizes_within_sphere_fraction() {
        let grid = Arc::new(
            build_grid(Domain::rectangle([0.0, 0.0], [1.0, 1.0]).unwrap(), 1.0 / 12.0, 3.0)
                .unwrap(),
        );
        let u = constant_field(&grid, 1.0);
        let est = tail(&TailQuery {
            field: &u,
            center: [0.5, 0.5],
            t0: 0.0,
            r: 0.25,
            s: 0.5,
            component: TailComponent::Abs,
        })
        .unwrap();
        // Gauss in/out sampling at the r-sphere carries an O(h) fraction.
        assert_relative_eq!(est.value, 1.0, max_relative = 0.05);
    }

    #[test]
    fn monotone_in_magnitude_outside_the_ball() {
        let grid = line_grid(0.01, 2.0);
        let times = vec![-1.0, 0.0];
        let r = 0.2;
        let u = SpaceTimeField::sample(
            grid.clone(),
            times.clone(),
            |x, _| (4.0 * x[0]).sin(),
            FarRule::Zero,
        )
        .unwrap();
        let v = SpaceTimeField::sample(
            grid.clone(),
            times,
            |x, _| (4.0 * x[0]).sin().abs() + 0.25,
            FarRule::Zero,
        )
        .unwrap();
        let q = |f: &SpaceTimeField| {
            tail(&TailQuery {
                field: f,
                center: [0.0, 0.0],
                t0: 0.0,
                r,
                s: 0.5,
                component: TailComponent::Abs,
            })
            .unwrap()
            .value
        };
        assert!(q(&u) <= q(&v));
    }

    #[test]
    fn homogeneous_under_scaling() {
        let grid = line_grid(0.01, 2.0);
        let c = -3.5;
        let u = constant_field(&grid, 1.0);
        let cu = constant_field(&grid, c);
        let q = |f: &SpaceTimeField| {
            tail(&TailQuery {
                field: f,
                center: [0.0, 0.0],
                t0: 0.0,
                r: 0.3,
                s: 0.5,
                component: TailComponent::Abs,
            })
            .unwrap()
            .value
        };
        assert_relative_eq!(q(&cu), c.abs() * q(&u), max_relative = 1e-13);
    }

    #[test]
    fn parts_decompose_exactly_for_time_constant_fields() {
        let grid = line_grid(0.01, 2.0);
        let times = vec![-1.0, 0.0];
        let u = SpaceTimeField::sample(
            grid.clone(),
            times.clone(),
            |x, _| (7.0 * x[0]).sin(),
            FarRule::PerStep(vec![-0.25; 2]),
        )
        .unwrap();
        let q = |comp: TailComponent| {
            tail(&TailQuery {
                field: &u,
                center: [0.0, 0.0],
                t0: 0.0,
                r: 0.2,
                s: 0.5,
                component: comp,
            })
            .unwrap()
            .value
        };
        let plus = q(TailComponent::Positive);
        let minus = q(TailComponent::Negative);
        let full = q(TailComponent::Abs);
        assert_relative_eq!(plus + minus, full, max_relative = 1e-13);
    }

    #[test]
    fn bad_radii_are_rejected() {
        let grid = line_grid(0.01, 2.0);
        let u = constant_field(&grid, 1.0);
        for r in [0.0, -1.0, f64::NAN, 100.0] {
            let e = tail(&TailQuery {
                field: &u,
                center: [0.0, 0.0],
                t0: 0.0,
                r,
                s: 0.5,
                component: TailComponent::Abs,
            })
            .unwrap_err();
            assert!(matches!(e, Error::InvalidRadius(_)), "r = {r}: {e}");
        }
    }

    #[test]
    fn window_outside_time_extent_is_rejected() {
        let grid = line_grid(0.01, 2.0);
        let u = constant_field(&grid, 1.0); // times [-1, 0]
        let e = tail(&TailQuery {
            field: &u,
            center: [0.0, 0.0],
            t0: 0.5,
            r: 0.3,
            s: 0.5,
            component: TailComponent::Abs,
        })
        .unwrap_err();
        assert!(matches!(e, Error::OutOfRange(_)), "{e}");
        // Window deeper than the field's first sample.
        let e = tail(&TailQuery {
            field: &u,
            center: [0.0, 0.0],
            t0: 0.0,
            r: 1.5,
            s: 0.5,
            component: TailComponent::Abs,
        })
        .unwrap_err();
        assert!(matches!(e, Error::OutOfRange(_)), "{e}");
    }

    #[test]
    fn empty_sample_window_errors() {
        let grid = line_grid(0.01, 2.0);
        let u = SpaceTimeField::sample(
            grid.clone(),
            vec![-1.0, 0.0],
            |_, _| 1.0,
            FarRule::Zero,
        )
        .unwrap();
        // Window (-0.2 - eps, -0.2] straddles no sample.
        let e = tail(&TailQuery {
            field: &u,
            center: [0.0, 0.0],
            t0: -0.2,
            r: 0.25,
            s: 0.5,
            component: TailComponent::Abs,
        })
        .unwrap_err();
        assert!(matches!(e, Error::EmptyCylinder(_)), "{e}");
    }
}
