//! Space-time lattice fields.
//!
//! A [`SpaceTimeField`] stores one value per lattice node per time sample:
//! interior values (the unknowns of a solve, or sampled data) and,
//! optionally, collar values (exterior Dirichlet data resolved node by
//! node). Beyond the collar the field is described by a [`FarRule`]: either
//! identically zero or a per-step spatial constant. Time samples are
//! strictly increasing; a *data* field sampled at `t_m` is understood as
//! being in force on the half-open step `(t_(m-1), t_m]`, which is the
//! piecewise-constant-in-time convention every solver and audit in this
//! crate shares.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{Cylinder, Grid, Node};
use crate::spectral::SpectralBasis;

/// Behavior of a field beyond the resolved collar.
#[derive(Clone, Debug)]
pub enum FarRule {
    /// Identically zero outside the collar.
    Zero,
    /// A spatial constant per time step (e.g. time-dependent exterior data
    /// that levels off far away).
    PerStep(Vec<f64>),
}

impl FarRule {
    pub fn value(&self, step: usize) -> f64 {
        match self {
            FarRule::Zero => 0.0,
            FarRule::PerStep(v) => v[step],
        }
    }
}

/// How the field varies in time between samples.
///
/// `Sampled` fields only know their step values (difference quotients stand
/// in for time derivatives); `Modal` fields are spectral Galerkin solutions
/// whose time derivative is reconstructed exactly from the eigenbasis.
#[derive(Clone)]
pub enum TimeLaw {
    Sampled,
    Modal(Arc<SpectralBasis>),
}

impl std::fmt::Debug for TimeLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TimeLaw::Sampled => write!(f, "Sampled"),
            TimeLaw::Modal(basis) => write!(f, "Modal({} pairs)", basis.len()),
        }
    }
}

/// A lattice function of space and time with exterior data.
#[derive(Clone, Debug)]
pub struct SpaceTimeField {
    grid: Arc<Grid>,
    times: Vec<f64>,
    interior: DMatrix<f64>,
    collar: Option<DMatrix<f64>>,
    far: FarRule,
    law: TimeLaw,
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidParameter("empty time grid".into()));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidParameter(format!(
                "time samples must increase strictly, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter("non-finite time sample".into()));
    }
    Ok(())
}

impl SpaceTimeField {
    /// Build a field from explicit interior (and optional collar) samples.
    pub fn from_samples(
        grid: Arc<Grid>,
        times: Vec<f64>,
        interior: DMatrix<f64>,
        collar: Option<DMatrix<f64>>,
        far: FarRule,
    ) -> Result<SpaceTimeField> {
        check_times(&times)?;
        if interior.nrows() != grid.n_interior() || interior.ncols() != times.len() {
            return Err(Error::IncompatibleFields(format!(
                "interior block is {}x{}, expected {}x{}",
                interior.nrows(),
                interior.ncols(),
                grid.n_interior(),
                times.len()
            )));
        }
        if let Some(c) = &collar {
            if c.nrows() != grid.n_collar() || c.ncols() != times.len() {
                return Err(Error::IncompatibleFields(format!(
                    "collar block is {}x{}, expected {}x{}",
                    c.nrows(),
                    c.ncols(),
                    grid.n_collar(),
                    times.len()
                )));
            }
        }
        if let FarRule::PerStep(v) = &far {
            if v.len() != times.len() {
                return Err(Error::IncompatibleFields(format!(
                    "far rule has {} steps, expected {}",
                    v.len(),
                    times.len()
                )));
            }
        }
        Ok(SpaceTimeField {
            grid,
            times,
            interior,
            collar,
            far,
            law: TimeLaw::Sampled,
        })
    }

    /// Sample a closure `(x, t) -> value` on interior and collar nodes.
    pub fn sample(
        grid: Arc<Grid>,
        times: Vec<f64>,
        f: impl Fn(&[f64; 2], f64) -> f64,
        far: FarRule,
    ) -> Result<SpaceTimeField> {
        check_times(&times)?;
        let nt = times.len();
        let mut interior = DMatrix::zeros(grid.n_interior(), nt);
        let mut collar = DMatrix::zeros(grid.n_collar(), nt);
        for (m, &t) in times.iter().enumerate() {
            for i in 0..grid.n_interior() {
                interior[(i, m)] = f(&grid.interior_positions()[i], t);
            }
            for j in 0..grid.n_collar() {
                collar[(j, m)] = f(&grid.collar_positions()[j], t);
            }
        }
        SpaceTimeField::from_samples(grid, times, interior, Some(collar), far)
    }

    /// The zero field (interior and collar all zero, zero far rule).
    pub fn zero(grid: Arc<Grid>, times: Vec<f64>) -> Result<SpaceTimeField> {
        check_times(&times)?;
        let nt = times.len();
        let interior = DMatrix::zeros(grid.n_interior(), nt);
        let collar = DMatrix::zeros(grid.n_collar(), nt);
        SpaceTimeField::from_samples(grid, times, interior, Some(collar), FarRule::Zero)
    }

    /// A field with interior samples only; applying an operator to it
    /// fails with an incomplete-field error because offsets exit into the
    /// unresolved collar.
    pub fn interior_only(
        grid: Arc<Grid>,
        times: Vec<f64>,
        interior: DMatrix<f64>,
    ) -> Result<SpaceTimeField> {
        SpaceTimeField::from_samples(grid, times, interior, None, FarRule::Zero)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_steps(&self) -> usize {
        self.times.len()
    }

    /// Step width `t_m - t_(m-1)` (m >= 1).
    pub fn dt(&self, m: usize) -> f64 {
        self.times[m] - self.times[m - 1]
    }

    pub fn law(&self) -> &TimeLaw {
        &self.law
    }

    pub fn set_law(&mut self, law: TimeLaw) {
        self.law = law;
    }

    pub fn far(&self) -> &FarRule {
        &self.far
    }

    pub fn interior(&self) -> &DMatrix<f64> {
        &self.interior
    }

    pub fn collar(&self) -> Option<&DMatrix<f64>> {
        self.collar.as_ref()
    }

    /// Interior values at step `m` as a column vector.
    pub fn interior_at(&self, m: usize) -> DVector<f64> {
        self.interior.column(m).into_owned()
    }

    /// Collar values at step `m`, if the collar is resolved.
    pub fn collar_at(&self, m: usize) -> Option<DVector<f64>> {
        self.collar.as_ref().map(|c| c.column(m).into_owned())
    }

    /// Value at a lattice node and step.
    pub fn value(&self, node: Node, m: usize) -> Result<f64> {
        match node {
            Node::Interior(i) => Ok(self.interior[(i, m)]),
            Node::Collar(j) => self
                .collar
                .as_ref()
                .map(|c| c[(j, m)])
                .ok_or_else(|| Error::IncompleteField("collar values are not stored".into())),
        }
    }

    /// Largest absolute value over interior, collar, and far rule at one step.
    pub fn sup_abs_at(&self, m: usize) -> f64 {
        let mut sup = self.far.value(m).abs();
        for i in 0..self.interior.nrows() {
            sup = sup.max(self.interior[(i, m)].abs());
        }
        if let Some(c) = &self.collar {
            for j in 0..c.nrows() {
                sup = sup.max(c[(j, m)].abs());
            }
        }
        sup
    }

    /// Extrema `(inf, sup)` of the field over a cylinder's lattice members.
    pub fn cylinder_extrema(&self, cyl: &Cylinder) -> Result<(f64, f64)> {
        let members = cyl.members(&self.grid, &self.times);
        if members.is_empty() {
            return Err(Error::EmptyCylinder(format!(
                "no lattice member in B_{}({}, {}) x ({}, {}]",
                cyl.r, cyl.center[0], cyl.center[1], cyl.window.0, cyl.window.1
            )));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, m) in members {
            let v = self.interior[(i, m)];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok((lo, hi))
    }

    /// Pointwise sum with another field on the same grid and times.
    pub fn add(&self, other: &SpaceTimeField) -> Result<SpaceTimeField> {
        if !Arc::ptr_eq(&self.grid, &other.grid) || self.times != other.times {
            return Err(Error::IncompatibleFields(
                "fields disagree on grid or time samples".into(),
            ));
        }
        let interior = &self.interior + &other.interior;
        let collar = match (&self.collar, &other.collar) {
            (Some(a), Some(b)) => Some(a + b),
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (None, None) => None,
        };
        let far = match (&self.far, &other.far) {
            (FarRule::Zero, FarRule::Zero) => FarRule::Zero,
            _ => FarRule::PerStep(
                (0..self.times.len())
                    .map(|m| self.far.value(m) + other.far.value(m))
                    .collect(),
            ),
        };
        SpaceTimeField::from_samples(self.grid.clone(), self.times.clone(), interior, collar, far)
    }

    /// Pointwise difference (`self - other`).
    pub fn sub(&self, other: &SpaceTimeField) -> Result<SpaceTimeField> {
        if !Arc::ptr_eq(&self.grid, &other.grid) || self.times != other.times {
            return Err(Error::IncompatibleFields(
                "fields disagree on grid or time samples".into(),
            ));
        }
        let interior = &self.interior - &other.interior;
        let collar = match (&self.collar, &other.collar) {
            (Some(a), Some(b)) => Some(a - b),
            (Some(a), None) => Some(a.clone()),
            (None, Some(b)) => Some(-b),
            (None, None) => None,
        };
        let far = match (&self.far, &other.far) {
            (FarRule::Zero, FarRule::Zero) => FarRule::Zero,
            _ => FarRule::PerStep(
                (0..self.times.len())
                    .map(|m| self.far.value(m) - other.far.value(m))
                    .collect(),
            ),
        };
        SpaceTimeField::from_samples(self.grid.clone(), self.times.clone(), interior, collar, far)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Domain};

    fn arc_grid() -> Arc<Grid> {
        Arc::new(build_grid(Domain::interval(0.0, 1.0).unwrap(), 0.25, 2.0).unwrap())
    }

    #[test]
    fn sample_fills_interior_and_collar() {
        let grid = arc_grid();
        let f = SpaceTimeField::sample(
            grid.clone(),
            vec![0.0, 1.0],
            |x, t| x[0] + t,
            FarRule::Zero,
        )
        .unwrap();
        assert_eq!(f.interior().nrows(), 3);
        assert_eq!(f.interior()[(1, 1)], 0.5 + 1.0);
        let collar = f.collar().unwrap();
        assert_eq!(collar.nrows(), grid.n_collar());
    }

    #[test]
    fn decreasing_times_rejected() {
        let grid = arc_grid();
        let err = SpaceTimeField::zero(grid, vec![0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn mismatched_blocks_rejected() {
        let grid = arc_grid();
        let err = SpaceTimeField::from_samples(
            grid,
            vec![0.0, 1.0],
            DMatrix::zeros(2, 2),
            None,
            FarRule::Zero,
        )
        .unwrap_err();
        assert!(matches!(err, Error::IncompatibleFields(_)));
    }

    #[test]
    fn add_and_sub_are_pointwise() {
        let grid = arc_grid();
        let a = SpaceTimeField::sample(grid.clone(), vec![0.0], |x, _| x[0], FarRule::Zero)
            .unwrap();
        let b = SpaceTimeField::sample(
            grid.clone(),
            vec![0.0],
            |x, _| 2.0 * x[0],
            FarRule::PerStep(vec![1.0]),
        )
        .unwrap();
        let sum = a.add(&b).unwrap();
        assert_eq!(sum.interior()[(0, 0)], 0.75);
        assert_eq!(sum.far().value(0), 1.0);
        let diff = sum.sub(&b).unwrap();
        assert!((diff.interior()[(2, 0)] - 0.75).abs() < 1e-15);
        assert_eq!(diff.far().value(0), 0.0);
    }
}
