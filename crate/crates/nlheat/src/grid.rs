//! Lattice discretization of the domain and its exterior collar, and the
//! space-time cylinders used by the audits.
//!
//! The domain is an open interval (n = 1) or open axis-aligned rectangle
//! (n = 2). A uniform lattice of width `h` is anchored at the lower corner;
//! nodes strictly inside the domain are *interior*, and lattice nodes
//! outside the domain but within distance `R_inf` of it form the *collar*
//! that carries exterior Dirichlet data. Beyond the collar the operator
//! closes the far field analytically, so `R_inf` is the radius out to which
//! exterior data is resolved node-by-node.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Relative snapping tolerance for lattice/boundary coincidences.
pub(crate) const SNAP: f64 = 1e-12;

/// Open interval or open axis-aligned rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    dim: usize,
    min: [f64; 2],
    max: [f64; 2],
}

impl Domain {
    /// Open interval `(a, b)`.
    pub fn interval(a: f64, b: f64) -> Result<Domain> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "interval endpoints must be finite with a < b, got ({a}, {b})"
            )));
        }
        Ok(Domain {
            dim: 1,
            min: [a, 0.0],
            max: [b, 0.0],
        })
    }

    /// Open rectangle `(min_x, max_x) x (min_y, max_y)`.
    pub fn rectangle(min: [f64; 2], max: [f64; 2]) -> Result<Domain> {
        for axis in 0..2 {
            if !(min[axis] < max[axis]) || !min[axis].is_finite() || !max[axis].is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "rectangle corners must be finite with min < max per axis, got \
                     axis {axis}: ({}, {})",
                    min[axis], max[axis]
                )));
            }
        }
        Ok(Domain { dim: 2, min, max })
    }

    /// Spatial dimension (1 or 2).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lower corner (second entry meaningful only when `dim() == 2`).
    pub fn min(&self) -> [f64; 2] {
        self.min
    }

    /// Upper corner.
    pub fn max(&self) -> [f64; 2] {
        self.max
    }

    /// Side length along `axis`.
    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        match self.dim {
            1 => self.extent(0),
            _ => (self.extent(0).powi(2) + self.extent(1).powi(2)).sqrt(),
        }
    }

    /// Strict interior membership.
    pub fn contains(&self, x: &[f64; 2]) -> bool {
        (0..self.dim).all(|a| x[a] > self.min[a] && x[a] < self.max[a])
    }

    /// Euclidean distance from `x` to the closed domain (0 inside).
    pub fn distance(&self, x: &[f64; 2]) -> f64 {
        let mut acc = 0.0;
        for a in 0..self.dim {
            let d = (self.min[a] - x[a]).max(x[a] - self.max[a]).max(0.0);
            acc += d * d;
        }
        acc.sqrt()
    }
}

/// Identity of a lattice node: interior (solution unknown) or collar
/// (exterior Dirichlet datum).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Node {
    Interior(usize),
    Collar(usize),
}

/// Uniform lattice over the domain and its exterior collar.
#[derive(Debug)]
pub struct Grid {
    domain: Domain,
    h: f64,
    r_inf: f64,
    interior_coords: Vec<[i64; 2]>,
    collar_coords: Vec<[i64; 2]>,
    interior_pos: Vec<[f64; 2]>,
    collar_pos: Vec<[f64; 2]>,
    lookup: HashMap<[i64; 2], Node>,
}

/// Build the lattice: interior nodes strictly inside the domain, collar
/// nodes outside it but within distance `r_inf`.
///
/// `r_inf` must be at least twice the domain diameter so the collar
/// dominates the resolved range of the operator; `h` must be smaller than
/// every side of the domain or the grid is degenerate.
pub fn build_grid(domain: Domain, h: f64, r_inf: f64) -> Result<Grid> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "mesh width must be positive and finite, got {h}"
        )));
    }
    for axis in 0..domain.dim() {
        if h >= domain.extent(axis) {
            return Err(Error::DegenerateGrid(format!(
                "mesh width {h} is not smaller than the domain extent {} along axis {axis}",
                domain.extent(axis)
            )));
        }
    }
    if !(r_inf >= 2.0 * domain.diameter()) || !r_inf.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "collar radius {r_inf} must be finite and at least twice the domain diameter {}",
            2.0 * domain.diameter()
        )));
    }

    let dim = domain.dim();
    let margin = (r_inf / h + SNAP).floor() as i64;
    let mut upper = [0i64; 2];
    for (axis, entry) in upper.iter_mut().enumerate().take(dim) {
        *entry = ((domain.extent(axis) + r_inf) / h + SNAP).ceil() as i64;
    }

    let mut interior_coords = Vec::new();
    let mut collar_coords = Vec::new();
    let mut classify = |coord: [i64; 2]| {
        let x = position_of(&domain, h, &coord);
        let strictly_inside = (0..dim).all(|a| {
            let tol = SNAP * domain.extent(a).max(1.0);
            x[a] > domain.min[a] + tol && x[a] < domain.max[a] - tol
        });
        if strictly_inside {
            interior_coords.push(coord);
        } else {
            let tol = SNAP * r_inf.max(1.0);
            if domain.distance(&x) <= r_inf + tol {
                collar_coords.push(coord);
            }
        }
    };
    match dim {
        1 => {
            for i in -margin..=upper[0] {
                classify([i, 0]);
            }
        }
        _ => {
            for i in -margin..=upper[0] {
                for j in -margin..=upper[1] {
                    classify([i, j]);
                }
            }
        }
    }
    if interior_coords.is_empty() {
        return Err(Error::DegenerateGrid(
            "no lattice node lies strictly inside the domain".into(),
        ));
    }

    let interior_pos: Vec<_> = interior_coords
        .iter()
        .map(|c| position_of(&domain, h, c))
        .collect();
    let collar_pos: Vec<_> = collar_coords
        .iter()
        .map(|c| position_of(&domain, h, c))
        .collect();
    let mut lookup = HashMap::with_capacity(interior_coords.len() + collar_coords.len());
    for (idx, c) in interior_coords.iter().enumerate() {
        lookup.insert(*c, Node::Interior(idx));
    }
    for (idx, c) in collar_coords.iter().enumerate() {
        lookup.insert(*c, Node::Collar(idx));
    }
    Ok(Grid {
        domain,
        h,
        r_inf,
        interior_coords,
        collar_coords,
        interior_pos,
        collar_pos,
        lookup,
    })
}

fn position_of(domain: &Domain, h: f64, coord: &[i64; 2]) -> [f64; 2] {
    let mut x = [0.0; 2];
    for a in 0..domain.dim() {
        x[a] = domain.min[a] + coord[a] as f64 * h;
    }
    x
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn r_inf(&self) -> f64 {
        self.r_inf
    }

    /// Lattice cell measure `h^n`.
    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn n_interior(&self) -> usize {
        self.interior_coords.len()
    }

    pub fn n_collar(&self) -> usize {
        self.collar_coords.len()
    }

    pub fn interior_positions(&self) -> &[[f64; 2]] {
        &self.interior_pos
    }

    pub fn collar_positions(&self) -> &[[f64; 2]] {
        &self.collar_pos
    }

    pub fn interior_coord(&self, idx: usize) -> [i64; 2] {
        self.interior_coords[idx]
    }

    pub fn collar_coord(&self, idx: usize) -> [i64; 2] {
        self.collar_coords[idx]
    }

    /// Node at the given lattice coordinates, if resolved by this grid.
    pub fn node_at(&self, coord: [i64; 2]) -> Option<Node> {
        self.lookup.get(&coord).copied()
    }

    /// Interior nodes inside the open Euclidean ball `B_r(x0)`.
    pub fn ball_nodes(&self, x0: &[f64; 2], r: f64) -> Vec<usize> {
        (0..self.n_interior())
            .filter(|&i| euclid(&self.interior_pos[i], x0, self.dim()) < r)
            .collect()
    }
}

/// Euclidean distance between two points of the given dimension.
pub fn euclid(a: &[f64; 2], b: &[f64; 2], dim: usize) -> f64 {
    let mut acc = 0.0;
    for axis in 0..dim {
        acc += (a[axis] - b[axis]).powi(2);
    }
    acc.sqrt()
}

/// Shape of a space-time cylinder anchored at `(x0, t0)`.
///
/// All four share the spatial ball `B_r(x0)`; they differ in the time
/// window (half-open, closed at the top):
///
/// * `Standard` — `(t0 - r^(2s), t0]`;
/// * `Fat` — `(t0 - (2 - sigma) r^(2s), t0]`;
/// * `Plus` — `(t0 - sigma r^(2s), t0]` (the late sub-window);
/// * `Minus` — `(t0 - (1/2 + sigma) r^(2s), t0 - (1/2) r^(2s)]` (an early
///   sub-window).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CylinderKind {
    Standard,
    Fat,
    Plus,
    Minus,
}

/// A space-time cylinder `B_r(x0) x (window]` with its slack parameter.
#[derive(Clone, Debug)]
pub struct Cylinder {
    pub center: [f64; 2],
    pub t0: f64,
    pub r: f64,
    pub kind: CylinderKind,
    pub sigma: f64,
    pub s: f64,
    /// Time window `(t_lo, t_hi]`.
    pub window: (f64, f64),
    dim: usize,
}

/// Largest admissible slack: fat and plus cylinders stay measure-compatible
/// exactly when `sigma <= 2/5`.
pub const SIGMA_MAX: f64 = 0.4;

/// Build a cylinder of the given kind, checking the slack parameter, the
/// containment of its ball in the domain, and of its window in the field's
/// time extent `(t_min, t_max]`.
pub fn make_cylinder(
    grid: &Grid,
    time_extent: (f64, f64),
    center: [f64; 2],
    t0: f64,
    r: f64,
    kind: CylinderKind,
    sigma: f64,
    s: f64,
) -> Result<Cylinder> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidRadius(format!(
            "cylinder radius must be positive, got {r}"
        )));
    }
    if !(sigma > 0.0 && sigma <= SIGMA_MAX + 1e-15) {
        return Err(Error::InvalidSigma(format!(
            "sigma must lie in (0, 2/5], got {sigma}"
        )));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "cylinder order s must lie in (0, 1), got {s}"
        )));
    }
    if !grid.domain().contains(&center) {
        return Err(Error::OutOfDomain(format!(
            "cylinder center ({}, {}) is not inside the domain",
            center[0], center[1]
        )));
    }
    let dim = grid.dim();
    for axis in 0..dim {
        let tol = SNAP * grid.domain().extent(axis).max(1.0);
        if center[axis] - r < grid.domain().min()[axis] - tol
            || center[axis] + r > grid.domain().max()[axis] + tol
        {
            return Err(Error::OutOfDomain(format!(
                "ball of radius {r} around ({}, {}) exits the domain along axis {axis}",
                center[0], center[1]
            )));
        }
    }
    let depth = r.powf(2.0 * s);
    let window = match kind {
        CylinderKind::Standard => (t0 - depth, t0),
        CylinderKind::Fat => (t0 - (2.0 - sigma) * depth, t0),
        CylinderKind::Plus => (t0 - sigma * depth, t0),
        CylinderKind::Minus => (t0 - (0.5 + sigma) * depth, t0 - 0.5 * depth),
    };
    let (t_min, t_max) = time_extent;
    let tol = SNAP * (t_max - t_min).abs().max(1.0);
    if window.0 < t_min - tol || window.1 > t_max + tol {
        return Err(Error::OutOfDomain(format!(
            "cylinder window ({}, {}] exits the time extent ({t_min}, {t_max}]",
            window.0, window.1
        )));
    }
    Ok(Cylinder {
        center,
        t0,
        r,
        kind,
        sigma,
        s,
        window,
        dim,
    })
}

impl Cylinder {
    /// Strict spatial membership `|x - x0| < r`.
    pub fn contains_point(&self, x: &[f64; 2]) -> bool {
        euclid(x, &self.center, self.dim) < self.r
    }

    /// Half-open time membership `t_lo < t <= t_hi` (with snapping slack,
    /// so samples landing exactly on the closed top are kept and samples
    /// on the open bottom are dropped).
    pub fn contains_time(&self, t: f64) -> bool {
        let tol = SNAP * (self.window.1 - self.window.0).abs().max(1.0);
        t > self.window.0 + tol && t <= self.window.1 + tol
    }

    /// Interior lattice members as `(node index, step index)` pairs.
    pub fn members(&self, grid: &Grid, times: &[f64]) -> Vec<(usize, usize)> {
        let nodes: Vec<usize> = (0..grid.n_interior())
            .filter(|&i| self.contains_point(&grid.interior_positions()[i]))
            .collect();
        let steps: Vec<usize> = (0..times.len())
            .filter(|&m| self.contains_time(times[m]))
            .collect();
        let mut members = Vec::with_capacity(nodes.len() * steps.len());
        for &m in &steps {
            for &i in &nodes {
                members.push((i, m));
            }
        }
        members
    }

    /// Analytic space-time measure `|B_r| * window length`.
    pub fn measure_analytic(&self) -> f64 {
        let ball = match self.dim {
            1 => 2.0 * self.r,
            _ => std::f64::consts::PI * self.r * self.r,
        };
        ball * (self.window.1 - self.window.0)
    }

    /// Lattice space-time measure: member count times `h^n * dt`.
    pub fn measure_lattice(&self, grid: &Grid, times: &[f64], dt: f64) -> f64 {
        self.members(grid, times).len() as f64 * grid.cell_measure() * dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unit_interval_quarter_mesh() {
        let grid = build_grid(Domain::interval(0.0, 1.0).unwrap(), 0.25, 2.0).unwrap();
        assert_eq!(grid.n_interior(), 3);
        let xs: Vec<f64> = grid.interior_positions().iter().map(|p| p[0]).collect();
        assert_relative_eq!(xs[0], 0.25);
        assert_relative_eq!(xs[1], 0.5);
        assert_relative_eq!(xs[2], 0.75);
    }

    #[test]
    fn unit_square_half_mesh_has_single_interior_node() {
        let dom = Domain::rectangle([0.0, 0.0], [1.0, 1.0]).unwrap();
        let grid = build_grid(dom, 0.5, 4.0).unwrap();
        assert_eq!(grid.n_interior(), 1);
        let p = grid.interior_positions()[0];
        assert_relative_eq!(p[0], 0.5);
        assert_relative_eq!(p[1], 0.5);
    }

    #[test]
    fn coarse_mesh_is_degenerate() {
        let err = build_grid(Domain::interval(0.0, 1.0).unwrap(), 1.5, 2.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateGrid(_)));
    }

    #[test]
    fn collar_nodes_sit_outside_within_radius() {
        let grid = build_grid(Domain::interval(0.0, 1.0).unwrap(), 0.125, 2.0).unwrap();
        assert!(grid.n_collar() > 0);
        let mut max_dist: f64 = 0.0;
        for p in grid.collar_positions() {
            assert!(!grid.domain().contains(p), "collar node {p:?} inside domain");
            let d = grid.domain().distance(p);
            assert!(d <= grid.r_inf() * (1.0 + 1e-9));
            max_dist = max_dist.max(d);
        }
        // The collar really reaches out to the resolved radius.
        assert!(max_dist > grid.r_inf() - 2.0 * grid.h());
    }

    #[test]
    fn lookup_roundtrip() {
        let dom = Domain::rectangle([0.0, 0.0], [1.0, 0.5]).unwrap();
        let grid = build_grid(dom, 0.125, 3.0).unwrap();
        for i in 0..grid.n_interior() {
            assert_eq!(grid.node_at(grid.interior_coord(i)), Some(Node::Interior(i)));
        }
        for j in 0..grid.n_collar() {
            assert_eq!(grid.node_at(grid.collar_coord(j)), Some(Node::Collar(j)));
        }
    }

    fn demo_grid() -> Grid {
        build_grid(Domain::interval(0.0, 1.0).unwrap(), 0.0625, 2.0).unwrap()
    }

    #[test]
    fn sigma_above_two_fifths_is_rejected() {
        let grid = demo_grid();
        let err = make_cylinder(
            &grid,
            (-1.0, 0.0),
            [0.5, 0.0],
            -0.1,
            0.2,
            CylinderKind::Standard,
            0.45,
            0.5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidSigma(_)));
    }

    #[test]
    fn fat_to_standard_measure_ratio_is_two_minus_sigma() {
        let grid = demo_grid();
        let sigma = 0.3;
        let standard = make_cylinder(
            &grid,
            (-1.0, 0.0),
            [0.5, 0.0],
            -0.1,
            0.2,
            CylinderKind::Standard,
            sigma,
            0.5,
        )
        .unwrap();
        let fat = make_cylinder(
            &grid,
            (-1.0, 0.0),
            [0.5, 0.0],
            -0.1,
            0.2,
            CylinderKind::Fat,
            sigma,
            0.5,
        )
        .unwrap();
        assert_relative_eq!(
            fat.measure_analytic() / standard.measure_analytic(),
            2.0 - sigma,
            max_relative = 1e-14
        );
    }

    #[test]
    fn minus_window_matches_definition() {
        let grid = demo_grid();
        let (t0, r, s, sigma) = (-0.1, 0.2, 0.5, 0.25);
        let c = make_cylinder(
            &grid,
            (-1.0, 0.0),
            [0.5, 0.0],
            t0,
            r,
            CylinderKind::Minus,
            sigma,
            s,
        )
        .unwrap();
        let depth = r.powf(2.0 * s);
        assert_relative_eq!(c.window.0, t0 - (0.5 + sigma) * depth, max_relative = 1e-14);
        assert_relative_eq!(c.window.1, t0 - 0.5 * depth, max_relative = 1e-14);
    }

    #[test]
    fn ball_exiting_domain_is_rejected() {
        let grid = demo_grid();
        let err = make_cylinder(
            &grid,
            (-1.0, 0.0),
            [0.1, 0.0],
            -0.1,
            0.3,
            CylinderKind::Standard,
            0.3,
            0.5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::OutOfDomain(_)));
    }

    #[test]
    fn membership_against_brute_force() {
        let grid = demo_grid();
        let times: Vec<f64> = (0..=32).map(|m| -1.0 + m as f64 / 32.0).collect();
        let c = make_cylinder(
            &grid,
            (-1.0, 0.0),
            [0.5, 0.0],
            -0.25,
            0.25,
            CylinderKind::Standard,
            0.3,
            0.5,
        )
        .unwrap();
        let members = c.members(&grid, &times);
        let mut brute = Vec::new();
        for (m, &t) in times.iter().enumerate() {
            for i in 0..grid.n_interior() {
                let x = grid.interior_positions()[i][0];
                let in_ball = (x - 0.5).abs() < 0.25;
                let depth = 0.25f64.powf(1.0);
                let in_window = t > -0.25 - depth + 1e-12 && t <= -0.25 + 1e-12;
                if in_ball && in_window {
                    brute.push((i, m));
                }
            }
        }
        let mut sorted = members.clone();
        sorted.sort_unstable();
        brute.sort_unstable();
        assert_eq!(sorted, brute);
        assert!(!members.is_empty());
    }
}
