//! Parabolic distance, dilation of discrete point sets, and the
//! Krylov–Safonov-type covering dichotomy on backward space-time cylinders.
//!
//! The host object is a "plus" cylinder: a spatial ball of radius `r`
//! crossed with the backward time window of depth `sigma * r^(2s)`,
//! discretized by a cell-centered lattice (`nspace` cells per axis,
//! `ntime` layers). Subsets of its cells are stored as bitmasks; their
//! measure is the cell count times the cell measure `h^n * dt`.
//!
//! Dilation unions every sub-cylinder `Q⁺_{3ρ}(X)` whose share of the set
//! exceeds the density threshold `γ` measured against the *analytic* volume
//! `|B_ρ| σ ρ^(2s)`, over centers `X` in the host and a geometric grid of
//! scales `ρ`. Because the metric balls around a fixed center are nested in
//! `ρ`, the implementation keeps only the largest qualifying ball per
//! center; a naive per-scale union must produce the identical mask, which
//! the tests check against an independent oracle.
//!
//! The time axis matters: the parabolic distance is infinite unless the
//! second point lies strictly in the past of the first, so sub-cylinders
//! collect strictly earlier cells and the host's latest time layer can
//! never be covered. The dichotomy therefore tolerates a one-cell shell at
//! the host boundary, which is exactly the slack a lattice needs.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::euclid;

/// Largest admissible cylinder slack; see the two-fifths rule on cylinders.
const SIGMA_MAX: f64 = 0.4;

/// Number of geometric dilation scales strictly inside `(0, rho_max)`;
/// consecutive scales differ by the ratio `2^(1/4)`.
const N_SCALES: usize = 20;

/// A space-time point. In one dimension the second spatial slot is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    /// Spatial position.
    pub x: [f64; 2],
    /// Time.
    pub t: f64,
}

/// Extended-real parabolic distance from `x` to `y`.
///
/// Infinite when `y` does not lie strictly in the past of `x`; otherwise
/// the larger of the spatial distance and `(|t - τ| / sigma)^(1/(2s))`.
/// The metric ball `{ y : parabolic_distance(x, y, σ, s) < ρ }` is the
/// backward cylinder `B_ρ(x) × (t - σρ^(2s), t)`.
pub fn parabolic_distance(x: Point, y: Point, sigma: f64, s: f64) -> f64 {
    if y.t >= x.t {
        return f64::INFINITY;
    }
    let spatial = euclid(&x.x, &y.x, 2);
    let temporal = ((x.t - y.t) / sigma).powf(1.0 / (2.0 * s));
    spatial.max(temporal)
}

/// Discretized backward cylinder: ball × backward time window, with a
/// cell-centered lattice. Cells are indexed layer-major: consecutive
/// indices sweep the spatial members of one time layer.
#[derive(Debug)]
pub struct PlusCylinder {
    dim: usize,
    center: [f64; 2],
    t0: f64,
    r: f64,
    sigma: f64,
    s: f64,
    h: f64,
    dt: f64,
    space: Vec<[f64; 2]>,
    interior_space: Vec<bool>,
    times: Vec<f64>,
}

impl PlusCylinder {
    /// Builds the lattice cylinder of radius `r` below the anchor
    /// `(center, t0)`: `nspace` cells per spatial axis on the bounding box
    /// of the ball (in two dimensions only cells whose centers fall inside
    /// the ball are kept) and `ntime` cell-centered time layers of total
    /// depth `sigma * r^(2s)`.
    pub fn build(
        dim: usize,
        center: [f64; 2],
        t0: f64,
        r: f64,
        sigma: f64,
        s: f64,
        nspace: usize,
        ntime: usize,
    ) -> Result<Arc<Self>> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidParameter(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidRadius(format!(
                "cylinder radius must be positive and finite, got {r}"
            )));
        }
        if !(sigma > 0.0 && sigma <= SIGMA_MAX) {
            return Err(Error::InvalidSigma(format!(
                "sigma must lie in (0, {SIGMA_MAX}], got {sigma}"
            )));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "fractional order must lie in (0, 1), got {s}"
            )));
        }
        if nspace == 0 || ntime == 0 {
            return Err(Error::InvalidParameter(
                "cylinder needs at least one cell per axis".into(),
            ));
        }
        if !t0.is_finite() || !center[0].is_finite() || !center[1].is_finite() {
            return Err(Error::InvalidParameter(
                "cylinder anchor must be finite".into(),
            ));
        }

        let h = 2.0 * r / nspace as f64;
        let depth = sigma * r.powf(2.0 * s);
        let dt = depth / ntime as f64;

        // Cell-centered members; in 2d keep only centers inside the ball.
        let mut space = Vec::new();
        let mut index_of = HashMap::new();
        let jrange = if dim == 2 { nspace } else { 1 };
        for i in 0..nspace {
            for j in 0..jrange {
                let mut p = [center[0] - r + (i as f64 + 0.5) * h, 0.0];
                if dim == 2 {
                    p[1] = center[1] - r + (j as f64 + 0.5) * h;
                }
                if dim == 2 && euclid(&p, &center, 2) >= r {
                    continue;
                }
                index_of.insert((i, j), space.len());
                space.push(p);
            }
        }
        if space.is_empty() {
            return Err(Error::EmptyCylinder(
                "no lattice cell centers fall inside the spatial ball".into(),
            ));
        }
        let interior_space = (0..nspace)
            .flat_map(|i| (0..jrange).map(move |j| (i, j)))
            .filter(|key| index_of.contains_key(key))
            .map(|(i, j)| {
                let mut ok = i > 0
                    && i + 1 < nspace
                    && index_of.contains_key(&(i - 1, j))
                    && index_of.contains_key(&(i + 1, j));
                if dim == 2 {
                    ok = ok
                        && j > 0
                        && j + 1 < nspace
                        && index_of.contains_key(&(i, j - 1))
                        && index_of.contains_key(&(i, j + 1));
                }
                ok
            })
            .collect();

        let times = (0..ntime)
            .map(|m| t0 - depth + (m as f64 + 0.5) * dt)
            .collect();

        Ok(Arc::new(Self {
            dim,
            center,
            t0,
            r,
            sigma,
            s,
            h,
            dt,
            space,
            interior_space,
            times,
        }))
    }

    /// Spatial dimension (1 or 2).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Anchor point; the cylinder opens backward in time from it.
    pub fn anchor(&self) -> Point {
        Point {
            x: self.center,
            t: self.t0,
        }
    }

    /// Spatial radius.
    pub fn radius(&self) -> f64 {
        self.r
    }

    /// Cylinder slack joining radius to time depth.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Fractional order scaling the time depth.
    pub fn s(&self) -> f64 {
        self.s
    }

    /// Number of lattice cells (spatial members times time layers).
    pub fn len(&self) -> usize {
        self.space.len() * self.times.len()
    }

    /// True when the cylinder has no cells (never after a successful build).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of spatial members per time layer.
    pub fn spatial_len(&self) -> usize {
        self.space.len()
    }

    /// Number of time layers.
    pub fn layers(&self) -> usize {
        self.times.len()
    }

    /// Measure of one lattice cell, `h^dim * dt`.
    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.dim as i32) * self.dt
    }

    /// The space-time point at a cell index.
    pub fn point(&self, idx: usize) -> Point {
        let layer = idx / self.space.len();
        let sp = idx % self.space.len();
        Point {
            x: self.space[sp],
            t: self.times[layer],
        }
    }

    /// True for cells within one cell of the cylinder boundary: first or
    /// last time layer, or a spatial member missing an axis neighbor.
    pub fn is_shell(&self, idx: usize) -> bool {
        let layer = idx / self.space.len();
        let sp = idx % self.space.len();
        layer == 0 || layer + 1 == self.times.len() || !self.interior_space[sp]
    }

    /// Analytic measure `|B_ρ| σ ρ^(2s)` of the continuum cylinder of
    /// radius `rho` in this cylinder's geometry.
    pub fn analytic_measure(&self, rho: f64) -> f64 {
        let ball = match self.dim {
            1 => 2.0 * rho,
            _ => std::f64::consts::PI * rho * rho,
        };
        ball * self.sigma * rho.powf(2.0 * self.s)
    }
}

/// Subset of a cylinder's lattice cells, stored as a bitmask.
#[derive(Clone, Debug)]
pub struct ParabolicPointSet {
    host: Arc<PlusCylinder>,
    bits: Vec<u64>,
}

impl ParabolicPointSet {
    /// The empty subset.
    pub fn empty(host: Arc<PlusCylinder>) -> Self {
        let words = host.len().div_ceil(64);
        Self {
            host,
            bits: vec![0; words],
        }
    }

    /// The full cylinder as a subset.
    pub fn full(host: Arc<PlusCylinder>) -> Self {
        let mut set = Self::empty(host);
        for idx in 0..set.host.len() {
            set.insert(idx);
        }
        set
    }

    /// Membership decided cell-by-cell from the cell's space-time point.
    pub fn from_fn(host: Arc<PlusCylinder>, mut member: impl FnMut(Point) -> bool) -> Self {
        let mut set = Self::empty(host);
        for idx in 0..set.host.len() {
            if member(set.host.point(idx)) {
                set.insert(idx);
            }
        }
        set
    }

    /// The host cylinder.
    pub fn host(&self) -> &Arc<PlusCylinder> {
        &self.host
    }

    /// True when the cell at `idx` belongs to the set.
    pub fn contains(&self, idx: usize) -> bool {
        self.bits[idx / 64] >> (idx % 64) & 1 == 1
    }

    /// Adds the cell at `idx`.
    pub fn insert(&mut self, idx: usize) {
        assert!(idx < self.host.len(), "cell index out of range");
        self.bits[idx / 64] |= 1 << (idx % 64);
    }

    /// Number of member cells.
    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Lattice measure: member count times the cell measure.
    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.host.cell_measure()
    }

    /// True when every member of `self` is a member of `other`.
    /// Both sets must live on the same host cylinder.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        assert!(
            Arc::ptr_eq(&self.host, &other.host),
            "subset test across different host cylinders"
        );
        self.bits
            .iter()
            .zip(&other.bits)
            .all(|(a, b)| a & !b == 0)
    }

    /// Cell-wise union with a set on the same host cylinder.
    pub fn union(&self, other: &Self) -> Self {
        assert!(
            Arc::ptr_eq(&self.host, &other.host),
            "union across different host cylinders"
        );
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| a | b)
            .collect();
        Self {
            host: self.host.clone(),
            bits,
        }
    }

    /// Serializes the mask as run-length-encoded text: the member count
    /// followed by run lengths alternating zeros-first.
    pub fn to_rle(&self) -> String {
        let n = self.host.len();
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0usize;
        for idx in 0..n {
            let bit = self.contains(idx);
            if bit == current {
                len += 1;
            } else {
                runs.push(len);
                current = bit;
                len = 1;
            }
        }
        runs.push(len);
        let body: Vec<String> = runs.iter().map(|r| r.to_string()).collect();
        format!("{} {}", n, body.join(" "))
    }

    /// Parses a mask in the format produced by [`Self::to_rle`]. The
    /// declared length must match the host's cell count and the runs must
    /// sum to it.
    pub fn from_rle(host: Arc<PlusCylinder>, text: &str) -> Result<Self> {
        let mut fields = text.split_whitespace();
        let declared: usize = fields
            .next()
            .ok_or_else(|| Error::InvalidParameter("empty mask text".into()))?
            .parse()
            .map_err(|e| Error::InvalidParameter(format!("bad mask length: {e}")))?;
        if declared != host.len() {
            return Err(Error::InvalidParameter(format!(
                "mask declares {declared} cells but the cylinder has {}",
                host.len()
            )));
        }
        let mut set = Self::empty(host);
        let mut idx = 0usize;
        let mut bit = false;
        for field in fields {
            let run: usize = field
                .parse()
                .map_err(|e| Error::InvalidParameter(format!("bad run length: {e}")))?;
            if bit {
                for k in idx..idx + run {
                    if k >= declared {
                        return Err(Error::InvalidParameter(
                            "mask runs overflow the declared length".into(),
                        ));
                    }
                    set.insert(k);
                }
            }
            idx += run;
            bit = !bit;
        }
        if idx != declared {
            return Err(Error::InvalidParameter(format!(
                "mask runs cover {idx} cells, expected {declared}"
            )));
        }
        Ok(set)
    }
}

/// Result of dilating a point set, with the conventions the density test
/// used on each side recorded alongside the scales.
#[derive(Debug)]
pub struct Dilation {
    /// Union of all qualifying dilated sub-cylinders, clipped to the host.
    pub set: ParabolicPointSet,
    /// Geometric grid of scales the union ranged over, descending.
    pub scales: Vec<f64>,
    /// How the set's share of each sub-cylinder was measured.
    pub lhs_rule: &'static str,
    /// How the comparison volume of each sub-cylinder was measured.
    pub rhs_rule: &'static str,
}

fn scales(rho_max: f64) -> Vec<f64> {
    // Strictly inside (0, rho_max): ratio 2^(1/4), twenty scales.
    (1..=N_SCALES)
        .map(|k| rho_max * (-(k as f64) / 4.0).exp2())
        .collect()
}

/// Dilates `e` by the density threshold `gamma`: the union over centers
/// `X` in the host and scales `ρ < rho_max` of the sub-cylinders
/// `Q⁺_{3ρ}(X)` (clipped to the host) in which the lattice measure of
/// `e ∩ Q⁺_{3ρ}(X)` strictly exceeds `gamma` times the analytic measure
/// `|B_ρ| σ ρ^(2s)`.
pub fn dilate_set(e: &ParabolicPointSet, gamma: f64, rho_max: f64) -> Result<Dilation> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "density threshold must lie strictly between 0 and 1, got {gamma}"
        )));
    }
    if !(rho_max.is_finite() && rho_max > 0.0) {
        return Err(Error::InvalidRadius(format!(
            "dilation scale bound must be positive and finite, got {rho_max}"
        )));
    }
    let host = e.host();
    let n = host.len();
    let cell = host.cell_measure();
    let rho_grid = scales(rho_max);

    // Per center: members sorted by parabolic distance are nested balls,
    // so the union over scales is the ball of the largest qualifying one.
    let words = n.div_ceil(64);
    let bits = (0..n)
        .into_par_iter()
        .fold(
            || vec![0u64; words],
            |mut acc, center_idx| {
                let x = host.point(center_idx);
                let mut by_distance: Vec<(f64, usize)> = (0..n)
                    .map(|idx| (parabolic_distance(x, host.point(idx), host.sigma(), host.s()), idx))
                    .collect();
                by_distance
                    .sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("distances are not NaN"));
                let mut prefix_in_e = Vec::with_capacity(n + 1);
                prefix_in_e.push(0usize);
                for &(_, idx) in &by_distance {
                    prefix_in_e.push(prefix_in_e.last().unwrap() + usize::from(e.contains(idx)));
                }
                for &rho in &rho_grid {
                    let reach = 3.0 * rho;
                    let ball = by_distance.partition_point(|&(d, _)| d < reach);
                    let share = prefix_in_e[ball] as f64 * cell;
                    if share > gamma * host.analytic_measure(rho) {
                        for &(_, idx) in &by_distance[..ball] {
                            acc[idx / 64] |= 1 << (idx % 64);
                        }
                        break; // scales descend; smaller balls are contained
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; words],
            |mut a, b| {
                for (wa, wb) in a.iter_mut().zip(b) {
                    *wa |= wb;
                }
                a
            },
        );

    Ok(Dilation {
        set: ParabolicPointSet {
            host: host.clone(),
            bits,
        },
        scales: rho_grid,
        lhs_rule: "lattice: member count times cell measure",
        rhs_rule: "analytic: |B_rho| * sigma * rho^(2s)",
    })
}

/// Outcome of the covering dichotomy for one set and threshold.
#[derive(Clone, Debug, Serialize)]
pub struct DichotomyReport {
    /// Density threshold the dilation used.
    pub gamma: f64,
    /// Scale bound the dilation used.
    pub rho_max: f64,
    /// Lattice measure of the set.
    pub set_measure: f64,
    /// Lattice measure of its dilation.
    pub dilation_measure: f64,
    /// Measure the first branch demands: `2^-(n+2s) / gamma` times the
    /// off-shell part of the set.
    pub required_growth: f64,
    /// Measure of set cells on the boundary shell, exempt from the growth
    /// requirement (the lattice cannot dilate them).
    pub shell_tolerance: f64,
    /// Host cells off the boundary shell that the dilation missed.
    pub uncovered_off_shell: usize,
    /// First branch: the dilation grew by the required factor.
    pub measure_branch: bool,
    /// Second branch: the dilation is the whole host up to the shell.
    pub full_branch: bool,
}

/// Evaluates both branches of the covering dichotomy for `e`: either the
/// dilation's measure grows by `2^-(n+2s) / gamma`, or the dilation is the
/// whole host cylinder. Each branch is granted a one-cell tolerance at the
/// host boundary, the resolution limit of the lattice. Returns an error
/// when neither branch holds.
pub fn covering_dichotomy(
    e: &ParabolicPointSet,
    gamma: f64,
    rho_max: f64,
) -> Result<DichotomyReport> {
    let dilation = dilate_set(e, gamma, rho_max)?;
    let host = e.host();
    let cell = host.cell_measure();

    let growth_factor = (-(host.dim() as f64 + 2.0 * host.s())).exp2() / gamma;
    let set_measure = e.measure();
    let dilation_measure = dilation.set.measure();
    let shell_cells_in_e = (0..host.len())
        .filter(|&idx| host.is_shell(idx) && e.contains(idx))
        .count();
    let shell_tolerance = shell_cells_in_e as f64 * cell;
    // The growth requirement applies to the off-shell part of the set:
    // shell cells sit at the lattice's resolution limit and may be
    // impossible to dilate (nothing is strictly later than the top layer).
    let required_growth = growth_factor * (set_measure - shell_tolerance);
    let uncovered_off_shell = (0..host.len())
        .filter(|&idx| !host.is_shell(idx) && !dilation.set.contains(idx))
        .count();

    let slack = 1e-12 * required_growth.max(cell);
    let measure_branch = dilation_measure >= required_growth - slack;
    let full_branch = uncovered_off_shell == 0;

    let report = DichotomyReport {
        gamma,
        rho_max,
        set_measure,
        dilation_measure,
        required_growth,
        shell_tolerance,
        uncovered_off_shell,
        measure_branch,
        full_branch,
    };
    if !(measure_branch || full_branch) {
        return Err(Error::DichotomyViolation(format!(
            "dilation measure {dilation_measure} < required {required_growth} \
             (set measure {set_measure}, shell exemption {shell_tolerance}) \
             and {uncovered_off_shell} interior cells remain uncovered"
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn host_1d() -> Arc<PlusCylinder> {
        PlusCylinder::build(1, [0.0, 0.0], 0.0, 1.0, 0.3, 0.5, 8, 8).unwrap()
    }

    fn random_mask(host: &Arc<PlusCylinder>, density: f64, rng: &mut ChaCha20Rng) -> ParabolicPointSet {
        let mut set = ParabolicPointSet::empty(host.clone());
        for idx in 0..host.len() {
            if rng.gen::<f64>() < density {
                set.insert(idx);
            }
        }
        set
    }

    /// Naive reference dilation: a plain double loop over centers and
    /// scales that unions every qualifying sub-cylinder separately.
    fn dilate_oracle(e: &ParabolicPointSet, gamma: f64, rho_max: f64) -> ParabolicPointSet {
        let host = e.host();
        let cell = host.cell_measure();
        let mut out = ParabolicPointSet::empty(host.clone());
        for center_idx in 0..host.len() {
            let x = host.point(center_idx);
            for k in 1..=N_SCALES {
                let rho = rho_max * (-(k as f64) / 4.0).exp2();
                let members: Vec<usize> = (0..host.len())
                    .filter(|&idx| {
                        parabolic_distance(x, host.point(idx), host.sigma(), host.s())
                            < 3.0 * rho
                    })
                    .collect();
                let share =
                    members.iter().filter(|&&idx| e.contains(idx)).count() as f64 * cell;
                if share > gamma * host.analytic_measure(rho) {
                    for &idx in &members {
                        out.insert(idx);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn distance_is_infinite_unless_strictly_in_the_past() {
        let x = Point { x: [0.0, 0.0], t: 1.0 };
        let later = Point { x: [0.0, 0.0], t: 2.0 };
        let same = Point { x: [0.5, 0.0], t: 1.0 };
        assert_eq!(parabolic_distance(x, later, 0.3, 0.5), f64::INFINITY);
        assert_eq!(parabolic_distance(x, same, 0.3, 0.5), f64::INFINITY);
    }

    #[test]
    fn distance_matches_direct_substitution() {
        // Same point in space, time gap exactly sigma: distance 1.
        let sigma = 0.3;
        let x = Point { x: [0.2, 0.0], t: 0.0 };
        let y = Point { x: [0.2, 0.0], t: -sigma };
        assert!((parabolic_distance(x, y, sigma, 0.5) - 1.0).abs() < 1e-14);

        // Spatial gap 3 dominates a unit time term.
        let y = Point { x: [3.2, 0.0], t: -sigma };
        assert!((parabolic_distance(x, y, sigma, 0.5) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn cylinder_members_are_exactly_the_metric_ball() {
        // 2d: member cells sit strictly inside the ball; excluded lattice
        // positions are at distance >= r from the anchor.
        let host = PlusCylinder::build(2, [0.5, -0.5], 0.0, 1.0, 0.3, 0.5, 8, 8).unwrap();
        let anchor = host.anchor();
        for idx in 0..host.len() {
            let p = host.point(idx);
            let d = parabolic_distance(anchor, p, host.sigma(), host.s());
            assert!(d < host.radius(), "member at distance {d}");
        }
        // Rebuild the full bounding lattice and check the excluded corners.
        let h = 2.0 * host.radius() / 8.0;
        let mut excluded = 0;
        for i in 0..8 {
            for j in 0..8 {
                let p = [
                    0.5 - host.radius() + (i as f64 + 0.5) * h,
                    -0.5 - host.radius() + (j as f64 + 0.5) * h,
                ];
                if euclid(&p, &[0.5, -0.5], 2) >= host.radius() {
                    excluded += 1;
                }
            }
        }
        assert_eq!(host.spatial_len() + excluded, 64);
        assert!(excluded > 0, "an 8x8 square must overhang the disk");
    }

    #[test]
    fn empty_set_dilates_to_empty() {
        let host = host_1d();
        let empty = ParabolicPointSet::empty(host.clone());
        let dilation = dilate_set(&empty, 0.1, 2.0 * host.radius()).unwrap();
        assert_eq!(dilation.set.count(), 0);
        let report = covering_dichotomy(&empty, 0.1, 2.0 * host.radius()).unwrap();
        assert!(report.measure_branch);
    }

    #[test]
    fn full_set_dilates_to_everything_below_the_top_layer() {
        let host = host_1d();
        let full = ParabolicPointSet::full(host.clone());
        let dilation = dilate_set(&full, 0.3, 2.0 * host.radius()).unwrap();
        // Every cell except the latest time layer is strictly below some
        // member center, and the one directly above it already qualifies;
        // the latest layer has no strictly later center to cover it.
        let top_start = host.len() - host.spatial_len();
        for idx in 0..host.len() {
            assert_eq!(
                dilation.set.contains(idx),
                idx < top_start,
                "cell {idx} (top layer starts at {top_start})"
            );
        }
        let report = covering_dichotomy(&full, 0.3, 2.0 * host.radius()).unwrap();
        assert!(report.full_branch);
    }

    #[test]
    fn dilation_matches_the_naive_oracle() {
        let host = host_1d();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        for trial in 0..10 {
            let mask = random_mask(&host, 0.2, &mut rng);
            for gamma in [0.05, 0.1, 0.3] {
                let fast = dilate_set(&mask, gamma, 2.0 * host.radius()).unwrap();
                let slow = dilate_oracle(&mask, gamma, 2.0 * host.radius());
                assert!(
                    fast.set.is_subset_of(&slow) && slow.is_subset_of(&fast.set),
                    "trial {trial}, gamma {gamma}"
                );
            }
        }
    }

    #[test]
    fn dilation_is_monotone_in_the_set() {
        let host = host_1d();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let small = random_mask(&host, 0.15, &mut rng);
        let mut large = small.clone();
        for idx in 0..host.len() {
            if rng.gen::<f64>() < 0.2 {
                large.insert(idx);
            }
        }
        let d_small = dilate_set(&small, 0.1, 2.0).unwrap();
        let d_large = dilate_set(&large, 0.1, 2.0).unwrap();
        assert!(d_small.set.is_subset_of(&d_large.set));
    }

    #[test]
    fn dilation_is_antitone_in_the_threshold() {
        let host = host_1d();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mask = random_mask(&host, 0.25, &mut rng);
        let loose = dilate_set(&mask, 0.05, 2.0).unwrap();
        let tight = dilate_set(&mask, 0.3, 2.0).unwrap();
        assert!(tight.set.is_subset_of(&loose.set));
    }

    #[test]
    fn set_off_the_shell_is_contained_in_its_dilation() {
        // With the default scale grid a single cell passes its own density
        // test through the center directly above it, so only shell cells
        // can be missed.
        let host = host_1d();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mask = random_mask(&host, 0.3, &mut rng);
            let dilation = dilate_set(&mask, 0.3, 2.0 * host.radius()).unwrap();
            for idx in 0..host.len() {
                if mask.contains(idx) && !host.is_shell(idx) {
                    assert!(dilation.set.contains(idx), "cell {idx} dropped");
                }
            }
        }
    }

    #[test]
    fn dichotomy_holds_for_two_hundred_random_masks() {
        let host = host_1d();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        for trial in 0..200 {
            let density = rng.gen::<f64>();
            let mask = random_mask(&host, density, &mut rng);
            for gamma in [0.05, 0.1, 0.3] {
                let report = covering_dichotomy(&mask, gamma, 2.0 * host.radius());
                assert!(
                    report.is_ok(),
                    "trial {trial} density {density:.3} gamma {gamma}: {:?}",
                    report.err()
                );
            }
        }
    }

    #[test]
    fn scale_grid_is_geometric_and_inside_the_bound() {
        let host = host_1d();
        let mask = ParabolicPointSet::empty(host.clone());
        let dilation = dilate_set(&mask, 0.5, 1.7).unwrap();
        assert_eq!(dilation.scales.len(), 20);
        for pair in dilation.scales.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((ratio - 2f64.powf(0.25)).abs() < 1e-12);
        }
        for &rho in &dilation.scales {
            assert!(rho > 0.0 && rho < 1.7);
        }
        assert!(!dilation.lhs_rule.is_empty() && !dilation.rhs_rule.is_empty());
    }

    #[test]
    fn rle_round_trips_and_rejects_malformed_text() {
        let host = host_1d();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mask = random_mask(&host, 0.4, &mut rng);
        let text = mask.to_rle();
        let back = ParabolicPointSet::from_rle(host.clone(), &text).unwrap();
        assert!(mask.is_subset_of(&back) && back.is_subset_of(&mask));

        for bad in [
            "",
            "abc",
            "64 10",          // runs cover too little
            "64 70",          // runs overflow
            "63 63",          // wrong declared length
            "64 32 x",        // junk run
        ] {
            assert!(
                ParabolicPointSet::from_rle(host.clone(), bad).is_err(),
                "{bad:?} should fail"
            );
        }
    }

    #[test]
    fn dichotomy_holds_on_a_two_dimensional_host() {
        let host = PlusCylinder::build(2, [0.0, 0.0], 0.0, 1.0, 0.3, 0.5, 8, 8).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for trial in 0..10 {
            let density = rng.gen::<f64>();
            let mask = random_mask(&host, density, &mut rng);
            for gamma in [0.05, 0.1, 0.3] {
                let report = covering_dichotomy(&mask, gamma, 2.0 * host.radius());
                assert!(
                    report.is_ok(),
                    "trial {trial} density {density:.3} gamma {gamma}: {:?}",
                    report.err()
                );
            }
        }
    }

    #[test]
    fn invalid_thresholds_and_scales_are_rejected() {
        let host = host_1d();
        let mask = ParabolicPointSet::empty(host);
        for gamma in [0.0, 1.0, -0.2, 1.3] {
            assert!(matches!(
                dilate_set(&mask, gamma, 2.0),
                Err(Error::InvalidParameter(_))
            ));
        }
        for rho in [0.0, -1.0, f64::INFINITY] {
            assert!(matches!(
                dilate_set(&mask, 0.1, rho),
                Err(Error::InvalidRadius(_))
            ));
        }
    }

    #[test]
    fn degenerate_cylinders_are_rejected() {
        assert!(PlusCylinder::build(3, [0.0; 2], 0.0, 1.0, 0.3, 0.5, 8, 8).is_err());
        assert!(PlusCylinder::build(1, [0.0; 2], 0.0, 0.0, 0.3, 0.5, 8, 8).is_err());
        assert!(PlusCylinder::build(1, [0.0; 2], 0.0, 1.0, 0.5, 0.5, 8, 8).is_err());
        assert!(PlusCylinder::build(1, [0.0; 2], 0.0, 1.0, 0.3, 1.5, 8, 8).is_err());
        assert!(PlusCylinder::build(1, [0.0; 2], 0.0, 1.0, 0.3, 0.5, 0, 8).is_err());
    }
}
