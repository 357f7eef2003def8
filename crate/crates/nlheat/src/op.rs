//! Assembly and application of the discrete nonlocal operator.
//!
//! The operator acts on lattice fields as a quadrature of the
//! second-difference form
//!
//! ```text
//! (L u)(x) = PV integral of (2 u(x) - u(x+y) - u(x-y)) K(y) dy,
//! ```
//!
//! organized in three radial zones around each interior node:
//!
//! * `|y| < h/2` — the unresolved sub-cell ball. Its exact second moment
//!   `k2 = integral of |y|^2 K(y) dy` over the ball multiplies the discrete
//!   second difference `(2u(x) - u(x+h e) - u(x-h e))/h^2` per axis, so the
//!   near-singular mass acts like the local Laplacian it converges to.
//! * `h/2 <= |y| <= R_cut` — resolved offsets. Each lattice offset `o` owns
//!   the kernel mass of its cell (`w = 2 * integral over cell(o) of K`,
//!   closed form for power kernels, Gauss quadrature otherwise), not just
//!   the midpoint value; this keeps the quadrature second-order accurate
//!   and the total kernel mass exact.
//! * `|y| > R_cut` — the far field. Its total mass `T` closes the operator
//!   with `2 T (u(x) - g_far)`, where `g_far` is the field's far rule.
//!
//! Matrices are cell-mass scaled: `A = h^n W_interior`,
//! `B = h^n W_collar` (with one synthetic far-field column), so
//! `v' (A u + B g)` is the discrete duality pairing and
//! `(A u + B g)/h^n` is the pointwise operator value. Row sums of `[A | B]`
//! vanish identically, so constants are annihilated to roundoff.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::SpaceTimeField;
use crate::grid::{Grid, Node};
use crate::kernel::{power_kernel, Kernel};
use crate::quad;

/// One resolved half-space offset and its quadrature weight.
#[derive(Clone, Debug)]
pub struct OffsetWeight {
    pub coord: [i64; 2],
    pub weight: f64,
}

/// Quadrature bookkeeping recorded at assembly time.
#[derive(Clone, Debug, Serialize)]
pub struct QuadratureRecord {
    /// Radius below which the kernel is represented by its second moment.
    pub split_radius: f64,
    /// Per-axis sub-cell second moment `k2`.
    pub subcell_moment: f64,
    /// The a-priori consistency moment `integral over |y| < h of |y|^2 K`.
    pub error_moment: f64,
    /// Outer radius of the resolved offset zone.
    pub far_cutoff: f64,
    /// Total kernel mass beyond the cutoff.
    pub far_mass: f64,
    /// Number of resolved half-space offsets.
    pub n_offsets: usize,
}

/// The assembled discrete operator on a fixed grid.
pub struct OperatorMatrix {
    grid: Arc<Grid>,
    kernel: Kernel,
    offsets: Vec<OffsetWeight>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    far_mass: f64,
    quad: QuadratureRecord,
}

/// Closed-form or Gauss integral of `K` over the 1D cell `[a, b]`,
/// `0 < a < b`.
fn kernel_mass_1d(kernel: &Kernel, a: f64, b: f64) -> f64 {
    let s = kernel.s();
    match kernel.power_coefficient() {
        Some(c) => c * (a.powf(-2.0 * s) - b.powf(-2.0 * s)) / (2.0 * s),
        None => quad::gauss_interval(&quad::GAUSS8, &|y| kernel.eval(y), a, b),
    }
}

/// Per-axis sub-cell second moment: `integral over |y| < h/2 of y_a^2 K dy`.
fn subcell_moment(kernel: &Kernel, h: f64) -> f64 {
    let s = kernel.s();
    let half = 0.5 * h;
    match (kernel.dim(), kernel.power_coefficient()) {
        (1, Some(c)) => 2.0 * c * half.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s),
        (1, None) => {
            // Substitute y = (h/2) tau^(1/(2-2s)): the integrand becomes
            // bounded (constant for an exact power law).
            let p = 1.0 / (2.0 - 2.0 * s);
            2.0 * quad::gauss_interval(
                &quad::GAUSS8,
                &|tau: f64| {
                    let y = half * tau.powf(p);
                    y * y * kernel.eval(y) * half * p * tau.powf(p - 1.0)
                },
                0.0,
                1.0,
            )
        }
        (_, Some(c)) => {
            std::f64::consts::PI * c * half.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s)
        }
        (_, None) => {
            let p = 1.0 / (2.0 - 2.0 * s);
            std::f64::consts::PI
                * quad::gauss_interval(
                    &quad::GAUSS8,
                    &|tau: f64| {
                        let r = half * tau.powf(p);
                        r * r * r * kernel.eval(r) * half * p * tau.powf(p - 1.0)
                    },
                    0.0,
                    1.0,
                )
        }
    }
}

/// Total kernel mass beyond radius `r_cut` (both sides / full ring).
fn far_mass(kernel: &Kernel, r_cut: f64) -> f64 {
    let s = kernel.s();
    let dim = kernel.dim();
    match kernel.power_coefficient() {
        Some(c) if dim == 1 => c * r_cut.powf(-2.0 * s) / s,
        Some(c) => std::f64::consts::PI * c * r_cut.powf(-2.0 * s) / s,
        None => {
            // Substitute y = r_cut tau^(-1/(2s)): bounded integrand again.
            let line = quad::gauss_interval(
                &quad::GAUSS8,
                &|tau: f64| {
                    let y = r_cut * tau.powf(-1.0 / (2.0 * s));
                    let jac = r_cut / (2.0 * s) * tau.powf(-1.0 / (2.0 * s) - 1.0);
                    let radial = if dim == 1 { 1.0 } else { y };
                    radial * kernel.eval(y) * jac
                },
                0.0,
                1.0,
            );
            if dim == 1 {
                2.0 * line
            } else {
                2.0 * std::f64::consts::PI * line
            }
        }
    }
}

/// Consistency moment `integral over |y| < h of |y|^2 K dy` (recorded in
/// the quadrature report; the local truncation error of the scheme on a
/// C^2 function is bounded by this moment times the Hessian bound).
fn error_moment(kernel: &Kernel, h: f64) -> f64 {
    // |y|^2-weighted mass of the full ball of radius h: per-axis moments
    // add up, and the sub-cell helper already integrates one axis share.
    match kernel.dim() {
        1 => subcell_moment(kernel, 2.0 * h),
        _ => 2.0 * subcell_moment(kernel, 2.0 * h),
    }
}

/// Assemble the discrete operator for the kernel on the grid.
pub fn assemble(grid: &Arc<Grid>, kernel: &Kernel) -> Result<OperatorMatrix> {
    if kernel.dim() != grid.dim() {
        return Err(Error::Assembly(format!(
            "kernel dimension {} does not match grid dimension {}",
            kernel.dim(),
            grid.dim()
        )));
    }
    let h = grid.h();
    let hn = grid.cell_measure();
    let dim = grid.dim();
    let r_inf = grid.r_inf();

    // Resolved offsets with cell-integrated weights.
    let mut offsets: Vec<OffsetWeight> = Vec::new();
    let far_cutoff;
    match dim {
        1 => {
            let reach = (r_inf / h + 1e-12).floor() as i64;
            for j in 1..=reach {
                let a = (j as f64 - 0.5) * h;
                let b = (j as f64 + 0.5) * h;
                offsets.push(OffsetWeight {
                    coord: [j, 0],
                    weight: 2.0 * kernel_mass_1d(kernel, a, b),
                });
            }
            far_cutoff = (reach as f64 + 0.5) * h;
        }
        _ => {
            let reach = (r_inf / h + 1e-12).floor() as i64;
            // Radial symmetry: one cell integral per sorted |coordinate|
            // pair serves all its sign/axis images.
            let mut cache: HashMap<(i64, i64), f64> = HashMap::new();
            for i in -reach..=reach {
                for j in -reach..=reach {
                    if (i, j) == (0, 0) || !(i > 0 || (i == 0 && j > 0)) {
                        continue;
                    }
                    let rho = ((i * i + j * j) as f64).sqrt() * h;
                    if rho > r_inf + 1e-12 {
                        continue;
                    }
                    let key = {
                        let (p, q) = (i.abs(), j.abs());
                        (p.min(q), p.max(q))
                    };
                    let w = *cache.entry(key).or_insert_with(|| {
                        let (cx, cy) = (key.0 as f64 * h, key.1 as f64 * h);
                        let rule = if key.1 <= 2 { &quad::GAUSS8[..] } else { &quad::GAUSS5[..] };
                        2.0 * quad::gauss_rect(
                            rule,
                            &|x, y| kernel.eval((x * x + y * y).sqrt()),
                            cx - 0.5 * h,
                            cx + 0.5 * h,
                            cy - 0.5 * h,
                            cy + 0.5 * h,
                        )
                    });
                    offsets.push(OffsetWeight {
                        coord: [i, j],
                        weight: w,
                    });
                }
            }
            far_cutoff = r_inf;
        }
    }
    if offsets.is_empty() {
        return Err(Error::Assembly(
            "no resolved offsets: collar radius too small for the mesh".into(),
        ));
    }

    // Fold the sub-cell second moment into the nearest axis neighbors.
    let k2 = subcell_moment(kernel, h);
    let mut folded = 0usize;
    for ow in offsets.iter_mut() {
        let axis_unit = (ow.coord == [1, 0]) || (dim == 2 && ow.coord == [0, 1]);
        if axis_unit {
            ow.weight += k2 / (h * h);
            folded += 1;
        }
    }
    if folded != dim {
        return Err(Error::Assembly(format!(
            "expected {dim} axis-unit offsets, found {folded}"
        )));
    }

    let t_far = far_mass(kernel, far_cutoff);
    let n_int = grid.n_interior();
    let n_col = grid.n_collar();
    let mut a = DMatrix::zeros(n_int, n_int);
    let mut b = DMatrix::zeros(n_int, n_col + 1);
    for i in 0..n_int {
        let ci = grid.interior_coord(i);
        let mut diag = 0.0;
        for ow in &offsets {
            let w = ow.weight * hn;
            for sign in [1i64, -1] {
                let coord = [ci[0] + sign * ow.coord[0], ci[1] + sign * ow.coord[1]];
                diag += w;
                match grid.node_at(coord) {
                    Some(Node::Interior(p)) => a[(i, p)] -= w,
                    Some(Node::Collar(q)) => b[(i, q)] -= w,
                    None => {
                        return Err(Error::Assembly(format!(
                            "offset ({}, {}) from interior node {i} exits the collar",
                            coord[0], coord[1]
                        )))
                    }
                }
            }
        }
        // Far-field closure: 2 T (u - g_far).
        diag += 2.0 * t_far * hn;
        b[(i, n_col)] -= 2.0 * t_far * hn;
        a[(i, i)] += diag;
    }

    let quad_record = QuadratureRecord {
        split_radius: 0.5 * h,
        subcell_moment: k2,
        error_moment: error_moment(kernel, h),
        far_cutoff,
        far_mass: t_far,
        n_offsets: offsets.len(),
    };
    Ok(OperatorMatrix {
        grid: grid.clone(),
        kernel: kernel.clone(),
        offsets,
        a,
        b,
        far_mass: t_far,
        quad: quad_record,
    })
}

impl OperatorMatrix {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Cell-mass scaled interior block `A = h^n W`.
    pub fn matrix_a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Cell-mass scaled collar block (last column couples the far field).
    pub fn matrix_b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn far_mass(&self) -> f64 {
        self.far_mass
    }

    pub fn quadrature(&self) -> &QuadratureRecord {
        &self.quad
    }

    fn check_field(&self, field: &SpaceTimeField) -> Result<()> {
        let g = field.grid();
        let compatible = Arc::ptr_eq(g, &self.grid)
            || (g.dim() == self.grid.dim()
                && g.h() == self.grid.h()
                && g.r_inf() == self.grid.r_inf()
                && g.n_interior() == self.grid.n_interior()
                && g.n_collar() == self.grid.n_collar());
        if !compatible {
            return Err(Error::IncompatibleFields(
                "field grid does not match the operator's grid".into(),
            ));
        }
        Ok(())
    }

    /// Extended exterior vector `[collar values; far value]` at a step.
    fn exterior_at(&self, field: &SpaceTimeField, step: usize) -> Result<DVector<f64>> {
        let collar = field.collar_at(step).ok_or_else(|| {
            Error::IncompleteField(
                "operator offsets exit into the collar, but the field stores no collar values"
                    .into(),
            )
        })?;
        let n_col = self.grid.n_collar();
        let mut ext = DVector::zeros(n_col + 1);
        ext.rows_mut(0, n_col).copy_from(&collar);
        ext[n_col] = field.far().value(step);
        Ok(ext)
    }

    /// Pointwise operator values on interior nodes at one time step.
    pub fn apply(&self, field: &SpaceTimeField, step: usize) -> Result<DVector<f64>> {
        self.check_field(field)?;
        let u = field.interior_at(step);
        let ext = self.exterior_at(field, step)?;
        let mut out = &self.a * u + &self.b * ext;
        out /= self.grid.cell_measure();
        Ok(out)
    }

    /// The energy pairing of two fields at one step: the double sum of
    /// `(u(x) - u(y)) (v(x) - v(y)) K(x - y)` over all lattice pairs with
    /// at least one interior endpoint (pairs of two exterior points do not
    /// contribute), plus the far-field closure. Symmetric in `(u, v)`
    /// by construction; equal to `v' (A u + B g_u)` whenever `v` vanishes
    /// outside the domain.
    pub fn bilinear_form(
        &self,
        u: &SpaceTimeField,
        v: &SpaceTimeField,
        step: usize,
    ) -> Result<f64> {
        self.check_field(u)?;
        self.check_field(v)?;
        let hn = self.grid.cell_measure();
        let ui = u.interior_at(step);
        let vi = v.interior_at(step);
        let uc = u.collar_at(step).ok_or_else(|| {
            Error::IncompleteField("energy pairing needs collar values for the first field".into())
        })?;
        let vc = v.collar_at(step).ok_or_else(|| {
            Error::IncompleteField("energy pairing needs collar values for the second field".into())
        })?;
        let u_far = u.far().value(step);
        let v_far = v.far().value(step);

        let mut acc = 0.0;
        for i in 0..self.grid.n_interior() {
            let ci = self.grid.interior_coord(i);
            for ow in &self.offsets {
                let w = ow.weight * hn;
                for sign in [1i64, -1] {
                    let coord = [ci[0] + sign * ow.coord[0], ci[1] + sign * ow.coord[1]];
                    match self.grid.node_at(coord) {
                        // Interior pairs are visited once, from the
                        // half-space side.
                        Some(Node::Interior(p)) => {
                            if sign == 1 {
                                acc += w * (ui[i] - ui[p]) * (vi[i] - vi[p]);
                            }
                        }
                        // Interior-collar pairs are only ever enumerated
                        // from the interior side, so both signs count.
                        Some(Node::Collar(q)) => {
                            acc += w * (ui[i] - uc[q]) * (vi[i] - vc[q]);
                        }
                        None => {
                            return Err(Error::Assembly(format!(
                                "offset ({}, {}) from interior node {i} exits the collar",
                                coord[0], coord[1]
                            )))
                        }
                    }
                }
            }
            acc += 2.0 * self.far_mass * hn * (ui[i] - u_far) * (vi[i] - v_far);
        }
        Ok(acc)
    }

    /// Resolved half-space offsets with their cell-integrated weights.
    /// Each weight is `2 * (cell kernel mass)`, so the single-integral mass
    /// of a full-space lattice cell is `weight / 2`.
    pub fn offsets(&self) -> &[OffsetWeight] {
        &self.offsets
    }

    /// Visits every unordered lattice pair with at least one interior
    /// endpoint exactly once, then one far-closure visit per interior node.
    /// The weight passed alongside each pair is the coefficient of
    /// `(u(x) - u(y)) (v(x) - v(y))` in the discrete energy pairing
    /// (`2 * cell mass * h^n` for lattice pairs, `2 * far_mass * h^n` for
    /// the closure), so summing `weight * (u(x) - u(y)) * (v(x) - v(y))`
    /// over all visits reproduces `bilinear_form`.
    pub fn for_each_energy_pair(
        &self,
        mut visit: impl FnMut(usize, Option<Node>, f64),
    ) -> Result<()> {
        let hn = self.grid.cell_measure();
        for i in 0..self.grid.n_interior() {
            let ci = self.grid.interior_coord(i);
            for ow in &self.offsets {
                let w = ow.weight * hn;
                for sign in [1i64, -1] {
                    let coord = [ci[0] + sign * ow.coord[0], ci[1] + sign * ow.coord[1]];
                    match self.grid.node_at(coord) {
                        Some(Node::Interior(p)) => {
                            if sign == 1 {
                                visit(i, Some(Node::Interior(p)), w);
                            }
                        }
                        Some(Node::Collar(q)) => {
                            visit(i, Some(Node::Collar(q)), w);
                        }
                        None => {
                            return Err(Error::Assembly(format!(
                                "offset ({}, {}) from interior node {i} exits the collar",
                                coord[0], coord[1]
                            )))
                        }
                    }
                }
            }
            visit(i, None, 2.0 * self.far_mass * hn);
        }
        Ok(())
    }
}

/// Comparison energies built from the raw (coefficient-one) power kernel
/// `|y|^(-n-2s)`: the zero-exterior energy norm, its dual, and region
/// seminorms. These calibrate the assembled operator from below and above
/// through the ellipticity constants.
pub struct ComparisonEnergy {
    op: OperatorMatrix,
    chol: Cholesky<f64, Dyn>,
}

/// Assemble the comparison energy for a grid at order `s`.
pub fn assemble_comparison(grid: &Arc<Grid>, s: f64) -> Result<ComparisonEnergy> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "comparison energy needs s in (0, 1), got {s}"
        )));
    }
    let kernel = power_kernel(grid.dim(), s, 1.0);
    let op = assemble(grid, &kernel)?;
    let chol = Cholesky::new(op.a.clone()).ok_or_else(|| {
        Error::SolverFailure("comparison energy matrix is not positive definite".into())
    })?;
    Ok(ComparisonEnergy { op, chol })
}

impl ComparisonEnergy {
    pub fn operator(&self) -> &OperatorMatrix {
        &self.op
    }

    /// Gagliardo energy matrix (cell-mass scaled).
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.op.a
    }

    /// The zero-exterior energy norm of a field at one step: the raw
    /// difference-quotient energy over all pairs with an interior endpoint.
    /// The field must vanish outside the domain.
    pub fn x0_norm(&self, field: &SpaceTimeField, step: usize) -> Result<f64> {
        self.op.check_field(field)?;
        let collar = field.collar_at(step).ok_or_else(|| {
            Error::IncompleteField("zero-exterior norm needs collar values (all zero)".into())
        })?;
        if collar.iter().any(|&g| g != 0.0) || field.far().value(step) != 0.0 {
            return Err(Error::DomainViolation(
                "zero-exterior norm applied to a field with nonzero exterior values".into(),
            ));
        }
        let u = field.interior_at(step);
        let quad_form = (&self.op.a * &u).dot(&u);
        Ok(quad_form.max(0.0).sqrt())
    }

    /// Dual norm of an interior density `phi` against the zero-exterior
    /// energy norm: `sup { <phi, v>_L2 : x0_norm(v) <= 1 }`, which is
    /// `h^n sqrt(phi' A^{-1} phi)` by the quadratic-form duality.
    pub fn dual_norm(&self, phi: &DVector<f64>) -> Result<f64> {
        if phi.len() != self.op.grid.n_interior() {
            return Err(Error::IncompatibleFields(format!(
                "density has {} entries, grid has {} interior nodes",
                phi.len(),
                self.op.grid.n_interior()
            )));
        }
        let solved = self.chol.solve(phi);
        let quad_form = solved.dot(phi);
        Ok(self.op.grid.cell_measure() * quad_form.max(0.0).sqrt())
    }

    /// Node-anchored fractional seminorm of a field over a node region at
    /// one step: the double sum of `(v(x) - v(y))^2 |x - y|^(-n-2s)` over
    /// ordered pairs of distinct region nodes, times `h^(2n)`, square-rooted.
    pub fn hs_seminorm(
        &self,
        field: &SpaceTimeField,
        step: usize,
        region: &[Node],
    ) -> Result<f64> {
        self.op.check_field(field)?;
        let grid = &self.op.grid;
        let dim = grid.dim();
        let pos = |node: Node| -> [f64; 2] {
            match node {
                Node::Interior(i) => grid.interior_positions()[i],
                Node::Collar(j) => grid.collar_positions()[j],
            }
        };
        let values: Vec<f64> = region
            .iter()
            .map(|&n| field.value(n, step))
            .collect::<Result<_>>()?;
        let h2n = grid.cell_measure() * grid.cell_measure();
        let mut acc = 0.0;
        for p in 0..region.len() {
            let xp = pos(region[p]);
            for q in (p + 1)..region.len() {
                let xq = pos(region[q]);
                let dist = crate::grid::euclid(&xp, &xq, dim);
                let diff = values[p] - values[q];
                acc += 2.0 * diff * diff * self.op.kernel.eval(dist) * h2n;
            }
        }
        Ok(acc.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FarRule;
    use crate::grid::{build_grid, Domain};
    use crate::kernel::{make_custom_kernel, make_fractional_kernel, normalization_constant};
    use approx::assert_relative_eq;

    fn unit_grid(h: f64, r_inf: f64) -> Arc<Grid> {
        Arc::new(build_grid(Domain::interval(0.0, 1.0).unwrap(), h, r_inf).unwrap())
    }

    fn cosine_field(grid: &Arc<Grid>, freq: f64) -> SpaceTimeField {
        SpaceTimeField::sample(
            grid.clone(),
            vec![0.0],
            |x, _| (freq * x[0]).cos(),
            FarRule::Zero,
        )
        .unwrap()
    }

    /// Relative sup-distance between the discrete operator applied to a
    /// global cosine and the exact symbol value.
    fn symbol_error(s: f64, h: f64, r_inf: f64, freq: f64) -> f64 {
        let grid = unit_grid(h, r_inf);
        let kernel = make_fractional_kernel(1, s).unwrap();
        let op = assemble(&grid, &kernel).unwrap();
        let field = cosine_field(&grid, freq);
        let applied = op.apply(&field, 0).unwrap();
        let symbol = freq.powf(2.0 * s);
        let mut worst = 0.0f64;
        for i in 0..grid.n_interior() {
            let x = grid.interior_positions()[i][0];
            let exact = symbol * (freq * x).cos();
            worst = worst.max((applied[i] - exact).abs());
        }
        worst / symbol
    }

    #[test]
    fn fourier_symbol_across_orders() {
        let freq = 2.0 * std::f64::consts::PI;
        for s in [0.25, 0.5, 0.75] {
            let err = symbol_error(s, 1.0 / 256.0, 4.0, freq);
            assert!(err < 0.05, "s={s}: relative symbol error {err} >= 5%");
        }
        // Midrange order is much tighter than the coarse bound.
        let err = symbol_error(0.5, 1.0 / 256.0, 4.0, freq);
        assert!(err < 0.02, "s=0.5: relative symbol error {err} >= 2%");
    }

    #[test]
    fn fourier_symbol_2d() {
        let dom = Domain::rectangle([0.0, 0.0], [1.0, 1.0]).unwrap();
        let grid = Arc::new(build_grid(dom, 1.0 / 16.0, 3.0).unwrap());
        let kernel = make_fractional_kernel(2, 0.5).unwrap();
        let op = assemble(&grid, &kernel).unwrap();
        let freq = std::f64::consts::PI;
        let field = SpaceTimeField::sample(
            grid.clone(),
            vec![0.0],
            |x, _| (freq * x[0]).cos(),
            FarRule::Zero,
        )
        .unwrap();
        let applied = op.apply(&field, 0).unwrap();
        let symbol = freq; // |xi|^(2s) with s = 1/2
        let mut worst = 0.0f64;
        for i in 0..grid.n_interior() {
            let x = grid.interior_positions()[i][0];
            worst = worst.max((applied[i] - symbol * (freq * x).cos()).abs());
        }
        assert!(worst / symbol < 0.05, "2D symbol error {}", worst / symbol);
    }

    #[test]
    fn local_limit_matches_second_derivative() {
        // At s near 1 the operator approaches the (negative) Laplacian.
        let grid = unit_grid(1.0 / 256.0, 2.0);
        let kernel = make_fractional_kernel(1, 0.999).unwrap();
        let op = assemble(&grid, &kernel).unwrap();
        let field = SpaceTimeField::sample(
            grid.clone(),
            vec![0.0],
            |x, _| {
                if x[0] > 0.0 && x[0] < 1.0 {
                    (std::f64::consts::PI * x[0]).sin().powi(2)
                } else {
                    0.0
                }
            },
            FarRule::Zero,
        )
        .unwrap();
        let applied = op.apply(&field, 0).unwrap();
        let pi = std::f64::consts::PI;
        let mut worst = 0.0f64;
        for i in 0..grid.n_interior() {
            let x = grid.interior_positions()[i][0];
            if x < 0.1 || x > 0.9 {
                continue;
            }
            let exact = -2.0 * pi * pi * (2.0 * pi * x).cos();
            worst = worst.max((applied[i] - exact).abs() / (2.0 * pi * pi));
        }
        assert!(worst < 0.1, "local limit relative error {worst}");
    }

    #[test]
    fn constants_are_annihilated() {
        let grid = unit_grid(1.0 / 64.0, 2.0);
        let kernel = make_fractional_kernel(1, 0.5).unwrap();
        let op = assemble(&grid, &kernel).unwrap();
        let ones = SpaceTimeField::sample(
            grid.clone(),
            vec![0.0],
            |_, _| 1.0,
            FarRule::PerStep(vec![1.0]),
        )
        .unwrap();
        let applied = op.apply(&ones, 0).unwrap();
        for i in 0..grid.n_interior() {
            assert!(applied[i].abs() < 1e-11, "constant not annihilated: {}", applied[i]);
        }
    }

    #[test]
    fn monotone_at_interior_maximum() {
        // If u attains its global maximum at an interior node, the operator
        // is nonnegative there, termwise.
        let grid = unit_grid(1.0 / 32.0, 2.0);
        let kernel = make_fractional_kernel(1, 0.75).unwrap();
        let op = assemble(&grid, &kernel).unwrap();
        let field = SpaceTimeField::sample(
            grid.clone(),
            vec![0.0],
            |x, _| -(x[0] - 0.4375).powi(2),
            FarRule::PerStep(vec![-9.0]),
        )
        .unwrap();
        let applied = op.apply(&field, 0).unwrap();
        let (imax, _) = (0..grid.n_interior())
            .map(|i| (i, field.interior()[(i, 0)]))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert!(applied[imax] >= -1e-12);
    }

    #[test]
    fn kernel_doubling_doubles_the_operator() {
        let grid = unit_grid(1.0 / 32.0, 2.0);
        let s = 0.5;
        let c = normalization_constant(1, s).unwrap();
        let base = make_fractional_kernel(1, s).unwrap();
        let doubled = make_custom_kernel(1, s, 2.0 * c / (1.0 - s), 2.0 * c / (1.0 - s), move |r| {
            2.0 * c * r.powf(-2.0)
        })
        .unwrap();
        let op1 = assemble(&grid, &base).unwrap();
        let op2 = assemble(&grid, &doubled).unwrap();
        let field = cosine_field(&grid, 3.0);
        let a1 = op1.apply(&field, 0).unwrap();
        let a2 = op2.apply(&field, 0).unwrap();
        for i in 0..grid.n_interior() {
            assert_relative_eq!(a2[i], 2.0 * a1[i], max_relative = 1e-9);
        }
    }

    #[test]
    fn ellipticity_sandwich_is_tight_for_fractional_kernel() {
        let grid = unit_grid(1.0 / 64.0, 2.0);
        let s = 0.75;
        let kernel = make_fractional_kernel(1, s).unwrap();
        let op = assemble(&grid, &kernel).unwrap();
        let comp = assemble_comparison(&grid, s).unwrap();
        let c = normalization_constant(1, s).unwrap();
        let v = DVector::from_fn(grid.n_interior(), |i, _| ((i * 37 % 17) as f64 - 8.0) / 8.0);
        let quad_k = (op.matrix_a() * &v).dot(&v);
        let quad_raw = (comp.matrix() * &v).dot(&v);
        // Fractional kernel: K = c |y|^(-1-2s), so the energy is exactly c
        // times the raw difference-quotient energy, i.e. the sandwich
        // lambda (1-s) E <= E_K <= Lambda (1-s) E collapses to equality.
        assert_relative_eq!(quad_k, c * quad_raw, max_relative = 1e-12);
        let lower = kernel.lambda() * (1.0 - s) * quad_raw;
        let upper = kernel.big_lambda() * (1.0 - s) * quad_raw;
        assert!(quad_k >= lower * (1.0 - 1e-12) && quad_k <= upper * (1.0 + 1e-12));
    }

    #[test]
    fn ellipticity_sandwich_for_custom_kernel() {
        let grid = unit_grid(1.0 / 64.0, 2.0);
        let s = 0.5;
        let kernel = make_custom_kernel(1, s, 1.1, 1.9, move |r: f64| {
            (1.0 - s) * (1.5 + 0.4 * r.ln().sin()) * r.powf(-2.0)
        })
        .unwrap();
        let op = assemble(&grid, &kernel).unwrap();
        let comp = assemble_comparison(&grid, s).unwrap();
        let v = DVector::from_fn(grid.n_interior(), |i, _| ((i * 13 % 11) as f64 - 5.0) / 5.0);
        let quad_k = (op.matrix_a() * &v).dot(&v);
        let raw = (1.0 - s) * (comp.matrix() * &v).dot(&v);
        assert!(quad_k >= 1.1 * raw * (1.0 - 1e-9));
        assert!(quad_k <= 1.9 * raw * (1.0 + 1e-9));
    }

    #[test]
    fn bilinear_form_matches_matrix_pairing_for_interior_test_function() {
        let grid = unit_grid(1.0 / 32.0, 2.0);
        let kernel = make_fractional_kernel(1, 0.5).unwrap();
        let op = assemble(&grid, &kernel).unwrap();
        // u has nonzero exterior data; v vanishes outside the domain.
        let u = SpaceTimeField::sample(
            grid.clone(),
            vec![0.0],
            |x, _| x[0] * x[0] + 0.3,
            FarRule::PerStep(vec![0.3]),
        )
        .unwrap();
        let v = SpaceTimeField::sample(
            grid.clone(),
            vec![0.0],
            |x, _| {
                if x[0] > 0.0 && x[0] < 1.0 {
                    (std::f64::consts::PI * x[0]).sin()
                } else {
                    0.0
                }
            },
            FarRule::Zero,
        )
        .unwrap();
        let pairing = op.bilinear_form(&u, &v, 0).unwrap();
        let vi = v.interior_at(0);
        let ui = u.interior_at(0);
        let ext = op.exterior_at(&u, 0).unwrap();
        let matrix_side = vi.dot(&(op.matrix_a() * ui + op.matrix_b() * ext));
        assert_relative_eq!(pairing, matrix_side, max_relative = 1e-11);
        // And symmetry holds generally.
        let uv = op.bilinear_form(&u, &v, 0).unwrap();
        let vu = op.bilinear_form(&v, &u, 0).unwrap();
        assert_relative_eq!(uv, vu, max_relative = 1e-12);
    }

    #[test]
    fn energy_pair_visitor_reproduces_bilinear_form() {
        let grid = unit_grid(1.0 / 24.0, 2.0);
        let kernel = make_fractional_kernel(1, 0.6).unwrap();
        let op = assemble(&grid, &kernel).unwrap();
        let u = SpaceTimeField::sample(
            grid.clone(),
            vec![0.0],
            |x, _| (3.0 * x[0]).cos() + 0.2,
            FarRule::PerStep(vec![0.2]),
        )
        .unwrap();
        let v = SpaceTimeField::sample(
            grid.clone(),
            vec![0.0],
            |x, _| x[0].powi(3) - 0.1,
            FarRule::PerStep(vec![-0.1]),
        )
        .unwrap();
        let mut acc = 0.0;
        op.for_each_energy_pair(|i, other, w| {
            let (ux, vx) = (u.value(Node::Interior(i), 0).unwrap(), {
                v.value(Node::Interior(i), 0).unwrap()
            });
            let (uy, vy) = match other {
                Some(node) => (u.value(node, 0).unwrap(), v.value(node, 0).unwrap()),
                None => (u.far().value(0), v.far().value(0)),
            };
            acc += w * (ux - uy) * (vx - vy);
        })
        .unwrap();
        let direct = op.bilinear_form(&u, &v, 0).unwrap();
        assert_relative_eq!(acc, direct, max_relative = 1e-12);
    }

    #[test]
    fn apply_without_collar_is_incomplete() {
        let grid = unit_grid(1.0 / 16.0, 2.0);
        let kernel = make_fractional_kernel(1, 0.5).unwrap();
        let op = assemble(&grid, &kernel).unwrap();
        let field = SpaceTimeField::interior_only(
            grid.clone(),
            vec![0.0],
            DMatrix::zeros(grid.n_interior(), 1),
        )
        .unwrap();
        assert!(matches!(op.apply(&field, 0), Err(Error::IncompleteField(_))));
    }

    #[test]
    fn mismatched_grid_is_incompatible() {
        let grid = unit_grid(1.0 / 16.0, 2.0);
        let other = unit_grid(1.0 / 8.0, 2.0);
        let kernel = make_fractional_kernel(1, 0.5).unwrap();
        let op = assemble(&grid, &kernel).unwrap();
        let field = SpaceTimeField::zero(other, vec![0.0]).unwrap();
        assert!(matches!(
            op.apply(&field, 0),
            Err(Error::IncompatibleFields(_))
        ));
    }

    #[test]
    fn dimension_mismatch_fails_assembly() {
        let grid = unit_grid(1.0 / 16.0, 2.0);
        let kernel = make_fractional_kernel(2, 0.5).unwrap();
        assert!(matches!(assemble(&grid, &kernel), Err(Error::Assembly(_))));
    }

    #[test]
    fn x0_norm_requires_zero_exterior() {
        let grid = unit_grid(1.0 / 16.0, 2.0);
        let comp = assemble_comparison(&grid, 0.5).unwrap();
        let bad = SpaceTimeField::sample(grid.clone(), vec![0.0], |_, _| 1.0, FarRule::Zero)
            .unwrap();
        assert!(matches!(
            comp.x0_norm(&bad, 0),
            Err(Error::DomainViolation(_))
        ));
        let good = SpaceTimeField::zero(grid.clone(), vec![0.0]).unwrap();
        assert_eq!(comp.x0_norm(&good, 0).unwrap(), 0.0);
    }

    #[test]
    fn hs_seminorm_matches_brute_force_and_is_dominated() {
        let grid = unit_grid(1.0 / 16.0, 2.0);
        let s = 0.5;
        let comp = assemble_comparison(&grid, s).unwrap();
        // A single hat function.
        let mut interior = DMatrix::zeros(grid.n_interior(), 1);
        interior[(grid.n_interior() / 2, 0)] = 1.0;
        let field = SpaceTimeField::from_samples(
            grid.clone(),
            vec![0.0],
            interior.clone(),
            Some(DMatrix::zeros(grid.n_collar(), 1)),
            FarRule::Zero,
        )
        .unwrap();
        let region: Vec<Node> = (0..grid.n_interior()).map(Node::Interior).collect();
        let got = comp.hs_seminorm(&field, 0, &region).unwrap();
        // Independent brute-force double sum.
        let h = grid.h();
        let mut acc = 0.0;
        for p in 0..grid.n_interior() {
            for q in 0..grid.n_interior() {
                if p == q {
                    continue;
                }
                let xp = grid.interior_positions()[p][0];
                let xq = grid.interior_positions()[q][0];
                let diff = interior[(p, 0)] - interior[(q, 0)];
                acc += diff * diff * (xp - xq).abs().powf(-2.0) * h * h;
            }
        }
        assert_relative_eq!(got, acc.sqrt(), max_relative = 1e-12);
        // Region seminorm is dominated by the zero-exterior energy norm.
        let x0 = comp.x0_norm(&field, 0).unwrap();
        assert!(got <= x0 * (1.0 + 1e-12), "seminorm {got} exceeds energy norm {x0}");
    }

    #[test]
    fn quadrature_record_is_coherent() {
        let grid = unit_grid(1.0 / 64.0, 2.0);
        let s = 0.5;
        let kernel = make_fractional_kernel(1, s).unwrap();
        let op = assemble(&grid, &kernel).unwrap();
        let q = op.quadrature();
        assert_relative_eq!(q.split_radius, 0.5 / 64.0);
        assert!(q.far_cutoff >= grid.r_inf() - grid.h());
        // Closed forms for the power kernel.
        let c = normalization_constant(1, s).unwrap();
        assert_relative_eq!(
            q.subcell_moment,
            2.0 * c * (0.5 / 64.0f64).powf(1.0) / 1.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            q.far_mass,
            c * q.far_cutoff.powf(-1.0) / s,
            max_relative = 1e-12
        );
        assert!(q.error_moment > q.subcell_moment);
    }
}
