//! Dense convex optimization backends.
//!
//! Two solvers cover everything the toolkit needs:
//!
//! * [`solve_lp`]: linear programs in inequality/equality form, used for
//!   support functions, emptiness certificates, and redundancy tests. The
//!   implementation is a revised simplex run on the dual, so the basis size
//!   equals the space dimension (small) rather than the row count.
//! * [`solve_qcqp`]: convex quadratic programs with affine inequalities,
//!   optional equalities, and convex quadratic inequality constraints, used
//!   for the online filter projection. The implementation is a primal-dual
//!   interior-point method with a phase-1 feasibility stage when no starting
//!   point is supplied.
//!
//! All matrices are dense `nalgebra` types; problem sizes in this crate stay
//! below a few hundred rows and a few dozen variables.

mod qcqp;
mod simplex;

pub(crate) use simplex::{maximize_over_polyhedron, LpOutcome};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Feasibility tolerance: a point is accepted as feasible when no constraint
/// is violated by more than this.
pub const FEASIBILITY_TOL: f64 = 1e-7;

/// Relative tolerance on stationarity/duality residuals at a point reported
/// as `Optimal`.
pub const OPTIMALITY_TOL: f64 = 1e-6;

/// Iteration cap for the interior-point method.
pub const QCQP_MAX_ITER: usize = 500;

/// Iteration cap for the simplex.
pub const LP_MAX_ITER: usize = 10_000;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("objective or constraint matrix is not positive semidefinite: {0}")]
    NotPsd(String),
    #[error("problem is unbounded below")]
    Unbounded,
    #[error("iteration limit reached in {0}")]
    IterationLimit(&'static str),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Outcome classification for a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    /// KKT residuals below tolerance at the returned point.
    Optimal,
    /// Returned point satisfies all constraints within [`FEASIBILITY_TOL`]
    /// but optimality was not certified (e.g. warmstart fallback).
    Feasible,
    /// No feasible point exists; a separating certificate was verified.
    Infeasible,
    /// The iteration broke down and no feasible fallback was available.
    NumericalFailure,
}

/// Solve result. `x` is meaningful for `Optimal` and `Feasible`; for
/// `Infeasible` and `NumericalFailure` it carries the last iterate only.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DVector<f64>,
    pub status: SolveStatus,
    pub objective_value: f64,
    /// Largest constraint violation at `x` (0 when strictly feasible),
    /// recomputed from the problem data rather than solver internals.
    pub max_violation: f64,
}

/// Affine inequality system `A x <= b`.
#[derive(Debug, Clone)]
pub struct LinearConstraints {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearConstraints {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, SolverError> {
        if a.nrows() != b.len() {
            return Err(SolverError::Dimension(format!(
                "constraint matrix has {} rows but rhs has {} entries",
                a.nrows(),
                b.len()
            )));
        }
        Ok(Self { a, b })
    }

    /// System with no rows over `dim` variables.
    pub fn empty(dim: usize) -> Self {
        Self {
            a: DMatrix::zeros(0, dim),
            b: DVector::zeros(0),
        }
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    /// Largest violation `max_i (a_i^T x - b_i)`, negative when strictly
    /// interior, 0 for a system with no rows.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.a.nrows() {
            let v = self.a.row(i).transpose().dot(x) - self.b[i];
            worst = worst.max(v);
        }
        worst
    }

    /// Stack two systems over the same variables.
    pub fn stack(&self, other: &LinearConstraints) -> Result<Self, SolverError> {
        if self.a.ncols() != other.a.ncols() {
            return Err(SolverError::Dimension(
                "stacked constraint systems have different variable counts".into(),
            ));
        }
        let m = self.num_rows() + other.num_rows();
        let mut a = DMatrix::zeros(m, self.a.ncols());
        let mut b = DVector::zeros(m);
        a.view_mut((0, 0), (self.num_rows(), self.a.ncols()))
            .copy_from(&self.a);
        a.view_mut((self.num_rows(), 0), (other.num_rows(), self.a.ncols()))
            .copy_from(&other.a);
        b.rows_mut(0, self.num_rows()).copy_from(&self.b);
        b.rows_mut(self.num_rows(), other.num_rows())
            .copy_from(&other.b);
        Ok(Self { a, b })
    }
}

/// Quadratic form `0.5 x^T H x + g^T x + c` with `H` symmetric PSD.
#[derive(Debug, Clone)]
pub struct QuadForm {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c: f64,
}

impl QuadForm {
    /// Builds the form, symmetrizing `h` and verifying it is PSD.
    /// Eigenvalues down to `-1e-8` (relative to the largest magnitude) are
    /// accepted as rounding noise.
    pub fn new(h: DMatrix<f64>, g: DVector<f64>, c: f64) -> Result<Self, SolverError> {
        if !h.is_square() || h.nrows() != g.len() {
            return Err(SolverError::Dimension(format!(
                "quadratic form dimensions {}x{} vs gradient {}",
                h.nrows(),
                h.ncols(),
                g.len()
            )));
        }
        let sym = (&h + h.transpose()) * 0.5;
        let eigs = sym.clone().symmetric_eigenvalues();
        let max_abs = eigs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let floor = -1e-8 * (1.0 + max_abs);
        if eigs.iter().any(|&e| e < floor) {
            return Err(SolverError::NotPsd(format!(
                "minimum eigenvalue {:.3e}",
                eigs.iter().cloned().fold(f64::INFINITY, f64::min)
            )));
        }
        Ok(Self { h: sym, g, c })
    }

    /// Affine form `g^T x + c` (zero Hessian).
    pub fn affine(g: DVector<f64>, c: f64) -> Self {
        let n = g.len();
        Self {
            h: DMatrix::zeros(n, n),
            g,
            c,
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.h * x)[(0, 0)] + self.g.dot(x) + self.c
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x + &self.g
    }
}

/// Convex program
/// `min 0.5 x^T H x + g^T x + c  s.t.  A x <= b,  A_eq x = b_eq,  q_i(x) <= 0`
/// where every `q_i` is a convex [`QuadForm`].
#[derive(Debug, Clone)]
pub struct ConvexProgram {
    pub objective: QuadForm,
    pub ineq: LinearConstraints,
    pub eq: Option<LinearConstraints>,
    pub quad_ineq: Vec<QuadForm>,
}

impl ConvexProgram {
    pub fn new(
        objective: QuadForm,
        ineq: LinearConstraints,
        eq: Option<LinearConstraints>,
        quad_ineq: Vec<QuadForm>,
    ) -> Result<Self, SolverError> {
        let n = objective.dim();
        if ineq.a.ncols() != n {
            return Err(SolverError::Dimension(format!(
                "inequalities over {} variables, objective over {}",
                ineq.a.ncols(),
                n
            )));
        }
        if let Some(e) = &eq {
            if e.a.ncols() != n {
                return Err(SolverError::Dimension(
                    "equality system variable count mismatch".into(),
                ));
            }
        }
        for q in &quad_ineq {
            if q.dim() != n {
                return Err(SolverError::Dimension(
                    "quadratic constraint variable count mismatch".into(),
                ));
            }
        }
        Ok(Self {
            objective,
            ineq,
            eq,
            quad_ineq,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.objective.dim()
    }

    /// Largest constraint violation at `x` across affine, equality, and
    /// quadratic constraints.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst = self.ineq.max_violation(x);
        if let Some(e) = &self.eq {
            for i in 0..e.num_rows() {
                worst = worst.max((e.a.row(i).transpose().dot(x) - e.b[i]).abs());
            }
        }
        for q in &self.quad_ineq {
            worst = worst.max(q.value(x));
        }
        worst
    }
}

/// Minimize `cost^T x` subject to `ineq.a x <= ineq.b` and optionally
/// `eq.a x = eq.b`.
///
/// Returns `Optimal` with a vertex solution, `Infeasible` after verifying a
/// Farkas certificate, or `Err(Unbounded)` when the objective decreases
/// without bound over a nonempty feasible set.
pub fn solve_lp(
    cost: &DVector<f64>,
    ineq: &LinearConstraints,
    eq: Option<&LinearConstraints>,
) -> Result<Solution, SolverError> {
    let n = cost.len();
    if ineq.a.ncols() != n {
        return Err(SolverError::Dimension(
            "cost and constraint dimensions differ".into(),
        ));
    }
    // Fold equalities in as inequality pairs; the dual-form simplex then
    // handles a single `A x <= b` system.
    let folded;
    let system = match eq {
        None => ineq,
        Some(e) => {
            if e.a.ncols() != n {
                return Err(SolverError::Dimension(
                    "equality system variable count mismatch".into(),
                ));
            }
            let neg = LinearConstraints {
                a: -e.a.clone(),
                b: -e.b.clone(),
            };
            folded = ineq.stack(&LinearConstraints {
                a: e.a.clone(),
                b: e.b.clone(),
            })?
            .stack(&neg)?;
            &folded
        }
    };
    // maximize (-cost)^T x == minimize cost^T x
    match simplex::maximize_over_polyhedron(&system.a, &system.b, &(-cost))? {
        LpOutcome::Optimal { point, value } => {
            let violation = system.max_violation(&point);
            if violation > FEASIBILITY_TOL {
                return Err(SolverError::Numerical(format!(
                    "simplex returned a point violating constraints by {violation:.3e}"
                )));
            }
            Ok(Solution {
                objective_value: -value,
                max_violation: violation,
                x: point,
                status: SolveStatus::Optimal,
            })
        }
        LpOutcome::Infeasible => Ok(Solution {
            x: DVector::zeros(n),
            status: SolveStatus::Infeasible,
            objective_value: f64::NAN,
            max_violation: f64::INFINITY,
        }),
        LpOutcome::Unbounded => Err(SolverError::Unbounded),
    }
}

/// Minimize a convex program, optionally warmstarted.
///
/// Behavior contract:
/// * with a feasible `init`, the returned point is never worse than `init`:
///   if the interior-point iteration stalls or ends above the warmstart
///   objective, `init` itself is returned with status `Feasible`;
/// * `Infeasible` is only reported when no `init` was given and the phase-1
///   problem certifies infeasibility;
/// * `NumericalFailure` means the iteration broke down with no feasible
///   fallback available.
pub fn solve_qcqp(prog: &ConvexProgram, init: Option<&DVector<f64>>) -> Result<Solution, SolverError> {
    if let Some(x0) = init {
        if x0.len() != prog.num_vars() {
            return Err(SolverError::Dimension(
                "warmstart length does not match variable count".into(),
            ));
        }
    }
    qcqp::solve(prog, init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dm(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    fn dv(data: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(data)
    }

    #[test]
    fn lp_single_bound() {
        // minimize -x subject to x <= 1: optimum at x = 1, value -1.
        let ineq = LinearConstraints::new(dm(1, 1, &[1.0]), dv(&[1.0])).unwrap();
        let sol = solve_lp(&dv(&[-1.0]), &ineq, None).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.objective_value, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn lp_infeasible_interval() {
        // x <= -1 and -x <= -1 cannot both hold.
        let ineq =
            LinearConstraints::new(dm(2, 1, &[1.0, -1.0]), dv(&[-1.0, -1.0])).unwrap();
        let sol = solve_lp(&dv(&[1.0]), &ineq, None).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn lp_unbounded() {
        // minimize -x subject to -x <= 0 (x >= 0): unbounded above in x.
        let ineq = LinearConstraints::new(dm(1, 1, &[-1.0]), dv(&[0.0])).unwrap();
        let err = solve_lp(&dv(&[-1.0]), &ineq, None).unwrap_err();
        assert!(matches!(err, SolverError::Unbounded));
    }

    #[test]
    fn lp_box_corner() {
        // minimize -(x+2y) over the unit box: corner (1, 1).
        let ineq = LinearConstraints::new(
            dm(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]),
            dv(&[1.0, 1.0, 1.0, 1.0]),
        )
        .unwrap();
        let sol = solve_lp(&dv(&[-1.0, -2.0]), &ineq, None).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.objective_value, -3.0, epsilon = 1e-9);
    }

    #[test]
    fn lp_with_equality() {
        // minimize x + y on the segment x + y = 1 intersected with the box
        // [0,1]^2: every point on the segment attains 1.
        let ineq = LinearConstraints::new(
            dm(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]),
            dv(&[1.0, 0.0, 1.0, 0.0]),
        )
        .unwrap();
        let eq = LinearConstraints::new(dm(1, 2, &[1.0, 1.0]), dv(&[1.0])).unwrap();
        let sol = solve_lp(&dv(&[1.0, 1.0]), &ineq, Some(&eq)).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.objective_value, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.x[0] + sol.x[1], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn lp_degenerate_rows() {
        // Repeated and redundant rows must not cycle.
        let ineq = LinearConstraints::new(
            dm(6, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, -1.0, -1.0]),
            dv(&[1.0, 1.0, 1.0, 1.0, 2.0, 2.0]),
        )
        .unwrap();
        let sol = solve_lp(&dv(&[-1.0, -1.0]), &ineq, None).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.objective_value, -2.0, epsilon = 1e-9);
    }

    #[test]
    fn qcqp_projection_onto_disc() {
        // min ||x - (2,0)||^2 over the unit disc: optimum (1, 0).
        let objective = QuadForm::new(
            dm(2, 2, &[2.0, 0.0, 0.0, 2.0]),
            dv(&[-4.0, 0.0]),
            4.0,
        )
        .unwrap();
        let ball = QuadForm::new(
            dm(2, 2, &[2.0, 0.0, 0.0, 2.0]),
            dv(&[0.0, 0.0]),
            -1.0,
        )
        .unwrap();
        let prog = ConvexProgram::new(
            objective,
            LinearConstraints::empty(2),
            None,
            vec![ball],
        )
        .unwrap();
        let sol = solve_qcqp(&prog, None).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.x[1], 0.0, epsilon = 1e-6);
        assert!(sol.max_violation <= FEASIBILITY_TOL);
    }

    #[test]
    fn qcqp_equality_projection() {
        // min 0.5||x||^2 subject to x1 + x2 = 1: optimum (0.5, 0.5).
        let objective = QuadForm::new(DMatrix::identity(2, 2), dv(&[0.0, 0.0]), 0.0).unwrap();
        let eq = LinearConstraints::new(dm(1, 2, &[1.0, 1.0]), dv(&[1.0])).unwrap();
        let prog =
            ConvexProgram::new(objective, LinearConstraints::empty(2), Some(eq), vec![]).unwrap();
        let sol = solve_qcqp(&prog, None).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.x[1], 0.5, epsilon = 1e-6);
    }

    #[test]
    fn qcqp_affine_infeasible_detected() {
        let objective = QuadForm::new(DMatrix::identity(1, 1), dv(&[0.0]), 0.0).unwrap();
        let ineq =
            LinearConstraints::new(dm(2, 1, &[1.0, -1.0]), dv(&[-1.0, -1.0])).unwrap();
        let prog = ConvexProgram::new(objective, ineq, None, vec![]).unwrap();
        let sol = solve_qcqp(&prog, None).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn qcqp_quadratic_infeasible_detected() {
        // unit disc intersected with x1 >= 2.
        let objective = QuadForm::new(DMatrix::identity(2, 2), dv(&[0.0, 0.0]), 0.0).unwrap();
        let ineq = LinearConstraints::new(dm(1, 2, &[-1.0, 0.0]), dv(&[-2.0])).unwrap();
        let ball = QuadForm::new(
            dm(2, 2, &[2.0, 0.0, 0.0, 2.0]),
            dv(&[0.0, 0.0]),
            -1.0,
        )
        .unwrap();
        let prog = ConvexProgram::new(objective, ineq, None, vec![ball]).unwrap();
        let sol = solve_qcqp(&prog, None).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn qcqp_warmstart_never_worse() {
        // Projection of (3, 3) onto the unit box with a feasible warmstart.
        let objective = QuadForm::new(
            dm(2, 2, &[2.0, 0.0, 0.0, 2.0]),
            dv(&[-6.0, -6.0]),
            18.0,
        )
        .unwrap();
        let ineq = LinearConstraints::new(
            dm(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]),
            dv(&[1.0, 1.0, 1.0, 1.0]),
        )
        .unwrap();
        let prog = ConvexProgram::new(objective, ineq, None, vec![]).unwrap();
        let init = dv(&[0.0, 0.0]);
        let init_value = prog.objective.value(&init);
        let sol = solve_qcqp(&prog, Some(&init)).unwrap();
        assert!(matches!(sol.status, SolveStatus::Optimal | SolveStatus::Feasible));
        assert!(sol.objective_value <= init_value + 1e-9);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn quad_form_rejects_indefinite() {
        let err = QuadForm::new(dm(2, 2, &[1.0, 0.0, 0.0, -1.0]), dv(&[0.0, 0.0]), 0.0);
        assert!(matches!(err, Err(SolverError::NotPsd(_))));
    }

    #[test]
    fn qcqp_scaling_leaves_argmin_unchanged() {
        let ineq = LinearConstraints::new(
            dm(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, -1.0]),
            dv(&[1.0, 0.0, 0.0]),
        )
        .unwrap();
        let base = QuadForm::new(
            dm(2, 2, &[2.0, 0.0, 0.0, 2.0]),
            dv(&[-4.0, -2.0]),
            0.0,
        )
        .unwrap();
        let mut points = Vec::new();
        for scale in [1.0, 10.0, 1e3] {
            let obj = QuadForm::new(base.h.clone() * scale, base.g.clone() * scale, 0.0).unwrap();
            let prog = ConvexProgram::new(obj, ineq.clone(), None, vec![]).unwrap();
            let sol = solve_qcqp(&prog, None).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);
            points.push(sol.x);
        }
        for p in &points[1..] {
            assert_abs_diff_eq!((p - &points[0]).norm(), 0.0, epsilon = 1e-6);
        }
    }
}
