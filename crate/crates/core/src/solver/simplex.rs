//! Revised simplex over `max d^T x  s.t.  A x <= b`, run on the dual.
//!
//! The dual reads `min b^T y  s.t.  A^T y = d, y >= 0` with one variable per
//! primal row, so the basis is n x n where n is the primal space dimension.
//! Support-function queries against polytopes with hundreds of rows therefore
//! cost a handful of small LU factorizations instead of tableau sweeps.
//!
//! Correspondence used throughout:
//! * dual optimal basis B (a set of n primal rows) gives simplex multipliers
//!   pi solving `A_B pi = b_B`; nonnegative reduced costs mean `A pi <= b`,
//!   so pi is the primal maximizer and `b^T y = d^T pi` by strong duality
//!   (cross-checked numerically before returning);
//! * an unbounded dual descent ray r >= 0 with `A^T r = 0, b^T r < 0` is a
//!   Farkas certificate that the primal is empty (verified before reporting
//!   `Infeasible`);
//! * a dual-infeasible phase 1 means the primal is unbounded in direction d
//!   or empty; a second solve with d = 0 separates the two cases.

use nalgebra::{DMatrix, DVector};

use super::{SolverError, LP_MAX_ITER};

const REDUCED_COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_SWITCH: usize = 40;

#[derive(Debug)]
pub(crate) enum LpOutcome {
    Optimal { point: DVector<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

enum DualOutcome {
    Optimal { point: DVector<f64>, value: f64 },
    PrimalInfeasible,
    DualInfeasible,
}

/// Maximize `d^T x` over `{x : A x <= b}`.
pub(crate) fn maximize_over_polyhedron(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<LpOutcome, SolverError> {
    let n = a.ncols();
    if n == 0 {
        return Err(SolverError::Dimension("zero-dimensional LP".into()));
    }
    if a.nrows() != b.len() || d.len() != n {
        return Err(SolverError::Dimension(format!(
            "LP dimensions: A is {}x{}, b has {}, d has {}",
            a.nrows(),
            a.ncols(),
            b.len(),
            d.len()
        )));
    }
    match solve_dual(a, b, d)? {
        DualOutcome::Optimal { point, value } => Ok(LpOutcome::Optimal { point, value }),
        DualOutcome::PrimalInfeasible => Ok(LpOutcome::Infeasible),
        DualOutcome::DualInfeasible => {
            // Either sup d^T x = +inf over a nonempty set, or the set is
            // empty as well. Feasibility alone is the d = 0 problem: its
            // dual is always feasible (y = 0), so the ambiguity resolves.
            if d.iter().all(|&v| v == 0.0) {
                return Err(SolverError::Numerical(
                    "zero-objective dual reported infeasible".into(),
                ));
            }
            match solve_dual(a, b, &DVector::zeros(n))? {
                DualOutcome::Optimal { .. } => Ok(LpOutcome::Unbounded),
                DualOutcome::PrimalInfeasible => Ok(LpOutcome::Infeasible),
                DualOutcome::DualInfeasible => Err(SolverError::Numerical(
                    "feasibility subproblem reported dual infeasible".into(),
                )),
            }
        }
    }
}

enum PhaseEnd {
    Optimal,
    /// Entering column with an unblocked descent direction `w = B^-1 col_e`.
    Unbounded { entering: usize, w: DVector<f64> },
}

struct DualSimplex {
    /// Column j < m is primal row j transposed; columns m..m+n are signed
    /// artificial unit vectors.
    cols: Vec<DVector<f64>>,
    m: usize,
    n: usize,
    rhs: DVector<f64>,
    basis: Vec<usize>,
    iterations: usize,
}

impl DualSimplex {
    fn new(a: &DMatrix<f64>, d: &DVector<f64>) -> Self {
        let (m, n) = (a.nrows(), a.ncols());
        let mut cols: Vec<DVector<f64>> = (0..m).map(|j| a.row(j).transpose()).collect();
        let mut basis = Vec::with_capacity(n);
        for k in 0..n {
            let sign = if d[k] >= 0.0 { 1.0 } else { -1.0 };
            let mut e = DVector::zeros(n);
            e[k] = sign;
            cols.push(e);
            basis.push(m + k);
        }
        Self {
            cols,
            m,
            n,
            rhs: d.clone(),
            basis,
            iterations: 0,
        }
    }

    fn basis_matrix(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.n, self.n);
        for (pos, &j) in self.basis.iter().enumerate() {
            b.set_column(pos, &self.cols[j]);
        }
        b
    }

    fn in_basis(&self, j: usize) -> bool {
        self.basis.contains(&j)
    }

    /// Run one simplex phase to optimality or unboundedness.
    /// `costs` has one entry per column; `allow_artificial` permits columns
    /// >= m to enter (phase 1 only).
    fn run_phase(
        &mut self,
        costs: &[f64],
        allow_artificial: bool,
    ) -> Result<PhaseEnd, SolverError> {
        let mut degenerate_streak = 0usize;
        loop {
            self.iterations += 1;
            if self.iterations > LP_MAX_ITER {
                return Err(SolverError::IterationLimit("simplex"));
            }
            let bmat = self.basis_matrix();
            let lu = bmat.clone().full_piv_lu();
            let lut = bmat.transpose().full_piv_lu();
            let y_basic = lu
                .solve(&self.rhs)
                .ok_or_else(|| SolverError::Numerical("singular simplex basis".into()))?;
            let cost_basic = DVector::from_iterator(
                self.n,
                self.basis.iter().map(|&j| costs[j]),
            );
            let multipliers = lut
                .solve(&cost_basic)
                .ok_or_else(|| SolverError::Numerical("singular simplex basis".into()))?;

            let bland = degenerate_streak >= DEGENERATE_SWITCH;
            let limit = if allow_artificial {
                self.m + self.n
            } else {
                self.m
            };
            let mut entering = None;
            let mut best = -REDUCED_COST_TOL;
            for j in 0..limit {
                if self.in_basis(j) {
                    continue;
                }
                let reduced = costs[j] - multipliers.dot(&self.cols[j]);
                if reduced < -REDUCED_COST_TOL {
                    if bland {
                        entering = Some(j);
                        break;
                    }
                    if reduced < best {
                        best = reduced;
                        entering = Some(j);
                    }
                }
            }
            let Some(e) = entering else {
                return Ok(PhaseEnd::Optimal);
            };

            let w = lu
                .solve(&self.cols[e])
                .ok_or_else(|| SolverError::Numerical("singular simplex basis".into()))?;
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.n {
                if w[r] > PIVOT_TOL {
                    let ratio = (y_basic[r].max(0.0)) / w[r];
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - 1e-12
                                || (ratio < lratio + 1e-12 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return Ok(PhaseEnd::Unbounded { entering: e, w });
            };
            if ratio <= 1e-12 {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }
            self.basis[r] = e;
        }
    }

    /// Replace basic artificials by real columns where possible. Remaining
    /// artificial rows are orthogonal to every real column, so later pivots
    /// cannot change their (zero) values.
    fn drive_out_artificials(&mut self) -> Result<(), SolverError> {
        for r in 0..self.n {
            if self.basis[r] < self.m {
                continue;
            }
            let bmat = self.basis_matrix();
            let lut = bmat.transpose().full_piv_lu();
            let mut e_r = DVector::zeros(self.n);
            e_r[r] = 1.0;
            let u = lut
                .solve(&e_r)
                .ok_or_else(|| SolverError::Numerical("singular simplex basis".into()))?;
            for j in 0..self.m {
                if self.in_basis(j) {
                    continue;
                }
                if u.dot(&self.cols[j]).abs() > 1e-9 {
                    self.basis[r] = j;
                    break;
                }
            }
        }
        Ok(())
    }
}

fn solve_dual(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<DualOutcome, SolverError> {
    let (m, n) = (a.nrows(), a.ncols());
    let mut sx = DualSimplex::new(a, d);

    // Phase 1: minimize the artificial sum from the all-artificial basis.
    let mut costs = vec![0.0; m + n];
    for c in costs.iter_mut().skip(m) {
        *c = 1.0;
    }
    match sx.run_phase(&costs, true)? {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded { .. } => {
            return Err(SolverError::Numerical(
                "phase-1 objective unbounded below zero".into(),
            ));
        }
    }
    let bmat = sx.basis_matrix();
    let y_basic = bmat
        .clone()
        .full_piv_lu()
        .solve(&sx.rhs)
        .ok_or_else(|| SolverError::Numerical("singular simplex basis".into()))?;
    let artificial_sum: f64 = sx
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &j)| j >= m)
        .map(|(pos, _)| y_basic[pos].abs())
        .sum();
    if artificial_sum > 1e-9 * (1.0 + d.amax()) {
        return Ok(DualOutcome::DualInfeasible);
    }
    sx.drive_out_artificials()?;

    // Phase 2: minimize b^T y; artificials keep zero cost and may not enter.
    let mut costs = vec![0.0; m + n];
    costs[..m].copy_from_slice(b.as_slice());
    match sx.run_phase(&costs, false)? {
        PhaseEnd::Optimal => {
            let bmat = sx.basis_matrix();
            let lu = bmat.clone().full_piv_lu();
            let lut = bmat.transpose().full_piv_lu();
            let y_basic = lu
                .solve(&sx.rhs)
                .ok_or_else(|| SolverError::Numerical("singular simplex basis".into()))?;
            let cost_basic = DVector::from_iterator(n, sx.basis.iter().map(|&j| costs[j]));
            let point = lut
                .solve(&cost_basic)
                .ok_or_else(|| SolverError::Numerical("singular simplex basis".into()))?;
            let dual_value = cost_basic.dot(&y_basic);
            let primal_value = d.dot(&point);
            if (dual_value - primal_value).abs() > 1e-6 * (1.0 + dual_value.abs()) {
                return Err(SolverError::Numerical(format!(
                    "duality gap {:.3e} at simplex optimum",
                    dual_value - primal_value
                )));
            }
            Ok(DualOutcome::Optimal {
                point,
                value: dual_value,
            })
        }
        PhaseEnd::Unbounded { entering, w } => {
            // Assemble the Farkas ray over the m real dual variables.
            let mut ray = DVector::zeros(m);
            ray[entering] = 1.0;
            for r in 0..n {
                let j = sx.basis[r];
                if j < m {
                    ray[j] = (-w[r]).max(0.0);
                }
            }
            let residual = (a.transpose() * &ray).amax();
            let descent = b.dot(&ray);
            if residual > 1e-7 * (1.0 + ray.amax()) || descent >= 0.0 {
                return Err(SolverError::Numerical(format!(
                    "Farkas certificate failed verification: residual {residual:.3e}, descent {descent:.3e}"
                )));
            }
            Ok(DualOutcome::PrimalInfeasible)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_row_with_negative_rhs_is_infeasible() {
        // 0^T x <= -1 is unsatisfiable; the zero dual column itself is the
        // Farkas certificate.
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let b = DVector::from_row_slice(&[1.0, -1.0]);
        let d = DVector::from_row_slice(&[1.0]);
        let out = maximize_over_polyhedron(&a, &b, &d).unwrap();
        assert!(matches!(out, LpOutcome::Infeasible));
    }

    #[test]
    fn support_of_shifted_box() {
        // [1,3] x [-2,0], direction (1,-1): 3 + 2 = 5 at vertex (3,-2).
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let b = DVector::from_row_slice(&[3.0, -1.0, 0.0, 2.0]);
        let d = DVector::from_row_slice(&[1.0, -1.0]);
        match maximize_over_polyhedron(&a, &b, &d).unwrap() {
            LpOutcome::Optimal { point, value } => {
                assert!((value - 5.0).abs() < 1e-9);
                assert!((point[0] - 3.0).abs() < 1e-9);
                assert!((point[1] + 2.0).abs() < 1e-9);
            }
            other => panic!("expected optimum, got {other:?}"),
        }
    }
}
