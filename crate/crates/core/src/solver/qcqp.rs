//! Primal-dual interior-point method for convex QCQPs.
//!
//! Mehrotra-style predictor-corrector iteration on the perturbed KKT
//! conditions. Slack and multiplier updates are eliminated analytically, so
//! each step factors one n x n reduced matrix (plus equality rows when
//! present):
//!
//! ```text
//! (H + sum_i lam_i H_i + J^T D J) dx + A_eq^T dnu = rhs,   D = diag(lam/s)
//! ```
//!
//! The reduced matrix is positive definite for a convex program, so a
//! Cholesky factorization with escalating diagonal regularization is used;
//! with equalities the saddle system is solved by LU instead.
//!
//! Entry point [`solve`] adds the behavior contract around the raw
//! iteration: constant constraint rows are resolved during presolve, a
//! phase-1 stage (minimize the worst violation) certifies infeasibility when
//! no starting point is given, and a feasible warmstart is returned verbatim
//! whenever the iteration fails or ends worse than it started.

use nalgebra::{DMatrix, DVector};

use super::{
    ConvexProgram, LinearConstraints, QuadForm, Solution, SolveStatus, SolverError,
    FEASIBILITY_TOL, OPTIMALITY_TOL, QCQP_MAX_ITER,
};

const FRACTION_TO_BOUNDARY: f64 = 0.995;
/// Violations below this after phase 1 count as feasible.
const PHASE1_TOL: f64 = 1e-8;

enum Constraint {
    /// `a^T x - b <= 0`
    Affine { a: DVector<f64>, b: f64 },
    /// `0.5 x^T H x + g^T x + c <= 0`
    Quadratic(QuadForm),
}

impl Constraint {
    fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Constraint::Affine { a, b } => a.dot(x) - b,
            Constraint::Quadratic(q) => q.value(x),
        }
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Constraint::Affine { a, .. } => a.clone(),
            Constraint::Quadratic(q) => q.gradient(x),
        }
    }

    fn add_scaled_hessian(&self, target: &mut DMatrix<f64>, scale: f64) {
        if let Constraint::Quadratic(q) = self {
            *target += &q.h * scale;
        }
    }

    /// Same constraint over `(x, t)` with `-t` added, for the phase-1
    /// program `min t  s.t.  f_i(x) - t <= 0`.
    fn lifted(&self, n: usize) -> Constraint {
        match self {
            Constraint::Affine { a, b } => {
                let mut a2 = DVector::zeros(n + 1);
                a2.rows_mut(0, n).copy_from(a);
                a2[n] = -1.0;
                Constraint::Affine { a: a2, b: *b }
            }
            Constraint::Quadratic(q) => {
                let mut h2 = DMatrix::zeros(n + 1, n + 1);
                h2.view_mut((0, 0), (n, n)).copy_from(&q.h);
                let mut g2 = DVector::zeros(n + 1);
                g2.rows_mut(0, n).copy_from(&q.g);
                g2[n] = -1.0;
                Constraint::Quadratic(QuadForm {
                    h: h2,
                    g: g2,
                    c: q.c,
                })
            }
        }
    }
}

struct IpmResult {
    x: DVector<f64>,
    converged: bool,
}

pub(crate) fn solve(
    prog: &ConvexProgram,
    init: Option<&DVector<f64>>,
) -> Result<Solution, SolverError> {
    let n = prog.num_vars();

    // Presolve: rows without a gradient are constants; a violated constant
    // row is an infeasibility certificate on its own, a satisfied one is
    // dropped so it cannot stall complementarity.
    let mut constraints: Vec<Constraint> = Vec::new();
    for i in 0..prog.ineq.num_rows() {
        let a = prog.ineq.a.row(i).transpose();
        if a.amax() <= 1e-12 {
            if prog.ineq.b[i] < -FEASIBILITY_TOL {
                return Ok(infeasible_solution(n));
            }
            continue;
        }
        constraints.push(Constraint::Affine {
            a,
            b: prog.ineq.b[i],
        });
    }
    for q in &prog.quad_ineq {
        if q.h.amax() <= 1e-14 && q.g.amax() <= 1e-14 {
            if q.c > FEASIBILITY_TOL {
                return Ok(infeasible_solution(n));
            }
            continue;
        }
        constraints.push(Constraint::Quadratic(q.clone()));
    }
    let eq = prog.eq.as_ref();

    match init {
        Some(x0) => {
            let init_violation = prog.max_violation(x0);
            let init_feasible = init_violation <= FEASIBILITY_TOL;
            let init_objective = prog.objective.value(x0);
            let outcome = ipm(&prog.objective, &constraints, eq, x0);
            finish_with_fallback(
                prog,
                outcome,
                init_feasible.then(|| (x0.clone(), init_objective)),
            )
        }
        None => {
            match phase1(&prog.objective, &constraints, eq, n)? {
                Phase1::Infeasible => Ok(infeasible_solution(n)),
                Phase1::Failed(x) => Ok(Solution {
                    objective_value: prog.objective.value(&x),
                    max_violation: prog.max_violation(&x),
                    x,
                    status: SolveStatus::NumericalFailure,
                }),
                Phase1::Feasible(x_feas) => {
                    // The phase-1 point serves as a fallback only when it
                    // satisfies the full program (equalities included).
                    let feas_violation = prog.max_violation(&x_feas);
                    let feas_objective = prog.objective.value(&x_feas);
                    let outcome = ipm(&prog.objective, &constraints, eq, &x_feas);
                    let fallback = (feas_violation <= FEASIBILITY_TOL)
                        .then(|| (x_feas, feas_objective));
                    finish_with_fallback(prog, outcome, fallback)
                }
            }
        }
    }
}

/// Classify an IPM outcome, preferring a known-feasible fallback point
/// whenever the iteration failed or ended with a worse objective.
fn finish_with_fallback(
    prog: &ConvexProgram,
    outcome: Result<IpmResult, SolverError>,
    fallback: Option<(DVector<f64>, f64)>,
) -> Result<Solution, SolverError> {
    let candidate = match outcome {
        Ok(res) => {
            let violation = prog.max_violation(&res.x);
            if violation <= FEASIBILITY_TOL {
                let objective_value = prog.objective.value(&res.x);
                Some(Solution {
                    x: res.x,
                    status: if res.converged {
                        SolveStatus::Optimal
                    } else {
                        SolveStatus::Feasible
                    },
                    objective_value,
                    max_violation: violation,
                })
            } else {
                None
            }
        }
        Err(SolverError::Dimension(e)) => return Err(SolverError::Dimension(e)),
        Err(_) => None,
    };
    match (candidate, fallback) {
        (Some(sol), Some((x0, obj0))) if sol.objective_value > obj0 => Ok(Solution {
            max_violation: prog.max_violation(&x0),
            x: x0,
            status: SolveStatus::Feasible,
            objective_value: obj0,
        }),
        (Some(sol), _) => Ok(sol),
        (None, Some((x0, obj0))) => Ok(Solution {
            max_violation: prog.max_violation(&x0),
            x: x0,
            status: SolveStatus::Feasible,
            objective_value: obj0,
        }),
        (None, None) => Ok(Solution {
            x: DVector::zeros(prog.num_vars()),
            status: SolveStatus::NumericalFailure,
            objective_value: f64::NAN,
            max_violation: f64::INFINITY,
        }),
    }
}

fn infeasible_solution(n: usize) -> Solution {
    Solution {
        x: DVector::zeros(n),
        status: SolveStatus::Infeasible,
        objective_value: f64::NAN,
        max_violation: f64::INFINITY,
    }
}

enum Phase1 {
    Feasible(DVector<f64>),
    Infeasible,
    Failed(DVector<f64>),
}

/// Solve `min t  s.t.  f_i(x) <= t` from the strictly feasible start
/// `(0, max_i f_i(0) + 1)`. The optimal value is the smallest achievable
/// worst violation, so a strictly positive certified optimum means the
/// original constraint set is empty.
fn phase1(
    _objective: &QuadForm,
    constraints: &[Constraint],
    eq: Option<&LinearConstraints>,
    n: usize,
) -> Result<Phase1, SolverError> {
    if constraints.is_empty() {
        // Only equalities (or nothing): the main solve handles them.
        return Ok(Phase1::Feasible(DVector::zeros(n)));
    }
    let mut g = DVector::zeros(n + 1);
    g[n] = 1.0;
    let ext_objective = QuadForm {
        h: DMatrix::zeros(n + 1, n + 1),
        g,
        c: 0.0,
    };
    let lifted: Vec<Constraint> = constraints.iter().map(|c| c.lifted(n)).collect();
    let ext_eq = eq.map(|e| {
        let mut a = DMatrix::zeros(e.num_rows(), n + 1);
        a.view_mut((0, 0), (e.num_rows(), n)).copy_from(&e.a);
        LinearConstraints { a, b: e.b.clone() }
    });

    let origin = DVector::zeros(n);
    let worst_at_origin = constraints
        .iter()
        .map(|c| c.value(&origin))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut x0 = DVector::zeros(n + 1);
    x0[n] = worst_at_origin + 1.0;

    let outcome = ipm(&ext_objective, &lifted, ext_eq.as_ref(), &x0);
    match outcome {
        Ok(res) => {
            let x_head = res.x.rows(0, n).into_owned();
            let worst = constraints
                .iter()
                .map(|c| c.value(&x_head))
                .fold(f64::NEG_INFINITY, f64::max);
            let eq_violation = eq.map_or(0.0, |e| (&e.a * &x_head - &e.b).amax());
            if worst <= PHASE1_TOL && eq_violation <= PHASE1_TOL {
                Ok(Phase1::Feasible(x_head))
            } else if res.converged {
                Ok(Phase1::Infeasible)
            } else {
                Ok(Phase1::Failed(x_head))
            }
        }
        Err(SolverError::Dimension(e)) => Err(SolverError::Dimension(e)),
        Err(_) => Ok(Phase1::Failed(DVector::zeros(n))),
    }
}

/// Raw interior-point iteration from `x0`. Returns the final iterate and
/// whether the KKT residuals converged; feasibility of the result is for the
/// caller to judge.
fn ipm(
    objective: &QuadForm,
    constraints: &[Constraint],
    eq: Option<&LinearConstraints>,
    x0: &DVector<f64>,
) -> Result<IpmResult, SolverError> {
    let n = objective.dim();
    let m = constraints.len();
    let p = eq.map_or(0, |e| e.num_rows());

    if m == 0 {
        return newton_equality_qp(objective, eq, n, p);
    }

    let mut x = x0.clone();
    let mut s = DVector::zeros(m);
    for i in 0..m {
        s[i] = (-constraints[i].value(&x)).max(1e-3);
    }
    let mut lam = DVector::from_element(m, 1.0);
    let mut nu = DVector::zeros(p);

    // Best iterate by scaled KKT score. Late iterations can destabilize
    // once mu collapses (the scaling matrix D blows up), so the loop keeps
    // the best point seen, stops on divergence, and judges convergence on
    // that best score rather than the final iterate.
    let mut best_score = f64::INFINITY;
    let mut best_x = x.clone();
    let mut best_lam = lam.clone();
    let mut best_nu = nu.clone();
    let mut stalled = 0usize;
    for _ in 0..QCQP_MAX_ITER {
        let fvals = DVector::from_iterator(m, constraints.iter().map(|c| c.value(&x)));
        let grads: Vec<DVector<f64>> = constraints.iter().map(|c| c.gradient(&x)).collect();

        let obj_grad = objective.gradient(&x);
        let mut forces = DVector::zeros(n);
        for i in 0..m {
            forces.axpy(lam[i], &grads[i], 1.0);
        }
        if let Some(e) = eq {
            forces += e.a.transpose() * &nu;
        }
        let r_d = &obj_grad + &forces;
        let r_p = &fvals + &s;
        let r_e = eq.map(|e| &e.a * &x - &e.b);
        let mu = s.dot(&lam) / m as f64;

        // Stationarity is judged relative to the forces being balanced.
        let d_scale = 1.0 + obj_grad.amax() + forces.amax();
        let obj_scale = 1.0 + objective.value(&x).abs();
        let eq_res = r_e.as_ref().map_or(0.0, |r| r.amax());
        let score = (r_d.amax() / d_scale)
            .max(r_p.amax())
            .max(eq_res)
            .max(mu / obj_scale);
        if score < 0.99 * best_score {
            stalled = 0;
        } else {
            stalled += 1;
        }
        if score < best_score {
            best_score = score;
            best_x.copy_from(&x);
            best_lam.copy_from(&lam);
            best_nu.copy_from(&nu);
        }
        if score <= 1e-10 {
            break;
        }
        // No progress left to make: the barrier parameter is at floating
        // point resolution, the iteration is diverging past an acceptable
        // point, or the score has flatlined.
        if mu <= 1e-14 * obj_scale && r_p.amax() <= 1e-9 {
            break;
        }
        if best_score <= OPTIMALITY_TOL && score > 1e3 * best_score.max(1e-12) {
            break;
        }
        if stalled > 30 {
            break;
        }

        // Reduced matrix H + sum lam_i H_i + J^T D J.
        let mut reduced = objective.h.clone();
        for i in 0..m {
            constraints[i].add_scaled_hessian(&mut reduced, lam[i]);
        }
        for i in 0..m {
            let d_i = lam[i] / s[i];
            reduced.ger(d_i, &grads[i], &grads[i], 1.0);
        }
        // A factorization breakdown this late usually means the scaling
        // matrix collapsed; the best iterate so far is the answer.
        let Ok(factor) = KktFactor::new(reduced, eq, n, p) else {
            break;
        };

        // Predictor: pure Newton step toward mu = 0.
        let mut rhs = -&r_d;
        for i in 0..m {
            let d_i = lam[i] / s[i];
            rhs.axpy(lam[i] - d_i * r_p[i], &grads[i], 1.0);
        }
        let Ok((dx_aff, _)) = factor.solve(&rhs, r_e.as_ref()) else {
            break;
        };
        let mut ds_aff = DVector::zeros(m);
        let mut dlam_aff = DVector::zeros(m);
        for i in 0..m {
            let jdx = grads[i].dot(&dx_aff);
            ds_aff[i] = -r_p[i] - jdx;
            dlam_aff[i] = -lam[i] + (lam[i] / s[i]) * (r_p[i] + jdx);
        }
        let alpha_aff = step_length(&s, &ds_aff, &lam, &dlam_aff, 1.0);
        let mu_aff = (&s + &ds_aff * alpha_aff).dot(&(&lam + &dlam_aff * alpha_aff)) / m as f64;
        let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);

        // Corrector: recenter toward sigma * mu with the Mehrotra
        // second-order term.
        let mut rhs = -&r_d;
        for i in 0..m {
            let d_i = lam[i] / s[i];
            let corr = ds_aff[i] * dlam_aff[i];
            rhs.axpy(
                lam[i] - (sigma * mu - corr) / s[i] - d_i * r_p[i],
                &grads[i],
                1.0,
            );
        }
        let Ok((dx, dnu)) = factor.solve(&rhs, r_e.as_ref()) else {
            break;
        };
        let mut ds = DVector::zeros(m);
        let mut dlam = DVector::zeros(m);
        for i in 0..m {
            let jdx = grads[i].dot(&dx);
            ds[i] = -r_p[i] - jdx;
            dlam[i] =
                -lam[i] + (sigma * mu - ds_aff[i] * dlam_aff[i]) / s[i]
                    + (lam[i] / s[i]) * (r_p[i] + jdx);
        }

        let alpha = FRACTION_TO_BOUNDARY * step_length(&s, &ds, &lam, &dlam, 1.0);
        let alpha = alpha.min(1.0);
        if alpha <= 1e-13 {
            break;
        }
        x.axpy(alpha, &dx, 1.0);
        s.axpy(alpha, &ds, 1.0);
        lam.axpy(alpha, &dlam, 1.0);
        if let Some(d) = dnu {
            nu.axpy(alpha, &d, 1.0);
        }
    }

    // Interior-point accuracy degrades to sqrt(mu) in directions where an
    // active constraint carries a vanishing multiplier. A Newton polish on
    // the strictly active set recovers those digits when it succeeds.
    if let Some((px, pscore)) = polish(objective, constraints, eq, &best_x, &best_lam, &best_nu) {
        if pscore < best_score {
            best_x = px;
            best_score = pscore;
        }
    }

    Ok(IpmResult {
        x: best_x,
        converged: best_score <= OPTIMALITY_TOL,
    })
}

/// Newton refinement on the strictly active constraint set. Treats every
/// constraint with a clearly nonzero multiplier as an equality, solves the
/// resulting KKT system from the supplied iterate, and scores the result
/// against the original problem. Returns `None` whenever the outcome is not
/// a certified improvement (singular KKT matrix, a negative multiplier, or
/// residuals that refuse to drop), so the caller can keep its own iterate.
fn polish(
    objective: &QuadForm,
    constraints: &[Constraint],
    eq: Option<&LinearConstraints>,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    nu: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let n = objective.dim();
    let p = eq.map_or(0, |e| e.num_rows());
    let lam_scale = 1.0 + lam.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let active: Vec<usize> = (0..constraints.len())
        .filter(|&i| lam[i] >= 1e-7 * lam_scale)
        .collect();
    let k = active.len();

    let mut px = x.clone();
    let mut plam = DVector::from_iterator(k, active.iter().map(|&i| lam[i]));
    let mut pnu = nu.clone();

    for _ in 0..8 {
        // Lagrangian Hessian and active Jacobian at the current point.
        let mut kkt = DMatrix::zeros(n + k + p, n + k + p);
        let mut h_l = objective.h.clone();
        for (row, &i) in active.iter().enumerate() {
            constraints[i].add_scaled_hessian(&mut h_l, plam[row]);
            let g = constraints[i].gradient(&px);
            for c in 0..n {
                kkt[(n + row, c)] = g[c];
                kkt[(c, n + row)] = g[c];
            }
        }
        kkt.view_mut((0, 0), (n, n)).copy_from(&h_l);
        if let Some(e) = eq {
            for r in 0..p {
                for c in 0..n {
                    kkt[(n + k + r, c)] = e.a[(r, c)];
                    kkt[(c, n + k + r)] = e.a[(r, c)];
                }
            }
        }

        let mut rhs = DVector::zeros(n + k + p);
        let mut grad_l = objective.gradient(&px);
        for (row, &i) in active.iter().enumerate() {
            grad_l.axpy(plam[row], &constraints[i].gradient(&px), 1.0);
            rhs[n + row] = -constraints[i].value(&px);
        }
        if let Some(e) = eq {
            grad_l += e.a.transpose() * &pnu;
            let r_e = &e.a * &px - &e.b;
            for r in 0..p {
                rhs[n + k + r] = -r_e[r];
            }
        }
        for c in 0..n {
            rhs[c] = -grad_l[c];
        }

        if rhs.amax() <= 1e-14 * lam_scale {
            break;
        }
        let step = kkt.full_piv_lu().solve(&rhs)?;
        for c in 0..n {
            px[c] += step[c];
        }
        for row in 0..k {
            plam[row] += step[n + row];
        }
        for r in 0..p {
            pnu[r] += step[n + k + r];
        }
    }

    // A negative multiplier means the active set was misclassified; the
    // polished point is then a restricted stationary point, not a KKT point
    // of the original problem.
    if plam.iter().any(|&v| v < -1e-9 * lam_scale) {
        return None;
    }

    // Score against the original problem. Complementarity is exact by
    // construction (inactive multipliers are zero, active residuals solved
    // to zero), so the score reduces to stationarity plus feasibility.
    let obj_grad = objective.gradient(&px);
    let mut forces = DVector::zeros(n);
    for (row, &i) in active.iter().enumerate() {
        forces.axpy(plam[row], &constraints[i].gradient(&px), 1.0);
    }
    if let Some(e) = eq {
        forces += e.a.transpose() * &pnu;
    }
    let r_d = &obj_grad + &forces;
    let d_scale = 1.0 + obj_grad.amax() + forces.amax();
    let viol = constraints
        .iter()
        .map(|c| c.value(&px))
        .fold(0.0f64, f64::max)
        .max(eq.map_or(0.0, |e| (&e.a * &px - &e.b).amax()));
    let score = (r_d.amax() / d_scale).max(viol);
    score.is_finite().then_some((px, score))
}

/// Largest step in [0, cap] keeping `s + a ds > 0` and `lam + a dlam > 0`
/// (up to the boundary itself).
fn step_length(
    s: &DVector<f64>,
    ds: &DVector<f64>,
    lam: &DVector<f64>,
    dlam: &DVector<f64>,
    cap: f64,
) -> f64 {
    let mut alpha = cap;
    for i in 0..s.len() {
        if ds[i] < 0.0 {
            alpha = alpha.min(-s[i] / ds[i]);
        }
        if dlam[i] < 0.0 {
            alpha = alpha.min(-lam[i] / dlam[i]);
        }
    }
    alpha
}

/// Direct KKT solve for programs with no inequality constraints.
fn newton_equality_qp(
    objective: &QuadForm,
    eq: Option<&LinearConstraints>,
    n: usize,
    p: usize,
) -> Result<IpmResult, SolverError> {
    let mut kkt = DMatrix::zeros(n + p, n + p);
    kkt.view_mut((0, 0), (n, n)).copy_from(&objective.h);
    let mut rhs = DVector::zeros(n + p);
    rhs.rows_mut(0, n).copy_from(&(-&objective.g));
    if let Some(e) = eq {
        kkt.view_mut((n, 0), (p, n)).copy_from(&e.a);
        kkt.view_mut((0, n), (n, p)).copy_from(&e.a.transpose());
        rhs.rows_mut(n, p).copy_from(&e.b);
    }
    for i in 0..n {
        kkt[(i, i)] += 1e-12;
    }
    let sol = kkt
        .full_piv_lu()
        .solve(&rhs)
        .ok_or_else(|| SolverError::Numerical("singular unconstrained KKT system".into()))?;
    Ok(IpmResult {
        x: sol.rows(0, n).into_owned(),
        converged: true,
    })
}

/// Factorization of the reduced Newton system, Cholesky when there are no
/// equality rows, LU on the saddle system otherwise. Regularization
/// escalates until the factorization succeeds.
enum KktFactor {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Saddle {
        lu: nalgebra::FullPivLU<f64, nalgebra::Dyn, nalgebra::Dyn>,
        n: usize,
        p: usize,
    },
}

impl KktFactor {
    fn new(
        reduced: DMatrix<f64>,
        eq: Option<&LinearConstraints>,
        n: usize,
        p: usize,
    ) -> Result<Self, SolverError> {
        if p == 0 {
            let scale = 1.0 + reduced.diagonal().amax();
            let mut delta = 1e-12 * scale;
            for _ in 0..8 {
                let mut regularized = reduced.clone();
                for i in 0..n {
                    regularized[(i, i)] += delta;
                }
                if let Some(chol) = nalgebra::Cholesky::new(regularized) {
                    return Ok(KktFactor::Chol(chol));
                }
                delta *= 100.0;
            }
            Err(SolverError::Numerical(
                "reduced KKT matrix is not positive definite".into(),
            ))
        } else {
            let e = eq.expect("equality rows present");
            let mut kkt = DMatrix::zeros(n + p, n + p);
            kkt.view_mut((0, 0), (n, n)).copy_from(&reduced);
            kkt.view_mut((n, 0), (p, n)).copy_from(&e.a);
            kkt.view_mut((0, n), (n, p)).copy_from(&e.a.transpose());
            for i in 0..n {
                kkt[(i, i)] += 1e-12;
            }
            Ok(KktFactor::Saddle {
                lu: kkt.full_piv_lu(),
                n,
                p,
            })
        }
    }

    /// Solve for `(dx, dnu)` given the stationarity rhs and, when equality
    /// rows exist, the equality residual (the solve targets `A dx = -r_e`).
    fn solve(
        &self,
        rhs_x: &DVector<f64>,
        r_e: Option<&DVector<f64>>,
    ) -> Result<(DVector<f64>, Option<DVector<f64>>), SolverError> {
        match self {
            KktFactor::Chol(chol) => Ok((chol.solve(rhs_x), None)),
            KktFactor::Saddle { lu, n, p } => {
                let mut rhs = DVector::zeros(n + p);
                rhs.rows_mut(0, *n).copy_from(rhs_x);
                if let Some(re) = r_e {
                    rhs.rows_mut(*n, *p).copy_from(&(-re));
                }
                let sol = lu.solve(&rhs).ok_or_else(|| {
                    SolverError::Numerical("singular saddle KKT system".into())
                })?;
                Ok((
                    sol.rows(0, *n).into_owned(),
                    Some(sol.rows(*n, *p).into_owned()),
                ))
            }
        }
    }
}
