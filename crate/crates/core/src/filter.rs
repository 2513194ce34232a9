//! The stability filter: offline design and the per-step projection.
//!
//! Offline, [`design_filter`] assembles everything the online loop needs:
//! the stabilizing feedback gain and terminal weight from the Riccati
//! solution, disturbance-tube tightenings of the state and input sets, a
//! robustly invariant terminal region, and a certificate block proving the
//! construction hangs together. Online, [`FilterDesign::filter_step`]
//! projects a proposed input onto the set of inputs that keep the tightened
//! constraints and a Lyapunov decrease feasible, warmstarted from a
//! candidate sequence that is feasible by construction.
//!
//! The Lyapunov function is implicit: the cost of an input sequence rolled
//! out on the nominal model, with the Riccati matrix as terminal weight.
//! Because the terminal weight is the exact cost-to-go of the terminal
//! feedback, shifting a feasible sequence forward drops the value by
//! exactly one stage cost, which is what makes the warmstart feasible for
//! the decrease constraint at every step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control_math::{
    is_positive_definite, is_positive_semidefinite, solve_dare, solve_discrete_lyapunov,
    spectral_radius, ControlMathError, CostMatrices, LinearSystem,
};
use crate::polytope::{
    max_rpi, HalfspacePolytope, ImplicitSumSet, PolytopeError, CONTAINMENT_SLACK,
    INVARIANT_SET_MAX_ITER,
};
use crate::solver::{
    solve_qcqp, ConvexProgram, LinearConstraints, QuadForm, SolveStatus, SolverError,
    FEASIBILITY_TOL,
};

/// Tolerance for the pointwise membership checks that gate a warmstart.
/// Looser than the solver's feasibility tolerance because the measured
/// disturbance is only known up to solver accuracy.
pub const WARMSTART_TOL: f64 = 1e-6;

/// Tolerance for pointwise set membership in switching decisions.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Residual bound for the terminal-weight identity
/// `A_K^T P A_K - P + Q + K^T R K = 0`.
const TERMINAL_IDENTITY_TOL: f64 = 1e-8;

/// Version tag of the serialized design artifact.
pub const DESIGN_ARTIFACT_VERSION: &str = "psf-design-v1";

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("design is infeasible: {0}")]
    DesignInfeasible(String),
    #[error("warmstart is not feasible at the current state: {0}")]
    WarmstartInfeasible(String),
    #[error("no feasible input sequence exists from the initial state")]
    InitialStateInfeasible,
    #[error("design artifact version {found} is not supported (expected {expected})")]
    ArtifactVersion { found: String, expected: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    ControlMath(#[from] ControlMathError),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
}

/// Numerical evidence recorded at design time. Nonpositive slacks certify
/// the corresponding containment; residuals are inf-norms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignCertificates {
    /// Residual of `A_K^T P A_K - P + Q + K^T R K = 0`, the identity that
    /// makes the terminal weight telescope exactly.
    pub terminal_identity_residual: f64,
    /// Inf-norm gap between the Riccati solution and the Lyapunov-equation
    /// route to the terminal weight, relative to its magnitude.
    pub terminal_weight_cross_check: f64,
    /// Worst slack of `A_K Xf + W` inside the invariant set `Xf`.
    pub invariant_set_slack: f64,
    /// Worst slack of `K Xf` inside the input set.
    pub invariant_inputs_slack: f64,
    /// Worst slack of `A_K Zf + A_K^N W` inside the terminal set `Zf`.
    pub terminal_set_slack: f64,
    /// Worst slack of the terminal set inside the last tightened state set.
    pub terminal_nesting_slack: f64,
    /// Spectral radius of the closed loop `A + B K`.
    pub closed_loop_radius: f64,
}

/// Everything the online filter needs, produced by [`design_filter`] and
/// serializable as a versioned JSON artifact. Immutable once built.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "DesignArtifact", into = "DesignArtifact")]
pub struct FilterDesign {
    pub system: LinearSystem,
    /// Stabilizing feedback `u = K x`.
    pub gain: DMatrix<f64>,
    /// Stage weights plus the terminal weight (the feedback's cost-to-go).
    pub costs: CostMatrices,
    pub horizon: usize,
    /// Decrease-relaxation knob: 0 enforces the full stage-cost decrease,
    /// values in (0, 1) a fraction of it, and values >= 1 relax the bound
    /// by an additive constant instead (pure safety filtering).
    pub rho: f64,
    pub disturbance: HalfspacePolytope,
    pub state_set: HalfspacePolytope,
    pub input_set: HalfspacePolytope,
    /// Tube-tightened state sets per step; entry 0 is the raw state set.
    pub tightened_states: Vec<HalfspacePolytope>,
    /// Tube-tightened input sets per step; entry 0 is the raw input set.
    pub tightened_inputs: Vec<HalfspacePolytope>,
    /// Robustly invariant region inside the state set with feasible
    /// feedback inputs.
    pub invariant_set: HalfspacePolytope,
    /// Terminal constraint for the optimization: the invariant set
    /// tightened by the full-horizon tube.
    pub terminal_set: HalfspacePolytope,
    pub certificates: DesignCertificates,
}

/// How a filter step obtained its input sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    /// Solver converged to the projection optimum.
    Optimal,
    /// Solver returned a feasible improvement without a convergence
    /// certificate.
    Suboptimal,
    /// Solver made no progress; the warmstart itself was applied.
    Fallback,
}

impl StepStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StepStatus::Optimal => "optimal",
            StepStatus::Suboptimal => "suboptimal",
            StepStatus::Fallback => "fallback",
        }
    }
}

/// Result of one online filtering step.
#[derive(Debug, Clone)]
pub struct FilterStep {
    /// Input to apply now (first entry of `sequence`).
    pub applied: DVector<f64>,
    /// Full feasible input sequence backing the applied input.
    pub sequence: Vec<DVector<f64>>,
    pub status: StepStatus,
    /// Achieved projection objective `0.5 ||v_0 - u_proposed||^2`.
    pub objective: f64,
}

/// Stack a sequence of per-step inputs into one decision vector.
pub fn stack_sequence(seq: &[DVector<f64>]) -> DVector<f64> {
    let total: usize = seq.iter().map(|v| v.len()).sum();
    let mut out = DVector::zeros(total);
    let mut at = 0;
    for v in seq {
        out.rows_mut(at, v.len()).copy_from(v);
        at += v.len();
    }
    out
}

/// Split a stacked decision vector into per-step inputs.
pub fn unstack_sequence(v: &DVector<f64>, input_dim: usize) -> Vec<DVector<f64>> {
    assert!(input_dim > 0 && v.len() % input_dim == 0);
    (0..v.len() / input_dim)
        .map(|i| v.rows(i * input_dim, input_dim).into_owned())
        .collect()
}

impl FilterDesign {
    pub fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.system.input_dim()
    }

    /// Closed-loop matrix `A + B K`.
    pub fn closed_loop(&self) -> DMatrix<f64> {
        self.system.closed_loop(&self.gain)
    }

    fn check_state(&self, x: &DVector<f64>, what: &str) -> Result<(), FilterError> {
        if x.len() != self.state_dim() {
            return Err(FilterError::Dimension(format!(
                "{what} has {} entries, state dimension is {}",
                x.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    fn check_sequence(&self, seq: &[DVector<f64>], what: &str) -> Result<(), FilterError> {
        if seq.len() != self.horizon {
            return Err(FilterError::Dimension(format!(
                "{what} has {} entries, horizon is {}",
                seq.len(),
                self.horizon
            )));
        }
        for (i, u) in seq.iter().enumerate() {
            if u.len() != self.input_dim() {
                return Err(FilterError::Dimension(format!(
                    "{what}[{i}] has {} entries, input dimension is {}",
                    u.len(),
                    self.input_dim()
                )));
            }
        }
        Ok(())
    }

    /// Nominal forward simulation: states `z_0 = x` through `z_k` under the
    /// first `k` inputs of `useq`.
    pub fn rollout(
        &self,
        x: &DVector<f64>,
        useq: &[DVector<f64>],
        k: usize,
    ) -> Result<Vec<DVector<f64>>, FilterError> {
        self.check_state(x, "rollout state")?;
        if useq.len() < k {
            return Err(FilterError::Dimension(format!(
                "rollout needs {k} inputs, got {}",
                useq.len()
            )));
        }
        let mut states = Vec::with_capacity(k + 1);
        states.push(x.clone());
        for u in useq.iter().take(k) {
            let z = states.last().unwrap();
            states.push(&self.system.a * z + &self.system.b * u);
        }
        Ok(states)
    }

    /// Implicit Lyapunov function: stage costs along the nominal rollout of
    /// `useq` from `x`, plus the terminal cost. Zero exactly at the origin
    /// with a zero sequence.
    pub fn lyapunov_value(
        &self,
        x: &DVector<f64>,
        useq: &[DVector<f64>],
    ) -> Result<f64, FilterError> {
        self.check_sequence(useq, "input sequence")?;
        let states = self.rollout(x, useq, self.horizon)?;
        let mut v = 0.0;
        for i in 0..self.horizon {
            v += self.costs.stage(&states[i], &useq[i]);
        }
        Ok(v + self.costs.terminal(&states[self.horizon]))
    }

    /// Shifted candidate sequence at the measured successor `x_plus` after
    /// disturbance `w`: drop the first input, append terminal feedback, and
    /// correct every entry by feedback on the propagated disturbance.
    ///
    /// The terminal entry needs the predecessor rollout's final state; with
    /// a linear model that state is recovered exactly by removing `w` from
    /// `x_plus` and re-rolling the shifted inputs, so no cache is carried.
    pub fn xi_c(
        &self,
        x_plus: &DVector<f64>,
        vseq: &[DVector<f64>],
        w: &DVector<f64>,
    ) -> Result<Vec<DVector<f64>>, FilterError> {
        self.check_state(x_plus, "successor state")?;
        self.check_state(w, "disturbance")?;
        self.check_sequence(vseq, "shift source sequence")?;
        let n = self.horizon;
        let a_closed = self.closed_loop();

        // Nominal successor and the predecessor rollout's terminal state.
        let nominal = x_plus - w;
        let mut z = nominal;
        for v in vseq.iter().skip(1) {
            z = &self.system.a * &z + &self.system.b * v;
        }

        let mut out = Vec::with_capacity(n);
        let mut w_prop = w.clone();
        for (i, v) in vseq.iter().enumerate().skip(1) {
            let _ = i;
            out.push(v + &self.gain * &w_prop);
            w_prop = &a_closed * w_prop;
        }
        out.push(&self.gain * &z + &self.gain * &w_prop);
        Ok(out)
    }

    /// Terminal candidate: pure feedback rollout `u_i = K (A + B K)^i x`.
    pub fn xi_f(&self, x: &DVector<f64>) -> Result<Vec<DVector<f64>>, FilterError> {
        self.check_state(x, "terminal candidate state")?;
        let a_closed = self.closed_loop();
        let mut out = Vec::with_capacity(self.horizon);
        let mut z = x.clone();
        for _ in 0..self.horizon {
            out.push(&self.gain * &z);
            z = &a_closed * z;
        }
        Ok(out)
    }

    /// Candidate switch: take the terminal-feedback candidate whenever the
    /// successor lies in the terminal set and that candidate is no worse in
    /// Lyapunov value; otherwise keep the shifted candidate.
    pub fn xi_switch(
        &self,
        x_plus: &DVector<f64>,
        vseq: &[DVector<f64>],
        w: &DVector<f64>,
    ) -> Result<Vec<DVector<f64>>, FilterError> {
        let shifted = self.xi_c(x_plus, vseq, w)?;
        if self.terminal_set.contains_point(x_plus, MEMBERSHIP_TOL) {
            let terminal = self.xi_f(x_plus)?;
            if self.lyapunov_value(x_plus, &terminal)?
                <= self.lyapunov_value(x_plus, &shifted)?
            {
                return Ok(terminal);
            }
        }
        Ok(shifted)
    }

    /// Warmstart for the next step. Same as [`Self::xi_switch`]; named for
    /// its role in the online loop.
    pub fn advance_warmstart(
        &self,
        x_next: &DVector<f64>,
        vseq: &[DVector<f64>],
        w: &DVector<f64>,
    ) -> Result<Vec<DVector<f64>>, FilterError> {
        self.xi_switch(x_next, vseq, w)
    }

    /// Right-hand side of the decrease constraint: the warmstart's Lyapunov
    /// value minus the enforced fraction of its first stage cost, or plus a
    /// plain constant when the decrease is relaxed entirely.
    pub fn decrease_bound(
        &self,
        x: &DVector<f64>,
        warmstart: &[DVector<f64>],
    ) -> Result<f64, FilterError> {
        let v = self.lyapunov_value(x, warmstart)?;
        if self.rho < 1.0 {
            Ok(v - (1.0 - self.rho) * self.costs.stage(x, &warmstart[0]))
        } else {
            Ok(v + self.rho)
        }
    }

    /// Affine maps `z_i(v) = offset_i + map_i v` of the rollout states as
    /// functions of the stacked input vector.
    fn rollout_maps(&self, x: &DVector<f64>) -> (Vec<DVector<f64>>, Vec<DMatrix<f64>>) {
        let n = self.state_dim();
        let m = self.input_dim();
        let width = self.horizon * m;
        let mut offsets = Vec::with_capacity(self.horizon + 1);
        let mut maps = Vec::with_capacity(self.horizon + 1);
        offsets.push(x.clone());
        maps.push(DMatrix::zeros(n, width));
        for i in 0..self.horizon {
            let off = &self.system.a * &offsets[i];
            let mut map = &self.system.a * &maps[i];
            map.view_mut((0, i * m), (n, m)).copy_from(&self.system.b);
            offsets.push(off);
            maps.push(map);
        }
        (offsets, maps)
    }

    /// The Lyapunov function `V(x, .)` condensed to a quadratic in the
    /// stacked input vector. Used as the objective when searching for an
    /// initial warmstart and as a cross-check of `lyapunov_value`.
    pub fn condensed_lyapunov(&self, x: &DVector<f64>) -> Result<QuadForm, FilterError> {
        self.check_state(x, "condensing state")?;
        let m = self.input_dim();
        let width = self.horizon * m;
        let (offsets, maps) = self.rollout_maps(x);
        let mut h = DMatrix::zeros(width, width);
        let mut g = DVector::zeros(width);
        let mut c = 0.0;
        for i in 0..self.horizon {
            accumulate_quadratic(
                &mut h,
                &mut g,
                &mut c,
                &self.costs.state_weight,
                &offsets[i],
                &maps[i],
            );
            h.view_mut((i * m, i * m), (m, m))
                .iadd(&self.costs.input_weight);
        }
        accumulate_quadratic(
            &mut h,
            &mut g,
            &mut c,
            &self.costs.terminal_weight,
            &offsets[self.horizon],
            &maps[self.horizon],
        );
        Ok(QuadForm::new(h, g, c)?)
    }

    /// Lyapunov value of the nominal shifted candidate, condensed to a
    /// quadratic in the stacked input vector. This is the left-hand side of
    /// the decrease constraint.
    fn shifted_lyapunov_quadform(&self, x: &DVector<f64>) -> Result<QuadForm, FilterError> {
        let m = self.input_dim();
        let width = self.horizon * m;
        let (offsets, maps) = self.rollout_maps(x);
        let mut h = DMatrix::zeros(width, width);
        let mut g = DVector::zeros(width);
        let mut c = 0.0;
        for i in 1..self.horizon {
            accumulate_quadratic(
                &mut h,
                &mut g,
                &mut c,
                &self.costs.state_weight,
                &offsets[i],
                &maps[i],
            );
            h.view_mut((i * m, i * m), (m, m))
                .iadd(&self.costs.input_weight);
        }
        // Terminal state weight of the shifted sequence: stage cost of the
        // terminal feedback plus the cost-to-go of its successor. By the
        // terminal identity this equals the terminal weight itself; it is
        // assembled from first principles so the identity stays a checked
        // certificate rather than an assumption.
        let a_closed = self.closed_loop();
        let krk = self.gain.transpose() * &self.costs.input_weight * &self.gain;
        let effective = &self.costs.state_weight
            + krk
            + a_closed.transpose() * &self.costs.terminal_weight * &a_closed;
        accumulate_quadratic(
            &mut h,
            &mut g,
            &mut c,
            &effective,
            &offsets[self.horizon],
            &maps[self.horizon],
        );
        Ok(QuadForm::new(h, g, c)?)
    }

    /// Affine membership rows of the tightened sets over the stacked input
    /// vector: inputs per step, states along the rollout, terminal set at
    /// the end.
    fn membership_rows(&self, x: &DVector<f64>) -> Result<LinearConstraints, FilterError> {
        let m = self.input_dim();
        let width = self.horizon * m;
        let (offsets, maps) = self.rollout_maps(x);

        let mut total_rows = 0;
        for i in 0..self.horizon {
            total_rows += self.tightened_inputs[i].num_rows();
            total_rows += self.tightened_states[i].num_rows();
        }
        total_rows += self.terminal_set.num_rows();

        let mut a = DMatrix::zeros(total_rows, width);
        let mut b = DVector::zeros(total_rows);
        let mut at = 0;
        for i in 0..self.horizon {
            let (au, bu) = self.tightened_inputs[i].rows();
            let r = self.tightened_inputs[i].num_rows();
            a.view_mut((at, i * m), (r, m)).copy_from(au);
            b.rows_mut(at, r).copy_from(bu);
            at += r;

            let (ax, bx) = self.tightened_states[i].rows();
            let r = self.tightened_states[i].num_rows();
            a.view_mut((at, 0), (r, width)).copy_from(&(ax * &maps[i]));
            b.rows_mut(at, r).copy_from(&(bx - ax * &offsets[i]));
            at += r;
        }
        let (az, bz) = self.terminal_set.rows();
        let r = self.terminal_set.num_rows();
        a.view_mut((at, 0), (r, width))
            .copy_from(&(az * &maps[self.horizon]));
        b.rows_mut(at, r)
            .copy_from(&(bz - az * &offsets[self.horizon]));

        Ok(LinearConstraints::new(a, b)?)
    }

    /// Condensed per-step program: minimize the distance of the first input
    /// to the proposal, over sequences that keep every tightened membership
    /// and decrease the Lyapunov function.
    pub fn build_problem(
        &self,
        x: &DVector<f64>,
        warmstart: &[DVector<f64>],
        u_proposed: &DVector<f64>,
    ) -> Result<ConvexProgram, FilterError> {
        self.check_state(x, "current state")?;
        self.check_sequence(warmstart, "warmstart")?;
        if u_proposed.len() != self.input_dim() {
            return Err(FilterError::Dimension(
                "proposed input has the wrong length".into(),
            ));
        }
        debug_assert!(
            self.check_warmstart(x, warmstart).is_ok(),
            "build_problem called with an infeasible warmstart"
        );
        let m = self.input_dim();
        let width = self.horizon * m;

        // Objective 0.5 ||v_0 - u_proposed||^2: squared distance has the
        // same minimizer as the distance itself and stays smooth.
        let mut h = DMatrix::zeros(width, width);
        h.view_mut((0, 0), (m, m))
            .copy_from(&DMatrix::identity(m, m));
        let mut g = DVector::zeros(width);
        g.rows_mut(0, m).copy_from(&(-u_proposed));
        let objective = QuadForm::new(h, g, 0.5 * u_proposed.norm_squared())?;

        let ineq = self.membership_rows(x)?;
        let lhs = self.shifted_lyapunov_quadform(x)?;
        let rhs = self.decrease_bound(x, warmstart)?;
        let decrease = QuadForm::new(lhs.h, lhs.g, lhs.c - rhs)?;

        Ok(ConvexProgram::new(objective, ineq, None, vec![decrease])?)
    }

    /// Verify by direct rollout that `warmstart` satisfies every tightened
    /// membership from `x`. This is the runtime form of the theoretical
    /// invariant that warmstarts stay feasible; a failure points at a
    /// design bug or an unmodeled disturbance upstream.
    pub fn check_warmstart(
        &self,
        x: &DVector<f64>,
        warmstart: &[DVector<f64>],
    ) -> Result<(), FilterError> {
        self.check_state(x, "current state")?;
        self.check_sequence(warmstart, "warmstart")?;
        let states = self.rollout(x, warmstart, self.horizon)?;
        for i in 0..self.horizon {
            let sv = self.tightened_states[i].violation(&states[i]);
            if sv > WARMSTART_TOL {
                return Err(FilterError::WarmstartInfeasible(format!(
                    "state {i} violates its tightened set by {sv:.3e}"
                )));
            }
            let uv = self.tightened_inputs[i].violation(&warmstart[i]);
            if uv > WARMSTART_TOL {
                return Err(FilterError::WarmstartInfeasible(format!(
                    "input {i} violates its tightened set by {uv:.3e}"
                )));
            }
        }
        let tv = self.terminal_set.violation(&states[self.horizon]);
        if tv > WARMSTART_TOL {
            return Err(FilterError::WarmstartInfeasible(format!(
                "terminal state violates the terminal set by {tv:.3e}"
            )));
        }
        Ok(())
    }

    /// One online filtering step: project `u_proposed` onto the safe input
    /// set, warmstarted by `warmstart`. Never returns anything worse than
    /// the warmstart; solver trouble degrades to applying the warmstart
    /// itself with [`StepStatus::Fallback`].
    pub fn filter_step(
        &self,
        x: &DVector<f64>,
        warmstart: &[DVector<f64>],
        u_proposed: &DVector<f64>,
    ) -> Result<FilterStep, FilterError> {
        self.check_warmstart(x, warmstart)?;
        let prog = self.build_problem(x, warmstart, u_proposed)?;
        let init = stack_sequence(warmstart);
        let sol = solve_qcqp(&prog, Some(&init))?;

        let fallback = |objective: f64| FilterStep {
            applied: warmstart[0].clone(),
            sequence: warmstart.to_vec(),
            status: StepStatus::Fallback,
            objective,
        };
        let step = match sol.status {
            SolveStatus::Optimal | SolveStatus::Feasible => {
                if prog.max_violation(&sol.x) > 10.0 * FEASIBILITY_TOL {
                    fallback(prog.objective.value(&init))
                } else if sol.status == SolveStatus::Feasible
                    && (&sol.x - &init).amax() <= 1e-12
                {
                    fallback(sol.objective_value)
                } else {
                    let sequence = unstack_sequence(&sol.x, self.input_dim());
                    FilterStep {
                        applied: sequence[0].clone(),
                        sequence,
                        status: if sol.status == SolveStatus::Optimal {
                            StepStatus::Optimal
                        } else {
                            StepStatus::Suboptimal
                        },
                        objective: sol.objective_value,
                    }
                }
            }
            // With a feasible warmstart these are numerical artifacts; the
            // warmstart is the guaranteed-safe answer.
            SolveStatus::Infeasible | SolveStatus::NumericalFailure => {
                fallback(prog.objective.value(&init))
            }
        };
        Ok(step)
    }

    /// Feasible warmstart for the first step: minimize the Lyapunov value
    /// over the membership constraints, without the decrease constraint.
    pub fn initial_warmstart(&self, x0: &DVector<f64>) -> Result<Vec<DVector<f64>>, FilterError> {
        self.check_state(x0, "initial state")?;
        let objective = self.condensed_lyapunov(x0)?;
        let ineq = self.membership_rows(x0)?;
        let prog = ConvexProgram::new(objective, ineq, None, Vec::new())?;
        let sol = solve_qcqp(&prog, None)?;
        match sol.status {
            SolveStatus::Optimal | SolveStatus::Feasible => {
                if sol.max_violation > FEASIBILITY_TOL {
                    return Err(FilterError::InitialStateInfeasible);
                }
                Ok(unstack_sequence(&sol.x, self.input_dim()))
            }
            SolveStatus::Infeasible => Err(FilterError::InitialStateInfeasible),
            SolveStatus::NumericalFailure => Err(FilterError::Solver(SolverError::Numerical(
                "initial warmstart solve failed".into(),
            ))),
        }
    }
}

/// Add `0.5 (off + map v)^T weight (off + map v)` into the accumulating
/// quadratic `(h, g, c)`.
fn accumulate_quadratic(
    h: &mut DMatrix<f64>,
    g: &mut DVector<f64>,
    c: &mut f64,
    weight: &DMatrix<f64>,
    off: &DVector<f64>,
    map: &DMatrix<f64>,
) {
    let w_map = weight * map;
    *h += map.transpose() * &w_map;
    *g += w_map.transpose() * off;
    *c += 0.5 * (off.transpose() * weight * off)[(0, 0)];
}

/// Offline design: Riccati feedback and terminal weight, tube tightenings,
/// invariant terminal region, and the certificate block. Fails loudly when
/// any certificate does not hold.
#[allow(clippy::too_many_arguments)]
pub fn design_filter(
    system: &LinearSystem,
    state_weight: &DMatrix<f64>,
    input_weight: &DMatrix<f64>,
    state_set: &HalfspacePolytope,
    input_set: &HalfspacePolytope,
    disturbance: &HalfspacePolytope,
    horizon: usize,
    rho: f64,
) -> Result<FilterDesign, FilterError> {
    let n = system.state_dim();
    let m = system.input_dim();
    if horizon == 0 {
        return Err(FilterError::DesignInfeasible("horizon must be positive".into()));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(FilterError::DesignInfeasible(format!(
            "decrease parameter must be a finite nonnegative number, got {rho}"
        )));
    }
    if state_set.dim() != n || disturbance.dim() != n || input_set.dim() != m {
        return Err(FilterError::Dimension(
            "constraint set dimensions do not match the system".into(),
        ));
    }
    if !is_positive_semidefinite(state_weight) {
        return Err(FilterError::DesignInfeasible(
            "state weight must be positive semidefinite".into(),
        ));
    }
    if !is_positive_definite(input_weight) {
        return Err(FilterError::DesignInfeasible(
            "input weight must be positive definite".into(),
        ));
    }
    // The origin must be strictly inside the operating sets; the
    // disturbance set may be the singleton {0}.
    for (name, set, strict) in [
        ("state set", state_set, true),
        ("input set", input_set, true),
        ("disturbance set", disturbance, false),
    ] {
        let (_, b) = set.rows();
        let min_b = b.min();
        if min_b < 0.0 || (strict && min_b <= 0.0) {
            return Err(FilterError::DesignInfeasible(format!(
                "the origin must lie {} {name}",
                if strict { "strictly inside the" } else { "in the" }
            )));
        }
    }

    let (p_riccati, gain) = solve_dare(system, state_weight, input_weight)?;
    let a_closed = system.closed_loop(&gain);
    let krk = gain.transpose() * input_weight * &gain;
    // Terminal weight: cost-to-go of the feedback, solved as a Lyapunov
    // equation and cross-checked against the Riccati fixed point.
    let terminal_weight = solve_discrete_lyapunov(&a_closed, &(state_weight + &krk))?;
    let identity_residual = (a_closed.transpose() * &terminal_weight * &a_closed
        - &terminal_weight
        + state_weight
        + &krk)
        .amax();
    let cross_check =
        (&terminal_weight - &p_riccati).amax() / (1.0 + terminal_weight.amax());
    if identity_residual > TERMINAL_IDENTITY_TOL {
        return Err(FilterError::DesignInfeasible(format!(
            "terminal weight identity residual {identity_residual:.3e} exceeds tolerance"
        )));
    }

    // Disturbance tubes E_i = sum_{j<i} A_K^j W, represented implicitly
    // through support functions; the input tube maps each term through the
    // feedback gain.
    let mut tube = ImplicitSumSet::zero(n);
    let mut input_tube = ImplicitSumSet::zero(m);
    let mut power = DMatrix::identity(n, n);
    let mut tightened_states = Vec::with_capacity(horizon);
    let mut tightened_inputs = Vec::with_capacity(horizon);
    tightened_states.push(state_set.clone());
    tightened_inputs.push(input_set.clone());
    for i in 1..=horizon {
        tube.push_term(power.clone(), disturbance.clone())?;
        input_tube.push_term(&gain * &power, disturbance.clone())?;
        power = &a_closed * power;
        if i == horizon {
            break;
        }
        let tx = state_set.tighten(&tube).map_err(|e| match e {
            PolytopeError::TightenedToEmpty => FilterError::DesignInfeasible(format!(
                "state set tightened to empty at step {i}: disturbance too large or horizon too long"
            )),
            other => FilterError::Polytope(other),
        })?;
        let tu = input_set.tighten(&input_tube).map_err(|e| match e {
            PolytopeError::TightenedToEmpty => FilterError::DesignInfeasible(format!(
                "input set tightened to empty at step {i}"
            )),
            other => FilterError::Polytope(other),
        })?;
        tightened_states.push(tx);
        tightened_inputs.push(tu);
    }
    // After the loop `tube` is the full-horizon tube E_N and `power` is
    // A_K^N.

    // Invariant region: maximal robust positively invariant subset of the
    // states whose feedback input is admissible.
    let feedback_ok = input_set.linear_preimage(&gain)?;
    let domain = state_set.intersect(&feedback_ok)?;
    let invariant_set =
        max_rpi(&a_closed, &domain, disturbance, INVARIANT_SET_MAX_ITER).map_err(|e| match e {
            PolytopeError::EmptySet => FilterError::DesignInfeasible(
                "no robustly invariant region exists inside the constraints".into(),
            ),
            PolytopeError::NotConverged(k) => FilterError::DesignInfeasible(format!(
                "invariant region iteration did not settle within {k} rounds"
            )),
            other => FilterError::Polytope(other),
        })?;
    let terminal_set = invariant_set.tighten(&tube).map_err(|e| match e {
        PolytopeError::TightenedToEmpty => FilterError::DesignInfeasible(
            "terminal set is empty: disturbance too large or horizon too long".into(),
        ),
        other => FilterError::Polytope(other),
    })?;
    if terminal_set.is_empty()? {
        return Err(FilterError::DesignInfeasible("terminal set is empty".into()));
    }
    if !terminal_set.contains_point(&DVector::zeros(n), MEMBERSHIP_TOL) {
        return Err(FilterError::DesignInfeasible(
            "terminal set does not contain the origin".into(),
        ));
    }

    // Certificates. Each one is a containment the closed-loop guarantees
    // rely on; none is trusted from construction alone.
    let mut one_step = ImplicitSumSet::mapped(a_closed.clone(), invariant_set.clone())?;
    one_step.push_term(DMatrix::identity(n, n), disturbance.clone())?;
    let (inv_ok, invariant_set_slack) = invariant_set.contains_set(&one_step)?;

    let (inputs_ok, invariant_inputs_slack) =
        input_set.contains_set(&ImplicitSumSet::mapped(gain.clone(), invariant_set.clone())?)?;

    let mut terminal_step = ImplicitSumSet::mapped(a_closed.clone(), terminal_set.clone())?;
    terminal_step.push_term(power.clone(), disturbance.clone())?;
    let (term_ok, terminal_set_slack) = terminal_set.contains_set(&terminal_step)?;

    let (nest_ok, terminal_nesting_slack) =
        tightened_states[horizon - 1].contains_set(&terminal_set)?;

    for (name, ok, slack) in [
        ("invariant region one-step", inv_ok, invariant_set_slack),
        ("invariant region inputs", inputs_ok, invariant_inputs_slack),
        ("terminal set one-step", term_ok, terminal_set_slack),
        ("terminal nesting", nest_ok, terminal_nesting_slack),
    ] {
        if !ok {
            return Err(FilterError::DesignInfeasible(format!(
                "{name} certificate failed with slack {slack:.3e}"
            )));
        }
    }
    // Tightening must be monotone row-wise: every set shares its parent's
    // row directions, so the bound vectors compare directly.
    for i in 1..horizon {
        let (_, prev) = tightened_states[i - 1].rows();
        let (_, cur) = tightened_states[i].rows();
        let (_, prev_u) = tightened_inputs[i - 1].rows();
        let (_, cur_u) = tightened_inputs[i].rows();
        let grow = (cur - prev).max().max((cur_u - prev_u).max());
        if grow > CONTAINMENT_SLACK {
            return Err(FilterError::DesignInfeasible(format!(
                "tube tightening is not monotone at step {i} (grew by {grow:.3e})"
            )));
        }
    }
    for (i, s) in tightened_states.iter().enumerate() {
        if s.is_empty()? {
            return Err(FilterError::DesignInfeasible(format!(
                "tightened state set {i} is empty"
            )));
        }
    }
    for (i, s) in tightened_inputs.iter().enumerate() {
        if s.is_empty()? {
            return Err(FilterError::DesignInfeasible(format!(
                "tightened input set {i} is empty"
            )));
        }
    }

    let certificates = DesignCertificates {
        terminal_identity_residual: identity_residual,
        terminal_weight_cross_check: cross_check,
        invariant_set_slack,
        invariant_inputs_slack,
        terminal_set_slack,
        terminal_nesting_slack,
        closed_loop_radius: spectral_radius(&a_closed),
    };

    Ok(FilterDesign {
        system: system.clone(),
        gain,
        costs: CostMatrices {
            state_weight: state_weight.clone(),
            input_weight: input_weight.clone(),
            terminal_weight,
        },
        horizon,
        rho,
        disturbance: disturbance.clone(),
        state_set: state_set.clone(),
        input_set: input_set.clone(),
        tightened_states,
        tightened_inputs,
        invariant_set,
        terminal_set,
        certificates,
    })
}

// ---------------------------------------------------------------------------
// Serialized artifact
// ---------------------------------------------------------------------------

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, FilterError> {
    if rows.is_empty() {
        return Err(FilterError::Dimension(format!("{what} has no rows")));
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(FilterError::Dimension(format!(
            "{what} rows are ragged or empty"
        )));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        cols,
        rows.iter().flatten().copied(),
    ))
}

/// On-disk JSON form of a [`FilterDesign`]: matrices as row-major nested
/// arrays, sets in halfspace form, plus the certificate block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignArtifact {
    version: String,
    state_matrix: Vec<Vec<f64>>,
    input_matrix: Vec<Vec<f64>>,
    gain: Vec<Vec<f64>>,
    state_weight: Vec<Vec<f64>>,
    input_weight: Vec<Vec<f64>>,
    terminal_weight: Vec<Vec<f64>>,
    horizon: usize,
    rho: f64,
    disturbance: HalfspacePolytope,
    state_set: HalfspacePolytope,
    input_set: HalfspacePolytope,
    tightened_states: Vec<HalfspacePolytope>,
    tightened_inputs: Vec<HalfspacePolytope>,
    invariant_set: HalfspacePolytope,
    terminal_set: HalfspacePolytope,
    certificates: DesignCertificates,
}

impl From<FilterDesign> for DesignArtifact {
    fn from(d: FilterDesign) -> Self {
        Self {
            version: DESIGN_ARTIFACT_VERSION.to_string(),
            state_matrix: matrix_rows(&d.system.a),
            input_matrix: matrix_rows(&d.system.b),
            gain: matrix_rows(&d.gain),
            state_weight: matrix_rows(&d.costs.state_weight),
            input_weight: matrix_rows(&d.costs.input_weight),
            terminal_weight: matrix_rows(&d.costs.terminal_weight),
            horizon: d.horizon,
            rho: d.rho,
            disturbance: d.disturbance,
            state_set: d.state_set,
            input_set: d.input_set,
            tightened_states: d.tightened_states,
            tightened_inputs: d.tightened_inputs,
            invariant_set: d.invariant_set,
            terminal_set: d.terminal_set,
            certificates: d.certificates,
        }
    }
}

impl TryFrom<DesignArtifact> for FilterDesign {
    type Error = FilterError;

    fn try_from(a: DesignArtifact) -> Result<Self, FilterError> {
        if a.version != DESIGN_ARTIFACT_VERSION {
            return Err(FilterError::ArtifactVersion {
                found: a.version,
                expected: DESIGN_ARTIFACT_VERSION.to_string(),
            });
        }
        let system = LinearSystem::new(
            rows_matrix(&a.state_matrix, "state matrix")?,
            rows_matrix(&a.input_matrix, "input matrix")?,
        )?;
        let n = system.state_dim();
        let m = system.input_dim();
        let gain = rows_matrix(&a.gain, "gain")?;
        if gain.nrows() != m || gain.ncols() != n {
            return Err(FilterError::Dimension("gain has the wrong shape".into()));
        }
        let costs = CostMatrices {
            state_weight: rows_matrix(&a.state_weight, "state weight")?,
            input_weight: rows_matrix(&a.input_weight, "input weight")?,
            terminal_weight: rows_matrix(&a.terminal_weight, "terminal weight")?,
        };
        if a.horizon == 0
            || a.tightened_states.len() != a.horizon
            || a.tightened_inputs.len() != a.horizon
        {
            return Err(FilterError::Dimension(
                "tightened set counts do not match the horizon".into(),
            ));
        }
        if a.disturbance.dim() != n
            || a.state_set.dim() != n
            || a.input_set.dim() != m
            || a.invariant_set.dim() != n
            || a.terminal_set.dim() != n
        {
            return Err(FilterError::Dimension(
                "artifact set dimensions do not match the system".into(),
            ));
        }
        // Re-verify the cheap identity; the LP certificates were checked at
        // design time and travel with the artifact.
        let a_closed = system.closed_loop(&gain);
        let krk = gain.transpose() * &costs.input_weight * &gain;
        let residual = (a_closed.transpose() * &costs.terminal_weight * &a_closed
            - &costs.terminal_weight
            + &costs.state_weight
            + krk)
            .amax();
        if residual > TERMINAL_IDENTITY_TOL {
            return Err(FilterError::DesignInfeasible(format!(
                "artifact terminal weight identity residual {residual:.3e}"
            )));
        }
        Ok(FilterDesign {
            system,
            gain,
            costs,
            horizon: a.horizon,
            rho: a.rho,
            disturbance: a.disturbance,
            state_set: a.state_set,
            input_set: a.input_set,
            tightened_states: a.tightened_states,
            tightened_inputs: a.tightened_inputs,
            invariant_set: a.invariant_set,
            terminal_set: a.terminal_set,
            certificates: a.certificates,
        })
    }
}
