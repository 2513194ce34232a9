//! Discrete-time control algebra: Riccati and Lyapunov solvers, numerical
//! linearization, and the small system/cost containers shared by the design
//! and the online filter.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Convergence tolerance for the Riccati fixed point (relative, on the
/// largest entry change between iterates).
pub const DARE_TOL: f64 = 1e-10;
pub const DARE_MAX_ITER: usize = 100_000;
/// Residual tolerance accepted from the Lyapunov solve.
pub const LYAPUNOV_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ControlMathError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0} must be positive semidefinite")]
    NotPsd(&'static str),
    #[error("{0} must be positive definite")]
    NotPd(&'static str),
    #[error("Riccati iteration did not converge within {0} iterations")]
    NotConverged(usize),
    #[error("closed loop is not contractive: spectral radius {0}")]
    NotContractive(f64),
    #[error("solution residual {0:.3e} exceeds tolerance")]
    Residual(f64),
    #[error("linear solve failed: {0}")]
    Singular(String),
}

/// Discrete-time linear dynamics `x+ = A x + B u (+ w)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, ControlMathError> {
        if !a.is_square() {
            return Err(ControlMathError::Dimension(
                "state matrix must be square".into(),
            ));
        }
        if b.nrows() != a.nrows() {
            return Err(ControlMathError::Dimension(format!(
                "input matrix has {} rows for {} states",
                b.nrows(),
                a.nrows()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + w
    }

    /// Closed-loop matrix `A + B K` for feedback `u = K x`.
    pub fn closed_loop(&self, gain: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a + &self.b * gain
    }
}

/// Quadratic cost data: stage `l(x, u) = 0.5 x^T Q x + 0.5 u^T R u` and
/// terminal `m(x) = 0.5 x^T P x`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostMatrices {
    pub state_weight: DMatrix<f64>,
    pub input_weight: DMatrix<f64>,
    pub terminal_weight: DMatrix<f64>,
}

impl CostMatrices {
    pub fn stage(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.state_weight * x)[(0, 0)]
            + 0.5 * (u.transpose() * &self.input_weight * u)[(0, 0)]
    }

    pub fn terminal(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.terminal_weight * x)[(0, 0)]
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.is_square() && nalgebra::Cholesky::new(m.clone()).is_some()
}

pub fn is_positive_semidefinite(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let sym = (m + m.transpose()) * 0.5;
    let eigs = sym.symmetric_eigenvalues();
    let scale = 1.0 + eigs.amax();
    eigs.iter().all(|&e| e >= -1e-10 * scale)
}

/// Infinite-horizon discrete-time LQR via the Riccati fixed point
///
/// ```text
/// P <- Q + A^T P A - A^T P B (R + B^T P B)^-1 B^T P A
/// ```
///
/// starting from `P = Q`, with the feedback convention `u = K x`,
/// `K = -(R + B^T P B)^-1 B^T P A`.
///
/// Postconditions checked before returning: the fixed-point residual is
/// below tolerance, the closed loop `A + B K` has spectral radius < 1, and
/// `P` is symmetric positive semidefinite.
pub fn solve_dare(
    sys: &LinearSystem,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ControlMathError> {
    let n = sys.state_dim();
    let m = sys.input_dim();
    if q.nrows() != n || q.ncols() != n {
        return Err(ControlMathError::Dimension(
            "state weight has wrong shape".into(),
        ));
    }
    if r.nrows() != m || r.ncols() != m {
        return Err(ControlMathError::Dimension(
            "input weight has wrong shape".into(),
        ));
    }
    if !is_positive_semidefinite(q) {
        return Err(ControlMathError::NotPsd("state weight"));
    }
    if !is_positive_definite(r) {
        return Err(ControlMathError::NotPd("input weight"));
    }

    let at = sys.a.transpose();
    let bt = sys.b.transpose();
    let mut p = q.clone();
    let mut converged = false;
    for _ in 0..DARE_MAX_ITER {
        let pb = &p * &sys.b;
        let gram = r + &bt * &pb;
        let gram_inv = gram
            .clone()
            .cholesky()
            .ok_or(ControlMathError::NotPd("input-channel Gram matrix"))?;
        let bpa = &bt * &p * &sys.a;
        let next = q + &at * &p * &sys.a - (&at * &pb) * gram_inv.solve(&bpa);
        let next = (&next + next.transpose()) * 0.5;
        let delta = (&next - &p).amax();
        let scale = 1.0 + next.amax();
        p = next;
        if delta <= DARE_TOL * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(ControlMathError::NotConverged(DARE_MAX_ITER));
    }

    let gram = r + &bt * &p * &sys.b;
    let gain = -gram
        .clone()
        .cholesky()
        .ok_or(ControlMathError::NotPd("input-channel Gram matrix"))?
        .solve(&(&bt * &p * &sys.a));

    // Fixed-point residual, closed-loop contraction, and symmetry checks.
    let residual = (&(q + &at * &p * &sys.a
        - (&at * &p * &sys.b) * gram.cholesky().unwrap().solve(&(&bt * &p * &sys.a)))
        - &p)
        .amax();
    if residual > 1e-6 * (1.0 + p.amax()) {
        return Err(ControlMathError::Residual(residual));
    }
    let rho = spectral_radius(&sys.closed_loop(&gain));
    if rho >= 1.0 {
        return Err(ControlMathError::NotContractive(rho));
    }
    if !is_positive_semidefinite(&p) {
        return Err(ControlMathError::NotPsd("Riccati solution"));
    }
    Ok((p, gain))
}

/// Solve the discrete Lyapunov equation `A^T P A - P = -Q_rhs` for a
/// contractive `A` by the Kronecker linear system
/// `(I - A^T (x) A^T) vec(P) = vec(Q_rhs)`.
///
/// The returned `P` is symmetrized; the equation residual is verified
/// against [`LYAPUNOV_TOL`] before returning.
pub fn solve_discrete_lyapunov(
    a: &DMatrix<f64>,
    q_rhs: &DMatrix<f64>,
) -> Result<DMatrix<f64>, ControlMathError> {
    if !a.is_square() || a.shape() != q_rhs.shape() {
        return Err(ControlMathError::Dimension(
            "Lyapunov inputs must be square and matched".into(),
        ));
    }
    let rho = spectral_radius(a);
    if rho >= 1.0 {
        return Err(ControlMathError::NotContractive(rho));
    }
    let n = a.nrows();
    let at = a.transpose();
    let kron = at.kronecker(&at);
    let system = DMatrix::identity(n * n, n * n) - kron;
    let rhs = DVector::from_iterator(n * n, q_rhs.iter().copied());
    let vec_p = system
        .full_piv_lu()
        .solve(&rhs)
        .ok_or_else(|| ControlMathError::Singular("Kronecker Lyapunov system".into()))?;
    let p = DMatrix::from_iterator(n, n, vec_p.iter().copied());
    let p = (&p + p.transpose()) * 0.5;
    let residual = (&at * &p * a - &p + q_rhs).amax();
    if residual > LYAPUNOV_TOL * (1.0 + p.amax()) {
        return Err(ControlMathError::Residual(residual));
    }
    Ok(p)
}

/// Central-difference Jacobians of a discrete map `f(x, u)` at `(x0, u0)`.
///
/// Step per coordinate is `eps * max(1, |coordinate|)`. Returns
/// `(df/dx, df/du)`.
pub fn numerical_jacobian<F, E>(
    f: F,
    x0: &DVector<f64>,
    u0: &DVector<f64>,
    eps: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>), E>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>, E>,
{
    let fx0 = f(x0, u0)?;
    let n_out = fx0.len();
    let n = x0.len();
    let m = u0.len();
    let mut a = DMatrix::zeros(n_out, n);
    let mut b = DMatrix::zeros(n_out, m);
    for i in 0..n {
        let h = eps * x0[i].abs().max(1.0);
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[i] += h;
        xm[i] -= h;
        let fp = f(&xp, u0)?;
        let fm = f(&xm, u0)?;
        a.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    for j in 0..m {
        let h = eps * u0[j].abs().max(1.0);
        let mut up = u0.clone();
        let mut um = u0.clone();
        up[j] += h;
        um[j] -= h;
        let fp = f(x0, &up)?;
        let fm = f(x0, &um)?;
        b.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scalar_riccati_golden_ratio() {
        // a = b = q = r = 1: P solves P = 1 + P - P^2/(1+P), i.e.
        // P^2 - P - 1 = 0, the golden ratio. K = -P/(1+P) = -1/P.
        let sys = LinearSystem::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let q = DMatrix::from_element(1, 1, 1.0);
        let r = DMatrix::from_element(1, 1, 1.0);
        let (p, k) = solve_dare(&sys, &q, &r).unwrap();
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(p[(0, 0)], phi, epsilon = 1e-8);
        assert_abs_diff_eq!(k[(0, 0)], -1.0 / phi, epsilon = 1e-8);
        // Closed loop 1 + k must be a contraction.
        assert!(spectral_radius(&sys.closed_loop(&k)) < 1.0);
    }

    #[test]
    fn scalar_lyapunov_closed_form() {
        // 0.25 P - P = -1 => P = 4/3.
        let a = DMatrix::from_element(1, 1, 0.5);
        let q = DMatrix::from_element(1, 1, 1.0);
        let p = solve_discrete_lyapunov(&a, &q).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_rejects_non_contractive() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let q = DMatrix::from_element(1, 1, 1.0);
        assert!(matches!(
            solve_discrete_lyapunov(&a, &q),
            Err(ControlMathError::NotContractive(_))
        ));
    }

    #[test]
    fn lyapunov_matches_series_sum() {
        // P = sum_k (A^T)^k Q A^k for contractive A: independent route to
        // the same solution.
        let a = DMatrix::from_row_slice(2, 2, &[0.4, 0.3, -0.2, 0.5]);
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let p = solve_discrete_lyapunov(&a, &q).unwrap();
        let mut series = DMatrix::zeros(2, 2);
        let mut term = q.clone();
        let at = a.transpose();
        for _ in 0..500 {
            series += &term;
            term = &at * term * &a;
        }
        assert_abs_diff_eq!((&p - &series).amax(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn double_integrator_riccati_is_a_fixed_point() {
        let sys = LinearSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::from_element(1, 1, 1.0);
        let (p, k) = solve_dare(&sys, &q, &r).unwrap();
        // Residual of the Riccati equation at the returned P, computed
        // independently of the solver's own update loop.
        let at = sys.a.transpose();
        let bt = sys.b.transpose();
        let gram = &r + &bt * &p * &sys.b;
        let residual = (&q + &at * &p * &sys.a
            - (&at * &p * &sys.b) * gram.cholesky().unwrap().solve(&(&bt * &p * &sys.a))
            - &p)
            .amax();
        assert!(residual < 1e-8, "residual {residual}");
        assert!(spectral_radius(&sys.closed_loop(&k)) < 1.0);
        // The cost-to-go identity under u = Kx: A_K^T P A_K - P = -(Q + K^T R K).
        let a_k = sys.closed_loop(&k);
        let lhs = a_k.transpose() * &p * &a_k - &p;
        let rhs = -(&q + k.transpose() * &r * &k);
        assert_abs_diff_eq!((lhs - rhs).amax(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn jacobian_of_linear_map_is_exact() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.3, 0.7]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.5]);
        let f = |x: &DVector<f64>, u: &DVector<f64>| -> Result<DVector<f64>, ()> {
            Ok(&a * x + &b * u)
        };
        let x0 = DVector::from_row_slice(&[0.3, -0.2]);
        let u0 = DVector::from_row_slice(&[0.1]);
        let (ja, jb) = numerical_jacobian(f, &x0, &u0, 1e-6).unwrap();
        assert_abs_diff_eq!((ja - a).amax(), 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!((jb - b).amax(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn jacobian_of_scalar_exponential_step() {
        // x+ = exp(-0.1) x has derivative exp(-0.1) = 0.9048374180...
        let f = |x: &DVector<f64>, _u: &DVector<f64>| -> Result<DVector<f64>, ()> {
            Ok(DVector::from_element(1, (-0.1f64).exp() * x[0]))
        };
        let (ja, _) = numerical_jacobian(
            f,
            &DVector::from_element(1, 1.0),
            &DVector::zeros(1),
            1e-6,
        )
        .unwrap();
        assert_abs_diff_eq!(ja[(0, 0)], (-0.1f64).exp(), epsilon = 1e-9);
    }
}
