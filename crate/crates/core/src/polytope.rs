//! Halfspace polytopes and the support-function algebra used by the tube
//! design.
//!
//! Every set is `{x : A x <= b}`. Minkowski sums are never materialized:
//! tightening and containment queries go through support functions, which is
//! exact for the operations needed here:
//!
//! * `h_{M S}(d) = h_S(M^T d)` for a linear image,
//! * `h_{S1 + S2}(d) = h_{S1}(d) + h_{S2}(d)` for a Minkowski sum,
//! * `P - S` (Pontryagin difference) in halfspace form is row-wise
//!   `b_i <- b_i - h_S(a_i)`.
//!
//! [`ImplicitSumSet`] represents `sum_j M_j S_j` through those identities,
//! which covers disturbance-propagation tubes `E_i = sum_j A_K^j W` without
//! the exponential vertex growth a direct sum would produce.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::{maximize_over_polyhedron, LpOutcome, SolverError};

/// Default tolerance for pointwise membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Slack accepted by set-containment certificates.
pub const CONTAINMENT_SLACK: f64 = 1e-9;
/// Iteration cap for the invariant-set fixed point.
pub const INVARIANT_SET_MAX_ITER: usize = 200;

#[derive(Debug, Error)]
pub enum PolytopeError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("constraint row {0} has all-zero coefficients")]
    ZeroRow(usize),
    #[error("operation on an empty set")]
    EmptySet,
    #[error("set is unbounded in direction {0:?}")]
    Unbounded(Vec<f64>),
    #[error("tightening produced an empty set")]
    TightenedToEmpty,
    #[error("invariant set iteration did not converge within {0} iterations")]
    NotConverged(usize),
    #[error("sampling failed: {0}")]
    SamplingFailed(String),
    #[error("solver failure: {0}")]
    Solver(#[from] SolverError),
}

/// How [`HalfspacePolytope::sample`] picks points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// Rejection sampling from the bounding box; requires a bounded set.
    Uniform,
    /// Maximize a uniformly random signed direction: lands on a vertex.
    Vertex,
}

/// Convex polytope `{x : A x <= b}` in halfspace form.
///
/// Rows are kept exactly as given (no normalization); tolerances in this
/// module are therefore meaningful for row norms of order one, which holds
/// for every set built from physical bounds in this crate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PolytopeJson", into = "PolytopeJson")]
pub struct HalfspacePolytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

/// Serialized form: `{"A": [[...]], "b": [...]}` with row-major `A`.
#[derive(Serialize, Deserialize)]
struct PolytopeJson {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl TryFrom<PolytopeJson> for HalfspacePolytope {
    type Error = String;

    fn try_from(j: PolytopeJson) -> Result<Self, String> {
        if j.a.is_empty() {
            return Err("polytope needs at least one row".into());
        }
        let cols = j.a[0].len();
        if j.a.iter().any(|r| r.len() != cols) {
            return Err("ragged constraint matrix".into());
        }
        let flat: Vec<f64> = j.a.iter().flatten().copied().collect();
        let a = DMatrix::from_row_slice(j.a.len(), cols, &flat);
        let b = DVector::from_vec(j.b);
        HalfspacePolytope::new(a, b).map_err(|e| e.to_string())
    }
}

impl From<HalfspacePolytope> for PolytopeJson {
    fn from(p: HalfspacePolytope) -> Self {
        let a = (0..p.a.nrows())
            .map(|i| p.a.row(i).iter().copied().collect())
            .collect();
        PolytopeJson {
            a,
            b: p.b.iter().copied().collect(),
        }
    }
}

impl HalfspacePolytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, PolytopeError> {
        if a.nrows() != b.len() {
            return Err(PolytopeError::Dimension(format!(
                "{} rows vs {} bounds",
                a.nrows(),
                b.len()
            )));
        }
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(PolytopeError::Dimension(
                "polytope needs at least one row and one column".into(),
            ));
        }
        for i in 0..a.nrows() {
            if a.row(i).amax() == 0.0 {
                return Err(PolytopeError::ZeroRow(i));
            }
        }
        Ok(Self { a, b })
    }

    /// Axis-aligned box `{x : |x_k| <= half_widths[k]}`.
    pub fn symmetric_box(half_widths: &[f64]) -> Result<Self, PolytopeError> {
        let n = half_widths.len();
        if n == 0 {
            return Err(PolytopeError::Dimension("empty box".into()));
        }
        if half_widths.iter().any(|&w| w < 0.0) {
            return Err(PolytopeError::Dimension(
                "box half-widths must be nonnegative".into(),
            ));
        }
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for k in 0..n {
            a[(2 * k, k)] = 1.0;
            a[(2 * k + 1, k)] = -1.0;
            b[2 * k] = half_widths[k];
            b[2 * k + 1] = half_widths[k];
        }
        Self::new(a, b)
    }

    /// Axis-aligned box `{x : lo[k] <= x_k <= hi[k]}`.
    pub fn interval_box(lo: &[f64], hi: &[f64]) -> Result<Self, PolytopeError> {
        let n = lo.len();
        if n == 0 || hi.len() != n {
            return Err(PolytopeError::Dimension("box bound lengths differ".into()));
        }
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for k in 0..n {
            a[(2 * k, k)] = 1.0;
            a[(2 * k + 1, k)] = -1.0;
            b[2 * k] = hi[k];
            b[2 * k + 1] = -lo[k];
        }
        Self::new(a, b)
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn rows(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.a, &self.b)
    }

    /// Support function `h(d) = max {d^T x : x in P}`.
    pub fn support(&self, d: &DVector<f64>) -> Result<f64, PolytopeError> {
        if d.len() != self.dim() {
            return Err(PolytopeError::Dimension(
                "support direction has wrong length".into(),
            ));
        }
        match maximize_over_polyhedron(&self.a, &self.b, d)? {
            LpOutcome::Optimal { value, .. } => Ok(value),
            LpOutcome::Infeasible => Err(PolytopeError::EmptySet),
            LpOutcome::Unbounded => {
                Err(PolytopeError::Unbounded(d.iter().copied().collect()))
            }
        }
    }

    /// Support maximizer: a point of P extremal in direction `d`.
    pub fn support_point(&self, d: &DVector<f64>) -> Result<DVector<f64>, PolytopeError> {
        match maximize_over_polyhedron(&self.a, &self.b, d)? {
            LpOutcome::Optimal { point, .. } => Ok(point),
            LpOutcome::Infeasible => Err(PolytopeError::EmptySet),
            LpOutcome::Unbounded => {
                Err(PolytopeError::Unbounded(d.iter().copied().collect()))
            }
        }
    }

    /// Membership within `tol` on every row.
    pub fn contains_point(&self, x: &DVector<f64>, tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        (0..self.num_rows()).all(|i| self.a.row(i).transpose().dot(x) <= self.b[i] + tol)
    }

    /// Worst membership violation at `x` (negative when strictly inside).
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        (0..self.num_rows())
            .map(|i| self.a.row(i).transpose().dot(x) - self.b[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Exact emptiness via an LP feasibility check (Farkas-certified).
    pub fn is_empty(&self) -> Result<bool, PolytopeError> {
        let zero = DVector::zeros(self.dim());
        match maximize_over_polyhedron(&self.a, &self.b, &zero)? {
            LpOutcome::Optimal { .. } => Ok(false),
            LpOutcome::Infeasible => Ok(true),
            LpOutcome::Unbounded => Err(PolytopeError::Dimension(
                "zero-direction LP reported unbounded".into(),
            )),
        }
    }

    /// Pontryagin difference `P - S = {x : x + s in P for all s in S}`:
    /// each bound shrinks by the support of `S` in its row direction.
    /// Exact in halfspace form. Errors when the result is empty.
    pub fn tighten(&self, shrink_by: &dyn SupportSet) -> Result<Self, PolytopeError> {
        if shrink_by.dim() != self.dim() {
            return Err(PolytopeError::Dimension(
                "tightening set dimension mismatch".into(),
            ));
        }
        let mut b = self.b.clone();
        for i in 0..self.num_rows() {
            b[i] -= shrink_by.support(&self.a.row(i).transpose())?;
        }
        let result = Self { a: self.a.clone(), b };
        if result.is_empty()? {
            return Err(PolytopeError::TightenedToEmpty);
        }
        Ok(result)
    }

    /// Certified containment `Q subset of P`: checks
    /// `h_Q(a_i) <= b_i + slack` for every row of `P`. Returns the worst
    /// slack `max_i (h_Q(a_i) - b_i)` (nonpositive when contained strictly).
    pub fn contains_set(&self, inner: &dyn SupportSet) -> Result<(bool, f64), PolytopeError> {
        if inner.dim() != self.dim() {
            return Err(PolytopeError::Dimension(
                "containment dimension mismatch".into(),
            ));
        }
        let mut worst = f64::NEG_INFINITY;
        for i in 0..self.num_rows() {
            let h = inner.support(&self.a.row(i).transpose())?;
            worst = worst.max(h - self.b[i]);
        }
        Ok((worst <= CONTAINMENT_SLACK, worst))
    }

    /// Intersection: stacked rows, no reduction.
    pub fn intersect(&self, other: &Self) -> Result<Self, PolytopeError> {
        if other.dim() != self.dim() {
            return Err(PolytopeError::Dimension(
                "intersection dimension mismatch".into(),
            ));
        }
        let m = self.num_rows() + other.num_rows();
        let mut a = DMatrix::zeros(m, self.dim());
        let mut b = DVector::zeros(m);
        a.view_mut((0, 0), (self.num_rows(), self.dim()))
            .copy_from(&self.a);
        a.view_mut((self.num_rows(), 0), (other.num_rows(), self.dim()))
            .copy_from(&other.a);
        b.rows_mut(0, self.num_rows()).copy_from(&self.b);
        b.rows_mut(self.num_rows(), other.num_rows())
            .copy_from(&other.b);
        Self::new(a, b)
    }

    /// Preimage `{x : M x in P}` under a linear map, as rows `A M`.
    pub fn linear_preimage(&self, m: &DMatrix<f64>) -> Result<Self, PolytopeError> {
        if m.nrows() != self.dim() {
            return Err(PolytopeError::Dimension(
                "preimage map has wrong output dimension".into(),
            ));
        }
        Self::new(&self.a * m, self.b.clone())
    }

    /// Drop rows implied by the others. Deterministic: rows are tested from
    /// the last to the first against the currently kept set (with the tested
    /// row's bound relaxed), so the first of two identical rows survives.
    /// Requires a nonempty set; an empty set is returned unchanged.
    pub fn remove_redundant(&self) -> Result<Self, PolytopeError> {
        if self.is_empty()? {
            return Ok(self.clone());
        }
        let mut keep: Vec<bool> = vec![true; self.num_rows()];
        for i in (0..self.num_rows()).rev() {
            if keep.iter().filter(|&&k| k).count() == 1 {
                break;
            }
            // Relax row i and maximize its left-hand side over the rest.
            let rows: Vec<usize> = (0..self.num_rows())
                .filter(|&j| keep[j] && j != i)
                .collect();
            let mut a = DMatrix::zeros(rows.len(), self.dim());
            let mut b = DVector::zeros(rows.len());
            for (r, &j) in rows.iter().enumerate() {
                a.row_mut(r).copy_from(&self.a.row(j));
                b[r] = self.b[j];
            }
            let d = self.a.row(i).transpose();
            match maximize_over_polyhedron(&a, &b, &d)? {
                LpOutcome::Optimal { value, .. } => {
                    if value <= self.b[i] + 1e-9 {
                        keep[i] = false;
                    }
                }
                // Unbounded without row i: the row is essential.
                LpOutcome::Unbounded => {}
                LpOutcome::Infeasible => {
                    return Err(PolytopeError::EmptySet);
                }
            }
        }
        let rows: Vec<usize> = (0..self.num_rows()).filter(|&i| keep[i]).collect();
        let mut a = DMatrix::zeros(rows.len(), self.dim());
        let mut b = DVector::zeros(rows.len());
        for (r, &j) in rows.iter().enumerate() {
            a.row_mut(r).copy_from(&self.a.row(j));
            b[r] = self.b[j];
        }
        Self::new(a, b)
    }

    /// Componentwise `[min x_k, max x_k]` via 2n support calls.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>), PolytopeError> {
        let n = self.dim();
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        for k in 0..n {
            let mut d = DVector::zeros(n);
            d[k] = 1.0;
            hi[k] = self.support(&d)?;
            d[k] = -1.0;
            lo[k] = -self.support(&d)?;
        }
        Ok((lo, hi))
    }

    /// Draw a point of the set. `Uniform` rejection-samples the bounding box
    /// (uniform over the set); `Vertex` maximizes a random signed direction.
    /// Identical `(seed, mode)` always produces the identical point.
    pub fn sample(&self, seed: u64, mode: SampleMode) -> Result<DVector<f64>, PolytopeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match mode {
            SampleMode::Vertex => {
                let d = DVector::from_iterator(
                    self.dim(),
                    (0..self.dim()).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }),
                );
                self.support_point(&d)
            }
            SampleMode::Uniform => {
                let (lo, hi) = self.bounding_box()?;
                // A nonempty polytope intersects its bounding box with
                // positive probability unless it is lower-dimensional; the
                // attempt cap turns that case into an error instead of a
                // hang.
                for _ in 0..10_000 {
                    let x = DVector::from_iterator(
                        self.dim(),
                        (0..self.dim()).map(|k| {
                            if hi[k] - lo[k] <= 0.0 {
                                lo[k]
                            } else {
                                rng.random_range(lo[k]..=hi[k])
                            }
                        }),
                    );
                    if self.contains_point(&x, MEMBERSHIP_TOL) {
                        return Ok(x);
                    }
                }
                Err(PolytopeError::SamplingFailed(
                    "rejection sampling exhausted its attempt budget".into(),
                ))
            }
        }
    }
}

/// Anything with an exact support function; the common currency between
/// explicit polytopes and implicit Minkowski sums.
pub trait SupportSet {
    fn dim(&self) -> usize;
    fn support(&self, d: &DVector<f64>) -> Result<f64, PolytopeError>;
}

impl SupportSet for HalfspacePolytope {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn support(&self, d: &DVector<f64>) -> Result<f64, PolytopeError> {
        self.support(d)
    }
}

/// Implicit Minkowski sum `sum_j M_j S_j` of linearly mapped polytopes,
/// queried only through its support function
/// `h(d) = sum_j h_{S_j}(M_j^T d)`.
///
/// An empty term list is the singleton `{0}` (support identically zero).
#[derive(Debug, Clone)]
pub struct ImplicitSumSet {
    dim: usize,
    terms: Vec<(DMatrix<f64>, HalfspacePolytope)>,
}

impl ImplicitSumSet {
    /// The singleton `{0}` in `R^dim`.
    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    /// Single mapped set `M S`.
    pub fn mapped(map: DMatrix<f64>, set: HalfspacePolytope) -> Result<Self, PolytopeError> {
        let mut s = Self::zero(map.nrows());
        s.push_term(map, set)?;
        Ok(s)
    }

    pub fn push_term(
        &mut self,
        map: DMatrix<f64>,
        set: HalfspacePolytope,
    ) -> Result<(), PolytopeError> {
        if map.nrows() != self.dim {
            return Err(PolytopeError::Dimension(
                "term map has wrong output dimension".into(),
            ));
        }
        if map.ncols() != set.dim() {
            return Err(PolytopeError::Dimension(
                "term map does not match its set".into(),
            ));
        }
        self.terms.push((map, set));
        Ok(())
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }
}

impl SupportSet for ImplicitSumSet {
    fn dim(&self) -> usize {
        self.dim
    }

    fn support(&self, d: &DVector<f64>) -> Result<f64, PolytopeError> {
        if d.len() != self.dim {
            return Err(PolytopeError::Dimension(
                "support direction has wrong length".into(),
            ));
        }
        let mut total = 0.0;
        for (map, set) in &self.terms {
            total += set.support(&(map.transpose() * d))?;
        }
        Ok(total)
    }
}

/// Maximal robust positively invariant subset of `domain` for the dynamics
/// `x+ = a_closed x + w`, `w in disturbance`:
///
/// ```text
/// O_{k+1} = O_k  intersect  {x : a_i^T a_closed x <= b_i - h_W(a_i)}
/// ```
///
/// with redundancy removal each round, until `O_k` and `O_{k+1}` contain
/// each other within [`CONTAINMENT_SLACK`]. The fixed point satisfies
/// `a_closed O + W subset of O`; callers verify that certificate explicitly.
pub fn max_rpi(
    a_closed: &DMatrix<f64>,
    domain: &HalfspacePolytope,
    disturbance: &HalfspacePolytope,
    max_iter: usize,
) -> Result<HalfspacePolytope, PolytopeError> {
    let n = domain.dim();
    if a_closed.nrows() != n || a_closed.ncols() != n || disturbance.dim() != n {
        return Err(PolytopeError::Dimension(
            "invariant set inputs have mismatched dimensions".into(),
        ));
    }
    let mut current = domain.remove_redundant()?;
    if current.is_empty()? {
        return Err(PolytopeError::EmptySet);
    }
    for _ in 0..max_iter {
        // One-step backward image of the current iterate under the
        // disturbance-robust dynamics.
        let (a, b) = current.rows();
        let mut shrunk = b.clone();
        for i in 0..current.num_rows() {
            shrunk[i] -= disturbance.support(&a.row(i).transpose())?;
        }
        let pre = HalfspacePolytope::new(a * a_closed, shrunk)?;
        let next = current.intersect(&pre)?;
        if next.is_empty()? {
            return Err(PolytopeError::EmptySet);
        }
        let next = next.remove_redundant()?;
        // current always contains next; mutual containment ends the loop.
        let (contained, _) = next.contains_set(&current)?;
        if contained {
            return Ok(next);
        }
        current = next;
    }
    Err(PolytopeError::NotConverged(max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn unit_box(n: usize) -> HalfspacePolytope {
        HalfspacePolytope::symmetric_box(&vec![1.0; n]).unwrap()
    }

    #[test]
    fn support_of_unit_box_is_l1_norm() {
        let p = unit_box(2);
        // h(d) over the box [-1,1]^2 is |d_1| + |d_2|.
        assert_abs_diff_eq!(p.support(&dv(&[1.0, 1.0])).unwrap(), 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.support(&dv(&[3.0, -4.0])).unwrap(), 7.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.support(&dv(&[0.0, 0.0])).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn tighten_box_by_box() {
        // [-1,1]^2 minus [-0.25,0.25]^2 = [-0.75,0.75]^2.
        let p = unit_box(2);
        let s = HalfspacePolytope::symmetric_box(&[0.25, 0.25]).unwrap();
        let t = p.tighten(&s).unwrap();
        let (_, b) = t.rows();
        for i in 0..4 {
            assert_abs_diff_eq!(b[i], 0.75, epsilon = 1e-9);
        }
    }

    #[test]
    fn tighten_to_empty_is_an_error() {
        let p = HalfspacePolytope::symmetric_box(&[0.1]).unwrap();
        let s = HalfspacePolytope::symmetric_box(&[0.2]).unwrap();
        assert!(matches!(
            p.tighten(&s),
            Err(PolytopeError::TightenedToEmpty)
        ));
    }

    #[test]
    fn pontryagin_membership_property() {
        // For every sampled x in P - S and vertex s of S, x + s must lie in
        // P: exactness of the support-based tightening.
        let p = HalfspacePolytope::new(
            DMatrix::from_row_slice(5, 2, &[1.0, 0.3, -1.0, 0.2, 0.0, 1.0, 0.3, -1.0, -1.0, -1.0]),
            dv(&[1.0, 1.2, 0.8, 1.0, 1.5]),
        )
        .unwrap();
        let s = HalfspacePolytope::symmetric_box(&[0.1, 0.15]).unwrap();
        let diff = p.tighten(&s).unwrap();
        for seed in 0..50u64 {
            let x = diff.sample(seed, SampleMode::Uniform).unwrap();
            for vseed in 0..8u64 {
                let v = s.sample(vseed, SampleMode::Vertex).unwrap();
                assert!(
                    p.contains_point(&(&x + &v), 1e-7),
                    "x + s escaped P at seeds {seed}/{vseed}"
                );
            }
        }
    }

    #[test]
    fn support_additivity_of_sum_set() {
        // h of an implicit sum of boxes equals the sum of box supports,
        // which has the closed form sum_k w_k |(M^T d)_k|.
        let w1 = HalfspacePolytope::symmetric_box(&[0.5, 0.2]).unwrap();
        let w2 = HalfspacePolytope::symmetric_box(&[0.1, 0.3]).unwrap();
        let m1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let m2 = DMatrix::from_row_slice(2, 2, &[0.3, -0.2, 0.8, 0.1]);
        let mut sum = ImplicitSumSet::zero(2);
        sum.push_term(m1.clone(), w1.clone()).unwrap();
        sum.push_term(m2.clone(), w2.clone()).unwrap();
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = dv(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            let got = sum.support(&d).unwrap();
            let d1 = m1.transpose() * &d;
            let d2 = m2.transpose() * &d;
            let expect = 0.5 * d1[0].abs() + 0.2 * d1[1].abs() + 0.1 * d2[0].abs()
                + 0.3 * d2[1].abs();
            assert_abs_diff_eq!(got, expect, epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_sum_set_supports_nothing() {
        let z = ImplicitSumSet::zero(3);
        assert_abs_diff_eq!(z.support(&dv(&[1.0, -2.0, 5.0])).unwrap(), 0.0);
    }

    #[test]
    fn redundant_rows_are_dropped_first_kept() {
        // Unit interval with a duplicate upper bound and a slack row.
        let p = HalfspacePolytope::new(
            DMatrix::from_row_slice(4, 1, &[1.0, 1.0, -1.0, 1.0]),
            dv(&[1.0, 1.0, 1.0, 5.0]),
        )
        .unwrap();
        let r = p.remove_redundant().unwrap();
        assert_eq!(r.num_rows(), 2);
        let (a, b) = r.rows();
        // First duplicate survives, slack row is gone.
        assert_abs_diff_eq!(a[(0, 0)], 1.0);
        assert_abs_diff_eq!(b[0], 1.0);
        assert_abs_diff_eq!(a[(1, 0)], -1.0);
        assert_abs_diff_eq!(b[1], 1.0);
    }

    #[test]
    fn empty_set_detected() {
        let p = HalfspacePolytope::new(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            dv(&[-1.0, -1.0]),
        )
        .unwrap();
        assert!(p.is_empty().unwrap());
        assert!(!unit_box(3).is_empty().unwrap());
    }

    #[test]
    fn containment_reports_worst_slack() {
        let outer = unit_box(2);
        let inner = HalfspacePolytope::symmetric_box(&[0.5, 0.25]).unwrap();
        let (ok, slack) = outer.contains_set(&inner).unwrap();
        assert!(ok);
        assert_abs_diff_eq!(slack, -0.5, epsilon = 1e-9);
        // Worst violation is on the tighter y rows: h_outer(e_y) - 0.25.
        let (ok, slack) = inner.contains_set(&outer).unwrap();
        assert!(!ok);
        assert_abs_diff_eq!(slack, 0.75, epsilon = 1e-9);
    }

    #[test]
    fn bounding_box_of_rotated_set() {
        // Diamond |x| + |y| <= 1: bounding box [-1,1]^2.
        let p = HalfspacePolytope::new(
            DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]),
            dv(&[1.0, 1.0, 1.0, 1.0]),
        )
        .unwrap();
        let (lo, hi) = p.bounding_box().unwrap();
        assert_abs_diff_eq!(lo[0], -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(hi[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn sampling_is_deterministic_and_inside() {
        let p = HalfspacePolytope::new(
            DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, -1.0]),
            dv(&[1.0, 0.0, 0.0]),
        )
        .unwrap();
        for mode in [SampleMode::Uniform, SampleMode::Vertex] {
            let a = p.sample(7, mode).unwrap();
            let b = p.sample(7, mode).unwrap();
            assert_eq!(a, b);
            assert!(p.contains_point(&a, MEMBERSHIP_TOL));
        }
        // Vertex mode lands on vertices of the simplex.
        let v = p.sample(3, SampleMode::Vertex).unwrap();
        let vertices = [dv(&[0.0, 0.0]), dv(&[1.0, 0.0]), dv(&[0.0, 1.0])];
        assert!(vertices.iter().any(|w| (&v - w).amax() < 1e-7));
    }

    #[test]
    fn json_round_trip_preserves_rows() {
        let p = HalfspacePolytope::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.25, -0.5, 1.0]),
            dv(&[0.3, 0.7]),
        )
        .unwrap();
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("\"A\""));
        let q: HalfspacePolytope = serde_json::from_str(&text).unwrap();
        assert_eq!(p.rows().0, q.rows().0);
        assert_eq!(p.rows().1, q.rows().1);
    }

    #[test]
    fn rpi_set_for_scalar_contraction() {
        // x+ = 0.5 x + w, |w| <= 0.25, domain |x| <= 1. The fixed point of
        // |x| <= r with r = 0.5 r + 0.25 is r = 0.5, and [-0.5, 0.5] is
        // invariant. The maximal invariant subset of [-1, 1] is [-1, 1]
        // itself only if 0.5*1 + 0.25 <= 1, which holds, so the answer is
        // the full domain.
        let a = DMatrix::from_row_slice(1, 1, &[0.5]);
        let domain = HalfspacePolytope::symmetric_box(&[1.0]).unwrap();
        let w = HalfspacePolytope::symmetric_box(&[0.25]).unwrap();
        let inv = max_rpi(&a, &domain, &w, INVARIANT_SET_MAX_ITER).unwrap();
        let (ok, _) = domain.contains_set(&inv).unwrap();
        assert!(ok);
        assert_abs_diff_eq!(inv.support(&dv(&[1.0])).unwrap(), 1.0, epsilon = 1e-9);
        // Invariance certificate: a_closed O + W inside O.
        let mut image = ImplicitSumSet::zero(1);
        image.push_term(a.clone(), inv.clone()).unwrap();
        image
            .push_term(DMatrix::identity(1, 1), w.clone())
            .unwrap();
        let (ok, slack) = inv.contains_set(&image).unwrap();
        assert!(ok, "invariance slack {slack}");
    }

    #[test]
    fn rpi_set_for_shear_dynamics_is_certified() {
        // Stable shear: the corner (1, 1) maps to (1.4, 0.8), robustly
        // outside the unit box, so the maximal invariant set is a strict
        // subset of the domain. The invariance certificate is the ground
        // truth here.
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.5, 0.0, 0.8]);
        let domain = unit_box(2);
        let w = HalfspacePolytope::symmetric_box(&[0.02, 0.02]).unwrap();
        let inv = max_rpi(&a, &domain, &w, INVARIANT_SET_MAX_ITER).unwrap();
        assert!(inv.contains_point(&dv(&[0.0, 0.0]), MEMBERSHIP_TOL));
        let (ok, _) = domain.contains_set(&inv).unwrap();
        assert!(ok);
        let mut image = ImplicitSumSet::zero(2);
        image.push_term(a.clone(), inv.clone()).unwrap();
        image.push_term(DMatrix::identity(2, 2), w).unwrap();
        let (ok, slack) = inv.contains_set(&image).unwrap();
        assert!(ok, "invariance slack {slack}");
        assert!(!inv.contains_point(&dv(&[1.0, 1.0]), 1e-6));
    }
}
