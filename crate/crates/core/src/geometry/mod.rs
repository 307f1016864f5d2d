//! Constraint geometry for the rate-constrained power polytope.
//!
//! The per-user rate targets linearize to `B p >= q` with
//! `B[i][i] = g[i][i]`, `B[i][j] = -gamma_min[i] * g[i][j]` (j != i) and
//! `q[i] = gamma_min[i] * noise_power`. Together with the box
//! `0 <= p <= p_max` this gives the feasible set every method must respect.
//! The vertex `p0 = B^{-1} q` meets all rate constraints with equality; the
//! instance is feasible exactly when `0 <= p0 <= p_max` componentwise.

pub mod backward;
pub mod l2;
pub mod metrics;
pub mod projection;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scenario::ChannelRealization;

/// Condition-number ceiling above which `B` is treated as singular.
pub const COND_LIMIT: f64 = 1e12;

/// Smallest magnitude we are willing to divide by anywhere in the geometry.
pub const DIV_GUARD: f64 = 1e-30;

/// Precomputed constraint geometry for one channel instance.
///
/// Beyond `B`, `q`, and the vertex `p0`, this caches the distance-to-power
/// map `W = B^{-1} diag(BB^T)^{1/2}` whose column `i` moves the vertex one
/// unit of Euclidean distance off constraint hyperplane `i` (into the
/// feasible side), the row sums `W 1`, and the largest uniform distance
/// `d_max_star` that keeps `p0 + W (d_max_star 1)` inside the power box.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    b: DMatrix<f64>,
    q: DVector<f64>,
    p0: DVector<f64>,
    row_norms: DVector<f64>,
    dist_to_power: DMatrix<f64>,
    dist_sum: DVector<f64>,
    d_max_star: f64,
    feasible: bool,
    p_max: f64,
    cond_inf: f64,
}

impl ConstraintSet {
    /// Build the geometry from a channel instance.
    ///
    /// Uses one LU factorization of `B` for the solve and the inverse.
    /// Errors: `SingularGeometry` when `B` cannot be inverted or its
    /// infinity-norm condition number exceeds `COND_LIMIT`;
    /// `DegenerateGeometry` when the instance is feasible but some entry of
    /// `W 1` is non-positive (the uniform-distance step is then undefined).
    pub fn build(ch: &ChannelRealization) -> Result<Self> {
        let k = ch.k();
        let mut b = DMatrix::zeros(k, k);
        let mut q = DVector::zeros(k);
        for i in 0..k {
            for j in 0..k {
                b[(i, j)] = if i == j {
                    ch.gains[(i, i)]
                } else {
                    -ch.gamma_min[i] * ch.gains[(i, j)]
                };
            }
            q[i] = ch.gamma_min[i] * ch.noise_power;
        }

        let lu = b.clone().lu();
        let b_inv = lu
            .try_inverse()
            .ok_or_else(|| Error::SingularGeometry("B is not invertible".into()))?;
        let cond_inf = inf_norm(&b) * inf_norm(&b_inv);
        if !cond_inf.is_finite() || cond_inf > COND_LIMIT {
            return Err(Error::SingularGeometry(format!(
                "cond_inf(B) = {cond_inf:e} exceeds {COND_LIMIT:e}"
            )));
        }
        let p0 = &b_inv * &q;

        let row_norms = DVector::from_fn(k, |i, _| b.row(i).norm());
        let mut dist_to_power = b_inv;
        for j in 0..k {
            let s = row_norms[j];
            dist_to_power.column_mut(j).scale_mut(s);
        }
        let dist_sum = &dist_to_power * DVector::from_element(k, 1.0);

        let p_max = ch.p_max;
        let feasible = (0..k).all(|i| p0[i] >= 0.0 && p0[i] <= p_max);

        let mut d_max_star = 0.0;
        if feasible {
            for i in 0..k {
                if dist_sum[i] <= 0.0 {
                    return Err(Error::DegenerateGeometry { row: i, value: dist_sum[i] });
                }
            }
            d_max_star = (0..k)
                .map(|i| (p_max - p0[i]) / dist_sum[i])
                .fold(f64::INFINITY, f64::min);
        }

        Ok(Self {
            b,
            q,
            p0,
            row_norms,
            dist_to_power,
            dist_sum,
            d_max_star,
            feasible,
            p_max,
            cond_inf,
        })
    }

    pub fn k(&self) -> usize {
        self.q.len()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    /// Vertex meeting every rate constraint with equality.
    pub fn p0(&self) -> &DVector<f64> {
        &self.p0
    }

    /// Euclidean norms of the rows of `B`.
    pub fn row_norms(&self) -> &DVector<f64> {
        &self.row_norms
    }

    /// `W = B^{-1} diag(BB^T)^{1/2}`.
    pub fn dist_to_power(&self) -> &DMatrix<f64> {
        &self.dist_to_power
    }

    /// `W 1`, the power step per unit of uniform hyperplane distance.
    pub fn dist_sum(&self) -> &DVector<f64> {
        &self.dist_sum
    }

    /// Largest uniform distance keeping the interior point inside the power
    /// box; 0 for infeasible instances.
    pub fn d_max_star(&self) -> f64 {
        self.d_max_star
    }

    /// Whether the rate targets are jointly achievable under the power box.
    pub fn feasible(&self) -> bool {
        self.feasible
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn cond_inf(&self) -> f64 {
        self.cond_inf
    }

    /// Map per-hyperplane distances `d` to the interior point
    /// `p0 + W d`. Requires a feasible instance and `0 <= d <= d_max_star`
    /// componentwise (up to roundoff slack).
    pub fn interior_point(&self, d: &DVector<f64>) -> Result<DVector<f64>> {
        if !self.feasible {
            return Err(Error::InvalidArgument(
                "interior point undefined for infeasible instance".into(),
            ));
        }
        if d.len() != self.k() {
            return Err(Error::InvalidArgument(format!(
                "distance vector length {} does not match {} cells",
                d.len(),
                self.k()
            )));
        }
        let tol = 1e-12 * (1.0 + self.d_max_star);
        for i in 0..d.len() {
            if !(d[i] >= -tol && d[i] <= self.d_max_star + tol) {
                return Err(Error::InvalidArgument(format!(
                    "distance {} at index {i} outside [0, {}]",
                    d[i], self.d_max_star
                )));
            }
        }
        Ok(&self.p0 + &self.dist_to_power * d)
    }

    /// Interior point at the uniform maximal distance `d_max_star 1`.
    pub fn heuristic_interior_point(&self) -> Result<DVector<f64>> {
        let d = DVector::from_element(self.k(), self.d_max_star);
        self.interior_point(&d)
    }

    /// Componentwise rate-constraint check `B p >= q` (exact comparisons).
    pub fn satisfies_rate_constraints(&self, p: &DVector<f64>) -> bool {
        let bp = &self.b * p;
        (0..self.k()).all(|i| bp[i] >= self.q[i])
    }
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Index of the largest entry; ties resolve to the smallest index.
pub(crate) fn argmax_first(v: &DVector<f64>) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
pub(crate) fn two_cell_example() -> (ChannelRealization, ConstraintSet) {
    let ch = ChannelRealization::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        DVector::from_vec(vec![1.0, 1.0]),
        0.1,
        1.0,
    )
    .unwrap();
    let cs = ConstraintSet::build(&ch).unwrap();
    (ch, cs)
}
