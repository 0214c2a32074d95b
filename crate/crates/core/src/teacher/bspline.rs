//! Least-squares B-spline fitting of a time-parameterized 3D path.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::{TimedPoint3, Trajectory, Vec3};

/// A clamped B-spline curve `t -> R³` over a shared knot vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineTrajectory {
    degree: usize,
    knots: Vec<f64>,
    coeffs: Vec<Vec3>,
}

impl BSplineTrajectory {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_coeffs(&self) -> usize {
        self.coeffs.len()
    }

    /// Parameter range covered by the fitted data.
    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.coeffs.len()])
    }

    /// Curve position at `t`. Outside the domain the end polynomial pieces
    /// are extended.
    pub fn eval(&self, t: f64) -> Vec3 {
        let span = find_span(&self.knots, self.degree, self.coeffs.len(), t);
        let basis = basis_functions(&self.knots, self.degree, span, t);
        let mut p = [0.0; 3];
        for (j, b) in basis.iter().enumerate() {
            let c = &self.coeffs[span - self.degree + j];
            for a in 0..3 {
                p[a] += b * c[a];
            }
        }
        p
    }

    pub fn sample(&self, times: &[f64]) -> Result<Trajectory> {
        Trajectory::new(
            times
                .iter()
                .map(|&t| TimedPoint3::new(t, self.eval(t)))
                .collect(),
        )
    }
}

/// Index `i` of the knot span `[knots[i], knots[i+1])` holding `t`, clamped
/// to the valid range `degree..n_coeffs`.
fn find_span(knots: &[f64], degree: usize, n_coeffs: usize, t: f64) -> usize {
    let lo = degree;
    let hi = n_coeffs - 1;
    if t >= knots[hi + 1] {
        return hi;
    }
    if t <= knots[lo] {
        return lo;
    }
    // Last i in [lo, hi] with knots[i] <= t.
    let idx = knots[lo..=hi].partition_point(|&k| k <= t);
    lo + idx - 1
}

/// The `degree + 1` non-zero basis values on `span` (Cox–de Boor recursion).
fn basis_functions(knots: &[f64], degree: usize, span: usize, t: f64) -> Vec<f64> {
    let mut n = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    n[0] = 1.0;
    for j in 1..=degree {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = n[r] / denom;
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}

/// Number of interior knots for `n` samples: `max(4, n / 10)`, capped so the
/// system never has more coefficients than samples.
pub fn interior_knot_count(n: usize, degree: usize) -> usize {
    (n / 10).max(4).min(n.saturating_sub(degree + 1))
}

/// Least-squares B-spline of the given degree through time-stamped points,
/// with uniformly spaced interior knots on `[t_min, t_max]`.
pub fn fit_bspline(points: &[TimedPoint3], degree: usize) -> Result<BSplineTrajectory> {
    let n = points.len();
    if degree == 0 || n < degree + 1 {
        return Err(Error::TooFewPoints {
            need: degree.max(1) + 1,
            got: n,
        });
    }
    for (i, w) in points.windows(2).enumerate() {
        if w[1].t <= w[0].t {
            return Err(Error::NonMonotonic { index: i + 1 });
        }
    }
    if points
        .iter()
        .any(|p| !p.t.is_finite() || p.p.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::NonFinite("spline samples"));
    }

    let t0 = points[0].t;
    let t1 = points[n - 1].t;
    let n_int = interior_knot_count(n, degree);
    let m = n_int + degree + 1;
    let mut knots = Vec::with_capacity(m + degree + 1);
    knots.extend(std::iter::repeat_n(t0, degree + 1));
    for j in 1..=n_int {
        knots.push(t0 + (t1 - t0) * j as f64 / (n_int + 1) as f64);
    }
    knots.extend(std::iter::repeat_n(t1, degree + 1));

    // Normal equations BᵀB c = Bᵀy; B is banded and well conditioned.
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DMatrix::<f64>::zeros(m, 3);
    for pt in points {
        let span = find_span(&knots, degree, m, pt.t);
        let basis = basis_functions(&knots, degree, span, pt.t);
        let first = span - degree;
        for (a, ba) in basis.iter().enumerate() {
            for (b, bb) in basis.iter().enumerate() {
                gram[(first + a, first + b)] += ba * bb;
            }
            for k in 0..3 {
                rhs[(first + a, k)] += ba * pt.p[k];
            }
        }
    }
    let svd = gram.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max();
    let solution = svd
        .solve(&rhs, tol)
        .map_err(|e| Error::Degenerate(format!("spline system: {e}")))?;
    let coeffs = (0..m)
        .map(|i| [solution[(i, 0)], solution[(i, 1)], solution[(i, 2)]])
        .collect();
    Ok(BSplineTrajectory {
        degree,
        knots,
        coeffs,
    })
}
