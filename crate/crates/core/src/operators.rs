//! Discretized signals on a uniform grid and dense forward operators.
//!
//! A [`Signal`] with `n` samples on `(a, b)` lives on the cell midpoints
//! `a + (i + 1/2) h`, `h = (b - a) / n`. Inner products carry the factor
//! `h`, so norms approximate continuum `L^2` norms and do not rescale under
//! grid refinement. A [`LinearOp`] stores its plain matrix together with the
//! domain and codomain intervals; the adjoint with respect to the weighted
//! products is `(h_out / h_in) M^T`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid_param, AdpError, Result};
use crate::scalar::Real;

const NORM_SEED: u64 = 0x5eed_0f_a11;

/// Grid function on a uniform midpoint grid over an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T> {
    samples: Array1<T>,
    interval: (T, T),
}

impl<T: Real> Signal<T> {
    pub fn new(samples: Array1<T>, interval: (T, T)) -> Result<Self> {
        if samples.len() < 2 {
            return Err(AdpError::InvalidDimension(format!(
                "a signal needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(interval.1 > interval.0) || !interval.0.is_finite() || !interval.1.is_finite() {
            return Err(invalid_param("interval", "needs finite a < b"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(AdpError::InvalidInput(
                "signal samples must be finite".into(),
            ));
        }
        Ok(Self { samples, interval })
    }

    pub fn from_vec(samples: Vec<T>, interval: (T, T)) -> Result<Self> {
        Self::new(Array1::from(samples), interval)
    }

    pub fn zeros(n: usize, interval: (T, T)) -> Result<Self> {
        Self::new(Array1::zeros(n), interval)
    }

    /// Samples `f` at the cell midpoints.
    pub fn from_fn(n: usize, interval: (T, T), f: impl Fn(T) -> T) -> Result<Self> {
        let grid = midpoints(n, interval);
        Self::new(grid.mapv(f), interval)
    }

    /// Same grid, new samples.
    pub fn with_samples(&self, samples: Array1<T>) -> Result<Self> {
        if samples.len() != self.len() {
            return Err(AdpError::InvalidDimension(format!(
                "expected {} samples, got {}",
                self.len(),
                samples.len()
            )));
        }
        Self::new(samples, self.interval)
    }

    /// Builds a signal from trusted, finite arithmetic on an existing grid.
    pub(crate) fn on_grid_unchecked(samples: Array1<T>, interval: (T, T)) -> Self {
        debug_assert!(samples.len() >= 2);
        Self { samples, interval }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn interval(&self) -> (T, T) {
        self.interval
    }

    pub fn h(&self) -> T {
        (self.interval.1 - self.interval.0) / T::from_usize_lossy(self.len())
    }

    pub fn samples(&self) -> &Array1<T> {
        &self.samples
    }

    pub fn into_samples(self) -> Array1<T> {
        self.samples
    }

    pub fn grid(&self) -> Array1<T> {
        midpoints(self.len(), self.interval)
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.len() == other.len() && self.interval == other.interval
    }

    fn check_grid(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(AdpError::InvalidDimension(format!(
                "grid mismatch: {} samples on ({}, {}) vs {} samples on ({}, {})",
                self.len(),
                self.interval.0,
                self.interval.1,
                other.len(),
                other.interval.0,
                other.interval.1
            )))
        }
    }

    /// Weighted inner product `h * sum(u_i w_i)`.
    pub fn dot(&self, other: &Self) -> T {
        debug_assert!(self.same_grid(other));
        self.h() * self.samples.dot(&other.samples)
    }

    pub fn norm_sq(&self) -> T {
        self.h() * self.samples.dot(&self.samples)
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    /// Weighted l1 norm `h * sum |u_i|`.
    pub fn l1_norm(&self) -> T {
        self.h() * self.samples.iter().map(|v| v.abs()).sum::<T>()
    }

    pub fn max_abs(&self) -> T {
        self.samples
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|v| v.is_zero())
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_grid(other)?;
        Ok(Self::on_grid_unchecked(
            &self.samples - &other.samples,
            self.interval,
        ))
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_grid(other)?;
        Ok(Self::on_grid_unchecked(
            &self.samples + &other.samples,
            self.interval,
        ))
    }

    /// `||self - other||`, panicking on grid mismatch.
    pub fn distance(&self, other: &Self) -> T {
        assert!(
            self.same_grid(other),
            "distance between signals on different grids"
        );
        let h = self.h();
        let s = Zip::from(&self.samples)
            .and(&other.samples)
            .fold(T::zero(), |acc, &a, &b| acc + (a - b) * (a - b));
        (h * s).sqrt()
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self::on_grid_unchecked(&self.samples * factor, self.interval)
    }

    /// `self + factor * other`
    pub fn axpy(&self, factor: T, other: &Self) -> Self {
        assert!(
            self.same_grid(other),
            "axpy between signals on different grids"
        );
        let mut out = self.samples.clone();
        out.scaled_add(factor, &other.samples);
        Self::on_grid_unchecked(out, self.interval)
    }
}

pub(crate) fn midpoints<T: Real>(n: usize, interval: (T, T)) -> Array1<T> {
    let h = (interval.1 - interval.0) / T::from_usize_lossy(n.max(1));
    Array1::from_shape_fn(n, |i| interval.0 + (T::from_usize_lossy(i) + T::half()) * h)
}

/// Dense operator between two discretized `L^2` spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOp<T> {
    matrix: Array2<T>,
    domain: (T, T),
    codomain: (T, T),
}

impl<T: Real> LinearOp<T> {
    /// `matrix` is `m x n`: it maps `n` domain samples to `m` codomain samples.
    pub fn from_matrix(matrix: Array2<T>, domain: (T, T), codomain: (T, T)) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(AdpError::InvalidDimension("empty operator matrix".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(AdpError::InvalidInput(
                "operator entries must be finite".into(),
            ));
        }
        for iv in [domain, codomain] {
            if !(iv.1 > iv.0) {
                return Err(invalid_param("interval", "needs a < b"));
            }
        }
        Ok(Self {
            matrix,
            domain,
            codomain,
        })
    }

    pub fn identity(n: usize, interval: (T, T)) -> Result<Self> {
        Self::from_matrix(Array2::eye(n), interval, interval)
    }

    pub fn zeros(m: usize, n: usize, domain: (T, T), codomain: (T, T)) -> Result<Self> {
        Self::from_matrix(Array2::zeros((m, n)), domain, codomain)
    }

    /// New operator with the same spaces. The caller guarantees finiteness.
    pub fn with_matrix(&self, matrix: Array2<T>) -> Result<Self> {
        if matrix.dim() != self.matrix.dim() {
            return Err(AdpError::InvalidDimension(format!(
                "expected {:?} matrix, got {:?}",
                self.matrix.dim(),
                matrix.dim()
            )));
        }
        Self::from_matrix(matrix, self.domain, self.codomain)
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<T> {
        self.matrix
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn domain(&self) -> (T, T) {
        self.domain
    }

    pub fn codomain(&self) -> (T, T) {
        self.codomain
    }

    pub fn h_in(&self) -> T {
        (self.domain.1 - self.domain.0) / T::from_usize_lossy(self.ncols())
    }

    pub fn h_out(&self) -> T {
        (self.codomain.1 - self.codomain.0) / T::from_usize_lossy(self.nrows())
    }

    /// Factor `c` in `Op^* = c M^T`.
    pub fn adjoint_scale(&self) -> T {
        self.h_out() / self.h_in()
    }

    pub fn accepts(&self, x: &Signal<T>) -> bool {
        x.len() == self.ncols() && x.interval() == self.domain
    }

    pub fn produces(&self, y: &Signal<T>) -> bool {
        y.len() == self.nrows() && y.interval() == self.codomain
    }

    pub(crate) fn check_domain(&self, x: &Signal<T>, what: &str) -> Result<()> {
        if self.accepts(x) {
            Ok(())
        } else {
            Err(AdpError::InvalidDimension(format!(
                "{what}: operator domain has {} samples, signal has {}",
                self.ncols(),
                x.len()
            )))
        }
    }

    pub(crate) fn check_codomain(&self, y: &Signal<T>, what: &str) -> Result<()> {
        if self.produces(y) {
            Ok(())
        } else {
            Err(AdpError::InvalidDimension(format!(
                "{what}: operator codomain has {} samples, signal has {}",
                self.nrows(),
                y.len()
            )))
        }
    }

    pub fn try_apply(&self, x: &Signal<T>) -> Result<Signal<T>> {
        self.check_domain(x, "apply")?;
        Ok(self.apply(x))
    }

    /// Panics if `x` is not on the domain grid.
    pub fn apply(&self, x: &Signal<T>) -> Signal<T> {
        assert!(self.accepts(x), "signal is not on the operator domain grid");
        Signal::on_grid_unchecked(self.matrix.dot(x.samples()), self.codomain)
    }

    pub fn try_adjoint_apply(&self, w: &Signal<T>) -> Result<Signal<T>> {
        self.check_codomain(w, "adjoint")?;
        Ok(self.adjoint_apply(w))
    }

    /// Panics if `w` is not on the codomain grid.
    pub fn adjoint_apply(&self, w: &Signal<T>) -> Signal<T> {
        assert!(
            self.produces(w),
            "signal is not on the operator codomain grid"
        );
        let out = self.apply_adjoint_raw(w.samples().view());
        Signal::on_grid_unchecked(out, self.domain)
    }

    pub(crate) fn apply_raw(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        self.matrix.dot(&x)
    }

    pub(crate) fn apply_adjoint_raw(&self, w: ArrayView1<'_, T>) -> Array1<T> {
        let mut out = self.matrix.t().dot(&w);
        out *= self.adjoint_scale();
        out
    }

    /// Matrix of `Op^* Op` acting on domain samples.
    pub fn gram(&self) -> Array2<T> {
        let mut g = self.matrix.t().dot(&self.matrix);
        g *= self.adjoint_scale();
        g
    }

    /// Frobenius norm of the matrix difference, the metric used for the
    /// proximity penalty `||B - A||^2`.
    pub fn frobenius_distance(&self, other: &Self) -> T {
        assert_eq!(self.matrix.dim(), other.matrix.dim());
        Zip::from(&self.matrix)
            .and(&other.matrix)
            .fold(T::zero(), |acc, &a, &b| acc + (a - b) * (a - b))
            .sqrt()
    }

    pub fn max_abs_difference(&self, other: &Self) -> T {
        assert_eq!(self.matrix.dim(), other.matrix.dim());
        Zip::from(&self.matrix)
            .and(&other.matrix)
            .fold(T::zero(), |acc, &a, &b| acc.max((a - b).abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|v| v.is_zero())
    }
}

/// Left-endpoint cumulative integration `(A x)(t) = int_a^t x(s) ds`.
///
/// Row `i` sums `h * x_j` for `j <= i`; the output sample `i` approximates
/// the antiderivative at the midpoint of cell `i`.
pub fn make_integration_operator<T: Real>(n: usize, interval: (T, T)) -> Result<LinearOp<T>> {
    if n < 2 {
        return Err(AdpError::InvalidDimension(format!(
            "integration operator needs n >= 2, got {n}"
        )));
    }
    let h = (interval.1 - interval.0) / T::from_usize_lossy(n);
    let matrix = Array2::from_shape_fn((n, n), |(i, j)| if j <= i { h } else { T::zero() });
    LinearOp::from_matrix(matrix, interval, interval)
}

/// Truncated Gaussian `exp(-t^2 / (2 sigma^2))` sampled at `k h`,
/// `|k h| <= 4 sigma`, normalized to `h * sum = 1`.
pub fn gaussian_taps<T: Real>(sigma: T, h: T) -> Result<Array1<T>> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(invalid_param(
            "sigma",
            format!("must be positive, got {sigma}"),
        ));
    }
    let half_width = (T::lit(4.0) * sigma / h)
        .floor()
        .to_usize()
        .ok_or_else(|| invalid_param("sigma", "kernel support too large"))?;
    let two_var = T::two() * sigma * sigma;
    let mut taps = Array1::from_shape_fn(2 * half_width + 1, |k| {
        let t = (T::from_usize_lossy(k) - T::from_usize_lossy(half_width)) * h;
        (-(t * t) / two_var).exp()
    });
    let mass = h * taps.sum();
    taps /= mass;
    Ok(taps)
}

/// Zero-padded convolution with a centered tap vector of odd length `2K + 1`:
/// `M_ij = h * taps[i - j + K]` for `|i - j| <= K`.
pub fn convolution_from_taps<T: Real>(
    n: usize,
    interval: (T, T),
    taps: ArrayView1<'_, T>,
) -> Result<LinearOp<T>> {
    if n < 2 {
        return Err(AdpError::InvalidDimension(format!(
            "convolution operator needs n >= 2, got {n}"
        )));
    }
    if taps.len() % 2 == 0 {
        return Err(AdpError::InvalidDimension(format!(
            "convolution taps must have odd length, got {}",
            taps.len()
        )));
    }
    let k = taps.len() / 2;
    let h = (interval.1 - interval.0) / T::from_usize_lossy(n);
    let matrix = Array2::from_shape_fn((n, n), |(i, j)| {
        let offset = i as isize - j as isize;
        if offset.unsigned_abs() <= k {
            h * taps[(offset + k as isize) as usize]
        } else {
            T::zero()
        }
    });
    LinearOp::from_matrix(matrix, interval, interval)
}

/// Gaussian blur `A x = g * x` with kernel width `sigma`.
pub fn make_convolution_operator<T: Real>(
    n: usize,
    interval: (T, T),
    sigma: T,
) -> Result<LinearOp<T>> {
    if n < 2 {
        return Err(AdpError::InvalidDimension(format!(
            "convolution operator needs n >= 2, got {n}"
        )));
    }
    let h = (interval.1 - interval.0) / T::from_usize_lossy(n);
    let taps = gaussian_taps(sigma, h)?;
    convolution_from_taps(n, interval, taps.view())
}

/// Largest singular value by power iteration on `Op^* Op`.
///
/// Stops once the relative change of the estimate drops below `tol / 10`.
/// The start vector comes from a fixed seed, so the result is deterministic.
pub fn operator_norm<T: Real>(op: &LinearOp<T>, tol: T) -> T {
    if op.is_zero() {
        return T::zero();
    }
    let n = op.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(NORM_SEED);
    let mut u = Array1::from_shape_fn(n, |_| T::lit(rng.random_range(-1.0..1.0)));
    let stop = tol / T::lit(10.0);
    let mut estimate = T::zero();
    for _ in 0..100_000 {
        let nrm = u.dot(&u).sqrt();
        if nrm.is_zero() {
            return T::zero();
        }
        u /= nrm;
        // Rayleigh quotient of Op^* Op in the weighted products; the common
        // factor h_in cancels.
        let w = op.apply_adjoint_raw(op.apply_raw(u.view()).view());
        let next = u.dot(&w);
        let converged = (next - estimate).abs() <= stop * next.abs();
        estimate = next;
        u = w;
        if converged {
            break;
        }
    }
    estimate.max(T::zero()).sqrt()
}

/// Sums `grad[i, j]` along each diagonal `i - j = k - K`, scaled by `h`:
/// the chain rule from matrix entries to convolution taps.
pub(crate) fn diagonal_sums<T: Real>(
    grad: ArrayView2<'_, T>,
    half_width: usize,
    h: T,
) -> Array1<T> {
    let (m, n) = grad.dim();
    let mut out = Array1::<T>::zeros(2 * half_width + 1);
    for i in 0..m {
        let row = grad.index_axis(Axis(0), i);
        for j in 0..n {
            let offset = i as isize - j as isize;
            if offset.unsigned_abs() <= half_width {
                out[(offset + half_width as isize) as usize] += row[j];
            }
        }
    }
    out * h
}
