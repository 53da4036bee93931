//! Convex penalties `R`, their proximal maps, subgradients and the pairing
//! functional `R~(x) = min_{v in dR(x)} <v, x>`.
//!
//! All norms are the `h`-weighted grid norms of [`Signal`]. With those
//! weights the Riesz representative of the elastic-net subgradient is
//! componentwise `alpha1 * sign(x_i) + alpha2 * x_i`, and the proximal map
//! stays componentwise.

use ndarray::{ArrayView1, ArrayViewMut1, Zip};

use crate::error::{invalid_param, Result};
use crate::operators::Signal;
use crate::scalar::Real;

/// `R(x) = alpha1 ||x||_1 + (alpha2 / 2) ||x||^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticNet<T> {
    alpha1: T,
    alpha2: T,
}

impl<T: Real> ElasticNet<T> {
    pub fn new(alpha1: T, alpha2: T) -> Result<Self> {
        if !(alpha1 >= T::zero()) || !alpha1.is_finite() {
            return Err(invalid_param(
                "alpha1",
                format!("must be >= 0, got {alpha1}"),
            ));
        }
        if !(alpha2 >= T::zero()) || !alpha2.is_finite() {
            return Err(invalid_param(
                "alpha2",
                format!("must be >= 0, got {alpha2}"),
            ));
        }
        if alpha1 + alpha2 <= T::zero() {
            return Err(invalid_param("alpha1 + alpha2", "must be positive"));
        }
        Ok(Self { alpha1, alpha2 })
    }

    pub fn alpha1(&self) -> T {
        self.alpha1
    }

    pub fn alpha2(&self) -> T {
        self.alpha2
    }
}

/// `R(x) = ||x||^2 / 2`, the classical Tikhonov penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SquaredL2;

/// The penalties the solvers understand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty<T> {
    ElasticNet(ElasticNet<T>),
    SquaredL2(SquaredL2),
}

impl<T: Real> From<ElasticNet<T>> for Penalty<T> {
    fn from(p: ElasticNet<T>) -> Self {
        Penalty::ElasticNet(p)
    }
}

impl<T: Real> From<SquaredL2> for Penalty<T> {
    fn from(p: SquaredL2) -> Self {
        Penalty::SquaredL2(p)
    }
}

impl<T: Real> Penalty<T> {
    pub fn elastic_net(alpha1: T, alpha2: T) -> Result<Self> {
        ElasticNet::new(alpha1, alpha2).map(Penalty::ElasticNet)
    }

    pub fn squared_l2() -> Self {
        Penalty::SquaredL2(SquaredL2)
    }

    /// `(alpha1, alpha2)` of the equivalent elastic net; `SquaredL2` is `(0, 1)`.
    pub fn weights(&self) -> (T, T) {
        match self {
            Penalty::ElasticNet(p) => (p.alpha1, p.alpha2),
            Penalty::SquaredL2(_) => (T::zero(), T::one()),
        }
    }

    pub fn is_smooth(&self) -> bool {
        self.weights().0.is_zero()
    }

    pub fn is_strongly_convex(&self) -> bool {
        self.weights().1 > T::zero()
    }

    pub fn value(&self, x: &Signal<T>) -> T {
        let (a1, a2) = self.weights();
        a1 * x.l1_norm() + a2 * T::half() * x.norm_sq()
    }

    /// `argmin_u ||u - z||^2 / 2 + step * R(u)`.
    pub fn prox(&self, z: &Signal<T>, step: T) -> Signal<T> {
        let mut out = z.samples().clone();
        let (a1, a2) = self.weights();
        shrink_in_place(out.view_mut(), step * a1, step * a2);
        Signal::on_grid_unchecked(out, z.interval())
    }

    /// `R~(x) = alpha1 ||x||_1 + alpha2 ||x||^2`.
    pub fn pairing(&self, x: &Signal<T>) -> T {
        let (a1, a2) = self.weights();
        a1 * x.l1_norm() + a2 * x.norm_sq()
    }

    /// The subgradient attaining the minimum in `R~`: components at kinks
    /// are set to zero.
    pub fn min_subgradient(&self, x: &Signal<T>) -> Signal<T> {
        let (a1, a2) = self.weights();
        let v = x.samples().mapv(|xi| {
            if xi.is_zero() {
                T::zero()
            } else {
                a1 * xi.signum() + a2 * xi
            }
        });
        Signal::on_grid_unchecked(v, x.interval())
    }

    /// Componentwise distance (in the weighted norm) from `w` to `dR(x)`.
    pub fn subdifferential_distance(&self, x: &Signal<T>, w: &Signal<T>) -> T {
        assert!(x.same_grid(w));
        let (a1, a2) = self.weights();
        let sq = Zip::from(x.samples())
            .and(w.samples())
            .fold(T::zero(), |acc, &xi, &wi| {
                let d = if xi.is_zero() {
                    (wi.abs() - a1).max(T::zero())
                } else {
                    wi - (a1 * xi.signum() + a2 * xi)
                };
                acc + d * d
            });
        (x.h() * sq).sqrt()
    }

    /// Membership test `v in dR(x)`: interval check at zero components,
    /// equality elsewhere, both with absolute tolerance `tol`.
    pub fn is_subgradient(&self, x: &Signal<T>, v: &Signal<T>, tol: T) -> bool {
        self.max_subgradient_violation(x, v) <= tol
    }

    pub(crate) fn max_subgradient_violation(&self, x: &Signal<T>, v: &Signal<T>) -> T {
        assert!(x.same_grid(v));
        let (a1, a2) = self.weights();
        Zip::from(x.samples())
            .and(v.samples())
            .fold(T::zero(), |acc, &xi, &vi| {
                let viol = if xi.is_zero() {
                    ((vi - a2 * xi).abs() - a1).max(T::zero())
                } else {
                    (vi - (a1 * xi.signum() + a2 * xi)).abs()
                };
                acc.max(viol)
            })
    }
}

/// Soft threshold by `threshold`, then divide by `1 + shrink`.
pub(crate) fn shrink_in_place<T: Real>(mut z: ArrayViewMut1<'_, T>, threshold: T, shrink: T) {
    let denom = T::one() + shrink;
    z.mapv_inplace(|zi| soft_threshold(zi, threshold) / denom);
}

#[inline]
pub(crate) fn soft_threshold<T: Real>(z: T, threshold: T) -> T {
    let mag = z.abs() - threshold;
    if mag > T::zero() {
        z.signum() * mag
    } else {
        T::zero()
    }
}

/// The two-dimensional functional `max(3|x1 - 5|, |x2|)` whose pairing
/// `<v, x>` has non-convex sublevel sets.
pub fn remark35_functional(x1: f64, x2: f64) -> f64 {
    let first = 3.0 * (x1 - 5.0).abs();
    if first >= x2.abs() {
        first
    } else {
        x2.abs()
    }
}

/// Gradients of the active pieces of [`remark35_functional`] at `(x1, x2)`.
/// The subdifferential is their convex hull.
pub fn remark35_active_gradients(x1: f64, x2: f64) -> Vec<[f64; 2]> {
    let first = 3.0 * (x1 - 5.0).abs();
    let second = x2.abs();
    let mut grads = Vec::with_capacity(4);
    if first >= second {
        if x1 > 5.0 {
            grads.push([3.0, 0.0]);
        } else if x1 < 5.0 {
            grads.push([-3.0, 0.0]);
        } else {
            grads.push([3.0, 0.0]);
            grads.push([-3.0, 0.0]);
        }
    }
    if second >= first {
        if x2 > 0.0 {
            grads.push([0.0, 1.0]);
        } else if x2 < 0.0 {
            grads.push([0.0, -1.0]);
        } else {
            grads.push([0.0, 1.0]);
            grads.push([0.0, -1.0]);
        }
    }
    grads
}

/// `min_{v in dR(x)} <v, x>` for [`remark35_functional`]. A linear function
/// on a polytope attains its minimum at a vertex.
pub fn remark35_pairing(x1: f64, x2: f64) -> f64 {
    remark35_active_gradients(x1, x2)
        .into_iter()
        .map(|g| g[0] * x1 + g[1] * x2)
        .fold(f64::INFINITY, f64::min)
}

/// Raw-sample convenience used by the solvers: weighted l1 and l2 terms.
pub(crate) fn value_raw<T: Real>(pen: &Penalty<T>, h: T, x: ArrayView1<'_, T>) -> T {
    let (a1, a2) = pen.weights();
    let l1: T = x.iter().map(|v| v.abs()).sum();
    h * (a1 * l1 + a2 * T::half() * x.dot(&x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(v: &[f64]) -> Signal<f64> {
        Signal::from_vec(v.to_vec(), (0.0, v.len() as f64)).unwrap()
    }

    #[test]
    fn rejects_invalid_weights() {
        assert!(ElasticNet::new(-1.0, 1.0).is_err());
        assert!(ElasticNet::new(1.0, -1.0).is_err());
        assert!(ElasticNet::new(0.0, 0.0).is_err());
        assert!(ElasticNet::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn value_examples() {
        let p = Penalty::elastic_net(1.0, 1.0).unwrap();
        assert_eq!(p.value(&sig(&[0.0, 0.0])), 0.0);
        assert!((p.value(&sig(&[2.0, 0.0])) - 4.0).abs() < 1e-15);
        let q = Penalty::<f64>::squared_l2();
        assert!((q.value(&sig(&[3.0, 4.0])) - 12.5).abs() < 1e-15);
    }

    #[test]
    fn prox_examples() {
        let p = Penalty::elastic_net(1.0, 1.0).unwrap();
        let out = p.prox(&sig(&[2.0, -0.5]), 1.0);
        assert!((out.samples()[0] - 0.5).abs() < 1e-15);
        assert_eq!(out.samples()[1], 0.0);

        let l2 = Penalty::elastic_net(0.0, 1.0).unwrap();
        let z = sig(&[1.0, -4.0, 2.5]);
        assert_eq!(l2.prox(&z, 1.0), z.scaled(0.5));

        let inside = p.prox(&sig(&[0.3, -0.9, 1.0]), 1.0);
        assert!(inside.is_zero());
    }

    #[test]
    fn subgradient_examples() {
        let p = Penalty::elastic_net(1.0, 0.5).unwrap();
        let v = p.min_subgradient(&sig(&[1.0, 0.0, -2.0]));
        assert_eq!(v.samples().to_vec(), vec![1.5, 0.0, -2.0]);
        assert!(p.is_subgradient(&sig(&[1.0, 0.0, -2.0]), &v, 1e-12));
        // any value in [-alpha1, alpha1] is admissible at a kink
        let w = sig(&[1.5, 0.9, -2.0]);
        assert!(p.is_subgradient(&sig(&[1.0, 0.0, -2.0]), &w, 1e-12));
        let bad = sig(&[1.5, 1.1, -2.0]);
        assert!(!p.is_subgradient(&sig(&[1.0, 0.0, -2.0]), &bad, 1e-12));

        let q = Penalty::<f64>::squared_l2();
        let x = sig(&[0.3, -1.0]);
        assert_eq!(q.min_subgradient(&x), x);
        assert!(p.min_subgradient(&sig(&[0.0, 0.0])).is_zero());
    }

    #[test]
    fn pairing_examples() {
        let q = Penalty::<f64>::squared_l2();
        assert!((q.pairing(&sig(&[3.0, 0.0])) - 9.0).abs() < 1e-15);
        assert_eq!(q.pairing(&sig(&[0.0, 0.0])), 0.0);
        let p = Penalty::elastic_net(0.7, 0.2).unwrap();
        assert_eq!(p.pairing(&sig(&[0.0, 0.0, 0.0])), 0.0);
    }

    #[test]
    fn remark35_values() {
        assert_eq!(remark35_functional(5.0, 0.0), 0.0);
        assert_eq!(remark35_functional(6.0, 0.0), 3.0);
        assert_eq!(remark35_functional(5.0, 1.0), 1.0);
        assert_eq!(remark35_pairing(9.0, 13.0), 13.0);
        assert_eq!(remark35_pairing(9.0, 0.0), 27.0);
        assert_eq!(remark35_pairing(5.0, 0.0), -15.0);
    }
}
