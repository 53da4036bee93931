//! Constructive side of the ADP theory: which `x^` can be the inner
//! solution for some operator `B`, an explicit rank-two `B` when one
//! exists, the Tikhonov parameter equivalent to an ADP solution, and a
//! small example of a non-convex pairing constraint.

use crate::error::{AdpError, Result};
use crate::operators::{LinearOp, Signal};
use crate::penalties::{remark35_pairing, Penalty};
use crate::scalar::Real;
use crate::variational::{tikhonov_l2_solve, x_of_b, IstaConfig};

/// Absolute tolerance of the subgradient check in [`construct_b`].
pub const SUBGRADIENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility<T> {
    pub feasible: bool,
    /// `|y|^2 / 4 - alpha R~(x^)`; nonnegative iff feasible.
    pub margin: T,
    pub pairing: T,
    pub bound: T,
}

/// Whether `x^` can be `x(B)` for some `B`: `alpha R~(x^) <= |y|^2 / 4`.
pub fn feasibility_check<T: Real>(
    xhat: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
    y: &Signal<T>,
) -> Result<Feasibility<T>> {
    if y.is_zero() {
        return Err(AdpError::InvalidInput(
            "feasibility needs nonzero data".into(),
        ));
    }
    let pairing = pen.pairing(xhat);
    let bound = y.norm_sq() / T::lit(4.0);
    let margin = bound - alpha * pairing;
    Ok(Feasibility {
        feasible: margin >= T::zero(),
        margin,
        pairing,
        bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Root {
    #[default]
    Minus,
    Plus,
}

/// `B x = (sigma1 <x, x^> + sigma2 <x, v_perp>) y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTwoB<T> {
    pub xhat: Signal<T>,
    pub v_perp: Signal<T>,
    pub y: Signal<T>,
    pub sigma1: T,
    pub sigma2: T,
}

impl<T: Real> RankTwoB<T> {
    pub fn apply(&self, x: &Signal<T>) -> Result<Signal<T>> {
        if !x.same_grid(&self.xhat) {
            return Err(AdpError::InvalidDimension(
                "input not on the x^ grid".into(),
            ));
        }
        let coef = self.sigma1 * x.dot(&self.xhat) + self.sigma2 * x.dot(&self.v_perp);
        Ok(self.y.scaled(coef))
    }

    /// Dense matrix `B_ij = y_i h_x (sigma1 x^_j + sigma2 v_perp_j)`.
    pub fn materialize(&self) -> LinearOp<T> {
        let h = self.xhat.h();
        let row = self.xhat.samples() * self.sigma1 + &(self.v_perp.samples() * self.sigma2);
        let row = row * h;
        let ys = self.y.samples();
        let matrix = ndarray::Array2::from_shape_fn((ys.len(), row.len()), |(i, j)| ys[i] * row[j]);
        LinearOp::from_matrix(matrix, self.xhat.interval(), self.y.interval())
            .expect("rank-two factors are finite")
    }
}

/// Builds `B` with `-B^*(B x^ - y) = alpha v`, so that `x^` minimizes
/// `|B x - y|^2 / 2 + alpha R(x)`, using the minus root for `sigma1`.
pub fn construct_b<T: Real>(
    xhat: &Signal<T>,
    v: &Signal<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
) -> Result<RankTwoB<T>> {
    construct_b_with_root(xhat, v, y, pen, alpha, Root::Minus)
}

/// As [`construct_b`] with an explicit root. The plus root falls back to
/// the minus root where it would make `sigma2` blow up.
pub fn construct_b_with_root<T: Real>(
    xhat: &Signal<T>,
    v: &Signal<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
    root: Root,
) -> Result<RankTwoB<T>> {
    if !xhat.same_grid(v) {
        return Err(AdpError::InvalidDimension(
            "x^ and v on different grids".into(),
        ));
    }
    if y.is_zero() {
        return Err(AdpError::InvalidInput(
            "construction needs nonzero data".into(),
        ));
    }
    if !(alpha > T::zero()) {
        return Err(crate::error::invalid_param(
            "alpha",
            format!("must be positive, got {alpha}"),
        ));
    }
    let violation = pen.max_subgradient_violation(xhat, v);
    if violation > T::lit(SUBGRADIENT_TOL) {
        return Err(AdpError::InvalidSubgradient {
            violation: violation.to_f64_lossy(),
        });
    }

    let y_sq = y.norm_sq();
    let pairing = v.dot(xhat);
    let bound = y_sq / T::lit(4.0);
    if alpha * pairing > bound {
        return Err(AdpError::Infeasible {
            pairing: (alpha * pairing).to_f64_lossy(),
            bound: bound.to_f64_lossy(),
        });
    }

    let xhat_sq = xhat.norm_sq();
    if xhat_sq == T::zero() {
        // B^* y = alpha v
        return Ok(RankTwoB {
            xhat: xhat.clone(),
            v_perp: v.clone(),
            y: y.clone(),
            sigma1: T::zero(),
            sigma2: alpha / y_sq,
        });
    }

    let mu = pairing / xhat_sq;
    let v_perp = v.axpy(-mu, xhat);
    let disc = (T::one() - T::lit(4.0) * alpha * pairing / y_sq).max(T::zero());
    let sqrt_disc = disc.sqrt();
    // (1 - sqrt D) / (2 |x^|^2) without cancellation
    let minus = T::two() * alpha * mu / (y_sq * (T::one() + sqrt_disc));
    let sigma1 = match root {
        Root::Minus => minus,
        Root::Plus => {
            let plus = (T::one() + sqrt_disc) / (T::two() * xhat_sq);
            let denom = T::one() - plus * xhat_sq;
            if denom.abs() <= T::epsilon().sqrt() {
                minus
            } else {
                plus
            }
        }
    };
    let sigma2 = alpha / (y_sq * (T::one() - sigma1 * xhat_sq));
    Ok(RankTwoB {
        xhat: xhat.clone(),
        v_perp,
        y: y.clone(),
        sigma1,
        sigma2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizerCheck<T> {
    /// Distance from `-B^*(B x^ - y) / alpha` to `dR(x^)`.
    pub residual: T,
    /// `|x(B) - x^|` with `x(B)` from ISTA started at zero.
    pub ista_distance: T,
}

/// [`verify_minimizer_with`] at inner tolerance `1e-13`.
pub fn verify_minimizer<T: Real>(
    b: &LinearOp<T>,
    xhat: &Signal<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
) -> Result<MinimizerCheck<T>> {
    let cfg = IstaConfig::default()
        .with_tol(T::lit(1e-13))
        .with_max_iter(2_000_000);
    verify_minimizer_with(b, xhat, y, pen, alpha, &cfg)
}

pub fn verify_minimizer_with<T: Real>(
    b: &LinearOp<T>,
    xhat: &Signal<T>,
    y: &Signal<T>,
    pen: &Penalty<T>,
    alpha: T,
    cfg: &IstaConfig<T>,
) -> Result<MinimizerCheck<T>> {
    let res = b.try_apply(xhat)?.axpy(-T::one(), y);
    let w = b.try_adjoint_apply(&res)?.scaled(-T::one() / alpha);
    let residual = pen.subdifferential_distance(xhat, &w);
    let x = x_of_b(b, y, pen, alpha, cfg)?.solution;
    Ok(MinimizerCheck {
        residual,
        ista_distance: x.distance(xhat),
    })
}

/// The Tikhonov parameter `a~` with `(A^*A + a~ I)^{-1} A^* y` matching
/// the norm of `x_adp`, by bisection on the decreasing map `a~ -> |x_a~|`.
pub fn equivalent_tikhonov_parameter<T: Real>(
    a: &LinearOp<T>,
    y: &Signal<T>,
    x_adp: &Signal<T>,
) -> Result<T> {
    a.check_domain(x_adp, "ADP solution")?;
    let target = x_adp.norm();
    let rel = T::lit(1e-10);
    if let Ok(ls) = tikhonov_l2_solve(a, y, T::zero()) {
        let ls_norm = ls.norm();
        if target > ls_norm * (T::one() + rel) {
            return Err(AdpError::Inconsistent(format!(
                "|x_adp| = {target:e} exceeds the least-squares norm {ls_norm:e}"
            )));
        }
        if target >= ls_norm * (T::one() - rel) {
            return Ok(T::zero());
        }
    }
    if target == T::zero() {
        return Err(AdpError::Inconsistent(
            "a zero solution needs an infinite parameter".into(),
        ));
    }

    let norm_at = |t: T| tikhonov_l2_solve(a, y, t).map(|x| x.norm());
    let mut hi = crate::operators::operator_norm(a, T::lit(1e-8))
        .powi(2)
        .max(T::epsilon());
    let mut doublings = 0;
    while norm_at(hi)? > target {
        hi = hi * T::two();
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(AdpError::NoConvergence(
                "no upper bracket for the parameter".into(),
            ));
        }
    }
    let mut lo = T::zero();
    for _ in 0..200 {
        // geometric midpoints once the lower end is positive
        let mid = if lo > T::zero() {
            (lo * hi).sqrt()
        } else {
            hi * T::half()
        };
        if !(mid > lo && mid < hi) {
            break;
        }
        if norm_at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    Ok(if lo > T::zero() {
        (lo * hi).sqrt()
    } else {
        hi * T::half()
    })
}

/// Two points satisfying `R~(x) <= c` whose midpoint does not, for the
/// planar functional `R(x) = max(3|x1 - 5|, |x2|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Remark35Demo {
    pub level: f64,
    pub x_a: [f64; 2],
    pub x_b: [f64; 2],
    pub midpoint: [f64; 2],
    pub pairing_a: f64,
    pub pairing_b: f64,
    pub pairing_mid: f64,
}

impl Remark35Demo {
    /// `min(c - R~(x_a), c - R~(x_b), R~(mid) - c)`.
    pub fn margin(&self) -> f64 {
        (self.level - self.pairing_a)
            .min(self.level - self.pairing_b)
            .min(self.pairing_mid - self.level)
    }
}

/// Grid search over pairs in `[0, 10]^2` (spacing 1/4) for the pair whose
/// midpoint violates a common pairing level by the widest margin. The
/// level is the midpoint between the larger endpoint pairing and the
/// midpoint pairing.
pub fn remark35_demo() -> Remark35Demo {
    let steps = 40usize;
    let pts: Vec<([f64; 2], f64)> = (0..=steps)
        .flat_map(|i| (0..=steps).map(move |j| [i as f64 * 0.25, j as f64 * 0.25]))
        .map(|p| (p, remark35_pairing(p[0], p[1])))
        .collect();
    let mut best: Option<(f64, usize, usize)> = None;
    for (ia, (pa, ra)) in pts.iter().enumerate() {
        for (ib, (pb, rb)) in pts.iter().enumerate().skip(ia + 1) {
            let mid = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
            let gap = remark35_pairing(mid[0], mid[1]) - ra.max(*rb);
            if best.is_none_or(|(g, _, _)| gap > g) {
                best = Some((gap, ia, ib));
            }
        }
    }
    let (_, ia, ib) = best.expect("grid is nonempty");
    let (x_a, pairing_a) = pts[ia];
    let (x_b, pairing_b) = pts[ib];
    let midpoint = [(x_a[0] + x_b[0]) / 2.0, (x_a[1] + x_b[1]) / 2.0];
    let pairing_mid = remark35_pairing(midpoint[0], midpoint[1]);
    Remark35Demo {
        level: (pairing_a.max(pairing_b) + pairing_mid) / 2.0,
        x_a,
        x_b,
        midpoint,
        pairing_a,
        pairing_b,
        pairing_mid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::make_integration_operator;
    use crate::variational::adp_exact_solve;

    fn unit() -> (f64, f64) {
        (0.0, 1.0)
    }

    fn sig(v: Vec<f64>) -> Signal<f64> {
        let n = v.len() as f64;
        Signal::from_vec(v, (0.0, n)).unwrap()
    }

    #[test]
    fn zero_xhat_is_always_feasible() {
        let y = sig(vec![1.0, 2.0, 2.0]);
        let x = sig(vec![0.0; 3]);
        let pen = Penalty::elastic_net(1.0, 1.0).unwrap();
        let f = feasibility_check(&x, &pen, 3.0, &y).unwrap();
        assert!(f.feasible);
        assert_eq!(f.margin, y.norm_sq() / 4.0);
    }

    #[test]
    fn squared_l2_eighth_bound_is_feasible() {
        let y = sig(vec![2.0, 0.0]);
        let x = sig(vec![1.0, 1.0]);
        // alpha |x|^2 = |y|^2 / 8
        let alpha = y.norm_sq() / 8.0 / x.norm_sq();
        let f = feasibility_check(&x, &Penalty::squared_l2(), alpha, &y).unwrap();
        assert!(f.feasible);
        assert!((f.margin - y.norm_sq() / 8.0).abs() < 1e-14);
    }

    #[test]
    fn zero_data_is_rejected() {
        let y = sig(vec![0.0, 0.0]);
        let x = sig(vec![1.0, 0.0]);
        assert!(matches!(
            feasibility_check(&x, &Penalty::squared_l2(), 1.0, &y),
            Err(AdpError::InvalidInput(_))
        ));
    }

    #[test]
    fn zero_xhat_with_zero_subgradient_gives_zero_operator() {
        let y = sig(vec![1.0, -1.0, 0.5]);
        let x = sig(vec![0.0; 3]);
        let pen = Penalty::elastic_net(1.0, 0.5).unwrap();
        let b = construct_b(&x, &x, &y, &pen, 0.3).unwrap();
        let op = b.materialize();
        assert!(op.is_zero());
        let check = verify_minimizer(&op, &x, &y, &pen, 0.3).unwrap();
        assert_eq!(check.ista_distance, 0.0);
    }

    #[test]
    fn squared_l2_construction_satisfies_optimality() {
        let y = sig(vec![1.0, 2.0, -1.0, 0.5]);
        let x = sig(vec![0.3, -0.2, 0.1, 0.4]);
        let alpha = 0.5;
        let pen = Penalty::squared_l2();
        let b = construct_b(&x, &x, &y, &pen, alpha).unwrap();
        assert!(b.v_perp.norm() < 1e-15);
        let op = b.materialize();
        let lhs = op
            .adjoint_apply(&op.apply(&x).axpy(-1.0, &y))
            .axpy(alpha, &x);
        assert!(lhs.norm() <= 1e-10);
    }

    #[test]
    fn materialized_matches_rank_two_form() {
        let y = sig(vec![1.0, 2.0, -1.0]);
        let x = sig(vec![0.3, 0.0, -0.1]);
        let pen = Penalty::elastic_net(0.2, 1.0).unwrap();
        let v = pen.min_subgradient(&x);
        let b = construct_b(&x, &v, &y, &pen, 0.4).unwrap();
        assert!(b.v_perp.dot(&x).abs() < 1e-12);
        let probe = sig(vec![0.7, -1.1, 0.2]);
        let d = b
            .apply(&probe)
            .unwrap()
            .distance(&b.materialize().apply(&probe));
        assert!(d < 1e-13);
    }

    #[test]
    fn both_roots_satisfy_optimality() {
        let y = sig(vec![1.0, 2.0, -1.0, 3.0]);
        let x = sig(vec![0.3, 0.0, -0.1, 0.2]);
        let pen = Penalty::elastic_net(0.2, 1.0).unwrap();
        let v = pen.min_subgradient(&x);
        for root in [Root::Minus, Root::Plus] {
            let b = construct_b_with_root(&x, &v, &y, &pen, 0.4, root).unwrap();
            let check = verify_minimizer(&b.materialize(), &x, &y, &pen, 0.4).unwrap();
            assert!(check.residual <= 1e-10, "{root:?}: {}", check.residual);
        }
    }

    #[test]
    fn infeasible_and_bad_subgradient_are_rejected() {
        let y = sig(vec![0.1, 0.1]);
        let x = sig(vec![3.0, -2.0]);
        let pen = Penalty::elastic_net(1.0, 1.0).unwrap();
        let v = pen.min_subgradient(&x);
        assert!(matches!(
            construct_b(&x, &v, &y, &pen, 1.0),
            Err(AdpError::Infeasible { .. })
        ));
        let y = sig(vec![10.0, 10.0]);
        let wrong = sig(vec![0.0, 0.0]);
        assert!(matches!(
            construct_b(&x, &wrong, &y, &pen, 1.0),
            Err(AdpError::InvalidSubgradient { .. })
        ));
    }

    #[test]
    fn random_operator_fails_the_check() {
        let b = LinearOp::from_matrix(
            ndarray::array![[1.0, 0.5, 0.0], [0.2, -1.0, 0.3], [0.0, 0.4, 2.0]],
            (0.0, 3.0),
            (0.0, 3.0),
        )
        .unwrap();
        let y = sig(vec![1.0, 0.0, -1.0]);
        let x = sig(vec![0.5, 0.5, 0.5]);
        let pen = Penalty::elastic_net(0.1, 1.0).unwrap();
        assert!(verify_minimizer(&b, &x, &y, &pen, 0.1).unwrap().residual > 1e-3);
    }

    #[test]
    fn tikhonov_parameter_recovers_adp_solution() {
        let n = 20;
        let a = make_integration_operator(n, unit()).unwrap();
        let y =
            Signal::from_fn(n, unit(), |t: f64| t * (1.0 - t) + 0.05 * (9.0 * t).sin()).unwrap();
        let alpha = 1e-3;
        let adp = adp_exact_solve(&a, &y, &Penalty::squared_l2(), alpha, 1e-12).unwrap();
        let t = equivalent_tikhonov_parameter(&a, &y, &adp.solution).unwrap();
        let x_t = tikhonov_l2_solve(&a, &y, t).unwrap();
        assert!(x_t.distance(&adp.solution) <= 1e-6 * adp.solution.norm());
        assert!(t <= alpha);
    }

    #[test]
    fn least_squares_solution_has_zero_parameter() {
        let n = 8;
        let a = make_integration_operator(n, unit()).unwrap();
        let y = Signal::from_fn(n, unit(), |t: f64| t.sin()).unwrap();
        let ls = tikhonov_l2_solve(&a, &y, 0.0).unwrap();
        assert_eq!(equivalent_tikhonov_parameter(&a, &y, &ls).unwrap(), 0.0);
        let too_big = ls.scaled(2.0);
        assert!(matches!(
            equivalent_tikhonov_parameter(&a, &y, &too_big),
            Err(AdpError::Inconsistent(_))
        ));
    }

    #[test]
    fn demo_has_nonconvex_sublevel_set() {
        let demo = remark35_demo();
        assert!(demo.margin() >= 1e-6, "{demo:?}");
        for p in [demo.x_a, demo.x_b] {
            assert!((0.0..=10.0).contains(&p[0]) && (0.0..=10.0).contains(&p[1]));
        }
        assert_eq!(crate::penalties::remark35_functional(5.0, 0.0), 0.0);
    }
}
