//! Scalar constants ledger: Lipschitz bounds for the solved components,
//! per-order contraction factors, curvature budgets, and the smallness
//! conditions gating the solver. Everything here is closed-form arithmetic
//! on the operator norms and the measured nonlinearity norms.

use crate::error::{Error, Result};
use crate::linmodel::splitting::OpNorms;
use crate::real::{conv, to_f64, Real};

/// Which contraction stage a curvature threshold refers to: the conjugacy
/// solve itself, the first derivative pass, or the order-m derivative pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    C1,
    C2,
    Cm(usize),
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::C1 => write!(f, "C1"),
            Stage::C2 => write!(f, "C2"),
            Stage::Cm(m) => write!(f, "C{m}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConstantsLedger<T: Real> {
    pub norms: OpNorms<T>,
    pub l_g: T,
    pub l_c: T,
    /// Measured curvature: max of the second-derivative sup norms of the
    /// nonlinearities.
    pub eps: T,
    pub order_n: usize,
    /// Lipschitz bound for the center correction r.
    pub l_r: T,
    /// Lipschitz bound for the inverse offset t.
    pub l_t: T,
    /// Lipschitz bound for the unstable component.
    pub l_u: T,
    /// Lipschitz bound for the stable component.
    pub l_s: T,
    /// Bound on the derivative of the inverted center map.
    pub l_inv: T,
    pub feasible: bool,
    pub violations: Vec<String>,
}

/// Evaluate the full ledger. Infeasibility is a reported state: every
/// computable field still fills in and the violated inequalities are listed.
pub fn derive_ledger<T: Real>(
    norms: OpNorms<T>,
    l_g: T,
    l_c: T,
    eps: T,
    order_n: usize,
) -> ConstantsLedger<T> {
    let one = T::one();
    let inf = conv::<T>(f64::INFINITY);
    let mut violations = Vec::new();

    if l_c >= one {
        violations.push(format!("1 - L_c > 0 violated (L_c = {})", to_f64(l_c)));
    }
    let l_r = if l_c < one {
        (l_g + l_c * (conv::<T>(2.0) * norms.a_c + l_g)) / (one - l_c)
    } else {
        inf
    };

    let den_t = one - norms.a_c_inv * l_r;
    if den_t <= T::zero() {
        violations.push(format!(
            "1 - |Ac^-1| L_r > 0 violated (value = {})",
            to_f64(den_t)
        ));
    }
    let l_t = if den_t > T::zero() {
        norms.a_c_inv * norms.a_c_inv * l_r / den_t
    } else {
        inf
    };

    let den_u = one - l_r * norms.a_u_inv - norms.a_c * norms.a_u_inv;
    if norms.a_u_inv > T::zero() && den_u <= T::zero() {
        violations.push(format!(
            "1 - L_r |Au^-1| - |Ac| |Au^-1| > 0 violated (value = {})",
            to_f64(den_u)
        ));
    }
    let l_u = if norms.a_u_inv == T::zero() {
        T::zero()
    } else if den_u > T::zero() {
        norms.a_u_inv * (one + l_c) * l_g / den_u
    } else {
        inf
    };

    let den_s = one - l_r * norms.a_c_inv - norms.a_s * norms.a_c_inv;
    if den_s <= T::zero() {
        violations.push(format!(
            "1 - L_r |Ac^-1| - |As| |Ac^-1| > 0 violated (value = {})",
            to_f64(den_s)
        ));
    }
    let l_s = if den_s > T::zero() {
        norms.a_c_inv * (one + l_c) * l_g / den_s
    } else {
        inf
    };

    let l_inv = norms.a_c_inv + l_t;

    let mut ledger = ConstantsLedger {
        norms,
        l_g,
        l_c,
        eps,
        order_n,
        l_r,
        l_t,
        l_u,
        l_s,
        l_inv,
        feasible: false,
        violations,
    };

    for k in 1..=order_n {
        let gap_s = norms.a_c_inv.powi(k as i32) * norms.a_s;
        if gap_s >= one {
            ledger
                .violations
                .push(format!("|Ac^-1|^{k} |As| < 1 violated (value = {})", to_f64(gap_s)));
        }
        let gap_u = norms.a_u_inv * norms.a_c.powi(k as i32);
        if gap_u >= one {
            ledger
                .violations
                .push(format!("|Au^-1| |Ac|^{k} < 1 violated (value = {})", to_f64(gap_u)));
        }
    }
    if ledger.violations.is_empty() {
        for k in 0..=order_n {
            for i in 1..=3 {
                let th = ledger.contraction(k, i);
                if th >= one {
                    ledger.violations.push(format!(
                        "contraction factor theta_({k},{i}) = {} >= 1",
                        to_f64(th)
                    ));
                }
            }
        }
    }
    ledger.feasible = ledger.violations.is_empty();
    ledger
}

impl<T: Real> ConstantsLedger<T> {
    /// Per-component contraction factor at derivative order `k`:
    /// component 1 is the center correction, 2 the unstable, 3 the stable.
    pub fn contraction(&self, k: usize, component: usize) -> T {
        let one = T::one();
        match component {
            1 => self.l_g + self.l_c,
            2 => {
                self.norms.a_u_inv
                    * ((self.norms.a_c + self.l_r).powi(k as i32) + self.l_g + self.l_u)
            }
            3 => {
                self.l_inv.powi(k as i32)
                    * (self.norms.a_s * (one + self.l_inv * self.l_s)
                        + self.l_g * (one + self.l_inv * (one + self.l_c)))
            }
            _ => panic!("component index must be 1, 2 or 3"),
        }
    }

    pub fn contraction_max(&self, k: usize) -> T {
        self.contraction(k, 1)
            .max(self.contraction(k, 2))
            .max(self.contraction(k, 3))
    }

    /// C^0 contraction factor reported for the conjugacy solve. Uses the
    /// first-order component factors, which dominate the zeroth-order ones
    /// whenever the center block has norm at least 1.
    pub fn c0_rate(&self) -> T {
        self.contraction_max(1)
    }

    /// Curvature forcing terms for the three components.
    pub fn curvature_forcing(&self, component: usize, eps: T) -> T {
        let one = T::one();
        match component {
            1 => {
                (self.norms.a_c
                    + (one + self.l_c) * (one + self.l_c)
                    + self.l_g
                    + (self.norms.a_c + self.l_r) * (self.norms.a_c + self.l_r))
                    * eps
            }
            2 => self.norms.a_u_inv * ((one + self.l_c) * (one + self.l_c) + self.l_g) * eps,
            3 => {
                self.l_inv * self.l_inv * ((one + self.l_c) * (one + self.l_c) + self.l_g) * eps
            }
            _ => panic!("component index must be 1, 2 or 3"),
        }
    }

    /// Second-derivative budget: the smallest uniform bound invariant under
    /// the operator given curvature `eps`.
    pub fn delta(&self, eps: T) -> T {
        let mut worst = T::zero();
        for i in 1..=3 {
            let th = self.contraction(2, i);
            if th >= T::one() {
                return conv(f64::INFINITY);
            }
            worst = worst.max(self.curvature_forcing(i, eps) / (T::one() - th));
        }
        worst
    }

    pub fn gamma(&self, eps: T) -> T {
        eps.max(self.delta(eps))
    }

    /// Epsilon-dependent corrections to the first-derivative contraction.
    pub fn c1_stage_term(&self, component: usize, eps: T) -> T {
        let one = T::one();
        match component {
            1 => (one + self.l_c + self.norms.a_c + self.l_r) * eps,
            2 => {
                self.norms.a_u_inv
                    * (self.l_g * (one + self.l_c) * eps
                        + (self.norms.a_c + self.l_r) * self.delta(eps))
            }
            3 => {
                self.contraction(2, 3) * self.gamma(eps)
                    + self.l_inv * (one + self.l_c) * eps
                    + self.l_inv * self.l_inv * (one + self.l_c) * (one + self.l_c) * eps
            }
            _ => panic!("component index must be 1, 2 or 3"),
        }
    }

    /// First-derivative contraction factor of the conjugacy solve.
    pub fn c1_rate(&self, eps: T) -> T {
        let base = self.contraction_max(1);
        let extra = self
            .c1_stage_term(1, eps)
            .max(self.c1_stage_term(2, eps))
            .max(self.c1_stage_term(3, eps));
        base + extra
    }

    /// Overall contraction factor of the conjugacy solve in the C^1 norm.
    pub fn c1_overall_rate(&self, eps: T) -> T {
        self.c0_rate().max(self.c1_rate(eps))
    }

    /// Epsilon-dependent corrections for the first derivative pass.
    pub fn c2_stage_term(&self, component: usize, eps: T) -> T {
        let one = T::one();
        match component {
            1 => (one + self.l_c + self.norms.a_c + self.l_r) * eps,
            2 => {
                self.norms.a_u_inv
                    * ((conv::<T>(2.0) + self.l_c) * eps
                        + (self.norms.a_c + self.l_r) * self.delta(eps))
            }
            3 => {
                conv::<T>(2.0) * self.contraction(3, 3) * self.gamma(eps)
                    + self.l_inv * self.l_inv * (one + self.l_c) * eps
                    + self.l_inv.powi(3) * (one + self.l_c) * (one + self.l_c) * eps
            }
            _ => panic!("component index must be 1, 2 or 3"),
        }
    }

    pub fn c2_rate(&self, eps: T) -> T {
        let base = self.contraction_max(2);
        let extra = self
            .c2_stage_term(1, eps)
            .max(self.c2_stage_term(2, eps))
            .max(self.c2_stage_term(3, eps));
        base + extra
    }

    pub fn c2_overall_rate(&self, eps: T) -> T {
        self.c1_rate(T::zero()).max(self.c2_rate(eps))
    }

    /// Epsilon-dependent corrections for the order-m derivative pass
    /// (`mt = m + 1 >= 3`).
    pub fn cm_stage_term(&self, mt: usize, component: usize, eps: T) -> T {
        assert!(mt >= 3);
        let m = mt - 1;
        let one = T::one();
        match component {
            1 => (one + self.l_c + self.norms.a_c + self.l_r) * eps,
            2 => {
                let ac_lr = self.norms.a_c + self.l_r;
                self.norms.a_u_inv
                    * ((one + self.l_c) * eps
                        + (ac_lr + conv::<T>(m as f64) * ac_lr.powi(m as i32 - 1))
                            * self.delta(eps))
            }
            3 => {
                conv::<T>(mt as f64) * self.contraction(mt + 1, 3) * self.gamma(eps)
                    + self.l_inv.powi(mt as i32) * (one + self.l_c) * eps
                    + self.l_inv.powi(mt as i32 + 1) * (one + self.l_c) * (one + self.l_c) * eps
            }
            _ => panic!("component index must be 1, 2 or 3"),
        }
    }

    pub fn cm_rate(&self, mt: usize, eps: T) -> T {
        let base = self.contraction_max(mt);
        let extra = self
            .cm_stage_term(mt, 1, eps)
            .max(self.cm_stage_term(mt, 2, eps))
            .max(self.cm_stage_term(mt, 3, eps));
        base + extra
    }

    pub fn cm_overall_rate(&self, mt: usize, eps: T) -> T {
        self.contraction_max(mt - 1).max(self.cm_rate(mt, eps))
    }

    fn stage_rate(&self, stage: Stage, eps: T) -> T {
        match stage {
            Stage::C1 => self.c1_rate(eps),
            Stage::C2 => self.c2_rate(eps),
            Stage::Cm(m) => self.cm_rate(m + 1, eps),
        }
    }

    /// Largest curvature for which the stage contraction factor stays below
    /// 1, found by bisection (relative width 1e-6).
    pub fn epsilon_threshold(&self, stage: Stage) -> Result<T> {
        if let Stage::Cm(m) = stage {
            assert!(m >= 2, "order-m stage needs m >= 2");
        }
        let base = self.stage_rate(stage, T::zero());
        if base >= T::one() {
            return Err(Error::NoThreshold {
                stage: stage.to_string(),
                base: to_f64(base),
            });
        }
        let mut hi = conv::<T>(1e-6);
        let mut grow = 0;
        while self.stage_rate(stage, hi) < T::one() {
            hi *= conv(2.0);
            grow += 1;
            if grow > 80 {
                return Ok(hi);
            }
        }
        let mut lo = T::zero();
        for _ in 0..200 {
            let mid = (lo + hi) * conv(0.5);
            if self.stage_rate(stage, mid) < T::one() {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= conv::<T>(1e-6) * hi {
                break;
            }
        }
        Ok(lo)
    }

    /// Feasibility as a hard gate.
    pub fn require_feasible(&self) -> Result<()> {
        if self.feasible {
            Ok(())
        } else {
            Err(Error::InfeasibleConstants(
                self.violations.first().cloned().unwrap_or_default(),
            ))
        }
    }

    /// Flat key/value/formula rows for reporting.
    pub fn report(&self) -> Vec<(String, f64, String)> {
        let mut rows: Vec<(String, f64, String)> = vec![
            ("|Ac|".into(), to_f64(self.norms.a_c), "operator norm of the center block".into()),
            ("|Ac^-1|".into(), to_f64(self.norms.a_c_inv), "operator norm of its inverse".into()),
            ("|Au|".into(), to_f64(self.norms.a_u), "operator norm of the unstable block".into()),
            ("|Au^-1|".into(), to_f64(self.norms.a_u_inv), "operator norm of its inverse".into()),
            ("|As|".into(), to_f64(self.norms.a_s), "operator norm of the stable block".into()),
            ("L_g".into(), to_f64(self.l_g), "sup |Dg| (sampled estimate)".into()),
            ("L_c".into(), to_f64(self.l_c), "sup |Dk_c| (sampled estimate)".into()),
            ("eps".into(), to_f64(self.eps), "max(sup |D^2 g|, sup |D^2 k_c|)".into()),
            (
                "L_r".into(),
                to_f64(self.l_r),
                "(L_g + L_c (2|Ac| + L_g)) / (1 - L_c)".into(),
            ),
            (
                "L_t".into(),
                to_f64(self.l_t),
                "|Ac^-1|^2 L_r / (1 - |Ac^-1| L_r)".into(),
            ),
            (
                "L_u".into(),
                to_f64(self.l_u),
                "|Au^-1| (1 + L_c) L_g / (1 - L_r |Au^-1| - |Ac| |Au^-1|)".into(),
            ),
            (
                "L_s".into(),
                to_f64(self.l_s),
                "|Ac^-1| (1 + L_c) L_g / (1 - L_r |Ac^-1| - |As| |Ac^-1|)".into(),
            ),
            ("L_inv".into(), to_f64(self.l_inv), "|Ac^-1| + L_t".into()),
        ];
        for k in 0..=self.order_n + 1 {
            for i in 1..=3 {
                rows.push((
                    format!("theta_{k}_{i}"),
                    to_f64(self.contraction(k, i)),
                    match i {
                        1 => "L_g + L_c".into(),
                        2 => format!("|Au^-1| ((|Ac| + L_r)^{k} + L_g + L_u)"),
                        _ => format!(
                            "L_inv^{k} (|As| (1 + L_inv L_s) + L_g (1 + L_inv (1 + L_c)))"
                        ),
                    },
                ));
            }
        }
        let eps = self.eps;
        for i in 1..=3 {
            rows.push((
                format!("C_{i}(eps)"),
                to_f64(self.curvature_forcing(i, eps)),
                "curvature forcing term".into(),
            ));
        }
        rows.push((
            "delta(eps)".into(),
            to_f64(self.delta(eps)),
            "max_i C_i(eps) / (1 - theta_2_i)".into(),
        ));
        rows.push((
            "gamma(eps)".into(),
            to_f64(self.gamma(eps)),
            "max(eps, delta(eps))".into(),
        ));
        rows.push(("theta0".into(), to_f64(self.c0_rate()), "max_i theta_1_i".into()));
        rows.push((
            "theta1(eps)".into(),
            to_f64(self.c1_rate(eps)),
            "max_i theta_1_i + max_i C1_i(eps)".into(),
        ));
        rows.push((
            "lambda1".into(),
            to_f64(self.c1_overall_rate(eps)),
            "max(theta0, theta1(eps))".into(),
        ));
        rows.push((
            "theta2(eps)".into(),
            to_f64(self.c2_rate(eps)),
            "max_i theta_2_i + max_i C2_i(eps)".into(),
        ));
        rows.push((
            "lambda2".into(),
            to_f64(self.c2_overall_rate(eps)),
            "max(theta1(0), theta2(eps))".into(),
        ));
        for mt in 3..=self.order_n.max(2) {
            rows.push((
                format!("theta{mt}(eps)"),
                to_f64(self.cm_rate(mt, eps)),
                format!("max_i theta_{mt}_i + max_i C{mt}_i(eps)"),
            ));
            rows.push((
                format!("lambda{mt}"),
                to_f64(self.cm_overall_rate(mt, eps)),
                format!("max(theta_{}, theta{mt}(eps))", mt - 1),
            ));
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn worked_norms() -> OpNorms<f64> {
        OpNorms {
            a_c: 1.0,
            a_c_inv: 1.0,
            a_u: 2.0,
            a_u_inv: 0.5,
            a_s: 0.5,
            ambient: 2.0,
        }
    }

    #[test]
    fn worked_example_hand_values() {
        let led = derive_ledger(worked_norms(), 0.05, 0.0, 0.0, 1);
        assert_relative_eq!(led.l_r, 0.05, epsilon = 1e-15);
        assert_relative_eq!(led.l_t, 1.0 / 19.0, epsilon = 1e-15);
        assert_relative_eq!(led.l_u, 1.0 / 19.0, epsilon = 1e-15);
        assert_relative_eq!(led.l_s, 1.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(led.l_inv, 20.0 / 19.0, epsilon = 1e-15);
        assert_relative_eq!(led.contraction(1, 1), 0.05, epsilon = 1e-15);
        assert_relative_eq!(led.contraction(1, 2), 0.5763157894736842, epsilon = 1e-12);
        assert_relative_eq!(led.contraction(1, 3), 0.6959064327485381, epsilon = 1e-12);
        assert!(led.feasible);
    }

    #[test]
    fn zero_nonlinearity_reduces_to_gap_constants() {
        let led = derive_ledger(worked_norms(), 0.0, 0.0, 0.0, 3);
        assert_eq!(led.l_r, 0.0);
        assert_eq!(led.l_t, 0.0);
        for k in 0..=3 {
            assert_eq!(led.contraction(k, 1), 0.0);
            assert_relative_eq!(led.contraction(k, 2), 0.5, epsilon = 1e-15);
            assert_relative_eq!(led.contraction(k, 3), 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn unit_l_c_is_infeasible() {
        let led = derive_ledger(worked_norms(), 0.05, 1.0, 0.0, 2);
        assert!(!led.feasible);
        assert!(led.violations[0].contains("1 - L_c"));
    }

    #[test]
    fn budget_identity_and_monotone_decay() {
        let led = derive_ledger(worked_norms(), 0.05, 0.0, 0.0, 2);
        let mut prev = f64::INFINITY;
        for k in 1..=6 {
            let eps = 10f64.powi(-k);
            let delta = led.delta(eps);
            assert!(delta < prev, "budget must shrink with curvature");
            prev = delta;
            for i in 1..=3 {
                let lhs = led.contraction(2, i) * delta + led.curvature_forcing(i, eps);
                assert!(lhs <= delta * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn lipschitz_bounds_stay_below_one_plus_lc() {
        let led = derive_ledger(worked_norms(), 0.05, 0.02, 0.0, 1);
        assert!(led.contraction(1, 2) < 1.0 && led.contraction(1, 3) < 1.0);
        assert!(led.l_u <= 1.0 + led.l_c);
        assert!(led.l_s <= 1.0 + led.l_c);
    }

    #[test]
    fn monotone_in_nonlinearity_sizes() {
        let base = derive_ledger(worked_norms(), 0.02, 0.01, 0.0, 2);
        for i in 1..=4 {
            for j in 1..=4 {
                let lg = 0.02 + 0.005 * i as f64;
                let lc = 0.01 + 0.005 * j as f64;
                let led = derive_ledger(worked_norms(), lg, lc, 0.0, 2);
                assert!(led.l_r >= base.l_r);
                assert!(led.l_u >= base.l_u);
                assert!(led.l_s >= base.l_s);
                assert!(led.delta(1e-3) >= base.delta(1e-3));
                for k in 0..=2 {
                    for c in 1..=3 {
                        assert!(led.contraction(k, c) >= base.contraction(k, c));
                    }
                }
            }
        }
    }

    #[test]
    fn threshold_brackets_the_unit_rate() {
        let led = derive_ledger(worked_norms(), 0.05, 0.0, 0.0, 2);
        let eps0 = led.epsilon_threshold(Stage::C1).unwrap();
        assert!(eps0 > 0.0);
        assert!(led.c1_rate(eps0 * 0.99) < 1.0);
        assert!(led.c1_rate(eps0 * 1.01) >= 1.0);
    }

    #[test]
    fn no_threshold_when_base_rate_too_large() {
        let norms = OpNorms {
            a_c: 1.2,
            a_c_inv: 1.0,
            a_u: 2.0,
            a_u_inv: 1.0,
            a_s: 0.5,
            ambient: 2.0,
        };
        // |Au^-1| |Ac| = 1.2: the unstable factor is >= 1 at order 1 already
        let led = derive_ledger(norms, 0.0, 0.0, 0.0, 1);
        assert!(!led.feasible);
        match led.epsilon_threshold(Stage::C1) {
            Err(Error::NoThreshold { .. }) => {}
            other => panic!("expected NoThreshold, got {other:?}"),
        }
    }
}
