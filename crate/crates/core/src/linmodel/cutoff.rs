//! Radial bump used to localize nonlinearities: identically 1 inside the
//! inner radius, identically 0 outside the outer radius, polynomial
//! smoothstep in between.

use nalgebra::DVector;

use crate::funcspace::tensor::SymTensor;
use crate::real::{conv, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct CutoffFunction<T: Real> {
    pub inner_radius: T,
    pub outer_radius: T,
    /// Smoothstep index: the profile is C^smoothness across the junctions.
    /// The default 2 is the quintic bump.
    pub smoothness: u32,
    /// Reported sup-norm bound on the gradient.
    pub d1_bound: T,
    /// Reported sup-norm bound on the second derivative (operator norm).
    pub d2_bound: T,
    /// Coefficients of the smoothstep S on [0, 1], ascending powers.
    step_coeffs: Vec<T>,
}

impl<T: Real> CutoffFunction<T> {
    pub fn quintic(inner_radius: T, outer_radius: T) -> Self {
        Self::new(inner_radius, outer_radius, 2)
    }

    pub fn new(inner_radius: T, outer_radius: T, smoothness: u32) -> Self {
        assert!(inner_radius > T::zero() && outer_radius > inner_radius);
        assert!(smoothness >= 2, "profile must be at least C^2");
        let step_coeffs = smoothstep_coeffs(smoothness);
        let band = outer_radius - inner_radius;
        let (s1, s2) = if smoothness == 2 {
            // max |S'| = 15/8 at s = 1/2, max |S''| = 10/sqrt(3)
            (conv::<T>(15.0 / 8.0), conv::<T>(10.0 / 3.0f64.sqrt()))
        } else {
            sampled_step_bounds(&step_coeffs)
        };
        // |D xi| <= |q'|; |D^2 xi| <= |q''| + |q'| / |x| with |x| >= inner.
        let d1_bound = s1 / band;
        let d2_bound = s2 / (band * band) + s1 / (band * inner_radius);
        CutoffFunction {
            inner_radius,
            outer_radius,
            smoothness,
            d1_bound,
            d2_bound,
            step_coeffs,
        }
    }

    /// Same bump with both radii divided by `s` (domain rescaling).
    pub fn scale_radii(&self, s: T) -> Self {
        Self::new(self.inner_radius / s, self.outer_radius / s, self.smoothness)
    }

    /// Profile value as a function of the Euclidean radius.
    pub fn eval_radial(&self, u: T) -> T {
        if u <= self.inner_radius {
            return T::one();
        }
        if u >= self.outer_radius {
            return T::zero();
        }
        let s = (u - self.inner_radius) / (self.outer_radius - self.inner_radius);
        T::one() - poly_eval(&self.step_coeffs, s)
    }

    pub fn eval(&self, x: &DVector<T>) -> T {
        self.eval_radial(x.norm())
    }

    /// k-th radial derivative of the profile.
    pub fn radial_derivative(&self, k: u32, u: T) -> T {
        if k == 0 {
            return self.eval_radial(u);
        }
        if u <= self.inner_radius || u >= self.outer_radius {
            return T::zero();
        }
        let band = self.outer_radius - self.inner_radius;
        let s = (u - self.inner_radius) / band;
        let mut d = self.step_coeffs.clone();
        for _ in 0..k {
            d = poly_diff(&d);
        }
        -poly_eval(&d, s) / band.powi(k as i32)
    }

    /// Symmetric `m`-th derivative tensor of `x -> profile(|x|)` at `x`.
    ///
    /// Written as `phi(sq)` with `sq = |x|^2`; the derivative expands over
    /// partitions of the argument slots into singletons (gradient of `sq`)
    /// and pairs (Hessian of `sq`), all higher derivatives of `sq` vanishing.
    pub fn d_tensor(&self, m: usize, x: &DVector<T>) -> SymTensor<T> {
        let dim = x.len();
        let mut out = SymTensor::zero(m, dim, 1);
        if m == 0 {
            out.set(&[], DVector::from_element(1, self.eval(x)));
            return out;
        }
        let u = x.norm();
        if u <= self.inner_radius || u >= self.outer_radius {
            return out;
        }
        let sq = u * u;
        let phi: Vec<T> = (0..=m).map(|k| self.sqrt_composed_derivative(k as u32, sq)).collect();
        let two = conv::<T>(2.0);
        for tuple in crate::funcspace::tensor::full_tuples(dim, m) {
            let mut key = tuple.clone();
            key.sort_unstable();
            if out.entry(&key)[0] != T::zero() {
                continue;
            }
            let mut total = T::zero();
            for part in singleton_pair_partitions(m) {
                let mut factor = T::one();
                for block in &part {
                    match block[..] {
                        [i] => factor *= two * x[tuple[i] as usize],
                        [i, j] => {
                            if tuple[i] == tuple[j] {
                                factor *= two;
                            } else {
                                factor = T::zero();
                                break;
                            }
                        }
                        _ => unreachable!(),
                    }
                }
                if factor != T::zero() {
                    total += phi[part.len()] * factor;
                }
            }
            out.set(&key, DVector::from_element(1, total));
        }
        out
    }

    /// k-th derivative of `phi(s) = profile(sqrt(s))` at `s > 0` in the band.
    fn sqrt_composed_derivative(&self, k: u32, s: T) -> T {
        if k == 0 {
            return self.eval_radial(s.sqrt());
        }
        // profile on the band as a polynomial in u: q(u) = sum c_j u^j,
        // so phi(s) = sum c_j s^{j/2} and each term differentiates in
        // closed form through falling fractional powers.
        let band_poly = self.band_poly_in_u();
        let half = conv::<T>(0.5);
        let mut total = T::zero();
        for (j, &cj) in band_poly.iter().enumerate() {
            if cj == T::zero() {
                continue;
            }
            let p = conv::<T>(j as f64) * half;
            let mut fall = T::one();
            for t in 0..k {
                fall *= p - conv::<T>(t as f64);
            }
            if fall == T::zero() {
                continue;
            }
            total += cj * fall * s.powf(p - conv::<T>(k as f64));
        }
        total
    }

    /// Band profile as a polynomial in the radius u (ascending powers).
    fn band_poly_in_u(&self) -> Vec<T> {
        let a = self.inner_radius;
        let band = self.outer_radius - a;
        // q(u) = 1 - S((u - a)/band): expand the affine substitution.
        let deg = self.step_coeffs.len() - 1;
        let mut out = vec![T::zero(); deg + 1];
        out[0] = T::one();
        // powers of (u - a)/band
        let mut pow = vec![T::one()]; // ((u-a)/band)^0
        for (k, &ck) in self.step_coeffs.iter().enumerate() {
            if k > 0 {
                // multiply pow by (u - a)/band
                let mut next = vec![T::zero(); pow.len() + 1];
                for (i, &pi) in pow.iter().enumerate() {
                    next[i + 1] += pi / band;
                    next[i] += -a * pi / band;
                }
                pow = next;
            }
            if ck != T::zero() {
                for (i, &pi) in pow.iter().enumerate() {
                    out[i] -= ck * pi;
                }
            }
        }
        out
    }
}

/// Coefficients of the generalized smoothstep S_N on [0, 1] (C^N junctions),
/// ascending powers; N = 2 gives 10 s^3 - 15 s^4 + 6 s^5.
fn smoothstep_coeffs<T: Real>(n: u32) -> Vec<T> {
    let n = n as i64;
    let mut coeffs = vec![T::zero(); (2 * n + 2) as usize];
    for k in 0..=n {
        let c = binom(n + k, k) * binom(2 * n + 1, n - k) * if k % 2 == 0 { 1.0 } else { -1.0 };
        coeffs[(n + 1 + k) as usize] = conv::<T>(c);
    }
    coeffs
}

fn binom(n: i64, k: i64) -> f64 {
    if k < 0 || k > n {
        return 0.0;
    }
    let mut out = 1.0;
    for i in 0..k {
        out = out * (n - i) as f64 / (i + 1) as f64;
    }
    out
}

fn sampled_step_bounds<T: Real>(coeffs: &[T]) -> (T, T) {
    let d1 = poly_diff(coeffs);
    let d2 = poly_diff(&d1);
    let mut s1 = T::zero();
    let mut s2 = T::zero();
    // safety margin on top of the dense sample
    let margin = conv::<T>(1.001);
    for i in 0..=100_000 {
        let s = conv::<T>(i as f64 / 100_000.0);
        let v1 = poly_eval(&d1, s).abs();
        let v2 = poly_eval(&d2, s).abs();
        if v1 > s1 {
            s1 = v1;
        }
        if v2 > s2 {
            s2 = v2;
        }
    }
    (s1 * margin, s2 * margin)
}

fn poly_eval<T: Real>(coeffs: &[T], x: T) -> T {
    let mut out = T::zero();
    for &c in coeffs.iter().rev() {
        out = out * x + c;
    }
    out
}

fn poly_diff<T: Real>(coeffs: &[T]) -> Vec<T> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| c * conv::<T>(k as f64))
        .collect()
}

/// Partitions of `{0..m-1}` into singletons and unordered pairs.
fn singleton_pair_partitions(m: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(remaining: &[usize]) -> Vec<Vec<Vec<usize>>> {
        if remaining.is_empty() {
            return vec![vec![]];
        }
        let first = remaining[0];
        let rest = &remaining[1..];
        let mut out = Vec::new();
        for mut tail in rec(rest) {
            tail.push(vec![first]);
            out.push(tail);
        }
        for (i, &other) in rest.iter().enumerate() {
            let mut reduced: Vec<usize> = rest.to_vec();
            reduced.remove(i);
            for mut tail in rec(&reduced) {
                tail.push(vec![first, other]);
                out.push(tail);
            }
        }
        out
    }
    rec(&(0..m).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    #[test]
    fn quintic_profile_shape() {
        let c = CutoffFunction::quintic(1.0, 2.0);
        assert_relative_eq!(c.eval_radial(0.5), 1.0);
        assert_relative_eq!(c.eval_radial(2.5), 0.0);
        assert_relative_eq!(c.eval_radial(1.5), 0.5, epsilon = 1e-14);
        for i in 0..=100 {
            let u = 0.03 * i as f64;
            let v = c.eval_radial(u);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn derivative_bounds_dominate_probe() {
        let c = CutoffFunction::quintic(1.0, 2.0);
        let mut worst1 = 0.0f64;
        let mut worst2 = 0.0f64;
        let h = 1e-5;
        for i in 0..1000 {
            let u = 0.9 + 1.2 * i as f64 / 999.0;
            let d1 = (c.eval_radial(u + h) - c.eval_radial(u - h)) / (2.0 * h);
            let d2 = (c.eval_radial(u + h) - 2.0 * c.eval_radial(u) + c.eval_radial(u - h)) / (h * h);
            worst1 = worst1.max(d1.abs());
            // radial second derivative plus curvature term bounds |D^2 xi|
            worst2 = worst2.max(d2.abs() + d1.abs() / u.max(1.0));
        }
        assert!(c.d1_bound >= worst1);
        assert!(c.d2_bound >= worst2);
        assert_relative_eq!(c.d1_bound, 15.0 / 8.0, epsilon = 1e-12);
    }

    #[test]
    fn tensor_derivatives_match_finite_differences() {
        let c = CutoffFunction::quintic(0.5, 1.5);
        let x = dvector![0.7, 0.4];
        let h = 1e-5;
        let grad = c.d_tensor(1, &x);
        for axis in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[axis] += h;
            xm[axis] -= h;
            let fd = (c.eval(&xp) - c.eval(&xm)) / (2.0 * h);
            assert_relative_eq!(grad.entry(&[axis as u32])[0], fd, epsilon = 1e-8);
        }
        let hess = c.d_tensor(2, &x);
        for a in 0..2u32 {
            for b in a..2u32 {
                let mut pp = x.clone();
                let mut pm = x.clone();
                let mut mp = x.clone();
                let mut mm = x.clone();
                pp[a as usize] += h;
                pp[b as usize] += h;
                pm[a as usize] += h;
                pm[b as usize] -= h;
                mp[a as usize] -= h;
                mp[b as usize] += h;
                mm[a as usize] -= h;
                mm[b as usize] -= h;
                let fd = (c.eval(&pp) - c.eval(&pm) - c.eval(&mp) + c.eval(&mm)) / (4.0 * h * h);
                assert_relative_eq!(hess.entry(&[a, b])[0], fd, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn higher_smoothness_profiles() {
        let c = CutoffFunction::new(1.0, 2.0, 3);
        assert_relative_eq!(c.eval_radial(1.5), 0.5, epsilon = 1e-12);
        // C^3 junction: third radial derivative vanishes at the edges
        assert_relative_eq!(c.radial_derivative(3, 1.0 + 1e-9), 0.0, epsilon = 1e-5);
    }
}
