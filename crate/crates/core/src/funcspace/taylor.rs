//! Truncated multivariate Taylor tables.
//!
//! A table represents a polynomial map `R^domain_dim -> R^codomain_dim`
//! through `degree_cap`. `tail_exact` records whether the map *is* that
//! polynomial or a truncation of something longer.

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

use super::multiindex::{indices_of_degree, MultiIndex};
use super::tensor::SymTensor;
use crate::real::{conv, Real};

type Scalar<T> = BTreeMap<MultiIndex, T>;

#[derive(Clone, Debug, PartialEq)]
pub struct TaylorRep<T: Real> {
    pub domain_dim: usize,
    pub codomain_dim: usize,
    pub degree_cap: u32,
    pub coeffs: BTreeMap<MultiIndex, DVector<T>>,
    pub tail_exact: bool,
}

impl<T: Real> TaylorRep<T> {
    pub fn zero(domain_dim: usize, codomain_dim: usize, degree_cap: u32) -> Self {
        TaylorRep {
            domain_dim,
            codomain_dim,
            degree_cap,
            coeffs: BTreeMap::new(),
            tail_exact: true,
        }
    }

    /// The identity map on R^dim.
    pub fn identity(dim: usize, degree_cap: u32) -> Self {
        let mut rep = TaylorRep::zero(dim, dim, degree_cap);
        for axis in 0..dim {
            let mut v = DVector::zeros(dim);
            v[axis] = T::one();
            rep.coeffs.insert(MultiIndex::unit(dim, axis), v);
        }
        rep
    }

    /// Linear map given by a matrix.
    pub fn linear(m: &DMatrix<T>, degree_cap: u32) -> Self {
        let mut rep = TaylorRep::zero(m.ncols(), m.nrows(), degree_cap);
        for axis in 0..m.ncols() {
            let col = m.column(axis).into_owned();
            if col.norm() > T::zero() {
                rep.coeffs.insert(MultiIndex::unit(m.ncols(), axis), col);
            }
        }
        rep
    }

    pub fn set(&mut self, alpha: MultiIndex, value: DVector<T>) {
        assert_eq!(alpha.dim(), self.domain_dim);
        assert!(alpha.degree() <= self.degree_cap, "index beyond cap");
        assert_eq!(value.len(), self.codomain_dim);
        if value.iter().all(|c| *c == T::zero()) {
            self.coeffs.remove(&alpha);
        } else {
            self.coeffs.insert(alpha, value);
        }
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> DVector<T> {
        self.coeffs
            .get(alpha)
            .cloned()
            .unwrap_or_else(|| DVector::zeros(self.codomain_dim))
    }

    pub fn max_degree(&self) -> u32 {
        self.coeffs.keys().map(|a| a.degree()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &DVector<T>) -> DVector<T> {
        let mut out = DVector::zeros(self.codomain_dim);
        for (alpha, c) in &self.coeffs {
            let mut mono = T::one();
            for (i, &k) in alpha.0.iter().enumerate() {
                if k > 0 {
                    mono *= x[i].powi(k as i32);
                }
            }
            out.axpy(mono, c, T::one());
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.domain_dim, other.domain_dim);
        assert_eq!(self.codomain_dim, other.codomain_dim);
        let mut out = self.clone();
        out.degree_cap = self.degree_cap.min(other.degree_cap);
        out.tail_exact = self.tail_exact && other.tail_exact;
        for (a, v) in &other.coeffs {
            match out.coeffs.get_mut(a) {
                Some(w) => *w += v,
                None => {
                    out.coeffs.insert(a.clone(), v.clone());
                }
            }
        }
        out.prune();
        out
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = self.clone();
        for v in out.coeffs.values_mut() {
            *v *= s;
        }
        out.prune();
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(conv(-1.0)))
    }

    /// Left-multiply the codomain by a matrix.
    pub fn mat_mul(&self, m: &DMatrix<T>) -> Self {
        assert_eq!(m.ncols(), self.codomain_dim);
        let mut out = TaylorRep::zero(self.domain_dim, m.nrows(), self.degree_cap);
        out.tail_exact = self.tail_exact;
        for (a, v) in &self.coeffs {
            let mv = m * v;
            if mv.iter().any(|c| *c != T::zero()) {
                out.coeffs.insert(a.clone(), mv);
            }
        }
        out
    }

    /// Stack maps with a common domain into one map with concatenated
    /// codomains.
    pub fn stack(parts: &[&TaylorRep<T>]) -> Self {
        let domain_dim = parts[0].domain_dim;
        let cap = parts.iter().map(|p| p.degree_cap).min().unwrap();
        let codim: usize = parts.iter().map(|p| p.codomain_dim).sum();
        let mut out = TaylorRep::zero(domain_dim, codim, cap);
        out.tail_exact = parts.iter().all(|p| p.tail_exact);
        let mut offset = 0;
        for p in parts {
            assert_eq!(p.domain_dim, domain_dim);
            for (a, v) in &p.coeffs {
                if a.degree() > cap {
                    continue;
                }
                let slot = out
                    .coeffs
                    .entry(a.clone())
                    .or_insert_with(|| DVector::zeros(codim));
                slot.rows_mut(offset, p.codomain_dim).copy_from(v);
            }
            offset += p.codomain_dim;
        }
        out
    }

    /// Extract a contiguous block of codomain components.
    pub fn rows(&self, start: usize, len: usize) -> Self {
        let mut out = TaylorRep::zero(self.domain_dim, len, self.degree_cap);
        out.tail_exact = self.tail_exact;
        for (a, v) in &self.coeffs {
            let sub = v.rows(start, len).into_owned();
            if sub.iter().any(|c| *c != T::zero()) {
                out.coeffs.insert(a.clone(), sub);
            }
        }
        out
    }

    pub fn truncate(&self, cap: u32) -> Self {
        let mut out = self.clone();
        let dropped = out.coeffs.keys().any(|a| a.degree() > cap);
        out.coeffs.retain(|a, _| a.degree() <= cap);
        out.degree_cap = cap;
        out.tail_exact = self.tail_exact && !dropped;
        out
    }

    /// Homogeneous part of the given degree.
    pub fn homogeneous(&self, degree: u32) -> Self {
        let mut out = TaylorRep::zero(self.domain_dim, self.codomain_dim, self.degree_cap);
        for (a, v) in &self.coeffs {
            if a.degree() == degree {
                out.coeffs.insert(a.clone(), v.clone());
            }
        }
        out
    }

    /// Partial derivative along one axis.
    pub fn diff(&self, axis: usize) -> Self {
        let mut out = TaylorRep::zero(self.domain_dim, self.codomain_dim, self.degree_cap);
        out.tail_exact = self.tail_exact;
        for (a, v) in &self.coeffs {
            let k = a.0[axis];
            if k == 0 {
                continue;
            }
            let mut b = a.clone();
            b.0[axis] = k - 1;
            let mut w = v.clone();
            w *= conv::<T>(k as f64);
            match out.coeffs.get_mut(&b) {
                Some(acc) => *acc += &w,
                None => {
                    out.coeffs.insert(b, w);
                }
            }
        }
        out
    }

    /// Jacobian matrix at a point.
    pub fn jacobian(&self, x: &DVector<T>) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.codomain_dim, self.domain_dim);
        for axis in 0..self.domain_dim {
            m.set_column(axis, &self.diff(axis).eval(x));
        }
        m
    }

    /// The symmetric `m`-th derivative tensor at a point.
    pub fn d_tensor(&self, m: usize, x: &DVector<T>) -> SymTensor<T> {
        let mut out = SymTensor::zero(m, self.domain_dim, self.codomain_dim);
        if m == 0 {
            out.set(&[], self.eval(x));
            return out;
        }
        // Walk sorted index tuples, differentiating incrementally.
        let mut stack: Vec<(Vec<u32>, TaylorRep<T>)> = vec![(vec![], self.clone())];
        while let Some((tuple, rep)) = stack.pop() {
            if tuple.len() == m {
                out.set(&tuple, rep.eval(x));
                continue;
            }
            let start = tuple.last().copied().unwrap_or(0);
            for axis in start..self.domain_dim as u32 {
                let mut t2 = tuple.clone();
                t2.push(axis);
                stack.push((t2, rep.diff(axis as usize)));
            }
        }
        out
    }

    /// Compose `self` after `inner` (whose codomain must match our domain),
    /// truncated at `cap`. The composed table is exact through `cap` whenever
    /// both inputs are exact polynomials and `inner(0) = 0`; otherwise it is a
    /// truncation.
    pub fn compose(&self, inner: &TaylorRep<T>, cap: u32) -> Self {
        assert_eq!(self.domain_dim, inner.codomain_dim, "composition shape mismatch");
        let dim = inner.domain_dim;
        // Scalar tables per inner component.
        let comps: Vec<Scalar<T>> = (0..self.domain_dim)
            .map(|j| {
                inner
                    .coeffs
                    .iter()
                    .filter(|(_, v)| v[j] != T::zero())
                    .map(|(a, v)| (a.clone(), v[j]))
                    .collect()
            })
            .collect();
        let max_pow: Vec<u32> = (0..self.domain_dim)
            .map(|j| {
                self.coeffs
                    .keys()
                    .map(|a| a.0[j])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        // powers[j][k] = comps[j]^k truncated at cap
        let mut powers: Vec<Vec<Scalar<T>>> = Vec::with_capacity(self.domain_dim);
        for j in 0..self.domain_dim {
            let mut pj = Vec::with_capacity(max_pow[j] as usize + 1);
            let mut unit: Scalar<T> = BTreeMap::new();
            unit.insert(MultiIndex::zero(dim), T::one());
            pj.push(unit);
            for k in 1..=max_pow[j] as usize {
                let next = scalar_mul(&pj[k - 1], &comps[j], cap);
                pj.push(next);
            }
            powers.push(pj);
        }

        let mut out = TaylorRep::zero(dim, self.codomain_dim, cap);
        for (alpha, c) in &self.coeffs {
            let mut term: Scalar<T> = BTreeMap::new();
            term.insert(MultiIndex::zero(dim), T::one());
            for j in 0..self.domain_dim {
                if alpha.0[j] > 0 {
                    term = scalar_mul(&term, &powers[j][alpha.0[j] as usize], cap);
                }
            }
            for (beta, w) in term {
                let slot = out
                    .coeffs
                    .entry(beta)
                    .or_insert_with(|| DVector::zeros(self.codomain_dim));
                slot.axpy(w, c, T::one());
            }
        }
        out.prune();

        // Exact only when nothing above the cap was dropped. When inner(0)=0
        // the coefficients through the cap are still exact for truncated
        // output, but the table then no longer equals the composed map.
        let full_degree_ok = self
            .max_degree()
            .checked_mul(inner.max_degree().max(1))
            .map(|d| d <= cap)
            .unwrap_or(false);
        out.tail_exact = self.tail_exact && inner.tail_exact && full_degree_ok;
        out
    }

    /// Domain-codomain rescaling `x -> s^{-1} f(s x)`: the coefficient of
    /// order `d` picks up a factor `s^{d-1}`.
    pub fn scale_domain(&self, s: T) -> Self {
        let mut out = self.clone();
        for (a, v) in out.coeffs.iter_mut() {
            *v *= s.powi(a.degree() as i32 - 1);
        }
        out
    }

    /// Check that the constant (and optionally linear) coefficients are
    /// exactly zero.
    pub fn vanishes_to_second_order(&self) -> bool {
        self.coeffs.keys().all(|a| a.degree() >= 2)
    }

    /// Coefficient-majorant bound for `sup_{|x| <= radius} |D^m f(x)|`
    /// (operator norm with Euclidean unit arguments). Always an upper bound
    /// for exact tables on the ball.
    pub fn derivative_majorant(&self, m: u32, radius: T) -> T {
        let mut total = T::zero();
        for beta in indices_of_degree(self.domain_dim, m) {
            let mut sup_partial = T::zero();
            for (alpha, c) in &self.coeffs {
                if alpha.0.iter().zip(&beta.0).any(|(a, b)| a < b) {
                    continue;
                }
                // alpha! / (alpha - beta)!
                let mut fall = T::one();
                for (a, b) in alpha.0.iter().zip(&beta.0) {
                    for t in (a - b + 1)..=*a {
                        fall *= conv::<T>(t as f64);
                    }
                }
                sup_partial += c.norm() * fall * radius.powi((alpha.degree() - m) as i32);
            }
            let mult = conv::<T>(MultiIndex(vec![m]).factorial() / beta.factorial());
            total += mult * sup_partial;
        }
        total
    }

    fn prune(&mut self) {
        self.coeffs.retain(|_, v| v.iter().any(|c| *c != T::zero()));
    }
}

fn scalar_mul<T: Real>(a: &Scalar<T>, b: &Scalar<T>, cap: u32) -> Scalar<T> {
    let mut out: Scalar<T> = BTreeMap::new();
    for (ai, av) in a {
        for (bi, bv) in b {
            if ai.degree() + bi.degree() > cap {
                continue;
            }
            let key = ai.add(bi);
            let prod = *av * *bv;
            *out.entry(key).or_insert_with(T::zero) += prod;
        }
    }
    out.retain(|_, v| *v != T::zero());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn poly_1d(coeffs: &[(u32, f64)], cap: u32) -> TaylorRep<f64> {
        let mut t = TaylorRep::zero(1, 1, cap);
        for &(k, c) in coeffs {
            t.set(MultiIndex(vec![k]), dvector![c]);
        }
        t
    }

    #[test]
    fn compose_square_after_cubic_shift() {
        // f(y) = y^2, g(x) = x + x^3, cap 4 -> x^2 + 2x^4
        let f = poly_1d(&[(2, 1.0)], 6);
        let g = poly_1d(&[(1, 1.0), (3, 1.0)], 6);
        let h = f.compose(&g, 4);
        assert_relative_eq!(h.coeff(&MultiIndex(vec![2]))[0], 1.0);
        assert_relative_eq!(h.coeff(&MultiIndex(vec![4]))[0], 2.0);
        assert_relative_eq!(h.coeff(&MultiIndex(vec![3]))[0], 0.0);
    }

    #[test]
    fn compose_identity_is_noop() {
        let f = poly_1d(&[(2, 3.0), (5, -1.0)], 6);
        let id = TaylorRep::identity(1, 6);
        let h = f.compose(&id, 6);
        assert_eq!(h.coeffs, f.coeffs);
        assert!(h.tail_exact);
    }

    #[test]
    fn derivative_tensor_matches_calculus() {
        // f(x, y) = x^2 y, D^2 entries at (1, 2): f_xx = 2y = 4, f_xy = 2x = 2, f_yy = 0
        let mut f = TaylorRep::zero(2, 1, 4);
        f.set(MultiIndex(vec![2, 1]), dvector![1.0]);
        let t = f.d_tensor(2, &dvector![1.0, 2.0]);
        assert_relative_eq!(t.entry(&[0, 0])[0], 4.0);
        assert_relative_eq!(t.entry(&[0, 1])[0], 2.0);
        assert_relative_eq!(t.entry(&[1, 1])[0], 0.0);
    }

    #[test]
    fn majorant_dominates_true_sup() {
        // f(x) = 2x^2 - 16x^4 on |x| <= 1/4: majorant 0.1875 vs true sup 0.0625
        let f = poly_1d(&[(2, 2.0), (4, -16.0)], 4);
        let m0 = f.derivative_majorant(0, 0.25);
        assert_relative_eq!(m0, 0.1875, epsilon = 1e-14);
        let mut sup = 0.0f64;
        for i in 0..=1000 {
            let x = -0.25 + 0.0005 * i as f64;
            sup = sup.max(f.eval(&dvector![x])[0].abs());
        }
        assert!(m0 >= sup);
        assert_relative_eq!(sup, 0.0625, epsilon = 1e-6);
    }

    #[test]
    fn domain_scaling_grades_coefficients() {
        let f = poly_1d(&[(1, 5.0), (2, 1.0), (3, 2.0)], 4);
        let s = f.scale_domain(0.1);
        assert_relative_eq!(s.coeff(&MultiIndex(vec![1]))[0], 5.0);
        assert_relative_eq!(s.coeff(&MultiIndex(vec![2]))[0], 0.1);
        assert_relative_eq!(s.coeff(&MultiIndex(vec![3]))[0], 0.02, epsilon = 1e-15);
    }

    #[test]
    fn cn_majorant_quadratic() {
        // f(x) = 2x^2 on [-1, 1], k = 1: max(sup|2x^2|, sup|4x|) = 4
        let f = poly_1d(&[(2, 2.0)], 4);
        let m0 = f.derivative_majorant(0, 1.0);
        let m1 = f.derivative_majorant(1, 1.0);
        assert_relative_eq!(m0.max(m1), 4.0);
    }
}
