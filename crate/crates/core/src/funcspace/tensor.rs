//! Symmetric multilinear values: the `m`-th derivative of a map at a point.
//!
//! Entries are stored once per sorted index tuple; evaluation and norms
//! expand over all `dim^m` tuples, which is cheap at the dimensions used
//! here.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::collections::BTreeMap;

use crate::real::{conv, Real};

/// Symmetric `order`-linear operator from `(R^dim)^order` to `R^codim`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensor<T: Real> {
    pub order: usize,
    pub dim: usize,
    pub codim: usize,
    entries: BTreeMap<Vec<u32>, DVector<T>>,
}

impl<T: Real> SymTensor<T> {
    pub fn zero(order: usize, dim: usize, codim: usize) -> Self {
        SymTensor {
            order,
            dim,
            codim,
            entries: BTreeMap::new(),
        }
    }

    /// Order-1 tensor from a Jacobian matrix (codim x dim).
    pub fn from_matrix(m: &DMatrix<T>) -> Self {
        let mut t = SymTensor::zero(1, m.ncols(), m.nrows());
        for j in 0..m.ncols() {
            t.set(&[j as u32], m.column(j).into_owned());
        }
        t
    }

    /// Jacobian matrix view of an order-1 tensor.
    pub fn to_matrix(&self) -> DMatrix<T> {
        assert_eq!(self.order, 1);
        let mut m = DMatrix::zeros(self.codim, self.dim);
        for j in 0..self.dim {
            m.set_column(j, &self.entry(&[j as u32]));
        }
        m
    }

    fn key(&self, idx: &[u32]) -> Vec<u32> {
        let mut k = idx.to_vec();
        k.sort_unstable();
        k
    }

    pub fn entry(&self, idx: &[u32]) -> DVector<T> {
        debug_assert_eq!(idx.len(), self.order);
        self.entries
            .get(&self.key(idx))
            .cloned()
            .unwrap_or_else(|| DVector::zeros(self.codim))
    }

    pub fn set(&mut self, idx: &[u32], value: DVector<T>) {
        debug_assert_eq!(idx.len(), self.order);
        let k = self.key(idx);
        self.entries.insert(k, value);
    }

    pub fn add_to(&mut self, idx: &[u32], value: &DVector<T>) {
        let k = self.key(idx);
        match self.entries.get_mut(&k) {
            Some(v) => *v += value,
            None => {
                self.entries.insert(k, value.clone());
            }
        }
    }

    pub fn sorted_entries(&self) -> impl Iterator<Item = (&Vec<u32>, &DVector<T>)> {
        self.entries.iter()
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = self.clone();
        for v in out.entries.values_mut() {
            *v *= s;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.order, self.dim, self.codim), (other.order, other.dim, other.codim));
        let mut out = self.clone();
        for (k, v) in &other.entries {
            match out.entries.get_mut(k) {
                Some(w) => *w += v,
                None => {
                    out.entries.insert(k.clone(), v.clone());
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(conv(-1.0)))
    }

    /// Evaluate on `order` argument vectors.
    pub fn apply(&self, args: &[&DVector<T>]) -> DVector<T> {
        assert_eq!(args.len(), self.order);
        let mut out = DVector::zeros(self.codim);
        for tuple in full_tuples(self.dim, self.order) {
            let e = match self.entries.get(&self.key(&tuple)) {
                Some(e) => e,
                None => continue,
            };
            let mut w = T::one();
            for (pos, &axis) in tuple.iter().enumerate() {
                w *= args[pos][axis as usize];
            }
            out.axpy(w, e, T::one());
        }
        out
    }

    /// Apply to the same vector in every slot.
    pub fn apply_uniform(&self, v: &DVector<T>) -> DVector<T> {
        let args: Vec<&DVector<T>> = (0..self.order).map(|_| v).collect();
        self.apply(&args)
    }

    /// Left-composition with a linear map on the codomain: `B . T`.
    pub fn left_mul(&self, b: &DMatrix<T>) -> Self {
        assert_eq!(b.ncols(), self.codim);
        let mut out = SymTensor::zero(self.order, self.dim, b.nrows());
        for (k, v) in &self.entries {
            out.entries.insert(k.clone(), b * v);
        }
        out
    }

    /// Precomposition of every slot with a linear map `A`: `T(A., ..., A.)`.
    /// Stays symmetric because every slot uses the same map.
    pub fn pullback(&self, a: &DMatrix<T>) -> Self {
        assert_eq!(a.nrows(), self.dim);
        let new_dim = a.ncols();
        let mut out = SymTensor::zero(self.order, new_dim, self.codim);
        if self.order == 0 {
            return SymTensor {
                entries: self.entries.clone(),
                ..out
            };
        }
        for tuple in full_tuples(new_dim, self.order) {
            let mut key = tuple.clone();
            key.sort_unstable();
            if out.entries.contains_key(&key) {
                continue;
            }
            let mut acc = DVector::zeros(self.codim);
            for src in full_tuples(self.dim, self.order) {
                let e = match self.entries.get(&self.key(&src)) {
                    Some(e) => e,
                    None => continue,
                };
                let mut w = T::one();
                for pos in 0..self.order {
                    w *= a[(src[pos] as usize, tuple[pos] as usize)];
                }
                acc.axpy(w, e, T::one());
            }
            out.entries.insert(key, acc);
        }
        out
    }

    /// Upper bound on the operator norm: sum of entry norms over all
    /// (unsorted) index tuples, each argument in the unit Euclidean ball.
    pub fn op_norm_upper(&self) -> T {
        let mut total = T::zero();
        for tuple in full_tuples(self.dim, self.order) {
            if let Some(e) = self.entries.get(&self.key(&tuple)) {
                total += e.norm();
            }
        }
        total
    }

    /// Sampled lower estimate of the operator norm over unit Euclidean
    /// arguments. Exact for order 1 (largest singular value).
    pub fn op_norm_estimate<R: Rng>(&self, rng: &mut R, samples: usize) -> T {
        if self.order == 0 {
            return self
                .entries
                .values()
                .next()
                .map(|v| v.norm())
                .unwrap_or_else(T::zero);
        }
        if self.order == 1 {
            let svd = self.to_matrix().svd(false, false);
            return svd.singular_values.max();
        }
        let mut best = T::zero();
        for _ in 0..samples {
            let args: Vec<DVector<T>> = (0..self.order)
                .map(|_| {
                    let v = DVector::from_fn(self.dim, |_, _| {
                        conv::<T>(rng.gen_range(-1.0..1.0))
                    });
                    let n = v.norm();
                    if n > T::zero() {
                        v / n
                    } else {
                        DVector::zeros(self.dim)
                    }
                })
                .collect();
            let refs: Vec<&DVector<T>> = args.iter().collect();
            let val = self.apply(&refs).norm();
            if val > best {
                best = val;
            }
        }
        best
    }

    pub fn max_entry_norm(&self) -> T {
        self.entries
            .values()
            .map(|v| v.norm())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    /// Interpolate tensors entrywise with the given weights.
    pub fn weighted_sum(parts: &[(T, &SymTensor<T>)]) -> SymTensor<T> {
        let (_, first) = parts[0];
        let mut out = SymTensor::zero(first.order, first.dim, first.codim);
        for &(w, t) in parts {
            for (k, v) in &t.entries {
                let mut scaled = v.clone();
                scaled *= w;
                match out.entries.get_mut(k) {
                    Some(acc) => *acc += &scaled,
                    None => {
                        out.entries.insert(k.clone(), scaled);
                    }
                }
            }
        }
        out
    }
}

/// All index tuples of the given length over `0..dim`.
pub fn full_tuples(dim: usize, len: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * dim);
        for t in &out {
            for a in 0..dim as u32 {
                let mut t2 = t.clone();
                t2.push(a);
                next.push(t2);
            }
        }
        out = next;
    }
    out
}

/// Leibniz rule on derivative lists: entry `J` of `D^m(f*g)` is
/// `sum over position subsets S of f-tensor(J_S) * g-tensor(J_Sc)` where `f`
/// is scalar valued. `df[k]`/`dg[k]` hold the order-`k` tensors.
pub fn leibniz_product<T: Real>(
    df: &[SymTensor<T>],
    dg: &[SymTensor<T>],
    m: usize,
) -> SymTensor<T> {
    let dim = dg[0].dim;
    let codim = dg[0].codim;
    assert_eq!(df[0].codim, 1, "first factor must be scalar valued");
    let mut out = SymTensor::zero(m, dim, codim);
    for tuple in full_tuples(dim, m) {
        let mut key = tuple.clone();
        key.sort_unstable();
        if out.entries.contains_key(&key) {
            continue;
        }
        let mut acc = DVector::zeros(codim);
        for mask in 0..(1u32 << m) {
            let mut s_idx = Vec::new();
            let mut c_idx = Vec::new();
            for pos in 0..m {
                if mask & (1 << pos) != 0 {
                    s_idx.push(tuple[pos]);
                } else {
                    c_idx.push(tuple[pos]);
                }
            }
            let fval = df[s_idx.len()].entry(&s_idx)[0];
            if fval == T::zero() {
                continue;
            }
            let gval = dg[c_idx.len()].entry(&c_idx);
            acc.axpy(fval, &gval, T::one());
        }
        out.entries.insert(key, acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    #[test]
    fn order_one_matches_matrix_action() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let t = SymTensor::from_matrix(&m);
        let v = dvector![0.5, -1.0];
        assert_relative_eq!((t.apply(&[&v]) - &m * &v).norm(), 0.0);
        assert_relative_eq!(t.op_norm_estimate(&mut rand::thread_rng(), 1) , m.svd(false, false).singular_values.max());
    }

    #[test]
    fn pullback_is_substitution() {
        // T(u, v) = u1*v1 on R^2, pulled back by A: entries become A^T diag A.
        let mut t = SymTensor::<f64>::zero(2, 2, 1);
        t.set(&[0, 0], dvector![1.0]);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let p = t.pullback(&a);
        let u = dvector![1.0, 0.0];
        let v = dvector![0.0, 1.0];
        // T(Au, Av) = (Au)_1 (Av)_1 = 2 * 1
        assert_relative_eq!(p.apply(&[&u, &v])[0], 2.0);
    }

    #[test]
    fn leibniz_on_constants() {
        // f = 3 (scalar), g linear: D^1(fg) = 3 Dg.
        let f0 = {
            let mut t = SymTensor::<f64>::zero(0, 2, 1);
            t.set(&[], dvector![3.0]);
            t
        };
        let f1 = SymTensor::zero(1, 2, 1);
        let g0 = {
            let mut t = SymTensor::<f64>::zero(0, 2, 1);
            t.set(&[], dvector![7.0]);
            t
        };
        let mut g1 = SymTensor::<f64>::zero(1, 2, 1);
        g1.set(&[0], dvector![5.0]);
        let d1 = leibniz_product(&[f0, f1], &[g0, g1], 1);
        assert_relative_eq!(d1.entry(&[0])[0], 15.0);
        assert_relative_eq!(d1.entry(&[1])[0], 0.0);
    }
}
