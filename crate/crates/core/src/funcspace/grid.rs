//! Sampled representation on a tensor grid over a box in center
//! coordinates, with finite-difference stencils and local polynomial
//! interpolation (Fornberg weights, windows clamped at the boundary).

use nalgebra::DVector;

use super::tensor::SymTensor;
use crate::error::{Error, Result};
use crate::real::{conv, Real};

/// Axis-aligned box, the computational domain in center coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain<T: Real> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Real> BoxDomain<T> {
    pub fn centered(halfwidth: T, dim: usize) -> Self {
        BoxDomain {
            lo: vec![-halfwidth; dim],
            hi: vec![halfwidth; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &DVector<T>) -> bool {
        (0..self.dim()).all(|i| x[i] >= self.lo[i] && x[i] <= self.hi[i])
    }

    pub fn scale(&self, s: T) -> Self {
        BoxDomain {
            lo: self.lo.iter().map(|&v| v * s).collect(),
            hi: self.hi.iter().map(|&v| v * s).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridRep<T: Real> {
    pub domain: BoxDomain<T>,
    /// Nodes per axis.
    pub resolution: usize,
    pub codomain_dim: usize,
    /// Finite-difference accuracy order (2 or 4).
    pub stencil_order: usize,
    /// Node-major values, last axis fastest.
    pub values: Vec<DVector<T>>,
}

impl<T: Real> GridRep<T> {
    pub fn from_fn(
        domain: BoxDomain<T>,
        resolution: usize,
        codomain_dim: usize,
        stencil_order: usize,
        f: impl Fn(&DVector<T>) -> DVector<T> + Sync,
    ) -> Self {
        assert!(resolution >= stencil_order + 2, "grid too coarse for the stencil");
        let dim = domain.dim();
        let n = resolution.pow(dim as u32);
        let mut grid = GridRep {
            domain,
            resolution,
            codomain_dim,
            stencil_order,
            values: Vec::with_capacity(n),
        };
        for node in 0..n {
            let x = grid.node_coords(&grid.node_index(node));
            grid.values.push(f(&x));
        }
        grid
    }

    pub fn zeros(domain: BoxDomain<T>, resolution: usize, codomain_dim: usize, stencil_order: usize) -> Self {
        Self::from_fn(domain, resolution, codomain_dim, stencil_order, |_| {
            DVector::zeros(codomain_dim)
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn node_count(&self) -> usize {
        self.resolution.pow(self.dim() as u32)
    }

    pub fn spacing(&self, axis: usize) -> T {
        (self.domain.hi[axis] - self.domain.lo[axis]) / conv((self.resolution - 1) as f64)
    }

    /// Flat node id -> per-axis index.
    pub fn node_index(&self, node: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        let mut rem = node;
        for axis in (0..self.dim()).rev() {
            idx[axis] = rem % self.resolution;
            rem /= self.resolution;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut node = 0;
        for axis in 0..self.dim() {
            node = node * self.resolution + idx[axis];
        }
        node
    }

    pub fn node_coords(&self, idx: &[usize]) -> DVector<T> {
        DVector::from_fn(self.dim(), |axis, _| {
            self.domain.lo[axis] + self.spacing(axis) * conv(idx[axis] as f64)
        })
    }

    /// True when the node is far enough from the boundary that centered
    /// stencils of the configured order fit.
    pub fn is_interior(&self, node: usize) -> bool {
        let margin = self.stencil_order / 2 + 1;
        self.node_index(node)
            .iter()
            .all(|&i| i >= margin && i + margin < self.resolution)
    }

    /// Sparse interpolation weights at an arbitrary in-box point: pairs of
    /// (flat node id, weight). `None` outside the box.
    pub fn interp_weights(&self, x: &DVector<T>) -> Option<Vec<(usize, T)>> {
        if !self.domain.contains(x) {
            return None;
        }
        let window = self.stencil_order + 2;
        let mut axis_weights: Vec<(usize, Vec<T>)> = Vec::with_capacity(self.dim());
        for axis in 0..self.dim() {
            let (start, w) = self.axis_weights(axis, x[axis], 0, window);
            axis_weights.push((start, w));
        }
        let mut acc: Vec<(usize, T)> = vec![(0, T::one())];
        for (start, w) in &axis_weights {
            let mut next = Vec::with_capacity(acc.len() * w.len());
            for &(node, wt) in &acc {
                for (k, &wk) in w.iter().enumerate() {
                    next.push((node * self.resolution + start + k, wt * wk));
                }
            }
            acc = next;
        }
        Some(acc)
    }

    /// Interpolated value; `None` outside the box.
    pub fn interpolate(&self, x: &DVector<T>) -> Option<DVector<T>> {
        let weights = self.interp_weights(x)?;
        let mut out = DVector::zeros(self.codomain_dim);
        for (node, w) in weights {
            out.axpy(w, &self.values[node], T::one());
        }
        Some(out)
    }

    /// Mixed partial derivative (per-axis orders) at a grid node.
    pub fn fd_partial(&self, orders: &[u32], idx: &[usize]) -> DVector<T> {
        let mut acc: Vec<(Vec<usize>, T)> = vec![(idx.to_vec(), T::one())];
        for axis in 0..self.dim() {
            let k = orders[axis] as usize;
            if k == 0 {
                continue;
            }
            let window = k + self.stencil_order + 1;
            let x_here = self.domain.lo[axis] + self.spacing(axis) * conv(idx[axis] as f64);
            let (start, w) = self.axis_weights(axis, x_here, k, window);
            let mut next = Vec::with_capacity(acc.len() * w.len());
            for (node_idx, wt) in &acc {
                for (j, &wj) in w.iter().enumerate() {
                    let mut ni = node_idx.clone();
                    ni[axis] = start + j;
                    next.push((ni, *wt * wj));
                }
            }
            acc = next;
        }
        let mut out = DVector::zeros(self.codomain_dim);
        for (node_idx, wt) in acc {
            out.axpy(wt, &self.values[self.flat_index(&node_idx)], T::one());
        }
        out
    }

    /// Symmetric `m`-th derivative tensor at a node by mixed stencils.
    pub fn fd_tensor(&self, m: usize, idx: &[usize]) -> Result<SymTensor<T>> {
        let window = m + self.stencil_order + 1;
        if window > self.resolution {
            return Err(Error::InsufficientSmoothness {
                requested: m,
                available: self.resolution.saturating_sub(self.stencil_order + 1),
            });
        }
        let mut out = SymTensor::zero(m, self.dim(), self.codomain_dim);
        let mut stack: Vec<Vec<u32>> = vec![vec![]];
        while let Some(tuple) = stack.pop() {
            if tuple.len() == m {
                let mut orders = vec![0u32; self.dim()];
                for &axis in &tuple {
                    orders[axis as usize] += 1;
                }
                out.set(&tuple, self.fd_partial(&orders, idx));
                continue;
            }
            let start = tuple.last().copied().unwrap_or(0);
            for axis in start..self.dim() as u32 {
                let mut t2 = tuple.clone();
                t2.push(axis);
                stack.push(t2);
            }
        }
        Ok(out)
    }

    /// Largest Euclidean value norm over all nodes.
    pub fn sup_value_norm(&self) -> T {
        self.values
            .iter()
            .map(|v| v.norm())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn all_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.iter().all(|c| c.is_finite()))
    }

    /// Per-axis window start and Fornberg weights for the `der`-th derivative
    /// evaluated at coordinate `x` along `axis`.
    fn axis_weights(&self, axis: usize, x: T, der: usize, window: usize) -> (usize, Vec<T>) {
        let window = window.min(self.resolution);
        let h = self.spacing(axis);
        let rel = (x - self.domain.lo[axis]) / h;
        let center = rel.to_f64().unwrap_or(0.0).floor() as isize;
        let start = (center - (window as isize - 1) / 2)
            .clamp(0, (self.resolution - window) as isize) as usize;
        let nodes: Vec<T> = (0..window)
            .map(|j| self.domain.lo[axis] + h * conv((start + j) as f64))
            .collect();
        (start, fornberg_weights(x, &nodes, der))
    }
}

/// Fornberg finite-difference weights: coefficients `w` such that
/// `f^(m)(z) ~= sum w_i f(x_i)` for the given nodes.
pub fn fornberg_weights<T: Real>(z: T, xs: &[T], m: usize) -> Vec<T> {
    let n = xs.len();
    assert!(n > m, "need more nodes than the derivative order");
    let mut c = vec![vec![T::zero(); m + 1]; n];
    let mut c1 = T::one();
    let mut c4 = xs[0] - z;
    c[0][0] = T::one();
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = T::one();
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (conv::<T>(k as f64) * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - conv::<T>(k as f64) * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    #[test]
    fn fornberg_reproduces_central_stencils() {
        let xs: Vec<f64> = vec![-2.0, -1.0, 0.0, 1.0, 2.0];
        let w = fornberg_weights(0.0, &xs, 1);
        let expect = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn interpolation_exact_on_cubics() {
        let grid = GridRep::from_fn(BoxDomain::centered(1.0, 1), 21, 1, 2, |x| {
            dvector![x[0].powi(3) - 2.0 * x[0]]
        });
        let x = dvector![0.137];
        let v = grid.interpolate(&x).unwrap();
        assert_relative_eq!(v[0], 0.137f64.powi(3) - 2.0 * 0.137, epsilon = 1e-12);
        assert!(grid.interpolate(&dvector![1.5]).is_none());
    }

    #[test]
    fn fd_derivatives_on_2d_polynomial() {
        let grid = GridRep::from_fn(BoxDomain::centered(1.0, 2), 33, 1, 4, |x| {
            dvector![x[0].powi(2) * x[1]]
        });
        let idx = [16usize, 20]; // x = 0, y = 0.25
        let t = grid.fd_tensor(2, &idx).unwrap();
        let x = grid.node_coords(&idx);
        assert_relative_eq!(t.entry(&[0, 0])[0], 2.0 * x[1], epsilon = 1e-9);
        assert_relative_eq!(t.entry(&[0, 1])[0], 2.0 * x[0], epsilon = 1e-9);
        assert_relative_eq!(t.entry(&[1, 1])[0], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn boundary_nodes_use_shifted_windows() {
        let grid = GridRep::from_fn(BoxDomain::centered(1.0, 1), 17, 1, 2, |x| {
            dvector![x[0].powi(2)]
        });
        let d = grid.fd_partial(&[1], &[0]);
        assert_relative_eq!(d[0], -2.0, epsilon = 1e-10);
    }
}
