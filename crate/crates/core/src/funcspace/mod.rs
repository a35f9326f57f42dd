//! Function-space substrate: maps carried simultaneously as truncated
//! Taylor tables and sampled grid functions, with norm estimation,
//! composition, higher derivatives of compositions, and global inversion
//! of near-linear center maps.

pub mod grid;
pub mod multiindex;
pub mod taylor;
pub mod tensor;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linmodel::cutoff::CutoffFunction;
use crate::real::{conv, Real};
use grid::GridRep;
use taylor::TaylorRep;
use tensor::{leibniz_product, SymTensor};

/// Where a norm figure came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormProvenance {
    /// Coefficient-sum majorant: a genuine upper bound on the ball.
    CoefficientBound,
    /// Sampled finite differences or sampled analytic derivatives: an
    /// estimate, not a bound.
    Sampled,
}

#[derive(Clone, Copy, Debug)]
pub struct NormEstimate<T: Real> {
    pub value: T,
    pub provenance: NormProvenance,
}

/// A C^n map carried in dual representation.
///
/// `taylor` always holds the polynomial part (for localized maps, the raw
/// polynomial before the bump factor). `grid` holds samples over the
/// computational box when the map lives on center coordinates. `cutoff`
/// multiplies every pointwise evaluation.
#[derive(Clone, Debug)]
pub struct SmoothMapRep<T: Real> {
    pub taylor: TaylorRep<T>,
    pub grid: Option<GridRep<T>>,
    pub cutoff: Option<CutoffFunction<T>>,
    /// Euclidean radius of the region norms are taken over when no grid is
    /// attached.
    pub domain_radius: T,
}

impl<T: Real> SmoothMapRep<T> {
    pub fn from_polynomial(taylor: TaylorRep<T>, domain_radius: T) -> Self {
        SmoothMapRep {
            taylor,
            grid: None,
            cutoff: None,
            domain_radius,
        }
    }

    pub fn localized(raw: TaylorRep<T>, cutoff: CutoffFunction<T>) -> Self {
        let radius = cutoff.outer_radius;
        SmoothMapRep {
            taylor: raw,
            grid: None,
            cutoff: Some(cutoff),
            domain_radius: radius,
        }
    }

    pub fn with_grid(taylor: TaylorRep<T>, grid: GridRep<T>) -> Self {
        let radius = grid
            .domain
            .hi
            .iter()
            .map(|&v| v * v)
            .fold(T::zero(), |a, b| a + b)
            .sqrt();
        SmoothMapRep {
            taylor,
            grid: Some(grid),
            cutoff: None,
            domain_radius: radius,
        }
    }

    pub fn zero_map(domain_dim: usize, codomain_dim: usize, cap: u32, domain_radius: T) -> Self {
        Self::from_polynomial(TaylorRep::zero(domain_dim, codomain_dim, cap), domain_radius)
    }

    pub fn domain_dim(&self) -> usize {
        self.taylor.domain_dim
    }

    pub fn codomain_dim(&self) -> usize {
        self.taylor.codomain_dim
    }

    /// Pointwise value, preferring the grid inside its box.
    pub fn eval(&self, x: &DVector<T>) -> DVector<T> {
        if let Some(g) = &self.grid {
            if let Some(v) = g.interpolate(x) {
                return v;
            }
        }
        let mut v = self.taylor.eval(x);
        if let Some(c) = &self.cutoff {
            v *= c.eval(x);
        }
        v
    }

    /// Pointwise value with the zero extension outside the grid box.
    /// Exact for localized data, which vanishes there anyway.
    pub fn eval_extended(&self, x: &DVector<T>) -> DVector<T> {
        if let Some(g) = &self.grid {
            return g
                .interpolate(x)
                .unwrap_or_else(|| DVector::zeros(self.codomain_dim()));
        }
        let mut v = self.taylor.eval(x);
        if let Some(c) = &self.cutoff {
            v *= c.eval(x);
        }
        v
    }

    /// Analytic `m`-th derivative tensor (Taylor table, with the bump factor
    /// handled by the product rule when present).
    pub fn d_tensor(&self, m: usize, x: &DVector<T>) -> SymTensor<T> {
        match &self.cutoff {
            None => self.taylor.d_tensor(m, x),
            Some(c) => {
                let df: Vec<SymTensor<T>> = (0..=m).map(|k| c.d_tensor(k, x)).collect();
                let dg: Vec<SymTensor<T>> = (0..=m).map(|k| self.taylor.d_tensor(k, x)).collect();
                if m == 0 {
                    let mut t = SymTensor::zero(0, self.domain_dim(), self.codomain_dim());
                    let mut v = dg[0].entry(&[]);
                    v *= df[0].entry(&[])[0];
                    t.set(&[], v);
                    t
                } else {
                    leibniz_product(&df, &dg, m)
                }
            }
        }
    }

    /// Derivative tensor from grid stencils at the node nearest to `x`.
    pub fn d_tensor_grid(&self, m: usize, x: &DVector<T>) -> Result<SymTensor<T>> {
        let g = self.grid.as_ref().ok_or(Error::InsufficientSmoothness {
            requested: m,
            available: 0,
        })?;
        let idx: Vec<usize> = (0..g.dim())
            .map(|axis| {
                let rel = (x[axis] - g.domain.lo[axis]) / g.spacing(axis);
                (rel.to_f64().unwrap_or(0.0).round() as isize)
                    .clamp(0, g.resolution as isize - 1) as usize
            })
            .collect();
        g.fd_tensor(m, &idx)
    }

    /// Attach (or refresh) a grid sampled from the analytic representation.
    pub fn resampled_on(&self, domain: grid::BoxDomain<T>, resolution: usize, stencil_order: usize) -> Self {
        let g = GridRep::from_fn(domain, resolution, self.codomain_dim(), stencil_order, |x| {
            let mut v = self.taylor.eval(x);
            if let Some(c) = &self.cutoff {
                v *= c.eval(x);
            }
            v
        });
        SmoothMapRep {
            taylor: self.taylor.clone(),
            grid: Some(g),
            cutoff: self.cutoff.clone(),
            domain_radius: self.domain_radius,
        }
    }

    /// Max relative disagreement between the two representations at grid
    /// nodes within the trust radius.
    pub fn representation_gap(&self, trust_radius: T) -> Option<T> {
        let g = self.grid.as_ref()?;
        let mut worst = T::zero();
        for node in 0..g.node_count() {
            let x = g.node_coords(&g.node_index(node));
            if x.norm() > trust_radius {
                continue;
            }
            let mut poly = self.taylor.eval(&x);
            if let Some(c) = &self.cutoff {
                poly *= c.eval(&x);
            }
            let denom = T::one().max(poly.norm());
            let gap = (poly - &g.values[node]).norm() / denom;
            if gap > worst {
                worst = gap;
            }
        }
        Some(worst)
    }
}

/// The C^k norm `max_{m <= k} sup |D^m f|`.
///
/// Prefers the coefficient majorant (a true upper bound) for exact
/// polynomial tables; otherwise samples derivatives and reports an
/// estimate. Localized maps use the product rule for the bound route up to
/// second derivatives.
pub fn cn_norm<T: Real>(f: &SmoothMapRep<T>, k: usize) -> Result<NormEstimate<T>> {
    if f.grid.is_none() && f.cutoff.is_none() && f.taylor.tail_exact {
        let mut worst = T::zero();
        for m in 0..=k {
            let b = f.taylor.derivative_majorant(m as u32, f.domain_radius);
            if b > worst {
                worst = b;
            }
        }
        return Ok(NormEstimate {
            value: worst,
            provenance: NormProvenance::CoefficientBound,
        });
    }
    cn_norm_sampled(f, k)
}

/// Coefficient/product-rule upper bound where available (k <= 2 for
/// localized maps).
pub fn cn_norm_bound<T: Real>(f: &SmoothMapRep<T>, k: usize) -> Option<NormEstimate<T>> {
    if !f.taylor.tail_exact {
        return None;
    }
    let radius = f.domain_radius;
    let raw = |m: u32| f.taylor.derivative_majorant(m, radius);
    let value = match &f.cutoff {
        None => {
            let mut worst = T::zero();
            for m in 0..=k {
                worst = worst.max(raw(m as u32));
            }
            worst
        }
        Some(c) => {
            if k > 2 {
                return None;
            }
            let mut worst = raw(0);
            if k >= 1 {
                worst = worst.max(raw(1) + raw(0) * c.d1_bound);
            }
            if k >= 2 {
                worst = worst.max(
                    raw(2) + conv::<T>(2.0) * raw(1) * c.d1_bound + raw(0) * c.d2_bound,
                );
            }
            worst
        }
    };
    Some(NormEstimate {
        value,
        provenance: NormProvenance::CoefficientBound,
    })
}

/// Sampled-route C^k norm: grid stencils when a grid is attached, analytic
/// derivatives at deterministic ball samples otherwise.
pub fn cn_norm_sampled<T: Real>(f: &SmoothMapRep<T>, k: usize) -> Result<NormEstimate<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d616e69);
    let mut worst = T::zero();
    if let Some(g) = &f.grid {
        for m in 0..=k {
            for node in 0..g.node_count() {
                if !g.is_interior(node) && m > 0 {
                    continue;
                }
                let t = if m == 0 {
                    let mut t0 = SymTensor::zero(0, g.dim(), g.codomain_dim);
                    t0.set(&[], g.values[node].clone());
                    t0
                } else {
                    g.fd_tensor(m, &g.node_index(node))?
                };
                let est = t.op_norm_estimate(&mut rng, 64);
                if est > worst {
                    worst = est;
                }
            }
        }
    } else {
        let dim = f.domain_dim();
        let pts = ball_samples(dim, f.domain_radius, 2048, 0xba11);
        for m in 0..=k {
            for x in &pts {
                let t = f.d_tensor(m, x);
                let est = t.op_norm_estimate(&mut rng, 32);
                if est > worst {
                    worst = est;
                }
            }
        }
    }
    Ok(NormEstimate {
        value: worst,
        provenance: NormProvenance::Sampled,
    })
}

/// Deterministic sample points in the Euclidean ball: radial rays plus
/// rejection-sampled interior points.
pub fn ball_samples<T: Real>(dim: usize, radius: T, count: usize, seed: u64) -> Vec<DVector<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(count);
    while pts.len() < count {
        let v = DVector::from_fn(dim, |_, _| conv::<T>(rng.gen_range(-1.0..1.0)));
        let n = v.norm();
        if n <= T::one() && n > T::zero() {
            pts.push(v * radius);
        }
    }
    // geometric ray probe along each axis
    for axis in 0..dim {
        let mut r = radius;
        for _ in 0..12 {
            let mut v = DVector::zeros(dim);
            v[axis] = r;
            pts.push(v);
            r *= conv::<T>(0.5);
        }
    }
    pts
}

/// Composition `f1 . f2`, Taylor tables truncated at `cap`, grids composed
/// pointwise. Errors with `DomainEscape` when more than 10% of `f2`'s grid
/// nodes land outside `f1`'s box.
pub fn compose<T: Real>(
    f1: &SmoothMapRep<T>,
    f2: &SmoothMapRep<T>,
    cap: u32,
) -> Result<SmoothMapRep<T>> {
    if f1.domain_dim() != f2.codomain_dim() {
        return Err(Error::InvalidNonlinearity(format!(
            "composition shape mismatch: inner codomain {} vs outer domain {}",
            f2.codomain_dim(),
            f1.domain_dim()
        )));
    }
    // Outer trust region check on the inner constant term.
    let c0 = f2.taylor.coeff(&multiindex::MultiIndex::zero(f2.domain_dim()));
    if c0.norm() > f1.domain_radius {
        return Err(Error::DomainEscape {
            escaped: 1,
            total: 1,
        });
    }
    let mut taylor = f1.taylor.compose(&f2.taylor, cap);
    if f1.cutoff.is_some() {
        // The bump factor does not survive symbolic composition; the table
        // holds the raw polynomial part and stays exact near the origin.
        taylor.tail_exact = false;
    }
    let grid = match &f2.grid {
        Some(g2) => {
            let mut escaped = 0usize;
            let values: Vec<DVector<T>> = (0..g2.node_count())
                .map(|node| {
                    let y = &g2.values[node];
                    match &f1.grid {
                        Some(g1) if !g1.domain.contains(y) => {
                            escaped += 1;
                            DVector::zeros(f1.codomain_dim())
                        }
                        _ => f1.eval(y),
                    }
                })
                .collect();
            if escaped * 10 > g2.node_count() {
                return Err(Error::DomainEscape {
                    escaped,
                    total: g2.node_count(),
                });
            }
            Some(GridRep {
                domain: g2.domain.clone(),
                resolution: g2.resolution,
                codomain_dim: f1.codomain_dim(),
                stencil_order: g2.stencil_order,
                values,
            })
        }
        None => None,
    };
    Ok(SmoothMapRep {
        taylor,
        grid,
        cutoff: None,
        domain_radius: f2.domain_radius,
    })
}

/// Set partitions of `{0..m-1}`, each a list of blocks.
pub fn set_partitions(m: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(k: usize, m: usize) -> Vec<Vec<Vec<usize>>> {
        if k == m {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for mut tail in rec(k + 1, m) {
            for b in 0..tail.len() {
                let mut copy = tail.clone();
                copy[b].push(k);
                out.push(copy);
            }
            tail.push(vec![k]);
            out.push(tail);
        }
        out
    }
    rec(0, m)
}

fn fdb_partition_sum<T: Real>(
    d1: &[SymTensor<T>],
    d2: &[SymTensor<T>],
    m: usize,
    keep: impl Fn(usize) -> bool,
    dim: usize,
    codim: usize,
) -> SymTensor<T> {
    let mut out = SymTensor::zero(m, dim, codim);
    let partitions = set_partitions(m);
    for tuple in tensor::full_tuples(dim, m) {
        let mut key = tuple.clone();
        key.sort_unstable();
        if out.entry(&key).iter().any(|c| *c != T::zero()) {
            continue;
        }
        let mut acc = DVector::zeros(codim);
        for part in &partitions {
            if !keep(part.len()) {
                continue;
            }
            let args: Vec<DVector<T>> = part
                .iter()
                .map(|block| {
                    let idx: Vec<u32> = block.iter().map(|&pos| tuple[pos]).collect();
                    d2[block.len()].entry(&idx)
                })
                .collect();
            let refs: Vec<&DVector<T>> = args.iter().collect();
            acc += d1[part.len()].apply(&refs);
        }
        out.set(&key, acc);
    }
    out
}

/// `D^m (f1 . f2)(x)` as a symmetric tensor.
///
/// Exact polynomial pairs go through symbolic composition of the tables;
/// anything carrying a bump factor or grid uses the partition expansion
/// with analytic derivative oracles.
pub fn faa_di_bruno<T: Real>(
    f1: &SmoothMapRep<T>,
    f2: &SmoothMapRep<T>,
    m: usize,
    x: &DVector<T>,
) -> Result<SymTensor<T>> {
    if f1.cutoff.is_none() && f1.grid.is_none() && f1.taylor.tail_exact && f2.taylor.tail_exact && f2.grid.is_none() && f2.cutoff.is_none() {
        let cap = f1.taylor.max_degree().max(1) * f2.taylor.max_degree().max(1);
        let composed = f1.taylor.compose(&f2.taylor, cap);
        return Ok(composed.d_tensor(m, x));
    }
    if m == 0 {
        let y = f2.eval(x);
        let mut t = SymTensor::zero(0, f2.domain_dim(), f1.codomain_dim());
        t.set(&[], f1.eval(&y));
        return Ok(t);
    }
    let y = f2.eval(x);
    let d1: Vec<SymTensor<T>> = (0..=m).map(|k| f1.d_tensor(k, &y)).collect();
    let d2: Vec<SymTensor<T>> = (0..=m).map(|k| f2.d_tensor(k, x)).collect();
    Ok(fdb_partition_sum(
        &d1,
        &d2,
        m,
        |_| true,
        f2.domain_dim(),
        f1.codomain_dim(),
    ))
}

/// The partition remainder: the composition derivative minus its two
/// extremal terms, i.e. the sum over partitions with between 2 and m-1
/// blocks. Identically zero for m = 2.
pub fn partition_remainder<T: Real>(
    f1: &SmoothMapRep<T>,
    f2: &SmoothMapRep<T>,
    m: usize,
    x: &DVector<T>,
) -> Result<SymTensor<T>> {
    if m < 2 {
        return Err(Error::InsufficientSmoothness {
            requested: m,
            available: 2,
        });
    }
    if m == 2 {
        return Ok(SymTensor::zero(2, f2.domain_dim(), f1.codomain_dim()));
    }
    let y = f2.eval(x);
    let d1: Vec<SymTensor<T>> = (0..=m).map(|k| f1.d_tensor(k, &y)).collect();
    let d2: Vec<SymTensor<T>> = (0..=m).map(|k| f2.d_tensor(k, x)).collect();
    Ok(fdb_partition_sum(
        &d1,
        &d2,
        m,
        |blocks| blocks >= 2 && blocks <= m - 1,
        f2.domain_dim(),
        f1.codomain_dim(),
    ))
}

/// Partition remainder from explicit derivative oracles (used when the two
/// maps are not carried as `SmoothMapRep`, e.g. the return map itself).
pub fn partition_remainder_tensors<T: Real>(
    d1: &[SymTensor<T>],
    d2: &[SymTensor<T>],
    m: usize,
) -> SymTensor<T> {
    assert!(m >= 2);
    let dim = d2[1].dim;
    let codim = d1[1].codim;
    if m == 2 {
        return SymTensor::zero(2, dim, codim);
    }
    fdb_partition_sum(d1, d2, m, |blocks| blocks >= 2 && blocks <= m - 1, dim, codim)
}

/// Inversion of `A_c + r` as `A_c^{-1} + t`: Picard iteration of
/// `t -> -A_c^{-1} (r . (A_c^{-1} + t))` on both representations.
pub fn invert_center_map<T: Real>(
    r: &SmoothMapRep<T>,
    a_c: &DMatrix<T>,
    tol: T,
    max_iter: usize,
) -> Result<SmoothMapRep<T>> {
    let dim = a_c.nrows();
    let a_c_inv = a_c.clone().try_inverse().ok_or(Error::SingularBlock {
        block: "center",
        cond: f64::INFINITY,
    })?;
    let inv_norm = op_norm(&a_c_inv);
    let dr_norm = match &r.grid {
        Some(_) => cn_norm_sampled(r, 1)?.value.max(jet_norm_first(r)),
        None => cn_norm(r, 1)?.value,
    };
    if dr_norm * inv_norm >= T::one() {
        return Err(Error::NotAContraction {
            deriv_norm: crate::real::to_f64(dr_norm),
            bound: crate::real::to_f64(T::one() / inv_norm),
        });
    }

    // Taylor side: each sweep is exact one order deeper, so cap + 2 sweeps
    // settle the table.
    let cap = r.taylor.degree_cap;
    let inv_tab = TaylorRep::linear(&a_c_inv, cap);
    let neg_inv = a_c_inv.clone() * conv::<T>(-1.0);
    let mut t_tab = TaylorRep::zero(dim, dim, cap);
    for _ in 0..=(cap + 2) {
        let arg = inv_tab.add(&t_tab);
        t_tab = r.taylor.compose(&arg, cap).mat_mul(&neg_inv);
    }

    // Grid side: pointwise Picard with interpolated evaluation of r.
    let grid = match &r.grid {
        None => None,
        Some(g) => {
            let mut t_vals: Vec<DVector<T>> = vec![DVector::zeros(dim); g.node_count()];
            let coords: Vec<DVector<T>> = (0..g.node_count())
                .map(|n| g.node_coords(&g.node_index(n)))
                .collect();
            let mut residual = T::max_value().unwrap();
            let mut iterations = 0;
            for it in 0..max_iter {
                iterations = it + 1;
                let next: Vec<DVector<T>> = coords
                    .par_iter()
                    .zip(t_vals.par_iter())
                    .map(|(x, t)| {
                        let arg = &a_c_inv * x + t;
                        -(&a_c_inv * r.eval_extended(&arg))
                    })
                    .collect();
                t_vals = next;
                // C0 residual of (A_c + r) . (A_c^{-1} + t) - Id
                residual = coords
                    .par_iter()
                    .zip(t_vals.par_iter())
                    .map(|(x, t)| {
                        let tx = &a_c_inv * x + t;
                        let rtx = a_c * &tx + r.eval_extended(&tx);
                        (rtx - x).norm()
                    })
                    .reduce(T::zero, |a, b| if b > a { b } else { a });
                if residual <= tol {
                    break;
                }
            }
            if residual > tol {
                return Err(Error::NoConvergence {
                    what: "center map inversion",
                    residual: crate::real::to_f64(residual),
                    tol: crate::real::to_f64(tol),
                    iterations,
                });
            }
            Some(GridRep {
                domain: g.domain.clone(),
                resolution: g.resolution,
                codomain_dim: dim,
                stencil_order: g.stencil_order,
                values: t_vals,
            })
        }
    };

    Ok(SmoothMapRep {
        taylor: t_tab,
        grid,
        cutoff: None,
        domain_radius: r.domain_radius,
    })
}

/// Both one-sided inversion residuals `R.T - Id` and `T.R - Id` in C^0 over
/// the grid interior.
pub fn inversion_residuals<T: Real>(
    r: &SmoothMapRep<T>,
    t: &SmoothMapRep<T>,
    a_c: &DMatrix<T>,
) -> (T, T) {
    let a_c_inv = a_c.clone().try_inverse().expect("invertible center block");
    let g = match (&r.grid, &t.grid) {
        (Some(g), _) => g.clone(),
        (None, Some(g)) => g.clone(),
        _ => return (T::zero(), T::zero()),
    };
    let mut fwd = T::zero();
    let mut bwd = T::zero();
    for node in 0..g.node_count() {
        if !g.is_interior(node) {
            continue;
        }
        let x = g.node_coords(&g.node_index(node));
        let tx = &a_c_inv * &x + t.eval_extended(&x);
        let rtx = a_c * &tx + r.eval_extended(&tx);
        fwd = fwd.max((rtx - &x).norm());
        let rx = a_c * &x + r.eval_extended(&x);
        let trx = &a_c_inv * &rx + t.eval_extended(&rx);
        bwd = bwd.max((trx - &x).norm());
    }
    (fwd, bwd)
}

/// `D^m T(x)` by the inverse-derivative recursion, using only base-point
/// values of `t` (derivatives of the inverse are rebuilt, not read off the
/// table, so this is an independent route).
pub fn inverse_derivative_tensor<T: Real>(
    r: &SmoothMapRep<T>,
    t: &SmoothMapRep<T>,
    a_c: &DMatrix<T>,
    m: usize,
    x: &DVector<T>,
) -> Result<SymTensor<T>> {
    if m < 2 {
        return Err(Error::InsufficientSmoothness {
            requested: m,
            available: 2,
        });
    }
    let dim = a_c.nrows();
    let a_c_inv = a_c.clone().try_inverse().ok_or(Error::SingularBlock {
        block: "center",
        cond: f64::INFINITY,
    })?;
    let tx = &a_c_inv * x + t.eval_extended(x);
    let dt_mat = (a_c + r.d_tensor(1, &tx).to_matrix())
        .try_inverse()
        .ok_or(Error::SingularBlock {
            block: "center return map",
            cond: f64::INFINITY,
        })?;

    // d_t[k] = D^k T(x); d_r_at_tx[k] = D^k R(T(x)).
    let mut d_t: Vec<SymTensor<T>> = Vec::with_capacity(m + 1);
    let mut t0 = SymTensor::zero(0, dim, dim);
    t0.set(&[], tx.clone());
    d_t.push(t0);
    d_t.push(SymTensor::from_matrix(&dt_mat));
    let mut d_r: Vec<SymTensor<T>> = Vec::with_capacity(m + 1);
    let mut r0 = SymTensor::zero(0, dim, dim);
    r0.set(&[], a_c * &tx + r.eval_extended(&tx));
    d_r.push(r0);
    d_r.push(SymTensor::from_matrix(&(a_c + r.d_tensor(1, &tx).to_matrix())));
    for k in 2..=m {
        d_r.push(r.d_tensor(k, &tx));
    }

    for k in 2..=m {
        let extremal = r.d_tensor(k, &tx).pullback(&dt_mat).left_mul(&dt_mat);
        let remainder = partition_remainder_tensors(&d_r, &d_t, k).left_mul(&dt_mat);
        let dk = extremal.add(&remainder).scale(conv(-1.0));
        d_t.push(dk);
    }
    Ok(d_t.pop().unwrap())
}

/// Largest singular value.
pub fn op_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 || m.ncols() == 0 {
        return T::zero();
    }
    m.clone().svd(false, false).singular_values.max()
}

fn jet_norm_first<T: Real>(r: &SmoothMapRep<T>) -> T {
    // first-derivative estimate at the origin from the table, a cheap floor
    // under the sampled estimate
    let x = DVector::zeros(r.domain_dim());
    op_norm(&r.taylor.jacobian(&x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use multiindex::MultiIndex;
    use nalgebra::dvector;

    fn rep_1d(coeffs: &[(u32, f64)], cap: u32, radius: f64) -> SmoothMapRep<f64> {
        let mut t = TaylorRep::zero(1, 1, cap);
        for &(k, c) in coeffs {
            t.set(MultiIndex(vec![k]), dvector![c]);
        }
        SmoothMapRep::from_polynomial(t, radius)
    }

    #[test]
    fn series_reversion_of_cubic_shift() {
        // r(x) = 2x^3; (x + 2x^3)^{-1} = x - 2x^3 + 12x^5 + O(x^7)
        let r = rep_1d(&[(3, 2.0)], 7, 0.3);
        let a_c = DMatrix::<f64>::from_element(1, 1, 1.0);
        let t = invert_center_map(&r, &a_c, 1e-12, 200).unwrap();
        assert_relative_eq!(t.taylor.coeff(&MultiIndex(vec![3]))[0], -2.0, epsilon = 1e-12);
        assert_relative_eq!(t.taylor.coeff(&MultiIndex(vec![5]))[0], 12.0, epsilon = 1e-12);
        assert_relative_eq!(t.taylor.coeff(&MultiIndex(vec![1]))[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn inversion_rejects_large_perturbations() {
        let r = rep_1d(&[(1, 1.5)], 4, 1.0);
        let a_c = DMatrix::<f64>::from_element(1, 1, 1.0);
        match invert_center_map(&r, &a_c, 1e-10, 50) {
            Err(Error::NotAContraction { .. }) => {}
            other => panic!("expected NotAContraction, got {other:?}"),
        }
    }

    #[test]
    fn zero_perturbation_inverts_to_zero() {
        let r = rep_1d(&[], 4, 1.0);
        let a_c = DMatrix::<f64>::from_element(1, 1, 1.0);
        let t = invert_center_map(&r, &a_c, 1e-14, 10).unwrap();
        assert!(t.taylor.coeffs.is_empty());
    }

    #[test]
    fn faa_di_bruno_collapses_on_identity_inner() {
        let f1 = rep_1d(&[(2, 1.0), (3, -0.5)], 6, 1.0);
        let id = SmoothMapRep::from_polynomial(TaylorRep::identity(1, 6), 1.0);
        let x = dvector![0.3];
        for m in 1..=3 {
            let viafdb = faa_di_bruno(&f1, &id, m, &x).unwrap();
            let direct = f1.taylor.d_tensor(m, &x);
            assert_relative_eq!(
                viafdb.entry(&vec![0u32; m])[0],
                direct.entry(&vec![0u32; m])[0],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn second_derivative_of_square_composition() {
        // f1 = y^2, f2 = x + x^3: D^2(f1.f2)(0) = 2
        let f1 = rep_1d(&[(2, 1.0)], 6, 2.0);
        let f2 = rep_1d(&[(1, 1.0), (3, 1.0)], 6, 1.0);
        let d2 = faa_di_bruno(&f1, &f2, 2, &dvector![0.0]).unwrap();
        assert_relative_eq!(d2.entry(&[0, 0])[0], 2.0);
    }

    #[test]
    fn partition_remainder_vanishes_at_order_two_and_identity_inner() {
        let f1 = rep_1d(&[(3, 1.0)], 6, 2.0);
        let f2 = rep_1d(&[(1, 1.0), (2, 1.0)], 6, 1.0);
        let p2 = partition_remainder(&f1, &f2, 2, &dvector![0.1]).unwrap();
        assert_eq!(p2.entry(&[0, 0])[0], 0.0);
        let id = SmoothMapRep::from_polynomial(TaylorRep::identity(1, 6), 1.0);
        let p3 = partition_remainder(&f1, &id, 3, &dvector![0.1]).unwrap();
        assert_eq!(p3.entry(&[0, 0, 0])[0], 0.0);
    }

    #[test]
    fn partition_remainder_matches_hand_expansion() {
        // f1 = y^3, f2 = x + x^2 at x = 0: P_3 picks exactly the
        // two-block partitions: 3 * D^2 f1 (Df2, D^2 f2).
        let f1 = rep_1d(&[(3, 1.0)], 9, 4.0);
        let f2 = rep_1d(&[(1, 1.0), (2, 1.0)], 9, 1.5);
        let x = dvector![0.0];
        let p3 = partition_remainder(&f1, &f2, 3, &x).unwrap();
        let full = faa_di_bruno(&f1, &f2, 3, &x).unwrap();
        let y = f2.eval(&x);
        let df1 = f1.taylor.d_tensor(1, &y).to_matrix()[(0, 0)];
        let d3f2 = f2.taylor.d_tensor(3, &x).entry(&[0, 0, 0])[0];
        let d3f1 = f1.taylor.d_tensor(3, &y).entry(&[0, 0, 0])[0];
        let df2 = f2.taylor.d_tensor(1, &x).to_matrix()[(0, 0)];
        let extremal = df1 * d3f2 + d3f1 * df2.powi(3);
        assert_relative_eq!(p3.entry(&[0, 0, 0])[0], full.entry(&[0, 0, 0])[0] - extremal, epsilon = 1e-12);
        // hand value: 3 * (6y) * (Df2 * D^2f2) at y=0 is 0; take x = 0.2 instead
        let x = dvector![0.2];
        let p3 = partition_remainder(&f1, &f2, 3, &x).unwrap();
        let y = f2.eval(&x)[0];
        let hand = 3.0 * 6.0 * y * (1.0 + 2.0 * 0.2) * 2.0;
        assert_relative_eq!(p3.entry(&[0, 0, 0])[0], hand, epsilon = 1e-10);
    }

    #[test]
    fn set_partition_counts_are_bell_numbers() {
        assert_eq!(set_partitions(1).len(), 1);
        assert_eq!(set_partitions(2).len(), 2);
        assert_eq!(set_partitions(3).len(), 5);
        assert_eq!(set_partitions(4).len(), 15);
    }

    #[test]
    fn inverse_tensor_matches_reversion_series() {
        // A_c = 1, r = 2x^3: T = x - 2x^3 + 12x^5 - ...; D^2 T from the
        // recursion must match differentiating the reverted series.
        let r = rep_1d(&[(3, 2.0)], 9, 0.3);
        let a_c = DMatrix::<f64>::from_element(1, 1, 1.0);
        let t = invert_center_map(&r, &a_c, 1e-13, 200).unwrap();
        let x = dvector![0.1];
        let d2_rec = inverse_derivative_tensor(&r, &t, &a_c, 2, &x).unwrap();
        let d2_tab = t.taylor.d_tensor(2, &x);
        assert_relative_eq!(
            d2_rec.entry(&[0, 0])[0],
            d2_tab.entry(&[0, 0])[0],
            epsilon = 1e-6
        );
    }

    #[test]
    fn composition_associativity_on_tables() {
        let f = rep_1d(&[(2, 0.7), (3, -0.2)], 8, 2.0);
        let g = rep_1d(&[(1, 1.0), (2, 0.3)], 8, 2.0);
        let h = rep_1d(&[(1, 0.5), (3, 0.1)], 8, 2.0);
        let left = compose(&compose(&f, &g, 8).unwrap(), &h, 8).unwrap();
        let right = compose(&f, &compose(&g, &h, 8).unwrap(), 8).unwrap();
        for (a, v) in &left.taylor.coeffs {
            assert_relative_eq!(v[0], right.taylor.coeff(a)[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn majorant_route_dominates_sampled_route() {
        let f = rep_1d(&[(2, 2.0), (4, -16.0)], 6, 0.25);
        let bound = cn_norm(&f, 0).unwrap();
        assert_eq!(bound.provenance, NormProvenance::CoefficientBound);
        let sampled = cn_norm_sampled(&f, 0).unwrap();
        assert!(bound.value >= sampled.value);
    }
}
