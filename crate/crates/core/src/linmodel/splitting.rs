//! Invariant splitting of the linear part by eigenvalue modulus, through a
//! real Schur form with block reordering and Sylvester decoupling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::funcspace::op_norm;
use crate::real::{conv, to_f64, Real};

/// Change of coordinates splitting the ambient space into center, unstable
/// and stable blocks.
#[derive(Clone, Debug)]
pub struct SpaceSplitting<T: Real> {
    pub dim_c: usize,
    pub dim_u: usize,
    pub dim_s: usize,
    /// Maps ambient coordinates to block coordinates.
    pub to_block: DMatrix<T>,
    /// Maps block coordinates back to ambient coordinates (columns are the
    /// invariant basis).
    pub from_block: DMatrix<T>,
}

impl<T: Real> SpaceSplitting<T> {
    pub fn ambient_dim(&self) -> usize {
        self.dim_c + self.dim_u + self.dim_s
    }

    pub fn identity(dim_c: usize, dim_u: usize, dim_s: usize) -> Self {
        let d = dim_c + dim_u + dim_s;
        SpaceSplitting {
            dim_c,
            dim_u,
            dim_s,
            to_block: DMatrix::identity(d, d),
            from_block: DMatrix::identity(d, d),
        }
    }

    /// Component ranges in block coordinates.
    pub fn ranges(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>, std::ops::Range<usize>) {
        let c = 0..self.dim_c;
        let u = self.dim_c..self.dim_c + self.dim_u;
        let s = self.dim_c + self.dim_u..self.ambient_dim();
        (c, u, s)
    }

    pub fn inverse_defect(&self) -> T {
        let d = self.ambient_dim();
        let p = &self.to_block * &self.from_block - DMatrix::<T>::identity(d, d);
        p.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
    }
}

/// Operator norms of the diagonal blocks, in the per-block Euclidean norm
/// combined by max across blocks. Empty blocks report zero.
#[derive(Clone, Copy, Debug)]
pub struct OpNorms<T: Real> {
    pub a_c: T,
    pub a_c_inv: T,
    pub a_u: T,
    pub a_u_inv: T,
    pub a_s: T,
    pub ambient: T,
}

/// The block-diagonal linear part together with the inverses the solver
/// needs.
#[derive(Clone, Debug)]
pub struct SplitLinearMap<T: Real> {
    pub a_c: DMatrix<T>,
    pub a_u: DMatrix<T>,
    pub a_s: DMatrix<T>,
    pub a_c_inv: DMatrix<T>,
    pub a_u_inv: DMatrix<T>,
    pub norms: OpNorms<T>,
}

impl<T: Real> SplitLinearMap<T> {
    pub fn from_blocks(a_c: DMatrix<T>, a_u: DMatrix<T>, a_s: DMatrix<T>) -> Result<Self> {
        let a_c_inv = invert_checked(&a_c, "center")?;
        let a_u_inv = invert_checked(&a_u, "unstable")?;
        let norms = OpNorms {
            a_c: op_norm(&a_c),
            a_c_inv: op_norm(&a_c_inv),
            a_u: op_norm(&a_u),
            a_u_inv: op_norm(&a_u_inv),
            a_s: op_norm(&a_s),
            ambient: op_norm(&a_c).max(op_norm(&a_u)).max(op_norm(&a_s)),
        };
        Ok(SplitLinearMap {
            a_c,
            a_u,
            a_s,
            a_c_inv,
            a_u_inv,
            norms,
        })
    }

    /// Spectral-gap inequalities for all derivative orders up to `n`.
    pub fn gap_condition(&self, n: usize) -> std::result::Result<(), String> {
        for k in 1..=n.max(1) {
            let lhs_s = self.norms.a_c_inv.powi(k as i32) * self.norms.a_s;
            if lhs_s >= T::one() {
                return Err(format!(
                    "|Ac^-1|^{k} |As| = {} >= 1",
                    to_f64(lhs_s)
                ));
            }
            let lhs_u = self.norms.a_u_inv * self.norms.a_c.powi(k as i32);
            if lhs_u >= T::one() {
                return Err(format!(
                    "|Au^-1| |Ac|^{k} = {} >= 1",
                    to_f64(lhs_u)
                ));
            }
        }
        Ok(())
    }

    /// Reassemble the ambient matrix in block coordinates.
    pub fn assemble(&self) -> DMatrix<T> {
        let (dc, du, ds) = (self.a_c.nrows(), self.a_u.nrows(), self.a_s.nrows());
        let d = dc + du + ds;
        let mut m = DMatrix::zeros(d, d);
        m.view_mut((0, 0), (dc, dc)).copy_from(&self.a_c);
        m.view_mut((dc, dc), (du, du)).copy_from(&self.a_u);
        m.view_mut((dc + du, dc + du), (ds, ds)).copy_from(&self.a_s);
        m
    }
}

fn invert_checked<T: Real>(m: &DMatrix<T>, block: &'static str) -> Result<DMatrix<T>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > T::zero() {
        to_f64(smax / smin)
    } else {
        f64::INFINITY
    };
    if cond > 1e12 {
        return Err(Error::SingularBlock { block, cond });
    }
    m.clone().try_inverse().ok_or(Error::SingularBlock { block, cond })
}

/// Eigenvalue moduli of a real matrix.
pub fn eigen_moduli<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    if m.nrows() == 0 {
        return vec![];
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re * z.re + z.im * z.im).sqrt())
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Class {
    Center,
    Unstable,
    Stable,
}

fn classify<T: Real>(modulus: T, tol: T) -> Result<Class> {
    let one = T::one();
    let dist = (modulus - one).abs();
    if dist <= tol {
        return Ok(Class::Center);
    }
    // boundary band: too close to the classification edge to trust
    if dist < tol * conv(2.0) {
        return Err(Error::NonCleanSpectrum {
            modulus: to_f64(modulus),
            tol: to_f64(tol),
        });
    }
    Ok(if modulus < one {
        Class::Stable
    } else {
        Class::Unstable
    })
}

/// Solve the small Sylvester equation `A X - X B = C` by vectorization.
fn sylvester<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, c: &DMatrix<T>) -> Option<DMatrix<T>> {
    let (p, q) = (a.nrows(), b.nrows());
    if p == 0 || q == 0 {
        return Some(DMatrix::zeros(p, q));
    }
    let n = p * q;
    let mut k = DMatrix::<T>::zeros(n, n);
    // row-index of vec(X) (column major): x_{i,j} at j*p + i
    for j in 0..q {
        for i in 0..p {
            let row = j * p + i;
            for l in 0..p {
                k[(row, j * p + l)] += a[(i, l)];
            }
            for l in 0..q {
                k[(row, l * p + i)] -= b[(l, j)];
            }
        }
    }
    let rhs = DVector::from_fn(n, |r, _| c[(r % p, r / p)]);
    let lu = k.lu();
    let x = lu.solve(&rhs)?;
    Some(DMatrix::from_fn(p, q, |i, j| x[j * p + i]))
}

/// Quasi-triangular block layout of a real Schur form.
fn schur_blocks<T: Real>(t: &DMatrix<T>) -> Vec<(usize, usize)> {
    let d = t.nrows();
    let scale = op_norm(t).max(T::one());
    let tiny = scale * conv::<T>(1e-12);
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < d {
        if i + 1 < d && t[(i + 1, i)].abs() > tiny {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

fn block_modulus<T: Real>(t: &DMatrix<T>, start: usize, size: usize) -> T {
    let sub = t.view((start, start), (size, size)).into_owned();
    eigen_moduli(&sub)
        .into_iter()
        .fold(T::zero(), |a, b| a.max(b))
}

/// Swap two adjacent diagonal blocks of a quasi-triangular matrix by an
/// orthogonal similarity, accumulating the transform into `q`.
fn swap_adjacent<T: Real>(
    t: &mut DMatrix<T>,
    q: &mut DMatrix<T>,
    start: usize,
    p: usize,
    r: usize,
) -> Result<()> {
    let n = p + r;
    let t11 = t.view((start, start), (p, p)).into_owned();
    let t12 = t.view((start, start + p), (p, r)).into_owned();
    let t22 = t.view((start + p, start + p), (r, r)).into_owned();
    let x = sylvester(&t11, &t22, &(t12.scale(conv(-1.0)))).ok_or_else(|| {
        Error::InfeasibleConstants("coincident spectra while reordering the Schur form".into())
    })?;
    // columns of [X; I] span the T22 invariant subspace; orthonormalize and
    // complete to a full basis
    let mut v = DMatrix::<T>::zeros(n, n);
    v.view_mut((0, 0), (p, r)).copy_from(&x);
    v.view_mut((p, 0), (r, r)).copy_from(&DMatrix::identity(r, r));
    let mut cols: Vec<DVector<T>> = (0..r).map(|j| v.column(j).into_owned()).collect();
    for e in 0..n {
        let mut cand = DVector::zeros(n);
        cand[e] = T::one();
        cols.push(cand);
    }
    let mut basis: Vec<DVector<T>> = Vec::with_capacity(n);
    for mut c in cols {
        for b in &basis {
            let proj = b.dot(&c);
            c.axpy(-proj, b, T::one());
        }
        let norm = c.norm();
        if norm > conv(1e-10) {
            basis.push(c / norm);
        }
        if basis.len() == n {
            break;
        }
    }
    let g = DMatrix::from_columns(&basis);
    // apply the local similarity
    let t_block = t.view((start, start), (n, n)).into_owned();
    let new_block = g.transpose() * t_block * &g;
    t.view_mut((start, start), (n, n)).copy_from(&new_block);
    // rows to the right and columns above
    let d = t.nrows();
    if start + n < d {
        let width = d - (start + n);
        let right = t.view((start, start + n), (n, width)).into_owned();
        t.view_mut((start, start + n), (n, width))
            .copy_from(&(g.transpose() * right));
    }
    if start > 0 {
        let above = t.view((0, start), (start, n)).into_owned();
        t.view_mut((0, start), (start, n)).copy_from(&(above * &g));
    }
    let qpart = q.view((0, start), (d, n)).into_owned();
    q.view_mut((0, start), (d, n)).copy_from(&(qpart * &g));
    Ok(())
}

/// Split the linear part into center/unstable/stable invariant blocks by
/// eigenvalue modulus.
pub fn build_splitting<T: Real>(
    a: &DMatrix<T>,
    unit_circle_tol: T,
) -> Result<(SpaceSplitting<T>, SplitLinearMap<T>)> {
    let d = a.nrows();
    assert_eq!(a.ncols(), d, "square matrix required");
    let schur = a.clone().schur();
    let (mut q, mut t) = schur.unpack();

    // classify blocks, then bubble them into center | unstable | stable order
    let rank = |class: Class| match class {
        Class::Center => 0usize,
        Class::Unstable => 1,
        Class::Stable => 2,
    };
    loop {
        let blocks = schur_blocks(&t);
        let classes: Vec<Class> = blocks
            .iter()
            .map(|&(s0, sz)| classify(block_modulus(&t, s0, sz), unit_circle_tol))
            .collect::<Result<_>>()?;
        let mut swapped = false;
        for i in 0..blocks.len().saturating_sub(1) {
            if rank(classes[i]) > rank(classes[i + 1]) {
                let (s0, p) = blocks[i];
                let (_, r) = blocks[i + 1];
                swap_adjacent(&mut t, &mut q, s0, p, r)?;
                swapped = true;
                break;
            }
        }
        if !swapped {
            break;
        }
    }

    let blocks = schur_blocks(&t);
    let mut dim_c = 0;
    let mut dim_u = 0;
    let mut dim_s = 0;
    for &(s0, sz) in &blocks {
        match classify(block_modulus(&t, s0, sz), unit_circle_tol)? {
            Class::Center => dim_c += sz,
            Class::Unstable => dim_u += sz,
            Class::Stable => dim_s += sz,
        }
    }
    if dim_c == 0 {
        return Err(Error::InvalidNonlinearity(
            "no center directions: every eigenvalue is off the unit circle".into(),
        ));
    }

    // decouple the three groups: first (c) from (u, s), then (u) from (s),
    // with unipotent block-upper similarities
    let mut basis = q.clone(); // from_block so far (orthogonal)
    let mut tt = t.clone();
    let cuts = [(0usize, dim_c, dim_u + dim_s), (dim_c, dim_u, dim_s)];
    for &(off, p, r) in &cuts {
        if p == 0 || r == 0 {
            continue;
        }
        let t1 = tt.view((off, off), (p, p)).into_owned();
        let t2 = tt.view((off + p, off + p), (r, r)).into_owned();
        let t12 = tt.view((off, off + p), (p, r)).into_owned();
        let x = sylvester(&t1, &t2, &(t12.scale(conv(-1.0)))).ok_or_else(|| {
            Error::InfeasibleConstants("coincident spectra while decoupling blocks".into())
        })?;
        // similarity by [[I, -X], [0, I]] zeroes the coupling
        let mut u = DMatrix::identity(d, d);
        u.view_mut((off, off + p), (p, r)).copy_from(&x.scale(conv(-1.0)));
        let mut uinv = DMatrix::identity(d, d);
        uinv.view_mut((off, off + p), (p, r)).copy_from(&x);
        tt = &uinv * &tt * &u;
        basis *= u;
    }

    let to_block = basis.clone().try_inverse().ok_or(Error::SingularBlock {
        block: "basis change",
        cond: f64::INFINITY,
    })?;
    let a_c = tt.view((0, 0), (dim_c, dim_c)).into_owned();
    let a_u = tt.view((dim_c, dim_c), (dim_u, dim_u)).into_owned();
    let a_s = tt
        .view((dim_c + dim_u, dim_c + dim_u), (dim_s, dim_s))
        .into_owned();
    let split = SplitLinearMap::from_blocks(a_c, a_u, a_s)?;
    let splitting = SpaceSplitting {
        dim_c,
        dim_u,
        dim_s,
        to_block,
        from_block: basis,
    };
    Ok((splitting, split))
}

/// Schur-based diagonal rescaling that pushes each block's operator norm
/// toward its spectral radius, then re-checks the gap conditions.
pub fn rescale_norm<T: Real>(
    splitting: &SpaceSplitting<T>,
    linear: &SplitLinearMap<T>,
    n: usize,
    target_slack: T,
) -> Result<(SpaceSplitting<T>, SplitLinearMap<T>)> {
    let rho_c = eigen_moduli(&linear.a_c)
        .into_iter()
        .fold(T::zero(), |a, b| a.max(b));
    if linear.a_c.nrows() > 0 && (rho_c - T::one()).abs() > conv(1e-8) {
        return Err(Error::InfeasibleConstants(format!(
            "center spectral radius {} is not 1",
            to_f64(rho_c)
        )));
    }

    let mut transforms: Vec<DMatrix<T>> = Vec::with_capacity(3);
    let mut new_blocks: Vec<DMatrix<T>> = Vec::with_capacity(3);
    for (block, invert_too) in [(&linear.a_c, true), (&linear.a_u, true), (&linear.a_s, false)] {
        let sz = block.nrows();
        if sz == 0 {
            transforms.push(DMatrix::zeros(0, 0));
            new_blocks.push(DMatrix::zeros(0, 0));
            continue;
        }
        let rho = eigen_moduli(block)
            .into_iter()
            .fold(T::zero(), |a, b| a.max(b));
        let rho_inv = if invert_too {
            eigen_moduli(&block.clone().try_inverse().unwrap())
                .into_iter()
                .fold(T::zero(), |a, b| a.max(b))
        } else {
            T::zero()
        };
        let target = rho * (T::one() + target_slack);
        let target_inv = rho_inv * (T::one() + target_slack);
        let ok = |b: &DMatrix<T>| {
            op_norm(b) <= target
                && (!invert_too
                    || op_norm(&b.clone().try_inverse().unwrap_or_else(|| DMatrix::zeros(sz, sz)))
                        <= target_inv)
        };
        if ok(block) {
            transforms.push(DMatrix::identity(sz, sz));
            new_blocks.push(block.clone());
            continue;
        }
        let (q, t) = block.clone().schur().unpack();
        let mut eta = T::one();
        let mut found = None;
        for _ in 0..50 {
            eta *= conv(0.5);
            let dmat = DMatrix::from_fn(sz, sz, |i, j| {
                if i == j {
                    eta.powi(i as i32)
                } else {
                    T::zero()
                }
            });
            let dinv = DMatrix::from_fn(sz, sz, |i, j| {
                if i == j {
                    T::one() / eta.powi(i as i32)
                } else {
                    T::zero()
                }
            });
            let candidate = &dinv * &t * &dmat;
            if ok(&candidate) {
                found = Some((q.clone() * dmat, candidate));
                break;
            }
        }
        match found {
            Some((transform, candidate)) => {
                transforms.push(transform);
                new_blocks.push(candidate);
            }
            None => {
                return Err(Error::GapNotClosable { order: n, steps: 50 });
            }
        }
    }

    let split = SplitLinearMap::from_blocks(
        new_blocks[0].clone(),
        new_blocks[1].clone(),
        new_blocks[2].clone(),
    )?;
    split
        .gap_condition(n)
        .map_err(|_| Error::GapNotClosable { order: n, steps: 50 })?;

    let d = splitting.ambient_dim();
    let mut big = DMatrix::<T>::zeros(d, d);
    let (dc, du) = (linear.a_c.nrows(), linear.a_u.nrows());
    big.view_mut((0, 0), (dc, dc)).copy_from(&transforms[0]);
    big.view_mut((dc, dc), (du, du)).copy_from(&transforms[1]);
    let ds = linear.a_s.nrows();
    big.view_mut((dc + du, dc + du), (ds, ds)).copy_from(&transforms[2]);
    let from_block = &splitting.from_block * &big;
    let to_block = from_block.clone().try_inverse().ok_or(Error::SingularBlock {
        block: "basis change",
        cond: f64::INFINITY,
    })?;
    Ok((
        SpaceSplitting {
            dim_c: splitting.dim_c,
            dim_u: splitting.dim_u,
            dim_s: splitting.dim_s,
            to_block,
            from_block,
        },
        split,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn diagonal_matrix_splits_by_modulus() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 0.5]));
        let (sp, lin) = build_splitting(&a, 0.1).unwrap();
        assert_eq!((sp.dim_c, sp.dim_u, sp.dim_s), (1, 1, 1));
        assert_relative_eq!(lin.norms.a_s, 0.5, epsilon = 1e-12);
        assert_relative_eq!(lin.norms.a_u_inv, 0.5, epsilon = 1e-12);
        assert!(sp.inverse_defect() <= 1e-10);
    }

    #[test]
    fn identity_is_pure_center() {
        let a = DMatrix::<f64>::identity(2, 2);
        let (sp, lin) = build_splitting(&a, 0.1).unwrap();
        assert_eq!((sp.dim_c, sp.dim_u, sp.dim_s), (2, 0, 0));
        assert_relative_eq!(lin.norms.a_c, 1.0, epsilon = 1e-12);
        assert_eq!(lin.a_u.nrows(), 0);
    }

    #[test]
    fn rotated_spectrum_is_center() {
        // eigenvalues (1 +- i sqrt 3)/2, modulus exactly 1
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 1.0]);
        let moduli = eigen_moduli(&a);
        for m in &moduli {
            assert_relative_eq!(*m, 1.0, epsilon = 1e-12);
        }
        let (sp, lin) = build_splitting(&a, 0.1).unwrap();
        assert_eq!((sp.dim_c, sp.dim_u, sp.dim_s), (2, 0, 0));
        // real rotation-like normal form after rescaling
        let (_, lin2) = rescale_norm(&sp, &lin, 2, 1e-9).unwrap();
        assert_relative_eq!(lin2.norms.a_c, 1.0, epsilon = 1e-7);
        assert_relative_eq!(lin2.norms.a_c_inv, 1.0, epsilon = 1e-7);
    }

    #[test]
    fn mixed_spectrum_reorders_and_reassembles() {
        // B diag(0.5, 2, 1, 0.25) B^-1 with a non-trivial basis
        let b = DMatrix::<f64>::from_row_slice(
            4,
            4,
            &[
                1.0, 0.3, 0.0, 0.2, //
                0.0, 1.0, 0.5, 0.0, //
                0.1, 0.0, 1.0, 0.0, //
                0.0, 0.2, 0.0, 1.0,
            ],
        );
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 2.0, 1.0, 0.25]));
        let a = &b * d * b.clone().try_inverse().unwrap();
        let (sp, lin) = build_splitting(&a, 1e-6).unwrap();
        assert_eq!((sp.dim_c, sp.dim_u, sp.dim_s), (1, 1, 2));
        // reassembling through the basis reproduces A
        let rebuilt = &sp.from_block * lin.assemble() * &sp.to_block;
        let err = (&rebuilt - &a).iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(err < 1e-8, "reassembly error {err}");
        assert_relative_eq!(lin.norms.a_c, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn boundary_band_is_rejected() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.15]));
        match build_splitting(&a, 0.1) {
            Err(Error::NonCleanSpectrum { .. }) => {}
            other => panic!("expected NonCleanSpectrum, got {other:?}"),
        }
    }

    #[test]
    fn jordan_like_stable_block_rescales() {
        let sp = SpaceSplitting::identity(1, 0, 2);
        let a_c = DMatrix::<f64>::from_element(1, 1, 1.0);
        let a_s = DMatrix::from_row_slice(2, 2, &[0.5, 100.0, 0.0, 0.5]);
        let lin = SplitLinearMap::from_blocks(a_c, DMatrix::zeros(0, 0), a_s).unwrap();
        assert!(lin.norms.a_s > 1.0);
        let (sp2, lin2) = rescale_norm(&sp, &lin, 3, 0.02).unwrap();
        assert!(lin2.norms.a_s <= 0.51, "rescaled norm {}", lin2.norms.a_s);
        // the accumulated basis still reproduces the original matrix
        let rebuilt = &sp2.from_block * lin2.assemble() * &sp2.to_block;
        let orig = &sp.from_block * lin.assemble() * &sp.to_block;
        let err = (&rebuilt - &orig).iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(err < 1e-6, "reassembly error {err}");
    }

    #[test]
    fn sylvester_solves_small_systems() {
        let a = DMatrix::<f64>::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let b = DMatrix::from_row_slice(1, 1, &[0.5]);
        let c = DMatrix::from_row_slice(2, 1, &[1.0, -2.0]);
        let x = sylvester(&a, &b, &c).unwrap();
        let res = &a * &x - &x * &b - &c;
        assert!(res.iter().all(|v| v.abs() < 1e-12));
    }
}
