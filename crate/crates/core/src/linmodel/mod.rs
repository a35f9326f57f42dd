//! Problem definition: the split linear part, the localized nonlinearity,
//! the chosen center nonlinearity, and the norms feeding the constants
//! ledger.

pub mod cutoff;
pub mod splitting;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::funcspace::grid::BoxDomain;
use crate::funcspace::taylor::TaylorRep;
use crate::funcspace::tensor::SymTensor;
use crate::funcspace::{ball_samples, NormEstimate, NormProvenance, SmoothMapRep};
use crate::real::{conv, Real};
use cutoff::CutoffFunction;
use splitting::{SpaceSplitting, SplitLinearMap};

/// Numerical knobs shared by the whole pipeline.
#[derive(Clone, Debug)]
pub struct ProblemConfig<T: Real> {
    pub degree_cap: u32,
    pub grid_resolution: usize,
    pub stencil_order: usize,
    /// Half-width of the computational box in center coordinates; defaults
    /// to the cutoff outer radius.
    pub grid_halfwidth: Option<T>,
    /// Relative tolerance for the Taylor/grid cross check.
    pub cross_check_tol: T,
    pub sample_seed: u64,
    pub norm_samples: usize,
}

impl<T: Real> Default for ProblemConfig<T> {
    fn default() -> Self {
        ProblemConfig {
            degree_cap: 8,
            grid_resolution: 241,
            stencil_order: 4,
            grid_halfwidth: None,
            cross_check_tol: conv(1e-6),
            sample_seed: 0,
            norm_samples: 2048,
        }
    }
}

/// A localized instance ready for the solver.
#[derive(Clone, Debug)]
pub struct ProblemInstance<T: Real> {
    pub splitting: SpaceSplitting<T>,
    pub linear: SplitLinearMap<T>,
    /// Localized ambient nonlinearity in block coordinates.
    pub g: SmoothMapRep<T>,
    /// Chosen center nonlinearity.
    pub k_c: SmoothMapRep<T>,
    pub cutoff: CutoffFunction<T>,
    pub order_n: usize,
    pub config: ProblemConfig<T>,
    /// Estimated sup |Dg| in the max-block operator norm.
    pub l_g: NormEstimate<T>,
    /// Estimated sup |Dk_c|.
    pub l_c: NormEstimate<T>,
    /// Estimated max(sup |D^2 g|, sup |D^2 k_c|).
    pub curvature: NormEstimate<T>,
}

/// Multiply a raw nonlinearity by the bump so it is globally bounded with
/// finite derivative bounds.
pub fn localize<T: Real>(g_raw: TaylorRep<T>, cutoff: CutoffFunction<T>) -> SmoothMapRep<T> {
    SmoothMapRep::localized(g_raw, cutoff)
}

impl<T: Real> ProblemInstance<T> {
    pub fn new(
        splitting: SpaceSplitting<T>,
        linear: SplitLinearMap<T>,
        g_raw: TaylorRep<T>,
        k_c: SmoothMapRep<T>,
        cutoff: CutoffFunction<T>,
        order_n: usize,
        config: ProblemConfig<T>,
    ) -> Result<Self> {
        let d = splitting.ambient_dim();
        if g_raw.domain_dim != d || g_raw.codomain_dim != d {
            return Err(Error::InvalidNonlinearity(format!(
                "nonlinearity must map the ambient space to itself (dim {d})"
            )));
        }
        if !g_raw.vanishes_to_second_order() {
            return Err(Error::InvalidNonlinearity(
                "nonlinearity must vanish to second order at the origin".into(),
            ));
        }
        if k_c.domain_dim() != splitting.dim_c || k_c.codomain_dim() != splitting.dim_c {
            return Err(Error::InvalidNonlinearity(
                "center nonlinearity must map the center block to itself".into(),
            ));
        }
        if !k_c.taylor.vanishes_to_second_order() {
            return Err(Error::InvalidNonlinearity(
                "center nonlinearity must vanish to second order at the origin".into(),
            ));
        }
        let g = localize(g_raw, cutoff.clone());
        quadratic_decay_probe(&g)?;

        let mut instance = ProblemInstance {
            splitting,
            linear,
            g,
            k_c,
            cutoff,
            order_n,
            config,
            l_g: NormEstimate {
                value: T::zero(),
                provenance: NormProvenance::Sampled,
            },
            l_c: NormEstimate {
                value: T::zero(),
                provenance: NormProvenance::Sampled,
            },
            curvature: NormEstimate {
                value: T::zero(),
                provenance: NormProvenance::Sampled,
            },
        };
        instance.refresh_norms();
        Ok(instance)
    }

    fn refresh_norms(&mut self) {
        let blocks = self.blocks();
        let pts = ball_samples(
            self.ambient_dim(),
            self.cutoff.outer_radius,
            self.config.norm_samples,
            self.config.sample_seed ^ 0x676e6f72,
        );
        let l_g = block_map_norm(&self.g, 1, &blocks, &blocks, &pts, self.config.sample_seed);
        let d2_g = block_map_norm(&self.g, 2, &blocks, &blocks, &pts, self.config.sample_seed);
        let kc_radius = self.k_c.domain_radius;
        let kc_pts = ball_samples(
            self.splitting.dim_c,
            kc_radius,
            self.config.norm_samples / 2,
            self.config.sample_seed ^ 0x6b635f,
        );
        let kc_block = vec![0..self.splitting.dim_c];
        let l_c = block_map_norm(&self.k_c, 1, &kc_block, &kc_block, &kc_pts, self.config.sample_seed);
        let d2_kc = block_map_norm(&self.k_c, 2, &kc_block, &kc_block, &kc_pts, self.config.sample_seed);
        self.l_g = NormEstimate {
            value: l_g,
            provenance: NormProvenance::Sampled,
        };
        self.l_c = NormEstimate {
            value: l_c,
            provenance: NormProvenance::Sampled,
        };
        self.curvature = NormEstimate {
            value: d2_g.max(d2_kc),
            provenance: NormProvenance::Sampled,
        };
    }

    pub fn ambient_dim(&self) -> usize {
        self.splitting.ambient_dim()
    }

    pub fn dim_c(&self) -> usize {
        self.splitting.dim_c
    }

    /// Component ranges (center, unstable, stable) in block coordinates.
    pub fn blocks(&self) -> Vec<Range<usize>> {
        let (c, u, s) = self.splitting.ranges();
        vec![c, u, s]
    }

    /// One block row of the nonlinearity, still carrying the bump factor.
    pub fn g_block(&self, range: Range<usize>) -> SmoothMapRep<T> {
        SmoothMapRep {
            taylor: self.g.taylor.rows(range.start, range.len()),
            grid: None,
            cutoff: self.g.cutoff.clone(),
            domain_radius: self.g.domain_radius,
        }
    }

    pub fn grid_halfwidth(&self) -> T {
        self.config
            .grid_halfwidth
            .unwrap_or(self.cutoff.outer_radius)
    }

    pub fn grid_domain(&self) -> BoxDomain<T> {
        BoxDomain::centered(self.grid_halfwidth(), self.dim_c())
    }

    /// Derive the constants ledger from the measured norms.
    pub fn ledger(&self) -> crate::constants::ConstantsLedger<T> {
        crate::constants::derive_ledger(
            self.linear.norms,
            self.l_g.value,
            self.l_c.value,
            self.curvature.value,
            self.order_n,
        )
    }

    /// Domain-rescaled instance `x -> s^{-1} F(s x)`: first derivatives and
    /// the ledger are unchanged, curvature shrinks by `s`, radii grow by
    /// `1/s`.
    pub fn scaled(&self, s: T) -> Result<Self> {
        let g_raw = self.g.taylor.scale_domain(s);
        let cutoff = self.cutoff.scale_radii(s);
        let k_c = SmoothMapRep {
            taylor: self.k_c.taylor.scale_domain(s),
            grid: None,
            cutoff: self.k_c.cutoff.as_ref().map(|c| c.scale_radii(s)),
            domain_radius: self.k_c.domain_radius / s,
        };
        let mut config = self.config.clone();
        config.grid_halfwidth = Some(self.grid_halfwidth() / s);
        ProblemInstance::new(
            self.splitting.clone(),
            self.linear.clone(),
            g_raw,
            k_c,
            cutoff,
            self.order_n,
            config,
        )
    }
}

fn quadratic_decay_probe<T: Real>(g: &SmoothMapRep<T>) -> Result<()> {
    // |g(x)| / |x|^2 must stay bounded along a geometric ray toward 0
    let dim = g.domain_dim();
    let mut worst = T::zero();
    for axis in 0..dim {
        let mut r = g.domain_radius;
        for _ in 0..20 {
            let mut x = DVector::zeros(dim);
            x[axis] = r;
            let ratio = g.eval(&x).norm() / (r * r);
            worst = worst.max(ratio);
            r *= conv(0.5);
        }
    }
    if !worst.is_finite() {
        return Err(Error::InvalidNonlinearity(
            "quadratic decay probe diverged near the origin".into(),
        ));
    }
    Ok(())
}

/// Euclidean norm per block, max across blocks.
pub fn block_vector_norm<T: Real>(v: &DVector<T>, blocks: &[Range<usize>]) -> T {
    blocks
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| v.rows(r.start, r.len()).norm())
        .fold(T::zero(), |a, b| a.max(b))
}

/// Operator norm of a derivative tensor acting between block-decomposed
/// spaces: arguments range over the product of per-block unit balls, the
/// output is measured blockwise with max across blocks. Exact vertex
/// enumeration for one-dimensional blocks, sampled otherwise.
pub fn block_tensor_norm<T: Real>(
    t: &SymTensor<T>,
    in_blocks: &[Range<usize>],
    out_blocks: &[Range<usize>],
    seed: u64,
) -> T {
    let in_blocks: Vec<Range<usize>> = in_blocks.iter().filter(|r| !r.is_empty()).cloned().collect();
    if t.order == 0 {
        return block_vector_norm(&t.entry(&[]), out_blocks);
    }
    let all_scalar = in_blocks.iter().all(|r| r.len() == 1);
    let vertex_count = in_blocks.len() * t.order;
    if all_scalar && vertex_count <= 14 {
        // multilinear in each scalar slot: the sup is attained at a sign
        // vertex of the product ball
        let mut best = T::zero();
        let free: Vec<usize> = in_blocks.iter().map(|r| r.start).collect();
        for mask in 0..(1u64 << vertex_count) {
            let args: Vec<DVector<T>> = (0..t.order)
                .map(|slot| {
                    let mut v = DVector::zeros(t.dim);
                    for (bi, &axis) in free.iter().enumerate() {
                        let bit = slot * in_blocks.len() + bi;
                        v[axis] = if mask & (1 << bit) != 0 {
                            T::one()
                        } else {
                            -T::one()
                        };
                    }
                    v
                })
                .collect();
            let refs: Vec<&DVector<T>> = args.iter().collect();
            let val = block_vector_norm(&t.apply(&refs), out_blocks);
            best = best.max(val);
        }
        return best;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x74656e73);
    let mut best = T::zero();
    for _ in 0..256 {
        let args: Vec<DVector<T>> = (0..t.order)
            .map(|_| {
                let mut v = DVector::zeros(t.dim);
                for r in &in_blocks {
                    let mut part = DVector::<T>::from_fn(r.len(), |_, _| conv(rng.gen_range(-1.0..1.0)));
                    let n = part.norm();
                    if n > T::zero() {
                        part /= n;
                    }
                    for (k, i) in r.clone().enumerate() {
                        v[i] = part[k];
                    }
                }
                v
            })
            .collect();
        let refs: Vec<&DVector<T>> = args.iter().collect();
        let val = block_vector_norm(&t.apply(&refs), out_blocks);
        best = best.max(val);
    }
    best
}

/// Sampled sup over the given points of the block operator norm of the
/// order-th derivative.
pub fn block_map_norm<T: Real>(
    f: &SmoothMapRep<T>,
    order: usize,
    in_blocks: &[Range<usize>],
    out_blocks: &[Range<usize>],
    points: &[DVector<T>],
    seed: u64,
) -> T {
    let mut worst = T::zero();
    for x in points {
        let t = f.d_tensor(order, x);
        worst = worst.max(block_tensor_norm(&t, in_blocks, out_blocks, seed));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::multiindex::MultiIndex;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn map_a_raw(mu: f64) -> TaylorRep<f64> {
        // (mu * x * y, mu * x^2) on center x, stable y
        let mut g = TaylorRep::zero(2, 2, 8);
        g.set(MultiIndex(vec![1, 1]), dvector![mu, 0.0]);
        g.set(MultiIndex(vec![2, 0]), dvector![0.0, mu]);
        g
    }

    fn map_a_instance() -> ProblemInstance<f64> {
        let a = nalgebra::DMatrix::from_diagonal(&dvector![1.0, 0.5]);
        let (sp, lin) = splitting::build_splitting(&a, 1e-6).unwrap();
        let cut = CutoffFunction::quintic(0.25, 0.75);
        let k_c = SmoothMapRep::zero_map(1, 1, 8, 0.75);
        ProblemInstance::new(sp, lin, map_a_raw(0.05), k_c, cut, 3, ProblemConfig::default())
            .unwrap()
    }

    #[test]
    fn localized_norms_are_small_and_bounded() {
        let p = map_a_instance();
        // sampled sup |Dg| ~ 0.046 for these radii
        assert!(p.l_g.value > 0.03 && p.l_g.value < 0.06, "l_g = {}", p.l_g.value);
        // the product-rule closed-form bound dominates the sample
        let bound = crate::funcspace::cn_norm_bound(&p.g, 1).unwrap();
        assert!(bound.value >= p.l_g.value);
        let d2_bound = crate::funcspace::cn_norm_bound(&p.g, 2).unwrap();
        assert!(d2_bound.value >= p.curvature.value);
    }

    #[test]
    fn linear_nonlinearity_is_rejected() {
        let a = nalgebra::DMatrix::from_diagonal(&dvector![1.0, 0.5]);
        let (sp, lin) = splitting::build_splitting(&a, 1e-6).unwrap();
        let mut g = TaylorRep::zero(2, 2, 8);
        g.set(MultiIndex(vec![1, 0]), dvector![0.1, 0.0]);
        let k_c = SmoothMapRep::zero_map(1, 1, 8, 0.75);
        let out = ProblemInstance::new(
            sp,
            lin,
            g,
            k_c,
            CutoffFunction::quintic(0.25, 0.75),
            2,
            ProblemConfig::default(),
        );
        match out {
            Err(Error::InvalidNonlinearity(_)) => {}
            other => panic!("expected InvalidNonlinearity, got {other:?}"),
        }
    }

    #[test]
    fn zero_nonlinearity_localizes_to_zero() {
        let g = localize(TaylorRep::zero(2, 2, 6), CutoffFunction::quintic(1.0, 2.0));
        assert_relative_eq!(g.eval(&dvector![0.5, 0.5]).norm(), 0.0);
        assert_eq!(crate::funcspace::cn_norm_bound(&g, 1).unwrap().value, 0.0);
    }

    #[test]
    fn block_norm_is_max_of_block_norms() {
        let blocks = vec![0..1, 1..2];
        let v = dvector![3.0, -4.0];
        assert_relative_eq!(block_vector_norm(&v, &blocks), 4.0);
    }

    #[test]
    fn scaling_preserves_first_derivative_norm() {
        let p = map_a_instance();
        let q = p.scaled(0.1).unwrap();
        assert_relative_eq!(q.l_g.value, p.l_g.value, max_relative = 0.05);
        // curvature shrinks by the scale factor
        assert_relative_eq!(q.curvature.value, 0.1 * p.curvature.value, max_relative = 0.05);
        assert_relative_eq!(q.cutoff.outer_radius, 7.5);
    }
}
