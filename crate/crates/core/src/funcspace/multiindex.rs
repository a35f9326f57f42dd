//! Multi-indices for multivariate polynomial tables.

/// Exponent vector of a monomial `x^alpha = prod x_i^{alpha_i}`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut v = vec![0; dim];
        v[axis] = 1;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// `alpha!` as f64; fits comfortably for the degrees used here.
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&k| (1..=k as u64).product::<u64>() as f64)
            .product()
    }
}

/// All multi-indices of the given dimension with degree <= cap, in graded
/// lexicographic order. Deterministic ordering keeps table iteration stable.
pub fn indices_up_to(dim: usize, cap: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for d in 0..=cap {
        push_of_degree(dim, d, &mut Vec::new(), &mut out);
    }
    out
}

/// Multi-indices of exactly the given degree.
pub fn indices_of_degree(dim: usize, degree: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    push_of_degree(dim, degree, &mut Vec::new(), &mut out);
    out
}

fn push_of_degree(dim: usize, degree: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if prefix.len() == dim - 1 {
        prefix.push(degree);
        out.push(MultiIndex(prefix.clone()));
        prefix.pop();
        return;
    }
    for k in (0..=degree).rev() {
        prefix.push(k);
        push_of_degree(dim, degree - k, prefix, out);
        prefix.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_stars_and_bars() {
        // #(|alpha| = d in dim n) = C(d + n - 1, n - 1)
        assert_eq!(indices_of_degree(2, 3).len(), 4);
        assert_eq!(indices_of_degree(3, 4).len(), 15);
        assert_eq!(indices_up_to(2, 4).len(), 15);
    }

    #[test]
    fn factorials() {
        assert_eq!(MultiIndex(vec![3, 2]).factorial(), 12.0);
        assert_eq!(MultiIndex(vec![0, 0, 0]).factorial(), 1.0);
    }
}
