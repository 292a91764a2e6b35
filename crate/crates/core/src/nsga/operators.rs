//! Real-coded variation: simulated binary crossover and bounded polynomial mutation.

use rand::Rng;

use crate::rng::Rng64;
use crate::space::{ParamKind, ParameterSpace};

/// Keeps integer genes strictly below `high + 1` so that flooring stays in range.
pub const INTEGER_GENE_MARGIN: f64 = 1e-3;

/// Box of the genome. Integer parameters become continuous genes on
/// `[low, high + 1 - margin]` and are decoded by flooring.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneBounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    integer: Vec<bool>,
}

impl GeneBounds {
    pub fn from_space(space: &ParameterSpace) -> Self {
        let mut low = Vec::new();
        let mut high = Vec::new();
        let mut integer = Vec::new();
        for p in space.params() {
            low.push(p.low);
            let is_int = p.kind == ParamKind::Integer;
            high.push(if is_int { p.high + 1.0 - INTEGER_GENE_MARGIN } else { p.high });
            integer.push(is_int);
        }
        GeneBounds { low, high, integer }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn contains(&self, g: &[f64]) -> bool {
        g.len() == self.dim() && g.iter().enumerate().all(|(i, v)| (self.low[i]..=self.high[i]).contains(v))
    }

    /// Genome to a point of the parameter space.
    pub fn decode(&self, genome: &[f64]) -> Vec<f64> {
        genome
            .iter()
            .enumerate()
            .map(|(i, &v)| if self.integer[i] { v.floor() } else { v })
            .collect()
    }

    fn clip(&self, i: usize, v: f64) -> f64 {
        v.clamp(self.low[i], self.high[i])
    }
}

/// Spread factor of simulated binary crossover for a uniform draw `u`.
fn sbx_beta(u: f64, eta: f64) -> f64 {
    if u <= 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0))
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
    }
}

/// Unclipped children of one gene pair; they average to the parents' mean.
pub fn sbx_gene(p1: f64, p2: f64, u: f64, eta: f64) -> (f64, f64) {
    let beta = sbx_beta(u, eta);
    let mean = 0.5 * (p1 + p2);
    let half = 0.5 * beta * (p2 - p1);
    (mean - half, mean + half)
}

/// Probability that a gene of a mating pair takes part in the crossover.
pub const SBX_GENE_PROB: f64 = 0.5;

/// Simulated binary crossover, clipped to the bounds.
///
/// Each gene is recombined with probability [`SBX_GENE_PROB`], and the two
/// offspring values of a recombined gene go to either child with equal
/// probability. Untouched genes are copied. Either way the children's gene
/// values sum to the parents' before clipping.
pub fn sbx_crossover(p1: &[f64], p2: &[f64], eta: f64, bounds: &GeneBounds, rng: &mut Rng64) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    for i in 0..p1.len() {
        if rng.random::<f64>() >= SBX_GENE_PROB {
            continue;
        }
        let (mut a, mut b) = sbx_gene(p1[i], p2[i], rng.random::<f64>(), eta);
        if rng.random::<bool>() {
            std::mem::swap(&mut a, &mut b);
        }
        c1[i] = bounds.clip(i, a);
        c2[i] = bounds.clip(i, b);
    }
    (c1, c2)
}

/// Bounded polynomial mutation: each gene mutates with probability `p_m`.
/// The perturbation shrinks towards a near bound, so a gene sitting on a
/// bound can only move inward.
pub fn polynomial_mutation(x: &mut [f64], eta: f64, p_m: f64, bounds: &GeneBounds, rng: &mut Rng64) {
    for (i, xi) in x.iter_mut().enumerate() {
        if rng.random::<f64>() >= p_m {
            continue;
        }
        let (lo, hi) = (bounds.low[i], bounds.high[i]);
        let width = hi - lo;
        if width <= 0.0 {
            continue;
        }
        let d1 = (*xi - lo) / width;
        let d2 = (hi - *xi) / width;
        let u: f64 = rng.random();
        let pow = 1.0 / (eta + 1.0);
        let dq = if u < 0.5 {
            let v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
            v.powf(pow) - 1.0
        } else {
            let v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
            1.0 - v.powf(pow)
        };
        *xi = bounds.clip(i, *xi + dq * width);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn bounds() -> GeneBounds {
        GeneBounds::from_space(&ParameterSpace::floating_zone())
    }

    fn mid(b: &GeneBounds) -> Vec<f64> {
        (0..b.dim()).map(|i| 0.5 * (b.low[i] + b.high[i])).collect()
    }

    #[test]
    fn integer_gene_decodes_to_levels() {
        let b = bounds();
        assert_eq!(b.low[2], 2.0);
        assert!((b.high[2] - 5.999).abs() < 1e-12);
        let mut g = mid(&b);
        for (v, want) in [(2.0, 2.0), (2.999, 2.0), (3.0, 3.0), (5.999, 5.0)] {
            g[2] = v;
            assert_eq!(b.decode(&g)[2], want);
        }
        assert_eq!(b.decode(&g)[0], g[0]);
    }

    #[test]
    fn identical_parents_are_a_fixed_point() {
        let b = bounds();
        let p = mid(&b);
        let (c1, c2) = sbx_crossover(&p, &p, 15.0, &b, &mut rng::seeded(1));
        assert_eq!(c1, p);
        assert_eq!(c2, p);
    }

    #[test]
    fn children_preserve_the_sum() {
        let mut r = rng::seeded(2);
        for _ in 0..1000 {
            let (a, b) = sbx_gene(0.2, 0.8, r.random(), 15.0);
            assert!((a + b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn crossover_preserves_gene_sums_and_mixes_genes() {
        let b = bounds();
        let mut r = rng::seeded(7);
        let p1: Vec<f64> = b.low.iter().zip(&b.high).map(|(l, h)| l + 0.3 * (h - l)).collect();
        let p2: Vec<f64> = b.low.iter().zip(&b.high).map(|(l, h)| l + 0.6 * (h - l)).collect();
        let (mut copied, mut total) = (0, 0);
        for _ in 0..2000 {
            let (c1, c2) = sbx_crossover(&p1, &p2, 15.0, &b, &mut r);
            for i in 0..b.dim() {
                assert!((c1[i] + c2[i] - p1[i] - p2[i]).abs() <= 1e-9 * (1.0 + p1[i].abs()));
                copied += usize::from(c1[i] == p1[i]);
                total += 1;
            }
        }
        let frac = copied as f64 / total as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn crossover_stays_in_bounds() {
        let b = bounds();
        let mut r = rng::seeded(3);
        for _ in 0..100_000 / b.dim() {
            let p1: Vec<f64> = (0..b.dim()).map(|i| r.random_range(b.low[i]..=b.high[i])).collect();
            let p2: Vec<f64> = (0..b.dim()).map(|i| r.random_range(b.low[i]..=b.high[i])).collect();
            let (c1, c2) = sbx_crossover(&p1, &p2, 15.0, &b, &mut r);
            assert!(b.contains(&c1) && b.contains(&c2));
        }
    }

    #[test]
    fn zero_rate_leaves_genome_alone() {
        let b = bounds();
        let g = mid(&b);
        let mut m = g.clone();
        polynomial_mutation(&mut m, 20.0, 0.0, &b, &mut rng::seeded(4));
        assert_eq!(m, g);
    }

    #[test]
    fn genes_on_a_bound_move_inward() {
        let b = bounds();
        let mut r = rng::seeded(5);
        for _ in 0..2000 {
            let mut lo = b.low.clone();
            polynomial_mutation(&mut lo, 20.0, 1.0, &b, &mut r);
            assert!(lo.iter().zip(&b.low).all(|(v, l)| v >= l));
            let mut hi = b.high.clone();
            polynomial_mutation(&mut hi, 20.0, 1.0, &b, &mut r);
            assert!(hi.iter().zip(&b.high).all(|(v, h)| v <= h));
        }
    }

    #[test]
    fn mutation_frequency() {
        // Monte Carlo estimate of the per-gene mutation rate.
        let b = bounds();
        let mut r = rng::seeded(6);
        let base = mid(&b);
        let draws = 100_000 / b.dim() + 1;
        let mut changed = 0usize;
        for _ in 0..draws {
            let mut g = base.clone();
            polynomial_mutation(&mut g, 20.0, 0.05, &b, &mut r);
            changed += g.iter().zip(&base).filter(|(a, b)| a != b).count();
        }
        let rate = changed as f64 / (draws * b.dim()) as f64;
        assert!((rate - 0.05).abs() < 0.01, "{rate}");
    }

    proptest! {
        #[test]
        fn mutation_stays_in_bounds(seed in 0u64..1000, p in 0.0f64..1.0) {
            let b = bounds();
            let mut r = rng::seeded(seed);
            let mut g: Vec<f64> = (0..b.dim()).map(|i| r.random_range(b.low[i]..=b.high[i])).collect();
            polynomial_mutation(&mut g, 20.0, p, &b, &mut r);
            prop_assert!(b.contains(&g));
            let x = b.decode(&g);
            prop_assert!([2.0, 3.0, 4.0, 5.0].contains(&x[2]));
        }
    }
}
