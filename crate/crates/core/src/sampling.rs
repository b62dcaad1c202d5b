//! Small numeric helpers: compensated summation and exact discrete sampling.

use rand::Rng;

/// Neumaier compensated sum; keeps long reductions accurate to a few ulps so
/// normalization contracts hold on multi-million-cell lattices.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if num_traits::Float::abs(sum) >= num_traits::Float::abs(v) {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Draw an index from an unnormalized nonnegative weight table by inverse
/// CDF. Returns the last positively weighted index if roundoff pushes the
/// draw past the total. Panics on an all-zero table.
pub fn sample_discrete(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total = kahan_sum(weights.iter().copied());
    assert!(total > 0.0, "sample_discrete needs a positive total weight");
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0f64;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}
