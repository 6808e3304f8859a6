//! Rank order statistics for simulation-based calibration.

use rand::Rng;

/// Number of `samples` strictly below `true_value`; each tied sample counts
/// with probability 1/2 (seeded randomization, since serialized decimals can
/// collide even for continuous models).
pub fn rank_statistic(true_value: f64, samples: &[f64], rng: &mut impl Rng) -> usize {
    let mut rank = 0usize;
    for &s in samples {
        let below = s < true_value || (s == true_value && rng.random::<bool>());
        if below {
            rank += 1;
        }
    }
    rank
}
