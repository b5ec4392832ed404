//! Multi-unit allocation and pricing shared by the strategic schemes: the
//! same routine ranks posterior medians during a run and true bids for the
//! ideal benchmark.

/// Allocate `units` spectrum units given one marginal-value vector per user,
/// and price them by the generalized second-price rule: user `i` pays the sum
/// of the `k_i` highest losing marginals submitted by other users.
///
/// Ties are broken by (value desc, user asc, marginal index asc). Returns
/// `(units per user, payment per user)`.
pub fn vickrey_allocate(profiles: &[Vec<f64>], units: usize) -> (Vec<usize>, Vec<f64>) {
    let n = profiles.len();
    let mut candidates: Vec<(f64, usize, usize)> = profiles
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(k, &v)| (v, i, k)))
        .collect();
    assert!(units <= candidates.len(), "cannot allocate {units} units among {} marginals", candidates.len());
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("marginal values must not be NaN")
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let (winners, losers) = candidates.split_at(units);
    let mut allocation = vec![0usize; n];
    for &(_, i, _) in winners {
        allocation[i] += 1;
    }
    let payments = allocation
        .iter()
        .enumerate()
        .map(|(i, &k_i)| {
            losers
                .iter()
                .filter(|&&(_, j, _)| j != i)
                .take(k_i)
                .map(|&(v, _, _)| v)
                .sum()
        })
        .collect();
    (allocation, payments)
}
