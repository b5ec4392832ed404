//! Unmatched scheme: each user streams the binary expansion of its bid, one
//! digit per round, and the CA accumulates noisy digits into a running
//! estimate. The winner each round is the user with the highest estimate and
//! is offered its own estimate as the ask price.

use crate::channel::BscChannel;

use super::{draw_marginal_bids, winner_matches_max, RoundRecord, SchemeConfig, TrialResult};

pub(super) fn run(cfg: &SchemeConfig, trial_seed: u64) -> TrialResult {
    let grid = cfg.bid_grid();
    let n = cfg.users;
    // Bid index over denominator D: value = index / D with D = n_points - 1.
    let denom = (grid.n_points() - 1) as u64;
    let bids: Vec<_> = (0..n)
        .map(|i| draw_marginal_bids(trial_seed, i, &grid, 1)[0])
        .collect();
    let channels: Vec<_> = (0..n)
        .map(|i| BscChannel::new(cfg.p, trial_seed, i as u64, 0))
        .collect();

    // Digit streams: exact base-2 expansion of index/D by integer doubling.
    let mut numerators: Vec<u64> = bids.iter().map(|b| b.index as u64).collect();
    let mut estimates = vec![0.0f64; n];
    let mut records = Vec::with_capacity(cfg.rounds);
    let mut usage_logs = vec![Vec::new(); n];

    for t in 1..=cfg.rounds {
        let weight = 2f64.powi(-(t as i32));
        for i in 0..n {
            numerators[i] *= 2;
            let digit = u8::from(numerators[i] >= denom);
            numerators[i] -= denom * u64::from(digit);
            let y = channels[i].transmit(digit, t as u64);
            estimates[i] += f64::from(y) * weight;
        }
        let winner = argmax(&estimates);
        let ask = estimates[winner];
        let accept = bids[winner].value >= ask;
        let mut allocation = vec![0usize; n];
        allocation[winner] = 1;
        let mut asks = vec![0.0; n];
        asks[winner] = ask;
        let mut accepted = vec![false; n];
        accepted[winner] = accept;
        let mut payoffs = vec![0.0; n];
        if accept {
            payoffs[winner] = bids[winner].value - ask;
            usage_logs[winner].push((t, ask));
        }
        let (max_bid, winner_has_max_bid) = winner_matches_max(&bids, &allocation);
        records.push(RoundRecord {
            round: t,
            allocation,
            asks,
            accepted,
            revenue: if accept { ask } else { 0.0 },
            payoffs,
            max_bid,
            winner_has_max_bid,
        });
    }

    let rounds = cfg.rounds as u64;
    TrialResult {
        config: cfg.clone(),
        records,
        bids: bids.iter().map(|&b| vec![b]).collect(),
        usage_logs,
        uplink_bits: rounds * n as u64 * cfg.uplink_bits_per_user(),
        downlink_bits: rounds * n as u64 * cfg.downlink_bits_per_user(),
        ideal: None,
    }
}

/// Index of the maximum, lowest index on ties.
pub(super) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
