//! Matched scheme: posterior matching per user. Every round each user sends
//! the one-bit comparison of its bid against the median of its mirrored
//! posterior, the CA Bayes-updates all posteriors, picks the highest median
//! as the winner and offers that median minus a margin. The tracking variant
//! re-spreads collapsed posteriors so the medians can follow drifting bids.

use crate::channel::{keyed_unit, BscChannel, Role};
use crate::drift::{drift_step, update_track};
use crate::grid::prior_uniform;
use crate::posterior::{user_bit, PosteriorState};

use super::unmatched::argmax;
use super::{
    draw_marginal_bids, winner_matches_max, RoundRecord, SchemeConfig, SchemeId, TrialOpts,
    TrialResult,
};

pub(super) fn run(cfg: &SchemeConfig, trial_seed: u64, opts: TrialOpts) -> TrialResult {
    let tracking = cfg.scheme == SchemeId::MatchedTracking;
    let track_cfg = cfg.tracking;
    let margin = if tracking { track_cfg.expect("validated config").mu } else { cfg.h };
    let grid = cfg.bid_grid();
    let n = cfg.users;

    let mut bids: Vec<_> = (0..n)
        .map(|i| draw_marginal_bids(trial_seed, i, &grid, 1)[0])
        .collect();
    let channels: Vec<_> = (0..n)
        .map(|i| BscChannel::new(cfg.p, trial_seed, i as u64, 0))
        .collect();
    let mut ca: Vec<_> = (0..n)
        .map(|_| PosteriorState::new(prior_uniform(grid)))
        .collect();
    // User-side replicas of the CA posteriors, advanced from the feedback.
    let mut mirrors = ca.clone();

    let mut records = Vec::with_capacity(cfg.rounds);
    let mut usage_logs = vec![Vec::new(); n];

    for t in 1..=cfg.rounds {
        if t > 1 {
            if let Some(drift) = &cfg.drift {
                for (i, bid) in bids.iter_mut().enumerate() {
                    let u_gate = keyed_unit(trial_seed, i as u64, Role::DriftGate, 0, t as u64);
                    let u_innov =
                        keyed_unit(trial_seed, i as u64, Role::DriftInnovation, 0, t as u64);
                    *bid = drift_step(*bid, drift, &grid, u_gate, u_innov);
                }
            }
        }

        // Uplink: one comparison bit per user, then the CA updates.
        for i in 0..n {
            let x = user_bit(bids[i], mirrors[i].median());
            let y = channels[i].transmit(x, t as u64);
            apply_update(&mut ca[i], y, cfg.p, tracking, &track_cfg);
            // Feedback (y, accept decision) lets the user replay the update.
            let fed = crate::channel::feedback(&[y]);
            apply_update(&mut mirrors[i], fed[0], cfg.p, tracking, &track_cfg);
        }
        if opts.check_mirrors {
            for i in 0..n {
                assert_eq!(mirrors[i], ca[i], "mirror diverged for user {i} in round {t}");
            }
        }

        let medians: Vec<f64> = ca.iter().map(|s| s.median().value).collect();
        let winner = argmax(&medians);
        let ask = medians[winner] - margin;
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

fn apply_update(
    state: &mut PosteriorState,
    y: u8,
    p: f64,
    tracking: bool,
    track_cfg: &Option<crate::drift::TrackingConfig>,
) {
    let result = if tracking {
        update_track(state, y, p, &track_cfg.expect("validated config"))
    } else {
        state.update(y, p)
    };
    result.expect("received bits are consistent with the posterior support");
}

#[cfg(test)]
mod tests {
    use super::super::{run_trial, settle, TrialOpts};
    use super::*;
    use crate::drift::{DriftConfig, TrackingConfig};

    fn cfg(users: usize, p: f64, delta: f64, rounds: usize) -> SchemeConfig {
        SchemeConfig {
            scheme: SchemeId::Matched,
            users,
            units: 1,
            p,
            delta,
            h: 1e-3,
            drift: None,
            tracking: None,
            rounds,
        }
    }

    /// Run with bids pinned to the given values by searching seeds is too
    /// fragile; instead drive the engine directly through a tiny copy that
    /// fixes the bids. The engine itself is exercised via run_trial in the
    /// other tests.
    fn run_with_bids(c: &SchemeConfig, bid_values: &[f64]) -> TrialResult {
        // Rebuild the run loop with fixed bids: uses the same public pieces.
        let grid = c.bid_grid();
        let bids: Vec<_> = bid_values.iter().map(|&b| grid.nearest(b)).collect();
        let mut ca: Vec<_> = bids.iter().map(|_| PosteriorState::new(prior_uniform(grid))).collect();
        let mut records = Vec::new();
        let mut usage_logs = vec![Vec::new(); bids.len()];
        for t in 1..=c.rounds {
            for (i, state) in ca.iter_mut().enumerate() {
                let x = user_bit(bids[i], state.median());
                state.update(x, c.p).unwrap();
            }
            let medians: Vec<f64> = ca.iter().map(|s| s.median().value).collect();
            let winner = argmax(&medians);
            let ask = medians[winner] - c.h;
            let accept = bids[winner].value >= ask;
            let mut allocation = vec![0; bids.len()];
            allocation[winner] = 1;
            let mut asks = vec![0.0; bids.len()];
            asks[winner] = ask;
            let mut accepted = vec![false; bids.len()];
            accepted[winner] = accept;
            if accept {
                usage_logs[winner].push((t, ask));
            }
            let (max_bid, winner_has_max_bid) = winner_matches_max(&bids, &allocation);
            records.push(RoundRecord {
                round: t,
                allocation,
                asks,
                accepted,
                revenue: if accept { ask } else { 0.0 },
                payoffs: vec![0.0; bids.len()],
                max_bid,
                winner_has_max_bid,
            });
        }
        TrialResult {
            config: c.clone(),
            records,
            bids: bids.iter().map(|&b| vec![b]).collect(),
            usage_logs,
            uplink_bits: 0,
            downlink_bits: 0,
            ideal: None,
        }
    }

    #[test]
    fn noiseless_two_users_highest_bidder_wins() {
        // bids (0.2, 0.9), p = 0: user 1 wins from round 2 on and the ask
        // bisects toward 0.9 - h.
        let c = cfg(2, 0.0, 0.01, 12);
        let trial = run_with_bids(&c, &[0.2, 0.9]);
        for rec in trial.records.iter().skip(1) {
            assert_eq!(rec.winner(), Some(1), "round {}", rec.round);
            assert!(rec.winner_has_max_bid);
        }
        let last = trial.records.last().unwrap();
        assert!((last.asks[1] - (0.9 - c.h)).abs() < 0.02, "ask {}", last.asks[1]);
        assert!(last.accepted[1]);
    }

    #[test]
    fn ask_approaches_bid_minus_margin() {
        let c = cfg(1, 0.0, 1e-4, 20);
        let trial = run_with_bids(&c, &[0.6137]);
        let last = trial.records.last().unwrap();
        assert!((last.asks[0] - (0.6137 - c.h)).abs() < 1e-3);
        // once the median settles within h of the bid the winner accepts
        assert!(last.accepted[0]);
    }

    #[test]
    fn mirrors_stay_in_sync_with_noise() {
        let mut c = cfg(3, 0.1, 0.01, 40);
        let trial = run_trial(&c, 11, TrialOpts { check_mirrors: true });
        assert_eq!(trial.records.len(), 40);
        // and with tracking + drift
        c.scheme = SchemeId::MatchedTracking;
        c.tracking = Some(TrackingConfig { lambda: 0.005, mu: 0.005, theta: 0.3 });
        c.drift = Some(DriftConfig { q: 0.1, epsilon: 0.05 });
        c.validate().unwrap();
        let trial = run_trial(&c, 11, TrialOpts { check_mirrors: true });
        assert_eq!(trial.records.len(), 40);
    }

    #[test]
    fn drift_moves_bids_and_logs_settle() {
        let mut c = cfg(2, 0.05, 0.001, 80);
        c.drift = Some(DriftConfig { q: 0.5, epsilon: 0.1 });
        let trial = run_trial(&c, 7, TrialOpts::default());
        settle(&trial).unwrap();
        // final bids should have moved away from the initial draw
        let initial: Vec<_> = (0..2)
            .map(|i| draw_marginal_bids(7, i, &c.bid_grid(), 1)[0].value)
            .collect();
        let moved = trial
            .bids
            .iter()
            .zip(&initial)
            .any(|(b, &b0)| (b[0].value - b0).abs() > 1e-9);
        assert!(moved);
    }

    #[test]
    fn tracking_recovers_after_a_jump() {
        // A single user whose bid jumps at round 60; with tracking the ask
        // re-converges near the new bid, without it the posterior stays
        // concentrated on the old one. Small noise keeps the posterior's
        // support full so the tracking replacement can keep firing.
        let grid = PriceGrid::unit(1e-3).unwrap();
        let tc = TrackingConfig { lambda: 0.02, mu: 0.02, theta: 0.3 };
        let p = 0.05;
        let jump_round = 60;
        let total = 260;
        let run_one = |track: bool| -> f64 {
            let ch = BscChannel::new(p, 99, 0, 0);
            let mut state = PosteriorState::new(prior_uniform(grid));
            let mut bid = grid.nearest(0.3);
            for t in 1..=total {
                if t == jump_round {
                    bid = grid.nearest(0.8);
                }
                let x = user_bit(bid, state.median());
                let y = ch.transmit(x, t as u64);
                if track {
                    update_track(&mut state, y, p, &tc).unwrap();
                } else {
                    state.update(y, p).unwrap();
                }
            }
            state.median().value
        };
        let tracked = run_one(true);
        let frozen = run_one(false);
        assert!((tracked - 0.8).abs() < 0.05, "tracked median {tracked}");
        assert!((frozen - 0.8).abs() > 0.2, "frozen median {frozen}");
    }

    use crate::grid::PriceGrid;

    #[test]
    fn bit_budget_matches_scheme() {
        let c = cfg(3, 0.05, 0.01, 10);
        let trial = run_trial(&c, 1, TrialOpts::default());
        assert_eq!(trial.uplink_bits, 3 * 10);
        assert_eq!(trial.downlink_bits, 3 * 10 * 2);
    }
}
