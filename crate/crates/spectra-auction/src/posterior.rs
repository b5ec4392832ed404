//! Posterior-matching machinery: the one-bit Bayes update of a bid posterior,
//! the user's bit rule, an enumeration oracle for testing, and the
//! message-point codec used for the frame-error-rate comparison.
//!
//! The update is computed on PMF cells and re-accumulated, which is the same
//! algebra as the four closed-form CDF cases: a received bit `y` multiplies
//! the mass of every cell below the current median by `P{y | x = 0}` and of
//! every cell at or above it by `P{y | x = 1}`, followed by normalization.

use crate::channel::BscChannel;
use crate::grid::{GridCdf, GridPrice, InconsistentObservation};

/// Bid posterior plus the median bookkeeping shared by CA and user mirrors.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    cdf: GridCdf,
    median: GridPrice,
    m_prime: GridPrice,
}

impl PosteriorState {
    pub fn new(cdf: GridCdf) -> Self {
        let median = cdf.median();
        let m_prime = cdf.grid().point(median.index.saturating_sub(1));
        PosteriorState { cdf, median, m_prime }
    }

    pub fn cdf(&self) -> &GridCdf {
        &self.cdf
    }

    /// Median of the current posterior; the split point of the next update.
    pub fn median(&self) -> GridPrice {
        self.median
    }

    /// The highest grid point strictly below the median, clamped at 0.
    pub fn m_prime(&self) -> GridPrice {
        self.m_prime
    }

    /// Apply the received bit `y` through the BSC`p` posterior update.
    pub fn update(&mut self, y: u8, p: f64) -> Result<(), InconsistentObservation> {
        let (w_lo, w_hi) = bit_likelihoods(y, p);
        self.cdf.reweight_split(self.median.index, w_lo, w_hi)?;
        self.median = self.cdf.median();
        self.m_prime = self.cdf.grid().point(self.median.index.saturating_sub(1));
        Ok(())
    }

    /// Apply a received bit whose transmit rule was a *strict* comparison
    /// against the median value (`x = 1` iff the tracked quantity exceeds the
    /// median). The median cell straddles that threshold, so it gets the
    /// average of the two likelihood weights; see
    /// [`GridCdf::reweight_split_center`]. Unlike [`PosteriorState::update`],
    /// this keeps the bit informative even when the posterior has collapsed
    /// onto a single cell, so the median can move off a point mass in either
    /// direction.
    pub fn update_centered(&mut self, y: u8, p: f64) -> Result<(), InconsistentObservation> {
        let (w_lo, w_hi) = bit_likelihoods(y, p);
        self.cdf.reweight_split_center(self.median.index, w_lo, w_hi)?;
        self.median = self.cdf.median();
        self.m_prime = self.cdf.grid().point(self.median.index.saturating_sub(1));
        Ok(())
    }

    /// Swap in a replacement distribution (drift tracking re-spread).
    pub fn replace(&mut self, cdf: GridCdf) {
        *self = PosteriorState::new(cdf);
    }
}

/// `(P{y | x = 0}, P{y | x = 1})` for a BSC with crossover `p`.
fn bit_likelihoods(y: u8, p: f64) -> (f64, f64) {
    if y == 1 {
        (p, 1.0 - p)
    } else {
        (1.0 - p, p)
    }
}

/// The transmitted bit: 1 iff the bid is at least as large as the median.
pub fn user_bit(bid: GridPrice, med: GridPrice) -> u8 {
    u8::from(bid.index >= med.index)
}

/// Enumeration oracle for the posterior update: direct Bayes over the grid,
/// multiplying the prior mass of each point by the likelihood of the whole
/// observation history. Kept independent of [`PosteriorState::update`].
pub fn brute_force_posterior(
    prior: &GridCdf,
    history: &[(GridPrice, u8)],
    p: f64,
) -> Result<GridCdf, InconsistentObservation> {
    let mut masses = prior.to_pmf();
    for (med, y) in history {
        let (w_lo, w_hi) = bit_likelihoods(*y, p);
        for (b, m) in masses.iter_mut().enumerate() {
            let x = u8::from(b >= med.index);
            *m *= if x == 1 { w_hi } else { w_lo };
        }
    }
    let total: f64 = masses.iter().sum();
    if !(total > 1e-300) {
        return Err(InconsistentObservation);
    }
    Ok(GridCdf::from_cell_masses(*prior.grid(), &masses))
}

/// Outcome of one feedback-coded transmission of a `K`-level message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorsteinOutcome {
    pub theta_hat: usize,
    pub frame_error: bool,
}

/// How much finer the codec's posterior grid is than the message alphabet.
/// Sub-level resolution keeps the discrete median's end-game quantization
/// error well inside the half-level decision region; a power of two keeps
/// the noiseless run an exact binary search for power-of-two alphabets.
const CODEC_GRID_REFINEMENT: usize = 32;

/// Transmit one of `levels` equally likely messages over `rounds` uses of the
/// channel with noiseless feedback, decoding to the posterior median. The
/// code rate is `log2(levels) / rounds`; a frame error is a decoded point
/// farther than half a level width from the true message point.
///
/// The codec reuses the auction machinery unchanged — the same discrete
/// median, bit rule and one-bit Bayes update — on a grid
/// [`CODEC_GRID_REFINEMENT`] times finer than the message alphabet, with the
/// message point of level k at the cell center (k + 0.5) / levels.
pub fn horstein_decode(
    levels: usize,
    rounds: u64,
    p: f64,
    true_theta: usize,
    channel: &BscChannel,
) -> HorsteinOutcome {
    assert!(levels >= 2);
    assert!(true_theta < levels);
    let half_level = 0.5 / levels as f64;
    let theta_value = (true_theta as f64 + 0.5) / levels as f64;
    let grid = crate::grid::PriceGrid::unit(1.0 / (levels * CODEC_GRID_REFINEMENT) as f64)
        .expect("codec grid is valid");
    let theta_point = grid.nearest(theta_value);
    let mut state = PosteriorState::new(GridCdf::uniform(grid));
    for round in 0..rounds {
        let x = user_bit(theta_point, state.median());
        let y = channel.transmit(x, round);
        // With p = 0 a flipped observation is impossible, so the update can
        // never be inconsistent; ignore the Ok.
        let _ = state.update(y, p);
    }
    let decoded = state.median().value;
    let theta_hat = ((decoded * levels as f64) as usize).min(levels - 1);
    HorsteinOutcome { theta_hat, frame_error: (theta_value - decoded).abs() > half_level }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{prior_uniform, PriceGrid};
    use proptest::prelude::*;

    fn unit_grid(delta: f64) -> PriceGrid {
        PriceGrid::unit(delta).unwrap()
    }

    #[test]
    fn user_bit_examples() {
        let g = unit_grid(1e-5);
        assert_eq!(user_bit(g.nearest(0.75), g.nearest(0.5)), 1);
        assert_eq!(user_bit(g.nearest(0.5), g.nearest(0.5)), 1);
        assert_eq!(user_bit(g.nearest(0.49999), g.nearest(0.5)), 0);
    }

    #[test]
    fn update_matches_closed_form_case1() {
        // Uniform prior, m = 0.5, p = 0.1, y = 1: F_t(0.25) per the b < m case
        // is p F(0.25) / (1 - p - (1 - 2p) F(m')) which is close to 0.05.
        let g = unit_grid(1e-5);
        let mut state = PosteriorState::new(prior_uniform(g));
        assert_eq!(state.median().value, 0.5);
        state.update(1, 0.1).unwrap();
        let b = g.nearest(0.25).index;
        assert!((state.cdf().cum_at(b) - 0.05).abs() < 1e-3);

        let oracle =
            brute_force_posterior(&prior_uniform(g), &[(g.nearest(0.5), 1)], 0.1).unwrap();
        assert!((state.cdf().cum_at(b) - oracle.cum_at(b)).abs() < 1e-12);
    }

    #[test]
    fn update_noiseless_restricts_support() {
        // p = 0, y = 1 conditions the uniform prior to [m, 1].
        let g = unit_grid(1e-5);
        let mut state = PosteriorState::new(prior_uniform(g));
        state.update(1, 0.0).unwrap();
        let b = g.nearest(0.75).index;
        assert!((state.cdf().cum_at(b) - 0.5).abs() < 1e-4);
        assert_eq!(state.cdf().cum_at(g.nearest(0.4).index), 0.0);
    }

    #[test]
    fn update_uninformative_channel_is_identity() {
        let g = unit_grid(0.01);
        let mut state = PosteriorState::new(prior_uniform(g));
        let before = state.cdf().clone();
        state.update(1, 0.5).unwrap();
        assert_eq!(state.cdf(), &before);
        state.update(0, 0.5).unwrap();
        assert_eq!(state.cdf(), &before);
    }

    #[test]
    fn m_prime_clamps_at_zero() {
        let g = unit_grid(0.5);
        let mut masses = vec![0.0; 3];
        masses[0] = 1.0;
        let state = PosteriorState::new(GridCdf::from_cell_masses(g, &masses));
        assert_eq!(state.median().index, 0);
        assert_eq!(state.m_prime().index, 0);
    }

    #[test]
    fn brute_force_empty_history_is_prior() {
        let g = unit_grid(0.25);
        let prior = prior_uniform(g);
        assert_eq!(brute_force_posterior(&prior, &[], 0.1).unwrap(), prior);
    }

    #[test]
    fn brute_force_single_observation_matches_update() {
        let g = unit_grid(0.25);
        let prior = prior_uniform(g);
        let mut state = PosteriorState::new(prior.clone());
        let med = state.median();
        state.update(1, 0.1).unwrap();
        let oracle = brute_force_posterior(&prior, &[(med, 1)], 0.1).unwrap();
        let (a, b) = (state.cdf().to_cum(), oracle.to_cum());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_force_noiseless_interval_restriction() {
        // Two consistent p = 0 observations confine the posterior to an
        // interval containing the bid 0.75.
        let g = unit_grid(0.25);
        let prior = prior_uniform(g);
        let bid = g.nearest(0.75);
        let mut state = PosteriorState::new(prior.clone());
        let mut history = Vec::new();
        for _ in 0..2 {
            let med = state.median();
            let x = user_bit(bid, med);
            history.push((med, x));
            state.update(x, 0.0).unwrap();
        }
        let oracle = brute_force_posterior(&prior, &history, 0.0).unwrap();
        assert_eq!(state.cdf(), &oracle);
        assert!(oracle.pmf_at(bid.index) > 0.0);
        assert_eq!(oracle.pmf_at(0), 0.0);
    }

    #[test]
    fn brute_force_impossible_history_errors() {
        let g = unit_grid(0.25);
        let prior = prior_uniform(g);
        let med = g.point(2);
        // p = 0 with contradictory bits around the same median.
        assert!(brute_force_posterior(&prior, &[(med, 1), (med, 1), (g.point(3), 0), (g.point(3), 1)], 0.0).is_err());
    }

    #[test]
    fn noiseless_bisection_converges_to_bid() {
        let g = unit_grid(2f64.powi(-10));
        let bid = g.nearest(0.7313);
        let mut state = PosteriorState::new(prior_uniform(g));
        for t in 1..=10 {
            let x = user_bit(bid, state.median());
            state.update(x, 0.0).unwrap();
            let err = (state.median().value - bid.value).abs();
            assert!(
                err <= 2f64.powi(-t) + g.delta(),
                "round {t}: median {} vs bid {}",
                state.median().value,
                bid.value
            );
        }
    }

    #[test]
    fn posterior_mass_at_bid_grows_on_average() {
        // Empirical submartingale check: mean posterior mass of the bid cell
        // is non-decreasing in t (slack 1e-3) over 1000 noisy trials.
        let g = unit_grid(0.01);
        let rounds = 12;
        let trials = 1000u64;
        let p = 0.2;
        let mut mean_mass = vec![0.0; rounds + 1];
        for trial in 0..trials {
            let bid = g.point(crate::channel::keyed_index(
                trial,
                0,
                crate::channel::Role::BidInit,
                0,
                0,
                g.n_points(),
            ));
            let ch = BscChannel::new(p, trial, 0, 0);
            let mut state = PosteriorState::new(prior_uniform(g));
            mean_mass[0] += state.cdf().pmf_at(bid.index);
            for t in 0..rounds {
                let x = user_bit(bid, state.median());
                let y = ch.transmit(x, t as u64);
                state.update(y, p).unwrap();
                mean_mass[t + 1] += state.cdf().pmf_at(bid.index);
            }
        }
        for m in &mut mean_mass {
            *m /= trials as f64;
        }
        for w in mean_mass.windows(2) {
            assert!(w[1] >= w[0] - 1e-3, "mean mass decreased: {mean_mass:?}");
        }
    }

    #[test]
    fn horstein_noiseless_is_binary_search() {
        let ch = BscChannel::new(0.0, 1, 0, 0);
        for theta in 0..8 {
            let out = horstein_decode(8, 3, 0.0, theta, &ch);
            assert!(!out.frame_error, "theta {theta} decoded as {}", out.theta_hat);
            assert_eq!(out.theta_hat, theta);
        }
    }

    #[test]
    fn horstein_small_noisy_sanity() {
        // With generous redundancy the error rate is small.
        let mut errors = 0;
        let trials = 500;
        for trial in 0..trials {
            let ch = BscChannel::new(0.05, trial, 0, 0);
            let theta = crate::channel::keyed_index(
                trial,
                0,
                crate::channel::Role::BidInit,
                0,
                0,
                16,
            );
            if horstein_decode(16, 20, 0.05, theta, &ch).frame_error {
                errors += 1;
            }
        }
        assert!(errors < trials / 10, "errors {errors}/{trials}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn iterated_update_matches_enumeration_oracle(
            n_cells in 2usize..64,
            bid_frac in 0.0f64..1.0,
            p_idx in 0usize..4,
            rounds in 1usize..20,
            noise_seed in any::<u64>(),
        ) {
            let p: f64 = [0.0, 0.05, 0.1, 0.3][p_idx];
            let g = PriceGrid::new(1.0 / n_cells as f64, 1.0).unwrap();
            let bid = g.nearest(bid_frac);
            let ch = BscChannel::new(p.max(0.0), noise_seed, 0, 0);
            let prior = prior_uniform(g);
            let mut state = PosteriorState::new(prior.clone());
            let mut history = Vec::new();
            for t in 0..rounds {
                let med = state.median();
                let x = user_bit(bid, med);
                let y = if p == 0.0 { x } else { ch.transmit(x, t as u64) };
                history.push((med, y));
                state.update(y, p).unwrap();
            }
            let oracle = brute_force_posterior(&prior, &history, p).unwrap();
            let (a, b) = (state.cdf().to_cum(), oracle.to_cum());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
