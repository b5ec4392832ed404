//! Round-by-round state machines for the auction schemes and the settlement
//! ledger. One trial is a single-threaded lockstep of the CA and `N` user
//! agents; trials are independent.

mod allocate;
mod matched;
mod strategic;
mod unmatched;

pub use allocate::vickrey_allocate;

use thiserror::Error;

use crate::drift::{DriftConfig, TrackingConfig};
use crate::grid::{GridPrice, PriceGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeId {
    Unmatched,
    Matched,
    Truthful,
    Vickrey,
    MatchedTracking,
}

impl SchemeId {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeId::Unmatched => "unmatched",
            SchemeId::Matched => "matched",
            SchemeId::Truthful => "truthful",
            SchemeId::Vickrey => "vickrey",
            SchemeId::MatchedTracking => "matched_tracking",
        }
    }

    pub fn parse(s: &str) -> Option<SchemeId> {
        match s {
            "unmatched" => Some(SchemeId::Unmatched),
            "matched" => Some(SchemeId::Matched),
            "truthful" => Some(SchemeId::Truthful),
            "vickrey" => Some(SchemeId::Vickrey),
            "matched_tracking" => Some(SchemeId::MatchedTracking),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SchemeConfigError {
    #[error("users must be at least 1, got {0}")]
    NoUsers(usize),
    #[error("units must be at least 1, got {0}")]
    NoUnits(usize),
    #[error("p must be in [0, 0.5), got {0}")]
    BadCrossover(f64),
    #[error("h must be positive and small, got {0}")]
    BadMargin(f64),
    #[error("rounds must be at least 1")]
    NoRounds,
    #[error("invalid grid: {0}")]
    BadGrid(#[from] crate::grid::GridError),
    #[error("{0}")]
    BadDrift(String),
    #[error("{0}")]
    BadTracking(String),
    #[error("scheme {0} requires tracking parameters")]
    MissingTracking(&'static str),
    #[error("units > 1 is only supported by the vickrey scheme")]
    UnitsWithoutVickrey,
    #[error("bid drift is only supported by the matched schemes")]
    DriftUnsupported,
}

/// Everything that determines one experiment arm; the trial seed is supplied
/// separately by the harness.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: SchemeId,
    /// Number of bidders N.
    pub users: usize,
    /// Spectrum units K per round (1 unless vickrey).
    pub units: usize,
    /// BSC crossover probability.
    pub p: f64,
    /// Price grid step.
    pub delta: f64,
    /// Ask-price margin below the top posterior median (matched scheme).
    pub h: f64,
    /// Bid random-walk parameters; `None` freezes the bids.
    pub drift: Option<DriftConfig>,
    /// Re-spreading parameters; required for `MatchedTracking`.
    pub tracking: Option<TrackingConfig>,
    /// Horizon T in update-and-allocate rounds.
    pub rounds: usize,
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<(), SchemeConfigError> {
        if self.users == 0 {
            return Err(SchemeConfigError::NoUsers(self.users));
        }
        if self.units == 0 {
            return Err(SchemeConfigError::NoUnits(self.units));
        }
        if self.units > 1 && self.scheme != SchemeId::Vickrey {
            return Err(SchemeConfigError::UnitsWithoutVickrey);
        }
        if !(0.0..0.5).contains(&self.p) {
            return Err(SchemeConfigError::BadCrossover(self.p));
        }
        if matches!(self.scheme, SchemeId::Matched | SchemeId::MatchedTracking)
            && !(self.h > 0.0 && self.h < 1.0)
        {
            return Err(SchemeConfigError::BadMargin(self.h));
        }
        if self.rounds == 0 {
            return Err(SchemeConfigError::NoRounds);
        }
        PriceGrid::unit(self.delta)?;
        if let Some(d) = &self.drift {
            d.validate().map_err(SchemeConfigError::BadDrift)?;
            if !matches!(self.scheme, SchemeId::Matched | SchemeId::MatchedTracking) {
                return Err(SchemeConfigError::DriftUnsupported);
            }
        }
        if let Some(t) = &self.tracking {
            t.validate().map_err(SchemeConfigError::BadTracking)?;
        }
        if self.scheme == SchemeId::MatchedTracking && self.tracking.is_none() {
            return Err(SchemeConfigError::MissingTracking("matched_tracking"));
        }
        Ok(())
    }

    pub fn bid_grid(&self) -> PriceGrid {
        PriceGrid::unit(self.delta).expect("validated config")
    }

    /// Feedback bits per user per round for this scheme.
    pub fn downlink_bits_per_user(&self) -> u64 {
        match self.scheme {
            SchemeId::Unmatched | SchemeId::Matched | SchemeId::MatchedTracking => 2,
            SchemeId::Truthful => 3,
            SchemeId::Vickrey => 2 * self.units as u64 + 1,
        }
    }

    /// Uplink bits per user per round.
    pub fn uplink_bits_per_user(&self) -> u64 {
        match self.scheme {
            SchemeId::Vickrey => self.units as u64,
            _ => 1,
        }
    }
}

/// Per-round outcome as recorded by the CA.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round number.
    pub round: usize,
    /// Units awarded to each user this round.
    pub allocation: Vec<usize>,
    /// Price charged to each user this round (0 when not charged).
    pub asks: Vec<f64>,
    /// Whether each awarded user accepted spectrum (always true for
    /// strategic schemes, which do not allow rejection).
    pub accepted: Vec<bool>,
    /// Sum of collected ask prices this round.
    pub revenue: f64,
    /// Per-user payoff this round (value obtained minus price paid).
    pub payoffs: Vec<f64>,
    /// Largest current true bid (top marginal for vickrey).
    pub max_bid: f64,
    /// Whether the allocation went to the currently highest bidder(s).
    pub winner_has_max_bid: bool,
}

impl RoundRecord {
    /// The single-unit winner, if any unit was awarded.
    pub fn winner(&self) -> Option<usize> {
        self.allocation.iter().position(|&k| k > 0)
    }
}

/// Ideal outcome computed from the true bids (the no-quantization,
/// no-noise benchmark the schemes should converge to).
#[derive(Debug, Clone, PartialEq)]
pub struct IdealOutcome {
    pub allocation: Vec<usize>,
    pub payments: Vec<f64>,
    pub revenue: f64,
    pub mean_payoff: f64,
}

/// Full record of one seeded trial.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub config: SchemeConfig,
    pub records: Vec<RoundRecord>,
    /// Initial bid profile, one non-increasing vector per user.
    pub bids: Vec<Vec<GridPrice>>,
    /// User-side log of accepted rounds: (round, amount to be paid).
    pub usage_logs: Vec<Vec<(usize, f64)>>,
    /// Total bits sent over the noisy uplink across all users and rounds.
    pub uplink_bits: u64,
    /// Total noiseless feedback bits across all users and rounds.
    pub downlink_bits: u64,
    /// Vickrey/second-price benchmark on the true (initial) bids; absent for
    /// drifting-bid runs where no fixed benchmark exists.
    pub ideal: Option<IdealOutcome>,
}

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("ledger mismatch for user {user}: usage says {user_side}, CA says {ca_side}")]
    Mismatch { user: usize, user_side: f64, ca_side: f64 },
    #[error("total revenue {recorded} does not match settled payments {settled}")]
    TotalMismatch { recorded: f64, settled: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettlementReport {
    pub per_user: Vec<f64>,
    pub total: f64,
}

/// End-of-horizon settlement: reconstruct what each user owes from the
/// user-side usage logs (non-strategic schemes) or the CA-side winner and ask
/// logs (strategic schemes), and check it against the recorded revenue.
pub fn settle(trial: &TrialResult) -> Result<SettlementReport, LedgerError> {
    let n = trial.config.users;
    let strategic = matches!(trial.config.scheme, SchemeId::Truthful | SchemeId::Vickrey);
    let mut per_user = vec![0.0; n];
    if strategic {
        // Winners cannot reject: every charged ask in the CA log is owed.
        for rec in &trial.records {
            for (owed, (&units, &ask)) in
                per_user.iter_mut().zip(rec.allocation.iter().zip(&rec.asks))
            {
                if units > 0 {
                    *owed += ask;
                }
            }
        }
    } else {
        for (i, log) in trial.usage_logs.iter().enumerate() {
            per_user[i] = log.iter().map(|(_, amount)| amount).sum();
        }
        // Cross-check each user's log against the CA's winner records.
        for (i, user_total) in per_user.iter().enumerate() {
            let ca_total: f64 = trial
                .records
                .iter()
                .filter(|r| r.allocation[i] > 0 && r.accepted[i])
                .map(|r| r.asks[i])
                .sum();
            if (user_total - ca_total).abs() > 1e-9 {
                return Err(LedgerError::Mismatch {
                    user: i,
                    user_side: *user_total,
                    ca_side: ca_total,
                });
            }
        }
    }
    let settled: f64 = per_user.iter().sum();
    let recorded: f64 = trial.records.iter().map(|r| r.revenue).sum();
    if (settled - recorded).abs() > 1e-6 * recorded.abs().max(1.0) {
        return Err(LedgerError::TotalMismatch { recorded, settled });
    }
    Ok(SettlementReport { total: settled, per_user })
}

/// Debug switches for a trial run.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrialOpts {
    /// Assert user mirror state equals CA state after every round.
    pub check_mirrors: bool,
}

/// Run one seeded trial of the configured scheme.
pub fn run_trial(cfg: &SchemeConfig, trial_seed: u64, opts: TrialOpts) -> TrialResult {
    match cfg.scheme {
        SchemeId::Unmatched => unmatched::run(cfg, trial_seed),
        SchemeId::Matched | SchemeId::MatchedTracking => matched::run(cfg, trial_seed, opts),
        SchemeId::Truthful | SchemeId::Vickrey => strategic::run(cfg, trial_seed, opts),
    }
}

pub(crate) fn draw_marginal_bids(
    trial_seed: u64,
    user: usize,
    grid: &PriceGrid,
    units: usize,
) -> Vec<GridPrice> {
    let mut indices: Vec<usize> = (0..units)
        .map(|k| {
            crate::channel::keyed_index(
                trial_seed,
                user as u64,
                crate::channel::Role::BidInit,
                k as u64,
                0,
                grid.n_points(),
            )
        })
        .collect();
    indices.sort_unstable_by(|a, b| b.cmp(a));
    indices.into_iter().map(|i| grid.point(i)).collect()
}

/// Highest current bid and whether the given allocation covers the top
/// bidder(s). For single-unit schemes this is simply "did the highest bidder
/// win"; ties count as a match when the winner's bid equals the maximum.
pub(crate) fn winner_matches_max(bids: &[GridPrice], allocation: &[usize]) -> (f64, bool) {
    let max_bid = bids.iter().map(|b| b.value).fold(f64::NEG_INFINITY, f64::max);
    let matched = allocation
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .any(|(i, _)| bids[i].value == max_bid);
    (max_bid, matched)
}
