//! Seeded Monte-Carlo execution: independent trials in parallel, per-round
//! metric aggregation, efficiency sweeps with common random numbers, and the
//! frame-error-rate benchmark.
//!
//! Determinism: per-trial seeds derive from the master seed and trial index
//! only, and per-trial summaries are collected in trial order before the
//! (sequential) floating-point reduction, so results are bit-identical for
//! any worker count.

use rayon::prelude::*;

use crate::channel::{keyed_index, trial_seed, BscChannel, Role};
use crate::posterior::horstein_decode;
use crate::schemes::{run_trial, SchemeConfig, SchemeConfigError, SchemeId, TrialOpts, TrialResult};

/// Parameter axis of an efficiency sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Q,
    Epsilon,
    Lambda,
    Theta,
    Mu,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::Q => "q",
            SweepParam::Epsilon => "epsilon",
            SweepParam::Lambda => "lambda",
            SweepParam::Theta => "theta",
            SweepParam::Mu => "mu",
        }
    }

    pub fn parse(s: &str) -> Option<SweepParam> {
        match s {
            "q" => Some(SweepParam::Q),
            "epsilon" => Some(SweepParam::Epsilon),
            "lambda" => Some(SweepParam::Lambda),
            "theta" => Some(SweepParam::Theta),
            "mu" => Some(SweepParam::Mu),
            _ => None,
        }
    }

    /// Set this parameter to `value` in the given config.
    pub fn apply(&self, cfg: &mut SchemeConfig, value: f64) {
        match self {
            SweepParam::Q => cfg.drift.as_mut().expect("sweep over q needs drift").q = value,
            SweepParam::Epsilon => {
                cfg.drift.as_mut().expect("sweep over epsilon needs drift").epsilon = value;
            }
            SweepParam::Lambda => {
                cfg.tracking.as_mut().expect("sweep over lambda needs tracking").lambda = value;
            }
            SweepParam::Theta => {
                cfg.tracking.as_mut().expect("sweep over theta needs tracking").theta = value;
            }
            SweepParam::Mu => {
                cfg.tracking.as_mut().expect("sweep over mu needs tracking").mu = value;
            }
        }
    }
}

/// What to execute: a single arm, a paired tracking/no-tracking sweep, or the
/// frame-error benchmark.
#[derive(Debug, Clone, PartialEq)]
pub enum PresetKind {
    Single(SchemeConfig),
    Sweep { base: SchemeConfig, param: SweepParam, values: Vec<f64> },
    Fer { levels: usize, code_rounds: u64, crossovers: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPreset {
    pub name: String,
    pub kind: PresetKind,
    /// Trial count R.
    pub trials: usize,
    pub master_seed: u64,
    /// Convergence tolerance levels delta for the probability curves.
    pub delta_levels: Vec<f64>,
}

impl ExperimentPreset {
    pub fn validate(&self) -> Result<(), SchemeConfigError> {
        assert!(self.trials >= 1, "trial count must be at least 1");
        match &self.kind {
            PresetKind::Single(cfg) => cfg.validate(),
            PresetKind::Sweep { base, param, values } => {
                base.validate()?;
                match param {
                    SweepParam::Q | SweepParam::Epsilon if base.drift.is_none() => {
                        return Err(SchemeConfigError::BadDrift(format!(
                            "sweep over {} requires drift parameters (q, epsilon)",
                            param.as_str()
                        )));
                    }
                    SweepParam::Lambda | SweepParam::Theta | SweepParam::Mu
                        if base.tracking.is_none() =>
                    {
                        return Err(SchemeConfigError::BadTracking(format!(
                            "sweep over {} requires tracking parameters",
                            param.as_str()
                        )));
                    }
                    _ => {}
                }
                for &v in values {
                    let mut probe = base.clone();
                    param.apply(&mut probe, v);
                    probe.validate()?;
                }
                Ok(())
            }
            PresetKind::Fer { levels, code_rounds, crossovers } => {
                assert!(*levels >= 2 && *code_rounds >= 1, "fer needs levels >= 2 and rounds >= 1");
                for &p in crossovers {
                    if !(0.0..0.5).contains(&p) {
                        return Err(SchemeConfigError::BadCrossover(p));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Per-round aggregates over R trials of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub trials: usize,
    pub rounds: Vec<usize>,
    pub mean_revenue: Vec<f64>,
    /// Error-bar convention: 2 sigma-hat / sqrt(R).
    pub stderr_revenue: Vec<f64>,
    pub mean_max_bid: Vec<f64>,
    /// Empirical P{allocation went to the highest bidder}.
    pub winner_prob: Vec<f64>,
    pub mean_payoff: Vec<f64>,
    pub delta_levels: Vec<f64>,
    /// `conv_prob[d][t]` = empirical P{|revenue_t - target| < delta_levels[d]}
    /// where target is the per-trial revenue benchmark (max bid minus margin,
    /// or the ideal Vickrey revenue for the strategic schemes).
    pub conv_prob: Vec<Vec<f64>>,
    /// Strategic schemes only: P{|mean payoff_t - ideal mean payoff| < delta}.
    pub payoff_conv_prob: Vec<Vec<f64>>,
    /// Mean over trials of (sum_t revenue / sum_t max bid), with 2s/sqrt(R).
    pub efficiency_ratio: f64,
    pub efficiency_stderr: f64,
}

/// Per-trial reduction of a TrialResult to what the aggregates need.
struct TrialSummary {
    revenue: Vec<f64>,
    max_bid: Vec<f64>,
    winner_ok: Vec<bool>,
    mean_payoff: Vec<f64>,
    /// Per-round revenue benchmark.
    target: Vec<f64>,
    /// Constant payoff benchmark, if the scheme has one.
    payoff_target: Option<f64>,
}

fn summarize(trial: &TrialResult) -> TrialSummary {
    let cfg = &trial.config;
    let margin = match cfg.scheme {
        SchemeId::Matched => cfg.h,
        SchemeId::MatchedTracking => cfg.tracking.expect("validated config").mu,
        _ => 0.0,
    };
    let strategic = matches!(cfg.scheme, SchemeId::Truthful | SchemeId::Vickrey);
    let n = cfg.users as f64;
    let mut s = TrialSummary {
        revenue: Vec::with_capacity(cfg.rounds),
        max_bid: Vec::with_capacity(cfg.rounds),
        winner_ok: Vec::with_capacity(cfg.rounds),
        mean_payoff: Vec::with_capacity(cfg.rounds),
        target: Vec::with_capacity(cfg.rounds),
        payoff_target: trial.ideal.as_ref().map(|i| i.mean_payoff),
    };
    for rec in &trial.records {
        s.revenue.push(rec.revenue);
        s.max_bid.push(rec.max_bid);
        s.winner_ok.push(rec.winner_has_max_bid);
        s.mean_payoff.push(rec.payoffs.iter().sum::<f64>() / n);
        let target = if strategic {
            trial.ideal.as_ref().expect("strategic trials carry an ideal outcome").revenue
        } else {
            rec.max_bid - margin
        };
        s.target.push(target);
    }
    s
}

/// Execute R independent trials of the preset's single configuration and
/// aggregate. Panics if called on a sweep or FER preset.
pub fn run_trials(preset: &ExperimentPreset) -> MetricSeries {
    let cfg = match &preset.kind {
        PresetKind::Single(cfg) => cfg,
        _ => panic!("run_trials expects a single-configuration preset"),
    };
    run_config(cfg, preset.trials, preset.master_seed, &preset.delta_levels)
}

fn run_config(
    cfg: &SchemeConfig,
    trials: usize,
    master_seed: u64,
    delta_levels: &[f64],
) -> MetricSeries {
    cfg.validate().expect("config validated before running");
    let summaries: Vec<TrialSummary> = (0..trials as u64)
        .into_par_iter()
        .map(|r| summarize(&run_trial(cfg, trial_seed(master_seed, r), TrialOpts::default())))
        .collect();
    aggregate(cfg, trials, delta_levels, &summaries)
}

// The accumulation loops walk half a dozen parallel per-round vectors; a
// shared index is clearer than nested iterator zips.
#[allow(clippy::needless_range_loop)]
fn aggregate(
    cfg: &SchemeConfig,
    trials: usize,
    delta_levels: &[f64],
    summaries: &[TrialSummary],
) -> MetricSeries {
    let t_max = cfg.rounds;
    let r = trials as f64;
    let mut series = MetricSeries {
        trials,
        rounds: (1..=t_max).collect(),
        mean_revenue: vec![0.0; t_max],
        stderr_revenue: vec![0.0; t_max],
        mean_max_bid: vec![0.0; t_max],
        winner_prob: vec![0.0; t_max],
        mean_payoff: vec![0.0; t_max],
        delta_levels: delta_levels.to_vec(),
        conv_prob: vec![vec![0.0; t_max]; delta_levels.len()],
        payoff_conv_prob: Vec::new(),
        efficiency_ratio: 0.0,
        efficiency_stderr: 0.0,
    };
    let has_payoff_target = summaries.iter().all(|s| s.payoff_target.is_some());
    if has_payoff_target {
        series.payoff_conv_prob = vec![vec![0.0; t_max]; delta_levels.len()];
    }
    let mut sq_revenue = vec![0.0; t_max];
    let mut ratios = Vec::with_capacity(trials);
    for s in summaries {
        let mut rev_total = 0.0;
        let mut bid_total = 0.0;
        for t in 0..t_max {
            series.mean_revenue[t] += s.revenue[t];
            sq_revenue[t] += s.revenue[t] * s.revenue[t];
            series.mean_max_bid[t] += s.max_bid[t];
            series.winner_prob[t] += f64::from(u8::from(s.winner_ok[t]));
            series.mean_payoff[t] += s.mean_payoff[t];
            rev_total += s.revenue[t];
            bid_total += s.max_bid[t];
            for (d, &delta) in delta_levels.iter().enumerate() {
                if (s.revenue[t] - s.target[t]).abs() < delta {
                    series.conv_prob[d][t] += 1.0;
                }
                if let Some(pt) = s.payoff_target {
                    if has_payoff_target && (s.mean_payoff[t] - pt).abs() < delta {
                        series.payoff_conv_prob[d][t] += 1.0;
                    }
                }
            }
        }
        ratios.push(if bid_total > 0.0 { rev_total / bid_total } else { 0.0 });
    }
    for t in 0..t_max {
        series.mean_revenue[t] /= r;
        series.mean_max_bid[t] /= r;
        series.winner_prob[t] /= r;
        series.mean_payoff[t] /= r;
        let var = (sq_revenue[t] / r - series.mean_revenue[t] * series.mean_revenue[t]).max(0.0);
        series.stderr_revenue[t] = 2.0 * var.sqrt() / r.sqrt();
        for d in 0..delta_levels.len() {
            series.conv_prob[d][t] /= r;
            if has_payoff_target {
                series.payoff_conv_prob[d][t] /= r;
            }
        }
    }
    let mean_ratio: f64 = ratios.iter().sum::<f64>() / r;
    let var_ratio: f64 =
        ratios.iter().map(|x| (x - mean_ratio) * (x - mean_ratio)).sum::<f64>() / r;
    series.efficiency_ratio = mean_ratio;
    series.efficiency_stderr = 2.0 * var_ratio.sqrt() / r.sqrt();
    series
}

/// One sweep point: the tracking arm and its no-tracking baseline, run with
/// identical trial seeds (common random numbers: same bid paths, same uplink
/// noise).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub tracking: MetricSeries,
    pub baseline: MetricSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub param: SweepParam,
    pub points: Vec<SweepPoint>,
}

/// Run the paired efficiency sweep of a tracking preset. The baseline arm is
/// the same configuration without re-spreading (plain matched, same margin).
pub fn efficiency_sweep(preset: &ExperimentPreset) -> SweepTable {
    let (base, param, values) = match &preset.kind {
        PresetKind::Sweep { base, param, values } => (base, *param, values),
        _ => panic!("efficiency_sweep expects a sweep preset"),
    };
    assert_eq!(base.scheme, SchemeId::MatchedTracking, "sweeps compare tracking to its baseline");
    let points = values
        .iter()
        .map(|&value| {
            let mut tracked = base.clone();
            param.apply(&mut tracked, value);
            // Baseline keeps the same ask margin so only re-spreading differs.
            let mut baseline = tracked.clone();
            baseline.scheme = SchemeId::Matched;
            baseline.h = tracked.tracking.expect("validated config").mu;
            SweepPoint {
                value,
                tracking: run_config(&tracked, preset.trials, preset.master_seed, &preset.delta_levels),
                baseline: run_config(&baseline, preset.trials, preset.master_seed, &preset.delta_levels),
            }
        })
        .collect();
    SweepTable { param, points }
}

/// Monte-Carlo frame error rate with a Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FerEstimate {
    pub p: f64,
    pub trials: usize,
    pub errors: usize,
    pub fer: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn fer_experiment(
    levels: usize,
    code_rounds: u64,
    p: f64,
    trials: usize,
    master_seed: u64,
) -> FerEstimate {
    let errors: usize = (0..trials as u64)
        .into_par_iter()
        .map(|r| {
            let seed = trial_seed(master_seed, r);
            let theta = keyed_index(seed, 0, Role::BidInit, 0, 0, levels);
            let ch = BscChannel::new(p, seed, 0, 0);
            usize::from(horstein_decode(levels, code_rounds, p, theta, &ch).frame_error)
        })
        .sum();
    let (ci_low, ci_high) = wilson_interval(errors, trials, 1.96);
    FerEstimate { p, trials, errors, fer: errors as f64 / trials as f64, ci_low, ci_high }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// The built-in experiment presets.
pub fn builtin_presets() -> Vec<ExperimentPreset> {
    let deltas = vec![0.005, 0.01, 0.02];
    let matched = SchemeConfig {
        scheme: SchemeId::Matched,
        users: 10,
        units: 1,
        p: 0.05,
        delta: 1e-5,
        h: 1e-3,
        drift: None,
        tracking: None,
        rounds: 150,
    };
    let tracking_base = SchemeConfig {
        scheme: SchemeId::MatchedTracking,
        users: 5,
        units: 1,
        p: 0.05,
        delta: 1.0 / 5000.0,
        h: 0.005,
        drift: Some(crate::drift::DriftConfig { q: 0.02, epsilon: 0.01 }),
        tracking: Some(crate::drift::TrackingConfig { lambda: 0.005, mu: 0.005, theta: 0.3 }),
        rounds: 300,
    };
    vec![
        ExperimentPreset {
            name: "fig9-convergence".into(),
            kind: PresetKind::Single(matched.clone()),
            trials: 1000,
            master_seed: 42,
            delta_levels: deltas.clone(),
        },
        ExperimentPreset {
            name: "fig10-unmatched".into(),
            kind: PresetKind::Single(SchemeConfig {
                scheme: SchemeId::Unmatched,
                ..matched.clone()
            }),
            trials: 10_000,
            master_seed: 42,
            delta_levels: deltas.clone(),
        },
        ExperimentPreset {
            name: "fig11-vickrey".into(),
            kind: PresetKind::Single(SchemeConfig {
                scheme: SchemeId::Vickrey,
                units: 4,
                delta: 1e-3,
                ..matched
            }),
            trials: 500,
            master_seed: 42,
            delta_levels: deltas.clone(),
        },
        ExperimentPreset {
            name: "fig12-drift-sweep".into(),
            kind: PresetKind::Sweep {
                base: tracking_base.clone(),
                param: SweepParam::Q,
                values: vec![0.0, 0.001, 0.003, 0.01, 0.03, 0.1],
            },
            trials: 200,
            master_seed: 42,
            delta_levels: deltas.clone(),
        },
        ExperimentPreset {
            name: "fig13-param-sweep".into(),
            kind: PresetKind::Sweep {
                base: tracking_base,
                param: SweepParam::Lambda,
                values: vec![0.001, 0.002, 0.005, 0.01],
            },
            trials: 200,
            master_seed: 42,
            delta_levels: deltas.clone(),
        },
        ExperimentPreset {
            name: "table1-fer".into(),
            kind: PresetKind::Fer {
                levels: 100_000,
                code_rounds: 50,
                crossovers: vec![0.05, 0.06, 0.1],
            },
            trials: 10_000,
            master_seed: 42,
            delta_levels: deltas,
        },
    ]
}

pub fn find_preset(name: &str) -> Option<ExperimentPreset> {
    builtin_presets().into_iter().find(|p| p.name == name)
}
