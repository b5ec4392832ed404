//! Time-varying bid model and the tracking posterior update.
//!
//! Bids follow a lazy random walk: with probability `q` per round a uniform
//! innovation on `[-epsilon, epsilon]` is added and the result clamped to
//! `[0, 1]`. Tracking keeps the posterior from collapsing to a unit step by
//! re-spreading it into a full-support piecewise-linear CDF centered at its
//! median whenever the Bhattacharyya distance between the two drops below a
//! threshold.

use crate::grid::{GridCdf, GridPrice, InconsistentObservation, PriceGrid};
use crate::posterior::PosteriorState;

/// Bid dynamics parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftConfig {
    /// Probability that a bid changes in a given round.
    pub q: f64,
    /// Half-width of the uniform innovation interval.
    pub epsilon: f64,
}

impl DriftConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.q) {
            return Err(format!("q must be in [0, 1], got {}", self.q));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(format!("epsilon must be in (0, 1), got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Shape and trigger parameters of the re-spreading step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingConfig {
    /// Tail mass of the piecewise-linear replacement.
    pub lambda: f64,
    /// Width of its central plateau.
    pub mu: f64,
    /// Bhattacharyya-distance threshold below which the posterior is replaced.
    pub theta: f64,
}

impl TrackingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lambda > 0.0 && self.lambda < 0.5) {
            return Err(format!("lambda must be in (0, 0.5), got {}", self.lambda));
        }
        if !(self.mu > 0.0 && self.mu < 0.5) {
            return Err(format!("mu must be in (0, 0.5), got {}", self.mu));
        }
        if !(self.theta > 0.0) {
            return Err(format!("theta must be positive, got {}", self.theta));
        }
        Ok(())
    }
}

/// One step of the bid random walk. `u_gate` and `u_innov` are uniform draws
/// in `[0, 1)` supplied by the caller's keyed streams.
pub fn drift_step(
    bid: GridPrice,
    cfg: &DriftConfig,
    grid: &PriceGrid,
    u_gate: f64,
    u_innov: f64,
) -> GridPrice {
    if u_gate >= cfg.q {
        return bid;
    }
    let innovation = (2.0 * u_innov - 1.0) * cfg.epsilon;
    grid.nearest((bid.value + innovation).clamp(0.0, 1.0))
}

/// The three-case piecewise-linear CDF `F(b; b0, lambda, mu)` with median
/// `b0`, discretized by cell masses onto the grid.
pub fn piecewise_linear_cdf(b0: f64, lambda: f64, mu: f64, grid: &PriceGrid) -> GridCdf {
    assert!((0.0..=1.0).contains(&b0));
    let lo = b0 - mu / 2.0;
    let hi = b0 + mu / 2.0;
    let eval = |b: f64| -> f64 {
        if lo > 0.0 && hi < 1.0 {
            // interior
            if b <= lo {
                lambda / lo * b
            } else if b <= hi {
                (b - lo) * (1.0 - 2.0 * lambda) / mu + lambda
            } else {
                lambda / (1.0 - hi) * (b - hi) + 1.0 - lambda
            }
        } else if lo <= 0.0 {
            // left edge
            if b <= b0 {
                if b0 > 0.0 {
                    b / (2.0 * b0)
                } else {
                    0.5 // atom at 0
                }
            } else if b <= hi {
                (b - b0) * (1.0 - 2.0 * lambda) / mu + 0.5
            } else {
                lambda / (1.0 - hi) * (b - hi) + 1.0 - lambda
            }
        } else {
            // right edge
            if b <= lo {
                lambda / lo * b
            } else if b <= b0 {
                (b - lo) * (1.0 - 2.0 * lambda) / mu + lambda
            } else if b0 < 1.0 {
                (b - b0) / (2.0 * (1.0 - b0)) + 0.5
            } else {
                0.5 // F(1) before the atom at 1
            }
        }
    };

    // Cells between the branch breakpoints have equal mass (the CDF is linear
    // there), so the distribution is assembled run by run from a handful of
    // CDF evaluations instead of a dense sweep.
    let n = grid.n_points();
    let delta = grid.delta();
    // Branch breakpoints: lo and hi always, plus b0 itself for the edge cases
    // (where the CDF has a kink at b0); in the interior case the extra cut
    // falls on a linear stretch and merges away.
    let mut cut_cells: Vec<usize> = [lo, b0, hi]
        .iter()
        .filter(|&&v| v > 0.0 && v < grid.p_max())
        .map(|&v| (v / delta).ceil() as usize)
        .filter(|&c| c >= 1 && c < n)
        .collect();
    cut_cells.sort_unstable();
    cut_cells.dedup();

    let mut parts: Vec<(usize, f64)> = Vec::with_capacity(7);
    parts.push((1, eval(0.0))); // point 0 carries F(0)
    let mut done = 1; // next uncovered cell index
    let mut f_done = eval(0.0);
    for &c in &cut_cells {
        if c > done {
            let f = eval(grid.value(c - 1));
            parts.push((c - done, f - f_done));
            f_done = f;
        }
        let f = eval(grid.value(c));
        parts.push((1, f - f_done));
        f_done = f;
        done = c + 1;
    }
    if done < n {
        let f = eval(grid.p_max());
        parts.push((n - done, f - f_done));
        f_done = f;
    }
    // Any mass the formulas leave above F(p_max) is the boundary atom at b0
    // (only nonzero when b0 is an endpoint).
    let deficit = 1.0 - f_done;
    if deficit > 1e-12 {
        let b0_cell = grid.nearest(b0).index;
        let mut start = 0;
        let mut loc = None;
        for (i, part) in parts.iter().enumerate() {
            if b0_cell < start + part.0 {
                loc = Some((i, start));
                break;
            }
            start += part.0;
        }
        if let Some((i, start)) = loc {
            // split the run so the atom lands on exactly one cell
            let (len, mass) = parts[i];
            let cell = mass / len as f64;
            let before = b0_cell - start;
            let after = len - before - 1;
            let mut replacement = Vec::new();
            if before > 0 {
                replacement.push((before, cell * before as f64));
            }
            replacement.push((1, cell + deficit));
            if after > 0 {
                replacement.push((after, cell * after as f64));
            }
            parts.splice(i..=i, replacement);
        }
    }
    GridCdf::from_run_masses(*grid, &parts)
}

/// Bhattacharyya distance between two pmfs on the same grid.
pub fn bhattacharyya(p1: &GridCdf, p2: &GridCdf) -> f64 {
    let coeff = p1.bhattacharyya_coefficient(p2);
    if coeff <= 0.0 {
        f64::INFINITY
    } else {
        -coeff.ln().min(0.0) // clamp tiny negative distances from rounding
    }
}

/// Bayes update followed by the re-spreading check: if the updated posterior
/// is within `theta` of the piecewise-linear family member centered at its
/// new median, replace it with that member.
pub fn update_track(
    state: &mut PosteriorState,
    y: u8,
    p: f64,
    cfg: &TrackingConfig,
) -> Result<(), InconsistentObservation> {
    state.update(y, p)?;
    let m = state.median();
    let grid = *state.cdf().grid();
    let replacement = piecewise_linear_cdf(m.value, cfg.lambda, cfg.mu, &grid);
    if bhattacharyya(state.cdf(), &replacement) < cfg.theta {
        state.replace(replacement);
    }
    Ok(())
}
