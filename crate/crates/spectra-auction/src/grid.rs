//! Price discretization and grid-based distributions.
//!
//! All prices in the simulator live on a uniform grid: point `k` has value
//! `k * delta`. Distributions over the grid are stored run-length encoded
//! (maximal runs of consecutive points with identical mass), which keeps the
//! one-bit posterior updates cheap: each update splits at most one run and
//! rescales the two sides, so a posterior built from a uniform prior has at
//! most `t + 1` runs after `t` rounds regardless of the grid resolution.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("delta must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("p_max {p_max} is not an integer multiple of delta {delta}")]
    Misaligned { p_max: f64, delta: f64 },
    #[error("grid needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("order-statistic rank {k} out of range 1..={total}")]
    InvalidRank { k: usize, total: usize },
}

#[derive(Debug, Error, PartialEq)]
#[error("inconsistent observation: received bit has zero likelihood under the current support")]
pub struct InconsistentObservation;

/// Uniform discretization of `[0, p_max]` with step `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceGrid {
    delta: f64,
    p_max: f64,
    n_points: usize,
}

impl PriceGrid {
    pub fn new(delta: f64, p_max: f64) -> Result<Self, GridError> {
        if !(delta > 0.0) {
            return Err(GridError::NonPositiveDelta(delta));
        }
        let steps = (p_max / delta).round();
        if (p_max / delta - steps).abs() > 1e-6 {
            return Err(GridError::Misaligned { p_max, delta });
        }
        let n_points = steps as usize + 1;
        if n_points < 2 {
            return Err(GridError::TooFewPoints(n_points));
        }
        Ok(PriceGrid { delta, p_max, n_points })
    }

    /// Grid over `[0, 1]`, the domain of all bid prices.
    pub fn unit(delta: f64) -> Result<Self, GridError> {
        PriceGrid::new(delta, 1.0)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn value(&self, index: usize) -> f64 {
        debug_assert!(index < self.n_points);
        index as f64 * self.delta
    }

    pub fn point(&self, index: usize) -> GridPrice {
        GridPrice { index, value: self.value(index) }
    }

    /// Snap an arbitrary value in `[0, p_max]` to the nearest grid point.
    pub fn nearest(&self, value: f64) -> GridPrice {
        let clamped = value.clamp(0.0, self.p_max);
        let index = ((clamped / self.delta).round() as usize).min(self.n_points - 1);
        self.point(index)
    }
}

/// A realized price on a grid: an index plus its value `index * delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPrice {
    pub index: usize,
    pub value: f64,
}

/// A maximal run of consecutive grid points sharing the same mass.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Run {
    len: usize,
    cell_mass: f64,
}

/// Cumulative distribution over a `PriceGrid`, normalized to total mass 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCdf {
    grid: PriceGrid,
    runs: Vec<Run>,
}

impl GridCdf {
    /// Uniform prior: equal mass `1/n_points` on every grid point.
    pub fn uniform(grid: PriceGrid) -> Self {
        let n = grid.n_points;
        GridCdf { grid, runs: vec![Run { len: n, cell_mass: 1.0 / n as f64 }] }
    }

    /// Marginal prior of the `k`-th largest of `total` iid draws from the
    /// discrete uniform on the grid (so `k = 1, total = 1` is exactly
    /// [`GridCdf::uniform`]).
    pub fn order_statistic(grid: PriceGrid, k: usize, total: usize) -> Result<Self, GridError> {
        if k < 1 || k > total {
            return Err(GridError::InvalidRank { k, total });
        }
        if total == 1 {
            // Exact identity with the uniform prior (no binomial rounding dust).
            return Ok(GridCdf::uniform(grid));
        }
        let n = grid.n_points;
        // P{k-th largest <= x} = P{at most k-1 of the draws exceed x}.
        let tail_cdf = |u: f64| -> f64 {
            let mut acc = 0.0;
            let mut coef = 1.0; // C(total, i)
            for i in 0..k {
                acc += coef * (1.0 - u).powi(i as i32) * u.powi((total - i) as i32);
                coef = coef * (total - i) as f64 / (i + 1) as f64;
            }
            acc
        };
        let mut masses = Vec::with_capacity(n);
        let mut prev = 0.0;
        for j in 0..n {
            let cum = tail_cdf((j + 1) as f64 / n as f64);
            masses.push((cum - prev).max(0.0));
            prev = cum;
        }
        Ok(GridCdf::from_cell_masses(grid, &masses))
    }

    /// Build from explicit per-point masses (normalized on construction).
    pub fn from_cell_masses(grid: PriceGrid, masses: &[f64]) -> Self {
        assert_eq!(masses.len(), grid.n_points, "mass vector length must match grid");
        let total: f64 = masses.iter().sum();
        assert!(total > 0.0, "total mass must be positive");
        let mut runs: Vec<Run> = Vec::new();
        for &m in masses {
            let m = m / total;
            match runs.last_mut() {
                Some(r) if r.cell_mass == m => r.len += 1,
                _ => runs.push(Run { len: 1, cell_mass: m }),
            }
        }
        GridCdf { grid, runs }
    }

    /// Build from runs described as `(len, total_mass_of_run)` covering the
    /// whole grid in order. Used by constructors that know their distribution
    /// is piecewise constant.
    pub(crate) fn from_run_masses(grid: PriceGrid, parts: &[(usize, f64)]) -> Self {
        let covered: usize = parts.iter().map(|(len, _)| len).sum();
        assert_eq!(covered, grid.n_points, "runs must cover the grid");
        let total: f64 = parts.iter().map(|(_, m)| m).sum();
        assert!(total > 0.0, "total mass must be positive");
        let mut runs: Vec<Run> = Vec::new();
        for &(len, mass) in parts {
            if len == 0 {
                continue;
            }
            let cell = (mass.max(0.0) / total / len as f64).max(0.0);
            match runs.last_mut() {
                Some(r) if r.cell_mass == cell => r.len += len,
                _ => runs.push(Run { len, cell_mass: cell }),
            }
        }
        GridCdf { grid, runs }
    }

    pub fn grid(&self) -> &PriceGrid {
        &self.grid
    }

    /// Total mass (1 up to floating error).
    pub fn total(&self) -> f64 {
        self.runs.iter().map(|r| r.len as f64 * r.cell_mass).sum()
    }

    pub fn pmf_at(&self, index: usize) -> f64 {
        let mut start = 0;
        for r in &self.runs {
            if index < start + r.len {
                return r.cell_mass;
            }
            start += r.len;
        }
        panic!("index {index} out of range");
    }

    pub fn cum_at(&self, index: usize) -> f64 {
        let mut start = 0;
        let mut cum = 0.0;
        for r in &self.runs {
            if index < start + r.len {
                return cum + (index - start + 1) as f64 * r.cell_mass;
            }
            cum += r.len as f64 * r.cell_mass;
            start += r.len;
        }
        panic!("index {index} out of range");
    }

    pub fn to_pmf(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.n_points);
        for r in &self.runs {
            out.extend(std::iter::repeat_n(r.cell_mass, r.len));
        }
        out
    }

    pub fn to_cum(&self) -> Vec<f64> {
        let mut cum = 0.0;
        self.to_pmf()
            .into_iter()
            .map(|m| {
                cum += m;
                cum
            })
            .collect()
    }

    /// The smallest grid point `m` with `P{X <= m} >= 1/2`, `P{X >= m} >= 1/2`
    /// and strictly positive mass.
    pub fn median(&self) -> GridPrice {
        // Tolerance so a cumulative value that is exactly 1/2 up to floating
        // error still counts as reaching the median.
        const EPS: f64 = 1e-12;
        let mut cum = 0.0;
        let mut start = 0;
        for r in &self.runs {
            let run_total = r.len as f64 * r.cell_mass;
            if r.cell_mass > 0.0 && cum + run_total >= 0.5 - EPS {
                // smallest j in this run with cum + (j+1) * cell_mass >= 1/2
                let need = (0.5 - EPS - cum) / r.cell_mass;
                let j = (need.ceil() as usize).max(1) - 1;
                let j = j.min(r.len - 1);
                return self.grid.point(start + j);
            }
            cum += run_total;
            start += r.len;
        }
        // cum[last] = 1 >= 1/2, so we only get here through floating slack.
        let last = self
            .runs
            .iter()
            .scan(0, |s, r| {
                *s += r.len;
                Some((*s - 1, r.cell_mass))
            })
            .filter(|&(_, m)| m > 0.0)
            .last()
            .map(|(i, _)| i)
            .unwrap_or(self.grid.n_points - 1);
        self.grid.point(last)
    }

    /// One-bit Bayes reweighting: multiply the mass of every point below
    /// `split` by `w_lo` and of every point at or above `split` by `w_hi`,
    /// then renormalize. Fails when the reweighted total is zero.
    pub fn reweight_split(
        &mut self,
        split: usize,
        w_lo: f64,
        w_hi: f64,
    ) -> Result<(), InconsistentObservation> {
        assert!(split < self.grid.n_points);
        let mut out: Vec<Run> = Vec::with_capacity(self.runs.len() + 1);
        let push = |out: &mut Vec<Run>, len: usize, cell_mass: f64| {
            if len == 0 {
                return;
            }
            match out.last_mut() {
                Some(r) if r.cell_mass == cell_mass => r.len += len,
                _ => out.push(Run { len, cell_mass }),
            }
        };
        let mut start = 0;
        for r in &self.runs {
            let end = start + r.len;
            if end <= split {
                push(&mut out, r.len, r.cell_mass * w_lo);
            } else if start >= split {
                push(&mut out, r.len, r.cell_mass * w_hi);
            } else {
                push(&mut out, split - start, r.cell_mass * w_lo);
                push(&mut out, end - split, r.cell_mass * w_hi);
            }
            start = end;
        }
        let total: f64 = out.iter().map(|r| r.len as f64 * r.cell_mass).sum();
        if !(total > 1e-300) {
            return Err(InconsistentObservation);
        }
        for r in &mut out {
            r.cell_mass /= total;
        }
        self.runs = out;
        Ok(())
    }

    /// Variant of [`GridCdf::reweight_split`] for a threshold sitting exactly
    /// on the grid point `split`: the cell at `split` straddles the threshold
    /// and gets the average weight `(w_lo + w_hi) / 2`, cells below get
    /// `w_lo` and cells above get `w_hi`. This is the exact Bayes update for
    /// a piecewise-uniform density over cell intervals of width `delta`
    /// centered on the grid points, observed through a strict comparison
    /// against the value of `split`.
    pub fn reweight_split_center(
        &mut self,
        split: usize,
        w_lo: f64,
        w_hi: f64,
    ) -> Result<(), InconsistentObservation> {
        assert!(split < self.grid.n_points);
        let w_mid = 0.5 * (w_lo + w_hi);
        let mut out: Vec<Run> = Vec::with_capacity(self.runs.len() + 2);
        let push = |out: &mut Vec<Run>, len: usize, cell_mass: f64| {
            if len == 0 {
                return;
            }
            match out.last_mut() {
                Some(r) if r.cell_mass == cell_mass => r.len += len,
                _ => out.push(Run { len, cell_mass }),
            }
        };
        let mut start = 0;
        for r in &self.runs {
            let end = start + r.len;
            if end <= split {
                push(&mut out, r.len, r.cell_mass * w_lo);
            } else if start > split {
                push(&mut out, r.len, r.cell_mass * w_hi);
            } else {
                push(&mut out, split - start, r.cell_mass * w_lo);
                push(&mut out, 1, r.cell_mass * w_mid);
                push(&mut out, end - (split + 1), r.cell_mass * w_hi);
            }
            start = end;
        }
        let total: f64 = out.iter().map(|r| r.len as f64 * r.cell_mass).sum();
        if !(total > 1e-300) {
            return Err(InconsistentObservation);
        }
        for r in &mut out {
            r.cell_mass /= total;
        }
        self.runs = out;
        Ok(())
    }

    /// Renormalize against floating drift, asserting the drift is small.
    pub fn renormalize(&mut self) {
        let total = self.total();
        debug_assert!((total - 1.0).abs() < 1e-6, "cdf mass drifted to {total}");
        for r in &mut self.runs {
            r.cell_mass /= total;
        }
    }

    /// Bhattacharyya coefficient sum over shared grid cells; used by the
    /// drift-tracking divergence test.
    pub fn bhattacharyya_coefficient(&self, other: &GridCdf) -> f64 {
        assert_eq!(self.grid, other.grid, "pmfs must share a grid");
        let mut coeff = 0.0;
        let (mut i, mut j) = (0, 0);
        let (mut left_i, mut left_j) = (self.runs[0].len, other.runs[0].len);
        loop {
            let step = left_i.min(left_j);
            coeff +=
                step as f64 * (self.runs[i].cell_mass * other.runs[j].cell_mass).sqrt();
            left_i -= step;
            left_j -= step;
            if left_i == 0 {
                i += 1;
                if i == self.runs.len() {
                    break;
                }
                left_i = self.runs[i].len;
            }
            if left_j == 0 {
                j += 1;
                left_j = other.runs[j].len;
            }
        }
        coeff
    }

    #[cfg(test)]
    pub(crate) fn run_count(&self) -> usize {
        self.runs.len()
    }
}

/// Smallest-point median per the discrete definition.
pub fn median(cdf: &GridCdf) -> GridPrice {
    cdf.median()
}

/// Uniform prior over the grid.
pub fn prior_uniform(grid: PriceGrid) -> GridCdf {
    GridCdf::uniform(grid)
}

/// Prior for the `k`-th largest of `total` marginal bids.
pub fn prior_order_statistic(grid: PriceGrid, k: usize, total: usize) -> Result<GridCdf, GridError> {
    GridCdf::order_statistic(grid, k, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_grid(delta: f64) -> PriceGrid {
        PriceGrid::unit(delta).unwrap()
    }

    #[test]
    fn grid_construction_validates() {
        assert!(PriceGrid::new(0.0, 1.0).is_err());
        assert!(PriceGrid::new(-0.1, 1.0).is_err());
        assert!(PriceGrid::new(0.3, 1.0).is_err());
        let g = unit_grid(0.25);
        assert_eq!(g.n_points(), 5);
        assert_eq!(g.value(3), 0.75);
        assert_eq!(g.nearest(0.62).index, 2);
        assert_eq!(g.nearest(1.7).index, 4);
        // Vickrey ask grids run over [0, K].
        let ask = PriceGrid::new(0.5, 4.0).unwrap();
        assert_eq!(ask.n_points(), 9);
    }

    #[test]
    fn median_two_point_mass() {
        // pmf {0.2: 0.5, 0.6: 0.5} -> median 0.2
        let g = unit_grid(0.2);
        let mut masses = vec![0.0; 6];
        masses[1] = 0.5;
        masses[3] = 0.5;
        let cdf = GridCdf::from_cell_masses(g, &masses);
        assert_eq!(cdf.median().value, 0.2);
    }

    #[test]
    fn median_uniform_five_points() {
        let cdf = prior_uniform(unit_grid(0.25));
        assert_eq!(cdf.median().value, 0.5);
    }

    #[test]
    fn median_point_mass() {
        let g = unit_grid(0.01);
        let mut masses = vec![0.0; 101];
        masses[73] = 1.0;
        let cdf = GridCdf::from_cell_masses(g, &masses);
        assert_eq!(cdf.median().index, 73);
    }

    #[test]
    fn uniform_prior_masses() {
        let cdf = prior_uniform(unit_grid(0.5));
        let cum = cdf.to_cum();
        for (i, c) in cum.iter().enumerate() {
            assert!((c - (i + 1) as f64 / 3.0).abs() < 1e-12);
        }
        assert_eq!(cdf.median().value, 0.5);

        let fine = prior_uniform(unit_grid(1e-5));
        assert!((fine.cum_at(0) - 1.0 / 100_001.0).abs() < 1e-15);
    }

    #[test]
    fn order_statistic_single_draw_is_uniform() {
        let g = unit_grid(0.01);
        let os = prior_order_statistic(g, 1, 1).unwrap();
        assert_eq!(os, prior_uniform(g));
    }

    #[test]
    fn order_statistic_max_of_two() {
        let g = unit_grid(0.01);
        let n = g.n_points() as f64;
        let os = prior_order_statistic(g, 1, 2).unwrap();
        let cum = os.to_cum();
        for (j, c) in cum.iter().enumerate() {
            // discrete-base closed form ((j+1)/n)^2; the continuous form
            // (j*delta)^2 agrees to O(delta)
            let u = (j + 1) as f64 / n;
            assert!((c - u * u).abs() < 1e-12);
            let b = g.value(j);
            assert!((c - b * b).abs() < 3.0 * g.delta());
        }
    }

    #[test]
    fn order_statistic_min_of_two() {
        let g = unit_grid(0.01);
        let n = g.n_points() as f64;
        let os = prior_order_statistic(g, 2, 2).unwrap();
        let cum = os.to_cum();
        for (j, c) in cum.iter().enumerate() {
            let u = (j + 1) as f64 / n;
            let expect = 1.0 - (1.0 - u) * (1.0 - u);
            assert!((c - expect).abs() < 1e-12);
            let b = g.value(j);
            assert!((c - (1.0 - (1.0 - b) * (1.0 - b))).abs() < 3.0 * g.delta());
        }
    }

    #[test]
    fn order_statistic_rejects_bad_rank() {
        let g = unit_grid(0.1);
        assert!(prior_order_statistic(g, 0, 2).is_err());
        assert!(prior_order_statistic(g, 3, 2).is_err());
    }

    #[test]
    fn order_statistic_medians_decrease_in_rank() {
        let g = unit_grid(0.001);
        let total = 4;
        let medians: Vec<f64> = (1..=total)
            .map(|k| prior_order_statistic(g, k, total).unwrap().median().value)
            .collect();
        for w in medians.windows(2) {
            assert!(w[0] > w[1], "medians {medians:?} not decreasing");
        }
    }

    #[test]
    fn reweight_preserves_invariants() {
        let g = unit_grid(0.125);
        let mut cdf = prior_uniform(g);
        cdf.reweight_split(4, 0.1, 0.9).unwrap();
        assert!((cdf.total() - 1.0).abs() < 1e-12);
        let cum = cdf.to_cum();
        for w in cum.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!((cum.last().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reweight_zero_total_is_inconsistent() {
        let g = unit_grid(0.5);
        let mut masses = vec![0.0; 3];
        masses[0] = 1.0;
        let mut cdf = GridCdf::from_cell_masses(g, &masses);
        // All the mass sits below the split and gets weight 0.
        assert_eq!(cdf.reweight_split(1, 0.0, 1.0), Err(InconsistentObservation));
    }

    #[test]
    fn equal_weights_merge_runs() {
        let g = unit_grid(0.01);
        let mut cdf = prior_uniform(g);
        cdf.reweight_split(50, 0.5, 0.5).unwrap();
        assert_eq!(cdf.run_count(), 1);
    }

    #[test]
    fn bhattacharyya_of_identical_is_one() {
        let cdf = prior_order_statistic(unit_grid(0.01), 1, 3).unwrap();
        assert!((cdf.bhattacharyya_coefficient(&cdf) - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn pmf_sums_to_one_after_random_updates(
            splits in proptest::collection::vec(0usize..101, 0..25),
            w in proptest::collection::vec((0.05f64..1.0, 0.05f64..1.0), 25),
        ) {
            let g = unit_grid(0.01);
            let mut cdf = prior_uniform(g);
            for (s, (lo, hi)) in splits.iter().zip(&w) {
                cdf.reweight_split(*s, *lo, *hi).unwrap();
            }
            prop_assert!((cdf.total() - 1.0).abs() < 1e-9);
            let cum = cdf.to_cum();
            for win in cum.windows(2) {
                prop_assert!(win[1] >= win[0] - 1e-15);
            }
            prop_assert!((cum.last().unwrap() - 1.0).abs() < 1e-9);
            for m in cdf.to_pmf() {
                prop_assert!(m >= 0.0);
            }
        }

        #[test]
        fn median_matches_dense_definition(
            masses in proptest::collection::vec(0.0f64..1.0, 11),
        ) {
            prop_assume!(masses.iter().sum::<f64>() > 1e-6);
            let g = unit_grid(0.1);
            let cdf = GridCdf::from_cell_masses(g, &masses);
            let m = cdf.median();
            // dense reference: smallest index with cum >= 1/2, upper tail >= 1/2,
            // positive mass
            let pmf = cdf.to_pmf();
            let cum = cdf.to_cum();
            let reference = (0..pmf.len())
                .find(|&i| {
                    let upper: f64 = pmf[i..].iter().sum();
                    cum[i] >= 0.5 && upper >= 0.5 && pmf[i] > 0.0
                })
                .unwrap();
            prop_assert_eq!(m.index, reference);
        }
    }
}
