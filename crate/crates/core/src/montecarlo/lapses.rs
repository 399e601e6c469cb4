//! Memory-lapse counting and the geometric goodness-of-fit.
//!
//! A lapse is a maximal run of memoryless steps (`Y = 0`). Player coins are
//! i.i.d., so a completed lapse has length `L` with
//! `P(L = k) = theta (1 - theta)^(k - 1)`. A run still open when the path
//! stops is *censored*: it is counted, but kept out of the fit.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::ensemble::EnsembleStats;
use crate::error::{Result, UrnError};
use crate::urn::LapseRecord;

/// Dense per-length counters used inside a chunk.
#[derive(Debug, Clone, Default)]
pub(crate) struct LapseCounts {
    complete: Vec<u64>,
    censored: Vec<u64>,
    trajectories: u64,
    steps: u64,
}

fn bump(v: &mut Vec<u64>, len: usize) {
    if v.len() <= len {
        v.resize(len + 1, 0);
    }
    v[len] += 1;
}

impl LapseCounts {
    #[inline]
    pub(crate) fn complete(&mut self, len: usize) {
        bump(&mut self.complete, len);
    }

    pub(crate) fn censored(&mut self, len: usize) {
        bump(&mut self.censored, len);
    }

    pub(crate) fn trajectory(&mut self, steps: u64) {
        self.trajectories += 1;
        self.steps += steps;
    }

    pub(crate) fn merge(&mut self, other: &LapseCounts) {
        for (dst, src) in [(&mut self.complete, &other.complete), (&mut self.censored, &other.censored)] {
            if dst.len() < src.len() {
                dst.resize(src.len(), 0);
            }
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
        self.trajectories += other.trajectories;
        self.steps += other.steps;
    }

    pub(crate) fn to_histogram(&self) -> LapseHistogram {
        let sparse = |v: &[u64]| {
            v.iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(len, &c)| (len as u64, c))
                .collect()
        };
        LapseHistogram {
            complete: sparse(&self.complete),
            censored: sparse(&self.censored),
            trajectories: self.trajectories,
            steps: self.steps,
        }
    }
}

/// Lapse counts by length, across an ensemble.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Default)]
pub struct LapseHistogram {
    pub complete: BTreeMap<u64, u64>,
    pub censored: BTreeMap<u64, u64>,
    pub trajectories: u64,
    /// Summed over trajectories.
    pub steps: u64,
}

impl LapseHistogram {
    pub fn from_records(records: &[LapseRecord], path_len: usize) -> Self {
        let mut h = LapseHistogram {
            trajectories: 1,
            steps: path_len as u64,
            ..Default::default()
        };
        for rec in records {
            let target = if rec.start + rec.length == path_len {
                &mut h.censored
            } else {
                &mut h.complete
            };
            *target.entry(rec.length as u64).or_default() += 1;
        }
        h
    }

    pub fn complete_count(&self) -> u64 {
        self.complete.values().sum()
    }

    pub fn censored_count(&self) -> u64 {
        self.censored.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoodnessOfFit {
    pub chi_square: f64,
    pub dof: u64,
    pub p_value: f64,
    /// `(first length, last length or None for the open tail, observed, expected)`.
    pub bins: Vec<(u64, Option<u64>, u64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LapseStatistics {
    pub theta: f64,
    pub trajectories: u64,
    pub steps_per_trajectory: f64,
    pub total_lapses: u64,
    pub complete_lapses: u64,
    pub censored_lapses: u64,
    pub mean_lapses_per_trajectory: f64,
    /// `(1 - theta) + (n - 1) theta (1 - theta)`.
    pub expected_lapses_per_trajectory: f64,
    /// Over completed lapses.
    pub mean_length: f64,
    pub mean_length_se: f64,
    pub expected_mean_length: Option<f64>,
    pub histogram: LapseHistogram,
    /// Only for `0 < theta < 1`.
    pub gof: Option<GoodnessOfFit>,
}

/// Smallest expected count allowed in a chi-square bin.
const MIN_EXPECTED: f64 = 5.0;

/// Pearson chi-square of completed lapse lengths against geometric(`theta`).
/// Lengths are binned one by one while the expected count stays above 5;
/// the rest forms one open tail bin.
pub fn geometric_gof(hist: &LapseHistogram, theta: f64) -> Result<GoodnessOfFit> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(UrnError::domain(format!(
            "geometric fit needs 0 < theta < 1, got {theta}"
        )));
    }
    let total = hist.complete_count();
    if total == 0 {
        return Err(UrnError::domain("no completed lapses to fit"));
    }
    let n = total as f64;
    let mut bins = Vec::new();
    let mut k = 1u64;
    let mut remaining_mass = 1.0;
    let mut remaining_obs = total;
    loop {
        let pk = theta * (1.0 - theta).powi(k as i32 - 1);
        let tail_after = remaining_mass - pk;
        if n * pk < MIN_EXPECTED || n * tail_after < MIN_EXPECTED {
            bins.push((k, None, remaining_obs, n * remaining_mass));
            break;
        }
        let obs = hist.complete.get(&k).copied().unwrap_or(0);
        bins.push((k, Some(k), obs, n * pk));
        remaining_obs -= obs;
        remaining_mass = tail_after;
        k += 1;
    }
    let chi_square: f64 = bins
        .iter()
        .map(|&(_, _, o, e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dof = (bins.len() as u64).saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64)
            .map_err(|e| UrnError::domain(e.to_string()))?
            .sf(chi_square)
    };
    Ok(GoodnessOfFit {
        chi_square,
        dof,
        p_value,
        bins,
    })
}

pub fn lapse_statistics_from(hist: &LapseHistogram, theta: f64) -> Result<LapseStatistics> {
    if hist.trajectories == 0 {
        return Err(UrnError::domain("empty lapse histogram"));
    }
    let complete = hist.complete_count();
    let censored = hist.censored_count();
    let trajectories = hist.trajectories as f64;
    let n = hist.steps as f64 / trajectories;

    let (mut s1, mut s2) = (0.0, 0.0);
    for (&len, &count) in &hist.complete {
        s1 += (len * count) as f64;
        s2 += (len * len * count) as f64;
    }
    let (mean_length, mean_length_se) = if complete > 0 {
        let c = complete as f64;
        let mean = s1 / c;
        let var = if complete > 1 { (s2 - c * mean * mean) / (c - 1.0) } else { 0.0 };
        (mean, (var.max(0.0) / c).sqrt())
    } else {
        (0.0, 0.0)
    };
    let expected_lapses = if n >= 1.0 {
        (1.0 - theta) + (n - 1.0) * theta * (1.0 - theta)
    } else {
        0.0
    };
    let gof = (theta > 0.0 && theta < 1.0 && complete > 0)
        .then(|| geometric_gof(hist, theta))
        .transpose()?;
    Ok(LapseStatistics {
        theta,
        trajectories: hist.trajectories,
        steps_per_trajectory: n,
        total_lapses: complete + censored,
        complete_lapses: complete,
        censored_lapses: censored,
        mean_lapses_per_trajectory: (complete + censored) as f64 / trajectories,
        expected_lapses_per_trajectory: expected_lapses,
        mean_length,
        mean_length_se,
        expected_mean_length: (theta > 0.0).then(|| 1.0 / theta),
        histogram: hist.clone(),
        gof,
    })
}

/// Lapse summary of an ensemble run with lapse tracking on.
pub fn lapse_statistics(stats: &EnsembleStats) -> Result<LapseStatistics> {
    let hist = stats
        .lapse_histogram
        .as_ref()
        .ok_or_else(|| UrnError::domain("ensemble was run without lapse tracking"))?;
    lapse_statistics_from(hist, stats.params.theta.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::urn::extract_lapses;

    #[test]
    fn histogram_from_records_separates_censored() {
        let y = [true, false, false, true, false];
        let h = LapseHistogram::from_records(&extract_lapses(&y), y.len());
        assert_eq!(h.complete.get(&2), Some(&1));
        assert_eq!(h.censored.get(&1), Some(&1));
    }

    #[test]
    fn exact_geometric_counts_fit_perfectly() {
        let theta = 0.5;
        let mut h = LapseHistogram {
            trajectories: 1,
            steps: 1,
            ..Default::default()
        };
        for k in 1..=12u64 {
            h.complete.insert(k, 4096 >> k);
        }
        let gof = geometric_gof(&h, theta).unwrap();
        assert!(gof.p_value > 0.99, "{gof:?}");
        assert!(geometric_gof(&h, 1.0).is_err());
    }

    #[test]
    fn skewed_counts_are_rejected() {
        let mut h = LapseHistogram::default();
        for k in 1..=10u64 {
            h.complete.insert(k, 1000);
        }
        assert!(geometric_gof(&h, 0.5).unwrap().p_value < 1e-6);
    }
}
