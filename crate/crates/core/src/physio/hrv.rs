//! RR interval series, pNN50 and mean heart rate.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::PhysioError;
use crate::clock::VirtualTime;

/// Physiologically plausible RR interval bounds in milliseconds.
pub const RR_MIN_MS: f64 = 250.0;
pub const RR_MAX_MS: f64 = 3000.0;

/// Successive-difference threshold for pNN50.
pub const NN50_THRESHOLD_MS: f64 = 50.0;

/// RR intervals over a window, in order of occurrence.
///
/// An interval listed in `breaks` does not follow its predecessor: either an
/// ECG gap split the analysis window there or an implausible interval was
/// dropped in between. Successive differences are never taken across a break.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrSeries {
    pub window: (VirtualTime, VirtualTime),
    pub intervals: Vec<f64>,
    pub breaks: Vec<usize>,
    pub dropped: usize,
}

impl RrSeries {
    /// A contiguous series with no breaks. Intervals outside the plausibility
    /// bounds are dropped and counted.
    pub fn new(window: (VirtualTime, VirtualTime), intervals: &[f64]) -> Self {
        let mut series = RrSeries {
            window,
            intervals: Vec::with_capacity(intervals.len()),
            breaks: Vec::new(),
            dropped: 0,
        };
        series.extend_run(intervals.iter().copied());
        series
    }

    /// Builds the series from runs of R-peak timestamps. Each run is a gap-free
    /// stretch of ECG.
    pub fn from_peak_runs(window: (VirtualTime, VirtualTime), runs: &[Vec<VirtualTime>]) -> Self {
        let mut series = RrSeries {
            window,
            intervals: Vec::new(),
            breaks: Vec::new(),
            dropped: 0,
        };
        for run in runs {
            series.extend_run(run.windows(2).map(|w| (w[1].0 - w[0].0) as f64));
        }
        series
    }

    fn extend_run(&mut self, intervals: impl Iterator<Item = f64>) {
        let mut contiguous = false;
        for rr in intervals {
            if !(RR_MIN_MS..=RR_MAX_MS).contains(&rr) {
                self.dropped += 1;
                contiguous = false;
                continue;
            }
            if !contiguous && !self.intervals.is_empty() {
                self.breaks.push(self.intervals.len());
            }
            self.intervals.push(rr);
            contiguous = true;
        }
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Pairs of adjacent intervals not separated by a break.
    pub fn successive_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (1..self.intervals.len())
            .filter(|i| !self.breaks.contains(i))
            .map(|i| (self.intervals[i - 1], self.intervals[i]))
    }
}

/// Percentage of successive RR differences strictly greater than 50 ms.
pub fn compute_pnn50(rr: &RrSeries) -> Result<f64, PhysioError> {
    if rr.len() < 2 {
        return Err(PhysioError::InsufficientData);
    }
    let (mut pairs, mut over) = (0usize, 0usize);
    for (a, b) in rr.successive_pairs() {
        pairs += 1;
        if libm::fabs(b - a) > NN50_THRESHOLD_MS {
            over += 1;
        }
    }
    if pairs == 0 {
        return Err(PhysioError::InsufficientData);
    }
    Ok(100.0 * over as f64 / pairs as f64)
}

/// 60000 / mean RR (ms), in beats per minute.
pub fn mean_heart_rate(rr: &RrSeries) -> Result<f64, PhysioError> {
    if rr.len() < 2 {
        return Err(PhysioError::InsufficientData);
    }
    let mean = rr.intervals.iter().sum::<f64>() / rr.len() as f64;
    Ok(60_000.0 / mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const W: (VirtualTime, VirtualTime) = (VirtualTime(0), VirtualTime(900_000));

    #[test]
    fn constant_series_has_zero_pnn50() {
        assert_eq!(
            compute_pnn50(&RrSeries::new(W, &[800.0, 800.0, 800.0])),
            Ok(0.0)
        );
    }

    #[test]
    fn alternating_sixty_ms_is_full() {
        assert_eq!(
            compute_pnn50(&RrSeries::new(W, &[800.0, 860.0, 800.0])),
            Ok(100.0)
        );
    }

    #[test]
    fn exactly_fifty_is_not_counted() {
        assert_eq!(
            compute_pnn50(&RrSeries::new(W, &[800.0, 850.0, 800.0])),
            Ok(0.0)
        );
    }

    #[test]
    fn too_few_intervals() {
        assert_eq!(
            compute_pnn50(&RrSeries::new(W, &[800.0])),
            Err(PhysioError::InsufficientData)
        );
        assert_eq!(
            mean_heart_rate(&RrSeries::new(W, &[])),
            Err(PhysioError::InsufficientData)
        );
    }

    #[test]
    fn heart_rate_from_constant_intervals() {
        assert_eq!(mean_heart_rate(&RrSeries::new(W, &[1000.0; 5])), Ok(60.0));
        assert_eq!(mean_heart_rate(&RrSeries::new(W, &[500.0; 5])), Ok(120.0));
    }

    #[test]
    fn implausible_intervals_dropped_and_break_the_series() {
        let rr = RrSeries::new(W, &[800.0, 100.0, 900.0, 4000.0, 905.0]);
        assert_eq!(rr.intervals, vec![800.0, 900.0, 905.0]);
        assert_eq!(rr.dropped, 2);
        assert_eq!(rr.breaks, vec![1, 2]);
        // No adjacent pair survives, so there is nothing to compare.
        assert_eq!(compute_pnn50(&rr), Err(PhysioError::InsufficientData));
    }

    #[test]
    fn runs_do_not_pair_across_gaps() {
        let ms = |v: &[u64]| v.iter().map(|&t| VirtualTime(t)).collect::<Vec<_>>();
        let rr = RrSeries::from_peak_runs(W, &[ms(&[0, 800, 1600]), ms(&[10_000, 10_900, 11_800])]);
        assert_eq!(rr.intervals, vec![800.0, 800.0, 900.0, 900.0]);
        assert_eq!(rr.breaks, vec![2]);
        assert_eq!(compute_pnn50(&rr), Ok(0.0));
    }
}
