//! Stress and movement metrics from ECG and IMU streams.

mod hrv;
mod rpeak;
mod steps;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hrv::{compute_pnn50, mean_heart_rate, RrSeries, NN50_THRESHOLD_MS, RR_MAX_MS, RR_MIN_MS};
pub use rpeak::{detect_r_peaks, FLAT_SIGNAL_MV, REFRACTORY_MS, SAMPLE_RATE_HZ};
pub use steps::{count_steps, detect_steps, MIN_STEP_GAP_MS, STEP_THRESHOLD_MS2};

use crate::clock::VirtualTime;
use crate::ingest::{EcgSample, ImuSample};

/// ECG gaps longer than this split the RR analysis window.
pub const ECG_SPLIT_GAP_MS: u64 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PhysioError {
    #[error("not enough data")]
    InsufficientData,
    #[error("flat ECG signal (electrode disconnected?)")]
    FlatSignal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StressLevel {
    Low,
    Moderate,
    High,
}

impl StressLevel {
    pub fn as_lower(self) -> &'static str {
        match self {
            StressLevel::Low => "low",
            StressLevel::Moderate => "moderate",
            StressLevel::High => "high",
        }
    }
}

/// pNN50 < 20 is High, 20..=50 Moderate, > 50 Low. NaN maps to High.
pub fn classify_stress(pnn50: f64) -> StressLevel {
    if pnn50 > 50.0 {
        StressLevel::Low
    } else if pnn50 >= 20.0 {
        StressLevel::Moderate
    } else {
        StressLevel::High
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysioDiagnostics {
    pub ecg_runs: u32,
    pub dropped_rr: u32,
    pub flat_runs: u32,
    pub short_runs: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysioWindow {
    pub window: (VirtualTime, VirtualTime),
    pub pnn50: Option<f64>,
    pub mean_hr: Option<f64>,
    pub steps: u32,
    pub valid: bool,
    #[serde(default)]
    pub diagnostics: PhysioDiagnostics,
}

impl PhysioWindow {
    /// A window with no usable ECG.
    pub fn steps_only(window: (VirtualTime, VirtualTime), steps: u32) -> Self {
        PhysioWindow {
            window,
            pnn50: None,
            mean_hr: None,
            steps,
            valid: false,
            diagnostics: PhysioDiagnostics::default(),
        }
    }

    pub fn stress(&self) -> Option<StressLevel> {
        self.pnn50.map(classify_stress)
    }

    /// Metrics for `[start, end)`. `ecg` may extend beyond the window; only
    /// samples inside are used. `imu` is filtered in full and steps are
    /// counted inside the window.
    pub fn compute(
        window: (VirtualTime, VirtualTime),
        ecg: &[EcgSample],
        imu: &[ImuSample],
    ) -> Self {
        let steps = count_steps(imu, window);
        let inside: Vec<EcgSample> = ecg
            .iter()
            .filter(|s| s.timestamp >= window.0 && s.timestamp < window.1)
            .copied()
            .collect();
        let mut diagnostics = PhysioDiagnostics::default();
        let mut runs = Vec::new();
        for run in split_on_gaps(&inside, ECG_SPLIT_GAP_MS) {
            diagnostics.ecg_runs += 1;
            match detect_r_peaks(run) {
                Ok(peaks) => runs.push(peaks),
                Err(PhysioError::FlatSignal) => diagnostics.flat_runs += 1,
                Err(PhysioError::InsufficientData) => diagnostics.short_runs += 1,
            }
        }
        let rr = RrSeries::from_peak_runs(window, &runs);
        diagnostics.dropped_rr = rr.dropped as u32;
        let pnn50 = compute_pnn50(&rr).ok();
        let mean_hr = mean_heart_rate(&rr)
            .ok()
            .filter(|hr| *hr > 20.0 && *hr < 250.0);
        let valid = pnn50.is_some() && mean_hr.is_some();
        PhysioWindow {
            window,
            pnn50: pnn50.filter(|_| valid),
            mean_hr: mean_hr.filter(|_| valid),
            steps,
            valid,
            diagnostics,
        }
    }
}

/// Splits at every gap strictly longer than `max_gap_ms`.
pub fn split_on_gaps(samples: &[EcgSample], max_gap_ms: u64) -> Vec<&[EcgSample]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..samples.len() {
        if samples[i].timestamp.0 - samples[i - 1].timestamp.0 > max_gap_ms {
            out.push(&samples[start..i]);
            start = i;
        }
    }
    if start < samples.len() {
        out.push(&samples[start..]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stress_thresholds() {
        assert_eq!(classify_stress(15.0), StressLevel::High);
        assert_eq!(classify_stress(20.0), StressLevel::Moderate);
        assert_eq!(classify_stress(35.0), StressLevel::Moderate);
        assert_eq!(classify_stress(50.0), StressLevel::Moderate);
        assert_eq!(classify_stress(50.000001), StressLevel::Low);
        assert_eq!(classify_stress(60.0), StressLevel::Low);
        assert_eq!(classify_stress(f64::NAN), StressLevel::High);
    }

    #[test]
    fn flat_ecg_gives_invalid_window_with_steps() {
        let w = (VirtualTime(0), VirtualTime(10_000));
        let ecg: Vec<EcgSample> = (0..2000)
            .map(|i| EcgSample {
                timestamp: VirtualTime(i * 5),
                value: 0.0,
            })
            .collect();
        let p = PhysioWindow::compute(w, &ecg, &[]);
        assert!(!p.valid);
        assert_eq!(p.pnn50, None);
        assert_eq!(p.mean_hr, None);
        assert_eq!(p.diagnostics.flat_runs, 1);
    }

    #[test]
    fn gap_splitting() {
        let ts = [0u64, 5, 10, 2500, 2505];
        let s: Vec<EcgSample> = ts
            .iter()
            .map(|&t| EcgSample {
                timestamp: VirtualTime(t),
                value: 0.0,
            })
            .collect();
        let runs = split_on_gaps(&s, ECG_SPLIT_GAP_MS);
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[1].len(), 2);
    }
}
