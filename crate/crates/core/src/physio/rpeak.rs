//! Batch QRS detection for 200 Hz ECG.
//!
//! Pipeline: triangular low-pass and moving-average high-pass (together a
//! 5-15 Hz band-pass built from integer difference equations), five-point
//! derivative, squaring, 150 ms moving-window integration, then an adaptive
//! threshold at 0.6 × the trailing 2 s maximum of the integrated signal with a
//! 200 ms refractory period. Each detection is localised on the band-passed
//! signal and refined to the raw R apex.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::PhysioError;
use crate::clock::VirtualTime;
use crate::ingest::EcgSample;

pub const SAMPLE_RATE_HZ: usize = 200;
pub const REFRACTORY_MS: u64 = 200;
pub const THRESHOLD_FRACTION: f64 = 0.6;
/// Below this peak-to-peak amplitude (mV) the electrode is treated as disconnected.
pub const FLAT_SIGNAL_MV: f64 = 0.02;

const LP_DELAY: usize = 5;
const HP_LEN: usize = 32;
const HP_DELAY: usize = 16;
const BANDPASS_DELAY: usize = LP_DELAY + HP_DELAY;
const DERIV_DELAY: usize = 2;
const MWI_LEN: usize = 30;
const THRESHOLD_WINDOW: usize = 2 * SAMPLE_RATE_HZ;
const REFRACTORY_SAMPLES: usize = REFRACTORY_MS as usize * SAMPLE_RATE_HZ / 1000;
const REFINE_RADIUS: usize = 5;
/// Ignore integrator activity below this fraction of the segment's upper percentile.
const NOISE_FLOOR_FRACTION: f64 = 0.05;

/// R-peak timestamps, strictly increasing and at least 200 ms apart.
pub fn detect_r_peaks(samples: &[EcgSample]) -> Result<Vec<VirtualTime>, PhysioError> {
    if samples.len() < SAMPLE_RATE_HZ {
        return Err(PhysioError::InsufficientData);
    }
    let raw: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if (hi - lo).is_nan() || hi - lo < FLAT_SIGNAL_MV {
        return Err(PhysioError::FlatSignal);
    }

    let bp = bandpass(&raw);
    let mwi = integrate(&square(&derivative(&bp)));
    let floor = NOISE_FLOOR_FRACTION * upper_percentile(&mwi, 0.995);
    let thresholds = rolling_max(&mwi, THRESHOLD_WINDOW);

    let n = raw.len();
    let mut peaks: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < n {
        let thr = (THRESHOLD_FRACTION * thresholds[i]).max(floor);
        if mwi[i] <= 0.0 || mwi[i] < thr {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && mwi[i] >= (THRESHOLD_FRACTION * thresholds[i]).max(floor) {
            i += 1;
        }
        let end = i - 1;
        // An R apex at raw index p feeds the integrator over p+23 ..= p+52.
        let lead = BANDPASS_DELAY + DERIV_DELAY;
        let lo = start.saturating_sub(lead + MWI_LEN - 1);
        let hi = end.saturating_sub(lead).min(n - 1);
        if lo > hi {
            continue;
        }
        let coarse = (lo..=hi)
            .filter(|p| p + BANDPASS_DELAY < n)
            .max_by(|&a, &b| {
                libm::fabs(bp[a + BANDPASS_DELAY]).total_cmp(&libm::fabs(bp[b + BANDPASS_DELAY]))
            });
        let Some(coarse) = coarse else { continue };
        let apex = refine(&raw, coarse);
        match peaks.last() {
            Some(&last) if apex < last + REFRACTORY_SAMPLES => {}
            _ => peaks.push(apex),
        }
    }
    Ok(peaks.into_iter().map(|p| samples[p].timestamp).collect())
}

fn sample(x: &[f64], idx: isize, before: f64) -> f64 {
    if idx < 0 {
        before
    } else {
        x[idx as usize]
    }
}

fn baseline(x: &[f64]) -> f64 {
    let mut head: Vec<f64> = x.iter().take(SAMPLE_RATE_HZ).copied().collect();
    head.sort_by(f64::total_cmp);
    head[head.len() / 2]
}

/// Triangular low-pass (kernel 1..6..1 / 36) followed by x[n-16] minus the
/// 32-sample moving average. Pre-start samples are held at the initial baseline.
fn bandpass(x: &[f64]) -> Vec<f64> {
    const TRI: [f64; 11] = [1., 2., 3., 4., 5., 6., 5., 4., 3., 2., 1.];
    let base = baseline(x);
    let lp: Vec<f64> = (0..x.len() as isize)
        .map(|n| {
            TRI.iter()
                .enumerate()
                .map(|(k, h)| h * sample(x, n - k as isize, base))
                .sum::<f64>()
                / 36.0
        })
        .collect();
    let mut out = Vec::with_capacity(x.len());
    let mut window: f64 = base * HP_LEN as f64;
    for n in 0..lp.len() as isize {
        window += lp[n as usize] - sample(&lp, n - HP_LEN as isize, base);
        out.push(sample(&lp, n - HP_DELAY as isize, base) - window / HP_LEN as f64);
    }
    out
}

fn derivative(x: &[f64]) -> Vec<f64> {
    (0..x.len() as isize)
        .map(|n| {
            let at = |k: isize| sample(x, n - k, 0.0);
            (2.0 * at(0) + at(1) - at(3) - 2.0 * at(4)) / 8.0
        })
        .collect()
}

fn square(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v * v).collect()
}

fn integrate(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for n in 0..x.len() {
        acc += x[n];
        if n >= MWI_LEN {
            acc -= x[n - MWI_LEN];
        }
        out.push(acc.max(0.0) / MWI_LEN as f64);
    }
    out
}

/// Maximum over the trailing `len` samples (inclusive of the current one).
fn rolling_max(x: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let mut dq: VecDeque<usize> = VecDeque::new();
    for i in 0..x.len() {
        while dq.back().is_some_and(|&j| x[j] <= x[i]) {
            dq.pop_back();
        }
        dq.push_back(i);
        while dq.front().is_some_and(|&j| j + len <= i) {
            dq.pop_front();
        }
        out[i] = x[*dq.front().expect("non-empty")];
    }
    out
}

fn upper_percentile(x: &[f64], q: f64) -> f64 {
    let mut v = x.to_vec();
    let k = ((v.len() - 1) as f64 * q) as usize;
    v.select_nth_unstable_by(k, f64::total_cmp);
    v[k]
}

/// Raw-signal apex near `coarse`: largest deviation from the local mean.
fn refine(raw: &[f64], coarse: usize) -> usize {
    let lo = coarse.saturating_sub(REFINE_RADIUS);
    let hi = (coarse + REFINE_RADIUS).min(raw.len() - 1);
    let ctx_lo = coarse.saturating_sub(8 * REFINE_RADIUS);
    let ctx_hi = (coarse + 8 * REFINE_RADIUS).min(raw.len() - 1);
    let mean = raw[ctx_lo..=ctx_hi].iter().sum::<f64>() / (ctx_hi - ctx_lo + 1) as f64;
    (lo..=hi)
        .max_by(|&a, &b| libm::fabs(raw[a] - mean).total_cmp(&libm::fabs(raw[b] - mean)))
        .unwrap_or(coarse)
}
