//! Pedometer: peak counting on gravity-removed acceleration magnitude.

use alloc::vec::Vec;

use crate::clock::VirtualTime;
use crate::ingest::ImuSample;

pub const STEP_THRESHOLD_MS2: f64 = 1.2;
pub const MIN_STEP_GAP_MS: u64 = 250;
/// Half-width of the centred moving average used as the gravity estimate.
const GRAVITY_HALF_WINDOW_MS: u64 = 500;

fn magnitude(a: [f64; 3]) -> f64 {
    libm::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
}

/// Timestamps of detected steps over the whole sample list.
pub fn detect_steps(samples: &[ImuSample]) -> Vec<VirtualTime> {
    let n = samples.len();
    if n < 3 {
        return Vec::new();
    }
    let mag: Vec<f64> = samples.iter().map(|s| magnitude(s.accel)).collect();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for m in &mag {
        prefix.push(prefix.last().copied().unwrap_or(0.0) + m);
    }
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut dynamic = Vec::with_capacity(n);
    for i in 0..n {
        let t = samples[i].timestamp.0;
        while samples[lo].timestamp.0 + GRAVITY_HALF_WINDOW_MS < t {
            lo += 1;
        }
        while hi < n && samples[hi].timestamp.0 <= t + GRAVITY_HALF_WINDOW_MS {
            hi += 1;
        }
        let gravity = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
        dynamic.push(mag[i] - gravity);
    }

    let mut steps: Vec<VirtualTime> = Vec::new();
    for i in 1..n - 1 {
        let d = dynamic[i];
        if d <= STEP_THRESHOLD_MS2 || d < dynamic[i - 1] || d <= dynamic[i + 1] {
            continue;
        }
        let t = samples[i].timestamp;
        if steps
            .last()
            .is_some_and(|last| t.0 - last.0 < MIN_STEP_GAP_MS)
        {
            continue;
        }
        steps.push(t);
    }
    steps
}

/// Steps whose peak falls in `[start, end)`. Filtering runs over all of
/// `samples`, so counts over disjoint windows add up.
pub fn count_steps(samples: &[ImuSample], window: (VirtualTime, VirtualTime)) -> u32 {
    detect_steps(samples)
        .into_iter()
        .filter(|t| *t >= window.0 && *t < window.1)
        .count() as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still(secs: u64) -> Vec<ImuSample> {
        (0..secs * 50)
            .map(|i| ImuSample {
                timestamp: VirtualTime(i * 20),
                accel: [0.0, 0.0, 9.81],
            })
            .collect()
    }

    #[test]
    fn gravity_only_has_no_steps() {
        let s = still(60);
        assert_eq!(count_steps(&s, (VirtualTime(0), VirtualTime(60_000))), 0);
    }

    #[test]
    fn empty_input() {
        assert_eq!(count_steps(&[], (VirtualTime(0), VirtualTime(1000))), 0);
    }

    #[test]
    fn empty_window() {
        let s = still(5);
        assert_eq!(count_steps(&s, (VirtualTime(100), VirtualTime(100))), 0);
    }
}
