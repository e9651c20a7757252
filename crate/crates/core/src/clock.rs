//! Virtual time base shared by trace replay and every pipeline cadence.

use core::fmt;
use core::ops::{Add, Sub};
use core::time::Duration;

use serde::{Deserialize, Serialize};

/// Milliseconds since session start on the virtual clock.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct VirtualTime(pub u64);

impl VirtualTime {
    pub const ZERO: VirtualTime = VirtualTime(0);

    pub const fn from_millis(ms: u64) -> Self {
        VirtualTime(ms)
    }

    pub const fn from_secs(s: u64) -> Self {
        VirtualTime(s * 1000)
    }

    pub const fn from_mins(m: u64) -> Self {
        VirtualTime(m * 60_000)
    }

    pub const fn as_millis(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: VirtualTime) -> Duration {
        Duration::from_millis(self.0.saturating_sub(other.0))
    }

    /// Largest multiple of `step` that is `<= self`.
    pub fn floor_to(self, step: Duration) -> VirtualTime {
        let step = duration_ms(step).max(1);
        VirtualTime(self.0 / step * step)
    }

    /// Smallest multiple of `step` that is `>= self`.
    pub fn ceil_to(self, step: Duration) -> VirtualTime {
        let step = duration_ms(step).max(1);
        VirtualTime(self.0.div_ceil(step) * step)
    }
}

impl Add<Duration> for VirtualTime {
    type Output = VirtualTime;
    fn add(self, rhs: Duration) -> VirtualTime {
        VirtualTime(self.0 + duration_ms(rhs))
    }
}

impl Sub<Duration> for VirtualTime {
    type Output = VirtualTime;
    fn sub(self, rhs: Duration) -> VirtualTime {
        VirtualTime(self.0.saturating_sub(duration_ms(rhs)))
    }
}

impl fmt::Display for VirtualTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

pub fn duration_ms(d: Duration) -> u64 {
    d.as_millis() as u64
}

pub fn duration_minutes(d: Duration) -> f64 {
    d.as_millis() as f64 / 60_000.0
}

/// Local wall-clock time of day, in minutes after midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "alloc::string::String", into = "alloc::string::String")]
pub struct TimeOfDay {
    minutes: u32,
}

impl TimeOfDay {
    pub fn new(hour: u32, minute: u32) -> Option<Self> {
        (hour < 24 && minute < 60).then_some(TimeOfDay {
            minutes: hour * 60 + minute,
        })
    }

    pub fn hour(self) -> u32 {
        self.minutes / 60
    }

    pub fn minute(self) -> u32 {
        self.minutes % 60
    }

    /// Time of day reached `offset` after `self`, wrapping at midnight.
    pub fn advanced(self, offset: Duration) -> TimeOfDay {
        let add = (offset.as_secs() / 60) % (24 * 60);
        TimeOfDay {
            minutes: ((self.minutes as u64 + add) % (24 * 60)) as u32,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let (h, m) = s.trim().split_once(':')?;
        TimeOfDay::new(h.parse().ok()?, m.parse().ok()?)
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.hour(), self.minute())
    }
}

impl TryFrom<alloc::string::String> for TimeOfDay {
    type Error = alloc::string::String;
    fn try_from(s: alloc::string::String) -> Result<Self, Self::Error> {
        TimeOfDay::parse(&s).ok_or_else(|| alloc::format!("invalid time of day `{s}`"))
    }
}

impl From<TimeOfDay> for alloc::string::String {
    fn from(t: TimeOfDay) -> Self {
        alloc::format!("{t}")
    }
}
