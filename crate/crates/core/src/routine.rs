//! Routine Table: per-interval minutes by activity class plus physiology.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;
use core::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{duration_minutes, duration_ms, TimeOfDay, VirtualTime};
use crate::perception::{ActivityClass, FrameInsight};
use crate::physio::{classify_stress, PhysioWindow, StressLevel};

/// Tolerance for minute bookkeeping.
pub const MINUTES_EPSILON: f64 = 1e-9;

pub const PROMPT_HEADER: &str =
    "Time,Desk Work (min),Commuting (min),Eating (min),In-Meeting (min)";
pub const EXPORT_HEADER: &str = "Time Interval,Desk Work (min),Commuting (min),Eating (min),In Meeting (min),HRV (pNN50),HR,Number of Steps";

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ActivityMinutes {
    pub desk_work: f64,
    pub commuting: f64,
    pub eating: f64,
    pub in_meeting: f64,
    pub other: f64,
}

impl ActivityMinutes {
    pub fn get(&self, class: ActivityClass) -> f64 {
        match class {
            ActivityClass::DeskWork => self.desk_work,
            ActivityClass::Commuting => self.commuting,
            ActivityClass::Eating => self.eating,
            ActivityClass::InMeeting => self.in_meeting,
            ActivityClass::Other => self.other,
        }
    }

    pub fn get_mut(&mut self, class: ActivityClass) -> &mut f64 {
        match class {
            ActivityClass::DeskWork => &mut self.desk_work,
            ActivityClass::Commuting => &mut self.commuting,
            ActivityClass::Eating => &mut self.eating,
            ActivityClass::InMeeting => &mut self.in_meeting,
            ActivityClass::Other => &mut self.other,
        }
    }

    pub fn total(&self) -> f64 {
        self.desk_work + self.commuting + self.eating + self.in_meeting + self.other
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutineRow {
    pub start: VirtualTime,
    pub end: VirtualTime,
    pub start_time: TimeOfDay,
    pub end_time: TimeOfDay,
    pub minutes: ActivityMinutes,
    /// Row length not covered by any perceived frame.
    pub gap_minutes: f64,
    pub pnn50: Option<f64>,
    pub mean_hr: Option<f64>,
    pub steps: u32,
}

impl RoutineRow {
    pub fn label(&self) -> String {
        format!("{}-{}", self.start_time, self.end_time)
    }

    pub fn length_minutes(&self) -> f64 {
        (self.end.0 - self.start.0) as f64 / 60_000.0
    }

    pub fn stress(&self) -> Option<StressLevel> {
        self.pnn50.map(classify_stress)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutineError {
    #[error("insight at {at} precedes the open row starting at {row_start}")]
    StaleInsight {
        at: VirtualTime,
        row_start: VirtualTime,
    },
    #[error("timestamp {at} is past the open row ending at {row_end}")]
    BeyondOpenRow {
        at: VirtualTime,
        row_end: VirtualTime,
    },
    #[error("row starting at {row_start} would exceed its length")]
    Overfull { row_start: VirtualTime },
    #[error("physiology window does not match the open row")]
    WindowMismatch,
    #[error("routine table is empty")]
    EmptyTable,
    #[error("table invariant violated: {0}")]
    Invariant(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutineTable {
    pub session_start: TimeOfDay,
    pub row_length_ms: u64,
    pub rows: Vec<RoutineRow>,
}

impl RoutineTable {
    pub fn new(session_start: TimeOfDay, row_length: Duration) -> Self {
        RoutineTable {
            session_start,
            row_length_ms: duration_ms(row_length),
            rows: Vec::new(),
        }
    }

    pub fn row_length(&self) -> Duration {
        Duration::from_millis(self.row_length_ms)
    }

    pub fn latest_stress(&self) -> Option<StressLevel> {
        self.rows.iter().rev().find_map(|r| r.stress())
    }

    /// Checks contiguity, uniform length and per-row minute conservation.
    pub fn validate(&self) -> Result<(), RoutineError> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.end.0 - row.start.0 != self.row_length_ms {
                return Err(RoutineError::Invariant("non-uniform row length"));
            }
            if i > 0 && self.rows[i - 1].end != row.start {
                return Err(RoutineError::Invariant("rows are not contiguous"));
            }
            let sum = row.minutes.total();
            if sum > row.length_minutes() + MINUTES_EPSILON
                || libm::fabs(sum + row.gap_minutes - row.length_minutes()) > MINUTES_EPSILON
            {
                return Err(RoutineError::Invariant("activity minutes not conserved"));
            }
        }
        Ok(())
    }
}

/// Accumulates insights into the open row and seals rows into a table.
#[derive(Debug, Clone)]
pub struct RoutineBuilder {
    table: RoutineTable,
    open_start: VirtualTime,
    minutes: ActivityMinutes,
}

impl RoutineBuilder {
    pub fn new(session_start: TimeOfDay, row_length: Duration) -> Self {
        RoutineBuilder {
            table: RoutineTable::new(session_start, row_length),
            open_start: VirtualTime::ZERO,
            minutes: ActivityMinutes::default(),
        }
    }

    pub fn open_window(&self) -> (VirtualTime, VirtualTime) {
        (self.open_start, self.open_start + self.table.row_length())
    }

    pub fn open_minutes(&self) -> &ActivityMinutes {
        &self.minutes
    }

    pub fn table(&self) -> &RoutineTable {
        &self.table
    }

    pub fn into_table(self) -> RoutineTable {
        self.table
    }

    /// Credits `cadence` minutes to the insight's class in the row containing
    /// its timestamp.
    pub fn accumulate(
        &mut self,
        insight: &FrameInsight,
        cadence: Duration,
    ) -> Result<(), RoutineError> {
        let (start, end) = self.open_window();
        if insight.timestamp < start {
            return Err(RoutineError::StaleInsight {
                at: insight.timestamp,
                row_start: start,
            });
        }
        if insight.timestamp >= end {
            return Err(RoutineError::BeyondOpenRow {
                at: insight.timestamp,
                row_end: end,
            });
        }
        let add = duration_minutes(cadence);
        let length = duration_minutes(self.table.row_length());
        if self.minutes.total() + add > length + MINUTES_EPSILON {
            return Err(RoutineError::Overfull { row_start: start });
        }
        *self.minutes.get_mut(insight.activity_class) += add;
        Ok(())
    }

    /// Seals the open row with `physio`, which must cover exactly that row.
    pub fn close_row(&mut self, physio: &PhysioWindow) -> Result<RoutineRow, RoutineError> {
        let (start, end) = self.open_window();
        if physio.window != (start, end) {
            return Err(RoutineError::WindowMismatch);
        }
        let length = duration_minutes(self.table.row_length());
        let minutes = core::mem::take(&mut self.minutes);
        let offset = Duration::from_millis(start.0);
        let row = RoutineRow {
            start,
            end,
            start_time: self.table.session_start.advanced(offset),
            end_time: self
                .table
                .session_start
                .advanced(offset + self.table.row_length()),
            minutes,
            gap_minutes: length - minutes.total(),
            pnn50: physio.pnn50.filter(|_| physio.valid),
            mean_hr: physio.mean_hr.filter(|_| physio.valid),
            steps: physio.steps,
        };
        self.table.rows.push(row.clone());
        self.open_start = end;
        Ok(row)
    }
}

/// What to render in place of raw physiology.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysioColumns {
    /// Activity minutes only.
    #[default]
    Exclude,
    /// `HRV (pNN50)` and `HR` columns.
    Raw,
    /// A per-row `stress_level` token (high/moderate/low/unknown).
    StressToken,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub physio: PhysioColumns,
    /// Adds `Other (min)` and `Steps` columns.
    pub extended: bool,
}

impl RenderOptions {
    pub fn activities_only() -> Self {
        RenderOptions::default()
    }

    pub fn with_physio(physio: PhysioColumns) -> Self {
        RenderOptions {
            physio,
            extended: false,
        }
    }
}

fn whole(minutes: f64) -> i64 {
    libm::round(minutes) as i64
}

/// CSV-style block of the last `last_n` rows, minutes rounded to whole numbers.
pub fn render_for_prompt(
    table: &RoutineTable,
    last_n: usize,
    options: RenderOptions,
) -> Result<String, RoutineError> {
    if table.rows.is_empty() {
        return Err(RoutineError::EmptyTable);
    }
    let mut out = String::from(PROMPT_HEADER);
    if options.extended {
        out.push_str(",Other (min),Steps");
    }
    match options.physio {
        PhysioColumns::Exclude => {}
        PhysioColumns::Raw => out.push_str(",HRV (pNN50),HR"),
        PhysioColumns::StressToken => out.push_str(", stress_level"),
    }
    let skip = table.rows.len().saturating_sub(last_n.max(1));
    for row in &table.rows[skip..] {
        let m = &row.minutes;
        let _ = write!(
            out,
            "\n{},{},{},{},{}",
            row.label(),
            whole(m.desk_work),
            whole(m.commuting),
            whole(m.eating),
            whole(m.in_meeting)
        );
        if options.extended {
            let _ = write!(out, ",{},{}", whole(m.other), row.steps);
        }
        match options.physio {
            PhysioColumns::Exclude => {}
            PhysioColumns::Raw => {
                match row.pnn50 {
                    Some(p) => {
                        let _ = write!(out, ",{p:.2}");
                    }
                    None => out.push_str(",NA"),
                }
                match row.mean_hr {
                    Some(hr) => {
                        let _ = write!(out, ",{}", libm::round(hr) as i64);
                    }
                    None => out.push_str(",NA"),
                }
            }
            PhysioColumns::StressToken => {
                out.push(',');
                out.push_str(row.stress().map_or("unknown", StressLevel::as_lower));
            }
        }
    }
    Ok(out)
}

/// Full-precision CSV export with the routine table headers. `extended`
/// appends `Other (min)` and `Gap (min)`.
pub fn export_csv(table: &RoutineTable, extended: bool) -> String {
    let mut out = String::from(EXPORT_HEADER);
    if extended {
        out.push_str(",Other (min),Gap (min)");
    }
    out.push('\n');
    for row in &table.rows {
        let m = &row.minutes;
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.label(),
            m.desk_work,
            m.commuting,
            m.eating,
            m.in_meeting,
            opt(row.pnn50),
            opt(row.mean_hr),
            row.steps
        );
        if extended {
            let _ = write!(out, ",{},{}", m.other, row.gap_minutes);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::Criticality;

    fn insight(ts: u64, class: ActivityClass) -> FrameInsight {
        FrameInsight {
            timestamp: VirtualTime(ts),
            activity_description: "x".into(),
            activity_class: class,
            criticality: Criticality::Low,
            surrounding: "desk".into(),
            source_caption: "c".into(),
        }
    }

    fn builder(row_mins: u64) -> RoutineBuilder {
        RoutineBuilder::new(
            TimeOfDay::new(10, 0).unwrap(),
            Duration::from_secs(row_mins * 60),
        )
    }

    fn physio(window: (VirtualTime, VirtualTime), pnn50: f64, hr: f64, steps: u32) -> PhysioWindow {
        PhysioWindow {
            window,
            pnn50: Some(pnn50),
            mean_hr: Some(hr),
            steps,
            valid: true,
            diagnostics: Default::default(),
        }
    }

    #[test]
    fn full_coverage_row() {
        let mut b = builder(15);
        for k in 0..15 {
            b.accumulate(
                &insight(k * 60_000, ActivityClass::DeskWork),
                Duration::from_secs(60),
            )
            .unwrap();
        }
        assert_eq!(b.open_minutes().desk_work, 15.0);
    }

    #[test]
    fn mixed_row_counts() {
        let mut b = builder(15);
        for k in 0..15 {
            let class = if k < 10 {
                ActivityClass::DeskWork
            } else {
                ActivityClass::Eating
            };
            b.accumulate(&insight(k * 60_000, class), Duration::from_secs(60))
                .unwrap();
        }
        assert_eq!(b.open_minutes().desk_work, 10.0);
        assert_eq!(b.open_minutes().eating, 5.0);
    }

    #[test]
    fn stale_and_future_insights_rejected() {
        let mut b = builder(15);
        let w = b.open_window();
        b.close_row(&PhysioWindow::steps_only(w, 0)).unwrap();
        assert!(matches!(
            b.accumulate(&insight(0, ActivityClass::Other), Duration::from_secs(60)),
            Err(RoutineError::StaleInsight { .. })
        ));
        assert!(matches!(
            b.accumulate(
                &insight(1_800_000, ActivityClass::Other),
                Duration::from_secs(60)
            ),
            Err(RoutineError::BeyondOpenRow { .. })
        ));
    }

    #[test]
    fn empty_row_is_all_gap() {
        let mut b = builder(15);
        let w = b.open_window();
        let row = b.close_row(&PhysioWindow::steps_only(w, 0)).unwrap();
        assert_eq!(row.minutes.total(), 0.0);
        assert_eq!(row.gap_minutes, 15.0);
        assert_eq!(row.pnn50, None);
        assert_eq!(row.steps, 0);
    }

    #[test]
    fn window_mismatch() {
        let mut b = builder(15);
        let p = PhysioWindow::steps_only((VirtualTime(0), VirtualTime(1)), 0);
        assert_eq!(b.close_row(&p), Err(RoutineError::WindowMismatch));
    }

    #[test]
    fn workplace_example_row_three() {
        let mut b = builder(30);
        let w = b.open_window();
        b.close_row(&PhysioWindow::steps_only(w, 0)).unwrap();
        b.close_row(&PhysioWindow::steps_only(b.open_window(), 0))
            .unwrap();
        let (start, _) = b.open_window();
        let mut t = start.0;
        for (class, n) in [
            (ActivityClass::DeskWork, 11),
            (ActivityClass::Commuting, 2),
            (ActivityClass::InMeeting, 17),
        ] {
            for _ in 0..n {
                b.accumulate(&insight(t, class), Duration::from_secs(60))
                    .unwrap();
                t += 60_000;
            }
        }
        let row = b
            .close_row(&physio(b.open_window(), 27.83, 75.0, 157))
            .unwrap();
        assert_eq!(row.label(), "11:00-11:30");
        assert_eq!(row.minutes.desk_work, 11.0);
        assert_eq!(row.minutes.commuting, 2.0);
        assert_eq!(row.minutes.in_meeting, 17.0);
        assert_eq!(row.pnn50, Some(27.83));
        assert_eq!(row.mean_hr, Some(75.0));
        assert_eq!(row.steps, 157);
        assert_eq!(row.gap_minutes, 0.0);
    }

    #[test]
    fn render_toggles_columns() {
        let mut b = builder(15);
        b.accumulate(
            &insight(0, ActivityClass::DeskWork),
            Duration::from_secs(600),
        )
        .unwrap();
        b.close_row(&physio(b.open_window(), 15.0, 80.4, 12))
            .unwrap();
        let t = b.table();
        assert_eq!(
            render_for_prompt(t, 1, RenderOptions::activities_only()).unwrap(),
            "Time,Desk Work (min),Commuting (min),Eating (min),In-Meeting (min)\n10:00-10:15,10,0,0,0"
        );
        assert_eq!(
            render_for_prompt(t, 1, RenderOptions::with_physio(PhysioColumns::Raw)).unwrap(),
            "Time,Desk Work (min),Commuting (min),Eating (min),In-Meeting (min),HRV (pNN50),HR\n10:00-10:15,10,0,0,0,15.00,80"
        );
        assert!(
            render_for_prompt(t, 1, RenderOptions::with_physio(PhysioColumns::StressToken))
                .unwrap()
                .ends_with(",high")
        );
        assert_eq!(
            render_for_prompt(t, 50, RenderOptions::default())
                .unwrap()
                .lines()
                .count(),
            2
        );
    }

    #[test]
    fn render_empty_table() {
        let t = RoutineTable::new(TimeOfDay::new(9, 0).unwrap(), Duration::from_secs(900));
        assert_eq!(
            render_for_prompt(&t, 1, RenderOptions::default()),
            Err(RoutineError::EmptyTable)
        );
    }

    #[test]
    fn overfull_row_rejected() {
        let mut b = builder(1);
        b.accumulate(
            &insight(0, ActivityClass::DeskWork),
            Duration::from_secs(60),
        )
        .unwrap();
        assert!(matches!(
            b.accumulate(
                &insight(30_000, ActivityClass::DeskWork),
                Duration::from_secs(60)
            ),
            Err(RoutineError::Overfull { .. })
        ));
    }
}
