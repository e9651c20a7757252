//! Resolution of spoken times ("tomorrow at 3pm", "in half an hour") against
//! the session wall clock.

use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, TimeDelta, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(rename_all = "snake_case")]
pub enum Unresolved {
    #[error("no time given")]
    Empty,
    #[error("day given without a time of day")]
    NoTimeOfDay,
    #[error("time expression not understood")]
    Unrecognized,
    #[error("resolved time is not in the future")]
    InPast,
}

const WEEKDAYS: [(&str, Weekday); 7] = [
    ("monday", Weekday::Mon),
    ("tuesday", Weekday::Tue),
    ("wednesday", Weekday::Wed),
    ("thursday", Weekday::Thu),
    ("friday", Weekday::Fri),
    ("saturday", Weekday::Sat),
    ("sunday", Weekday::Sun),
];

/// Words that carry no information for resolution.
const FILLER: [&str; 8] = [
    "at", "on", "by", "around", "about", "the", "o'clock", "oclock",
];

fn normalize(text: &str) -> Vec<String> {
    let lower = text
        .to_lowercase()
        .replace("a.m.", "am")
        .replace("p.m.", "pm")
        .replace("half past", "half-past");
    lower
        .split(|c: char| c.is_whitespace() || c == ',' || c == ';')
        .map(|t| t.trim_matches(|c: char| c == '.' || c == '!' || c == '?'))
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Meridiem {
    Am,
    Pm,
}

fn split_meridiem(tok: &str) -> (&str, Option<Meridiem>) {
    if let Some(n) = tok.strip_suffix("am") {
        (n, Some(Meridiem::Am))
    } else if let Some(n) = tok.strip_suffix("pm") {
        (n, Some(Meridiem::Pm))
    } else {
        (tok, None)
    }
}

fn clock_digits(s: &str) -> Option<(u32, u32, bool)> {
    let (h, m, has_minutes) = match s.split_once(':') {
        Some((h, m)) if m.len() == 2 => (h.parse().ok()?, m.parse().ok()?, true),
        Some(_) => return None,
        None => (s.parse().ok()?, 0, false),
    };
    (h < 24 && m < 60).then_some((h, m, has_minutes))
}

/// Hour for a spoken hour without am/pm, assuming working hours: 8 to 11 are
/// morning, 12 is noon, 1 to 7 are afternoon or evening.
fn working_hours(h: u32) -> Option<u32> {
    match h {
        8..=11 => Some(h),
        12 => Some(12),
        1..=7 => Some(h + 12),
        _ => None,
    }
}

/// Parses a clock time starting at `tokens[i]`; returns the time and the
/// number of tokens consumed.
fn parse_clock(tokens: &[String], i: usize) -> Option<(NaiveTime, usize)> {
    let tok = tokens[i].as_str();
    match tok {
        "noon" | "midday" => return Some((NaiveTime::from_hms_opt(12, 0, 0)?, 1)),
        "midnight" => return None,
        _ => {}
    }
    let (digits, mut meridiem) = split_meridiem(tok);
    let (h, m, has_minutes) = clock_digits(digits)?;
    let mut used = 1;
    if meridiem.is_none() {
        if let Some(next) = tokens.get(i + 1) {
            meridiem = match next.as_str() {
                "am" => Some(Meridiem::Am),
                "pm" => Some(Meridiem::Pm),
                _ => None,
            };
            if meridiem.is_some() {
                used = 2;
            }
        }
    }
    let hour = match meridiem {
        Some(_) if !(1..=12).contains(&h) => return None,
        Some(Meridiem::Am) => h % 12,
        Some(Meridiem::Pm) => h % 12 + 12,
        None if has_minutes && (h == 0 || h >= 13) => h,
        None => working_hours(h)?,
    };
    Some((NaiveTime::from_hms_opt(hour, m, 0)?, used))
}

fn parse_offset(tokens: &[String], i: usize) -> Option<(TimeDelta, usize)> {
    // "in <n|a|an|half an> <minute(s)|hour(s)>"
    let rest = &tokens[i..];
    if rest.first().map(String::as_str) != Some("in") {
        return None;
    }
    let (minutes_per_unit, amount, used) = match rest.get(1..)? {
        [a, b, unit, ..] if a == "half" && (b == "an" || b == "a") && unit.starts_with("hour") => {
            (30, 1, 4)
        }
        [n, unit, ..] => {
            let amount: i64 = match n.as_str() {
                "a" | "an" | "one" => 1,
                "two" => 2,
                "three" => 3,
                "five" => 5,
                "ten" => 10,
                "fifteen" => 15,
                "twenty" => 20,
                "thirty" => 30,
                s => s.parse().ok()?,
            };
            let per = if unit.starts_with("min") {
                1
            } else if unit.starts_with("hour") || unit == "hr" || unit == "hrs" {
                60
            } else {
                return None;
            };
            (per, amount, 3)
        }
        _ => return None,
    };
    Some((TimeDelta::minutes(minutes_per_unit * amount), used))
}

fn next_weekday(from: NaiveDate, target: Weekday) -> NaiveDate {
    let ahead = (7 + target.num_days_from_monday() as i64
        - from.weekday().num_days_from_monday() as i64)
        % 7;
    from + TimeDelta::days(if ahead == 0 { 7 } else { ahead })
}

/// Resolves `text` to an absolute wall-clock time after `now`.
///
/// A time of day is required; nothing is filled in by default. A time of day
/// alone refers to today.
pub fn resolve_when(text: &str, now: NaiveDateTime) -> Result<NaiveDateTime, Unresolved> {
    let tokens = normalize(text);
    if tokens.is_empty() {
        return Err(Unresolved::Empty);
    }
    let today = now.date();
    let mut day: Option<NaiveDate> = None;
    let mut time: Option<NaiveTime> = None;
    let mut offset: Option<TimeDelta> = None;
    let mut i = 0;
    while i < tokens.len() {
        let t = tokens[i].as_str();
        if FILLER.contains(&t) || t == "next" || t == "this" {
            i += 1;
            continue;
        }
        if let Some((d, used)) = parse_offset(&tokens, i) {
            offset = Some(d);
            i += used;
            continue;
        }
        let parsed_day = match t {
            "today" => Some(today),
            "tomorrow" => Some(today + TimeDelta::days(1)),
            "day" if tokens.get(i + 1..i + 3) == Some(&["after".into(), "tomorrow".into()]) => {
                i += 2;
                Some(today + TimeDelta::days(2))
            }
            _ => WEEKDAYS
                .iter()
                .find(|(name, _)| t == *name || t.strip_suffix('s') == Some(name))
                .map(|(_, wd)| next_weekday(today, *wd)),
        };
        if let Some(d) = parsed_day {
            if day.replace(d).is_some_and(|prev| prev != d) {
                return Err(Unresolved::Unrecognized);
            }
            i += 1;
            continue;
        }
        if let Some((tm, used)) = parse_clock(&tokens, i) {
            if time.replace(tm).is_some() {
                return Err(Unresolved::Unrecognized);
            }
            i += used;
            continue;
        }
        return Err(Unresolved::Unrecognized);
    }
    let at = match (offset, day, time) {
        (Some(d), None, None) => now + d,
        (Some(_), _, _) => return Err(Unresolved::Unrecognized),
        (None, Some(_), None) => return Err(Unresolved::NoTimeOfDay),
        (None, d, Some(tm)) => d.unwrap_or(today).and_time(tm),
        (None, None, None) => return Err(Unresolved::Unrecognized),
    };
    if at <= now {
        return Err(Unresolved::InPast);
    }
    Ok(at)
}
