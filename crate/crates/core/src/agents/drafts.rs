//! Draft artifacts: unsent RFC 5322 messages and RFC 5545 calendar files.

use alloc::format;
use alloc::string::String;

use chrono::NaiveDateTime;

use super::{CalendarPayload, EmailPayload};

const CRLF: &str = "\r\n";
/// Domain used for Message-ID and UID values.
pub const DRAFT_DOMAIN: &str = "attune.invalid";

fn header_value(s: &str) -> String {
    let flat: String = s
        .chars()
        .map(|c| if c == '\r' || c == '\n' { ' ' } else { c })
        .collect();
    let flat = flat.trim();
    if flat.is_ascii() {
        return flat.into();
    }
    // RFC 2047 Q-encoding.
    let mut out = String::from("=?UTF-8?Q?");
    let mut buf = [0u8; 4];
    for c in flat.chars() {
        match c {
            'a'..='z' | 'A'..='Z' | '0'..='9' | '!' | '*' | '+' | '-' | '/' => out.push(c),
            ' ' => out.push('_'),
            _ => {
                for b in c.encode_utf8(&mut buf).bytes() {
                    out.push_str(&format!("={b:02X}"));
                }
            }
        }
    }
    out.push_str("?=");
    out
}

fn body_lines(body: &str) -> String {
    let mut out = String::new();
    for line in body.lines() {
        // Dot-stuffing is left to transports; only normalize line endings.
        out.push_str(line.trim_end_matches('\r'));
        out.push_str(CRLF);
    }
    out
}

/// An unsent message: no real recipient, marked with `X-Unsent: 1`.
pub fn render_eml(id: &str, email: &EmailPayload, created: NaiveDateTime) -> String {
    let mut out = String::new();
    let mut header = |name: &str, value: &str| {
        out.push_str(name);
        out.push_str(": ");
        out.push_str(value);
        out.push_str(CRLF);
    };
    header("From", "undisclosed-sender:;");
    header("To", "undisclosed-recipients:;");
    if let Some(hint) = &email.recipient_hint {
        header("X-Recipient-Hint", &header_value(hint));
    }
    header("Subject", &header_value(&email.subject));
    header(
        "Date",
        &format!("{} -0000", created.format("%a, %d %b %Y %H:%M:%S")),
    );
    header("Message-ID", &format!("<{id}@{DRAFT_DOMAIN}>"));
    header("X-Unsent", "1");
    header("MIME-Version", "1.0");
    header("Content-Type", "text/plain; charset=utf-8");
    header("Content-Transfer-Encoding", "8bit");
    out.push_str(CRLF);
    out.push_str(&body_lines(&email.body_draft));
    out
}

fn ics_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ';' => out.push_str("\\;"),
            ',' => out.push_str("\\,"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            _ => out.push(c),
        }
    }
    out
}

/// Folds a content line at 75 octets without splitting a UTF-8 sequence.
fn fold(line: &str) -> String {
    let mut out = String::new();
    let mut width = 0;
    for c in line.chars() {
        let len = c.len_utf8();
        if width + len > 75 {
            out.push_str(CRLF);
            out.push(' ');
            width = 1;
        }
        out.push(c);
        width += len;
    }
    out.push_str(CRLF);
    out
}

fn ics_stamp(t: NaiveDateTime) -> String {
    format!("{}", t.format("%Y%m%dT%H%M%S"))
}

/// A tentative event with a floating (local wall-clock) start.
///
/// Returns `None` when the start time is unresolved.
pub fn render_ics(id: &str, event: &CalendarPayload, created: NaiveDateTime) -> Option<String> {
    let start = event.start?;
    let mut lines = alloc::vec![
        String::from("BEGIN:VCALENDAR"),
        String::from("VERSION:2.0"),
        String::from("PRODID:-//attune//task agents//EN"),
        String::from("BEGIN:VEVENT"),
        format!("UID:{id}@{DRAFT_DOMAIN}"),
        format!("DTSTAMP:{}Z", ics_stamp(created)),
        format!("DTSTART:{}", ics_stamp(start)),
    ];
    if let Some(min) = event.duration_minutes {
        lines.push(format!("DURATION:PT{min}M"));
    }
    lines.push(format!("SUMMARY:{}", ics_text(&event.title)));
    if !event.attendees_hint.is_empty() {
        lines.push(format!(
            "DESCRIPTION:{}",
            ics_text(&format!(
                "Attendees to invite: {}",
                event.attendees_hint.join(", ")
            ))
        ));
    }
    lines.push(String::from("STATUS:TENTATIVE"));
    lines.push(String::from("END:VEVENT"));
    lines.push(String::from("END:VCALENDAR"));
    Some(lines.iter().map(|l| fold(l)).collect())
}
