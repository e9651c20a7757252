//! Built-in tool handlers. They only write draft files into the outbox
//! directory; nothing is sent anywhere.

use std::path::{Path, PathBuf};

use attune_core::agents::drafts::{render_eml, render_ics};
use attune_core::agents::{
    ActionItem, ActionKind, ActionPayload, HandlerDescriptor, RegistryError, ToolHandler,
    ToolRegistry,
};
use chrono::{NaiveDateTime, TimeDelta};

pub const HANDLER_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where drafts go and how virtual time maps to wall-clock time.
#[derive(Debug, Clone)]
pub struct Outbox {
    pub dir: PathBuf,
    /// Wall-clock time at virtual time zero.
    pub origin: NaiveDateTime,
}

impl Outbox {
    pub fn new(dir: &Path, origin: NaiveDateTime) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Outbox {
            dir: dir.to_owned(),
            origin,
        })
    }

    /// Wall-clock time of the end of the item's source segment.
    pub fn created_at(&self, item: &ActionItem) -> NaiveDateTime {
        self.origin + TimeDelta::milliseconds(item.source_segment.end.0 as i64)
    }

    /// Writes `<id>.<ext>` and returns the file name.
    fn write(&self, id: &str, ext: &str, contents: &str) -> Result<String, String> {
        let name = format!("{id}.{ext}");
        std::fs::write(self.dir.join(&name), contents)
            .map_err(|e| format!("cannot write {name}: {e}"))?;
        Ok(name)
    }
}

pub struct EmailDraftHandler(pub Outbox);

impl ToolHandler for EmailDraftHandler {
    fn descriptor(&self) -> HandlerDescriptor {
        HandlerDescriptor {
            name: "email-draft".into(),
            version: HANDLER_VERSION.into(),
            kind: ActionKind::Email,
        }
    }

    fn handle(&mut self, item: &ActionItem) -> Result<String, String> {
        let ActionPayload::Email(email) = &item.payload else {
            return Err(format!("{} is not an email item", item.id));
        };
        self.0.write(
            &item.id,
            "eml",
            &render_eml(&item.id, email, self.0.created_at(item)),
        )
    }
}

pub struct CalendarDraftHandler(pub Outbox);

impl ToolHandler for CalendarDraftHandler {
    fn descriptor(&self) -> HandlerDescriptor {
        HandlerDescriptor {
            name: "calendar-draft".into(),
            version: HANDLER_VERSION.into(),
            kind: ActionKind::CalendarEvent,
        }
    }

    fn handle(&mut self, item: &ActionItem) -> Result<String, String> {
        let ActionPayload::CalendarEvent(event) = &item.payload else {
            return Err(format!("{} is not a calendar item", item.id));
        };
        let ics = render_ics(&item.id, event, self.0.created_at(item)).ok_or_else(|| {
            format!(
                "start time {:?} unresolved: {}",
                event.when_text,
                event
                    .unresolved
                    .map(|u| u.to_string())
                    .unwrap_or_else(|| "unknown".into())
            )
        })?;
        self.0.write(&item.id, "ics", &ics)
    }
}

/// Handler for user-registered agents: drops the item as JSON into the
/// outbox for an external process to pick up.
pub struct JsonDropHandler {
    pub descriptor: HandlerDescriptor,
    pub outbox: Outbox,
}

impl ToolHandler for JsonDropHandler {
    fn descriptor(&self) -> HandlerDescriptor {
        self.descriptor.clone()
    }

    fn handle(&mut self, item: &ActionItem) -> Result<String, String> {
        let json = serde_json::to_string_pretty(item).map_err(|e| e.to_string())? + "\n";
        self.outbox.write(&item.id, "json", &json)
    }
}

/// Registry with the email and calendar draft handlers.
pub fn builtin_registry(outbox: &Outbox) -> Result<ToolRegistry, RegistryError> {
    let mut r = ToolRegistry::new();
    r.register(Box::new(EmailDraftHandler(outbox.clone())))?;
    r.register(Box::new(CalendarDraftHandler(outbox.clone())))?;
    Ok(r)
}
