//! Step-by-step collection session over a plan document, checkpointed as an
//! event log.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::strategies::PlanDocument;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionEvent {
    DemoDone,
    SkipEntry,
    Status,
}

impl std::str::FromStr for SessionEvent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "demo_done" => Ok(Self::DemoDone),
            "skip_entry" => Ok(Self::SkipEntry),
            "status" => Ok(Self::Status),
            _ => Err(format!("unknown session event `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Change {
    pub factor: String,
    pub from: String,
    pub to: String,
}

impl fmt::Display for Change {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "change {}: {} → {}", self.factor, self.from, self.to)
    }
}

/// Factor changes needed to go from one entry's config to another's.
pub fn diff(from: &BTreeMap<String, String>, to: &BTreeMap<String, String>) -> Vec<Change> {
    to.iter()
        .filter_map(|(factor, value)| {
            let old = from.get(factor)?;
            (old != value).then(|| Change {
                factor: factor.clone(),
                from: old.clone(),
                to: value.clone(),
            })
        })
        .collect()
}

/// Initial environment setup for the first entry, one line per factor.
pub fn setup_instructions(plan: &PlanDocument) -> Vec<String> {
    plan.entries
        .first()
        .map(|e| e.config.iter().map(|(k, v)| format!("set {k} = {v}")).collect())
        .unwrap_or_default()
}

pub fn plan_hash(plan: &PlanDocument) -> String {
    let digest = Sha256::digest(plan.to_json().as_bytes());
    hex::encode(&digest[..8])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionState {
    pub plan_hash: String,
    pub cursor: usize,
    pub demos_done: Vec<usize>,
    pub events: Vec<SessionEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutput {
    pub changes: Vec<Change>,
    pub text: String,
}

impl SessionState {
    pub fn start(plan: &PlanDocument) -> Result<Self> {
        if plan.entries.is_empty() {
            return Err(Error::EmptyPlan);
        }
        let mut state = Self {
            plan_hash: plan_hash(plan),
            cursor: 0,
            demos_done: vec![0; plan.entries.len()],
            events: Vec::new(),
        };
        // entries with a zero quota are passed over from the start
        state.settle(plan, &mut Vec::new(), &mut Vec::new());
        Ok(state)
    }

    pub fn is_complete(&self) -> bool {
        self.cursor >= self.demos_done.len()
    }

    pub fn status_line(&self, plan: &PlanDocument) -> String {
        if self.is_complete() {
            return "session complete".into();
        }
        let entry = &plan.entries[self.cursor];
        format!(
            "entry {}/{}, config = {}, {}/{} demos",
            self.cursor + 1,
            plan.entries.len(),
            describe_config(plan, &entry.config),
            self.demos_done[self.cursor],
            entry.demos
        )
    }

    pub fn step(&mut self, plan: &PlanDocument, event: SessionEvent) -> Result<StepOutput> {
        if event != SessionEvent::Status && self.is_complete() {
            return Err(Error::SessionComplete);
        }
        let mut changes = Vec::new();
        let mut lines = Vec::new();
        match event {
            SessionEvent::Status => {}
            SessionEvent::DemoDone => {
                self.demos_done[self.cursor] += 1;
                self.settle(plan, &mut changes, &mut lines);
            }
            SessionEvent::SkipEntry => {
                lines.push(format!("skipped entry {}", self.cursor + 1));
                self.advance(plan, &mut changes, &mut lines);
                self.settle(plan, &mut changes, &mut lines);
            }
        }
        self.events.push(event);
        lines.push(self.status_line(plan));
        Ok(StepOutput {
            changes,
            text: lines.join("\n"),
        })
    }

    /// Moves past every entry whose quota is met.
    fn settle(&mut self, plan: &PlanDocument, changes: &mut Vec<Change>, lines: &mut Vec<String>) {
        while !self.is_complete() && self.demos_done[self.cursor] >= plan.entries[self.cursor].demos {
            self.advance(plan, changes, lines);
        }
    }

    fn advance(&mut self, plan: &PlanDocument, changes: &mut Vec<Change>, lines: &mut Vec<String>) {
        let from = &plan.entries[self.cursor].config;
        self.cursor += 1;
        if let Some(next) = plan.entries.get(self.cursor) {
            for change in diff(from, &next.config) {
                lines.push(change.to_string());
                changes.push(change);
            }
        }
    }

    pub fn replay(plan: &PlanDocument, events: &[SessionEvent]) -> Result<Self> {
        let mut state = Self::start(plan)?;
        for &event in events {
            state.step(plan, event)?;
        }
        Ok(state)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session state serializes") + "\n"
    }

    /// Loads a checkpoint and checks it against the plan and its own event
    /// log.
    pub fn load(text: &str, plan: &PlanDocument) -> Result<Self> {
        let corrupt = |reason: String| Error::CorruptCheckpoint(reason);
        let state: Self = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        if state.plan_hash != plan_hash(plan) {
            return Err(corrupt(format!(
                "checkpoint belongs to plan {}, not {}",
                state.plan_hash,
                plan_hash(plan)
            )));
        }
        if state.demos_done.len() != plan.entries.len() {
            return Err(corrupt(format!(
                "{} entry counts for a plan of {} entries",
                state.demos_done.len(),
                plan.entries.len()
            )));
        }
        let replayed = Self::replay(plan, &state.events).map_err(|e| corrupt(e.to_string()))?;
        if replayed != state {
            return Err(corrupt("state disagrees with its event log".into()));
        }
        Ok(state)
    }
}

fn describe_config(plan: &PlanDocument, config: &BTreeMap<String, String>) -> String {
    match &plan.base {
        Some(base) => {
            let off: Vec<String> = config
                .iter()
                .filter(|(k, v)| base.get(*k) != Some(*v))
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            if off.is_empty() {
                "f*".into()
            } else {
                format!("f* with {}", off.join(", "))
            }
        }
        None => config
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(", "),
    }
}
