//! Guided label selection: one yes/no question at a time down a decision
//! tree, ending in an automatically selected option.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{CodeSetConfig, WizardFlow, WizardNode};
use crate::rules::{self, ExampleKind, Origin, Resolved, RuleError, SelectedValue, SelectionSet};

/// Idle time after which a session expires, in milliseconds.
pub const SESSION_TTL_MS: u64 = 30 * 60 * 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WizardError {
    #[error("category `{category_id}` has no wizard")]
    NoWizard { category_id: String },
    #[error("wizard session already finished")]
    Finished,
    #[error("wizard session is at its first question")]
    AtRoot,
    #[error(transparent)]
    Rule(#[from] RuleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrailStep {
    pub question: String,
    pub answer: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WizardResult {
    pub category_id: String,
    pub option_id: String,
    /// Always true: the UI announces the automatic selection.
    pub notify: bool,
    pub trail: Vec<TrailStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WizardStep {
    Question(String),
    Result(WizardResult),
}

/// A walk through one category's flow. The session owns a copy of the flow,
/// so it stays valid independently of the config it was started from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WizardSession {
    pub session_id: String,
    flow: WizardFlow,
    answers: Vec<bool>,
    trail: Vec<TrailStep>,
}

impl WizardSession {
    /// Opens a session at the root of the category's flow. A flow whose root
    /// is already an outcome yields a finished session.
    pub fn start(code_set: &CodeSetConfig, category_id: &str) -> Result<Self, WizardError> {
        let flow = code_set
            .wizard(category_id)
            .ok_or_else(|| WizardError::NoWizard {
                category_id: category_id.to_string(),
            })?;
        Ok(WizardSession {
            session_id: uuid::Uuid::new_v4().to_string(),
            flow: flow.clone(),
            answers: Vec::new(),
            trail: Vec::new(),
        })
    }

    /// Like [`start`](Self::start), but refuses categories that are hidden for
    /// this example.
    pub fn start_checked(
        code_set: &CodeSetConfig,
        selections: &SelectionSet,
        kind: ExampleKind,
        category_id: &str,
    ) -> Result<Self, WizardError> {
        let session = Self::start(code_set, category_id)?;
        let state = rules::effective_state(code_set, selections, kind)?;
        if !state.is_visible(category_id) {
            return Err(RuleError::HiddenCategory {
                category_id: category_id.to_string(),
            }
            .into());
        }
        Ok(session)
    }

    pub fn category_id(&self) -> &str {
        &self.flow.category_id
    }

    fn current(&self) -> &WizardNode {
        self.flow
            .root
            .follow(&self.answers)
            .expect("answers always follow the tree")
    }

    pub fn status(&self) -> SessionStatus {
        match self.current() {
            WizardNode::Question { .. } => SessionStatus::Active,
            WizardNode::Outcome { .. } => SessionStatus::Finished,
        }
    }

    pub fn trail(&self) -> &[TrailStep] {
        &self.trail
    }

    /// The question awaiting an answer, if the session is active.
    pub fn question(&self) -> Option<&str> {
        match self.current() {
            WizardNode::Question { text, .. } => Some(text),
            WizardNode::Outcome { .. } => None,
        }
    }

    /// The outcome, once the session has finished.
    pub fn result(&self) -> Option<WizardResult> {
        match self.current() {
            WizardNode::Outcome { option_id } => Some(WizardResult {
                category_id: self.flow.category_id.clone(),
                option_id: option_id.clone(),
                notify: true,
                trail: self.trail.clone(),
            }),
            WizardNode::Question { .. } => None,
        }
    }

    /// What the client should show now.
    pub fn step(&self) -> WizardStep {
        match self.result() {
            Some(result) => WizardStep::Result(result),
            None => WizardStep::Question(self.question().unwrap_or_default().to_string()),
        }
    }

    pub fn answer(&mut self, answer: bool) -> Result<WizardStep, WizardError> {
        let WizardNode::Question { text, .. } = self.current() else {
            return Err(WizardError::Finished);
        };
        self.trail.push(TrailStep {
            question: text.clone(),
            answer,
        });
        self.answers.push(answer);
        Ok(self.step())
    }

    /// Steps back one question, reopening a finished session.
    pub fn back(&mut self) -> Result<(), WizardError> {
        if self.answers.pop().is_none() {
            return Err(WizardError::AtRoot);
        }
        self.trail.pop();
        Ok(())
    }
}

/// Enters a wizard outcome into the selections (origin `auto_wizard`) and
/// runs the rule cascade.
pub fn apply_result(
    code_set: &CodeSetConfig,
    selections: &SelectionSet,
    kind: ExampleKind,
    result: &WizardResult,
) -> Result<Resolved, WizardError> {
    Ok(rules::apply_selection_as(
        code_set,
        selections,
        kind,
        &result.category_id,
        &SelectedValue::Single(result.option_id.clone()),
        true,
        Origin::AutoWizard,
    )?)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("wizard session not found")]
    NotFound,
    #[error("wizard session expired")]
    Expired,
}

#[derive(Debug, Clone)]
pub struct SessionSlot<K> {
    pub key: K,
    pub session: WizardSession,
    last_used_ms: u64,
}

/// Server-side sessions, one per key (annotator, example, category). Starting
/// a new session for a key retires the previous one. Idle sessions expire.
#[derive(Debug)]
pub struct SessionRegistry<K> {
    ttl_ms: u64,
    slots: HashMap<String, SessionSlot<K>>,
    by_key: HashMap<K, String>,
    retired: HashMap<String, u64>,
}

impl<K: Clone + Eq + Hash> Default for SessionRegistry<K> {
    fn default() -> Self {
        Self::new(SESSION_TTL_MS)
    }
}

impl<K: Clone + Eq + Hash> SessionRegistry<K> {
    pub fn new(ttl_ms: u64) -> Self {
        SessionRegistry {
            ttl_ms,
            slots: HashMap::new(),
            by_key: HashMap::new(),
            retired: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    fn retire(&mut self, id: &str, now_ms: u64) {
        if let Some(slot) = self.slots.remove(id) {
            if self.by_key.get(&slot.key).map(String::as_str) == Some(id) {
                self.by_key.remove(&slot.key);
            }
            self.retired.insert(id.to_string(), now_ms);
        }
    }

    fn sweep(&mut self, now_ms: u64) {
        let ttl = self.ttl_ms;
        let stale: Vec<String> = self
            .slots
            .iter()
            .filter(|(_, s)| now_ms.saturating_sub(s.last_used_ms) > ttl)
            .map(|(id, _)| id.clone())
            .collect();
        for id in stale {
            self.retire(&id, now_ms);
        }
        // Remember retired ids for one more TTL so late callers get `Expired`.
        self.retired
            .retain(|_, at| now_ms.saturating_sub(*at) <= ttl);
    }

    pub fn insert(&mut self, key: K, session: WizardSession, now_ms: u64) -> String {
        self.sweep(now_ms);
        if let Some(old) = self.by_key.get(&key).cloned() {
            self.retire(&old, now_ms);
        }
        let id = session.session_id.clone();
        self.by_key.insert(key.clone(), id.clone());
        self.slots.insert(
            id.clone(),
            SessionSlot {
                key,
                session,
                last_used_ms: now_ms,
            },
        );
        id
    }

    /// Looks up a live session and refreshes its idle timer.
    pub fn get_mut(&mut self, id: &str, now_ms: u64) -> Result<&mut SessionSlot<K>, RegistryError> {
        self.sweep(now_ms);
        if self.retired.contains_key(id) {
            return Err(RegistryError::Expired);
        }
        let slot = self.slots.get_mut(id).ok_or(RegistryError::NotFound)?;
        slot.last_used_ms = now_ms;
        Ok(slot)
    }
}
