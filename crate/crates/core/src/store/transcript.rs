//! Conversation transcripts and their import format.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::config::{from_json, ConfigError, Speaker};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub speaker: Speaker,
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub utterances: Vec<Utterance>,
    pub created_at: u64,
}

impl Conversation {
    pub fn utterance(&self, id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.id == id)
    }
}

/// The thing being labeled: one utterance, or a whole conversation when
/// `utterance_id` is absent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleRef {
    pub conversation_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance_id: Option<String>,
}

impl ExampleRef {
    pub fn utterance(conversation_id: impl Into<String>, utterance_id: impl Into<String>) -> Self {
        ExampleRef {
            conversation_id: conversation_id.into(),
            utterance_id: Some(utterance_id.into()),
        }
    }

    pub fn conversation(conversation_id: impl Into<String>) -> Self {
        ExampleRef {
            conversation_id: conversation_id.into(),
            utterance_id: None,
        }
    }

    /// Key used for labels: the utterance id, or the conversation id.
    pub fn example_id(&self) -> &str {
        self.utterance_id.as_deref().unwrap_or(&self.conversation_id)
    }

    pub fn is_conversation(&self) -> bool {
        self.utterance_id.is_none()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUtterance {
    #[serde(default)]
    id: Option<String>,
    speaker: Speaker,
    text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConversation {
    id: String,
    utterances: Vec<RawUtterance>,
}

/// Parses a transcript file: a JSON array of `{id, utterances: [{speaker, text}]}`.
/// Utterance ids default to `<conversation-id>#<index>`. Ids must be unique
/// across the whole file, including utterance ids.
pub fn parse_transcripts(text: &str, created_at: u64) -> Result<Vec<Conversation>, StoreError> {
    let format = |path: String, message: String| StoreError::Format { path, message };
    let raw: Vec<RawConversation> = from_json(text).map_err(|e| match e {
        ConfigError::Syntax { message, .. } => format("$".into(), message),
        ConfigError::Schema { path, message } => format(path, message),
    })?;

    let mut conv_ids = BTreeSet::new();
    let mut utt_ids = BTreeSet::new();
    let mut out = Vec::with_capacity(raw.len());
    for (ci, rc) in raw.into_iter().enumerate() {
        if rc.id.trim().is_empty() {
            return Err(format(format!("$[{ci}].id"), "conversation id is empty".into()));
        }
        if !conv_ids.insert(rc.id.clone()) {
            return Err(StoreError::DuplicateId { id: rc.id });
        }
        if rc.utterances.is_empty() {
            return Err(format(
                format!("$[{ci}].utterances"),
                "a conversation needs at least one utterance".into(),
            ));
        }
        let mut utterances = Vec::with_capacity(rc.utterances.len());
        for (ui, ru) in rc.utterances.into_iter().enumerate() {
            if ru.text.is_empty() {
                return Err(format(
                    format!("$[{ci}].utterances[{ui}].text"),
                    "utterance text is empty".into(),
                ));
            }
            let id = ru.id.unwrap_or_else(|| format!("{}#{ui}", rc.id));
            if id.is_empty() {
                return Err(format(
                    format!("$[{ci}].utterances[{ui}].id"),
                    "utterance id is empty".into(),
                ));
            }
            if !utt_ids.insert(id.clone()) {
                return Err(StoreError::DuplicateId { id });
            }
            utterances.push(Utterance {
                id,
                speaker: ru.speaker,
                text: ru.text,
                index: ui,
            });
        }
        out.push(Conversation {
            id: rc.id,
            utterances,
            created_at,
        });
    }
    Ok(out)
}
