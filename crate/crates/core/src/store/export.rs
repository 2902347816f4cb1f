//! CSV export of one annotator's live labels.
//!
//! Utterance labels: one row per utterance with `conversation_id`,
//! `utterance_index`, `speaker`, `text`, then one column per utterance-level
//! category. Conversation labels go to a second file with one row per
//! conversation. Multi-choice values are joined with `;`.

use super::{ProjectStore, StoreError};
use crate::config::CodeSetConfig;

fn header(fixed: &[&str], cs: Option<&CodeSetConfig>) -> Vec<String> {
    fixed
        .iter()
        .map(|s| s.to_string())
        .chain(cs.into_iter().flat_map(|cs| cs.categories.iter().map(|c| c.id.clone())))
        .collect()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, StoreError> {
    let bytes = w.into_inner().map_err(|e| StoreError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output of utf-8 input"))
}

fn csv_err(e: csv::Error) -> StoreError {
    StoreError::Io(e.into())
}

pub fn export_utterances_csv(project: &ProjectStore, annotator_id: &str) -> Result<String, StoreError> {
    let cs = project.config().utterance_code_set();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(
        &["conversation_id", "utterance_index", "speaker", "text"],
        cs,
    ))
    .map_err(csv_err)?;
    for conv in project.conversations() {
        for u in &conv.utterances {
            let sel = project.state().selection_set(annotator_id, &u.id);
            let mut row = vec![
                conv.id.clone(),
                u.index.to_string(),
                u.speaker.to_string(),
                u.text.clone(),
            ];
            if let Some(cs) = cs {
                row.extend(
                    cs.categories
                        .iter()
                        .map(|c| sel.get(&c.id).map(|e| e.value.render()).unwrap_or_default()),
                );
            }
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    finish(w)
}

/// `None` when the project has no conversation-level code set.
pub fn export_conversations_csv(project: &ProjectStore, annotator_id: &str) -> Result<Option<String>, StoreError> {
    let Some(cs) = project.config().conversation_code_set() else {
        return Ok(None);
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(&["conversation_id"], Some(cs))).map_err(csv_err)?;
    for conv in project.conversations() {
        let sel = project.state().selection_set(annotator_id, &conv.id);
        let mut row = vec![conv.id.clone()];
        row.extend(
            cs.categories
                .iter()
                .map(|c| sel.get(&c.id).map(|e| e.value.render()).unwrap_or_default()),
        );
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w).map(Some)
}
