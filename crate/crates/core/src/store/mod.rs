//! Project persistence.
//!
//! Layout under the data directory:
//!
//! ```text
//! projects/<project-id>/project.json    config and creator, written once
//! projects/<project-id>/journal.jsonl   append-only record log
//! ```
//!
//! The in-memory index of a project is rebuilt by replaying its journal, and
//! every write goes through the same replay step after the record is on disk,
//! so the live index and a fresh replay cannot drift apart.

mod export;
mod journal;
mod transcript;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use export::{export_conversations_csv, export_utterances_csv};
pub use journal::{
    parse_records, replay, AssignmentBatch, AssignmentChange, ImportBatch, Journal, JournalRecord,
    RecordBody, ResumePosition,
};
pub use transcript::{parse_transcripts, Conversation, ExampleRef, Utterance};

use crate::clock::{Clock, SystemClock};
use crate::config::{self, Category, CodeSetConfig, ConfigError, ProjectConfig, Scope, ValidationReport};
use crate::metrics::{self, AgreementReport, LabelIndex, MetricsError};
use crate::rules::{self, EffectiveLabelState, ExampleKind, Origin, Resolved, RuleError, SelectedValue, SelectionEntry, SelectionSet};
use crate::wizard::WizardResult;

const PROJECT_FILE: &str = "project.json";
const JOURNAL_FILE: &str = "journal.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("journal line {line} is corrupt: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("configuration rejected with {} error(s)", .0.errors.len())]
    Invalid(ValidationReport),
    #[error("transcript format error at {path}: {message}")]
    Format { path: String, message: String },
    #[error("project `{id}` already exists")]
    DuplicateProject { id: String },
    #[error("id `{id}` already exists")]
    DuplicateId { id: String },
    #[error("project `{id}` not found")]
    ProjectNotFound { id: String },
    #[error("conversation `{id}` not found")]
    ConversationNotFound { id: String },
    #[error("utterance `{id}` not found")]
    UtteranceNotFound { id: String },
    #[error("category `{id}` not found")]
    CategoryNotFound { id: String },
    #[error("option `{option_id}` not found in category `{category_id}`")]
    OptionNotFound { category_id: String, option_id: String },
    #[error("`{annotator_id}` is not a member of this project")]
    NotAMember { annotator_id: String },
    #[error("version conflict: expected {expected}, current is {actual}")]
    VersionConflict { expected: u64, actual: u64 },
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// A live label: one annotator's value for one (example, category).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAssignment {
    pub annotator_id: String,
    pub example: ExampleRef,
    pub category_id: String,
    pub value: SelectedValue,
    pub origin: Origin,
    pub saved_at: u64,
    pub version: u64,
}

type ExampleKey = (String, String);

/// The index rebuilt from the journal.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProjectState {
    conversations: Vec<Conversation>,
    conversation_pos: BTreeMap<String, usize>,
    utterance_pos: BTreeMap<String, (usize, usize)>,
    /// (annotator, example id) -> category -> live assignment
    live: BTreeMap<ExampleKey, BTreeMap<String, LabelAssignment>>,
    /// Latest version per (annotator, example id, category), retractions included.
    versions: BTreeMap<(String, String, String), u64>,
    resume: BTreeMap<String, ResumePosition>,
    records: u64,
}

impl ProjectState {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a JournalRecord>) -> Self {
        let mut state = ProjectState::default();
        for r in records {
            state.apply(r);
        }
        state
    }

    pub fn conversations(&self) -> &[Conversation] {
        &self.conversations
    }

    pub fn record_count(&self) -> u64 {
        self.records
    }

    /// Every live assignment, ordered by annotator, example id and category.
    pub fn assignments(&self) -> impl Iterator<Item = &LabelAssignment> {
        self.live.values().flat_map(|m| m.values())
    }

    pub fn resume_positions(&self) -> &BTreeMap<String, ResumePosition> {
        &self.resume
    }

    fn apply(&mut self, record: &JournalRecord) {
        self.records += 1;
        match &record.body {
            RecordBody::Import(batch) => {
                for conv in &batch.conversations {
                    let ci = self.conversations.len();
                    self.conversation_pos.insert(conv.id.clone(), ci);
                    for (ui, u) in conv.utterances.iter().enumerate() {
                        self.utterance_pos.insert(u.id.clone(), (ci, ui));
                    }
                    self.conversations.push(conv.clone());
                }
            }
            RecordBody::Resume(pos) => {
                self.resume.insert(pos.annotator_id.clone(), pos.clone());
            }
            RecordBody::Assignment(batch) => {
                let key = (batch.annotator_id.clone(), batch.example.example_id().to_string());
                for change in &batch.changes {
                    self.versions.insert(
                        (key.0.clone(), key.1.clone(), change.category_id.clone()),
                        change.version,
                    );
                    let entries = self.live.entry(key.clone()).or_default();
                    match &change.value {
                        Some(value) => {
                            entries.insert(
                                change.category_id.clone(),
                                LabelAssignment {
                                    annotator_id: batch.annotator_id.clone(),
                                    example: batch.example.clone(),
                                    category_id: change.category_id.clone(),
                                    value: value.clone(),
                                    origin: change.origin,
                                    saved_at: record.saved_at,
                                    version: change.version,
                                },
                            );
                        }
                        None => {
                            entries.remove(&change.category_id);
                        }
                    }
                    if entries.is_empty() {
                        self.live.remove(&key);
                    }
                }
                if let Some(pos) = self.resume_after(batch, record.saved_at) {
                    self.resume.insert(batch.annotator_id.clone(), pos);
                }
            }
        }
    }

    fn resume_after(&self, batch: &AssignmentBatch, at: u64) -> Option<ResumePosition> {
        let conv = self.conversation(&batch.example.conversation_id)?;
        let utterance_id = match &batch.example.utterance_id {
            Some(u) => u.clone(),
            None => match self.resume.get(&batch.annotator_id) {
                Some(p) if p.conversation_id == conv.id => p.utterance_id.clone(),
                _ => conv.utterances.first()?.id.clone(),
            },
        };
        Some(ResumePosition {
            annotator_id: batch.annotator_id.clone(),
            conversation_id: conv.id.clone(),
            utterance_id,
            updated_at: at,
        })
    }

    pub fn conversation(&self, id: &str) -> Option<&Conversation> {
        self.conversation_pos.get(id).map(|&i| &self.conversations[i])
    }

    pub fn utterance(&self, id: &str) -> Option<(&Conversation, &Utterance)> {
        let &(ci, ui) = self.utterance_pos.get(id)?;
        let conv = &self.conversations[ci];
        Some((conv, &conv.utterances[ui]))
    }

    /// Live selections of one annotator on one example.
    pub fn selection_set(&self, annotator_id: &str, example_id: &str) -> SelectionSet {
        self.live
            .get(&(annotator_id.to_string(), example_id.to_string()))
            .map(|m| {
                m.iter()
                    .map(|(c, a)| {
                        (
                            c.clone(),
                            SelectionEntry {
                                value: a.value.clone(),
                                origin: a.origin,
                            },
                        )
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn version(&self, annotator_id: &str, example_id: &str, category_id: &str) -> u64 {
        self.versions
            .get(&(
                annotator_id.to_string(),
                example_id.to_string(),
                category_id.to_string(),
            ))
            .copied()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ProjectMeta {
    config: ProjectConfig,
    #[serde(default)]
    creator: Option<String>,
}

/// Root of the data directory.
#[derive(Clone)]
pub struct Store {
    root: PathBuf,
    clock: Arc<dyn Clock>,
    sync: bool,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("root", &self.root)
            .field("sync", &self.sync)
            .finish()
    }
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Store, StoreError> {
        Self::with_clock(root, Arc::new(SystemClock))
    }

    pub fn with_clock(root: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Result<Store, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("projects"))?;
        Ok(Store {
            root,
            clock,
            sync: true,
        })
    }

    /// Turns fsync after each journal append on or off (on by default).
    pub fn sync(mut self, sync: bool) -> Store {
        self.sync = sync;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        self.clock.clone()
    }

    fn project_dir(&self, id: &str) -> PathBuf {
        self.root.join("projects").join(id)
    }

    pub fn project_ids(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.root.join("projects"))? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if !name.starts_with('.') && entry.path().join(PROJECT_FILE).is_file() {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn exists(&self, id: &str) -> bool {
        is_valid_id(id) && self.project_dir(id).join(PROJECT_FILE).is_file()
    }

    /// Validates the config, parses the transcripts and creates the project in
    /// one step: the project directory appears only once fully written.
    pub fn create_project(
        &self,
        config: ProjectConfig,
        creator: Option<String>,
        transcripts: &str,
    ) -> Result<ProjectStore, StoreError> {
        let report = config::validate_project(&config);
        if !report.is_ok() {
            return Err(StoreError::Invalid(report));
        }
        let now = self.clock.now_ms();
        let conversations = parse_transcripts(transcripts, now)?;
        let dir = self.project_dir(&config.id);
        if dir.exists() {
            return Err(StoreError::DuplicateProject { id: config.id });
        }

        let staging = self
            .root
            .join("projects")
            .join(format!(".staging-{}", uuid::Uuid::new_v4()));
        fs::create_dir_all(&staging)?;
        let result = (|| -> Result<(), StoreError> {
            let meta = ProjectMeta { config: config.clone(), creator: creator.clone() };
            let mut f = fs::File::create(staging.join(PROJECT_FILE))?;
            f.write_all(serde_json::to_string_pretty(&meta)?.as_bytes())?;
            f.write_all(b"\n")?;
            f.sync_all()?;
            let (mut journal, _) = Journal::open(&staging.join(JOURNAL_FILE), self.sync)?;
            if !conversations.is_empty() {
                journal.append(RecordBody::Import(ImportBatch { conversations }), now)?;
            }
            Ok(())
        })();
        if let Err(e) = result {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
        if let Err(e) = rename_no_replace(&staging, &dir) {
            let _ = fs::remove_dir_all(&staging);
            if dir.exists() {
                return Err(StoreError::DuplicateProject { id: config.id });
            }
            return Err(e.into());
        }
        self.open_project(&config.id)
    }

    pub fn open_project(&self, id: &str) -> Result<ProjectStore, StoreError> {
        if !self.exists(id) {
            return Err(StoreError::ProjectNotFound { id: id.to_string() });
        }
        let dir = self.project_dir(id);
        let meta: ProjectMeta = serde_json::from_slice(&fs::read(dir.join(PROJECT_FILE))?)?;
        let (journal, records) = Journal::open(&dir.join(JOURNAL_FILE), self.sync)?;
        let state = ProjectState::from_records(&records);
        Ok(ProjectStore {
            dir,
            meta,
            journal,
            state,
            clock: self.clock.clone(),
        })
    }
}

fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn rename_no_replace(from: &Path, to: &Path) -> io::Result<()> {
    // A rename onto an existing non-empty directory fails; an empty one is
    // checked here first.
    if to.exists() {
        return Err(io::Error::new(io::ErrorKind::AlreadyExists, "target exists"));
    }
    fs::rename(from, to)
}

/// Resolves a project's `data_ref` against a base directory. `file://` URIs
/// are accepted.
pub fn resolve_data_ref(base: &Path, data_ref: &str) -> PathBuf {
    let raw = data_ref.strip_prefix("file://").unwrap_or(data_ref);
    let p = Path::new(raw);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// A label edit as sent by a client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRequest {
    pub annotator_id: String,
    pub example: ExampleRef,
    pub category_id: String,
    pub value: SelectedValue,
    #[serde(default = "default_true")]
    pub selected: bool,
    /// Version the client last saw for this category; absent means the
    /// client believes the category was never written.
    #[serde(default)]
    pub expected_version: Option<u64>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaveOutcome {
    pub version: u64,
    pub selections: SelectionSet,
    pub versions: BTreeMap<String, u64>,
    pub state: EffectiveLabelState,
    pub changes: Vec<AssignmentChange>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Creator,
    Annotator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResumeSource {
    Stored,
    FirstIncomplete,
    LastUnit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResumeTarget {
    pub conversation_id: String,
    pub utterance_id: String,
    pub source: ResumeSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreviousLabel {
    pub example: ExampleRef,
    /// The utterance, for utterance-level labels.
    pub utterance: Option<Utterance>,
    pub assignment: LabelAssignment,
    /// All of the annotator's labels on that example.
    pub labels: SelectionSet,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub total: u64,
    pub manual: u64,
    pub auto_rule: u64,
    pub auto_wizard: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationProgress {
    pub conversation_id: String,
    pub labeled_units: u64,
    pub total_units: u64,
    pub fraction: String,
    pub percent: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressSummary {
    pub annotator_id: String,
    pub labeled_units: u64,
    pub total_units: u64,
    /// Exact fraction, e.g. `3/8`.
    pub fraction: String,
    /// Percentage rounded half up to one decimal.
    pub percent: String,
    pub per_conversation: Vec<ConversationProgress>,
    pub labels: LabelCounts,
}

impl ProgressSummary {
    pub fn ratio(&self) -> Ratio<u64> {
        unit_fraction(self.labeled_units, self.total_units)
    }
}

/// A project with no units counts as fully labeled.
pub fn unit_fraction(labeled: u64, total: u64) -> Ratio<u64> {
    if total == 0 {
        Ratio::from_integer(1)
    } else {
        Ratio::new(labeled, total)
    }
}

/// One labelable (example, code set) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub example: ExampleRef,
    pub kind: ExampleKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleView {
    pub example: ExampleRef,
    pub categories: Vec<String>,
    pub selections: SelectionSet,
    pub versions: BTreeMap<String, u64>,
    pub state: EffectiveLabelState,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceView {
    #[serde(flatten)]
    pub utterance: Utterance,
    pub labels: Option<ExampleView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryDoc {
    #[serde(flatten)]
    pub category: Category,
    pub has_wizard: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSetDoc {
    pub code_set_id: String,
    pub name: String,
    pub scope: Scope,
    pub categories: Vec<CategoryDoc>,
}

/// Everything the labeling screen needs for one conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelingView {
    pub project_id: String,
    pub annotator_id: String,
    pub conversation_id: String,
    pub position: usize,
    pub conversation_count: usize,
    pub previous_conversation_id: Option<String>,
    pub next_conversation_id: Option<String>,
    pub utterances: Vec<UtteranceView>,
    pub conversation_labels: Option<ExampleView>,
    pub progress: ConversationProgress,
    pub documentation: Vec<CodeSetDoc>,
}

pub struct ProjectStore {
    dir: PathBuf,
    meta: ProjectMeta,
    journal: Journal,
    state: ProjectState,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for ProjectStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProjectStore")
            .field("dir", &self.dir)
            .field("records", &self.state.records)
            .finish()
    }
}

enum VersionCheck {
    Any,
    Expect(u64),
}

impl ProjectStore {
    pub fn id(&self) -> &str {
        &self.meta.config.id
    }

    pub fn config(&self) -> &ProjectConfig {
        &self.meta.config
    }

    pub fn creator(&self) -> Option<&str> {
        self.meta.creator.as_deref()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn journal_path(&self) -> &Path {
        self.journal.path()
    }

    pub fn state(&self) -> &ProjectState {
        &self.state
    }

    pub fn conversations(&self) -> &[Conversation] {
        &self.state.conversations
    }

    /// Makes the next journal append fail halfway through.
    #[doc(hidden)]
    pub fn fail_next_append(&mut self) {
        self.journal.fail_next_append();
    }

    /// Rebuilds the index from the journal on disk.
    pub fn replay_state(&self) -> Result<ProjectState, StoreError> {
        Ok(ProjectState::from_records(&replay(self.journal.path())?))
    }

    pub fn role(&self, annotator_id: &str) -> Option<Role> {
        if self.meta.creator.as_deref() == Some(annotator_id) {
            Some(Role::Creator)
        } else if self.meta.config.is_annotator(annotator_id) {
            Some(Role::Annotator)
        } else {
            None
        }
    }

    pub fn check_member(&self, annotator_id: &str) -> Result<Role, StoreError> {
        self.role(annotator_id).ok_or_else(|| StoreError::NotAMember {
            annotator_id: annotator_id.to_string(),
        })
    }

    fn append(&mut self, body: RecordBody) -> Result<(), StoreError> {
        let now = self.clock.now_ms();
        let record = self.journal.append(body, now)?;
        self.state.apply(&record);
        Ok(())
    }

    /// Imports a transcript file. Nothing is imported if any conversation or
    /// utterance id is malformed or already taken.
    pub fn import_conversations(&mut self, text: &str) -> Result<usize, StoreError> {
        let conversations = parse_transcripts(text, self.clock.now_ms())?;
        for conv in &conversations {
            if self.state.conversation_pos.contains_key(&conv.id) {
                return Err(StoreError::DuplicateId { id: conv.id.clone() });
            }
            for u in &conv.utterances {
                if self.state.utterance_pos.contains_key(&u.id) {
                    return Err(StoreError::DuplicateId { id: u.id.clone() });
                }
            }
        }
        let n = conversations.len();
        if n > 0 {
            self.append(RecordBody::Import(ImportBatch { conversations }))?;
        }
        Ok(n)
    }

    pub fn conversation(&self, id: &str) -> Result<&Conversation, StoreError> {
        self.state
            .conversation(id)
            .ok_or_else(|| StoreError::ConversationNotFound { id: id.to_string() })
    }

    /// Checks that the example exists and returns its code set and kind. The
    /// code set is `None` when the project has none for that scope.
    pub fn example_kind(&self, example: &ExampleRef) -> Result<(Option<&CodeSetConfig>, ExampleKind), StoreError> {
        let conv = self.conversation(&example.conversation_id)?;
        match &example.utterance_id {
            Some(uid) => {
                let u = conv
                    .utterance(uid)
                    .ok_or_else(|| StoreError::UtteranceNotFound { id: uid.clone() })?;
                Ok((
                    self.meta.config.utterance_code_set(),
                    ExampleKind::Utterance(u.speaker),
                ))
            }
            None => Ok((self.meta.config.conversation_code_set(), ExampleKind::Conversation)),
        }
    }

    pub fn selection_set(&self, annotator_id: &str, example: &ExampleRef) -> Result<SelectionSet, StoreError> {
        self.example_kind(example)?;
        Ok(self.state.selection_set(annotator_id, example.example_id()))
    }

    pub fn versions(&self, annotator_id: &str, example: &ExampleRef) -> BTreeMap<String, u64> {
        let (_, kind) = match self.example_kind(example) {
            Ok(k) => k,
            Err(_) => return BTreeMap::new(),
        };
        let cs = match kind {
            ExampleKind::Conversation => self.meta.config.conversation_code_set(),
            ExampleKind::Utterance(_) => self.meta.config.utterance_code_set(),
        };
        cs.map(|cs| {
            cs.categories
                .iter()
                .map(|c| {
                    (
                        c.id.clone(),
                        self.state.version(annotator_id, example.example_id(), &c.id),
                    )
                })
                .collect()
        })
        .unwrap_or_default()
    }

    /// The annotator's selections on an example, normalized by the rules.
    pub fn resolved(&self, annotator_id: &str, example: &ExampleRef) -> Result<Option<Resolved>, StoreError> {
        let (cs, kind) = self.example_kind(example)?;
        let Some(cs) = cs else { return Ok(None) };
        let sel = self.state.selection_set(annotator_id, example.example_id());
        Ok(Some(rules::resolve(cs, &sel, kind)?))
    }

    /// The code set and example kind for labeling `category_id` on `example`.
    pub fn category_context(&self, example: &ExampleRef, category_id: &str) -> Result<(&CodeSetConfig, ExampleKind), StoreError> {
        let (cs, kind) = self.example_kind(example)?;
        match cs {
            Some(cs) if cs.category(category_id).is_some() => Ok((cs, kind)),
            _ if self.meta.config.code_set_for_category(category_id).is_some() => {
                Err(RuleError::HiddenCategory {
                    category_id: category_id.to_string(),
                }
                .into())
            }
            _ => Err(StoreError::CategoryNotFound {
                id: category_id.to_string(),
            }),
        }
    }

    /// Applies one label edit through the rule engine and persists every
    /// resulting change as a single journal record.
    pub fn save_assignment(&mut self, req: &LabelRequest) -> Result<SaveOutcome, StoreError> {
        self.save(
            &req.annotator_id,
            &req.example,
            &req.category_id,
            &req.value,
            req.selected,
            Origin::Manual,
            VersionCheck::Expect(req.expected_version.unwrap_or(0)),
        )
    }

    /// Selects a wizard outcome for the annotator.
    pub fn apply_wizard_result(
        &mut self,
        annotator_id: &str,
        example: &ExampleRef,
        result: &WizardResult,
    ) -> Result<SaveOutcome, StoreError> {
        let (cs, _) = self.category_context(example, &result.category_id)?;
        let category = cs.category(&result.category_id).expect("checked above");
        let value = match category.kind {
            config::CategoryKind::Multi => {
                SelectedValue::Multi(BTreeSet::from([result.option_id.clone()]))
            }
            _ => SelectedValue::Single(result.option_id.clone()),
        };
        self.save(
            annotator_id,
            example,
            &result.category_id,
            &value,
            true,
            Origin::AutoWizard,
            VersionCheck::Any,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn save(
        &mut self,
        annotator_id: &str,
        example: &ExampleRef,
        category_id: &str,
        value: &SelectedValue,
        selected: bool,
        origin: Origin,
        check: VersionCheck,
    ) -> Result<SaveOutcome, StoreError> {
        self.check_member(annotator_id)?;
        let (cs, kind) = self.category_context(example, category_id)?;
        let example_id = example.example_id();
        let current = self.state.version(annotator_id, example_id, category_id);
        if let VersionCheck::Expect(expected) = check {
            if expected != current {
                return Err(StoreError::VersionConflict {
                    expected,
                    actual: current,
                });
            }
        }
        let before = self.state.selection_set(annotator_id, example_id);
        let after = rules::apply_selection_as(cs, &before, kind, category_id, value, selected, origin)?;

        let mut changes = Vec::new();
        for cat in &cs.categories {
            let old = before.get(&cat.id);
            let new = after.selections.get(&cat.id);
            if old != new {
                changes.push(AssignmentChange {
                    category_id: cat.id.clone(),
                    value: new.map(|e| e.value.clone()),
                    origin: new.map(|e| e.origin).unwrap_or(origin),
                    version: self.state.version(annotator_id, example_id, &cat.id) + 1,
                });
            }
        }
        let version = changes
            .iter()
            .find(|c| c.category_id == category_id)
            .map(|c| c.version)
            .unwrap_or(current);
        self.append(RecordBody::Assignment(AssignmentBatch {
            annotator_id: annotator_id.to_string(),
            example: example.clone(),
            changes: changes.clone(),
        }))?;
        Ok(SaveOutcome {
            version,
            selections: after.selections,
            versions: self.versions(annotator_id, example),
            state: after.state,
            changes,
        })
    }

    pub fn set_resume(
        &mut self,
        annotator_id: &str,
        conversation_id: &str,
        utterance_id: &str,
    ) -> Result<ResumePosition, StoreError> {
        self.check_member(annotator_id)?;
        self.example_kind(&ExampleRef::utterance(conversation_id, utterance_id))?;
        self.append(RecordBody::Resume(ResumePosition {
            annotator_id: annotator_id.to_string(),
            conversation_id: conversation_id.to_string(),
            utterance_id: utterance_id.to_string(),
            updated_at: self.clock.now_ms(),
        }))?;
        Ok(self.state.resume[annotator_id].clone())
    }

    /// All units in document order: each conversation's utterances, then the
    /// conversation itself. Examples with no applicable category are skipped.
    pub fn units(&self) -> Vec<Unit> {
        let cfg = &self.meta.config;
        let mut out = Vec::new();
        for conv in &self.state.conversations {
            if let Some(cs) = cfg.utterance_code_set() {
                for u in &conv.utterances {
                    let kind = ExampleKind::Utterance(u.speaker);
                    if !rules::applicable_categories(cs, kind).is_empty() {
                        out.push(Unit {
                            example: ExampleRef::utterance(&conv.id, &u.id),
                            kind,
                        });
                    }
                }
            }
            if let Some(cs) = cfg.conversation_code_set() {
                if !rules::applicable_categories(cs, ExampleKind::Conversation).is_empty() {
                    out.push(Unit {
                        example: ExampleRef::conversation(&conv.id),
                        kind: ExampleKind::Conversation,
                    });
                }
            }
        }
        out
    }

    fn unit_complete(&self, annotator_id: &str, unit: &Unit) -> bool {
        let cs = match unit.kind {
            ExampleKind::Conversation => self.meta.config.conversation_code_set(),
            ExampleKind::Utterance(_) => self.meta.config.utterance_code_set(),
        };
        cs.map(|cs| {
            rules::check_complete(
                cs,
                &self.state.selection_set(annotator_id, unit.example.example_id()),
                unit.kind,
            )
        })
        .unwrap_or(false)
    }

    pub fn progress(&self, annotator_id: &str) -> Result<ProgressSummary, StoreError> {
        self.check_member(annotator_id)?;
        let mut per: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
        let units = self.units();
        for unit in &units {
            let e = per.entry(unit.example.conversation_id.as_str()).or_default();
            e.1 += 1;
            if self.unit_complete(annotator_id, unit) {
                e.0 += 1;
            }
        }
        let per_conversation: Vec<ConversationProgress> = self
            .state
            .conversations
            .iter()
            .map(|c| {
                let (l, t) = per.get(c.id.as_str()).copied().unwrap_or((0, 0));
                conversation_progress(&c.id, l, t)
            })
            .collect();
        let labeled: u64 = per.values().map(|v| v.0).sum();
        let total: u64 = per.values().map(|v| v.1).sum();
        let fraction = unit_fraction(labeled, total);

        let mut labels = LabelCounts::default();
        for ((a, _), entries) in &self.state.live {
            if a != annotator_id {
                continue;
            }
            for asg in entries.values() {
                labels.total += 1;
                match asg.origin {
                    Origin::Manual => labels.manual += 1,
                    Origin::AutoRule => labels.auto_rule += 1,
                    Origin::AutoWizard => labels.auto_wizard += 1,
                }
            }
        }
        Ok(ProgressSummary {
            annotator_id: annotator_id.to_string(),
            labeled_units: labeled,
            total_units: total,
            fraction: format!("{}/{}", fraction.numer(), fraction.denom()),
            percent: metrics::render_percent(fraction, 1),
            per_conversation,
            labels,
        })
    }

    /// The stored position, or else the first incomplete unit, or else the
    /// last unit. `None` only for a project with no conversations.
    pub fn resume(&self, annotator_id: &str) -> Result<Option<ResumeTarget>, StoreError> {
        self.check_member(annotator_id)?;
        if let Some(p) = self.state.resume.get(annotator_id) {
            return Ok(Some(ResumeTarget {
                conversation_id: p.conversation_id.clone(),
                utterance_id: p.utterance_id.clone(),
                source: ResumeSource::Stored,
            }));
        }
        let units = self.units();
        let target = |unit: &Unit, source| {
            let conv = self.state.conversation(&unit.example.conversation_id)?;
            let utterance_id = match &unit.example.utterance_id {
                Some(u) => u.clone(),
                None => conv.utterances.first()?.id.clone(),
            };
            Some(ResumeTarget {
                conversation_id: conv.id.clone(),
                utterance_id,
                source,
            })
        };
        if let Some(unit) = units.iter().find(|u| !self.unit_complete(annotator_id, u)) {
            return Ok(target(unit, ResumeSource::FirstIncomplete));
        }
        if let Some(unit) = units.last() {
            return Ok(target(unit, ResumeSource::LastUnit));
        }
        Ok(self.state.conversations.last().and_then(|c| {
            Some(ResumeTarget {
                conversation_id: c.id.clone(),
                utterance_id: c.utterances.last()?.id.clone(),
                source: ResumeSource::LastUnit,
            })
        }))
    }

    /// The annotator's most recent live label using `option_id` in
    /// `category_id`, other than on `exclude`. Ties on save time go to the
    /// higher version, then to the greater example id.
    pub fn previous_labeled(
        &self,
        annotator_id: &str,
        category_id: &str,
        option_id: &str,
        exclude: Option<&str>,
    ) -> Result<Option<PreviousLabel>, StoreError> {
        self.check_member(annotator_id)?;
        let cs = self
            .meta
            .config
            .code_set_for_category(category_id)
            .ok_or_else(|| StoreError::CategoryNotFound {
                id: category_id.to_string(),
            })?;
        let category = cs.category(category_id).expect("code set holds category");
        if !category.has_option(option_id) {
            return Err(StoreError::OptionNotFound {
                category_id: category_id.to_string(),
                option_id: option_id.to_string(),
            });
        }
        let best = self
            .state
            .live
            .range((annotator_id.to_string(), String::new())..)
            .take_while(|((a, _), _)| a == annotator_id)
            .filter(|((_, ex), _)| Some(ex.as_str()) != exclude)
            .filter_map(|(_, entries)| entries.get(category_id))
            .filter(|asg| asg.value.contains(option_id))
            .max_by(|x, y| {
                (x.saved_at, x.version, x.example.example_id())
                    .cmp(&(y.saved_at, y.version, y.example.example_id()))
            });
        Ok(best.map(|asg| PreviousLabel {
            example: asg.example.clone(),
            utterance: asg
                .example
                .utterance_id
                .as_deref()
                .and_then(|u| self.state.utterance(u))
                .map(|(_, u)| u.clone()),
            assignment: asg.clone(),
            labels: self.state.selection_set(annotator_id, asg.example.example_id()),
        }))
    }

    /// Live labels of every annotator, for agreement computations.
    pub fn label_index(&self) -> LabelIndex {
        let mut index = LabelIndex::new();
        for asg in self.state.assignments() {
            index
                .entry((asg.annotator_id.clone(), asg.category_id.clone()))
                .or_default()
                .insert(asg.example.example_id().to_string(), asg.value.clone());
        }
        index
    }

    pub fn agreement(&self) -> Result<AgreementReport, StoreError> {
        Ok(metrics::agreement_report(&self.meta.config, &self.label_index())?)
    }

    fn example_view(&self, annotator_id: &str, example: ExampleRef) -> Result<Option<ExampleView>, StoreError> {
        let (cs, kind) = self.example_kind(&example)?;
        let Some(cs) = cs else { return Ok(None) };
        let categories = rules::applicable_categories(cs, kind);
        if categories.is_empty() {
            return Ok(None);
        }
        let sel = self.state.selection_set(annotator_id, example.example_id());
        let resolved = rules::resolve(cs, &sel, kind)?;
        let versions = self.versions(annotator_id, &example);
        Ok(Some(ExampleView {
            example,
            categories,
            complete: resolved.state.complete,
            selections: resolved.selections,
            versions,
            state: resolved.state,
        }))
    }

    pub fn documentation(&self) -> Vec<CodeSetDoc> {
        self.meta
            .config
            .code_sets
            .iter()
            .map(|cs| CodeSetDoc {
                code_set_id: cs.id.clone(),
                name: cs.name.clone(),
                scope: cs.scope,
                categories: cs
                    .categories
                    .iter()
                    .map(|c| CategoryDoc {
                        category: c.clone(),
                        has_wizard: cs.wizard(&c.id).is_some(),
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn labeling_view(&self, annotator_id: &str, conversation_id: &str) -> Result<LabelingView, StoreError> {
        self.check_member(annotator_id)?;
        let conv = self.conversation(conversation_id)?;
        let position = self.state.conversation_pos[conversation_id];
        let convs = &self.state.conversations;
        let mut utterances = Vec::with_capacity(conv.utterances.len());
        let (mut labeled, mut total) = (0, 0);
        for u in &conv.utterances {
            let labels = self.example_view(annotator_id, ExampleRef::utterance(&conv.id, &u.id))?;
            if let Some(v) = &labels {
                total += 1;
                labeled += u64::from(v.complete);
            }
            utterances.push(UtteranceView {
                utterance: u.clone(),
                labels,
            });
        }
        let conversation_labels = self.example_view(annotator_id, ExampleRef::conversation(&conv.id))?;
        if let Some(v) = &conversation_labels {
            total += 1;
            labeled += u64::from(v.complete);
        }
        Ok(LabelingView {
            project_id: self.id().to_string(),
            annotator_id: annotator_id.to_string(),
            conversation_id: conv.id.clone(),
            position,
            conversation_count: convs.len(),
            previous_conversation_id: position.checked_sub(1).map(|i| convs[i].id.clone()),
            next_conversation_id: convs.get(position + 1).map(|c| c.id.clone()),
            utterances,
            conversation_labels,
            progress: conversation_progress(&conv.id, labeled, total),
            documentation: self.documentation(),
        })
    }
}

fn conversation_progress(id: &str, labeled: u64, total: u64) -> ConversationProgress {
    let f = unit_fraction(labeled, total);
    ConversationProgress {
        conversation_id: id.to_string(),
        labeled_units: labeled,
        total_units: total,
        fraction: format!("{}/{}", f.numer(), f.denom()),
        percent: metrics::render_percent(f, 1),
    }
}
