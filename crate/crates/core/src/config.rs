//! Project and code-set configuration.
//!
//! Both levels are plain JSON documents with a strict schema: unknown keys are
//! rejected, and structural failures carry a JSON path (`$.categories[2].kind`)
//! so that a typo can be located without reading the parser.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::{self, ExampleKind, SelectionSet};

/// Maximum number of questions on any root-to-leaf wizard path.
pub const MAX_WIZARD_DEPTH: usize = 32;

/// Maximum length of a wizard question, in characters.
pub const MAX_QUESTION_LEN: usize = 500;

/// Upper bound on the number of trigger states enumerated per wizard outcome.
const MAX_ENUMERATED_STATES: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
}

impl ConfigError {
    pub fn path(&self) -> &str {
        match self {
            ConfigError::Syntax { .. } => "$",
            ConfigError::Schema { path, .. } => path,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Utterance,
    Conversation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Human,
    Bot,
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Speaker::Human => "human",
            Speaker::Bot => "bot",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeakerFilter {
    #[default]
    Any,
    Human,
    Bot,
}

impl SpeakerFilter {
    pub fn admits(self, speaker: Speaker) -> bool {
        matches!(
            (self, speaker),
            (SpeakerFilter::Any, _)
                | (SpeakerFilter::Human, Speaker::Human)
                | (SpeakerFilter::Bot, Speaker::Bot)
        )
    }
}

/// How a category is answered: radio buttons, check boxes or a text box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryKind {
    Single,
    Multi,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelOption {
    pub id: String,
    pub display: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Category {
    pub id: String,
    pub name: String,
    pub kind: CategoryKind,
    #[serde(default)]
    pub options: Vec<LabelOption>,
    #[serde(default)]
    pub definition: String,
    #[serde(default)]
    pub examples: Vec<String>,
    #[serde(default)]
    pub speaker_filter: SpeakerFilter,
}

impl Category {
    pub fn option(&self, option_id: &str) -> Option<&LabelOption> {
        self.options.iter().find(|o| o.id == option_id)
    }

    pub fn has_option(&self, option_id: &str) -> bool {
        self.option(option_id).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trigger {
    pub category_id: String,
    pub option_id: String,
    /// `true` fires while the option is selected, `false` while it is not.
    #[serde(default = "default_true")]
    pub selected: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Effect {
    DisableOption {
        category_id: String,
        option_id: String,
    },
    AutoSelect {
        category_id: String,
        option_id: String,
    },
    HideCategory {
        category_id: String,
    },
}

impl Effect {
    pub fn category_id(&self) -> &str {
        match self {
            Effect::DisableOption { category_id, .. }
            | Effect::AutoSelect { category_id, .. }
            | Effect::HideCategory { category_id } => category_id,
        }
    }

    pub fn option_id(&self) -> Option<&str> {
        match self {
            Effect::DisableOption { option_id, .. } | Effect::AutoSelect { option_id, .. } => {
                Some(option_id)
            }
            Effect::HideCategory { .. } => None,
        }
    }

    fn variant(&self) -> &'static str {
        match self {
            Effect::DisableOption { .. } => "disable_option",
            Effect::AutoSelect { .. } => "auto_select",
            Effect::HideCategory { .. } => "hide_category",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependencyRule {
    pub trigger: Trigger,
    pub effects: Vec<Effect>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WizardFlow {
    pub category_id: String,
    pub root: WizardNode,
}

/// A node of a yes/no decision tree. Leaves name the option to select.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WizardNode {
    Question {
        text: String,
        yes: Box<WizardNode>,
        no: Box<WizardNode>,
    },
    Outcome {
        option_id: String,
    },
}

impl WizardNode {
    /// Number of questions on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        // Iterative so that hostile trees cannot overflow the stack.
        let mut deepest = 0;
        let mut stack = vec![(self, 0usize)];
        while let Some((node, d)) = stack.pop() {
            match node {
                WizardNode::Outcome { .. } => deepest = deepest.max(d),
                WizardNode::Question { yes, no, .. } => {
                    stack.push((yes, d + 1));
                    stack.push((no, d + 1));
                }
            }
        }
        deepest
    }

    /// Follows a sequence of answers from this node.
    pub fn follow(&self, answers: &[bool]) -> Option<&WizardNode> {
        let mut node = self;
        for &answer in answers {
            node = match node {
                WizardNode::Question { yes, no, .. } => {
                    if answer {
                        yes
                    } else {
                        no
                    }
                }
                WizardNode::Outcome { .. } => return None,
            };
        }
        Some(node)
    }

    /// Visits every outcome leaf with its JSON path relative to `base`.
    fn outcomes<'a>(&'a self, base: &str, out: &mut Vec<(String, &'a str)>) {
        let mut stack = vec![(self, base.to_string())];
        while let Some((node, path)) = stack.pop() {
            match node {
                WizardNode::Outcome { option_id } => {
                    out.push((format!("{path}.outcome.option_id"), option_id))
                }
                WizardNode::Question { no, yes, .. } => {
                    stack.push((no, format!("{path}.question.no")));
                    stack.push((yes, format!("{path}.question.yes")));
                }
            }
        }
    }

    fn questions<'a>(&'a self, base: &str, out: &mut Vec<(String, &'a str)>) {
        let mut stack = vec![(self, base.to_string())];
        while let Some((node, path)) = stack.pop() {
            if let WizardNode::Question { text, yes, no } = node {
                out.push((format!("{path}.question.text"), text));
                stack.push((no, format!("{path}.question.no")));
                stack.push((yes, format!("{path}.question.yes")));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSetConfig {
    pub id: String,
    pub name: String,
    pub scope: Scope,
    pub categories: Vec<Category>,
    #[serde(default)]
    pub rules: Vec<DependencyRule>,
    #[serde(default)]
    pub wizards: BTreeMap<String, WizardFlow>,
}

impl CodeSetConfig {
    pub fn category(&self, category_id: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.id == category_id)
    }

    pub fn wizard(&self, category_id: &str) -> Option<&WizardFlow> {
        self.wizards.get(category_id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementVisibility {
    #[default]
    CreatorOnly,
    All,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub id: String,
    pub name: String,
    pub annotators: Vec<String>,
    pub code_sets: Vec<CodeSetConfig>,
    pub data_ref: String,
    #[serde(default)]
    pub agreement_visibility: AgreementVisibility,
}

impl ProjectConfig {
    pub fn code_set(&self, scope: Scope) -> Option<&CodeSetConfig> {
        self.code_sets.iter().find(|c| c.scope == scope)
    }

    pub fn utterance_code_set(&self) -> Option<&CodeSetConfig> {
        self.code_set(Scope::Utterance)
    }

    pub fn conversation_code_set(&self) -> Option<&CodeSetConfig> {
        self.code_set(Scope::Conversation)
    }

    /// Finds the code set that owns `category_id`. Category ids are unique
    /// across a validated project.
    pub fn code_set_for_category(&self, category_id: &str) -> Option<&CodeSetConfig> {
        self.code_sets
            .iter()
            .find(|cs| cs.category(category_id).is_some())
    }

    pub fn is_annotator(&self, id: &str) -> bool {
        self.annotators.iter().any(|a| a == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty() && self.warnings.is_empty()
    }

    fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(Finding {
            path: path.into(),
            message: message.into(),
        });
    }

    fn warn(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(Finding {
            path: path.into(),
            message: message.into(),
        });
    }

    /// Appends `other`, skipping findings already present.
    pub fn merge(&mut self, other: ValidationReport) {
        for f in other.errors {
            if !self.errors.contains(&f) {
                self.errors.push(f);
            }
        }
        for f in other.warnings {
            if !self.warnings.contains(&f) {
                self.warnings.push(f);
            }
        }
    }

    fn prefixed(mut self, prefix: &str) -> Self {
        for f in self.errors.iter_mut().chain(self.warnings.iter_mut()) {
            f.path = format!("{prefix}{}", &f.path[1..]);
        }
        self
    }

    /// One line per finding: `ERROR|WARN <json-path>: <message>`.
    pub fn lines(&self) -> Vec<String> {
        self.errors
            .iter()
            .map(|f| format!("ERROR {}: {}", f.path, f.message))
            .chain(
                self.warnings
                    .iter()
                    .map(|f| format!("WARN {}: {}", f.path, f.message)),
            )
            .collect()
    }
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    serde_path_to_error::deserialize(value).map_err(|e| {
        let mut path = String::from("$");
        for segment in e.path().iter() {
            use serde_path_to_error::Segment;
            match segment {
                Segment::Seq { index } => path.push_str(&format!("[{index}]")),
                Segment::Map { key } => {
                    path.push('.');
                    path.push_str(key);
                }
                Segment::Enum { variant } => {
                    path.push('.');
                    path.push_str(variant);
                }
                Segment::Unknown => path.push_str(".?"),
            }
        }
        let message = e.inner().to_string();
        if let Some(field) = backticked_field(&message, "missing field `") {
            path.push('.');
            path.push_str(field);
        }
        ConfigError::Schema { path, message }
    })
}

fn backticked_field<'a>(message: &'a str, prefix: &str) -> Option<&'a str> {
    let rest = message.strip_prefix(prefix)?;
    rest.split('`').next()
}

/// Parses an annotation code set document.
pub fn parse_code_set(text: &str) -> Result<CodeSetConfig, ConfigError> {
    from_json(text)
}

/// Parses a project document. An empty annotator list is a schema error.
pub fn parse_project(text: &str) -> Result<ProjectConfig, ConfigError> {
    let project: ProjectConfig = from_json(text)?;
    if project.annotators.is_empty() {
        return Err(ConfigError::Schema {
            path: "$.annotators".into(),
            message: "at least one annotator is required".into(),
        });
    }
    Ok(project)
}

/// Checks every structural invariant of a code set. Findings follow document
/// order: categories, then rules, then wizards.
pub fn validate_code_set(cfg: &CodeSetConfig) -> ValidationReport {
    let mut report = ValidationReport::default();

    if cfg.id.trim().is_empty() {
        report.error("$.id", "code set id must not be empty");
    }

    let mut seen_categories = BTreeSet::new();
    for (i, cat) in cfg.categories.iter().enumerate() {
        let base = format!("$.categories[{i}]");
        if cat.id.trim().is_empty() {
            report.error(format!("{base}.id"), "category id must not be empty");
        } else if !seen_categories.insert(cat.id.as_str()) {
            report.error(
                format!("{base}.id"),
                format!("duplicate category id `{}`", cat.id),
            );
        }
        match cat.kind {
            CategoryKind::Single | CategoryKind::Multi => {
                if cat.options.is_empty() {
                    report.error(
                        format!("{base}.options"),
                        "single and multi categories need at least one option",
                    );
                }
            }
            CategoryKind::Text => {
                if !cat.options.is_empty() {
                    report.error(
                        format!("{base}.options"),
                        "text categories must not declare options",
                    );
                }
            }
        }
        let mut seen_options = BTreeSet::new();
        for (j, opt) in cat.options.iter().enumerate() {
            let path = format!("{base}.options[{j}].id");
            if opt.id.trim().is_empty() {
                report.error(path, "option id must not be empty");
            } else if !seen_options.insert(opt.id.as_str()) {
                report.error(path, format!("duplicate option id `{}`", opt.id));
            }
        }
    }

    // Effects already seen per trigger, with the path of each.
    type Seen<'a> = BTreeMap<(&'a str, &'a str, bool), Vec<(&'a Effect, String)>>;
    let mut effects_by_trigger: Seen = BTreeMap::new();
    for (i, rule) in cfg.rules.iter().enumerate() {
        let base = format!("$.rules[{i}]");
        let t = &rule.trigger;
        match cfg.category(&t.category_id) {
            None => report.error(
                format!("{base}.trigger.category_id"),
                format!("unknown category `{}`", t.category_id),
            ),
            Some(cat) if !cat.has_option(&t.option_id) => report.error(
                format!("{base}.trigger.option_id"),
                format!("unknown option `{}` in category `{}`", t.option_id, cat.id),
            ),
            Some(_) => {}
        }
        let key = (t.category_id.as_str(), t.option_id.as_str(), t.selected);
        for (j, effect) in rule.effects.iter().enumerate() {
            let path = format!("{base}.effects[{j}].{}", effect.variant());
            let target = effect.category_id();
            match cfg.category(target) {
                None => {
                    report.error(
                        format!("{path}.category_id"),
                        format!("unknown category `{target}`"),
                    );
                    continue;
                }
                Some(cat) => {
                    if let Some(opt) = effect.option_id() {
                        if !cat.has_option(opt) {
                            report.error(
                                format!("{path}.option_id"),
                                format!("unknown option `{opt}` in category `{target}`"),
                            );
                            continue;
                        }
                    }
                }
            }
            if !matches!(effect, Effect::DisableOption { .. }) && target == t.category_id {
                report.error(
                    format!("{path}.category_id"),
                    format!("{} must not target its own trigger category", effect.variant()),
                );
                continue;
            }
            let prior = effects_by_trigger.entry(key).or_default();
            if let Some(opt) = effect.option_id() {
                let clash = prior.iter().find(|(other, _)| {
                    other.category_id() == target
                        && other.option_id() == Some(opt)
                        && std::mem::discriminant(*other) != std::mem::discriminant(effect)
                });
                if let Some((_, other_path)) = clash {
                    report.error(
                        path.clone(),
                        format!(
                            "`{target}.{opt}` is both disabled and auto-selected by the same trigger (see {other_path})"
                        ),
                    );
                }
            }
            prior.push((effect, path));
        }
    }

    let mut wizard_keys: Vec<&String> = Vec::new();
    for cat in &cfg.categories {
        if let Some((key, _)) = cfg.wizards.get_key_value(&cat.id) {
            wizard_keys.push(key);
        }
    }
    for key in cfg.wizards.keys() {
        if !wizard_keys.contains(&key) {
            wizard_keys.push(key);
        }
    }
    for key in wizard_keys {
        let flow = &cfg.wizards[key];
        let base = format!("$.wizards.{key}");
        if flow.category_id != *key {
            report.error(
                format!("{base}.category_id"),
                format!(
                    "wizard is keyed by `{key}` but targets `{}`",
                    flow.category_id
                ),
            );
        }
        let Some(cat) = cfg.category(key) else {
            report.error(base, format!("wizard for unknown category `{key}`"));
            continue;
        };
        if cat.kind == CategoryKind::Text {
            report.error(base, format!("text category `{key}` cannot have a wizard"));
            continue;
        }
        let depth = flow.root.depth();
        if depth > MAX_WIZARD_DEPTH {
            report.error(
                format!("{base}.root"),
                format!("wizard depth {depth} exceeds the maximum of {MAX_WIZARD_DEPTH}"),
            );
        }
        let mut questions = Vec::new();
        flow.root.questions(&format!("{base}.root"), &mut questions);
        for (path, text) in questions {
            if text.trim().is_empty() {
                report.error(path, "question text must not be empty");
            } else if text.chars().count() > MAX_QUESTION_LEN {
                report.error(
                    path,
                    format!("question text exceeds {MAX_QUESTION_LEN} characters"),
                );
            }
        }
        let mut outcomes = Vec::new();
        flow.root.outcomes(&format!("{base}.root"), &mut outcomes);
        for (path, option_id) in outcomes {
            if !cat.has_option(option_id) {
                report.error(
                    path,
                    format!("unknown option `{option_id}` in category `{key}`"),
                );
            }
        }
    }

    report
}

/// Flags wizard outcomes that can never be applied because a rule disables
/// them in every reachable selection state, and trees deeper than the bound.
///
/// Reachable states are enumerated over the categories that appear in rule
/// triggers (other categories cannot influence rule firing), for every
/// speaker the wizard's category admits.
pub fn detect_wizard_conflicts(cfg: &CodeSetConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (key, flow) in &cfg.wizards {
        let base = format!("$.wizards.{key}");
        let depth = flow.root.depth();
        if depth > MAX_WIZARD_DEPTH {
            report.error(
                format!("{base}.root"),
                format!("wizard depth {depth} exceeds the maximum of {MAX_WIZARD_DEPTH}"),
            );
        }
        let Some(cat) = cfg.category(key) else {
            continue;
        };
        let mut outcomes = Vec::new();
        flow.root.outcomes(&format!("{base}.root"), &mut outcomes);
        let mut verdicts: BTreeMap<&str, Option<bool>> = BTreeMap::new();
        for (path, option_id) in outcomes {
            if !cat.has_option(option_id) {
                continue;
            }
            let verdict = *verdicts
                .entry(option_id)
                .or_insert_with(|| always_disabled(cfg, cat, option_id));
            match verdict {
                Some(true) => report.warn(
                    path,
                    format!(
                        "outcome `{option_id}` is disabled by a rule in every reachable state"
                    ),
                ),
                Some(false) => {}
                None => report.warn(
                    path,
                    "too many trigger states to check this outcome for rule conflicts",
                ),
            }
        }
    }
    report
}

/// `Some(true)` when `option_id` of `cat` is disabled in every reachable
/// state where `cat` itself is still unselected; `None` if the state space
/// exceeds the enumeration bound.
fn always_disabled(cfg: &CodeSetConfig, cat: &Category, option_id: &str) -> Option<bool> {
    let mut trigger_cats: Vec<&Category> = Vec::new();
    for rule in &cfg.rules {
        if let Some(c) = cfg.category(&rule.trigger.category_id) {
            if c.id != cat.id && c.kind != CategoryKind::Text && !trigger_cats.contains(&c) {
                trigger_cats.push(c);
            }
        }
    }
    let choices: Vec<Vec<Option<rules::SelectedValue>>> =
        trigger_cats.iter().map(|c| value_choices(c)).collect();
    let total = choices
        .iter()
        .try_fold(1usize, |acc, c| acc.checked_mul(c.len()))
        .filter(|&n| n <= MAX_ENUMERATED_STATES)?;

    let kinds: Vec<ExampleKind> = match cfg.scope {
        Scope::Conversation => vec![ExampleKind::Conversation],
        Scope::Utterance => [Speaker::Human, Speaker::Bot]
            .into_iter()
            .filter(|s| cat.speaker_filter.admits(*s))
            .map(ExampleKind::Utterance)
            .collect(),
    };

    let mut reachable = false;
    for kind in kinds {
        for mut n in 0..total {
            let mut selections = SelectionSet::default();
            for (c, opts) in trigger_cats.iter().zip(&choices) {
                let pick = &opts[n % opts.len()];
                n /= opts.len();
                if let Some(value) = pick {
                    selections.insert_manual(&c.id, value.clone());
                }
            }
            let Ok(resolved) = rules::resolve(cfg, &selections, kind) else {
                continue;
            };
            if !resolved.state.visible_categories.contains(&cat.id) {
                continue;
            }
            reachable = true;
            if !resolved.state.is_disabled(&cat.id, option_id) {
                return Some(false);
            }
        }
    }
    Some(reachable)
}

/// Every value a category can hold, `None` meaning unselected.
fn value_choices(cat: &Category) -> Vec<Option<rules::SelectedValue>> {
    let mut out = vec![None];
    match cat.kind {
        CategoryKind::Single => out.extend(
            cat.options
                .iter()
                .map(|o| Some(rules::SelectedValue::Single(o.id.clone()))),
        ),
        CategoryKind::Multi => {
            let n = cat.options.len().min(16);
            for mask in 1u32..(1 << n) {
                let set = cat
                    .options
                    .iter()
                    .take(n)
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, o)| o.id.clone())
                    .collect();
                out.push(Some(rules::SelectedValue::Multi(set)));
            }
        }
        CategoryKind::Text => {}
    }
    out
}

/// Validates a project and each of its code sets. Code-set findings are
/// reported under `$.code_sets[i]`.
pub fn validate_project(project: &ProjectConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    if project.id.trim().is_empty() {
        report.error("$.id", "project id must not be empty");
    } else if !project
        .id
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        || project.id.starts_with('.')
    {
        report.error(
            "$.id",
            "project id may only contain ASCII letters, digits, `-`, `_` and `.`",
        );
    }
    if project.annotators.is_empty() {
        report.error("$.annotators", "at least one annotator is required");
    }
    let mut seen = BTreeSet::new();
    for (i, a) in project.annotators.iter().enumerate() {
        if a.trim().is_empty() {
            report.error(format!("$.annotators[{i}]"), "annotator id must not be empty");
        } else if !seen.insert(a.as_str()) {
            report.error(
                format!("$.annotators[{i}]"),
                format!("duplicate annotator id `{a}`"),
            );
        }
    }

    let utterance_sets = project
        .code_sets
        .iter()
        .filter(|c| c.scope == Scope::Utterance)
        .count();
    let conversation_sets = project.code_sets.len() - utterance_sets;
    if utterance_sets == 0 {
        report.error("$.code_sets", "an utterance-scope code set is required");
    }
    if utterance_sets > 1 {
        report.error("$.code_sets", "at most one utterance-scope code set is allowed");
    }
    if conversation_sets > 1 {
        report.error(
            "$.code_sets",
            "at most one conversation-scope code set is allowed",
        );
    }

    let mut category_owner: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, cs) in project.code_sets.iter().enumerate() {
        for (j, cat) in cs.categories.iter().enumerate() {
            if let Some(&owner) = category_owner.get(cat.id.as_str()) {
                if owner != i {
                    report.error(
                        format!("$.code_sets[{i}].categories[{j}].id"),
                        format!(
                            "category id `{}` is already used by code set `{}`",
                            cat.id, project.code_sets[owner].id
                        ),
                    );
                }
            } else {
                category_owner.insert(&cat.id, i);
            }
        }
        let mut nested = validate_code_set(cs);
        nested.merge(detect_wizard_conflicts(cs));
        report.merge(nested.prefixed(&format!("$.code_sets[{i}]")));
    }
    report
}

/// Full check of a standalone code set: structure plus wizard conflicts.
pub fn check_code_set(cfg: &CodeSetConfig) -> ValidationReport {
    let mut report = validate_code_set(cfg);
    report.merge(detect_wizard_conflicts(cfg));
    report
}
