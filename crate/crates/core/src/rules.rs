//! Dependency-rule evaluation.
//!
//! Given the labels an annotator has authored for one example, the engine
//! computes which categories are visible, which options are disabled and which
//! labels are selected automatically. Evaluation is stateless: every call
//! recomputes from the authored entries, so automatic labels whose trigger has
//! gone away simply disappear.
//!
//! Rules fire in passes. Each pass evaluates every rule that has not fired yet
//! against the state derived from the rules fired so far; newly satisfied rules
//! join the fired set. A fired rule stays fired, so at most `rules + 1` passes
//! are needed. The derived state for a fired set is:
//!
//! * hidden categories and disabled options: union of the fired effects;
//! * authored entries in hidden categories are dropped, and disabled options
//!   are removed from authored entries;
//! * automatic selections are added (in rule order) to visible categories that
//!   hold no authored entry.
//!
//! An automatic selection that lands on a disabled option, on a hidden
//! category, or next to a different automatic option in a single-choice
//! category is a contradiction and is reported as an error.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Category, CategoryKind, CodeSetConfig, Effect, Scope, Speaker};

/// What is being labeled: an utterance by a given speaker, or a whole
/// conversation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleKind {
    Utterance(Speaker),
    Conversation,
}

impl ExampleKind {
    pub fn scope(self) -> Scope {
        match self {
            ExampleKind::Utterance(_) => Scope::Utterance,
            ExampleKind::Conversation => Scope::Conversation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectedValue {
    Single(String),
    Multi(BTreeSet<String>),
    Text(String),
}

impl SelectedValue {
    pub fn contains(&self, option_id: &str) -> bool {
        match self {
            SelectedValue::Single(o) => o == option_id,
            SelectedValue::Multi(set) => set.contains(option_id),
            SelectedValue::Text(_) => false,
        }
    }

    /// Option ids carried by the value; empty for text.
    pub fn options(&self) -> Vec<&str> {
        match self {
            SelectedValue::Single(o) => vec![o.as_str()],
            SelectedValue::Multi(set) => set.iter().map(String::as_str).collect(),
            SelectedValue::Text(_) => Vec::new(),
        }
    }

    /// Cell rendering used by exports: the option id, `;`-joined ids, or the
    /// text itself.
    pub fn render(&self) -> String {
        match self {
            SelectedValue::Single(o) => o.clone(),
            SelectedValue::Multi(set) => set.iter().cloned().collect::<Vec<_>>().join(";"),
            SelectedValue::Text(t) => t.clone(),
        }
    }

    fn is_filled(&self) -> bool {
        match self {
            SelectedValue::Single(_) => true,
            SelectedValue::Multi(set) => !set.is_empty(),
            SelectedValue::Text(t) => !t.trim().is_empty(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Manual,
    AutoRule,
    AutoWizard,
}

impl Origin {
    /// Authored entries are kept across recomputation; rule entries are not.
    pub fn is_authored(self) -> bool {
        !matches!(self, Origin::AutoRule)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub value: SelectedValue,
    pub origin: Origin,
}

/// The labels of one annotator on one example, keyed by category id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SelectionSet(BTreeMap<String, SelectionEntry>);

impl SelectionSet {
    pub fn get(&self, category_id: &str) -> Option<&SelectionEntry> {
        self.0.get(category_id)
    }

    pub fn insert(&mut self, category_id: impl Into<String>, entry: SelectionEntry) {
        self.0.insert(category_id.into(), entry);
    }

    pub fn insert_manual(&mut self, category_id: impl Into<String>, value: SelectedValue) {
        self.insert(
            category_id,
            SelectionEntry {
                value,
                origin: Origin::Manual,
            },
        );
    }

    pub fn remove(&mut self, category_id: &str) -> Option<SelectionEntry> {
        self.0.remove(category_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &SelectionEntry)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Entries not produced by rules.
    pub fn authored(&self) -> SelectionSet {
        SelectionSet(
            self.0
                .iter()
                .filter(|(_, e)| e.origin.is_authored())
                .map(|(k, e)| (k.clone(), e.clone()))
                .collect(),
        )
    }

    pub fn count_by_origin(&self, origin: Origin) -> usize {
        self.0.values().filter(|e| e.origin == origin).count()
    }
}

impl FromIterator<(String, SelectionEntry)> for SelectionSet {
    fn from_iter<I: IntoIterator<Item = (String, SelectionEntry)>>(iter: I) -> Self {
        SelectionSet(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OptionRef {
    pub category_id: String,
    pub option_id: String,
}

impl OptionRef {
    pub fn new(category_id: impl Into<String>, option_id: impl Into<String>) -> Self {
        OptionRef {
            category_id: category_id.into(),
            option_id: option_id.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveLabelState {
    pub visible_categories: Vec<String>,
    pub disabled_options: BTreeSet<OptionRef>,
    pub auto_selected: BTreeSet<OptionRef>,
    pub complete: bool,
}

impl EffectiveLabelState {
    pub fn is_disabled(&self, category_id: &str, option_id: &str) -> bool {
        self.disabled_options
            .iter()
            .any(|r| r.category_id == category_id && r.option_id == option_id)
    }

    pub fn is_visible(&self, category_id: &str) -> bool {
        self.visible_categories.iter().any(|c| c == category_id)
    }
}

/// Normalized selections together with the state they produce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolved {
    pub selections: SelectionSet,
    pub state: EffectiveLabelState,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("option `{option_id}` of `{category_id}` is disabled by the current selection")]
    DisabledOption {
        category_id: String,
        option_id: String,
    },
    #[error("category `{category_id}` is not shown for this example")]
    HiddenCategory { category_id: String },
    #[error("rules contradict each other on `{category_id}.{option_id}`: {reason}")]
    Contradiction {
        category_id: String,
        option_id: String,
        reason: String,
    },
    #[error("unknown category `{category_id}`")]
    UnknownCategory { category_id: String },
    #[error("unknown option `{option_id}` in category `{category_id}`")]
    UnknownOption {
        category_id: String,
        option_id: String,
    },
    #[error("invalid value for `{category_id}`: {message}")]
    InvalidValue {
        category_id: String,
        message: String,
    },
}

/// Categories of `code_set` that apply to an example of this kind, in config
/// order. Rule-driven hiding is applied later by [`effective_state`].
pub fn applicable_categories(code_set: &CodeSetConfig, kind: ExampleKind) -> Vec<String> {
    applicable(code_set, kind)
        .into_iter()
        .map(|c| c.id.clone())
        .collect()
}

fn applicable(code_set: &CodeSetConfig, kind: ExampleKind) -> Vec<&Category> {
    if code_set.scope != kind.scope() {
        return Vec::new();
    }
    code_set
        .categories
        .iter()
        .filter(|c| match kind {
            ExampleKind::Utterance(speaker) => c.speaker_filter.admits(speaker),
            ExampleKind::Conversation => true,
        })
        .collect()
}

pub fn effective_state(
    code_set: &CodeSetConfig,
    selections: &SelectionSet,
    kind: ExampleKind,
) -> Result<EffectiveLabelState, RuleError> {
    resolve(code_set, selections, kind).map(|r| r.state)
}

/// `true` iff the resolved state is complete. Selections the rules reject are
/// never complete.
pub fn check_complete(code_set: &CodeSetConfig, selections: &SelectionSet, kind: ExampleKind) -> bool {
    effective_state(code_set, selections, kind).is_ok_and(|s| s.complete)
}

/// Checks that `value` fits `category`.
pub fn check_value(category: &Category, value: &SelectedValue) -> Result<(), RuleError> {
    let invalid = |message: &str| RuleError::InvalidValue {
        category_id: category.id.clone(),
        message: message.to_string(),
    };
    match (category.kind, value) {
        (CategoryKind::Single, SelectedValue::Single(_))
        | (CategoryKind::Text, SelectedValue::Text(_)) => {}
        (CategoryKind::Multi, SelectedValue::Multi(set)) => {
            if set.is_empty() {
                return Err(invalid("multi selection must name at least one option"));
            }
        }
        (CategoryKind::Single, _) => return Err(invalid("expected a single option")),
        (CategoryKind::Multi, _) => return Err(invalid("expected a set of options")),
        (CategoryKind::Text, _) => return Err(invalid("expected text")),
    }
    for option_id in value.options() {
        if !category.has_option(option_id) {
            return Err(RuleError::UnknownOption {
                category_id: category.id.clone(),
                option_id: option_id.to_string(),
            });
        }
    }
    Ok(())
}

struct Snapshot {
    hidden: BTreeSet<String>,
    disabled: BTreeSet<OptionRef>,
    authored: BTreeMap<String, SelectionEntry>,
    auto: BTreeMap<String, SelectedValue>,
    contradiction: Option<RuleError>,
}

impl Snapshot {
    fn value(&self, category_id: &str) -> Option<&SelectedValue> {
        self.authored
            .get(category_id)
            .map(|e| &e.value)
            .or_else(|| self.auto.get(category_id))
    }
}

struct Engine<'a> {
    code_set: &'a CodeSetConfig,
    applicable: Vec<&'a Category>,
    authored: BTreeMap<String, SelectionEntry>,
}

impl<'a> Engine<'a> {
    fn is_applicable(&self, category_id: &str) -> bool {
        self.applicable.iter().any(|c| c.id == category_id)
    }

    fn category(&self, category_id: &str) -> Option<&'a Category> {
        self.applicable.iter().copied().find(|c| c.id == category_id)
    }

    fn fired_effects<'r>(&'r self, fired: &'r [bool]) -> impl Iterator<Item = &'a Effect> + 'r {
        self.code_set
            .rules
            .iter()
            .zip(fired)
            .filter(|(_, f)| **f)
            .flat_map(|(r, _)| r.effects.iter())
    }

    fn derive(&self, fired: &[bool]) -> Snapshot {
        let mut hidden = BTreeSet::new();
        let mut disabled = BTreeSet::new();
        for effect in self.fired_effects(fired) {
            match effect {
                Effect::HideCategory { category_id } if self.is_applicable(category_id) => {
                    hidden.insert(category_id.clone());
                }
                Effect::DisableOption {
                    category_id,
                    option_id,
                } if self.is_applicable(category_id) => {
                    disabled.insert(OptionRef::new(category_id, option_id));
                }
                _ => {}
            }
        }

        let is_disabled = |c: &str, o: &str| {
            disabled
                .iter()
                .any(|r: &OptionRef| r.category_id == c && r.option_id == o)
        };

        let mut authored = BTreeMap::new();
        for (category_id, entry) in &self.authored {
            if hidden.contains(category_id) {
                continue;
            }
            let value = match &entry.value {
                SelectedValue::Single(o) if is_disabled(category_id, o) => continue,
                SelectedValue::Multi(set) => {
                    let kept: BTreeSet<String> = set
                        .iter()
                        .filter(|o| !is_disabled(category_id, o))
                        .cloned()
                        .collect();
                    if kept.is_empty() {
                        continue;
                    }
                    SelectedValue::Multi(kept)
                }
                other => other.clone(),
            };
            authored.insert(
                category_id.clone(),
                SelectionEntry {
                    value,
                    origin: entry.origin,
                },
            );
        }

        let mut auto: BTreeMap<String, SelectedValue> = BTreeMap::new();
        let mut contradiction = None;
        for effect in self.fired_effects(fired) {
            let Effect::AutoSelect {
                category_id,
                option_id,
            } = effect
            else {
                continue;
            };
            let Some(category) = self.category(category_id) else {
                continue;
            };
            if authored.contains_key(category_id) {
                continue;
            }
            let clash = |reason: &str| RuleError::Contradiction {
                category_id: category_id.clone(),
                option_id: option_id.clone(),
                reason: reason.to_string(),
            };
            if hidden.contains(category_id) {
                contradiction.get_or_insert_with(|| clash("auto-selected in a hidden category"));
                continue;
            }
            if is_disabled(category_id, option_id) {
                contradiction.get_or_insert_with(|| clash("auto-selected option is disabled"));
                continue;
            }
            match category.kind {
                CategoryKind::Single => match auto.get(category_id) {
                    None => {
                        auto.insert(category_id.clone(), SelectedValue::Single(option_id.clone()));
                    }
                    Some(SelectedValue::Single(existing)) if existing == option_id => {}
                    Some(_) => {
                        contradiction.get_or_insert_with(|| {
                            clash("two different options auto-selected in a single-choice category")
                        });
                    }
                },
                CategoryKind::Multi => {
                    let entry = auto
                        .entry(category_id.clone())
                        .or_insert_with(|| SelectedValue::Multi(BTreeSet::new()));
                    if let SelectedValue::Multi(set) = entry {
                        set.insert(option_id.clone());
                    }
                }
                CategoryKind::Text => {}
            }
        }

        Snapshot {
            hidden,
            disabled,
            authored,
            auto,
            contradiction,
        }
    }

    fn run(&self) -> Result<Resolved, RuleError> {
        let rules = &self.code_set.rules;
        let mut fired = vec![false; rules.len()];
        let mut snapshot = self.derive(&fired);
        loop {
            let newly: Vec<usize> = rules
                .iter()
                .enumerate()
                .filter(|(i, rule)| {
                    let t = &rule.trigger;
                    !fired[*i]
                        && self.is_applicable(&t.category_id)
                        && !snapshot.hidden.contains(&t.category_id)
                        && snapshot
                            .value(&t.category_id)
                            .is_some_and(|v| v.contains(&t.option_id))
                            == t.selected
                })
                .map(|(i, _)| i)
                .collect();
            if newly.is_empty() {
                break;
            }
            for i in newly {
                fired[i] = true;
            }
            snapshot = self.derive(&fired);
        }

        if let Some(err) = snapshot.contradiction {
            return Err(err);
        }

        let visible_categories: Vec<String> = self
            .applicable
            .iter()
            .filter(|c| !snapshot.hidden.contains(&c.id))
            .map(|c| c.id.clone())
            .collect();
        let complete = visible_categories
            .iter()
            .all(|c| snapshot.value(c).is_some_and(SelectedValue::is_filled));
        let disabled_options = snapshot
            .disabled
            .into_iter()
            .filter(|r| !snapshot.hidden.contains(&r.category_id))
            .collect();
        let auto_selected = snapshot
            .auto
            .iter()
            .flat_map(|(c, v)| v.options().into_iter().map(move |o| OptionRef::new(c, o)))
            .collect();

        let mut selections: SelectionSet = snapshot.authored.into_iter().collect();
        for (category_id, value) in snapshot.auto {
            selections.insert(
                category_id,
                SelectionEntry {
                    value,
                    origin: Origin::AutoRule,
                },
            );
        }

        Ok(Resolved {
            selections,
            state: EffectiveLabelState {
                visible_categories,
                disabled_options,
                auto_selected,
                complete,
            },
        })
    }
}

/// Runs the rules to their fixed point over the authored entries of
/// `selections` and returns the normalized selections and effective state.
/// Entries with origin `auto_rule` in the input are ignored and recomputed;
/// entries for categories that do not apply to `kind` are dropped.
pub fn resolve(
    code_set: &CodeSetConfig,
    selections: &SelectionSet,
    kind: ExampleKind,
) -> Result<Resolved, RuleError> {
    let applicable = applicable(code_set, kind);
    let mut authored = BTreeMap::new();
    for (category_id, entry) in selections.iter() {
        if !entry.origin.is_authored() {
            continue;
        }
        let Some(category) = code_set.category(category_id) else {
            return Err(RuleError::UnknownCategory {
                category_id: category_id.clone(),
            });
        };
        check_value(category, &entry.value)?;
        if applicable.iter().any(|c| c.id == *category_id) {
            authored.insert(category_id.clone(), entry.clone());
        }
    }
    // Clearing an entry can make a `selected: false` trigger hold, so the
    // survivors are evaluated again until no further entry is cleared.
    loop {
        let resolved = Engine {
            code_set,
            applicable: applicable.clone(),
            authored: authored.clone(),
        }
        .run()?;
        let survivors: BTreeMap<String, SelectionEntry> = resolved.selections.authored().0.into_iter().collect();
        if survivors == authored {
            return Ok(resolved);
        }
        authored = survivors;
    }
}

/// Selects (or deselects) `value` in `category_id` on behalf of the annotator.
pub fn apply_selection(
    code_set: &CodeSetConfig,
    selections: &SelectionSet,
    kind: ExampleKind,
    category_id: &str,
    value: &SelectedValue,
    selected: bool,
) -> Result<Resolved, RuleError> {
    apply_selection_as(
        code_set,
        selections,
        kind,
        category_id,
        value,
        selected,
        Origin::Manual,
    )
}

/// [`apply_selection`] with an explicit origin for the edited entry.
///
/// Selecting replaces a single-choice entry, adds to a multi-choice entry and
/// overwrites text; the edited entry takes `origin` even if the same value was
/// previously automatic. Deselecting removes the option (or the text). If the
/// authored entry left after a deselection is exactly what the rules would
/// select on their own, it is handed back to the rules.
pub fn apply_selection_as(
    code_set: &CodeSetConfig,
    selections: &SelectionSet,
    kind: ExampleKind,
    category_id: &str,
    value: &SelectedValue,
    selected: bool,
    origin: Origin,
) -> Result<Resolved, RuleError> {
    let category = code_set
        .category(category_id)
        .ok_or_else(|| RuleError::UnknownCategory {
            category_id: category_id.to_string(),
        })?;
    check_value(category, value)?;

    let current = resolve(code_set, selections, kind)?;
    if !current.state.is_visible(category_id) {
        return Err(RuleError::HiddenCategory {
            category_id: category_id.to_string(),
        });
    }

    let mut authored = current.selections.authored();
    let existing = current.selections.get(category_id).map(|e| e.value.clone());

    if selected {
        for option_id in value.options() {
            if current.state.is_disabled(category_id, option_id) {
                return Err(RuleError::DisabledOption {
                    category_id: category_id.to_string(),
                    option_id: option_id.to_string(),
                });
            }
        }
        let new_value = match (value, existing) {
            (SelectedValue::Multi(add), Some(SelectedValue::Multi(mut have))) => {
                have.extend(add.iter().cloned());
                SelectedValue::Multi(have)
            }
            (v, _) => v.clone(),
        };
        authored.insert(
            category_id,
            SelectionEntry {
                value: new_value,
                origin,
            },
        );
        return resolve(code_set, &authored, kind);
    }

    let Some(entry) = authored.get(category_id).cloned() else {
        // Nothing authored here; automatic labels cannot be deselected directly.
        return Ok(current);
    };
    match (&entry.value, value) {
        (SelectedValue::Single(have), SelectedValue::Single(drop)) => {
            if have == drop {
                authored.remove(category_id);
            }
        }
        (SelectedValue::Multi(have), SelectedValue::Multi(drop)) => {
            let kept: BTreeSet<String> = have.difference(drop).cloned().collect();
            if kept.is_empty() {
                authored.remove(category_id);
            } else {
                authored.insert(
                    category_id,
                    SelectionEntry {
                        value: SelectedValue::Multi(kept),
                        origin: entry.origin,
                    },
                );
            }
        }
        (SelectedValue::Text(_), SelectedValue::Text(_)) => {
            authored.remove(category_id);
        }
        _ => {}
    }
    let resolved = resolve(code_set, &authored, kind)?;
    if let Some(kept) = resolved.selections.get(category_id) {
        if kept.origin.is_authored() {
            let mut without = authored.clone();
            without.remove(category_id);
            if let Ok(alt) = resolve(code_set, &without, kind) {
                if alt.selections.get(category_id).map(|e| &e.value) == Some(&kept.value) {
                    return Ok(alt);
                }
            }
        }
    }
    Ok(resolved)
}
