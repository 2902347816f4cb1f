//! Reference implementations used to cross-check the library. They favour
//! plainness over speed: every query rescans everything.

use std::collections::{BTreeMap, BTreeSet};

use cal_core::config::{CategoryKind, CodeSetConfig, Effect};
use cal_core::rules::{
    EffectiveLabelState, ExampleKind, OptionRef, Origin, RuleError, SelectedValue, SelectionEntry, SelectionSet,
};
use cal_core::store::{JournalRecord, RecordBody};
use num_rational::Ratio;

/// Result of a simulated step: the selections and state, or the name of the
/// error the library is expected to raise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sim {
    Ok(SelectionSet, EffectiveLabelState),
    Err(&'static str),
}

pub fn error_name(e: &RuleError) -> &'static str {
    match e {
        RuleError::DisabledOption { .. } => "disabled_option",
        RuleError::HiddenCategory { .. } => "hidden_category",
        RuleError::Contradiction { .. } => "contradiction",
        RuleError::UnknownCategory { .. } => "unknown_category",
        RuleError::UnknownOption { .. } => "unknown_option",
        RuleError::InvalidValue { .. } => "invalid_value",
    }
}

fn applies(cs: &CodeSetConfig, kind: ExampleKind, category_id: &str) -> bool {
    cs.scope == kind.scope()
        && cs.categories.iter().any(|c| {
            c.id == category_id
                && match kind {
                    ExampleKind::Utterance(s) => c.speaker_filter.admits(s),
                    ExampleKind::Conversation => true,
                }
        })
}

fn filled(v: &SelectedValue) -> bool {
    match v {
        SelectedValue::Single(_) => true,
        SelectedValue::Multi(s) => !s.is_empty(),
        SelectedValue::Text(t) => !t.trim().is_empty(),
    }
}

/// Fixed point by repeated single passes over the rules: each pass recomputes
/// the whole view from the set of rules fired so far, then fires every rule
/// whose trigger holds in that view, until a pass fires nothing new.
///
/// Entries cleared by hiding or disabling are dropped and the whole thing is
/// rerun on what is left, until a run clears nothing.
pub fn fixed_point(cs: &CodeSetConfig, selections: &SelectionSet, kind: ExampleKind) -> Sim {
    let mut current = selections.clone();
    loop {
        let out = one_fixed_point(cs, &current, kind);
        let Sim::Ok(sel, _) = &out else { return out };
        let left = sel.authored();
        if left == current.authored() {
            return out;
        }
        current = left;
    }
}

fn one_fixed_point(cs: &CodeSetConfig, selections: &SelectionSet, kind: ExampleKind) -> Sim {
    let authored: Vec<(String, SelectedValue, Origin)> = selections
        .iter()
        .filter(|(c, e)| e.origin != Origin::AutoRule && applies(cs, kind, c))
        .map(|(c, e)| (c.clone(), e.value.clone(), e.origin))
        .collect();

    let mut fired: Vec<usize> = Vec::new();
    loop {
        let view = View::build(cs, kind, &authored, &fired);
        let mut next = fired.clone();
        for (i, rule) in cs.rules.iter().enumerate() {
            if fired.contains(&i) {
                continue;
            }
            let t = &rule.trigger;
            if !applies(cs, kind, &t.category_id) || view.hidden.contains(&t.category_id) {
                continue;
            }
            let has = view.value(&t.category_id).is_some_and(|v| v.contains(&t.option_id));
            if has == t.selected {
                next.push(i);
            }
        }
        if next.len() == fired.len() {
            return view.finish(cs, kind);
        }
        next.sort();
        fired = next;
    }
}

struct View {
    hidden: BTreeSet<String>,
    disabled: BTreeSet<(String, String)>,
    kept: BTreeMap<String, (SelectedValue, Origin)>,
    auto: BTreeMap<String, SelectedValue>,
    contradiction: bool,
}

impl View {
    fn build(cs: &CodeSetConfig, kind: ExampleKind, authored: &[(String, SelectedValue, Origin)], fired: &[usize]) -> View {
        let effects: Vec<&Effect> = fired.iter().flat_map(|&i| cs.rules[i].effects.iter()).collect();
        let mut hidden = BTreeSet::new();
        let mut disabled = BTreeSet::new();
        for e in &effects {
            match e {
                Effect::HideCategory { category_id } if applies(cs, kind, category_id) => {
                    hidden.insert(category_id.clone());
                }
                Effect::DisableOption { category_id, option_id } if applies(cs, kind, category_id) => {
                    disabled.insert((category_id.clone(), option_id.clone()));
                }
                _ => {}
            }
        }
        let off = |c: &str, o: &str| disabled.contains(&(c.to_string(), o.to_string()));
        let mut kept = BTreeMap::new();
        for (c, v, origin) in authored {
            if hidden.contains(c) {
                continue;
            }
            let v = match v {
                SelectedValue::Single(o) => {
                    if off(c, o) {
                        continue;
                    }
                    v.clone()
                }
                SelectedValue::Multi(set) => {
                    let s: BTreeSet<String> = set.iter().filter(|o| !off(c, o)).cloned().collect();
                    if s.is_empty() {
                        continue;
                    }
                    SelectedValue::Multi(s)
                }
                SelectedValue::Text(_) => v.clone(),
            };
            kept.insert(c.clone(), (v, *origin));
        }
        let mut auto: BTreeMap<String, SelectedValue> = BTreeMap::new();
        let mut contradiction = false;
        for e in &effects {
            let Effect::AutoSelect { category_id: c, option_id: o } = e else { continue };
            if !applies(cs, kind, c) || kept.contains_key(c) {
                continue;
            }
            if hidden.contains(c) || off(c, o) {
                contradiction = true;
                continue;
            }
            let kind = cs.categories.iter().find(|x| x.id == *c).unwrap().kind;
            match kind {
                CategoryKind::Single => match auto.get(c) {
                    Some(SelectedValue::Single(prev)) if prev != o => contradiction = true,
                    Some(_) => {}
                    None => {
                        auto.insert(c.clone(), SelectedValue::Single(o.clone()));
                    }
                },
                CategoryKind::Multi => {
                    if let SelectedValue::Multi(s) = auto
                        .entry(c.clone())
                        .or_insert_with(|| SelectedValue::Multi(BTreeSet::new()))
                    {
                        s.insert(o.clone());
                    }
                }
                CategoryKind::Text => {}
            }
        }
        View {
            hidden,
            disabled,
            kept,
            auto,
            contradiction,
        }
    }

    fn value(&self, c: &str) -> Option<&SelectedValue> {
        self.kept.get(c).map(|(v, _)| v).or_else(|| self.auto.get(c))
    }

    fn finish(self, cs: &CodeSetConfig, kind: ExampleKind) -> Sim {
        if self.contradiction {
            return Sim::Err("contradiction");
        }
        let visible: Vec<String> = cs
            .categories
            .iter()
            .filter(|c| applies(cs, kind, &c.id) && !self.hidden.contains(&c.id))
            .map(|c| c.id.clone())
            .collect();
        let complete = visible.iter().all(|c| self.value(c).is_some_and(filled));
        let state = EffectiveLabelState {
            complete,
            disabled_options: self
                .disabled
                .iter()
                .filter(|(c, _)| !self.hidden.contains(c))
                .map(|(c, o)| OptionRef::new(c, o))
                .collect(),
            auto_selected: self
                .auto
                .iter()
                .flat_map(|(c, v)| v.options().into_iter().map(move |o| OptionRef::new(c, o)))
                .collect(),
            visible_categories: visible,
        };
        let mut sel = SelectionSet::default();
        for (c, (v, origin)) in self.kept {
            sel.insert(c, SelectionEntry { value: v, origin });
        }
        for (c, v) in self.auto {
            sel.insert(
                c,
                SelectionEntry {
                    value: v,
                    origin: Origin::AutoRule,
                },
            );
        }
        Sim::Ok(sel, state)
    }
}

fn authored_only(sel: &SelectionSet) -> SelectionSet {
    sel.iter()
        .filter(|(_, e)| e.origin != Origin::AutoRule)
        .map(|(c, e)| (c.clone(), e.clone()))
        .collect()
}

/// One labeling step simulated from scratch.
pub fn step(
    cs: &CodeSetConfig,
    sel: &SelectionSet,
    kind: ExampleKind,
    category_id: &str,
    value: &SelectedValue,
    selected: bool,
) -> Sim {
    let (cur, state) = match fixed_point(cs, sel, kind) {
        Sim::Ok(s, st) => (s, st),
        err => return err,
    };
    if !state.visible_categories.iter().any(|c| c == category_id) {
        return Sim::Err("hidden_category");
    }
    let mut authored = authored_only(&cur);
    if selected {
        for o in value.options() {
            if state.disabled_options.contains(&OptionRef::new(category_id, o)) {
                return Sim::Err("disabled_option");
            }
        }
        let new_value = match (value, cur.get(category_id).map(|e| &e.value)) {
            (SelectedValue::Multi(add), Some(SelectedValue::Multi(have))) => {
                SelectedValue::Multi(have.union(add).cloned().collect())
            }
            _ => value.clone(),
        };
        authored.insert_manual(category_id, new_value);
        return fixed_point(cs, &authored, kind);
    }
    let Some(entry) = authored.get(category_id).cloned() else {
        return Sim::Ok(cur, state);
    };
    match (&entry.value, value) {
        (SelectedValue::Single(a), SelectedValue::Single(b)) if a == b => {
            authored.remove(category_id);
        }
        (SelectedValue::Multi(a), SelectedValue::Multi(b)) => {
            let rest: BTreeSet<String> = a.difference(b).cloned().collect();
            if rest.is_empty() {
                authored.remove(category_id);
            } else {
                authored.insert(
                    category_id,
                    SelectionEntry {
                        value: SelectedValue::Multi(rest),
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
    let after = fixed_point(cs, &authored, kind);
    // An authored leftover identical to what the rules would choose anyway
    // is handed back to the rules.
    if let Sim::Ok(s, _) = &after {
        if let Some(e) = s.get(category_id).filter(|e| e.origin != Origin::AutoRule) {
            let mut without = authored.clone();
            without.remove(category_id);
            if let Sim::Ok(s2, st2) = fixed_point(cs, &without, kind) {
                if s2.get(category_id).map(|x| &x.value) == Some(&e.value) {
                    return Sim::Ok(s2, st2);
                }
            }
        }
    }
    after
}

/// Brute-force rule reference checker: lists the path of every broken
/// reference, self-reference and disable/auto-select clash in `cs.rules`.
pub fn rule_violations(cs: &CodeSetConfig) -> Vec<String> {
    let has_cat = |c: &str| cs.categories.iter().any(|x| x.id == c);
    let has_opt = |c: &str, o: &str| {
        cs.categories
            .iter()
            .any(|x| x.id == c && x.options.iter().any(|y| y.id == o))
    };
    let mut out = Vec::new();
    // (rule, effect, trigger key, target, is_disable) for effects that pass
    // the reference checks.
    let mut sound: Vec<(usize, usize, (String, String, bool), (String, String), bool)> = Vec::new();
    for (i, r) in cs.rules.iter().enumerate() {
        let t = &r.trigger;
        if !has_cat(&t.category_id) {
            out.push(format!("$.rules[{i}].trigger.category_id"));
        } else if !has_opt(&t.category_id, &t.option_id) {
            out.push(format!("$.rules[{i}].trigger.option_id"));
        }
        for (j, e) in r.effects.iter().enumerate() {
            let (name, c, o) = match e {
                Effect::DisableOption { category_id, option_id } => ("disable_option", category_id, Some(option_id)),
                Effect::AutoSelect { category_id, option_id } => ("auto_select", category_id, Some(option_id)),
                Effect::HideCategory { category_id } => ("hide_category", category_id, None),
            };
            let base = format!("$.rules[{i}].effects[{j}].{name}");
            if !has_cat(c) {
                out.push(format!("{base}.category_id"));
                continue;
            }
            if let Some(o) = o {
                if !has_opt(c, o) {
                    out.push(format!("{base}.option_id"));
                    continue;
                }
            }
            if name != "disable_option" && *c == t.category_id {
                out.push(format!("{base}.category_id"));
                continue;
            }
            if let Some(o) = o {
                sound.push((
                    i,
                    j,
                    (t.category_id.clone(), t.option_id.clone(), t.selected),
                    (c.clone(), o.clone()),
                    name == "disable_option",
                ));
            } else {
                sound.push((i, j, (t.category_id.clone(), t.option_id.clone(), t.selected), (c.clone(), String::new()), false));
            }
        }
    }
    for (k, (i, j, key, target, dis)) in sound.iter().enumerate() {
        if target.1.is_empty() {
            continue;
        }
        let clash = sound[..k].iter().any(|(_, _, k2, t2, d2)| {
            k2 == key && t2 == target && d2 != dis && !t2.1.is_empty()
        });
        if clash {
            let e = &cs.rules[*i].effects[*j];
            let name = if matches!(e, Effect::DisableOption { .. }) { "disable_option" } else { "auto_select" };
            out.push(format!("$.rules[{i}].effects[{j}].{name}"));
        }
    }
    out.sort();
    out
}

/// Jaccard index from explicit pair sets.
pub fn jaccard(a: &[(String, String)], b: &[(String, String)]) -> Ratio<u64> {
    let sa: BTreeSet<_> = a.iter().collect();
    let sb: BTreeSet<_> = b.iter().collect();
    let union = sa.union(&sb).count() as u64;
    if union == 0 {
        return Ratio::from_integer(1);
    }
    Ratio::new(sa.intersection(&sb).count() as u64, union)
}

/// Cohen's kappa as (p_o - p_e) / (1 - p_e) over paired labels; `None` when
/// p_e = 1 or there are no pairs.
pub fn kappa(pairs: &[(String, String)]) -> Option<Ratio<i64>> {
    let n = pairs.len() as i64;
    if n == 0 {
        return None;
    }
    let labels: BTreeSet<&String> = pairs.iter().flat_map(|(a, b)| [a, b]).collect();
    let p_o = Ratio::new(pairs.iter().filter(|(a, b)| a == b).count() as i64, n);
    let mut p_e = Ratio::from_integer(0);
    for l in labels {
        let pa = Ratio::new(pairs.iter().filter(|(a, _)| a == l).count() as i64, n);
        let pb = Ratio::new(pairs.iter().filter(|(_, b)| b == l).count() as i64, n);
        p_e += pa * pb;
    }
    if p_e == Ratio::from_integer(1) {
        return None;
    }
    Some((p_o - p_e) / (Ratio::from_integer(1) - p_e))
}

/// A live label as reconstructed by [`live_labels`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveLabel {
    pub example_id: String,
    pub value: SelectedValue,
    pub saved_at: u64,
    pub version: u64,
}

/// Replays journal records into (annotator, example, category) -> live label.
pub fn live_labels(records: &[JournalRecord]) -> BTreeMap<(String, String, String), LiveLabel> {
    let mut live = BTreeMap::new();
    for r in records {
        if let RecordBody::Assignment(b) = &r.body {
            for ch in &b.changes {
                let key = (
                    b.annotator_id.clone(),
                    b.example.example_id().to_string(),
                    ch.category_id.clone(),
                );
                match &ch.value {
                    Some(v) => {
                        live.insert(
                            key,
                            LiveLabel {
                                example_id: b.example.example_id().to_string(),
                                value: v.clone(),
                                saved_at: r.saved_at,
                                version: ch.version,
                            },
                        );
                    }
                    None => {
                        live.remove(&key);
                    }
                }
            }
        }
    }
    live
}

/// Linear scan for the most recent use of an option: greatest saved_at, then
/// version, then example id.
pub fn previous_scan(
    records: &[JournalRecord],
    annotator: &str,
    category: &str,
    option: &str,
    exclude: Option<&str>,
) -> Option<String> {
    let live = live_labels(records);
    let mut best: Option<&LiveLabel> = None;
    for ((a, ex, c), l) in &live {
        if a != annotator || c != category || Some(ex.as_str()) == exclude || !l.value.contains(option) {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => (l.saved_at, l.version, &l.example_id) > (b.saved_at, b.version, &b.example_id),
        };
        if better {
            best = Some(l);
        }
    }
    best.map(|l| l.example_id.clone())
}
