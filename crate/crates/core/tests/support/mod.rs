//! Test helpers: small random code sets and a from-scratch rule simulator.
#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeSet;

use cal_core::config::{
    Category, CategoryKind, CodeSetConfig, DependencyRule, Effect, LabelOption, Scope, SpeakerFilter, Trigger,
};
use cal_core::rules::SelectedValue;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

pub const CAT_IDS: [&str; 4] = ["a", "b", "c", "d"];
pub const OPT_IDS: [&str; 3] = ["x", "y", "z"];

fn category(i: usize, kind: CategoryKind, n_opts: usize, filter: SpeakerFilter) -> Category {
    let options = if kind == CategoryKind::Text {
        Vec::new()
    } else {
        OPT_IDS[..n_opts]
            .iter()
            .map(|o| LabelOption {
                id: o.to_string(),
                display: o.to_uppercase(),
                definition: None,
            })
            .collect()
    };
    Category {
        id: CAT_IDS[i].to_string(),
        name: CAT_IDS[i].to_uppercase(),
        kind,
        options,
        definition: String::new(),
        examples: Vec::new(),
        speaker_filter: filter,
    }
}

fn kind_strategy() -> impl Strategy<Value = CategoryKind> {
    prop_oneof![
        4 => Just(CategoryKind::Single),
        2 => Just(CategoryKind::Multi),
        1 => Just(CategoryKind::Text),
    ]
}

fn filter_strategy() -> impl Strategy<Value = SpeakerFilter> {
    prop_oneof![
        6 => Just(SpeakerFilter::Any),
        1 => Just(SpeakerFilter::Human),
        1 => Just(SpeakerFilter::Bot),
    ]
}

/// (category index, option index) pairs, resolved against the actual
/// categories when the config is assembled.
type RawRef = (usize, usize);

#[derive(Debug, Clone)]
enum RawEffect {
    Disable(RawRef),
    Auto(RawRef),
    Hide(usize),
}

fn effect_strategy() -> impl Strategy<Value = RawEffect> {
    prop_oneof![
        3 => (0..4usize, 0..3usize).prop_map(RawEffect::Disable),
        3 => (0..4usize, 0..3usize).prop_map(RawEffect::Auto),
        1 => (0..4usize).prop_map(RawEffect::Hide),
    ]
}

fn rule_strategy() -> impl Strategy<Value = (RawRef, bool, Vec<RawEffect>)> {
    (
        (0..4usize, 0..3usize),
        prop_oneof![3 => Just(true), 1 => Just(false)],
        prop::collection::vec(effect_strategy(), 1..=2),
    )
}

/// Code sets with at most 3 categories of at most 3 options and at most 4
/// rules. Rules may conflict or reference their own category; callers filter
/// with the validator when they need accepted configs.
pub fn raw_code_set() -> impl Strategy<Value = CodeSetConfig> {
    sized_code_set(3, 4)
}

pub fn sized_code_set(max_categories: usize, max_rules: usize) -> impl Strategy<Value = CodeSetConfig> {
    (
        prop::collection::vec((kind_strategy(), 1..=3usize, filter_strategy()), 1..=max_categories),
        prop::collection::vec(rule_strategy(), 0..=max_rules),
    )
        .prop_map(|(cats, rules)| {
            let categories: Vec<Category> = cats
                .iter()
                .enumerate()
                .map(|(i, (k, n, f))| category(i, *k, *n, *f))
                .collect();
            let n = categories.len();
            let opt = |(c, o): RawRef| {
                let cat = &categories[c % n];
                let option = if cat.options.is_empty() {
                    "x".to_string()
                } else {
                    cat.options[o % cat.options.len()].id.clone()
                };
                (cat.id.clone(), option)
            };
            let rules = rules
                .into_iter()
                .map(|(t, selected, effects)| {
                    let (category_id, option_id) = opt(t);
                    DependencyRule {
                        trigger: Trigger {
                            category_id,
                            option_id,
                            selected,
                        },
                        effects: effects
                            .into_iter()
                            .map(|e| match e {
                                RawEffect::Disable(r) => {
                                    let (category_id, option_id) = opt(r);
                                    Effect::DisableOption {
                                        category_id,
                                        option_id,
                                    }
                                }
                                RawEffect::Auto(r) => {
                                    let (category_id, option_id) = opt(r);
                                    Effect::AutoSelect {
                                        category_id,
                                        option_id,
                                    }
                                }
                                RawEffect::Hide(c) => Effect::HideCategory {
                                    category_id: categories[c % n].id.clone(),
                                },
                            })
                            .collect(),
                    }
                })
                .collect();
            CodeSetConfig {
                id: "gen".into(),
                name: "generated".into(),
                scope: Scope::Utterance,
                categories,
                rules,
                wizards: Default::default(),
            }
        })
}

/// Accepted code sets only.
pub fn valid_code_set() -> impl Strategy<Value = CodeSetConfig> {
    raw_code_set().prop_filter("validator accepts", |cs| {
        cal_core::config::validate_code_set(cs).is_ok()
    })
}

/// Draws `n` values from `strategy` with a fixed seed.
pub fn sample<S: Strategy>(strategy: S, n: usize, seed_byte: u8) -> Vec<S::Value> {
    let rng = TestRng::from_seed(RngAlgorithm::ChaCha, &[seed_byte; 32]);
    let mut runner = TestRunner::new_with_rng(Config::default(), rng);
    (0..n)
        .map(|_| strategy.new_tree(&mut runner).expect("strategy").current())
        .collect()
}

/// One labeling action: (category, value, selected).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Action {
    pub category_id: String,
    pub value: SelectedValue,
    pub selected: bool,
}

/// Every action that names one option (or a fixed text) of a category.
pub fn actions(cs: &CodeSetConfig) -> Vec<Action> {
    let mut out = Vec::new();
    for c in &cs.categories {
        let values: Vec<SelectedValue> = match c.kind {
            CategoryKind::Single => c.options.iter().map(|o| SelectedValue::Single(o.id.clone())).collect(),
            CategoryKind::Multi => c
                .options
                .iter()
                .map(|o| SelectedValue::Multi(BTreeSet::from([o.id.clone()])))
                .collect(),
            CategoryKind::Text => vec![SelectedValue::Text("note".into())],
        };
        for v in values {
            for selected in [true, false] {
                out.push(Action {
                    category_id: c.id.clone(),
                    value: v.clone(),
                    selected,
                });
            }
        }
    }
    out
}

#[derive(Debug, Default, Clone)]
pub struct SweepStats {
    /// Distinct selection sets visited.
    pub states: usize,
    /// Library/simulator comparisons made.
    pub comparisons: usize,
    /// Action sequences covered (counted with multiplicity).
    pub sequences: u128,
    pub divergences: Vec<String>,
}

impl SweepStats {
    pub fn absorb(&mut self, other: SweepStats) {
        self.states += other.states;
        self.comparisons += other.comparisons;
        self.sequences += other.sequences;
        self.divergences.extend(other.divergences);
    }
}

/// Runs every action sequence of length `1..=max_len` from the empty
/// selection set through both `apply_selection` and the simulator and
/// records each disagreement. A rejected action leaves the selections as
/// they were. Both sides are pure functions of the current selections, so
/// sequences are explored per distinct state with path counts.
pub fn sweep(cs: &CodeSetConfig, kind: cal_core::rules::ExampleKind, max_len: usize) -> SweepStats {
    use std::collections::HashMap;

    use cal_core::rules::{apply_selection, SelectionSet};
    use oracle::{error_name, step, Sim};

    let acts = actions(cs);
    let mut stats = SweepStats::default();
    let mut successors: HashMap<SelectionSet, Vec<SelectionSet>> = HashMap::new();
    let mut frontier: HashMap<SelectionSet, u128> = HashMap::from([(SelectionSet::default(), 1)]);
    for _ in 0..max_len {
        let mut next: HashMap<SelectionSet, u128> = HashMap::new();
        for (state, count) in frontier {
            if !successors.contains_key(&state) {
                let mut outs = Vec::with_capacity(acts.len());
                for a in &acts {
                    let lib = apply_selection(cs, &state, kind, &a.category_id, &a.value, a.selected);
                    let sim = step(cs, &state, kind, &a.category_id, &a.value, a.selected);
                    stats.comparisons += 1;
                    let lib_sim = match &lib {
                        Ok(r) => Sim::Ok(r.selections.clone(), r.state.clone()),
                        Err(e) => Sim::Err(error_name(e)),
                    };
                    if lib_sim != sim {
                        stats.divergences.push(format!(
                            "config {}\nstate {:?}\naction {:?}\nlibrary {:?}\nsimulator {:?}",
                            cs.to_json(),
                            state,
                            a,
                            lib_sim,
                            sim
                        ));
                    }
                    outs.push(match lib {
                        Ok(r) => r.selections,
                        Err(_) => state.clone(),
                    });
                }
                successors.insert(state.clone(), outs);
            }
            for s in &successors[&state] {
                *next.entry(s.clone()).or_default() += count;
                stats.sequences += count;
            }
        }
        frontier = next;
    }
    stats.states = successors.len();
    stats
}
