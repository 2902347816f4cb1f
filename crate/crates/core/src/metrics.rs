//! Inter-rater agreement: Jaccard index and Cohen's kappa.
//!
//! All arithmetic is exact. Jaccard compares the sets of (example, option)
//! pairs two annotators committed in a category; kappa is computed over the
//! examples both annotators labeled in a single-choice category.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Category, CategoryKind, ProjectConfig};
use crate::rules::SelectedValue;

/// One annotator's labels in one category, keyed by example id.
pub type Labels = BTreeMap<String, SelectedValue>;

/// Labels of every annotator in every category: (annotator, category) -> labels.
pub type LabelIndex = BTreeMap<(String, String), Labels>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("kappa needs a single-choice category; `{category_id}` is {kind:?}")]
    Kind {
        category_id: String,
        kind: CategoryKind,
    },
    #[error("agreement needs at least two annotators, found {found}")]
    TooFewAnnotators { found: usize },
}

/// Cohen's kappa, or an explicit marker when it is not defined (no common
/// examples, or chance agreement equal to one).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kappa {
    Value(Ratio<i64>),
    Undefined,
}

impl Kappa {
    pub fn value(self) -> Option<Ratio<i64>> {
        match self {
            Kappa::Value(v) => Some(v),
            Kappa::Undefined => None,
        }
    }

    /// Two decimals, or `UNDEFINED`.
    pub fn render(self) -> String {
        match self {
            Kappa::Value(v) => render_decimal(v, 2),
            Kappa::Undefined => "UNDEFINED".to_string(),
        }
    }
}

fn pairs(labels: &Labels) -> BTreeSet<(&str, &str)> {
    labels
        .iter()
        .flat_map(|(example, value)| match value {
            SelectedValue::Text(t) => vec![(example.as_str(), t.as_str())],
            other => other
                .options()
                .into_iter()
                .map(|o| (example.as_str(), o))
                .collect(),
        })
        .collect()
}

/// |A ∩ B| / |A ∪ B| over (example, option) pairs; 1 when both are empty.
pub fn jaccard_agreement(a: &Labels, b: &Labels) -> Ratio<u64> {
    let pa = pairs(a);
    let pb = pairs(b);
    let union = pa.union(&pb).count() as u64;
    if union == 0 {
        return Ratio::from_integer(1);
    }
    Ratio::new(pa.intersection(&pb).count() as u64, union)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KappaDetail {
    pub kappa: Kappa,
    pub n_common: u64,
    /// Observed agreement; `None` without common examples.
    pub observed: Option<Ratio<i64>>,
    /// Chance agreement; `None` without common examples.
    pub expected: Option<Ratio<i64>>,
}

/// Cohen's kappa over the examples labeled by both annotators.
pub fn cohens_kappa(category: &Category, a: &Labels, b: &Labels) -> Result<KappaDetail, MetricsError> {
    if category.kind != CategoryKind::Single {
        return Err(MetricsError::Kind {
            category_id: category.id.clone(),
            kind: category.kind,
        });
    }
    let mut n: i64 = 0;
    let mut agree: i64 = 0;
    let mut marg_a: BTreeMap<&str, i64> = BTreeMap::new();
    let mut marg_b: BTreeMap<&str, i64> = BTreeMap::new();
    for (example, va) in a {
        let (SelectedValue::Single(la), Some(SelectedValue::Single(lb))) = (va, b.get(example))
        else {
            continue;
        };
        n += 1;
        if la == lb {
            agree += 1;
        }
        *marg_a.entry(la).or_default() += 1;
        *marg_b.entry(lb).or_default() += 1;
    }
    if n == 0 {
        return Ok(KappaDetail {
            kappa: Kappa::Undefined,
            n_common: 0,
            observed: None,
            expected: None,
        });
    }
    let chance: i64 = marg_a
        .iter()
        .map(|(k, ca)| ca * marg_b.get(k).copied().unwrap_or(0))
        .sum();
    let observed = Ratio::new(agree, n);
    let expected = Ratio::new(chance, n * n);
    let kappa = if chance == n * n {
        Kappa::Undefined
    } else {
        Kappa::Value(Ratio::new(n * agree - chance, n * n - chance))
    };
    Ok(KappaDetail {
        kappa,
        n_common: n as u64,
        observed: Some(observed),
        expected: Some(expected),
    })
}

/// Rounds `value` to `decimals` places, halves away from zero.
pub fn render_decimal(value: Ratio<i64>, decimals: u32) -> String {
    let negative = *value.numer() < 0;
    let num = value.numer().unsigned_abs() as u128;
    let den = value.denom().unsigned_abs() as u128;
    let mut out = render_unsigned(num, den, decimals);
    if negative && out.chars().any(|c| c.is_ascii_digit() && c != '0') {
        out.insert(0, '-');
    }
    out
}

/// Percentage with `decimals` places, rounded half up: 3/8 -> "37.5%".
pub fn render_percent(value: Ratio<u64>, decimals: u32) -> String {
    let mut s = render_unsigned(*value.numer() as u128 * 100, *value.denom() as u128, decimals);
    s.push('%');
    s
}

fn render_unsigned(num: u128, den: u128, decimals: u32) -> String {
    let scale = 10u128.pow(decimals);
    let scaled = (2 * num * scale + den) / (2 * den);
    let int = scaled / scale;
    let frac = scaled % scale;
    if decimals == 0 {
        int.to_string()
    } else {
        format!("{int}.{frac:0width$}", width = decimals as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAgreement {
    pub code_set_id: String,
    pub category_id: String,
    /// Jaccard index as an exact fraction, e.g. `3/8`.
    pub jaccard: String,
    pub jaccard_value: f64,
    pub jaccard_percent: String,
    /// Exact kappa, or `None` when undefined or not applicable.
    pub kappa: Option<String>,
    pub kappa_value: Option<f64>,
    /// Two decimals, or `UNDEFINED`.
    pub kappa_display: String,
    pub n_common: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub annotator_a: String,
    pub annotator_b: String,
    pub per_category: Vec<CategoryAgreement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub project_id: String,
    pub pairs: Vec<PairAgreement>,
}

fn ratio_string<T: std::fmt::Display>(r: &Ratio<T>) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn to_f64_u(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn to_f64_i(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Agreement for every unordered annotator pair (lexicographic, a < b) and
/// every single- or multi-choice category, in config order.
pub fn agreement_report(project: &ProjectConfig, labels: &LabelIndex) -> Result<AgreementReport, MetricsError> {
    let annotators: BTreeSet<&String> = project.annotators.iter().collect();
    if annotators.len() < 2 {
        return Err(MetricsError::TooFewAnnotators {
            found: annotators.len(),
        });
    }
    let categories: Vec<(&str, &Category)> = project
        .code_sets
        .iter()
        .flat_map(|cs| cs.categories.iter().map(move |c| (cs.id.as_str(), c)))
        .filter(|(_, c)| c.kind != CategoryKind::Text)
        .collect();
    let empty = Labels::new();
    let lookup = |annotator: &str, category: &str| {
        labels
            .get(&(annotator.to_string(), category.to_string()))
            .unwrap_or(&empty)
    };

    let annotators: Vec<&String> = annotators.into_iter().collect();
    let mut pairs = Vec::new();
    for (i, a) in annotators.iter().enumerate() {
        for b in &annotators[i + 1..] {
            let per_category = categories
                .iter()
                .map(|(code_set_id, cat)| {
                    let la = lookup(a, &cat.id);
                    let lb = lookup(b, &cat.id);
                    let jaccard = jaccard_agreement(la, lb);
                    let detail = cohens_kappa(cat, la, lb).ok();
                    let kappa = detail.as_ref().map_or(Kappa::Undefined, |d| d.kappa);
                    let n_common = detail.as_ref().map_or_else(
                        || la.keys().filter(|k| lb.contains_key(*k)).count() as u64,
                        |d| d.n_common,
                    );
                    CategoryAgreement {
                        code_set_id: code_set_id.to_string(),
                        category_id: cat.id.clone(),
                        jaccard: ratio_string(&jaccard),
                        jaccard_value: to_f64_u(jaccard),
                        jaccard_percent: render_percent(jaccard, 1),
                        kappa: kappa.value().map(|k| ratio_string(&k)),
                        kappa_value: kappa.value().map(to_f64_i),
                        kappa_display: kappa.render(),
                        n_common,
                    }
                })
                .collect();
            pairs.push(PairAgreement {
                annotator_a: a.to_string(),
                annotator_b: b.to_string(),
                per_category,
            });
        }
    }
    Ok(AgreementReport {
        project_id: project.id.clone(),
        pairs,
    })
}

impl AgreementReport {
    /// Column-aligned plain-text table.
    pub fn to_text(&self) -> String {
        let header = [
            "annotator_a",
            "annotator_b",
            "category",
            "n_common",
            "jaccard",
            "kappa",
        ];
        let mut rows: Vec<[String; 6]> = vec![header.map(String::from)];
        for pair in &self.pairs {
            for row in &pair.per_category {
                rows.push([
                    pair.annotator_a.clone(),
                    pair.annotator_b.clone(),
                    row.category_id.clone(),
                    row.n_common.to_string(),
                    row.jaccard_percent.clone(),
                    row.kappa_display.clone(),
                ]);
            }
        }
        let widths: Vec<usize> = (0..6)
            .map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in rows {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}
