//! Selecting "Not Applicable" for relevance fills the other categories with
//! "Skip"; deselecting it hands them back.

use cal_core::config::Speaker;
use cal_core::fixtures;
use cal_core::rules::{apply_selection, ExampleKind, Resolved, SelectedValue, SelectionSet};

fn show(title: &str, r: &Resolved) {
    println!("{title}");
    for (category, entry) in r.selections.iter() {
        println!("  {category:<10} {:<15} {:?}", entry.value.render(), entry.origin);
    }
    let disabled: Vec<String> = r
        .state
        .disabled_options
        .iter()
        .map(|o| format!("{}.{}", o.category_id, o.option_id))
        .collect();
    println!("  disabled: {}", disabled.join(", "));
    println!("  complete: {}", r.state.complete);
}

fn main() {
    let cs = fixtures::skip_cascade_code_set();
    let kind = ExampleKind::Utterance(Speaker::Bot);
    let na = SelectedValue::Single("not_applicable".into());

    let selected = apply_selection(&cs, &SelectionSet::default(), kind, "relevance", &na, true).unwrap();
    show("after selecting relevance = not_applicable", &selected);

    match apply_selection(&cs, &selected.selections, kind, "quantity", &SelectedValue::Single("yes".into()), true) {
        Err(e) => println!("selecting quantity = yes: {e}"),
        Ok(_) => unreachable!("quantity.yes is disabled"),
    }

    let cleared = apply_selection(&cs, &selected.selections, kind, "relevance", &na, false).unwrap();
    show("after deselecting it", &cleared);
}
