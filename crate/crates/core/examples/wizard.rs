//! Walks the relevance wizard with scripted answers, steps back once, and
//! applies the outcome to an empty selection.

use cal_core::config::Speaker;
use cal_core::fixtures;
use cal_core::rules::{ExampleKind, SelectionSet};
use cal_core::wizard::{apply_result, WizardSession, WizardStep};

fn main() {
    let cs = fixtures::grice_code_set();
    let mut session = WizardSession::start(&cs, "relevance").unwrap();

    let mut step = session.step();
    for answer in [true, false] {
        if let WizardStep::Question(q) = &step {
            println!("Q: {q}\nA: {}", if answer { "yes" } else { "no" });
        }
        step = session.answer(answer).unwrap();
    }
    println!("(back)");
    session.back().unwrap();
    if let Some(q) = session.question() {
        println!("Q: {q}\nA: yes");
    }
    let WizardStep::Result(result) = session.answer(true).unwrap() else {
        panic!("the relevance wizard is two questions deep");
    };
    println!("=> {} = {} (notify: {})", result.category_id, result.option_id, result.notify);

    let resolved = apply_result(&cs, &SelectionSet::default(), ExampleKind::Utterance(Speaker::Bot), &result).unwrap();
    let entry = resolved.selections.get("relevance").unwrap();
    println!("saved with origin {:?}", entry.origin);
}
