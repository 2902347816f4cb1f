//! Creates a project in a scratch directory, labels part of it, and prints
//! progress, the resume point and the CSV export.

use cal_core::fixtures;
use cal_core::rules::SelectedValue;
use cal_core::store::{export_utterances_csv, ExampleRef, LabelRequest, Store};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let mut project = store
        .create_project(fixtures::grice_project(), Some("ann1".into()), fixtures::SAMPLE_TRANSCRIPTS_JSON)
        .unwrap();

    let conv = project.conversations()[0].clone();
    for u in conv.utterances.iter().take(3) {
        let example = ExampleRef::utterance(&conv.id, &u.id);
        let (_, kind) = project.example_kind(&example).unwrap();
        let cs = project.config().utterance_code_set().unwrap();
        for category in cal_core::rules::applicable_categories(cs, kind) {
            let req = LabelRequest {
                annotator_id: "ann1".into(),
                example: example.clone(),
                category_id: category.clone(),
                value: SelectedValue::Single("yes".into()),
                selected: true,
                expected_version: None,
            };
            project.save_assignment(&req).unwrap();
        }
    }

    let progress = project.progress("ann1").unwrap();
    println!(
        "ann1: {} of {} units ({}, {})",
        progress.labeled_units, progress.total_units, progress.fraction, progress.percent
    );
    for c in &progress.per_conversation {
        println!("  {}: {}", c.conversation_id, c.percent);
    }
    if let Some(target) = project.resume("ann1").unwrap() {
        println!("resume at {} / {:?} ({:?})", target.conversation_id, target.utterance_id, target.source);
    }
    println!();
    print!("{}", export_utterances_csv(&project, "ann1").unwrap());
}
