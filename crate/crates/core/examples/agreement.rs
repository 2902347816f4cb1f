//! Two annotators label the same utterances; prints Jaccard and kappa per
//! category.

use cal_core::fixtures;
use cal_core::rules::SelectedValue;
use cal_core::store::{ExampleRef, LabelRequest, Store};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let mut project = store
        .create_project(fixtures::grice_project(), None, fixtures::SAMPLE_TRANSCRIPTS_JSON)
        .unwrap();

    let utterances: Vec<ExampleRef> = project
        .conversations()
        .iter()
        .flat_map(|c| c.utterances.iter().map(|u| ExampleRef::utterance(&c.id, &u.id)))
        .collect();
    for (i, example) in utterances.iter().enumerate() {
        for annotator in ["ann1", "ann2"] {
            for category in ["relevance", "manner"] {
                // ann2 disagrees on two utterances.
                let flipped = annotator == "ann2" && (i == 4 || (i == 7 && category == "manner"));
                let option = if (i % 3 == 0) != flipped { "no" } else { "yes" };
                let req = LabelRequest {
                    annotator_id: annotator.into(),
                    example: example.clone(),
                    category_id: category.into(),
                    value: SelectedValue::Single(option.into()),
                    selected: true,
                    expected_version: None,
                };
                project.save_assignment(&req).unwrap();
            }
        }
    }

    print!("{}", project.agreement().unwrap().to_text());
}
