#![no_main]
use libfuzzer_sys::fuzz_target;

use diddml::policy::{assign, AssignmentRule, PolicyPanel};

// Panel parsing and assignment must not panic on arbitrary bytes; when a
// panel parses, classification must produce an exhaustive partition.
fuzz_target!(|data: &[u8]| {
    if let Ok(panel) = PolicyPanel::from_csv_reader(data) {
        for rule in [AssignmentRule::price_default(), AssignmentRule::tax_default()] {
            if let Ok(assignment) = assign(&panel, &rule) {
                use diddml::policy::Label;
                let total = assignment.count(Label::Treated)
                    + assignment.count(Label::Control)
                    + assignment.count(Label::Excluded);
                assert_eq!(total, assignment.entries.len());
            }
        }
    }
});
