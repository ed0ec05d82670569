#![no_main]
use libfuzzer_sys::fuzz_target;

use diddml::data::{load_csv_from_reader, ColumnRoles};

// Microdata ingestion must reject malformed input with an error, never a
// panic, for any byte stream and several role layouts.
fuzz_target!(|data: &[u8]| {
    let full = ColumnRoles::new("y", "country")
        .treatment("d")
        .period("t")
        .year("year")
        .continuous(&["age"])
        .categorical(&["gender"]);
    let _ = load_csv_from_reader(data, &full);

    let minimal = ColumnRoles::new("y", "country");
    let _ = load_csv_from_reader(data, &minimal);

    let semicolon = ColumnRoles::new("y", "country")
        .treatment("d")
        .period("t")
        .delimiter(b';')
        .outcome_binary(false);
    let _ = load_csv_from_reader(data, &semicolon);
});
