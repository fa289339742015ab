//! Fuzzes the SVG parser: must never panic, and any document it accepts
//! must survive a serialize -> parse round trip.
#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(doc) = strokegen::svg::parse_svg(data) {
        let text = strokegen::svg::document_to_svg(&doc);
        strokegen::svg::parse_svg(&text).expect("serialized document re-parses");
    }
});
