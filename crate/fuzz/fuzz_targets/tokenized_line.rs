//! Fuzzes the tokenized-corpus JSONL line decoder: must never panic, and
//! anchor validation must reject out-of-range coordinates gracefully.
#![no_main]
use libfuzzer_sys::fuzz_target;
use strokegen::codec::TokenizedSample;

fuzz_target!(|data: &str| {
    if let Ok(sample) = serde_json::from_str::<TokenizedSample>(data) {
        let _ = sample.token_pairs();
    }
});
