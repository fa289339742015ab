//! Fuzzes the token-sequence decoder: must never panic, and any sequence it
//! accepts in strict mode must rebuild to the identical id stream.
#![no_main]
use libfuzzer_sys::fuzz_target;
use strokegen::codec::{build_sequence, parse_sequence, TokenSequence, Vocabulary};

fuzz_target!(|input: (Vec<u32>, u8)| {
    let (ids, text_len) = input;
    let vocab = Vocabulary::default();
    let seq = TokenSequence { ids, text_len: text_len as usize };
    let _ = parse_sequence(&vocab, &seq, false);
    if let Ok(pairs) = parse_sequence(&vocab, &seq, true) {
        if let Ok(rebuilt) = build_sequence(&vocab, seq.text_len, &pairs) {
            assert_eq!(rebuilt.ids, seq.ids, "strict parse must round-trip");
        }
    }
});
