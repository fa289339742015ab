//! Token vocabulary and sequence construction.
//!
//! Wire layout of the 69,914-entry vocabulary: shape-code ids occupy
//! `[0, n_codes)`, position ids `[n_codes, n_codes + 65536)` in row-major
//! grid order, and the three specials come last.

use serde::{Deserialize, Serialize};

use crate::svg::{Anchor, ANCHOR_GRID};
use crate::{Error, Result};

pub const CONTEXT_LEN: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Code,
    Position,
    Sos,
    Bos,
    Eos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub n_codes: u32,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary { n_codes: 4375 }
    }
}

impl Vocabulary {
    pub const N_POSITIONS: u32 = ANCHOR_GRID * ANCHOR_GRID;

    pub fn total(&self) -> u32 {
        self.n_codes + Self::N_POSITIONS + 3
    }

    pub fn sos(&self) -> u32 {
        self.n_codes + Self::N_POSITIONS
    }

    pub fn bos(&self) -> u32 {
        self.sos() + 1
    }

    pub fn eos(&self) -> u32 {
        self.sos() + 2
    }

    pub fn classify(&self, id: u32) -> Result<TokenKind> {
        if id < self.n_codes {
            Ok(TokenKind::Code)
        } else if id < self.n_codes + Self::N_POSITIONS {
            Ok(TokenKind::Position)
        } else if id == self.sos() {
            Ok(TokenKind::Sos)
        } else if id == self.bos() {
            Ok(TokenKind::Bos)
        } else if id == self.eos() {
            Ok(TokenKind::Eos)
        } else {
            Err(Error::Sequence(format!("token id {id} outside the vocabulary of {}", self.total())))
        }
    }

    /// Row-major position id for a grid anchor.
    pub fn position_token(&self, anchor: Anchor) -> u32 {
        self.n_codes + anchor.y * ANCHOR_GRID + anchor.x
    }

    pub fn position_from_token(&self, id: u32) -> Result<Anchor> {
        if !matches!(self.classify(id)?, TokenKind::Position) {
            return Err(Error::Sequence(format!("id {id} is not a position token")));
        }
        let rel = id - self.n_codes;
        Anchor::new(rel % ANCHOR_GRID, rel / ANCHOR_GRID)
    }
}

/// One `(anchor, code)` pair of the interleaved layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenPair {
    pub anchor: Anchor,
    pub code: u32,
}

/// `<SOS> [text slots] <BOS> (position, code)... <EOS>` as vocabulary ids.
/// Text occupies `text_len` embedding slots after `<SOS>`; those slots carry
/// no vocabulary id and are filled at embedding time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub text_len: usize,
}

impl TokenSequence {
    /// Total length including the text slots.
    pub fn len(&self) -> usize {
        self.ids.len() + self.text_len
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Builds the interleaved id sequence for a list of pairs.
pub fn build_sequence(vocab: &Vocabulary, text_len: usize, pairs: &[TokenPair]) -> Result<TokenSequence> {
    let total = text_len + 2 * pairs.len() + 3;
    if total > CONTEXT_LEN {
        return Err(Error::Sequence(format!("sequence length {total} exceeds context {CONTEXT_LEN}")));
    }
    let mut ids = Vec::with_capacity(2 * pairs.len() + 3);
    ids.push(vocab.sos());
    ids.push(vocab.bos());
    for pair in pairs {
        if pair.code >= vocab.n_codes {
            return Err(Error::Sequence(format!("code {} outside codebook of {}", pair.code, vocab.n_codes)));
        }
        ids.push(vocab.position_token(pair.anchor));
        ids.push(pair.code);
    }
    ids.push(vocab.eos());
    Ok(TokenSequence { ids, text_len })
}

/// Recovers `(anchor, code)` pairs from a sequence.
///
/// Strict mode enforces the full grammar. Tolerant mode accepts truncation
/// anywhere after `<BOS>` (a trailing unpaired position token is dropped).
pub fn parse_sequence(vocab: &Vocabulary, seq: &TokenSequence, strict: bool) -> Result<Vec<TokenPair>> {
    let mut it = seq.ids.iter().copied();
    match it.next().map(|id| vocab.classify(id)).transpose()? {
        Some(TokenKind::Sos) => {}
        other => return Err(Error::Sequence(format!("sequence must begin with <SOS>, got {other:?}"))),
    }
    match it.next().map(|id| vocab.classify(id)).transpose()? {
        Some(TokenKind::Bos) => {}
        other => return Err(Error::Sequence(format!("expected <BOS>, got {other:?}"))),
    }
    let mut pairs = Vec::new();
    let mut pending: Option<Anchor> = None;
    let mut terminated = false;
    for id in it {
        if terminated {
            return Err(Error::Sequence("tokens after <EOS>".into()));
        }
        match (vocab.classify(id)?, pending) {
            (TokenKind::Position, None) => pending = Some(vocab.position_from_token(id)?),
            (TokenKind::Code, Some(anchor)) => {
                pairs.push(TokenPair { anchor, code: id });
                pending = None;
            }
            (TokenKind::Eos, None) => terminated = true,
            (kind, _) => {
                return Err(Error::Sequence(format!(
                    "alternation violation: {kind:?} while {} a position",
                    if pending.is_some() { "holding" } else { "expecting" }
                )))
            }
        }
    }
    if strict {
        if !terminated {
            return Err(Error::Sequence("sequence does not end with <EOS>".into()));
        }
    }
    // tolerant: a trailing unpaired position is dropped silently
    Ok(pairs)
}

/// One line of the tokenized corpus (JSONL wire format).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizedSample {
    pub source_id: String,
    pub prompt: String,
    /// `[anchor_x, anchor_y, code]` triples in stroke order.
    pub pairs: Vec<[u32; 3]>,
}

impl TokenizedSample {
    pub fn token_pairs(&self) -> Result<Vec<TokenPair>> {
        self.pairs
            .iter()
            .map(|&[x, y, code]| Ok(TokenPair { anchor: Anchor::new(x, y)?, code }))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    pub dropped: usize,
    pub dropped_fraction: f64,
}

/// Drops samples with fewer than `min_code_tokens` code tokens or a total
/// sequence length above the context limit.
pub fn filter_by_length(
    samples: Vec<TokenizedSample>,
    text_len_of: impl Fn(&TokenizedSample) -> usize,
    codes_per_shape: usize,
    min_code_tokens: usize,
) -> (Vec<TokenizedSample>, FilterReport) {
    let total = samples.len();
    let kept: Vec<TokenizedSample> = samples
        .into_iter()
        .filter(|s| {
            let code_tokens = s.pairs.len() * codes_per_shape.max(1);
            let seq_len = text_len_of(s) + 2 * s.pairs.len() + 3;
            code_tokens >= min_code_tokens && seq_len <= CONTEXT_LEN
        })
        .collect();
    let dropped = total - kept.len();
    let report = FilterReport {
        kept: kept.len(),
        dropped,
        dropped_fraction: if total == 0 { 0.0 } else { dropped as f64 / total as f64 },
    };
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(x: u32, y: u32, code: u32) -> TokenPair {
        TokenPair { anchor: Anchor::new(x, y).unwrap(), code }
    }

    #[test]
    fn vocabulary_arithmetic() {
        let v = Vocabulary::default();
        assert_eq!(v.total(), 69_914);
        assert_eq!(v.sos(), 69_911);
        assert_eq!(v.bos(), 69_912);
        assert_eq!(v.eos(), 69_913);
    }

    #[test]
    fn position_token_layout() {
        let v = Vocabulary::default();
        assert_eq!(v.position_token(Anchor::new(0, 0).unwrap()), 4375);
        assert_eq!(v.position_token(Anchor::new(255, 255).unwrap()), 69_910);
        assert_eq!(v.position_token(Anchor::new(10, 2).unwrap()), 4897);
        assert_eq!(v.position_from_token(4897).unwrap(), Anchor::new(10, 2).unwrap());
    }

    #[test]
    fn vocabulary_partition_is_exhaustive() {
        let v = Vocabulary::default();
        let mut counts = [0usize; 5];
        for id in 0..v.total() {
            let k = v.classify(id).unwrap();
            counts[match k {
                TokenKind::Code => 0,
                TokenKind::Position => 1,
                TokenKind::Sos => 2,
                TokenKind::Bos => 3,
                TokenKind::Eos => 4,
            }] += 1;
        }
        assert_eq!(counts, [4375, 65_536, 1, 1, 1]);
        assert!(v.classify(v.total()).is_err());
    }

    #[test]
    fn minimal_sequence() {
        let v = Vocabulary::default();
        let seq = build_sequence(&v, 0, &[pair(0, 0, 0)]).unwrap();
        assert_eq!(seq.ids, vec![69_911, 69_912, 4375, 0, 69_913]);
        assert_eq!(seq.len(), 5);
    }

    #[test]
    fn roundtrip_and_length() {
        let v = Vocabulary::default();
        let pairs = vec![pair(3, 4, 17), pair(200, 100, 4374), pair(0, 255, 1)];
        let seq = build_sequence(&v, 2, &pairs).unwrap();
        assert_eq!(seq.len(), 2 + 2 * 3 + 3);
        assert_eq!(parse_sequence(&v, &seq, true).unwrap(), pairs);
    }

    #[test]
    fn tolerant_truncation() {
        let v = Vocabulary::default();
        let pairs = vec![pair(1, 1, 5), pair(2, 2, 6)];
        let mut seq = build_sequence(&v, 0, &pairs).unwrap();
        seq.ids.pop(); // lose <EOS>
        seq.ids.pop(); // lose the last code -> trailing unpaired position
        assert_eq!(parse_sequence(&v, &seq, false).unwrap(), vec![pairs[0]]);
        assert!(parse_sequence(&v, &seq, true).is_err());
    }

    #[test]
    fn strict_rejects_non_alternating() {
        let v = Vocabulary::default();
        let seq = TokenSequence {
            ids: vec![v.sos(), v.bos(), v.position_token(Anchor::new(1, 1).unwrap()), v.position_token(Anchor::new(2, 2).unwrap()), v.eos()],
            text_len: 0,
        };
        assert!(parse_sequence(&v, &seq, true).is_err());
        // code where position expected
        let seq = TokenSequence { ids: vec![v.sos(), v.bos(), 12, v.eos()], text_len: 0 };
        assert!(parse_sequence(&v, &seq, true).is_err());
    }

    #[test]
    fn length_filter_boundaries() {
        let mk = |n: usize| TokenizedSample {
            source_id: "s".into(),
            prompt: "p".into(),
            pairs: vec![[0, 0, 0]; n],
        };
        // 9 code tokens with one code per shape -> dropped
        let (kept, rep) = filter_by_length(vec![mk(9), mk(10)], |_| 1, 1, 10);
        assert_eq!(kept.len(), 1);
        assert_eq!(rep.dropped, 1);
        // total length exactly 512 is kept: text 1 + 2n + 3 = 512 -> n = 254
        let (kept, _) = filter_by_length(vec![mk(254), mk(255)], |_| 1, 1, 10);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].pairs.len(), 254);
    }
}
