//! Property-based tests for the pure data-handling layers: token codec,
//! SVG round-trip, FSQ indexing, post-processing, and config overrides.

use proptest::prelude::*;

use strokegen::codec::{build_sequence, parse_sequence, TokenPair, Vocabulary};
use strokegen::config::PipelineConfig;
use strokegen::fsq::{code_index, code_unindex, FsqConfig};
use strokegen::postproc::{path_clip, PostprocConfig, PostprocMode};
use strokegen::svg::{document_to_svg, parse_svg, Anchor, CubicSegment, Point, Rgb, StrokePath, VectorDocument};

fn arb_anchor() -> impl Strategy<Value = Anchor> {
    (0u32..256, 0u32..256).prop_map(|(x, y)| Anchor::new(x, y).unwrap())
}

fn arb_point() -> impl Strategy<Value = Point> {
    (0.0f64..1.0, 0.0f64..1.0).prop_map(|(x, y)| Point::new(x, y))
}

fn arb_stroke() -> impl Strategy<Value = StrokePath> {
    (arb_point(), proptest::collection::vec((arb_point(), arb_point(), arb_point()), 1..4), 0.005f64..0.1)
        .prop_map(|(start, segs, width)| {
            let segments = segs.into_iter().map(|(c1, c2, end)| CubicSegment { c1, c2, end }).collect();
            StrokePath::open(start, segments, width)
        })
}

fn arb_document() -> impl Strategy<Value = VectorDocument> {
    proptest::collection::vec((arb_stroke(), arb_anchor()), 0..6).prop_map(|strokes| {
        let mut doc = VectorDocument::new(256);
        doc.strokes = strokes;
        doc
    })
}

proptest! {
    #[test]
    fn codec_roundtrip(pairs in proptest::collection::vec((arb_anchor(), 0u32..4375), 0..40), text_len in 0usize..8) {
        let vocab = Vocabulary::default();
        let pairs: Vec<TokenPair> = pairs.into_iter().map(|(anchor, code)| TokenPair { anchor, code }).collect();
        let seq = build_sequence(&vocab, text_len, &pairs).unwrap();
        let back = parse_sequence(&vocab, &seq, true).unwrap();
        prop_assert_eq!(back, pairs);
    }

    #[test]
    fn codec_rejects_truncation_in_strict_mode(pairs in proptest::collection::vec((arb_anchor(), 0u32..4375), 1..20)) {
        let vocab = Vocabulary::default();
        let pairs: Vec<TokenPair> = pairs.into_iter().map(|(anchor, code)| TokenPair { anchor, code }).collect();
        let mut seq = build_sequence(&vocab, 0, &pairs).unwrap();
        seq.ids.pop(); // drop <EOS>
        prop_assert!(parse_sequence(&vocab, &seq, true).is_err());
        // tolerant mode still recovers every complete pair
        prop_assert_eq!(parse_sequence(&vocab, &seq, false).unwrap(), pairs);
    }

    #[test]
    fn fsq_index_bijective(levels in (0u32..7, 0u32..5, 0u32..5, 0u32..5, 0u32..5)) {
        let cfg = FsqConfig::new(vec![7, 5, 5, 5, 5]).unwrap();
        let v = vec![levels.0, levels.1, levels.2, levels.3, levels.4];
        let idx = code_index(&v, &cfg).unwrap();
        prop_assert!(idx < 4375);
        prop_assert_eq!(code_unindex(idx, &cfg).unwrap(), v);
    }

    #[test]
    fn svg_roundtrip_preserves_geometry(doc in arb_document()) {
        let text = document_to_svg(&doc);
        let back = parse_svg(&text).unwrap();
        prop_assert_eq!(back.canvas_size, doc.canvas_size);
        prop_assert_eq!(back.strokes.len(), doc.strokes.len());
        for (a, b) in doc.strokes.iter().zip(back.strokes.iter()) {
            prop_assert_eq!(a.1, b.1, "anchor survives");
            prop_assert_eq!(a.0.closed, b.0.closed);
            prop_assert!((a.0.start.x - b.0.start.x).abs() < 1e-4);
            prop_assert!((a.0.start.y - b.0.start.y).abs() < 1e-4);
            for (sa, sb) in a.0.segments.iter().zip(b.0.segments.iter()) {
                prop_assert!((sa.end.x - sb.end.x).abs() < 1e-4);
                prop_assert!((sa.end.y - sb.end.y).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn path_clip_never_moves_far_and_is_idempotent(doc in arb_document(), max_dist in 0.01f64..0.2) {
        let cfg = PostprocConfig { mode: PostprocMode::Pc, max_dist };
        let once = path_clip(&doc, &cfg).unwrap();
        prop_assert_eq!(once.strokes.len(), doc.strokes.len());
        let twice = path_clip(&once, &cfg).unwrap();
        for (a, b) in once.strokes.iter().zip(twice.strokes.iter()) {
            prop_assert!((a.0.start.x - b.0.start.x).abs() < 1e-9);
            prop_assert!((a.0.start.y - b.0.start.y).abs() < 1e-9);
        }
    }

    #[test]
    fn config_override_roundtrip(alpha in 0.0f64..1.0, steps in 1u64..100_000) {
        let cfg = PipelineConfig::load(None, &[
            format!("vsq.alpha={alpha}"),
            format!("vsq_train.steps={steps}"),
        ]).unwrap();
        prop_assert_eq!(cfg.vsq.alpha, alpha);
        prop_assert_eq!(cfg.vsq_train.steps, steps as usize);
        let back = PipelineConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back.vsq.alpha, alpha);
    }
}

#[test]
fn fill_color_roundtrip() {
    let mut doc = VectorDocument::new(256);
    let mut path = StrokePath::open(Point::new(0.2, 0.2), vec![
        CubicSegment::line(Point::new(0.2, 0.2), Point::new(0.8, 0.2)),
        CubicSegment::line(Point::new(0.8, 0.2), Point::new(0.5, 0.8)),
        CubicSegment::line(Point::new(0.5, 0.8), Point::new(0.2, 0.2)),
    ], 0.02);
    path.closed = true;
    path.width = None;
    path.color = Some(Rgb::new(0.8, 0.2, 0.1));
    doc.strokes.push((path, Anchor::new(128, 128).unwrap()));
    let back = parse_svg(&document_to_svg(&doc)).unwrap();
    let c = back.strokes[0].0.color.unwrap();
    assert!((c.r - 0.8).abs() < 1e-3 && (c.g - 0.2).abs() < 1e-3 && (c.b - 0.1).abs() < 1e-3);
}
