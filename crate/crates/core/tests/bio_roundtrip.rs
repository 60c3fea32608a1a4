use arce::data::{
    bio_to_spans, decode_bio, spans_to_bio, EntitySpan, LabelScheme, Sentence, TagSequence,
};
use proptest::prelude::*;

const TYPES: [&str; 3] = ["alpha", "beta", "gamma"];

fn scheme() -> LabelScheme {
    LabelScheme::new(TYPES)
}

fn sentence(n: usize) -> Sentence {
    Sentence::new("s", (0..n).map(|i| format!("w{i}"))).unwrap()
}

/// Sentence length plus non-overlapping spans in left-to-right order, built
/// from a list of (gap, length, type) pieces.
fn spans_strategy() -> impl Strategy<Value = (usize, Vec<EntitySpan>)> {
    prop::collection::vec((0usize..3, 1usize..4, 0usize..TYPES.len()), 0..6).prop_flat_map(
        |pieces| {
            let mut pos = 0;
            let mut spans = Vec::new();
            for (gap, len, k) in pieces {
                pos += gap;
                spans.push(EntitySpan::new(pos, pos + len, TYPES[k]));
                pos += len;
            }
            (pos.max(1)..pos + 4).prop_map(move |n| (n, spans.clone()))
        },
    )
}

fn tags_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..scheme().num_tags(), 0..16)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn spans_survive_encoding((n, spans) in spans_strategy()) {
        let s = scheme();
        let tags = spans_to_bio(&sentence(n), &spans, &s).unwrap();
        prop_assert_eq!(tags.len(), n);
        let decoded = decode_bio(&tags, &s);
        prop_assert!(decoded.repaired.is_empty());
        prop_assert_eq!(decoded.spans, spans);
    }

    #[test]
    fn repair_is_idempotent(raw in tags_strategy()) {
        let s = scheme();
        let once = bio_to_spans(&TagSequence(raw.clone()), &s);
        let clean = spans_to_bio(&sentence(raw.len().max(1)), &once, &s).unwrap();
        let clean = TagSequence(clean.0[..raw.len()].to_vec());
        let twice = decode_bio(&clean, &s);
        prop_assert!(twice.repaired.is_empty());
        prop_assert_eq!(&twice.spans, &once);
        let again = spans_to_bio(&sentence(raw.len().max(1)), &twice.spans, &s).unwrap();
        prop_assert_eq!(&again.0[..raw.len()], clean.as_slice());
        // Every legal sequence needs no repair.
        let legal = (0..raw.len()).all(|i| s.allows(if i == 0 { None } else { Some(raw[i - 1]) }, raw[i]));
        prop_assert_eq!(legal, decode_bio(&TagSequence(raw), &s).repaired.is_empty());
    }
}
