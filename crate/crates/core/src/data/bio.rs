//! BIO codec between typed spans and per-token tag indices.

use super::types::{EntitySpan, LabelScheme, Sentence, Tag, TagSequence};
use crate::error::{Error, Result};

/// Spans decoded from a tag sequence, with the positions where an orphan
/// `I-τ` had to be promoted to `B-τ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub spans: Vec<EntitySpan>,
    pub repaired: Vec<usize>,
}

pub fn spans_to_bio(
    sentence: &Sentence,
    spans: &[EntitySpan],
    scheme: &LabelScheme,
) -> Result<TagSequence> {
    let n = sentence.len();
    let mut tags = vec![0usize; n];
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for (si, span) in spans.iter().enumerate() {
        span.check_bounds(n)?;
        let k = scheme
            .type_index(&span.etype)
            .ok_or_else(|| Error::invalid(format!("entity type {:?} not in scheme", span.etype)))?;
        for i in span.start..span.end {
            if let Some(other) = owner[i] {
                return Err(Error::OverlappingSpans {
                    first: spans[other].to_string(),
                    second: span.to_string(),
                });
            }
            owner[i] = Some(si);
            tags[i] = scheme.encode(if i == span.start {
                Tag::Begin(k)
            } else {
                Tag::Inside(k)
            });
        }
    }
    Ok(TagSequence(tags))
}

pub fn bio_to_spans(tags: &TagSequence, scheme: &LabelScheme) -> Vec<EntitySpan> {
    decode_bio(tags, scheme).spans
}

/// Maximal `B-τ (I-τ)*` runs become spans. An `I-τ` that does not continue a
/// run of the same type opens a new span (recorded in `repaired`). Indices
/// outside the tag alphabet are read as `O`.
pub fn decode_bio(tags: &TagSequence, scheme: &LabelScheme) -> Decoded {
    let mut spans = Vec::new();
    let mut repaired = Vec::new();
    let mut open: Option<(usize, usize)> = None;

    let close = |open: &mut Option<(usize, usize)>, end: usize, spans: &mut Vec<EntitySpan>| {
        if let Some((start, k)) = open.take() {
            spans.push(EntitySpan::new(start, end, scheme.types()[k].clone()));
        }
    };

    for (i, &t) in tags.as_slice().iter().enumerate() {
        match scheme.decode(t).unwrap_or(Tag::Outside) {
            Tag::Outside => close(&mut open, i, &mut spans),
            Tag::Begin(k) => {
                close(&mut open, i, &mut spans);
                open = Some((i, k));
            }
            Tag::Inside(k) => match open {
                Some((_, j)) if j == k => {}
                _ => {
                    close(&mut open, i, &mut spans);
                    repaired.push(i);
                    open = Some((i, k));
                }
            },
        }
    }
    close(&mut open, tags.len(), &mut spans);
    Decoded { spans, repaired }
}
