use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub text: String,
    pub index: usize,
}

/// A tokenized sentence. Always holds at least one token.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence {
    pub id: String,
    tokens: Vec<Token>,
}

impl Sentence {
    pub fn new<S: Into<String>>(
        id: impl Into<String>,
        tokens: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let id = id.into();
        let tokens: Vec<Token> = tokens
            .into_iter()
            .enumerate()
            .map(|(index, t)| Token {
                text: t.into(),
                index,
            })
            .collect();
        if tokens.is_empty() {
            return Err(Error::invalid(format!("sentence {id:?} has no tokens")));
        }
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.text.is_empty() || t.text.contains(['\n', '\r']))
        {
            return Err(Error::invalid(format!(
                "sentence {id:?}: token {} is empty or contains a newline",
                bad.index
            )));
        }
        Ok(Sentence { id, tokens })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }
}

/// A typed entity over the token range `start..end`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub etype: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, etype: impl Into<String>) -> Self {
        EntitySpan {
            start,
            end,
            etype: etype.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlap(&self, other: &EntitySpan) -> usize {
        self.end
            .min(other.end)
            .saturating_sub(self.start.max(other.start))
    }

    pub fn check_bounds(&self, n: usize) -> Result<()> {
        if self.start < self.end && self.end <= n {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "span {self} out of bounds for sentence of length {n}"
            )))
        }
    }
}

impl fmt::Display for EntitySpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{},{}}}", self.start, self.end, self.etype)
    }
}

/// One BIO tag, decoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Outside,
    Begin(usize),
    Inside(usize),
}

/// Entity-type inventory and the derived BIO tag alphabet.
///
/// Types are kept sorted so the tag/index bijection only depends on the set
/// of types. Index 0 is `O`; type `k` owns `B` at `1 + 2k` and `I` at `2 + 2k`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelScheme {
    types: Vec<String>,
}

impl LabelScheme {
    pub fn new<S: Into<String>>(types: impl IntoIterator<Item = S>) -> Self {
        let mut types: Vec<String> = types.into_iter().map(Into::into).collect();
        types.sort();
        types.dedup();
        LabelScheme { types }
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn num_tags(&self) -> usize {
        1 + 2 * self.types.len()
    }

    pub fn type_index(&self, etype: &str) -> Option<usize> {
        self.types.binary_search_by(|t| t.as_str().cmp(etype)).ok()
    }

    pub fn encode(&self, tag: Tag) -> usize {
        match tag {
            Tag::Outside => 0,
            Tag::Begin(k) => 1 + 2 * k,
            Tag::Inside(k) => 2 + 2 * k,
        }
    }

    pub fn decode(&self, index: usize) -> Option<Tag> {
        if index == 0 {
            Some(Tag::Outside)
        } else if index < self.num_tags() {
            let k = (index - 1) / 2;
            Some(if (index - 1).is_multiple_of(2) {
                Tag::Begin(k)
            } else {
                Tag::Inside(k)
            })
        } else {
            None
        }
    }

    pub fn tag_name(&self, index: usize) -> Option<String> {
        self.decode(index).map(|tag| match tag {
            Tag::Outside => "O".to_string(),
            Tag::Begin(k) => format!("B-{}", self.types[k]),
            Tag::Inside(k) => format!("I-{}", self.types[k]),
        })
    }

    pub fn tag_index(&self, name: &str) -> Option<usize> {
        if name == "O" {
            return Some(0);
        }
        let (prefix, etype) = name.split_once('-')?;
        let k = self.type_index(etype)?;
        match prefix {
            "B" => Some(self.encode(Tag::Begin(k))),
            "I" => Some(self.encode(Tag::Inside(k))),
            _ => None,
        }
    }

    /// Whether `prev -> next` is a legal BIO transition. `prev = None` means
    /// sentence start.
    pub fn allows(&self, prev: Option<usize>, next: usize) -> bool {
        match self.decode(next) {
            Some(Tag::Inside(k)) => matches!(
                prev.and_then(|p| self.decode(p)),
                Some(Tag::Begin(j)) | Some(Tag::Inside(j)) if j == k
            ),
            Some(_) => true,
            None => false,
        }
    }
}

/// Per-token tag indices for one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TagSequence(pub Vec<usize>);

impl TagSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSentence {
    pub sentence: Sentence,
    pub spans: Vec<EntitySpan>,
}

/// Sentences with gold spans plus the label scheme they are drawn from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    sentences: Vec<AnnotatedSentence>,
    scheme: LabelScheme,
}

impl Dataset {
    /// Validates that every span is in bounds, typed from `scheme`, and that
    /// spans within a sentence are non-overlapping. Spans are sorted by start.
    pub fn new(mut sentences: Vec<AnnotatedSentence>, scheme: LabelScheme) -> Result<Self> {
        for s in &mut sentences {
            s.spans.sort();
            for span in &s.spans {
                span.check_bounds(s.sentence.len())?;
                if scheme.type_index(&span.etype).is_none() {
                    return Err(Error::invalid(format!(
                        "sentence {:?}: entity type {:?} not in scheme",
                        s.sentence.id, span.etype
                    )));
                }
            }
            for pair in s.spans.windows(2) {
                if pair[0].end > pair[1].start {
                    return Err(Error::OverlappingSpans {
                        first: pair[0].to_string(),
                        second: pair[1].to_string(),
                    });
                }
            }
        }
        Ok(Dataset { sentences, scheme })
    }

    pub fn sentences(&self) -> &[AnnotatedSentence] {
        &self.sentences
    }

    pub fn scheme(&self) -> &LabelScheme {
        &self.scheme
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn entity_count(&self) -> usize {
        self.sentences.iter().map(|s| s.spans.len()).sum()
    }

    /// Same scheme, a different selection of sentences.
    pub fn with_sentences(&self, sentences: Vec<AnnotatedSentence>) -> Dataset {
        Dataset {
            sentences,
            scheme: self.scheme.clone(),
        }
    }

    /// SHA-256 over the canonical column rendering.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(crate::data::conll::render_dataset(self).as_bytes());
        hex::encode(hasher.finalize())
    }
}
