use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{EntitySpan, Sentence, TokenizationMode};
use crate::error::{Error, Result};

pub const PLACEHOLDERS: [&str; 3] = ["{sentence}", "{span}", "{type}"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    /// Short explanation of why the span has its type.
    Explain,
    /// Step-by-step rationale ending in an explanation.
    Think,
    /// Functional role of the span in the clause.
    Role,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [
        StrategyKind::Explain,
        StrategyKind::Think,
        StrategyKind::Role,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Explain => "explain",
            StrategyKind::Think => "think",
            StrategyKind::Role => "role",
        }
    }

    pub fn default_template(self) -> &'static str {
        match self {
            StrategyKind::Explain => {
                "Sentence: {sentence}\nExplain in 2–3 sentences why '{span}' is an entity of type '{type}' in this sentence."
            }
            StrategyKind::Think => {
                "Sentence: {sentence}\nExplain why '{span}' is an entity of type '{type}' in this sentence. \
                 Reason step by step, then conclude with the explanation."
            }
            StrategyKind::Role => {
                "Sentence: {sentence}\nThe highlighted span is an entity of type '{type}'. \
                 Describe the functional role '{span}' plays in the regulation described."
            }
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown strategy {s:?} (expected explain, think or role)"
                ))
            })
    }
}

/// A prompt template for one strategy. Each placeholder occurs exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptStrategy {
    kind: StrategyKind,
    template: String,
}

impl PromptStrategy {
    pub fn new(kind: StrategyKind, template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        for p in PLACEHOLDERS {
            let count = template.matches(p).count();
            if count != 1 {
                return Err(Error::invalid(format!(
                    "prompt template must contain {p} exactly once, found {count}"
                )));
            }
        }
        Ok(PromptStrategy { kind, template })
    }

    pub fn default_for(kind: StrategyKind) -> Self {
        Self::new(kind, kind.default_template()).expect("built-in templates are valid")
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    /// Substitutes all placeholders in a single left-to-right pass, so
    /// placeholder-like text inside the values is left alone.
    fn render(&self, sentence: &str, span: &str, etype: &str) -> String {
        let mut out = String::with_capacity(self.template.len() + sentence.len());
        let mut rest = self.template.as_str();
        while let Some(pos) = rest.find('{') {
            out.push_str(&rest[..pos]);
            let tail = &rest[pos..];
            let hit = [
                ("{sentence}", sentence),
                ("{span}", span),
                ("{type}", etype),
            ]
            .into_iter()
            .find(|(p, _)| tail.starts_with(p));
            match hit {
                Some((p, value)) => {
                    out.push_str(value);
                    rest = &tail[p.len()..];
                }
                None => {
                    out.push('{');
                    rest = &tail[1..];
                }
            }
        }
        out.push_str(rest);
        out
    }
}

/// Where a prompt (and the elucidation answering it) came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub sentence_id: String,
    pub span: EntitySpan,
    pub strategy: StrategyKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub text: String,
    pub provenance: Provenance,
    /// Detokenized sentence, kept for the deterministic mock endpoint.
    pub sentence_text: String,
    /// Surface text of the span.
    pub span_text: String,
}

pub fn build_prompt(
    strategy: &PromptStrategy,
    sentence: &Sentence,
    span: &EntitySpan,
    etype: &str,
    mode: TokenizationMode,
) -> Result<Prompt> {
    span.check_bounds(sentence.len())?;
    if etype.is_empty() {
        return Err(Error::invalid("entity type must be non-empty"));
    }
    let texts: Vec<&str> = sentence.texts().collect();
    let sentence_text = mode.detokenize(&texts);
    let span_text = mode.detokenize(&texts[span.start..span.end]);
    let text = strategy.render(&sentence_text, &span_text, etype);
    Ok(Prompt {
        text,
        provenance: Provenance {
            sentence_id: sentence.id.clone(),
            span: EntitySpan::new(span.start, span.end, etype),
            strategy: strategy.kind(),
        },
        sentence_text,
        span_text,
    })
}
