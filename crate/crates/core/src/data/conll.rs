//! Column-formatted dataset files.
//!
//! One `<token>\t<tag>` pair per line, blank lines between sentences and `#`
//! comments at column 0. A `# sent_id = <id>` comment names the sentence that
//! follows; otherwise sentences are named `s00000`, `s00001`, ... by position.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use super::bio::{decode_bio, spans_to_bio};
use super::types::{AnnotatedSentence, Dataset, LabelScheme, Sentence, TagSequence};
use crate::error::{Error, Result};

const SENT_ID_PREFIX: &str = "# sent_id = ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Parsed {
    pub dataset: Dataset,
    pub warnings: Vec<ParseWarning>,
}

struct RawSentence {
    id: Option<String>,
    tokens: Vec<String>,
    tags: Vec<String>,
    lines: Vec<usize>,
}

pub fn parse_dataset(text: &str) -> Result<Parsed> {
    let mut raw: Vec<RawSentence> = Vec::new();
    let mut cur = RawSentence {
        id: None,
        tokens: vec![],
        tags: vec![],
        lines: vec![],
    };

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if let Some(id) = line.strip_prefix(SENT_ID_PREFIX) {
            if !cur.tokens.is_empty() {
                raw.push(std::mem::replace(
                    &mut cur,
                    RawSentence {
                        id: None,
                        tokens: vec![],
                        tags: vec![],
                        lines: vec![],
                    },
                ));
            }
            cur.id = Some(id.trim().to_string());
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        if line.trim().is_empty() {
            if !cur.tokens.is_empty() {
                raw.push(std::mem::replace(
                    &mut cur,
                    RawSentence {
                        id: None,
                        tokens: vec![],
                        tags: vec![],
                        lines: vec![],
                    },
                ));
            }
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.trim_end_matches('\r').split('\t').collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() != 2 || fields[0].is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 2 columns (token, tag), found {}", fields.len()),
            });
        }
        let tag = fields[1].trim();
        let valid =
            tag == "O" || matches!(tag.split_once('-'), Some(("B" | "I", t)) if !t.is_empty());
        if !valid {
            return Err(Error::Parse {
                line: lineno,
                message: format!("invalid BIO tag {tag:?}"),
            });
        }
        cur.tokens.push(fields[0].to_string());
        cur.tags.push(tag.to_string());
        cur.lines.push(lineno);
    }
    if !cur.tokens.is_empty() {
        raw.push(cur);
    }

    let scheme = LabelScheme::new(
        raw.iter()
            .flat_map(|r| r.tags.iter())
            .filter_map(|t| t.split_once('-').map(|(_, ty)| ty.to_string())),
    );

    let mut seen = HashSet::new();
    let mut sentences = Vec::with_capacity(raw.len());
    let mut warnings = Vec::new();
    for (k, r) in raw.into_iter().enumerate() {
        let id = r.id.unwrap_or_else(|| format!("s{k:05}"));
        if !seen.insert(id.clone()) {
            return Err(Error::Parse {
                line: r.lines[0],
                message: format!("duplicate sentence id {id:?}"),
            });
        }
        let tags = TagSequence(
            r.tags
                .iter()
                .map(|t| scheme.tag_index(t).unwrap_or(0))
                .collect(),
        );
        let decoded = decode_bio(&tags, &scheme);
        for pos in decoded.repaired {
            warnings.push(ParseWarning {
                line: r.lines[pos],
                message: format!("orphan {} promoted to B- in sentence {id:?}", r.tags[pos]),
            });
        }
        let sentence = Sentence::new(id, r.tokens)?;
        sentences.push(AnnotatedSentence {
            sentence,
            spans: decoded.spans,
        });
    }
    Ok(Parsed {
        dataset: Dataset::new(sentences, scheme)?,
        warnings,
    })
}

pub fn render_dataset(dataset: &Dataset) -> String {
    let mut out = String::new();
    for (k, s) in dataset.sentences().iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        // Spans were validated against this scheme when the dataset was built.
        let tags =
            spans_to_bio(&s.sentence, &s.spans, dataset.scheme()).expect("validated dataset");
        let _ = writeln!(out, "{SENT_ID_PREFIX}{}", s.sentence.id);
        for (tok, &t) in s.sentence.texts().zip(tags.as_slice()) {
            let _ = writeln!(
                out,
                "{tok}\t{}",
                dataset.scheme().tag_name(t).unwrap_or_else(|| "O".into())
            );
        }
    }
    out
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Parsed> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    parse_dataset(&text)
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    std::fs::write(path, render_dataset(dataset))?;
    Ok(())
}
