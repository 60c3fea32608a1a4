use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::client::{request_elucidation, ChatBackend, ChatEndpointConfig, ElucidationError};
use super::prompt::{build_prompt, PromptStrategy, Provenance, StrategyKind};
use crate::data::{Dataset, EntitySpan, TokenizationMode};
use crate::error::{Error, Result};
use crate::rng;

/// One generated elucidation and the entity instance it explains.
#[derive(Debug, Clone, PartialEq)]
pub struct CoteRecord {
    pub text: String,
    pub provenance: Provenance,
    pub model: String,
    pub finish_reason: Option<String>,
    /// Completion length in tokens, as reported by the endpoint.
    pub tokens: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoteCorpus {
    pub records: Vec<CoteRecord>,
    pub strategy: StrategyKind,
    /// Fingerprint of the dataset the corpus was generated from, when known.
    pub fingerprint: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub total: usize,
    pub generated: usize,
    pub skipped_transient: usize,
    pub skipped_content: usize,
    pub skipped_fatal: usize,
    pub completion_tokens: u64,
}

impl CorpusSummary {
    pub fn failed(&self) -> usize {
        self.skipped_transient + self.skipped_content + self.skipped_fatal
    }
}

/// Generates one elucidation per gold entity instance of `d`.
///
/// Requests run on up to `cfg.max_parallel` worker threads; records come
/// back in dataset order (sentence, then span start) regardless of
/// completion order. Failed instances are skipped and counted, and the whole
/// run is aborted when more than half of them fail.
pub fn build_corpus(
    d: &Dataset,
    strategy: &PromptStrategy,
    cfg: &ChatEndpointConfig,
    backend: &dyn ChatBackend,
    mode: TokenizationMode,
) -> Result<(CoteCorpus, CorpusSummary)> {
    cfg.validate()?;
    let mut prompts = Vec::with_capacity(d.entity_count());
    for s in d.sentences() {
        for span in &s.spans {
            prompts.push(build_prompt(
                strategy,
                &s.sentence,
                span,
                &span.etype,
                mode,
            )?);
        }
    }
    if prompts.is_empty() {
        return Err(Error::invalid(
            "dataset has no entity instances to elucidate",
        ));
    }

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    let workers = cfg.max_parallel.min(prompts.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, prompts) = (&next, &prompts);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= prompts.len() {
                    break;
                }
                if tx
                    .send((i, request_elucidation(backend, cfg, &prompts[i])))
                    .is_err()
                {
                    break;
                }
            });
        }
    });
    drop(tx);
    let mut results: Vec<Option<Result<CoteRecord, ElucidationError>>> = vec![None; prompts.len()];
    for (i, r) in rx {
        results[i] = Some(r);
    }

    let mut summary = CorpusSummary {
        total: prompts.len(),
        ..Default::default()
    };
    let mut records = Vec::with_capacity(prompts.len());
    for (prompt, result) in prompts.iter().zip(results) {
        match result.expect("every prompt produces a result") {
            Ok(rec) => {
                summary.generated += 1;
                summary.completion_tokens += u64::from(rec.tokens);
                records.push(rec);
            }
            Err(e) => {
                log::warn!(
                    "skipping sentence {:?} span {}: {e}",
                    prompt.provenance.sentence_id,
                    prompt.provenance.span
                );
                match e {
                    ElucidationError::Transient { .. } => summary.skipped_transient += 1,
                    ElucidationError::Content(_) => summary.skipped_content += 1,
                    ElucidationError::Fatal(_) => summary.skipped_fatal += 1,
                }
            }
        }
    }
    if summary.failed() * 2 > summary.total {
        return Err(Error::CorpusAborted(summary));
    }
    let corpus = CoteCorpus {
        records,
        strategy: strategy.kind(),
        fingerprint: Some(d.fingerprint()),
    };
    Ok((corpus, summary))
}

/// Seeded sample of `ceil(f * |c|)` records without replacement, kept in
/// corpus order. Samples are prefixes of one seeded permutation, so for a
/// fixed seed smaller fractions are subsets of larger ones.
pub fn subset_corpus(c: &CoteCorpus, fraction: f64, seed: u64) -> Result<CoteCorpus> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "corpus fraction must be in (0, 1], got {fraction}"
        )));
    }
    let n = c.records.len();
    let k = (((n as f64) * fraction) - 1e-9).ceil().max(0.0) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng(seed));
    let mut keep = order[..k.min(n)].to_vec();
    keep.sort_unstable();
    Ok(CoteCorpus {
        records: keep.into_iter().map(|i| c.records[i].clone()).collect(),
        strategy: c.strategy,
        fingerprint: c.fingerprint.clone(),
    })
}

#[derive(Serialize, Deserialize)]
struct CorpusLine {
    text: String,
    sentence_id: String,
    span_start: usize,
    span_end: usize,
    entity_type: String,
    strategy: StrategyKind,
    model: String,
    tokens: u32,
}

#[derive(Serialize, Deserialize)]
struct CorpusMeta {
    strategy: StrategyKind,
    fingerprint: Option<String>,
    records: usize,
}

/// Path of the sidecar holding the dataset fingerprint next to a corpus file.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

impl CoteCorpus {
    pub fn write_jsonl(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        for r in &self.records {
            let line = CorpusLine {
                text: r.text.clone(),
                sentence_id: r.provenance.sentence_id.clone(),
                span_start: r.provenance.span.start,
                span_end: r.provenance.span.end,
                entity_type: r.provenance.span.etype.clone(),
                strategy: r.provenance.strategy,
                model: r.model.clone(),
                tokens: r.tokens,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a corpus. `default_strategy` is used only for an empty file.
    pub fn read_jsonl(r: impl std::io::Read, default_strategy: StrategyKind) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let l: CorpusLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if l.text.trim().is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "empty elucidation text".into(),
                });
            }
            records.push(CoteRecord {
                text: l.text,
                provenance: Provenance {
                    sentence_id: l.sentence_id,
                    span: EntitySpan::new(l.span_start, l.span_end, l.entity_type),
                    strategy: l.strategy,
                },
                model: l.model,
                finish_reason: None,
                tokens: l.tokens.max(1),
            });
        }
        let strategy = records
            .first()
            .map(|r| r.provenance.strategy)
            .unwrap_or(default_strategy);
        if let Some(r) = records.iter().find(|r| r.provenance.strategy != strategy) {
            return Err(Error::invalid(format!(
                "corpus mixes strategies {strategy} and {}",
                r.provenance.strategy
            )));
        }
        Ok(CoteCorpus {
            records,
            strategy,
            fingerprint: None,
        })
    }

    /// Writes the JSONL corpus plus a `.meta.json` sidecar with the dataset
    /// fingerprint.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.write_jsonl(std::fs::File::create(path)?)?;
        let meta = CorpusMeta {
            strategy: self.strategy,
            fingerprint: self.fingerprint.clone(),
            records: self.records.len(),
        };
        std::fs::write(meta_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        let meta: Option<CorpusMeta> = match std::fs::read_to_string(meta_path(path)) {
            Ok(s) => Some(serde_json::from_str(&s)?),
            Err(_) => None,
        };
        let mut corpus = Self::read_jsonl(
            file,
            meta.as_ref().map_or(StrategyKind::Explain, |m| m.strategy),
        )?;
        corpus.fingerprint = meta.and_then(|m| m.fingerprint);
        Ok(corpus)
    }
}
