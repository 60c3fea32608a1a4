//! The pipeline commands as plain functions. Harness commands (`ablate`,
//! `scale`) only compose `pretrain_stage` and `finetune_stage`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use arce::checkpoint::{self, CheckpointKind, EncoderCheckpoint, SeedRecord};
use arce::cote::{
    build_corpus, meta_path, subset_corpus, ChatBackend, CorpusSummary, CoteCorpus, HttpBackend,
    MockBackend, PromptStrategy, StrategyKind,
};
use arce::data::{build_vocab, split_dataset, Dataset, Sentence, TokenizationMode, Vocab};
use arce::encoder::init_params;
use arce::eval::{
    emit_report, evaluate, percent, read_predictions, write_predictions, EvalReport, ReportTable,
    ScoreBlock, SentenceSpans,
};
use arce::mlm::{pretrain, PretrainEpoch};
use arce::rng;
use arce::train::{finetune, gold_spans, FinetuneEpoch, NerModel};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

fn require(path: &Path, what: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput {
            what,
            path: path.to_path_buf(),
        })
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    require(path, "dataset")?;
    let parsed = arce::data::read_dataset(path)?;
    for w in &parsed.warnings {
        log::warn!("{}: {w:?}", path.display());
    }
    Ok(parsed.dataset)
}

/// Vocabulary over corpus text (when given) and dataset tokens. Both arms
/// of a pretraining comparison build it the same way.
pub fn pipeline_vocab(corpus: Option<&CoteCorpus>, d: &Dataset, mode: TokenizationMode) -> Vocab {
    let mut texts: Vec<Vec<String>> = Vec::new();
    if let Some(c) = corpus {
        texts.extend(c.records.iter().map(|r| mode.tokenize(&r.text)));
    }
    texts.extend(
        d.sentences()
            .iter()
            .map(|a| a.sentence.texts().map(String::from).collect()),
    );
    build_vocab(texts.iter().map(|t| t.iter().map(String::as_str)), 1)
}

fn fresh_encoder(cfg: &RunConfig, vocab: Vocab, d: &Dataset) -> Result<EncoderCheckpoint> {
    let ecfg = cfg.encoder.config(vocab.len(), d.scheme().num_tags());
    let mut params = init_params(&ecfg, rng::derive_seed(cfg.seed, &[1000]))?;
    // Checkpoints hold f32; round now so a fresh encoder matches a saved one.
    for (_, t) in params.tensors_mut() {
        t.as_mut_slice()
            .iter_mut()
            .for_each(|x| *x = *x as f32 as f64);
    }
    Ok(EncoderCheckpoint {
        params,
        vocab,
        tokenization: cfg.tokenization,
        seed_lineage: vec![SeedRecord {
            stage: "init".into(),
            seed: cfg.seed,
        }],
    })
}

/// Line-delimited JSON run log, written as training progresses.
struct RunLog {
    path: PathBuf,
    out: BufWriter<File>,
    failed: Option<std::io::Error>,
}

impl RunLog {
    fn create(path: PathBuf) -> Result<Self> {
        if let Some(dir) = path.parent() {
            create_dir(dir)?;
        }
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(RunLog {
            path,
            out: BufWriter::new(file),
            failed: None,
        })
    }

    fn write(&mut self, line: &impl Serialize) {
        if self.failed.is_some() {
            return;
        }
        let res = serde_json::to_writer(&mut self.out, line)
            .map_err(std::io::Error::other)
            .and_then(|_| self.out.write_all(b"\n"))
            .and_then(|_| self.out.flush());
        if let Err(e) = res {
            self.failed = Some(e);
        }
    }

    fn finish(mut self) -> Result<()> {
        match self.failed.take() {
            Some(e) => Err(CliError::io(&self.path, e)),
            None => self.out.flush().map_err(|e| CliError::io(&self.path, e)),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoteOutput {
    pub corpus: PathBuf,
    pub records: usize,
    #[serde(flatten)]
    pub summary: CorpusSummary,
}

/// Stage 1: one elucidation per entity of the dataset.
pub fn generate_cote(cfg: &RunConfig) -> Result<CoteOutput> {
    let d = load_dataset(&cfg.dataset)?;
    let strategy = PromptStrategy::default_for(cfg.strategy);
    let backend: Box<dyn ChatBackend> = if cfg.mock {
        Box::new(MockBackend)
    } else {
        Box::new(HttpBackend::new(&cfg.endpoint)?)
    };
    let path = cfg.corpus_path();
    let (corpus, summary) = build_corpus(
        &d,
        &strategy,
        &cfg.endpoint,
        backend.as_ref(),
        cfg.tokenization,
    )?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    if let Err(e) = corpus.save(&path) {
        let _ = fs::remove_file(&path);
        let _ = fs::remove_file(meta_path(&path));
        return Err(e.into());
    }
    log::info!(
        "wrote {} records to {}",
        corpus.records.len(),
        path.display()
    );
    Ok(CoteOutput {
        corpus: path,
        records: corpus.records.len(),
        summary,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PretrainOutput {
    pub checkpoint: PathBuf,
    pub records: usize,
    pub epochs: Vec<PretrainEpoch>,
}

/// Stage 2: masked-LM training on the corpus (or the nested subset given by
/// `corpus_fraction`), from a fresh encoder or from `checkpoint`.
pub fn pretrain_stage(cfg: &RunConfig) -> Result<PretrainOutput> {
    let corpus_path = cfg.corpus_path();
    require(&corpus_path, "corpus")?;
    let full = CoteCorpus::load(&corpus_path)?;
    let d = load_dataset(&cfg.dataset)?;
    if full
        .fingerprint
        .as_deref()
        .is_some_and(|f| f != d.fingerprint())
    {
        log::warn!(
            "corpus {} was generated from a different dataset",
            corpus_path.display()
        );
    }
    let start = match &cfg.checkpoint {
        Some(p) => {
            require(p, "checkpoint")?;
            EncoderCheckpoint::load(p)?
        }
        None => fresh_encoder(cfg, pipeline_vocab(Some(&full), &d, cfg.tokenization), &d)?,
    };
    let corpus = if cfg.corpus_fraction < 1.0 {
        subset_corpus(&full, cfg.corpus_fraction, cfg.seed)?
    } else {
        full
    };

    create_dir(&cfg.out_dir)?;
    let mut run_log = RunLog::create(cfg.out_dir.join("pretrain_log.jsonl"))?;
    let pcfg = cfg.pretrain_config();
    let out = pretrain(
        &corpus,
        start.params,
        &pcfg,
        &start.vocab,
        start.tokenization,
        |e| run_log.write(e),
    )?;
    run_log.finish()?;

    let mut lineage = start.seed_lineage;
    lineage.push(SeedRecord {
        stage: "pretrain".into(),
        seed: pcfg.seed,
    });
    let ck = EncoderCheckpoint {
        params: out.params,
        vocab: start.vocab,
        tokenization: start.tokenization,
        seed_lineage: lineage,
    };
    let path = cfg.encoder_path();
    ck.save(&path)?;
    log::info!("wrote encoder checkpoint {}", path.display());
    Ok(PretrainOutput {
        checkpoint: path,
        records: corpus.records.len(),
        epochs: out.epochs,
    })
}

/// Encoder from an encoder checkpoint, or the encoder of a fine-tuned model
/// whose label scheme must match the dataset.
fn encoder_for(path: &Path, d: &Dataset) -> Result<EncoderCheckpoint> {
    require(path, "encoder checkpoint")?;
    let mut ck = checkpoint::load(path)?;
    if ck.header.kind == CheckpointKind::NerModel {
        let types = ck.header.scheme.clone().unwrap_or_default();
        if types != d.scheme().types() {
            return Err(arce::Error::SchemeMismatch(format!(
                "checkpoint {} has types {types:?}, dataset has {:?}",
                path.display(),
                d.scheme().types()
            ))
            .into());
        }
    }
    let params = checkpoint::encoder_from(&mut ck)?;
    let h = ck.header;
    Ok(EncoderCheckpoint {
        params,
        vocab: h.vocab,
        tokenization: h.tokenization,
        seed_lineage: h.seed_lineage,
    })
}

#[derive(Debug, Clone)]
pub struct FinetuneOutput {
    pub model: PathBuf,
    pub reports: Vec<EvalReport>,
    pub table: ReportTable,
    pub epochs: Vec<FinetuneEpoch>,
    pub best_epoch: usize,
}

impl FinetuneOutput {
    pub fn report(&self, mode: arce::eval::MatchMode) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.mode == mode)
    }
}

/// Stage 3: split 8:1:1, fine-tune encoder + CRF, score the best
/// checkpoint on the test split. `no_pretrain` starts from the same fresh
/// encoder the pretraining stage would have started from.
pub fn finetune_stage(cfg: &RunConfig, no_pretrain: bool) -> Result<FinetuneOutput> {
    let d = load_dataset(&cfg.dataset)?;
    let (train, val, test) = split_dataset(&d, cfg.split, cfg.seed)?;
    let start = if no_pretrain {
        let corpus_path = cfg.corpus_path();
        let corpus = if corpus_path.exists() {
            Some(CoteCorpus::load(&corpus_path)?)
        } else {
            None
        };
        fresh_encoder(
            cfg,
            pipeline_vocab(corpus.as_ref(), &d, cfg.tokenization),
            &d,
        )?
    } else {
        encoder_for(
            &cfg.checkpoint.clone().unwrap_or_else(|| cfg.encoder_path()),
            &d,
        )?
    };

    create_dir(&cfg.out_dir)?;
    let mut run_log = RunLog::create(cfg.out_dir.join("finetune_log.jsonl"))?;
    let out = finetune(
        &start.params,
        &start.vocab,
        start.tokenization,
        &train,
        &val,
        &cfg.finetune_config(),
        start.seed_lineage,
        |e| run_log.write(e),
    )?;
    run_log.finish()?;

    let model_path = cfg.model_path();
    if let Some(dir) = model_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    out.model.save(&model_path)?;

    let preds = out.model.predict_dataset(&test)?;
    let gold = gold_spans(&test);
    let reports = cfg
        .match_modes
        .iter()
        .map(|&m| evaluate(&gold, &preds, m))
        .collect::<arce::Result<Vec<_>>>()?;
    let name = if no_pretrain {
        "no-pretrain"
    } else {
        "pretrained"
    };
    let table = emit_report(
        &reports
            .iter()
            .map(|r| (name.to_string(), r.clone()))
            .collect::<Vec<_>>(),
    );
    write_reports(&cfg.out_dir, "report", &table, &reports)?;
    let mut buf = Vec::new();
    write_predictions(&mut buf, &preds)?;
    write_file(&cfg.out_dir.join("predictions.jsonl"), &buf)?;
    Ok(FinetuneOutput {
        model: model_path,
        reports,
        table,
        epochs: out.epochs,
        best_epoch: out.best_epoch,
    })
}

#[derive(Serialize)]
struct ReportFile<'a> {
    table: &'a ReportTable,
    details: &'a [EvalReport],
}

fn write_reports(
    dir: &Path,
    stem: &str,
    table: &ReportTable,
    details: &[EvalReport],
) -> Result<()> {
    let json =
        serde_json::to_string_pretty(&ReportFile { table, details }).map_err(arce::Error::from)?;
    write_file(&dir.join(format!("{stem}.json")), (json + "\n").as_bytes())?;
    write_file(&dir.join(format!("{stem}.txt")), table.to_text().as_bytes())
}

#[derive(Debug, Clone)]
pub struct EvaluateOutput {
    pub reports: Vec<EvalReport>,
    pub table: ReportTable,
}

/// Scores `predictions` (a prediction file) or the model's own predictions
/// against the test split, or the whole dataset with `whole`.
pub fn evaluate_stage(
    cfg: &RunConfig,
    predictions: Option<&Path>,
    whole: bool,
) -> Result<EvaluateOutput> {
    let d = load_dataset(&cfg.dataset)?;
    let gold_set = if whole {
        d
    } else {
        split_dataset(&d, cfg.split, cfg.seed)?.2
    };
    let gold = gold_spans(&gold_set);
    let (name, preds) = match predictions {
        Some(p) => {
            require(p, "predictions")?;
            let file = File::open(p).map_err(|e| CliError::io(p, e))?;
            (
                p.display().to_string(),
                read_predictions(BufReader::new(file))?,
            )
        }
        None => {
            let path = cfg.model_path();
            require(&path, "model")?;
            let model = NerModel::load(&path)?;
            (
                path.display().to_string(),
                model.predict_dataset(&gold_set)?,
            )
        }
    };
    let reports = cfg
        .match_modes
        .iter()
        .map(|&m| evaluate(&gold, &preds, m))
        .collect::<arce::Result<Vec<_>>>()?;
    let table = emit_report(
        &reports
            .iter()
            .map(|r| (name.clone(), r.clone()))
            .collect::<Vec<_>>(),
    );
    write_reports(&cfg.out_dir, "eval_report", &table, &reports)?;
    Ok(EvaluateOutput { reports, table })
}

/// Pretrain + fine-tune once per prompt strategy under the same seed.
pub fn ablate(cfg: &RunConfig) -> Result<ReportTable> {
    let variants: Vec<(StrategyKind, PathBuf)> = StrategyKind::ALL
        .iter()
        .map(|&k| {
            (
                k,
                cfg.ablation
                    .get(&k)
                    .cloned()
                    .unwrap_or_else(|| cfg.default_corpus_path(k)),
            )
        })
        .collect();
    let missing: Vec<String> = variants
        .iter()
        .filter(|(_, p)| !p.exists())
        .map(|(k, p)| format!("{k} ({})", p.display()))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingVariants { missing });
    }
    let mut named = Vec::new();
    for (k, path) in variants {
        let mut sub = cfg.clone();
        sub.out_dir = cfg.out_dir.join("ablate").join(k.as_str());
        sub.corpus = Some(path);
        sub.checkpoint = None;
        sub.model = None;
        sub.corpus_fraction = 1.0;
        log::info!("ablation variant {k}");
        pretrain_stage(&sub)?;
        let ft = finetune_stage(&sub, false)?;
        named.extend(ft.reports.into_iter().map(|r| (k.to_string(), r)));
    }
    let table = emit_report(&named);
    let details: Vec<EvalReport> = named.into_iter().map(|(_, r)| r).collect();
    write_reports(&cfg.out_dir, "ablation", &table, &details)?;
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub fraction: f64,
    pub label: String,
    pub strict: Option<ScoreBlock>,
    pub partial: Option<ScoreBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScaleRow>,
}

pub fn fraction_label(f: f64) -> String {
    format!("{}%", (f * 100.0).round() as u64)
}

impl ScalingTable {
    pub fn to_text(&self) -> String {
        let cell =
            |b: &Option<ScoreBlock>| b.as_ref().map_or("/".to_string(), |b| percent(b.macro_f1));
        let mut out = format!(
            "{:<10}{:>18}{:>19}\n",
            "Corpus", "Strict Macro-F1", "Partial Macro-F1"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<10}{:>18}{:>19}\n",
                r.label,
                cell(&r.strict),
                cell(&r.partial)
            ));
        }
        out
    }
}

/// Pretrain + fine-tune on nested corpus subsets of increasing size.
pub fn scale(cfg: &RunConfig) -> Result<ScalingTable> {
    let corpus_path = cfg.corpus_path();
    require(&corpus_path, "corpus")?;
    let mut fractions = cfg.fractions.clone();
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();
    let mut rows = Vec::new();
    for f in fractions {
        let label = fraction_label(f);
        let mut sub = cfg.clone();
        sub.out_dir = cfg.out_dir.join("scale").join(label.trim_end_matches('%'));
        sub.corpus = Some(corpus_path.clone());
        sub.corpus_fraction = f;
        sub.checkpoint = None;
        sub.model = None;
        log::info!("scaling run at {label}");
        pretrain_stage(&sub)?;
        let ft = finetune_stage(&sub, false)?;
        let block = |m| ft.report(m).map(ScoreBlock::from);
        rows.push(ScaleRow {
            fraction: f,
            label,
            strict: block(arce::eval::MatchMode::Strict),
            partial: block(arce::eval::MatchMode::Partial),
        });
    }
    let table = ScalingTable { rows };
    let json = serde_json::to_string_pretty(&table).map_err(arce::Error::from)?;
    write_file(&cfg.out_dir.join("scaling.json"), (json + "\n").as_bytes())?;
    write_file(&cfg.out_dir.join("scaling.txt"), table.to_text().as_bytes())?;
    Ok(table)
}

/// Tags every line of `input` (ids `line-1`, `line-2`, ...) and writes the
/// prediction file. Blank lines yield an empty span list.
pub fn predict_stage(model_path: &Path, input: &Path, output: &Path) -> Result<usize> {
    require(model_path, "model")?;
    require(input, "input")?;
    let model = NerModel::load(model_path)?;
    let max_len = model.encoder.config.max_len;
    let file = File::open(input).map_err(|e| CliError::io(input, e))?;
    let mut preds = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(input, e))?;
        let id = format!("line-{}", i + 1);
        let tokens = model.tokenization.tokenize(&line);
        if tokens.len() > max_len {
            return Err(CliError::LineTooLong {
                line: i + 1,
                len: tokens.len(),
                max_len,
            });
        }
        let spans = if tokens.is_empty() {
            Vec::new()
        } else {
            model.predict(&Sentence::new(id.clone(), tokens)?)?
        };
        preds.push(SentenceSpans {
            sentence_id: id,
            spans,
        });
    }
    let mut buf = Vec::new();
    write_predictions(&mut buf, &preds)?;
    write_file(output, &buf)?;
    Ok(preds.len())
}
