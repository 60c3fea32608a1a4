//! Entity-level scoring: strict and partial span matching, per-type and
//! macro-averaged precision/recall/F1, and comparison tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::data::EntitySpan;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Strict,
    Partial,
}

impl MatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchMode::Strict => "strict",
            MatchMode::Partial => "partial",
        }
    }
}

impl std::str::FromStr for MatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(MatchMode::Strict),
            "partial" => Ok(MatchMode::Partial),
            _ => Err(Error::invalid(format!(
                "unknown match mode {s:?} (expected strict or partial)"
            ))),
        }
    }
}

/// Spans for one sentence; also one line of a prediction file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpans {
    pub sentence_id: String,
    pub spans: Vec<EntitySpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    #[serde(rename = "type")]
    pub etype: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl TypeScore {
    pub fn from_counts(etype: impl Into<String>, tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        TypeScore {
            etype: etype.into(),
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: MatchMode,
    /// Sorted by type name; every type seen in gold or predictions.
    pub per_type: Vec<TypeScore>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub sentences: usize,
    pub gold_entities: usize,
    pub pred_entities: usize,
}

impl EvalReport {
    pub fn type_score(&self, etype: &str) -> Option<&TypeScore> {
        self.per_type.iter().find(|t| t.etype == etype)
    }
}

pub fn macro_f1(report: &EvalReport) -> Result<f64> {
    if report.per_type.is_empty() {
        return Err(Error::invalid(
            "no entity types in gold or predictions; macro-F1 is undefined",
        ));
    }
    Ok(report.per_type.iter().map(|t| t.f1).sum::<f64>() / report.per_type.len() as f64)
}

/// Pairs `(gold index, pred index)` of identical spans, each used once.
pub fn strict_pairs(gold: &[EntitySpan], pred: &[EntitySpan]) -> Vec<(usize, usize)> {
    let mut used = vec![false; gold.len()];
    let mut pairs = Vec::new();
    for (pi, p) in pred.iter().enumerate() {
        if let Some(gi) = (0..gold.len()).find(|&g| !used[g] && gold[g] == *p) {
            used[gi] = true;
            pairs.push((gi, pi));
        }
    }
    pairs
}

/// One-to-one matching of same-type overlapping spans, taken greedily by
/// descending overlap, then gold start, then prediction start.
pub fn partial_pairs(gold: &[EntitySpan], pred: &[EntitySpan]) -> Vec<(usize, usize)> {
    let mut cands: Vec<(usize, usize, usize)> = Vec::new();
    for (gi, g) in gold.iter().enumerate() {
        for (pi, p) in pred.iter().enumerate() {
            let ov = g.overlap(p);
            if ov > 0 && g.etype == p.etype {
                cands.push((ov, gi, pi));
            }
        }
    }
    cands.sort_by_key(|&(ov, gi, pi)| {
        let (g, p) = (&gold[gi], &pred[pi]);
        (
            std::cmp::Reverse(ov),
            g.start,
            p.start,
            g.end,
            p.end,
            gi,
            pi,
        )
    });
    let mut gu = vec![false; gold.len()];
    let mut pu = vec![false; pred.len()];
    let mut pairs = Vec::new();
    for (_, gi, pi) in cands {
        if !gu[gi] && !pu[pi] {
            gu[gi] = true;
            pu[pi] = true;
            pairs.push((gi, pi));
        }
    }
    pairs.sort_unstable();
    pairs
}

fn index_by_id(items: &[SentenceSpans], what: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::with_capacity(items.len());
    for (i, s) in items.iter().enumerate() {
        if map.insert(s.sentence_id.clone(), i).is_some() {
            return Err(Error::invalid(format!(
                "duplicate sentence id {:?} in {what}",
                s.sentence_id
            )));
        }
    }
    Ok(map)
}

pub fn evaluate(
    gold: &[SentenceSpans],
    pred: &[SentenceSpans],
    mode: MatchMode,
) -> Result<EvalReport> {
    let gold_ids = index_by_id(gold, "gold")?;
    let pred_ids = index_by_id(pred, "predictions")?;
    if let Some(missing) = gold.iter().find(|g| !pred_ids.contains_key(&g.sentence_id)) {
        return Err(Error::invalid(format!(
            "no predictions for sentence {:?}",
            missing.sentence_id
        )));
    }
    if let Some(extra) = pred.iter().find(|p| !gold_ids.contains_key(&p.sentence_id)) {
        return Err(Error::invalid(format!(
            "predictions for unknown sentence {:?}",
            extra.sentence_id
        )));
    }

    let mut counts: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
    for g in gold {
        let p = &pred[pred_ids[&g.sentence_id]];
        for s in &g.spans {
            counts.entry(&s.etype).or_default()[2] += 1;
        }
        for s in &p.spans {
            counts.entry(&s.etype).or_default()[1] += 1;
        }
        let pairs = match mode {
            MatchMode::Strict => strict_pairs(&g.spans, &p.spans),
            MatchMode::Partial => partial_pairs(&g.spans, &p.spans),
        };
        for (gi, _) in pairs {
            counts
                .get_mut(g.spans[gi].etype.as_str())
                .expect("counted above")[0] += 1;
        }
    }

    let per_type: Vec<TypeScore> = counts
        .into_iter()
        .map(|(t, [tp, n_pred, n_gold])| TypeScore::from_counts(t, tp, n_pred - tp, n_gold - tp))
        .collect();
    let k = per_type.len().max(1) as f64;
    let mean = |f: fn(&TypeScore) -> f64| per_type.iter().map(f).sum::<f64>() / k;
    Ok(EvalReport {
        mode,
        macro_precision: mean(|t| t.precision),
        macro_recall: mean(|t| t.recall),
        macro_f1: mean(|t| t.f1),
        sentences: gold.len(),
        gold_entities: gold.iter().map(|s| s.spans.len()).sum(),
        pred_entities: pred.iter().map(|s| s.spans.len()).sum(),
        per_type,
    })
}

pub fn strict_match(gold: &[SentenceSpans], pred: &[SentenceSpans]) -> Result<EvalReport> {
    evaluate(gold, pred, MatchMode::Strict)
}

pub fn partial_match(gold: &[SentenceSpans], pred: &[SentenceSpans]) -> Result<EvalReport> {
    evaluate(gold, pred, MatchMode::Partial)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBlock {
    pub precision: f64,
    pub recall: f64,
    pub macro_f1: f64,
}

impl From<&EvalReport> for ScoreBlock {
    fn from(r: &EvalReport) -> Self {
        ScoreBlock {
            precision: r.macro_precision,
            recall: r.macro_recall,
            macro_f1: r.macro_f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub strict: Option<ScoreBlock>,
    pub partial: Option<ScoreBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

/// Two decimals of a percentage: 0.772 → "77.20".
pub fn percent(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

impl ReportTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_text(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.model.chars().count())
            .max()
            .unwrap_or(0)
            .max(5);
        let cells = |b: &Option<ScoreBlock>| match b {
            Some(b) => [percent(b.precision), percent(b.recall), percent(b.macro_f1)],
            None => ["/".to_string(), "/".to_string(), "/".to_string()],
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<name_w$}  {:<30}  {:<30}",
            "", "Strict Match (%)", "Partial Match (%)"
        );
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>9} {:>9} {:>10}  {:>9} {:>9} {:>10}",
            "Model", "Precision", "Recall", "Macro-F1", "Precision", "Recall", "Macro-F1"
        );
        for r in &self.rows {
            let [sp, sr, sf] = cells(&r.strict);
            let [pp, pr, pf] = cells(&r.partial);
            let pad = name_w - r.model.chars().count();
            let _ = writeln!(
                out,
                "{}{}  {sp:>9} {sr:>9} {sf:>10}  {pp:>9} {pr:>9} {pf:>10}",
                r.model,
                " ".repeat(pad)
            );
        }
        out
    }
}

/// Groups named reports into one row per name, with strict and partial
/// blocks side by side. Rows keep the order in which names first appear.
pub fn emit_report(reports: &[(String, EvalReport)]) -> ReportTable {
    let mut rows: Vec<ReportRow> = Vec::new();
    for (name, rep) in reports {
        let i = match rows.iter().position(|r| &r.model == name) {
            Some(i) => i,
            None => {
                rows.push(ReportRow {
                    model: name.clone(),
                    strict: None,
                    partial: None,
                });
                rows.len() - 1
            }
        };
        let block = Some(ScoreBlock::from(rep));
        match rep.mode {
            MatchMode::Strict => rows[i].strict = block,
            MatchMode::Partial => rows[i].partial = block,
        }
    }
    ReportTable { rows }
}

pub fn write_predictions(mut w: impl Write, preds: &[SentenceSpans]) -> Result<()> {
    for p in preds {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_predictions(r: impl BufRead) -> Result<Vec<SentenceSpans>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: SentenceSpans = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(s);
    }
    Ok(out)
}

/// Every type named in the given span lists, sorted.
pub fn types_present<'a>(lists: impl IntoIterator<Item = &'a SentenceSpans>) -> BTreeSet<String> {
    lists
        .into_iter()
        .flat_map(|s| s.spans.iter().map(|e| e.etype.clone()))
        .collect()
}
