use std::path::Path;

use crate::checkpoint::{self, CheckpointHeader, CheckpointKind, SeedRecord, FORMAT_VERSION};
use crate::crf::{constrained_viterbi, viterbi, CrfParams, DecodeMode};
use crate::data::{
    bio_to_spans, Dataset, EntitySpan, LabelScheme, Sentence, TagSequence, TokenizationMode, Vocab,
};
use crate::encoder::{emissions, encode, EmissionMatrix, EncoderParams};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, MatchMode, SentenceSpans};
use crate::tensor::Matrix;

/// Encoder, CRF layer and everything needed to tag raw tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct NerModel {
    pub encoder: EncoderParams,
    pub crf: CrfParams,
    pub scheme: LabelScheme,
    pub vocab: Vocab,
    pub tokenization: TokenizationMode,
    pub decode_mode: DecodeMode,
    pub seed_lineage: Vec<SeedRecord>,
}

impl NerModel {
    pub fn validate(&self) -> Result<()> {
        let t = self.scheme.num_tags();
        if self.encoder.config.num_tags != t || self.crf.num_tags() != t {
            return Err(Error::SchemeMismatch(format!(
                "scheme has {t} tags, emission head {}, CRF {}",
                self.encoder.config.num_tags,
                self.crf.num_tags()
            )));
        }
        if self.encoder.config.vocab_size != self.vocab.len() {
            return Err(Error::Shape(format!(
                "encoder vocab_size {} but vocabulary has {} entries",
                self.encoder.config.vocab_size,
                self.vocab.len()
            )));
        }
        self.encoder.check_shapes()?;
        self.crf.validate()
    }

    pub fn token_ids(&self, s: &Sentence) -> Vec<u32> {
        self.vocab.encode(s.texts())
    }

    pub fn emissions(&self, s: &Sentence) -> Result<EmissionMatrix> {
        let fwd = encode(&self.encoder, &self.token_ids(s), false, 0)?;
        emissions(&self.encoder, &fwd.hidden)
    }

    pub fn decode(&self, em: &EmissionMatrix) -> Result<TagSequence> {
        let (tags, _) = match self.decode_mode {
            DecodeMode::Viterbi => viterbi(em, &self.crf)?,
            DecodeMode::Constrained => constrained_viterbi(em, &self.crf, &self.scheme)?,
        };
        Ok(tags)
    }

    pub fn predict_tags(&self, s: &Sentence) -> Result<TagSequence> {
        self.decode(&self.emissions(s)?)
    }

    pub fn predict(&self, s: &Sentence) -> Result<Vec<EntitySpan>> {
        Ok(bio_to_spans(&self.predict_tags(s)?, &self.scheme))
    }

    pub fn predict_dataset(&self, d: &Dataset) -> Result<Vec<SentenceSpans>> {
        d.sentences()
            .iter()
            .map(|a| {
                Ok(SentenceSpans {
                    sentence_id: a.sentence.id.clone(),
                    spans: self.predict(&a.sentence)?,
                })
            })
            .collect()
    }

    pub fn evaluate(&self, d: &Dataset, mode: MatchMode) -> Result<EvalReport> {
        evaluate(&gold_spans(d), &self.predict_dataset(d)?, mode)
    }

    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let mut v: Vec<_> = self.encoder.tensors().into_iter().collect();
        v.extend(self.crf.tensors());
        v
    }

    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            format_version: FORMAT_VERSION,
            kind: CheckpointKind::NerModel,
            config: self.encoder.config.clone(),
            seed_lineage: self.seed_lineage.clone(),
            tokenization: self.tokenization,
            vocab: self.vocab.clone(),
            vocab_hash: self.vocab.hash(),
            scheme: Some(self.scheme.types().to_vec()),
            decode_mode: Some(self.decode_mode),
            crf_boundary: Some(self.crf.has_boundary()),
            tensors: checkpoint::tensor_meta(&self.tensors()),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        checkpoint::to_bytes(&self.header(), &self.tensors())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::save(path, &self.header(), &self.tensors())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut ck = checkpoint::load(path)?;
        if ck.header.kind != CheckpointKind::NerModel {
            return Err(Error::Checkpoint(
                "expected a NER model checkpoint, found a bare encoder".into(),
            ));
        }
        let encoder = checkpoint::encoder_from(&mut ck)?;
        let boundary = ck.header.crf_boundary.unwrap_or(false);
        let mut crf = CrfParams::new(encoder.config.num_tags, boundary);
        for (name, slot) in crf.tensors_mut() {
            *slot = ck.take(name)?;
        }
        let h = ck.header;
        let types = h
            .scheme
            .ok_or_else(|| Error::Checkpoint("model header has no label scheme".into()))?;
        let model = NerModel {
            encoder,
            crf,
            scheme: LabelScheme::new(types),
            vocab: h.vocab,
            tokenization: h.tokenization,
            decode_mode: h.decode_mode.unwrap_or_default(),
            seed_lineage: h.seed_lineage,
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn predict(m: &NerModel, s: &Sentence) -> Result<Vec<EntitySpan>> {
    m.predict(s)
}

/// Gold spans of every sentence, in dataset order.
pub fn gold_spans(d: &Dataset) -> Vec<SentenceSpans> {
    d.sentences()
        .iter()
        .map(|a| SentenceSpans {
            sentence_id: a.sentence.id.clone(),
            spans: a.spans.clone(),
        })
        .collect()
}
