use arce::cote::{
    build_corpus, ChatEndpointConfig, CoteCorpus, CoteRecord, MockBackend, PromptStrategy,
    Provenance, StrategyKind,
};
use arce::data::vocab::{MASK, NUM_RESERVED};
use arce::data::{build_vocab, EntitySpan, TokenizationMode, Vocab};
use arce::encoder::{init_params, EncoderConfig, EncoderParams};
use arce::mlm::{mask_tokens_detailed, pretrain, PretrainConfig, Replacement};
use arce::rng;
use arce::synth::toy_dataset;
use rand::Rng;

#[test]
fn masking_statistics_over_many_positions() {
    let cfg = PretrainConfig::default();
    let vocab_size = 60;
    let mut r = rng::rng(51);
    let (mut eligible, mut selected) = (0usize, 0usize);
    let mut kinds = [0usize; 3];
    for seq in 0..400 {
        // Reserved ids sprinkled among ordinary ones.
        let ids: Vec<u32> = (0..40)
            .map(|_| {
                if r.random_bool(0.1) {
                    r.random_range(0..NUM_RESERVED)
                } else {
                    r.random_range(NUM_RESERVED..60)
                }
            })
            .collect();
        let (batch, how) = mask_tokens_detailed(&ids, &cfg, vocab_size, seq).unwrap();
        eligible += ids.iter().filter(|&&id| id >= NUM_RESERVED).count();
        selected += batch.targets.len();
        for (&pos, kind) in batch.targets.iter().zip(&how) {
            assert!(ids[pos] >= NUM_RESERVED, "reserved position {pos} selected");
            assert_eq!(
                batch.originals[batch.targets.iter().position(|&p| p == pos).unwrap()],
                ids[pos]
            );
            match kind {
                Replacement::Mask => {
                    assert_eq!(batch.corrupted[pos], MASK);
                    kinds[0] += 1;
                }
                Replacement::Random => {
                    assert!(batch.corrupted[pos] >= NUM_RESERVED);
                    kinds[1] += 1;
                }
                Replacement::Keep => {
                    assert_eq!(batch.corrupted[pos], ids[pos]);
                    kinds[2] += 1;
                }
            }
        }
        for i in (0..ids.len()).filter(|i| !batch.targets.contains(i)) {
            assert_eq!(batch.corrupted[i], ids[i]);
        }
    }
    assert!(eligible >= 10_000, "{eligible}");
    let frac = selected as f64 / eligible as f64;
    assert!((0.13..=0.17).contains(&frac), "selected fraction {frac}");
    for (k, expected) in kinds.iter().zip([0.8, 0.1, 0.1]) {
        let share = *k as f64 / selected as f64;
        assert!(
            (share - expected).abs() <= 0.03,
            "share {share} vs {expected}"
        );
    }
}

fn toy_setup() -> (CoteCorpus, Vocab, EncoderParams) {
    let mode = TokenizationMode::Latin;
    let data = toy_dataset(30, 0).unwrap();
    let strategy = PromptStrategy::default_for(StrategyKind::Explain);
    let (corpus, _) = build_corpus(
        &data,
        &strategy,
        &ChatEndpointConfig::default(),
        &MockBackend,
        mode,
    )
    .unwrap();
    let texts: Vec<Vec<String>> = corpus
        .records
        .iter()
        .map(|r| mode.tokenize(&r.text))
        .collect();
    let vocab = build_vocab(texts.iter().map(|t| t.iter().map(String::as_str)), 1);
    let params = init_params(
        &EncoderConfig::new(vocab.len(), data.scheme().num_tags()),
        3,
    )
    .unwrap();
    (corpus, vocab, params)
}

#[test]
fn pretraining_lowers_the_loss_and_is_reproducible() {
    let (corpus, vocab, params) = toy_setup();
    let cfg = PretrainConfig {
        seed: 9,
        ..Default::default()
    };
    let run = || {
        pretrain(
            &corpus,
            params.clone(),
            &cfg,
            &vocab,
            TokenizationMode::Latin,
            |_| {},
        )
        .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.epochs.len(), 5);
    assert!(
        a.epochs[4].mean_loss < a.epochs[0].mean_loss,
        "{:?}",
        a.epochs
    );
    assert_eq!(a.params, b.params);
    let losses = |o: &arce::mlm::PretrainOutcome| {
        o.epochs
            .iter()
            .map(|e| e.mean_loss.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(losses(&a), losses(&b));

    let c = pretrain(
        &corpus,
        params.clone(),
        &PretrainConfig { seed: 10, ..cfg },
        &vocab,
        TokenizationMode::Latin,
        |_| {},
    )
    .unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn zero_epochs_returns_the_input() {
    let (corpus, vocab, params) = toy_setup();
    let cfg = PretrainConfig {
        epochs: 0,
        ..Default::default()
    };
    let out = pretrain(
        &corpus,
        params.clone(),
        &cfg,
        &vocab,
        TokenizationMode::Latin,
        |_| {},
    )
    .unwrap();
    assert_eq!(out.params, params);
    assert!(out.epochs.is_empty());
}

#[test]
fn a_single_record_can_be_memorised() {
    let text = "fire doors shall close automatically";
    let corpus = CoteCorpus {
        records: vec![CoteRecord {
            text: text.into(),
            provenance: Provenance {
                sentence_id: "s".into(),
                span: EntitySpan::new(0, 2, "element"),
                strategy: StrategyKind::Explain,
            },
            model: "m".into(),
            finish_reason: None,
            tokens: 5,
        }],
        strategy: StrategyKind::Explain,
        fingerprint: None,
    };
    let vocab = build_vocab([text.split_whitespace()], 1);
    let mut ecfg = EncoderConfig::new(vocab.len(), 3);
    ecfg.dropout = 0.0;
    let params = init_params(&ecfg, 1).unwrap();
    let cfg = PretrainConfig {
        epochs: 50,
        lr: 1e-2,
        batch_size: 1,
        ..Default::default()
    };
    let out = pretrain(
        &corpus,
        params,
        &cfg,
        &vocab,
        TokenizationMode::Latin,
        |_| {},
    )
    .unwrap();
    let tail: f64 = out.epochs[45..].iter().map(|e| e.mean_loss).sum::<f64>() / 5.0;
    assert!(
        tail < 0.1,
        "{:?}",
        out.epochs.iter().map(|e| e.mean_loss).collect::<Vec<_>>()
    );
}

#[test]
fn packing_joins_records_with_eos() {
    let (corpus, vocab, _) = toy_setup();
    let mode = TokenizationMode::Latin;
    let single = arce::mlm::corpus_sequences(&corpus, &vocab, mode, 256, 0);
    assert_eq!(single.len(), corpus.records.len());
    let packed = arce::mlm::corpus_sequences(&corpus, &vocab, mode, 256, 32);
    assert!(packed[..packed.len() - 1].iter().all(|s| s.len() == 32));
    let eos = arce::data::vocab::EOS;
    let flat: Vec<u32> = packed.concat();
    let expected: Vec<u32> = single.join(&eos);
    assert_eq!(flat, expected);
}
