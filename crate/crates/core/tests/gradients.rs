//! Analytic gradients against central finite differences.

use arce::crf::{crf_nll, CrfParams};
use arce::data::TagSequence;
use arce::encoder::{
    backward, emissions, encode, init_params, mlm_logits, EmissionMatrix, EncoderConfig,
    EncoderParams,
};
use arce::mlm::{mask_tokens, mlm_loss, PretrainConfig};
use arce::rng;
use arce::tensor::Matrix;
use rand::Rng;

const STEP: f64 = 1e-5;

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-6_f64.max(1e-4 * analytic.abs().max(numeric.abs()))
}

fn random_config(r: &mut rng::Rng) -> EncoderConfig {
    EncoderConfig {
        vocab_size: r.random_range(6..=12),
        embed_dim: r.random_range(1..=8),
        window_radius: r.random_range(0..=2),
        hidden_dim: r.random_range(1..=8),
        num_tags: r.random_range(1..=4) * 2 + 1,
        dropout: if r.random_bool(0.5) { 0.0 } else { 0.3 },
        max_len: 6,
    }
}

/// Larger-than-default weights so the tanh is exercised off its linear part.
fn random_params(cfg: &EncoderConfig, r: &mut rng::Rng) -> EncoderParams {
    let mut p = init_params(cfg, r.random()).unwrap();
    for (_, t) in p.tensors_mut() {
        for x in t.as_mut_slice() {
            *x = r.random_range(-0.8..0.8);
        }
    }
    p
}

fn check_all(
    name: &str,
    p: &mut EncoderParams,
    grads: &EncoderParams,
    loss: &dyn Fn(&EncoderParams) -> f64,
) {
    let gt: Vec<(&str, Matrix)> = grads
        .tensors()
        .iter()
        .map(|(n, t)| (*n, (*t).clone()))
        .collect();
    for (ti, (tname, g)) in gt.iter().enumerate() {
        for k in 0..g.as_slice().len() {
            let orig = p.tensors()[ti].1.as_slice()[k];
            p.tensors_mut()[ti].1.as_mut_slice()[k] = orig + STEP;
            let up = loss(p);
            p.tensors_mut()[ti].1.as_mut_slice()[k] = orig - STEP;
            let down = loss(p);
            p.tensors_mut()[ti].1.as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let analytic = g.as_slice()[k];
            assert!(
                close(analytic, numeric),
                "{name}: {tname}[{k}] analytic {analytic} numeric {numeric}"
            );
        }
    }
}

#[test]
fn encoder_and_masked_lm_gradients_match_finite_differences() {
    let mut r = rng::rng(2024);
    for case in 0..20 {
        let cfg = random_config(&mut r);
        let mut p = random_params(&cfg, &mut r);
        let n = r.random_range(1..=6);
        let ids: Vec<u32> = (0..n)
            .map(|_| r.random_range(5..cfg.vocab_size as u32))
            .collect();
        let mcfg = PretrainConfig {
            mask_ratio: 0.5,
            ..Default::default()
        };
        let batch = mask_tokens(&ids, &mcfg, cfg.vocab_size, r.random()).unwrap();
        let seed: u64 = r.random();

        let loss = |p: &EncoderParams| {
            let f = encode(p, &batch.corrupted, true, seed).unwrap();
            mlm_loss(&mlm_logits(p, &f.hidden).unwrap(), &batch)
                .unwrap()
                .sum
        };
        let fwd = encode(&p, &batch.corrupted, true, seed).unwrap();
        let l = mlm_loss(&mlm_logits(&p, &fwd.hidden).unwrap(), &batch).unwrap();
        let mut g = p.zeros_like();
        backward(&p, &fwd, Some(&l.d_logits), None, &mut g).unwrap();
        check_all(&format!("mlm case {case}"), &mut p, &g, &loss);
    }
}

#[test]
fn crf_loss_through_encoder_matches_finite_differences() {
    let mut r = rng::rng(77);
    for case in 0..20 {
        let cfg = random_config(&mut r);
        let mut p = random_params(&cfg, &mut r);
        let n = r.random_range(1..=6);
        let ids: Vec<u32> = (0..n)
            .map(|_| r.random_range(0..cfg.vocab_size as u32))
            .collect();
        let y = TagSequence((0..n).map(|_| r.random_range(0..cfg.num_tags)).collect());
        let mut crf = CrfParams::new(cfg.num_tags, r.random_bool(0.5));
        for (_, t) in crf.tensors_mut() {
            t.as_mut_slice()
                .iter_mut()
                .for_each(|x| *x = r.random_range(-1.0..1.0));
        }
        let seed: u64 = r.random();

        let loss = |p: &EncoderParams| {
            let f = encode(p, &ids, true, seed).unwrap();
            crf_nll(&emissions(p, &f.hidden).unwrap(), &crf, &y)
                .unwrap()
                .nll
        };
        let fwd = encode(&p, &ids, true, seed).unwrap();
        let l = crf_nll(&emissions(&p, &fwd.hidden).unwrap(), &crf, &y).unwrap();
        let mut g = p.zeros_like();
        backward(&p, &fwd, None, Some(&l.d_emissions), &mut g).unwrap();
        check_all(&format!("crf case {case}"), &mut p, &g, &loss);
    }
}

#[test]
fn crf_nll_gradients_wrt_emissions_and_transitions() {
    let mut r = rng::rng(5);
    for case in 0..20 {
        let n = r.random_range(1..=5);
        let t = r.random_range(1..=4);
        let data: Vec<f64> = (0..n * t).map(|_| r.random_range(-3.0..3.0)).collect();
        let e = Matrix::from_vec(n, t, data).unwrap();
        let mut crf = CrfParams::new(t, r.random_bool(0.5));
        for (_, m) in crf.tensors_mut() {
            m.as_mut_slice()
                .iter_mut()
                .for_each(|x| *x = r.random_range(-2.0..2.0));
        }
        let y = TagSequence((0..n).map(|_| r.random_range(0..t)).collect());
        let l = crf_nll(&EmissionMatrix::new(e.clone()).unwrap(), &crf, &y).unwrap();
        let nll = |e: &Matrix, c: &CrfParams| {
            crf_nll(&EmissionMatrix::new(e.clone()).unwrap(), c, &y)
                .unwrap()
                .nll
        };

        for k in 0..n * t {
            let (mut up, mut down) = (e.clone(), e.clone());
            up.as_mut_slice()[k] += STEP;
            down.as_mut_slice()[k] -= STEP;
            let numeric = (nll(&up, &crf) - nll(&down, &crf)) / (2.0 * STEP);
            let analytic = l.d_emissions.as_slice()[k];
            assert!(
                close(analytic, numeric),
                "case {case}: dE[{k}] {analytic} vs {numeric}"
            );
        }
        let grads: Vec<Matrix> = l
            .d_params
            .tensors()
            .iter()
            .map(|(_, m)| (*m).clone())
            .collect();
        for (ti, g) in grads.iter().enumerate() {
            for k in 0..g.as_slice().len() {
                let (mut up, mut down) = (crf.clone(), crf.clone());
                up.tensors_mut()[ti].1.as_mut_slice()[k] += STEP;
                down.tensors_mut()[ti].1.as_mut_slice()[k] -= STEP;
                let numeric = (nll(&e, &up) - nll(&e, &down)) / (2.0 * STEP);
                let analytic = g.as_slice()[k];
                assert!(
                    close(analytic, numeric),
                    "case {case}: crf tensor {ti}[{k}] {analytic} vs {numeric}"
                );
            }
        }
    }
}

#[test]
fn mlm_logit_gradient_on_random_logits() {
    let mut r = rng::rng(9);
    let data: Vec<f64> = (0..24).map(|_| r.random_range(-4.0..4.0)).collect();
    let logits = Matrix::from_vec(4, 6, data).unwrap();
    let cfg = PretrainConfig {
        mask_ratio: 0.6,
        ..Default::default()
    };
    let batch = mask_tokens(&[5, 5, 5, 5], &cfg, 6, 3).unwrap();
    let l = mlm_loss(&logits, &batch).unwrap();
    for k in 0..24 {
        let (mut up, mut down) = (logits.clone(), logits.clone());
        up.as_mut_slice()[k] += STEP;
        down.as_mut_slice()[k] -= STEP;
        let numeric = (mlm_loss(&up, &batch).unwrap().sum - mlm_loss(&down, &batch).unwrap().sum)
            / (2.0 * STEP);
        assert!(close(l.d_logits.as_slice()[k], numeric), "logit {k}");
    }
}
