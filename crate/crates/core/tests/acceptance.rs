//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use attnpool::diffcore::Tensor;
use attnpool::featurestore::{decode_features, encode_features, generate, InMemoryFeatures, SyntheticSpec};
use attnpool::gradcheck::{check_model_gradients, GradcheckDims};
use attnpool::metrics::{
    emit_report, macro_f1, unweighted_accuracy, weighted_accuracy, ConfusionMatrix, ReportContext,
};
use attnpool::model::{HeadModel, ModelConfig, PoolingMethod};
use attnpool::training::{cosine_lr, cross_validate, evaluate, train_fold, AdamW, TrainConfig};
use attnpool::Error;
use common::{max_abs_diff, naive_pool, random_case};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut all = true;
    for method in PoolingMethod::ALL {
        let groups = check_model_gradients(method, GradcheckDims::default(), 0, 1e-4).unwrap();
        for g in groups {
            worst = worst.max(g.max_rel_err);
            all &= g.passed;
        }
    }
    let took = start.elapsed();
    outcome(
        all && took < Duration::from_secs(60),
        format!("max rel err {worst:.2e} in {took:.2?}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let method = PoolingMethod::ALL[(seed % 3) as usize];
        let case = random_case(1000 + seed, method);
        let out = case.model.pool(&case.h).unwrap();
        let (pooled, weights) = naive_pool(&case.model, &case.h);
        worst = worst.max(max_abs_diff(out.pooled.as_slice(), &pooled));
        for (a, b) in out.attention.iter().zip(&weights) {
            worst = worst.max(max_abs_diff(a.as_slice(), b));
        }
    }
    outcome(worst <= 1e-9, format!("100 cases, max diff {worst:.2e}"))
}

fn permutation_and_normalization() -> Outcome {
    let mut worst_perm = 0.0f64;
    let mut worst_sum = 0.0f64;
    for method in PoolingMethod::ALL {
        for seed in 0..100u64 {
            let case = random_case(5000 + seed, method);
            let mut perm: Vec<usize> = (0..case.h.rows()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = case.model.pool(&case.h).unwrap();
            let b = case.model.pool(&case.h.permute_rows(&perm)).unwrap();
            worst_perm = worst_perm.max(a.pooled.max_abs_diff(&b.pooled));
            for w in &a.attention {
                worst_sum = worst_sum.max((w.as_slice().iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    outcome(
        worst_perm <= 1e-9 && worst_sum <= 1e-9,
        format!("300 cases, perm diff {worst_perm:.2e}, weight-sum err {worst_sum:.2e}"),
    )
}

fn parameter_count() -> Outcome {
    let model = HeadModel::zeros(ModelConfig::new(768, 4, PoolingMethod::Mean)).unwrap();
    let n = model.count_trainable_params();
    outcome(n == 197_632, format!("{n}"))
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let data = generate(&SyntheticSpec::new(4, 10, 50, 32, 50, 0.0, 0)).unwrap();
    let feats = InMemoryFeatures::new(data.layer_features(1).unwrap().to_vec());
    let mut manifest = data.manifest;
    for r in &mut manifest.records {
        r.fold = 1;
    }
    manifest.folds = 2;
    let mut accs = Vec::new();
    for method in PoolingMethod::ALL {
        let tf = train_fold(&manifest, &feats, 0, &ModelConfig::new(32, 4, method), &TrainConfig::default()).unwrap();
        accs.push(format!("{method} {:.3}", tf.trained.final_train_accuracy));
        if tf.trained.final_train_accuracy < 1.0 {
            return outcome(false, accs.join(", "));
        }
    }
    let took = start.elapsed();
    outcome(took < Duration::from_secs(300), format!("{} in {took:.2?}", accs.join(", ")))
}

const SALIENCY_SEEDS: [u64; 5] = [10, 11, 12, 13, 14];
const SALIENCY_D_ENC: usize = 64;
const SALIENCY_PEAK_LR: f64 = 1e-3;

fn saliency_advantage() -> Outcome {
    let mut ua = [0.0f64; 3];
    for seed in SALIENCY_SEEDS {
        let data = generate(&SyntheticSpec::new(4, 100, 200, SALIENCY_D_ENC, 2, 1.0, seed)).unwrap();
        let feats = InMemoryFeatures::new(data.layer_features(1).unwrap().to_vec());
        let tcfg = TrainConfig {
            peak_lr: SALIENCY_PEAK_LR,
            seed,
            ..TrainConfig::default()
        };
        let fold = (seed % 5) as usize;
        for (i, method) in PoolingMethod::ALL.into_iter().enumerate() {
            let cfg = ModelConfig::new(SALIENCY_D_ENC, 4, method);
            let tf = train_fold(&data.manifest, &feats, fold, &cfg, &tcfg).unwrap();
            let cm = evaluate(&tf.trained.model, &data.manifest, &feats, &tf.test_records).unwrap();
            ua[i] += unweighted_accuracy(&cm).unwrap() / SALIENCY_SEEDS.len() as f64;
        }
    }
    let [mean, attentive, qkv] = ua;
    outcome(
        attentive - mean >= 0.05 && qkv - mean >= 0.05,
        format!("held-out UA: mean {mean:.3}, attentive {attentive:.3}, qkv {qkv:.3}"),
    )
}

fn scheduler_and_optimizer() -> Outcome {
    let cfg = TrainConfig::default();
    let total = 750;
    let warm = cfg.warmup_steps(total);
    let at_warm = cosine_lr(warm, total, &cfg).unwrap();
    let at_end = cosine_lr(total, total, &cfg).unwrap();
    let sched_ok = (at_warm - 1e-4).abs() <= 1e-12 && at_end.abs() <= 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w0 = Tensor::from_vec(3, 4, (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
    let mut w = w0.clone();
    let mut opt = AdamW::new([&w]);
    let lr = 3e-4;
    opt.step(vec![&mut w], &[Tensor::zeros(3, 4)], lr, &cfg).unwrap();
    let factor = 1.0 - lr * cfg.weight_decay;
    let decay_ok = w
        .as_slice()
        .iter()
        .zip(w0.as_slice())
        .all(|(&after, &before)| after == before * factor);
    outcome(
        sched_ok && decay_ok,
        format!("lr at warmup end {at_warm:e}, at final step {at_end:e}, zero-grad decay exact: {decay_ok}"),
    )
}

fn metric_units() -> Outcome {
    let c = ConfusionMatrix::from_counts(&[vec![3, 1], vec![1, 1]]).unwrap();
    let (wa, ua, f1) = (
        weighted_accuracy(&c).unwrap(),
        unweighted_accuracy(&c).unwrap(),
        macro_f1(&c).unwrap(),
    );
    let mut ok = (wa - 0.6667).abs() <= 1e-4 && (ua - 0.625).abs() <= 1e-12 && (f1 - 0.625).abs() <= 1e-12;
    let diag = ConfusionMatrix::from_counts(&[vec![4, 0, 0], vec![0, 2, 0], vec![0, 0, 7]]).unwrap();
    for v in [weighted_accuracy(&diag), unweighted_accuracy(&diag), macro_f1(&diag)] {
        ok &= v.unwrap() == 1.0;
    }
    outcome(ok, format!("WA {wa:.4}, UA {ua:.4}, F1 {f1:.4}; diagonal all 1.0"))
}

fn determinism() -> Outcome {
    let data = generate(&SyntheticSpec::new(3, 10, 12, 8, 3, 0.5, 5).with_folds(5)).unwrap();
    let feats = InMemoryFeatures::new(data.layer_features(1).unwrap().to_vec());
    let mcfg = ModelConfig::new(8, 3, PoolingMethod::Attentive)
        .with_d_model(16)
        .with_heads(2, 4);
    let tcfg = TrainConfig {
        epochs: 3,
        batch_size: 4,
        seed: 9,
        ..TrainConfig::default()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let cv = cross_validate(&data.manifest, &feats, &mcfg, &tcfg, 1).unwrap();
        emit_report(d.path(), &cv.folds, &cv.aggregate, &ReportContext::default(), None).unwrap();
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n.to_string_lossy().ends_with(".csv"))
        .collect();
    names.sort();
    let same = names.iter().all(|n| {
        std::fs::read(dirs[0].path().join(n)).unwrap() == std::fs::read(dirs[1].path().join(n)).unwrap()
    });
    outcome(same && !names.is_empty(), format!("{} CSV files compared", names.len()))
}

fn format_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = Tensor::from_vec(
        17,
        9,
        (0..17 * 9).map(|_| f64::from(rng.gen_range(-5.0f32..5.0))).collect(),
    )
    .unwrap();
    let bytes = encode_features(&m).unwrap();
    let back = decode_features(&bytes).unwrap();
    let bitwise = back
        .as_slice()
        .iter()
        .zip(m.as_slice())
        .all(|(a, b)| a.to_bits() == b.to_bits())
        && back.shape() == m.shape();

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let magic_err = matches!(decode_features(&bad_magic), Err(Error::Format(_)));
    let length_err = matches!(decode_features(&bytes[..bytes.len() - 3]), Err(Error::Length { .. }));
    outcome(
        bitwise && magic_err && length_err,
        format!("bitwise {bitwise}, bad magic -> Format {magic_err}, truncated -> Length {length_err}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient correctness", gradient_correctness),
        ("oracle equivalence", oracle_equivalence),
        ("permutation invariance and weight normalization", permutation_and_normalization),
        ("parameter count", parameter_count),
        ("overfit check", overfit),
        ("saliency advantage", saliency_advantage),
        ("scheduler and optimizer units", scheduler_and_optimizer),
        ("metric units", metric_units),
        ("determinism", determinism),
        ("FEA1 format", format_round_trip),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.passed {
            failures += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {}",
            i + 1,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
