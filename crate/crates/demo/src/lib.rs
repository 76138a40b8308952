//! Browser demo: learning-rate schedule, a small planted-saliency training run,
//! and confusion-matrix metrics.

use attnpool::featurestore::{generate, InMemoryFeatures, SyntheticSpec};
use attnpool::metrics::{macro_f1, unweighted_accuracy, weighted_accuracy, ConfusionMatrix};
use attnpool::model::{ModelConfig, PoolingMethod};
use attnpool::training::{cosine_lr, fit_observed, Sample, TrainConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(js_err)
}

/// Learning rate at every update step `1..=total_steps`, as a JSON array.
#[wasm_bindgen]
pub fn lr_curve(total_steps: usize, peak_lr: f64, warmup_fraction: f64) -> Result<String, JsError> {
    let cfg = TrainConfig {
        peak_lr,
        warmup_fraction,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(js_err)?;
    let lrs = (1..=total_steps)
        .map(|t| cosine_lr(t, total_steps, &cfg))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(js_err)?;
    to_json(&lrs)
}

#[derive(Serialize)]
struct SaliencyRun {
    losses: Vec<f64>,
    accuracies: Vec<f64>,
    /// Head-averaged attention over the frames of one held-out utterance.
    attention: Vec<f64>,
    salient: Vec<usize>,
    label: usize,
    predicted: usize,
    held_out_accuracy: f64,
}

const DEMO_CLASSES: usize = 4;
const DEMO_FRAMES: usize = 40;
const DEMO_D_ENC: usize = 16;

/// Trains one pooling head on a small planted-saliency set and returns the
/// loss curve plus the attention it puts on a held-out utterance.
#[wasm_bindgen]
pub fn saliency_demo(pooling: &str, seed: u64, epochs: usize, noise_sigma: f64) -> Result<String, JsError> {
    let method: PoolingMethod = pooling.parse().map_err(js_err)?;
    let data = generate(&SyntheticSpec::new(DEMO_CLASSES, 25, DEMO_FRAMES, DEMO_D_ENC, 2, noise_sigma, seed))
        .map_err(js_err)?;
    let feats = data.layer_features(1).ok_or_else(|| JsError::new("no layer 1"))?.to_vec();
    let records = &data.manifest.records;
    // every fifth utterance is held out
    let (train, test): (Vec<usize>, Vec<usize>) = (0..records.len()).partition(|i| i % 5 != 0);
    let samples: Vec<Sample> = train
        .iter()
        .map(|&i| Sample {
            record: i,
            label: records[i].label,
        })
        .collect();
    let model_cfg = ModelConfig::new(DEMO_D_ENC, DEMO_CLASSES, method)
        .with_d_model(32)
        .with_heads(4, 4);
    let cfg = TrainConfig {
        epochs,
        batch_size: 8,
        peak_lr: 3e-3,
        seed,
        ..TrainConfig::default()
    };
    let source = InMemoryFeatures::new(feats.clone());
    let mut losses = Vec::new();
    let mut accuracies = Vec::new();
    let trained = fit_observed(&source, &samples, &model_cfg, &cfg, seed, &mut |m| {
        losses.push(m.loss);
        accuracies.push(m.accuracy);
    })
    .map_err(js_err)?;
    let model = trained.model;

    let mut correct = 0;
    for &i in &test {
        if model.predict(&feats[i]).map_err(js_err)? == records[i].label {
            correct += 1;
        }
    }
    let shown = test[0];
    let pooled = model.pool(&model.project(&feats[shown]).map_err(js_err)?).map_err(js_err)?;
    let attention = if pooled.attention.is_empty() {
        vec![1.0 / DEMO_FRAMES as f64; DEMO_FRAMES]
    } else {
        let heads = pooled.attention.len() as f64;
        (0..DEMO_FRAMES)
            .map(|t| pooled.attention.iter().map(|w| w.as_slice()[t]).sum::<f64>() / heads)
            .collect()
    };
    to_json(&SaliencyRun {
        losses,
        accuracies,
        attention,
        salient: data.salient_positions[shown].clone(),
        label: records[shown].label,
        predicted: model.predict(&feats[shown]).map_err(js_err)?,
        held_out_accuracy: correct as f64 / test.len() as f64,
    })
}

#[derive(Serialize)]
struct Metrics {
    wa: f64,
    ua: f64,
    macro_f1: f64,
    recall: Vec<f64>,
    precision: Vec<f64>,
    f1: Vec<f64>,
}

/// Metrics for a square matrix of counts given as rows of whitespace- or
/// comma-separated integers (one row per line, rows are true classes).
#[wasm_bindgen]
pub fn confusion_metrics(text: &str) -> Result<String, JsError> {
    let rows = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|x| !x.is_empty())
                .map(|x| x.parse::<u64>().map_err(|_| JsError::new(&format!("not a count: {x:?}"))))
                .collect::<Result<Vec<u64>, JsError>>()
        })
        .collect::<Result<Vec<_>, JsError>>()?;
    let c = ConfusionMatrix::from_counts(&rows).map_err(js_err)?;
    let stats = c.class_stats();
    to_json(&Metrics {
        wa: weighted_accuracy(&c).map_err(js_err)?,
        ua: unweighted_accuracy(&c).map_err(js_err)?,
        macro_f1: macro_f1(&c).map_err(js_err)?,
        recall: stats.iter().map(|s| s.recall).collect(),
        precision: stats.iter().map(|s| s.precision).collect(),
        f1: stats.iter().map(|s| s.f1).collect(),
    })
}
