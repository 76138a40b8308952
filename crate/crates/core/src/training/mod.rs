//! Loss, AdamW, cosine warmup schedule, the epoch loop and k-fold cross-validation.

mod optim;

pub use optim::{cosine_lr, AdamW, TrainConfig};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diffcore::{Tape, Tensor, NLL_PROB_FLOOR};
use crate::error::{Error, Result};
use crate::featurestore::{DatasetManifest, FeatureSource};
use crate::metrics::{Aggregate, ConfusionMatrix, FoldReport};
use crate::model::{argmax, HeadModel, ModelConfig};

/// `-ln(max(probs[label], 1e-12))` for a `1 x classes` probability row.
pub fn cross_entropy(probs: &Tensor, label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(Error::Index {
            index: label,
            len: probs.len(),
        });
    }
    Ok(-probs.as_slice()[label].max(NLL_PROB_FLOOR).ln())
}

/// Mixes the run seed with the fold index (splitmix64 finalizer).
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    let mut z = seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean training-mode loss over the epoch.
    pub loss: f64,
    /// Training-mode accuracy over the epoch.
    pub accuracy: f64,
    /// Learning rate used by the epoch's last update.
    pub last_lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: HeadModel,
    pub epochs: Vec<EpochMetrics>,
    /// Accuracy of the final model on its own training set, dropout off.
    pub final_train_accuracy: f64,
}

/// One labelled training example.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sample {
    pub record: usize,
    pub label: usize,
}

/// Trains a freshly initialized model on `samples` for `cfg.epochs` epochs.
pub fn fit(
    features: &dyn FeatureSource,
    samples: &[Sample],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedModel> {
    fit_observed(features, samples, model_cfg, cfg, seed, &mut |_| {})
}

/// [`fit`] with a per-epoch callback.
pub fn fit_observed(
    features: &dyn FeatureSource,
    samples: &[Sample],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainedModel> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Data("empty training split".into()));
    }
    for s in samples {
        if s.label >= model_cfg.num_classes {
            return Err(Error::Index {
                index: s.label,
                len: model_cfg.num_classes,
            });
        }
    }
    let mut model = HeadModel::init(model_cfg.clone(), &mut stream_rng(seed, INIT_STREAM))?;
    let mut shuffle_rng = stream_rng(seed, SHUFFLE_STREAM);
    let mut dropout_rng = stream_rng(seed, DROPOUT_STREAM);
    let mut opt = AdamW::new(model.named_params().into_iter().map(|(_, t)| t));

    let batches_per_epoch = samples.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut step = 0;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut lr = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads: Vec<Tensor> = model
                .named_params()
                .iter()
                .map(|(_, t)| Tensor::zeros(t.rows(), t.cols()))
                .collect();
            for &i in batch {
                let s = samples[i];
                let x = features.load(s.record)?;
                let mut tape = Tape::new();
                let bound = model.bind(&mut tape);
                let trace = bound.forward(&mut tape, &x, true, &mut dropout_rng)?;
                let loss = tape.nll(trace.probs, s.label)?;
                loss_sum += tape.value(loss).get(0, 0);
                if argmax(tape.value(trace.probs).as_slice()) == s.label {
                    correct += 1;
                }
                let g = tape.backward(loss)?;
                for (acc, &v) in grads.iter_mut().zip(bound.params()) {
                    if let Some(gv) = g.get(v) {
                        acc.add_assign(gv);
                    }
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.scale_in_place(inv);
            }
            step += 1;
            lr = cosine_lr(step, total_steps, cfg)?;
            opt.step(model.params_mut(), &grads, lr, cfg)?;
        }
        let m = EpochMetrics {
            epoch,
            loss: loss_sum / samples.len() as f64,
            accuracy: correct as f64 / samples.len() as f64,
            last_lr: lr,
        };
        on_epoch(&m);
        history.push(m);
    }

    let mut right = 0usize;
    for s in samples {
        if model.predict(&*features.load(s.record)?)? == s.label {
            right += 1;
        }
    }
    Ok(TrainedModel {
        model,
        epochs: history,
        final_train_accuracy: right as f64 / samples.len() as f64,
    })
}

/// Confusion matrix of `model` over `records`, dropout off.
pub fn evaluate(
    model: &HeadModel,
    manifest: &DatasetManifest,
    features: &dyn FeatureSource,
    records: &[usize],
) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(manifest.classes.clone());
    for &r in records {
        let pred = model.predict(&*features.load(r)?)?;
        cm.record(manifest.records[r].label, pred)?;
    }
    Ok(cm)
}

#[derive(Clone, Debug)]
pub struct TrainedFold {
    pub fold: usize,
    pub trained: TrainedModel,
    /// Record indices drawn into training batches.
    pub train_records: Vec<usize>,
    pub test_records: Vec<usize>,
}

fn check_features(manifest: &DatasetManifest, features: &dyn FeatureSource) -> Result<()> {
    if features.len() != manifest.records.len() {
        return Err(Error::Data(format!(
            "feature source has {} entries, manifest has {} records",
            features.len(),
            manifest.records.len()
        )));
    }
    Ok(())
}

/// Trains on every record whose fold differs from `fold`.
pub fn train_fold(
    manifest: &DatasetManifest,
    features: &dyn FeatureSource,
    fold: usize,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainedFold> {
    if fold >= manifest.folds {
        return Err(Error::FoldOutOfRange {
            line: 0,
            fold,
            k: manifest.folds,
        });
    }
    check_features(manifest, features)?;
    let (train, test) = manifest.split(fold);
    let samples: Vec<Sample> = train
        .iter()
        .map(|&r| Sample {
            record: r,
            label: manifest.records[r].label,
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::Data(format!("fold {fold}: empty training split")));
    }
    let trained = fit(features, &samples, model_cfg, train_cfg, fold_seed(train_cfg.seed, fold))?;
    Ok(TrainedFold {
        fold,
        trained,
        train_records: train,
        test_records: test,
    })
}

#[derive(Clone, Debug)]
pub struct CvResult {
    pub folds: Vec<FoldReport>,
    pub aggregate: Aggregate,
    pub histories: Vec<Vec<EpochMetrics>>,
}

/// One [`train_fold`] plus held-out evaluation per fold. `jobs` bounds fold
/// parallelism (0 = all available cores); results do not depend on it.
pub fn cross_validate(
    manifest: &DatasetManifest,
    features: &dyn FeatureSource,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    jobs: usize,
) -> Result<CvResult> {
    if manifest.folds < 2 {
        return Err(Error::Config(format!(
            "cross-validation needs k >= 2 folds, manifest has {}",
            manifest.folds
        )));
    }
    model_cfg.validate()?;
    train_cfg.validate()?;
    check_features(manifest, features)?;

    let run_fold = |fold: usize| -> Result<(FoldReport, Vec<EpochMetrics>)> {
        let tf = train_fold(manifest, features, fold, model_cfg, train_cfg)?;
        if tf.test_records.is_empty() {
            return Err(Error::MissingFold { fold });
        }
        let cm = evaluate(&tf.trained.model, manifest, features, &tf.test_records)?;
        Ok((FoldReport::from_confusion(fold, cm)?, tf.trained.epochs))
    };
    let outcomes = run_folds(manifest.folds, jobs, &run_fold)?;

    let (folds, histories): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    let aggregate = Aggregate::from_folds(&folds)?;
    Ok(CvResult {
        folds,
        aggregate,
        histories,
    })
}

#[cfg(feature = "parallel")]
fn run_folds<T: Send>(
    k: usize,
    jobs: usize,
    f: &(dyn Fn(usize) -> Result<T> + Sync),
) -> Result<Vec<T>> {
    use rayon::prelude::*;
    if jobs == 1 {
        return (0..k).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| (0..k).into_par_iter().map(f).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_folds<T: Send>(
    k: usize,
    _jobs: usize,
    f: &(dyn Fn(usize) -> Result<T> + Sync),
) -> Result<Vec<T>> {
    (0..k).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::softmax_rows;
    use crate::featurestore::{generate, InMemoryFeatures, SyntheticSpec};
    use crate::model::PoolingMethod;

    #[test]
    fn cross_entropy_examples() {
        let p = Tensor::row_vector(&[0.0, 1.0, 0.0]);
        assert_eq!(cross_entropy(&p, 1).unwrap(), 0.0);
        let u = Tensor::row_vector(&[0.25; 4]);
        assert!((cross_entropy(&u, 2).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!((cross_entropy(&p, 0).unwrap() - (-(1e-12f64).ln())).abs() < 1e-9);
        assert!(matches!(cross_entropy(&u, 4), Err(Error::Index { .. })));
    }

    #[test]
    fn cross_entropy_gradient_is_probs_minus_one_hot() {
        let logits = Tensor::row_vector(&[0.3, -1.2, 2.0, 0.1]);
        let label = 1;
        let mut tape = Tape::new();
        let z = tape.leaf(logits.clone());
        let p = tape.row_softmax(z);
        let l = tape.nll(p, label).unwrap();
        let g = tape.backward(l).unwrap().wrt(z);
        let h = 1e-6;
        for j in 0..4 {
            let eval = |d: f64| {
                let mut x = logits.clone();
                x.set(0, j, x.get(0, j) + d);
                cross_entropy(&softmax_rows(&x), label).unwrap()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!((fd - g.get(0, j)).abs() < 1e-8);
        }
    }

    #[test]
    fn fold_seeds_differ() {
        let s: Vec<u64> = (0..10).map(|f| fold_seed(0, f)).collect();
        for i in 0..10 {
            for j in 0..i {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_eq!(fold_seed(5, 3), fold_seed(5, 3));
    }

    fn tiny_data() -> (DatasetManifest, InMemoryFeatures) {
        let spec = SyntheticSpec::new(3, 6, 8, 6, 8, 0.0, 4).with_folds(3);
        let data = generate(&spec).unwrap();
        let feats = InMemoryFeatures::new(data.layer_features(1).unwrap().to_vec());
        (data.manifest, feats)
    }

    #[test]
    fn empty_training_split_is_data_error() {
        let feats = InMemoryFeatures::new(vec![]);
        let cfg = ModelConfig::new(6, 3, PoolingMethod::Mean).with_d_model(4);
        let r = fit(&feats, &[], &cfg, &TrainConfig::default(), 0);
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn cross_validate_needs_two_folds() {
        let (mut m, f) = tiny_data();
        m.folds = 1;
        let cfg = ModelConfig::new(6, 3, PoolingMethod::Mean).with_d_model(4);
        let r = cross_validate(&m, &f, &cfg, &TrainConfig::default(), 1);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn fold_split_is_disjoint_and_deterministic() {
        let (m, f) = tiny_data();
        let mcfg = ModelConfig::new(6, 3, PoolingMethod::Attentive)
            .with_d_model(4)
            .with_heads(2, 2);
        let tcfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let a = train_fold(&m, &f, 1, &mcfg, &tcfg).unwrap();
        let b = train_fold(&m, &f, 1, &mcfg, &tcfg).unwrap();
        assert_eq!(a.trained.model, b.trained.model);
        assert_eq!(a.trained.epochs, b.trained.epochs);
        for r in &a.train_records {
            assert!(!a.test_records.contains(r));
            assert_ne!(m.records[*r].fold, 1);
        }
        assert_eq!(a.train_records.len() + a.test_records.len(), m.records.len());
    }

    #[test]
    fn parallel_matches_serial() {
        let (m, f) = tiny_data();
        let mcfg = ModelConfig::new(6, 3, PoolingMethod::Qkv)
            .with_d_model(4)
            .with_heads(2, 2);
        let tcfg = TrainConfig {
            epochs: 2,
            batch_size: 5,
            ..TrainConfig::default()
        };
        let a = cross_validate(&m, &f, &mcfg, &tcfg, 1).unwrap();
        let b = cross_validate(&m, &f, &mcfg, &tcfg, 3).unwrap();
        assert_eq!(a.folds, b.folds);
        assert_eq!(a.histories, b.histories);
        assert_eq!(a.folds.len(), 3);
    }
}
