use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use attnpool::featurestore::{gen_synthetic as generate_dataset, load_manifest, open_layer, DatasetManifest, ModelSize, SyntheticSpec};
use attnpool::gradcheck::{check_model_gradients, GradcheckDims};
use attnpool::metrics::{
    all_references, emit_report, published_reference, sweep_csv, Aggregate, ConfusionMatrix, FoldReport,
    Reference, ReportContext, SweepRow,
};
use attnpool::model::{save_checkpoint, ModelConfig, PoolingMethod};
use attnpool::training::{self, evaluate, train_fold, EpochMetrics, TrainConfig};
use serde::Serialize;
use serde_json::json;

use crate::{CvArgs, GenArgs, GradcheckArgs, HeadArgs, OptimArgs, RefArgs, ReportArgs, SweepArgs, TrainArgs};

const CONFIG_ECHO: &str = "config.json";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Writes `config.json`: the command, its flags and the effective configs.
fn echo_config(out: &Path, command: &str, args: &impl Serialize, effective: serde_json::Value) -> Result<()> {
    let doc = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "flags": args,
        "effective": effective,
    });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    write_file(&out.join(CONFIG_ECHO), &text)
}

fn model_config(head: &HeadArgs, manifest: &DatasetManifest, layer: u32) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::new(manifest.d_enc, manifest.num_classes(), head.pooling)
        .with_d_model(head.d_model)
        .with_heads(head.heads, head.d_hidden);
    cfg.dropout_rate = head.dropout;
    cfg.encoder_layer = layer;
    cfg.validate()?;
    Ok(cfg)
}

fn train_config(o: &OptimArgs) -> Result<TrainConfig> {
    let cfg = TrainConfig {
        epochs: o.epochs,
        batch_size: o.batch_size,
        peak_lr: o.peak_lr,
        warmup_fraction: o.warmup,
        weight_decay: o.weight_decay,
        seed: o.seed,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn pick_layer(manifest: &DatasetManifest, layer: Option<u32>) -> Result<u32> {
    match layer {
        Some(l) => Ok(l),
        None => manifest
            .layers
            .first()
            .copied()
            .context("manifest lists no encoder layers"),
    }
}

fn lookup_reference(
    r: &RefArgs,
    manifest: &DatasetManifest,
    pooling: PoolingMethod,
    layer: Option<u32>,
) -> Result<Option<Reference>> {
    let Some(dataset) = r.reference else {
        return Ok(None);
    };
    let size = r
        .size
        .or(manifest.model_size)
        .context("--reference needs --size or a model_size in the manifest")?;
    Ok(Some(published_reference(dataset, size, pooling, layer)?))
}

fn history_csv(histories: &[(usize, &[EpochMetrics])]) -> String {
    let mut s = String::from("fold,epoch,loss,accuracy,lr\n");
    for (fold, h) in histories {
        for e in *h {
            writeln!(s, "{fold},{},{:.6},{:.6},{:.6e}", e.epoch, e.loss, e.accuracy, e.last_lr).unwrap();
        }
    }
    s
}

fn context_for(title: String, model: &ModelConfig, train: &TrainConfig, layer: u32) -> ReportContext {
    ReportContext {
        title,
        config: vec![
            ("pooling".into(), model.pooling.to_string()),
            ("heads".into(), format!("{} x {}", model.num_heads, model.d_hidden)),
            ("layer".into(), layer.to_string()),
            ("epochs".into(), train.epochs.to_string()),
            ("batch size".into(), train.batch_size.to_string()),
            ("peak lr".into(), format!("{:e}", train.peak_lr)),
            ("seed".into(), train.seed.to_string()),
        ],
    }
}

pub fn gen_synthetic(a: &GenArgs) -> Result<bool> {
    let spec = SyntheticSpec::new(a.classes, a.per_class, a.frames, a.d_enc, a.salient, a.sigma, a.seed)
        .with_folds(a.folds)
        .with_layers(a.layers.0.clone());
    let manifest = generate_dataset(&spec, &a.out)?;
    echo_config(&a.out, "gen-synthetic", a, json!({ "spec": spec }))?;
    println!(
        "wrote {} records x {} layer(s) to {}",
        manifest.records.len(),
        manifest.layers.len(),
        a.out.display()
    );
    Ok(true)
}

pub fn train(a: &TrainArgs) -> Result<bool> {
    let manifest = load_manifest(&a.manifest, false)?;
    let layer = pick_layer(&manifest, a.layer)?;
    let model_cfg = model_config(&a.head, &manifest, layer)?;
    let train_cfg = train_config(&a.optim)?;
    echo_config(&a.out, "train", a, json!({ "model": model_cfg, "train": train_cfg, "layer": layer }))?;

    let features = open_layer(&manifest, layer)?;
    let tf = train_fold(&manifest, features.as_ref(), a.fold, &model_cfg, &train_cfg)?;
    save_checkpoint(&tf.trained.model, a.out.join("checkpoint"))?;
    write_file(&a.out.join("history.csv"), &history_csv(&[(a.fold, &tf.trained.epochs)]))?;

    let cm = evaluate(&tf.trained.model, &manifest, features.as_ref(), &tf.test_records)?;
    let report = FoldReport::from_confusion(a.fold, cm)?;
    let folds = [report];
    let agg = Aggregate::from_folds(&folds)?;
    let ctx = context_for(format!("held-out fold {}", a.fold), &model_cfg, &train_cfg, layer);
    emit_report(&a.out, &folds, &agg, &ctx, None)?;
    println!(
        "fold {}: train acc {:.4}, held-out WA {:.4} UA {:.4} F1 {:.4}",
        a.fold, tf.trained.final_train_accuracy, folds[0].wa, folds[0].ua, folds[0].f1
    );
    Ok(true)
}

fn run_cv(
    manifest: &DatasetManifest,
    layer: u32,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    jobs: usize,
    reference: Option<&Reference>,
    out: &Path,
) -> Result<Aggregate> {
    let features = open_layer(manifest, layer)?;
    let cv = training::cross_validate(manifest, features.as_ref(), model_cfg, train_cfg, jobs)?;
    let ctx = context_for(
        format!("{}-fold cross-validation", manifest.folds),
        model_cfg,
        train_cfg,
        layer,
    );
    emit_report(out, &cv.folds, &cv.aggregate, &ctx, reference)?;
    let h: Vec<(usize, &[EpochMetrics])> = cv.histories.iter().map(Vec::as_slice).enumerate().collect();
    write_file(&out.join("history.csv"), &history_csv(&h))?;
    Ok(cv.aggregate)
}

pub fn cross_validate(a: &CvArgs) -> Result<bool> {
    let manifest = load_manifest(&a.manifest, false)?;
    let layer = pick_layer(&manifest, a.layer)?;
    let model_cfg = model_config(&a.head, &manifest, layer)?;
    let train_cfg = train_config(&a.optim)?;
    let reference = lookup_reference(&a.reference, &manifest, a.head.pooling, None)?;
    echo_config(
        &a.out,
        "cross-validate",
        a,
        json!({ "model": model_cfg, "train": train_cfg, "layer": layer, "folds": manifest.folds }),
    )?;
    run_cv(&manifest, layer, &model_cfg, &train_cfg, a.jobs, reference.as_ref(), &a.out)?;
    print!("{}", fs::read_to_string(a.out.join("summary.txt"))?);
    Ok(true)
}

pub fn sweep_layers(a: &SweepArgs) -> Result<bool> {
    let manifest = load_manifest(&a.manifest, false)?;
    for &l in &a.layers.0 {
        if !manifest.layers.contains(&l) {
            bail!("layer {l} has no stored features (manifest lists {:?})", manifest.layers);
        }
    }
    let train_cfg = train_config(&a.optim)?;
    let base_cfg = model_config(&a.head, &manifest, a.layers.0[0])?;
    echo_config(
        &a.out,
        "sweep-layers",
        a,
        json!({ "model": base_cfg, "train": train_cfg, "layers": a.layers.0 }),
    )?;
    let mut rows = Vec::new();
    for &layer in &a.layers.0 {
        let model_cfg = model_config(&a.head, &manifest, layer)?;
        let reference = lookup_reference(&a.reference, &manifest, a.head.pooling, Some(layer))?;
        let agg = run_cv(
            &manifest,
            layer,
            &model_cfg,
            &train_cfg,
            a.jobs,
            reference.as_ref(),
            &a.out.join(format!("layer{layer}")),
        )
        .with_context(|| format!("layer {layer}"))?;
        eprintln!(
            "layer {layer}: WA {} UA {} F1 {}",
            agg.wa.format_percent(),
            agg.ua.format_percent(),
            agg.f1.format_percent()
        );
        rows.push(SweepRow {
            layer,
            aggregate: agg,
            reference,
        });
    }
    let table = sweep_csv(&rows);
    write_file(&a.out.join("sweep.csv"), &table)?;
    print!("{table}");
    Ok(true)
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<bool> {
    let methods: Vec<PoolingMethod> = if a.method.eq_ignore_ascii_case("all") {
        PoolingMethod::ALL.to_vec()
    } else {
        vec![a.method.parse()?]
    };
    let dims = GradcheckDims::default();
    echo_config(&a.out, "gradcheck", a, json!({ "dims": dims }))?;
    let mut csv = String::from("method,tensor,max_rel_err,passed\n");
    let mut all_ok = true;
    for m in methods {
        for c in check_model_gradients(m, dims, a.seed, a.tol)? {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            println!("{m:<10} {:<12} {:.3e}  {verdict}", c.name, c.max_rel_err);
            writeln!(csv, "{m},{},{:.6e},{}", c.name, c.max_rel_err, c.passed).unwrap();
            all_ok &= c.passed;
        }
    }
    write_file(&a.out.join("gradcheck.csv"), &csv)?;
    if !all_ok {
        eprintln!("gradient check failed (tolerance {:e})", a.tol);
    }
    Ok(all_ok)
}

fn reference_rows(refs: &[&Reference]) -> String {
    let mut s = String::from("dataset,size,pooling,layer,wa,wa_std,ua,ua_std,f1,f1_std\n");
    for r in refs {
        let k = r.key;
        let f1 = r.f1.map_or(",".to_string(), |f| format!("{:.2},{:.2}", f.mean, f.std));
        writeln!(
            s,
            "{},{},{},{},{:.2},{:.2},{:.2},{:.2},{f1}",
            k.dataset,
            k.size.as_str(),
            k.pooling,
            k.layer.map_or(String::new(), |l| l.to_string()),
            r.wa.mean,
            r.wa.std,
            r.ua.mean,
            r.ua.std
        )
        .unwrap();
    }
    s
}

fn fold_number(name: &str) -> Option<usize> {
    name.strip_prefix("confusion_fold")?.strip_suffix(".csv")?.parse().ok()
}

pub fn report(a: &ReportArgs) -> Result<bool> {
    echo_config(&a.out, "report", a, json!({}))?;
    if let Some(run) = &a.run {
        let mut files: Vec<(usize, std::path::PathBuf)> = fs::read_dir(run)
            .with_context(|| format!("reading {}", run.display()))?
            .filter_map(|e| e.ok())
            .filter_map(|e| Some((fold_number(e.file_name().to_str()?)?, e.path())))
            .collect();
        if files.is_empty() {
            bail!("no confusion_fold*.csv files in {}", run.display());
        }
        files.sort();
        let folds = files
            .iter()
            .map(|(k, p)| {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let cm = ConfusionMatrix::from_csv(&text).with_context(|| p.display().to_string())?;
                Ok(FoldReport::from_confusion(*k, cm)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let agg = Aggregate::from_folds(&folds)?;
        let ctx = ReportContext {
            title: format!("re-rendered from {}", run.display()),
            config: Vec::new(),
        };
        emit_report(&a.out, &folds, &agg, &ctx, None)?;
        print!("{}", fs::read_to_string(a.out.join("summary.txt"))?);
        return Ok(true);
    }

    let dataset = a.dataset.context("--dataset or --run is required")?;
    let selected: Vec<&Reference> = all_references()
        .iter()
        .filter(|r| {
            r.key.dataset == dataset
                && r.key.size == a.size
                && a.pooling.is_none_or(|p| r.key.pooling == p)
                && r.key.layer == a.layer
        })
        .collect();
    if selected.is_empty() {
        let size: ModelSize = a.size;
        bail!(
            "no published reference for {dataset}/{}{}",
            size.as_str(),
            a.layer.map_or(String::new(), |l| format!("/layer{l}"))
        );
    }
    let table = reference_rows(&selected);
    write_file(&a.out.join("reference.csv"), &table)?;
    println!("{:<10} {:>14} {:>14} {:>14}", "pooling", "WA", "UA", "F1");
    for r in selected {
        println!(
            "{:<10} {:>14} {:>14} {:>14}",
            r.key.pooling.to_string(),
            r.wa.format_plain(),
            r.ua.format_plain(),
            r.f1.map_or("-".to_string(), |f| f.format_plain())
        );
    }
    Ok(true)
}
