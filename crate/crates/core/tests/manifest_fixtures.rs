use std::collections::BTreeSet;
use std::fmt::Write as _;

use attnpool::diffcore::Tensor;
use attnpool::featurestore::{gen_synthetic, load_manifest, write_features, InMemoryFeatures, SyntheticSpec};
use attnpool::model::{ModelConfig, PoolingMethod};
use attnpool::training::{train_fold, TrainConfig};
use attnpool::Error;

fn header(classes: &str, folds: usize, d_enc: usize, layers: &str) -> String {
    format!(
        "format: attnpool-manifest-1\nclasses: {classes}\nfolds: {folds}\nd_enc: {d_enc}\nlayers: {layers}\n---\n"
    )
}

/// Session-based layout: sessions 1..=5 map to folds 0..=4.
fn iemocap_style(n: usize) -> String {
    let mut s = header("anger,happiness,sadness,neutral", 5, 768, "1,2,3,4,5,6,7,8,9,10,11,12");
    for i in 0..n {
        let session = i % 5 + 1;
        let gender = if i % 2 == 0 { 'F' } else { 'M' };
        let id = format!("Ses0{session}{gender}_impro{i:04}");
        writeln!(s, "{id} {} {session} {} feats/L{{layer}}/{id}.fea", i % 4, session - 1).unwrap();
    }
    s
}

/// Speaker-group layout: ten groups, one fold each.
fn shemo_style(n: usize) -> String {
    let mut s = header("anger,happiness,neutral,sadness,surprise", 10, 6, "1");
    for i in 0..n {
        let group = i % 10;
        writeln!(s, "utt{i:04} {} {group} {group} feats/L{{layer}}/utt{i:04}.fea", i % 5).unwrap();
    }
    s
}

fn load_text(text: &str, check_files: bool) -> attnpool::Result<attnpool::featurestore::DatasetManifest> {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("manifest.txt");
    std::fs::write(&p, text).unwrap();
    load_manifest(&p, check_files)
}

#[test]
fn iemocap_style_manifest_loads() {
    let m = load_text(&iemocap_style(2793), false).unwrap();
    assert_eq!(m.records.len(), 2793);
    assert_eq!(m.num_classes(), 4);
    assert_eq!(m.folds, 5);
    assert_eq!(m.layers.len(), 12);
    let sessions: BTreeSet<u32> = m.records.iter().map(|r| r.group).collect();
    assert_eq!(sessions, (1..=5).collect());
}

#[test]
fn shemo_style_manifest_loads() {
    let m = load_text(&shemo_style(120), false).unwrap();
    assert_eq!(m.num_classes(), 5);
    assert_eq!(m.folds, 10);
}

#[test]
fn shemo_style_trains_on_nine_groups_per_fold() {
    let m = load_text(&shemo_style(40), false).unwrap();
    let feats = InMemoryFeatures::new(
        (0..40)
            .map(|i| Tensor::from_vec(3, 6, (0..18).map(|j| ((i * 7 + j) % 11) as f64 - 5.0).collect()).unwrap())
            .collect(),
    );
    let mcfg = ModelConfig::new(6, 5, PoolingMethod::Mean).with_d_model(4);
    let tcfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    for fold in [0, 7] {
        let tf = train_fold(&m, &feats, fold, &mcfg, &tcfg).unwrap();
        let groups: BTreeSet<u32> = tf.train_records.iter().map(|&r| m.records[r].group).collect();
        assert_eq!(groups.len(), 9);
        assert!(!groups.contains(&(fold as u32)));
        let train_ids: BTreeSet<&str> = tf.train_records.iter().map(|&r| m.records[r].id.as_str()).collect();
        assert!(tf.test_records.iter().all(|&r| !train_ids.contains(m.records[r].id.as_str())));
    }
}

#[test]
fn fold_equal_to_k_is_rejected() {
    let mut text = shemo_style(20);
    text.push_str("bad 0 3 10 feats/bad.fea\n");
    assert!(matches!(load_text(&text, false), Err(Error::FoldOutOfRange { fold: 10, k: 10, .. })));
}

#[test]
fn label_out_of_range_is_rejected() {
    let mut text = shemo_style(20);
    text.push_str("bad 5 3 3 feats/bad.fea\n");
    assert!(matches!(load_text(&text, false), Err(Error::LabelOutOfRange { label: 5, .. })));
}

#[test]
fn missing_fold_is_rejected() {
    // 9 records cover only folds 0..=8 of 10
    assert!(matches!(load_text(&shemo_style(9), false), Err(Error::MissingFold { fold: 9 })));
}

#[test]
fn dangling_file_is_rejected_only_when_checked() {
    let text = shemo_style(10);
    assert!(load_text(&text, false).is_ok());
    assert!(matches!(load_text(&text, true), Err(Error::DanglingFile { .. })));
}

#[test]
fn generated_dataset_passes_file_checks() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec::new(3, 4, 5, 6, 2, 0.5, 9).with_folds(4).with_layers(vec![1, 2]);
    gen_synthetic(&spec, dir.path()).unwrap();
    let m = load_manifest(dir.path().join("manifest.txt"), true).unwrap();
    assert_eq!(m.records.len(), 12);
    // removing one layer file turns into a dangling reference
    let victim = m.feature_path(&m.records[3], 2);
    std::fs::remove_file(&victim).unwrap();
    assert!(matches!(
        load_manifest(dir.path().join("manifest.txt"), true),
        Err(Error::DanglingFile { .. })
    ));
    write_features(&Tensor::zeros(5, 6), &victim).unwrap();
    assert!(load_manifest(dir.path().join("manifest.txt"), true).is_ok());
}
