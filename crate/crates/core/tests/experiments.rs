//! Experiment drivers and the command line, run on small synthetic corpora.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use micunet::data::{load_manifest, read_tensor, synth_generate, Dataset, Filter, Lang, Split, SynthConfig};
use micunet::fusion::Variant;
use micunet::train::{
    evaluate, export_embeddings, infer, labels_path, run_ablation_suite, run_loto, run_training, Checkpoint, EvalOptions, TrainConfig,
};
use micunet::Error;

fn corpus(dir: &Path, cfg: SynthConfig) -> PathBuf {
    synth_generate(&cfg, dir).unwrap().0
}

fn small(dir: &Path, langs: Vec<Lang>) -> PathBuf {
    corpus(dir, SynthConfig { n_train: 96, n_dev: 32, n_test: 32, langs, seed: 3, ..Default::default() })
}

fn config(manifest: PathBuf, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig { train_manifest: manifest, lang: Some(Lang::E), epochs, seed, ..Default::default() }
}

#[test]
fn training_writes_artifacts_and_keeps_the_best_epoch() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(small(&tmp.path().join("data"), vec![Lang::E]), 4, 1);
    let out = tmp.path().join("run");
    let (outcome, report) = run_training(&cfg, &out).unwrap();
    for f in ["config.json", "train_log.jsonl", "test_report.json", "checkpoint/meta.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert_eq!(fs::read_to_string(out.join("train_log.jsonl")).unwrap().lines().count(), outcome.log.len());
    assert_eq!(outcome.log.len(), 4);
    let best = outcome.best.meta.dev.loss;
    assert!(outcome.log.iter().all(|e| best <= e.dev_loss));
    assert_eq!(outcome.log[outcome.best.meta.epoch - 1].dev_loss, best);
    assert_eq!(report.n_samples, 32);
    assert_eq!(report.tasks.len(), 3);
}

#[test]
fn evaluation_is_repeatable_tagged_and_checks_heads() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small(&tmp.path().join("data"), vec![Lang::E, Lang::C]);
    let cfg = config(manifest.clone(), 1, 2);
    let (outcome, _) = run_training(&cfg, &tmp.path().join("run")).unwrap();
    let ck = Checkpoint::load(&tmp.path().join("run")).unwrap();
    assert_eq!(ck.meta, outcome.best.meta);

    let cross = EvalOptions { filter: Filter { lang: Some(Lang::C), split: Some(Split::Test), ..Default::default() }, tasks: vec![] };
    let a = evaluate(&ck, &manifest, &cross).unwrap();
    let b = evaluate(&ck, &manifest, &cross).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.tag.as_deref(), Some("(E-Tr)(C-Te)"));

    // six original-emotion classes against a five-way head
    let wide = corpus(&tmp.path().join("wide"), SynthConfig { n_train: 8, n_dev: 8, n_test: 64, langs: vec![Lang::E], classes: [6, 5, 7], ..Default::default() });
    let err = evaluate(&ck, &wide, &EvalOptions { filter: Filter::split(Split::Test), tasks: vec![] }).unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
}

#[test]
fn noiseless_data_is_learned_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    // reduced feature dims keep a run to convergence cheap
    let synth = SynthConfig {
        n_train: 2048,
        n_dev: 256,
        n_test: 256,
        langs: vec![Lang::E],
        sigma: 0.0,
        ptm_dim: 64,
        spec_dims: [8, 16, 2],
        ce_cycles: vec![1.0, 2.0, 3.0, 5.0, 7.0],
        ..Default::default()
    };
    let manifest = corpus(&tmp.path().join("data"), synth);
    // the default schedule runs until dev loss stops improving
    let (_, report) = run_training(&config(manifest, 50, 42), &tmp.path().join("run")).unwrap();
    for (task, r) in &report.tasks {
        assert_eq!(r.accuracy, 100.0, "{task}: {r:?}");
    }
}

#[test]
fn ablation_table_has_every_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(small(&tmp.path().join("data"), vec![Lang::E]), 1, 5);
    let table = run_ablation_suite(&cfg, &[5]).unwrap();
    let names: Vec<&str> = table.rows.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(names, Variant::ALL.map(|v| v.as_str()));
    for r in &table.rows {
        assert!(r.eer.iter().all(|e| e.is_finite()));
        assert_eq!(r.reports.len(), 1);
        assert_eq!(r.reports[0].tasks.len(), 3);
    }
    let params = |v: &str| table.rows.iter().find(|r| r.variant == v).unwrap().params;
    assert!(params("euclid_only") < params("full"));
    assert_eq!(table.render().lines().filter(|l| Variant::ALL.iter().any(|v| l.starts_with(v.as_str()))).count(), 5);
}

#[test]
fn leave_two_out_generalises_to_unseen_sources() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = corpus(&tmp.path().join("data"), SynthConfig { n_train: 480, n_dev: 120, n_test: 240, langs: vec![Lang::E], ..Default::default() });
    let train_all = load_manifest(&manifest, &Filter { lang: Some(Lang::E), split: Some(Split::Train), ..Default::default() }).unwrap();
    let kept = train_all.iter().filter(|r| r.m != 5 && r.m != 6).count();

    let (mut held, mut inside) = ([0.0; 2], [0.0; 2]);
    for seed in [1, 2, 3] {
        let r = run_loto(&config(manifest.clone(), 4, seed), &[5, 6]).unwrap();
        assert_eq!(r.holdout, [5, 6]);
        assert_eq!(r.train_records, kept);
        for rep in [&r.heldout, &r.in_distribution] {
            assert_eq!(rep.tasks.keys().collect::<Vec<_>>(), ["ce", "oe"]);
        }
        for (t, task) in ["oe", "ce"].iter().enumerate() {
            held[t] += r.heldout.tasks[*task].eer / 3.0;
            inside[t] += r.in_distribution.tasks[*task].eer / 3.0;
        }
    }
    for t in 0..2 {
        assert!(held[t] <= 2.0 * inside[t], "task {t}: held-out EER {} vs in-distribution {}", held[t], inside[t]);
    }

    let err = run_loto(&config(manifest, 1, 1), &[5]).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn exported_embeddings_match_inference() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small(&tmp.path().join("data"), vec![Lang::E]);
    let (outcome, _) = run_training(&config(manifest.clone(), 1, 6), &tmp.path().join("run")).unwrap();
    let ck = outcome.best;
    let filter = Filter { lang: Some(Lang::E), split: Some(Split::Dev), ..Default::default() };
    let (a, b) = (tmp.path().join("a.mcn"), tmp.path().join("b.mcn"));
    let z = export_embeddings(&ck, &manifest, &filter, &a).unwrap();
    export_embeddings(&ck, &manifest, &filter, &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let recs = load_manifest(&manifest, &filter).unwrap();
    assert_eq!(z.shape(), &[recs.len(), ck.meta.model.d_m]);
    assert_eq!(read_tensor(&a).unwrap(), z);
    let mut model = ck.model.clone();
    let inf = infer(&mut model, &Dataset::load(&recs).unwrap(), ck.meta.train.eval_batch_size).unwrap();
    let bits = |t: &[f32]| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(inf.z_fused.data()), bits(z.data()));

    let sidecar = labels_path(&a);
    assert_eq!(fs::read_to_string(sidecar).unwrap().lines().count(), recs.len());
}

fn cli(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_micunet")).args(args).output().unwrap();
    out.status.code().unwrap()
}

#[test]
fn command_line_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let data = format!("{dir}/syn");
    assert_eq!(cli(&["synth", "--n", "8", "--seed", "1", "--out", &data]), 0);
    assert!(Path::new(&data).join("manifest.jsonl").is_file());

    // usage and config errors are validation failures
    assert_eq!(cli(&["synth", "--n", "many", "--out", &data]), 1);
    assert_eq!(cli(&["frobnicate"]), 1);
    let bad = format!("{dir}/bad.json");
    fs::write(&bad, r#"{"train_manifest": "syn/manifest.jsonl", "variant": "minus_E"}"#).unwrap();
    assert_eq!(cli(&["train", "--config", &bad, "--out", &format!("{dir}/o")]), 1);
    let good = format!("{dir}/good.json");
    fs::write(&good, r#"{"train_manifest": "syn/manifest.jsonl", "epochs": 1}"#).unwrap();
    assert_eq!(cli(&["loto", "--config", &good, "--holdout", "5"]), 1);

    // missing files are runtime failures
    assert_eq!(cli(&["eval", "--ckpt", &format!("{dir}/nowhere"), "--manifest", &format!("{data}/manifest.jsonl")]), 2);

    assert_eq!(cli(&["--help"]), 0);
}
