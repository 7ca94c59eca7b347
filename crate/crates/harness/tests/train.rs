use std::path::Path;

use agr_harness::config::ExperimentConfig;
use agr_harness::train::{read_jsonl, run_experiment, train_loop, write_outputs, TrainRecord, Variant};

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text, Path::new(".")).unwrap()
}

const BLOBS: &str = r#"
    name = "t"
    seed = 5
    epochs = 6
    batch_size = 8
    widths = [3, 8, 3]
    dataset = "blobs"
    n = 90
    classes = 3
    dim = 3
    spread = 2.0
    optimizer = "adamw"
    lr = 0.01
    agr = true
    record_wall_time = false
"#;

#[test]
fn identical_configs_give_identical_records() {
    let c = cfg(BLOBS);
    let a = train_loop(&c).unwrap();
    let b = train_loop(&c).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.model, b.model);
    assert_eq!(a.records.len(), 6);
    for (i, r) in a.records.iter().enumerate() {
        assert_eq!(r.epoch, i as u64);
        assert!(r.train_loss >= 0.0);
        assert!((0.0..=1.0).contains(&r.test_acc));
        assert!(r.agr_active);
        assert_eq!(r.run_id, "t-agr-s5");
    }
}

#[test]
fn zero_learning_rate_is_a_no_op() {
    let c = cfg(&BLOBS.replace("lr = 0.01", "lr = 0.0"));
    let out = train_loop(&c).unwrap();
    let first = &out.records[0];
    for r in &out.records {
        assert!((r.train_loss - first.train_loss).abs() < 1e-12);
        assert_eq!(r.test_acc, first.test_acc);
    }
    let one_epoch = cfg(&BLOBS.replace("lr = 0.01", "lr = 0.0").replace("epochs = 6", "epochs = 1"));
    let single = train_loop(&one_epoch).unwrap();
    assert_eq!(single.records[0].test_acc, first.test_acc);
    assert_eq!(single.model, out.model);
}

#[test]
fn separable_blobs_reach_full_train_accuracy() {
    let c = cfg(r#"
        seed = 1
        epochs = 50
        batch_size = 8
        widths = [2, 8, 2]
        dataset = "blobs"
        n = 100
        classes = 2
        dim = 2
        spread = 0.0
        optimizer = "adamw"
        lr = 0.01
        agr = true
    "#);
    let out = train_loop(&c).unwrap();
    assert_eq!(out.final_train_acc, 1.0);
}

#[test]
fn suspension_stops_agr_and_keeps_early_epochs() {
    let suspended = cfg(&format!("{BLOBS}\nagr_until_epoch = 3\n"));
    let always = cfg(BLOBS);
    let s = train_loop(&suspended).unwrap();
    let a = train_loop(&always).unwrap();
    for e in 0..6 {
        if e < 3 {
            assert!(s.agr_applications[e] > 0);
            assert_eq!(s.records[e], a.records[e]);
        } else {
            assert_eq!(s.agr_applications[e], 0);
            assert!(!s.records[e].agr_active);
        }
    }
    // One weight tensor per layer per step.
    let steps_per_epoch = (72usize).div_ceil(8) as u64;
    assert_eq!(a.agr_applications[0], 2 * steps_per_epoch);
}

#[test]
fn paired_runs_share_everything_but_agr() {
    let c = cfg(&BLOBS.replace("agr = true", "agr = false"));
    let out = run_experiment(&c, true, 2).unwrap();
    assert_eq!(out.runs.len(), 4);
    let variants: Vec<Variant> = out.runs.iter().map(|r| r.variant).collect();
    assert_eq!(variants, [Variant::Agr, Variant::Vanilla, Variant::Agr, Variant::Vanilla]);
    assert_eq!(out.runs[0].records[0].seed, 5);
    assert_eq!(out.runs[2].records[0].seed, 6);

    // With AGR reaching no tensor the two arms coincide exactly.
    let none = cfg(&format!("{BLOBS}\nagr_roles = []\n"));
    let out = run_experiment(&none, true, 1).unwrap();
    let strip = |rs: &[TrainRecord]| -> Vec<(u64, u64)> {
        rs.iter().map(|r| (r.train_loss.to_bits(), r.test_acc.to_bits())).collect()
    };
    assert_eq!(strip(&out.runs[0].records), strip(&out.runs[1].records));
    assert_eq!(out.summary.delta.as_ref().unwrap().train_loss, 0.0);
    assert_eq!(out.aggregates.len(), 12);
}

#[test]
fn jsonl_output_is_byte_reproducible() {
    let c = cfg(BLOBS);
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a/r.jsonl"), dir.path().join("b/r.jsonl"));
    write_outputs(&run_experiment(&c, true, 2).unwrap(), &p1).unwrap();
    let written = write_outputs(&run_experiment(&c, true, 2).unwrap(), &p2).unwrap();
    for (a, b) in [
        ("a/r.jsonl", "b/r.jsonl"),
        ("a/r.aggregate.jsonl", "b/r.aggregate.jsonl"),
        ("a/r.summary.json", "b/r.summary.json"),
    ] {
        let x = std::fs::read(dir.path().join(a)).unwrap();
        let y = std::fs::read(dir.path().join(b)).unwrap();
        assert_eq!(x, y, "{a}");
    }
    assert_eq!(written[1], dir.path().join("b/r.aggregate.jsonl"));

    let text = std::fs::read_to_string(&p1).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let mut keys: Vec<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        ["agr_active", "epoch", "lr", "optimizer", "run_id", "seed", "test_acc", "train_loss", "wall_ms", "weight_decay"]
    );
    let back: Vec<TrainRecord> = read_jsonl(&p1).unwrap();
    assert_eq!(back.len(), 2 * 2 * 6);
}

#[test]
fn linear_schedule_is_recorded() {
    let c = cfg(&format!("{BLOBS}\nlr_schedule = \"linear\"\nlr_final_fraction = 0.5\n"));
    let out = train_loop(&c).unwrap();
    assert_eq!(out.records[0].lr, 0.01);
    assert!((out.records[5].lr - 0.005).abs() < 1e-15);
}

#[test]
fn mismatched_widths_are_rejected() {
    let text = BLOBS.replace("widths = [3, 8, 3]", "widths = [2, 8, 3]");
    assert!(ExperimentConfig::from_toml_str(&text, Path::new(".")).is_err());
}
