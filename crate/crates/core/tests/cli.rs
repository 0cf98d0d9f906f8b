use std::fs;
use std::path::Path;

use framelens::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use framelens::config::TrainConfig;

fn framelens(args: &[&str]) -> i32 {
    let mut argv = vec!["framelens"];
    argv.extend_from_slice(args);
    run(argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small generator settings and a short schedule keep the pipeline quick.
fn write_small_configs(dir: &Path) -> (String, String) {
    let synth = dir.join("synth.json");
    fs::write(
        &synth,
        r#"{"n_families":3,"frames_per_family":4,"lus":20,
            "instances_per_split":{"exemplar":96,"train":48,"dev":12,"test":24},"seed":0}"#,
    )
    .unwrap();
    let mut cfg = TrainConfig::default();
    cfg.model.dim = 16;
    cfg.stage1.epochs = 3;
    cfg.stage2.epochs = 2;
    cfg.stage2.candidate_n = 5;
    let train = dir.join("train.json");
    fs::write(&train, serde_json::to_string(&cfg).unwrap()).unwrap();
    (s(&synth).to_string(), s(&train).to_string())
}

#[test]
fn synth_train_eval_predict_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (synth_cfg, train_cfg) = write_small_configs(dir);
    let data = dir.join("data");
    assert_eq!(
        framelens(&["synth", "--seed", "7", "--out", s(&data), "--config", &synth_cfg]),
        EXIT_OK
    );
    let lexicon = data.join("lexicon.json");
    let corpus = data.join("corpus.jsonl");
    assert!(lexicon.exists() && corpus.exists());
    assert_eq!(
        framelens(&["validate", "--lexicon", s(&lexicon), "--corpus", s(&corpus)]),
        EXIT_OK
    );

    let run_dir = dir.join("run");
    let train = [
        "train",
        "--lexicon",
        s(&lexicon),
        "--corpus",
        s(&corpus),
        "--out",
        s(&run_dir),
        "--config",
        &train_cfg,
        "--seed",
        "3",
    ];
    assert_eq!(framelens(&train), EXIT_OK);
    for f in ["stage1.json", "stage2.json", "model.json", "train_report.json"] {
        assert!(run_dir.join(f).exists(), "{f} missing");
    }

    let report = dir.join("eval.json");
    let ck = run_dir.join("model.json");
    let eval = [
        "eval",
        "--lexicon",
        s(&lexicon),
        "--corpus",
        s(&corpus),
        "--checkpoint",
        s(&ck),
        "--mode",
        "both",
        "--masked",
        "--centroid",
        "10",
        "--out",
        s(&report),
    ];
    assert_eq!(framelens(&eval), EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    for key in ["acc", "r@1", "r@3", "r@5", "overall"] {
        assert!(v["percent"][key].is_number(), "{key} missing from report");
    }
    assert!(v["masked"]["delta"].is_number());
    assert!(v["centroid"]["result"]["r_at"]["1"].is_number());

    let preds = dir.join("preds.jsonl");
    let predict = [
        "predict",
        "--lexicon",
        s(&lexicon),
        "--checkpoint",
        s(&ck),
        "--corpus",
        s(&corpus),
        "--mode",
        "both",
        "--top-k",
        "3",
        "--out",
        s(&preds),
    ];
    assert_eq!(framelens(&predict), EXIT_OK);
    let lines: Vec<serde_json::Value> = fs::read_to_string(&preds)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2 * 24);
    assert!(lines.iter().all(|l| l["top_k"].as_array().unwrap().len() <= 3));
    assert!(lines.iter().all(|l| l["fallback_used"] == false));

    let csv = dir.join("pairs.csv");
    let structural = dir.join("structural.json");
    let analyze = [
        "analyze",
        "--lexicon",
        s(&lexicon),
        "--checkpoint",
        s(&ck),
        "--csv",
        s(&csv),
        "--out",
        s(&structural),
    ];
    assert_eq!(framelens(&analyze), EXIT_OK);
    assert!(fs::read_to_string(&csv)
        .unwrap()
        .starts_with("sup,sub,alpha,delta_alpha,ratio"));

    // identical flags give identical artifacts
    let model_bytes = fs::read(&ck).unwrap();
    let report_bytes = fs::read(run_dir.join("train_report.json")).unwrap();
    assert_eq!(framelens(&train), EXIT_OK);
    assert_eq!(fs::read(&ck).unwrap(), model_bytes);
    assert_eq!(fs::read(run_dir.join("train_report.json")).unwrap(), report_bytes);
}

#[test]
fn single_sentence_prediction_with_unknown_lu_falls_back() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (synth_cfg, train_cfg) = write_small_configs(dir);
    let data = dir.join("data");
    assert_eq!(
        framelens(&["synth", "--out", s(&data), "--config", &synth_cfg]),
        EXIT_OK
    );
    let lexicon = data.join("lexicon.json");
    let corpus = data.join("corpus.jsonl");
    let run_dir = dir.join("run");
    let train = [
        "train",
        "--lexicon",
        s(&lexicon),
        "--corpus",
        s(&corpus),
        "--out",
        s(&run_dir),
        "--config",
        &train_cfg,
        "--stage",
        "1",
    ];
    assert_eq!(framelens(&train), EXIT_OK);
    assert!(run_dir.join("stage1.json").exists());
    assert!(!run_dir.join("stage2.json").exists());

    let out = dir.join("one.jsonl");
    let stage1 = run_dir.join("stage1.json");
    let predict = [
        "predict",
        "--lexicon",
        s(&lexicon),
        "--checkpoint",
        s(&stage1),
        "--sentence",
        "the cat zorbled the mouse",
        "--span",
        "2:2",
        "--lu",
        "zorble.v",
        "--out",
        s(&out),
    ];
    assert_eq!(framelens(&predict), EXIT_OK);
    let rec: serde_json::Value = serde_json::from_str(fs::read_to_string(&out).unwrap().trim()).unwrap();
    assert_eq!(rec["fallback_used"], true);
    assert_eq!(rec["mode"], "with_lf");
}

#[test]
fn exit_codes() {
    assert_eq!(framelens(&[]), EXIT_USAGE);
    assert_eq!(framelens(&["train", "--lexicon", "x.json"]), EXIT_USAGE);
    assert_eq!(framelens(&["eval", "--bogus"]), EXIT_USAGE);
    assert_eq!(framelens(&["--help"]), EXIT_OK);

    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    assert_eq!(framelens(&["validate", "--lexicon", s(&missing)]), EXIT_DATA);
    let broken = tmp.path().join("broken.json");
    fs::write(&broken, "{ not json").unwrap();
    assert_eq!(framelens(&["validate", "--lexicon", s(&broken)]), EXIT_DATA);
}

#[test]
fn gradcheck_command_passes() {
    assert_eq!(framelens(&["gradcheck", "--seed", "1"]), EXIT_OK);
}
