use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn spinebox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinebox"))
        .args(args)
        .env_remove("SPINEBOX_JOBS")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        out.insert(
            p.file_name().unwrap().to_string_lossy().into_owned(),
            fs::read(&p).unwrap(),
        );
    }
    out
}

fn write_spec(dir: &Path, json: &str) -> PathBuf {
    let p = dir.join("spec.json");
    fs::write(&p, json).unwrap();
    p
}

/// Three images, three books each.
fn small_corpus(root: &Path) -> PathBuf {
    let spec = write_spec(
        root,
        r#"{"seed": 4, "images": 3, "books": [3, 3], "shelf": {"canvas_width": 900, "canvas_height": 800}}"#,
    );
    let corpus = root.join("corpus");
    let o = spinebox(&["synth", "--spec", s(&spec), "--out", s(&corpus)]);
    assert!(o.status.success(), "{}", stderr(&o));
    corpus
}

#[test]
fn synth_writes_requested_books_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let a = small_corpus(tmp.path());
    let files = tree(&a);
    for i in 0..3 {
        assert!(files.contains_key(&format!("shelf_{i:03}.png")));
        let gt = String::from_utf8(files[&format!("shelf_{i:03}.gt.txt")].clone()).unwrap();
        assert_eq!(gt.lines().count(), 3);
    }
    let spec = tmp.path().join("spec.json");
    let b = tmp.path().join("again");
    let o = spinebox(&["synth", "--spec", s(&spec), "--out", s(&b), "--jobs", "3"]);
    assert!(o.status.success());
    assert_eq!(files, tree(&b));
}

#[test]
fn synth_rejects_invalid_specs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let bad = write_spec(
        tmp.path(),
        r#"{"images": 2, "shelf": {"fragments_per_book": [4, 2]}}"#,
    );
    let o = spinebox(&["synth", "--spec", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let unknown = write_spec(tmp.path(), r#"{"imgs": 2}"#);
    let o = spinebox(&["synth", "--spec", s(&unknown), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("imgs"));
    let crowded = write_spec(
        tmp.path(),
        r#"{"images": 1, "books": [6, 6], "shelf": {"canvas_width": 300}}"#,
    );
    let o = spinebox(&["synth", "--spec", s(&crowded), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn refine_eval_render_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let out = tmp.path().join("refined");
    let o = spinebox(&[
        "refine",
        "--images",
        s(&corpus),
        "--out",
        s(&out),
        "--render",
        "--gt",
        s(&corpus),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files = tree(&out);
    for i in 0..3 {
        assert!(files.contains_key(&format!("shelf_{i:03}.boxes.txt")));
        assert!(files.contains_key(&format!("shelf_{i:03}.png")));
    }
    assert!(files.keys().all(|k| !k.ends_with(".partial")));
    let manifest: serde_json::Value = serde_json::from_slice(&files["manifest.json"]).unwrap();
    assert_eq!(manifest["config"]["threshold_spine"], 60.0);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
    assert!(manifest.get("timings_ms").is_none());

    let report = tmp.path().join("reports/eval");
    let o = spinebox(&[
        "eval",
        "--pred",
        s(&out),
        "--gt",
        s(&corpus),
        "--out",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("reports/eval.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "image,BA,EDBC,IoU,ADM,matched_books,total_books,false_boxes"
    );
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().last().unwrap().starts_with("TOTAL,"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("reports/eval.json")).unwrap())
            .unwrap();
    assert_eq!(json["total"]["total_books"], 9);

    let drawn = tmp.path().join("drawn");
    let o = spinebox(&[
        "render",
        "--images",
        s(&corpus),
        "--boxes",
        s(&out),
        "--gt",
        s(&corpus),
        "--out",
        s(&drawn),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(tree(&drawn).len(), 3);
    assert_eq!(
        fs::read(drawn.join("shelf_001.png")).unwrap(),
        files["shelf_001.png"]
    );
}

#[test]
fn perfect_predictions_score_one() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let pred = tmp.path().join("pred");
    fs::create_dir(&pred).unwrap();
    for i in 0..3 {
        fs::copy(
            corpus.join(format!("shelf_{i:03}.gt.txt")),
            pred.join(format!("shelf_{i:03}.boxes.txt")),
        )
        .unwrap();
    }
    let report = tmp.path().join("r.json");
    let o = spinebox(&[
        "eval",
        "--pred",
        s(&pred),
        "--gt",
        s(&corpus),
        "--out",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    for row in json["rows"].as_array().unwrap() {
        assert_eq!(row["metrics"]["ba"], 1.0);
        assert!(row["metrics"]["edbc_mean"].as_f64().unwrap() < 1e-2);
    }
}

#[test]
fn eval_lists_stems_without_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let (pred, gt) = (tmp.path().join("p"), tmp.path().join("g"));
    fs::create_dir(&pred).unwrap();
    fs::create_dir(&gt).unwrap();
    fs::write(pred.join("x.boxes.txt"), "").unwrap();
    fs::write(pred.join("y.boxes.txt"), "").unwrap();
    fs::write(gt.join("z.gt.txt"), "5,5,10,10,90\n").unwrap();
    let o = spinebox(&[
        "eval",
        "--pred",
        s(&pred),
        "--gt",
        s(&gt),
        "--out",
        s(&tmp.path().join("r")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("x, y"), "{err}");
}

#[test]
fn empty_detections_give_empty_output() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    fs::write(corpus.join("shelf_000.boxes.txt"), "").unwrap();
    let out = tmp.path().join("o");
    let img = corpus.join("shelf_000.png");
    let o = spinebox(&["refine", "--images", s(&img), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(out.join("shelf_000.boxes.txt")).unwrap(),
        ""
    );
}

#[test]
fn config_errors_exit_two_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let out = tmp.path().join("o");
    let o = spinebox(&[
        "refine",
        "--images",
        s(&corpus),
        "--out",
        s(&out),
        "--nms-iou",
        "1.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nms_iou"), "{}", stderr(&o));

    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"threshold_spine": 60, "shrink_z": 1}"#).unwrap();
    let o = spinebox(&[
        "refine",
        "--images",
        s(&corpus),
        "--out",
        s(&out),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("shrink_z"));

    fs::write(&cfg, r#"{"shrink_x": 0.0}"#).unwrap();
    let o = spinebox(&[
        "ablate",
        "--corpus",
        s(&corpus),
        "--out",
        s(&out),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("shrink_x"));
}

#[test]
fn input_errors_exit_one_and_name_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let out = tmp.path().join("o");
    fs::remove_file(corpus.join("shelf_001.boxes.txt")).unwrap();
    let o = spinebox(&["refine", "--images", s(&corpus), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("shelf_001.boxes.txt"));

    fs::write(corpus.join("shelf_001.boxes.txt"), "1,2,3\n").unwrap();
    let o = spinebox(&["refine", "--images", s(&corpus), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("shelf_001.boxes.txt:1"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn manifest_replay_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let first = tmp.path().join("first");
    let o = spinebox(&[
        "refine",
        "--images",
        s(&corpus),
        "--out",
        s(&first),
        "--threshold-text",
        "90",
    ]);
    assert!(o.status.success());
    let second = tmp.path().join("second");
    let manifest = first.join("manifest.json");
    let o = spinebox(&[
        "refine",
        "--from-manifest",
        s(&manifest),
        "--out",
        s(&second),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(tree(&first), tree(&second));

    let timed = tmp.path().join("timed");
    let o = spinebox(&[
        "refine",
        "--images",
        s(&corpus),
        "--out",
        s(&timed),
        "--manifest-timings",
    ]);
    assert!(o.status.success());
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(timed.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["timings_ms"].as_object().unwrap().len(), 3);
}

#[test]
fn ablate_emits_the_four_fixed_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let report = tmp.path().join("ablation");
    let o = Command::new(env!("CARGO_BIN_EXE_spinebox"))
        .args(["ablate", "--corpus", s(&corpus), "--out", s(&report)])
        .env("SPINEBOX_JOBS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("ablation.csv")).unwrap();
    let names: Vec<&str> = csv.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        names,
        [
            "config",
            "naive",
            "grouping",
            "grouping+adjusting(location)",
            "grouping+adjusting(location+angle)"
        ]
    );
}

#[test]
fn jobs_must_be_positive() {
    let tmp = tempfile::tempdir().unwrap();
    let o = spinebox(&["synth", "--out", s(tmp.path()), "--jobs", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
