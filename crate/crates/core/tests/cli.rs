use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn palmcode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_palmcode")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn version_reports_config_hash() {
    let out = palmcode(&["--version"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let hash = text.trim().rsplit(' ').next().unwrap();
    assert!(text.starts_with("palmcode "));
    assert_eq!(hash.len(), 16);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    assert_eq!(palmcode(&["identify", "--bogus"]).status.code(), Some(2));
    assert_eq!(palmcode(&[]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.pcg");
    let out = palmcode(&["verify", "--gallery", p(&missing), "--roi-dir", p(dir.path()), "--claim", "a", "--threshold", "1"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn roi_corpus_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("roi");
    let gallery = dir.path().join("g.pcg");
    let out = palmcode(&["synth", "--ids", "4", "--samples", "4", "--bands", "2", "--out", p(&corpus), "--seed", "3"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["samples"], 16);
    assert!(corpus.join("id0002/s03/band1.pgm").exists());

    let enc = json(&palmcode(&["encode", "--roi-dir", p(&corpus.join("id0000/s00"))]));
    assert_eq!(enc["bytes_per_band"], serde_json::json!([676, 676]));

    let out = palmcode(&["enroll", "--gallery", p(&gallery), "--corpus", p(&corpus)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["columns"], 16);

    let probe = corpus.join("id0002/s03");
    let id = json(&palmcode(&["identify", "--gallery", p(&gallery), "--roi-dir", p(&probe), "--top", "2"]));
    assert_eq!(id["decided"], "id0002");
    assert_eq!(id["score"], 2 * 676);
    assert_eq!(id["ranked"].as_array().unwrap().len(), 2);

    let verify = |claim: &str, threshold: &str, mode: &str| {
        palmcode(&[
            "verify", "--gallery", p(&gallery), "--roi-dir", p(&probe), "--claim", claim, "--threshold", threshold,
            "--mode", mode,
        ])
        .status
        .code()
    };
    assert_eq!(verify("id0002", "1352", "atm"), Some(0));
    assert_eq!(verify("id0002", "1352", "stm"), Some(0));
    assert_eq!(verify("id0001", "1000", "atm"), Some(1));
    assert_eq!(verify("nobody", "1", "atm"), Some(3));

    let report = dir.path().join("report.json");
    let out = palmcode(&["eval", "--gallery-dir", p(&corpus), "--protocol", "all", "--report", p(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    // exp1 reports each of the two bands, the other four one fused set
    assert_eq!(r["protocols"].as_array().unwrap().len(), 6);
    assert_eq!(r["cmc"]["folds"].as_array().unwrap().len(), 5);
    assert_eq!(r["seed"], 0);
}

#[test]
fn single_sample_enroll_appends() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("roi");
    let gallery = dir.path().join("g.pcg");
    assert!(palmcode(&["synth", "--ids", "2", "--samples", "2", "--bands", "3", "--out", p(&corpus)]).status.success());
    for s in ["s00", "s01"] {
        let out = palmcode(&["enroll", "--gallery", p(&gallery), "--roi-dir", p(&corpus.join("id0000").join(s)), "--id", "ann"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let last = json(&palmcode(&[
        "enroll", "--gallery", p(&gallery), "--roi-dir", p(&corpus.join("id0001/s00")), "--id", "bo", "--session", "2",
    ]));
    assert_eq!(last["columns"], 3);
    assert_eq!(last["sample"], 0);
    // a gallery built with another filter order must be refused
    let out = palmcode(&["enroll", "--gallery", p(&gallery), "--roi-dir", p(&corpus.join("id0001/s01")), "--id", "bo", "--k", "2"]);
    assert_eq!(out.status.code(), Some(3));
    // the roi directory supplies two bands where the gallery holds three
    let two = dir.path().join("two");
    std::fs::create_dir_all(&two).unwrap();
    for b in 0..2 {
        std::fs::copy(corpus.join(format!("id0001/s01/band{b}.pgm")), two.join(format!("band{b}.pgm"))).unwrap();
    }
    let out = palmcode(&["identify", "--gallery", p(&gallery), "--roi-dir", p(&two)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn hand_images_extract_and_match() {
    let dir = tempfile::tempdir().unwrap();
    let hands = dir.path().join("hands");
    let rois = dir.path().join("rois");
    let out = palmcode(&["synth", "--ids", "2", "--samples", "2", "--bands", "2", "--kind", "hands", "--out", p(&hands)]);
    assert!(out.status.success());
    assert!(hands.join("id0001/s01/truth.json").exists());

    let out = palmcode(&["extract-roi", "--in", p(&hands), "--out", p(&rois)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(json(&out)["extracted"], 4);
    let side: Value = serde_json::from_slice(&std::fs::read(rois.join("id0000/s00/roi.json")).unwrap()).unwrap();
    assert!(side["palm_width"].as_f64().unwrap() > 100.0);
    let truth: Value = serde_json::from_slice(&std::fs::read(hands.join("id0000/s00/truth.json")).unwrap()).unwrap();
    for key in ["p1", "p2", "p3"] {
        let d = |axis: &str| side["landmarks"][key][axis].as_f64().unwrap() - truth["landmarks"][key][axis].as_f64().unwrap();
        assert!(d("x").abs().max(d("y").abs()) < 3.0, "{key} off by ({}, {})", d("x"), d("y"));
    }

    let gallery = dir.path().join("g.pcg");
    assert!(palmcode(&["enroll", "--gallery", p(&gallery), "--corpus", p(&rois)]).status.success());
    let id = json(&palmcode(&["identify", "--gallery", p(&gallery), "--roi-dir", p(&rois.join("id0001/s00"))]));
    assert_eq!(id["decided"], "id0001");

    // a blank image has no hand to find
    let blank = dir.path().join("blank");
    std::fs::create_dir_all(&blank).unwrap();
    palmcode::raster::write_pgm(blank.join("band0.pgm"), &palmcode::raster::GrayImage::new(64, 64)).unwrap();
    let out = palmcode(&["extract-roi", "--in", p(&blank), "--out", p(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["failed"].as_array().unwrap().len(), 1);
}

#[test]
fn bench_and_kernels() {
    let r = json(&palmcode(&["bench", "--columns", "200", "--queries", "2", "--bands", "2"]));
    assert_eq!(r["columns"], 200);
    assert_eq!(r["bytes_per_band"], 676);
    assert_eq!(r["translations"], 49);
    assert!(r["matches_per_sec_per_band_single"].as_f64().unwrap() > 0.0);
    let empty = json(&palmcode(&["bench", "--columns", "10", "--queries", "0"]));
    assert_eq!(empty["matches_per_sec_per_band_single"], 0.0);

    let dir = tempfile::tempdir().unwrap();
    let bank = dir.path().join("k2.txt");
    assert!(palmcode(&["kernels", "--k", "2", "--out", p(&bank)]).status.success());
    let parsed = palmcode::nsct::load_bank(&bank).unwrap();
    assert_eq!(parsed.k(), 2);
    assert_eq!(parsed, palmcode::nsct::FilterBank::synthesize(2));
}
