mod common;

use std::collections::HashSet;

use aircatch::io::{read_features, read_sidecar};
use common::*;

#[test]
fn synth_minimal_config_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "one.toml", ONE_DEVICE);
    let out = dir.path().join("one.csv");
    let run = aircatch([
        "synth".as_ref(),
        "--config".as_ref(),
        cfg.as_os_str(),
        "--features-only".as_ref(),
        "--out".as_ref(),
        out.as_os_str(),
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert_eq!(data_lines(&out).len(), 50);
    assert!(dir.path().join("one.csv.manifest.json").is_file());
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", COMMUTE);
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let r = aircatch([
            "synth".as_ref(),
            "--config".as_ref(),
            cfg.as_os_str(),
            "--seed".as_ref(),
            seed.as_ref(),
            "--features-only".as_ref(),
            "--out".as_ref(),
            out.as_os_str(),
        ]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", "1");
    assert_eq!(a, run("b.csv", "1"));
    assert_ne!(a, run("c.csv", "2"));
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &ONE_DEVICE.replace("cfo_hz = 12000", "cfo_hz = 12000\nbogus_key = 3"));
    let r = aircatch([
        "synth".as_ref(),
        "--config".as_ref(),
        cfg.as_os_str(),
        "--features-only".as_ref(),
        "--out".as_ref(),
        dir.path().join("x.csv").as_os_str(),
    ]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("bogus_key"), "{}", stderr(&r));
    assert!(!dir.path().join("x.csv").exists());

    let r = aircatch(["synth", "--config", "no_such_preset", "--features-only", "--out", "/nonexistent/x.csv"]);
    assert_eq!(code(&r), 2);
}

#[test]
fn synth_extract_round_trip_recovers_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "two.toml", TWO_DEVICES);
    let iq = dir.path().join("cap.iq");
    let r = aircatch(["synth".as_ref(), "--config".as_ref(), cfg.as_os_str(), "--out".as_ref(), iq.as_os_str()]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let idx = dir.path().join("cap.iq.idx");
    let entries = read_sidecar(std::fs::File::open(&idx).unwrap()).unwrap();

    let csv = dir.path().join("f.csv");
    let r = aircatch([
        "extract".as_ref(),
        iq.as_os_str(),
        idx.as_os_str(),
        "--config".as_ref(),
        cfg.as_os_str(),
        "--out".as_ref(),
        csv.as_os_str(),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let table = read_features(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(table.records.len(), entries.len());
    for rec in &table.records {
        let injected = if rec.identifier.contains(':') && rec.ecosystem.as_str() == "tile" { 12_000.0 } else { -31_000.0 };
        assert!((rec.fingerprint.cfo_packet() - injected).abs() < 500.0, "{rec:?}");
    }
    // the tag's 10 -> 1 bias shows up in its class estimate only
    let tag: Vec<_> = table.records.iter().filter(|r| r.ecosystem.as_str() == "tile").collect();
    let mean_10 = tag.iter().map(|r| r.fingerprint.components[3]).sum::<f64>() / tag.len() as f64;
    assert!(mean_10 - 12_000.0 > 300.0, "{mean_10}");
}

#[test]
fn truncated_iq_names_missing_range() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "two.toml", TWO_DEVICES);
    let iq = dir.path().join("cap.iq");
    assert_eq!(code(&aircatch(["synth".as_ref(), "--config".as_ref(), cfg.as_os_str(), "--out".as_ref(), iq.as_os_str()])), 0);
    let bytes = std::fs::read(&iq).unwrap();
    std::fs::write(&iq, &bytes[..bytes.len() - 8 * 1000]).unwrap();
    let r = aircatch([
        "extract".as_ref(),
        iq.as_os_str(),
        dir.path().join("cap.iq.idx").as_os_str(),
        "--out".as_ref(),
        dir.path().join("f.csv").as_os_str(),
    ]);
    assert_eq!(code(&r), 2);
    let have = bytes.len() / 8 - 1000;
    assert!(stderr(&r).contains(&format!("missing samples {have}..{}", bytes.len() / 8)), "{}", stderr(&r));

    std::fs::write(&iq, &bytes[..bytes.len() - 3]).unwrap();
    let r = aircatch([
        "extract".as_ref(),
        iq.as_os_str(),
        dir.path().join("cap.iq.idx").as_os_str(),
        "--out".as_ref(),
        dir.path().join("f.csv").as_os_str(),
    ]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("byte"), "{}", stderr(&r));
}

#[test]
fn detect_exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "commute.toml", COMMUTE);
    let inj = write(dir.path(), "inj.toml", INJECT);
    let benign = dir.path().join("benign.csv");
    let r = aircatch([
        "synth".as_ref(),
        "--config".as_ref(),
        cfg.as_os_str(),
        "--features-only".as_ref(),
        "--out".as_ref(),
        benign.as_os_str(),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let r = aircatch(["detect".as_ref(), benign.as_os_str(), "--out".as_ref(), dir.path().join("d0").as_os_str()]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert!(data_lines(&dir.path().join("d0/alerts.csv")).is_empty());
    assert!(!data_lines(&dir.path().join("d0/diagnostics.csv")).is_empty());

    let adv = dir.path().join("adv.csv");
    let r = aircatch([
        "inject".as_ref(),
        benign.as_os_str(),
        "--config".as_ref(),
        inj.as_os_str(),
        "--out".as_ref(),
        adv.as_os_str(),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let r = aircatch(["detect".as_ref(), adv.as_os_str(), "--out".as_ref(), dir.path().join("d1").as_os_str()]);
    assert_eq!(code(&r), 10, "{}", stderr(&r));
    assert!(!data_lines(&dir.path().join("d1/alerts.csv")).is_empty());

    // an unreachable threshold silences the same trace
    let r = aircatch([
        "detect".as_ref(),
        adv.as_os_str(),
        "--delta".as_ref(),
        "1000".as_ref(),
        "--out".as_ref(),
        dir.path().join("d2").as_os_str(),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
}

#[test]
fn bad_rows_beyond_one_percent_abort() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "one.toml", ONE_DEVICE);
    let good = dir.path().join("good.csv");
    assert_eq!(
        code(&aircatch([
            "synth".as_ref(),
            "--config".as_ref(),
            cfg.as_os_str(),
            "--features-only".as_ref(),
            "--out".as_ref(),
            good.as_os_str()
        ])),
        0
    );
    let text = std::fs::read_to_string(&good).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.insert(10, "12.5,zz,tile,not-a-number,1,2,3,4,,");
    let bad = write(dir.path(), "bad.csv", &(lines.join("\n") + "\n"));
    let r = aircatch(["detect".as_ref(), bad.as_os_str(), "--out".as_ref(), dir.path().join("d").as_os_str()]);
    assert_eq!(code(&r), 2);
    let offset = lines[..10].iter().map(|l| l.len() + 1).sum::<usize>();
    assert!(stderr(&r).contains(&format!("format error at byte {offset}")), "{}", stderr(&r));

    // one bad row in a few hundred is skipped with a warning
    let mut long: Vec<String> = text.lines().map(str::to_string).collect();
    for k in 1..=4 {
        long.extend(text.lines().skip(1).map(|l| l.replacen(',', &format!("{k},"), 1)));
    }
    long.insert(5, "garbage".into());
    let tolerable = write(dir.path(), "ok.csv", &(long.join("\n") + "\n"));
    let r = aircatch(["detect".as_ref(), tolerable.as_os_str(), "--out".as_ref(), dir.path().join("d2").as_os_str()]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
}

#[test]
fn anonymize_writes_no_raw_identifiers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "commute.toml", COMMUTE);
    let inj = write(dir.path(), "inj.toml", INJECT);
    let key = write(dir.path(), "key", "secret\n");
    let raw = dir.path().join("raw.csv");
    let anon = dir.path().join("anon.csv");
    assert_eq!(
        code(&aircatch([
            "synth".as_ref(),
            "--config".as_ref(),
            cfg.as_os_str(),
            "--features-only".as_ref(),
            "--out".as_ref(),
            raw.as_os_str()
        ])),
        0
    );
    let r = aircatch([
        "inject".as_ref(),
        raw.as_os_str(),
        "--config".as_ref(),
        inj.as_os_str(),
        "--anonymize".as_ref(),
        key.as_os_str(),
        "--out".as_ref(),
        anon.as_os_str(),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let raw_ids: HashSet<String> =
        read_features(std::fs::File::open(&raw).unwrap()).unwrap().records.into_iter().map(|r| r.identifier).collect();
    let anon_text = std::fs::read_to_string(&anon).unwrap();
    for id in &raw_ids {
        assert!(!anon_text.contains(id.as_str()), "{id} leaked");
    }
    let anon_ids: HashSet<String> =
        read_features(anon_text.as_bytes()).unwrap().records.into_iter().map(|r| r.identifier).collect();
    assert!(anon_ids.len() > raw_ids.len());

    let iq = dir.path().join("cap.iq");
    let two = write(dir.path(), "two.toml", TWO_DEVICES);
    let r = aircatch([
        "synth".as_ref(),
        "--config".as_ref(),
        two.as_os_str(),
        "--anonymize".as_ref(),
        key.as_os_str(),
        "--out".as_ref(),
        iq.as_os_str(),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let clear = dir.path().join("clear.csv");
    assert_eq!(
        code(&aircatch([
            "synth".as_ref(),
            "--config".as_ref(),
            two.as_os_str(),
            "--features-only".as_ref(),
            "--out".as_ref(),
            clear.as_os_str()
        ])),
        0
    );
    let sidecar = std::fs::read_to_string(dir.path().join("cap.iq.idx")).unwrap();
    for r in read_features(std::fs::File::open(&clear).unwrap()).unwrap().records {
        assert!(!sidecar.contains(&r.identifier), "{} leaked", r.identifier);
    }
}

#[test]
fn sweep_shape_and_report() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "short.toml", SHORT_COMMUTE);
    let sw = write(dir.path(), "sweep.toml", SWEEP);
    let out = dir.path().join("sw");
    let r = aircatch(["sweep".as_ref(), "--config".as_ref(), sw.as_os_str(), "--out".as_ref(), out.as_os_str()]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    // 1 scenario x 2 periods x 4 adversary counts
    assert_eq!(data_lines(&out.join("sweep.csv")).len(), 8);
    assert_eq!(data_lines(&out.join("benign.csv")).len(), 1);
    // thresholds 0.9, 1.15, 1.45 over 9 cells
    assert_eq!(data_lines(&out.join("thresholds.csv")).len(), 27);
    for arm in ["background", "adversary", "co_located"] {
        assert!(out.join(format!("densities_{arm}.csv")).is_file());
    }
    let r = aircatch(["report".as_ref(), out.as_os_str()]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(String::from_utf8_lossy(&r.stdout), text);
    for arm in ["background", "adversary", "co_located"] {
        let line = text.lines().find(|l| l.starts_with(arm)).unwrap();
        assert_eq!(line.split_whitespace().count(), 4, "{line}");
    }
}

#[test]
fn rerun_detects_tampered_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "one.toml", ONE_DEVICE);
    let out = dir.path().join("one.csv");
    assert_eq!(
        code(&aircatch([
            "synth".as_ref(),
            "--config".as_ref(),
            cfg.as_os_str(),
            "--features-only".as_ref(),
            "--out".as_ref(),
            out.as_os_str()
        ])),
        0
    );
    let manifest = dir.path().join("one.csv.manifest.json");
    let r = aircatch(["rerun".as_ref(), manifest.as_os_str()]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let recorded = std::fs::read_to_string(&manifest).unwrap();
    let sha = aircatch_sha(&recorded);
    std::fs::write(&manifest, recorded.replace(&sha, &"0".repeat(64))).unwrap();
    let r = aircatch(["rerun".as_ref(), manifest.as_os_str()]);
    assert_eq!(code(&r), 1, "{}", stderr(&r));
    assert!(String::from_utf8_lossy(&r.stdout).contains("DIFFERS"));

    std::fs::write(&manifest, &recorded).unwrap();
    std::fs::write(&cfg, ONE_DEVICE.replace("seed = 5", "seed = 6")).unwrap();
    let r = aircatch(["rerun".as_ref(), manifest.as_os_str()]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("changed"), "{}", stderr(&r));
}

/// Digest of the first recorded output.
fn aircatch_sha(manifest: &str) -> String {
    let v: serde_json::Value = serde_json::from_str(manifest).unwrap();
    v["outputs"][0]["sha256"].as_str().unwrap().to_string()
}

#[test]
fn rerun_accepts_directory_outputs_with_trailing_slash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "one.toml", ONE_DEVICE);
    let feats = dir.path().join("one.csv");
    assert_eq!(
        code(&aircatch([
            "synth".as_ref(),
            "--config".as_ref(),
            cfg.as_os_str(),
            "--features-only".as_ref(),
            "--out".as_ref(),
            feats.as_os_str()
        ])),
        0
    );
    let out = format!("{}/det/", dir.path().display());
    let r = aircatch(["detect".as_ref(), feats.as_os_str(), "--out".as_ref(), out.as_ref()]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let r = aircatch(["rerun".as_ref(), dir.path().join("det/manifest.json").as_os_str()]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
}
