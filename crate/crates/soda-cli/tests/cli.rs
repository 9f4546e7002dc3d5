//! End-to-end tests of the `soda` binary: exit-status contract,
//! deterministic outputs, and the worked examples from the library docs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use soda_core::corpus::{to_manifest_line, Document, Utterance};
use soda_core::scaling::AllocationLaws;

fn soda(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soda"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_failure(out: &Output, needle: &str) {
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(out));
    assert!(
        stderr(out).contains(needle),
        "stderr missing '{needle}': {}",
        stderr(out)
    );
}

/// A small valid document: two utterances, 8-codebook code rows.
fn make_doc(i: u32) -> Document {
    let utterances = (0..2)
        .map(|u| Utterance {
            text_ids: vec![10 + i, 20 + u, 30],
            codes: (0..3 + i as usize + u as usize)
                .map(|f| (0..8).map(|c| ((f * 8 + c) as u32 + i) % 2048).collect())
                .collect(),
            duration_s: None,
        })
        .collect();
    Document {
        doc_id: format!("doc-{i}"),
        source: "river".to_string(),
        utterances,
    }
}

fn write_manifest(path: &Path, docs: &[Document]) {
    let lines: String = docs.iter().map(|d| to_manifest_line(d) + "\n").collect();
    fs::write(path, lines).unwrap();
}

#[test]
fn tokenize_is_deterministic_and_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(
        &dir.path().join("m.jsonl"),
        &[make_doc(0), make_doc(1), make_doc(2)],
    );

    for out_name in ["a.shard", "b.shard"] {
        let out = soda(
            &["tokenize", "m.jsonl", "--out", out_name, "--seq-len", "64"],
            dir.path(),
        );
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        assert!(stdout(&out).contains("3 documents"));
    }
    let a = fs::read(dir.path().join("a.shard")).unwrap();
    let b = fs::read(dir.path().join("b.shard")).unwrap();
    assert_eq!(a, b, "repeat runs must write identical shards");

    let (_, seq_len, seqs) = soda_core::shard::read_shard(&dir.path().join("a.shard")).unwrap();
    assert_eq!(seq_len, 64);
    assert!(!seqs.is_empty());
    assert!(seqs.iter().all(|s| s.tokens.len() == 64));
}

#[test]
fn tokenize_formats_change_the_bytes() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(&dir.path().join("m.jsonl"), &[make_doc(0), make_doc(1)]);
    for (name, format) in [("t.shard", "text-first"), ("a.shard", "audio-first")] {
        let out = soda(
            &[
                "tokenize",
                "m.jsonl",
                "--out",
                name,
                "--seq-len",
                "32",
                "--format",
                format,
            ],
            dir.path(),
        );
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }
    let t = fs::read(dir.path().join("t.shard")).unwrap();
    let a = fs::read(dir.path().join("a.shard")).unwrap();
    assert_ne!(t, a);
}

#[test]
fn tokenize_empty_manifest_warns_but_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let out = soda(
        &[
            "tokenize",
            "empty.jsonl",
            "--out",
            "e.shard",
            "--seq-len",
            "16",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(stderr(&out).contains("warning"));
    let (_, _, seqs) = soda_core::shard::read_shard(&dir.path().join("e.shard")).unwrap();
    assert!(seqs.is_empty());
}

#[test]
fn tokenize_bad_code_fails_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = make_doc(9);
    bad.utterances[0].codes[0][0] = 9_999; // above the 2048 codebook bound
    write_manifest(&dir.path().join("bad.jsonl"), &[make_doc(0), bad]);
    let out = soda(
        &[
            "tokenize",
            "bad.jsonl",
            "--out",
            "x.shard",
            "--seq-len",
            "16",
        ],
        dir.path(),
    );
    assert_failure(&out, "line 2");
    assert!(stderr(&out).contains("9999"));
}

#[test]
fn mix_schedules_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("mix.kv"),
        "seed = 42\nmax_epochs = 4\nsource.text = 0.5\nsource.river = 0.5\n",
    )
    .unwrap();
    let args = [
        "mix",
        "mix.kv",
        "--docs",
        "text=500",
        "--docs",
        "river=500",
        "--total-events",
        "1000",
    ];
    for out_name in ["s1.csv", "s2.csv"] {
        let out = soda(&[&args[..], &["--out", out_name]].concat(), dir.path());
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        assert!(stdout(&out).contains("target 0.5000"));
    }
    let s1 = fs::read(dir.path().join("s1.csv")).unwrap();
    let s2 = fs::read(dir.path().join("s2.csv")).unwrap();
    assert_eq!(s1, s2);
    let text = String::from_utf8(s1).unwrap();
    assert!(text.starts_with("event,source,doc_index,epoch,format\n"));
    assert_eq!(text.lines().count(), 1_001);
}

#[test]
fn mix_seed_override_changes_the_schedule() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("mix.kv"),
        "seed = 1\nsource.a = 0.5\nsource.b = 0.5\n",
    )
    .unwrap();
    let base = [
        "mix",
        "mix.kv",
        "--docs",
        "a=100",
        "--docs",
        "b=100",
        "--total-events",
        "200",
    ];
    let out = soda(&[&base[..], &["--out", "d.csv"]].concat(), dir.path());
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let out = soda(
        &[&base[..], &["--seed", "2", "--out", "o.csv"]].concat(),
        dir.path(),
    );
    assert!(out.status.success());
    assert!(stdout(&out).contains("seed 2"));
    assert_ne!(
        fs::read(dir.path().join("d.csv")).unwrap(),
        fs::read(dir.path().join("o.csv")).unwrap()
    );
}

#[test]
fn mix_rejects_weights_that_do_not_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.kv"),
        "seed = 1\nsource.a = 0.6\nsource.b = 0.5\n",
    )
    .unwrap();
    let out = soda(
        &[
            "mix",
            "bad.kv",
            "--docs",
            "a=10",
            "--docs",
            "b=10",
            "--total-events",
            "5",
            "--out",
            "x.csv",
        ],
        dir.path(),
    );
    assert_failure(&out, "sum");
}

/// IsoFLOP sweep whose minima lie exactly on N* = 0.0655 C^0.391.
fn write_sweep_csv(path: &Path) {
    let mut rows = String::from("n_params,d_tokens,compute,loss\n");
    for k in 0..3 {
        let c = 1e19 * 100f64.powi(k);
        let n_star = 0.0655 * c.powf(0.391);
        for i in -3..=3 {
            let n = n_star * 2f64.powf(i as f64 / 2.0);
            let d = c / (6.0 * n);
            let x = (n / n_star).ln();
            let loss = 2.5 + 2.0 * (c / 1e18).powf(-0.1) + 0.05 * x * x;
            rows.push_str(&format!("{n:.10e},{d:.10e},{c:.10e},{loss:.10}\n"));
        }
    }
    fs::write(path, rows).unwrap();
}

#[test]
fn fit_isoflop_recovers_planted_exponents() {
    let dir = tempfile::tempdir().unwrap();
    write_sweep_csv(&dir.path().join("runs.csv"));
    let out = soda(
        &["fit", "runs.csv", "--mode", "isoflop", "--out-dir", "out"],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("per-budget minima"));

    let laws_text = fs::read_to_string(dir.path().join("out/laws.kv")).unwrap();
    let laws = AllocationLaws::from_key_value(&laws_text).unwrap();
    assert!(
        (laws.n_law.exponent - 0.391).abs() < 1e-3,
        "{}",
        laws.n_law.exponent
    );
    assert!(
        (laws.d_law.exponent - 0.609).abs() < 1e-3,
        "{}",
        laws.d_law.exponent
    );
    assert!(dir.path().join("out/optima.csv").exists());
}

#[test]
fn fit_rejects_malformed_csv() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("runs.csv"),
        "n_params,d_tokens,compute,loss\n1e8,oops,,3\n",
    )
    .unwrap();
    let out = soda(
        &["fit", "runs.csv", "--mode", "powerlaw", "--out-dir", "out"],
        dir.path(),
    );
    assert_failure(&out, "line 2");
}

/// Fit file holding the reference loss-surface constants.
fn write_fit_kv(path: &Path) {
    fs::write(
        path,
        "e = 3.169\na = 215886\nalpha = 0.684\nb = 4750\nbeta = 0.439\n",
    )
    .unwrap();
}

#[test]
fn predict_point_matches_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    write_fit_kv(&dir.path().join("fit.kv"));
    let out = soda(
        &[
            "predict", "--fit", "fit.kv", "--n", "600e6", "--d", "5.55e9",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("3.633"), "stdout: {}", stdout(&out));
}

#[test]
fn predict_k_equal_one_matches_plain_budget() {
    let dir = tempfile::tempdir().unwrap();
    write_fit_kv(&dir.path().join("fit.kv"));
    let plain = soda(
        &["predict", "--fit", "fit.kv", "--budget", "3.06e20"],
        dir.path(),
    );
    let k1 = soda(
        &[
            "predict", "--fit", "fit.kv", "--budget", "3.06e20", "--k", "1",
        ],
        dir.path(),
    );
    assert!(plain.status.success() && k1.status.success());
    let loss_line = |s: &str| {
        s.lines()
            .find(|l| l.starts_with("predicted loss"))
            .unwrap()
            .to_string()
    };
    assert_eq!(loss_line(&stdout(&plain)), loss_line(&stdout(&k1)));
}

#[test]
fn predict_rejects_negative_budget() {
    let dir = tempfile::tempdir().unwrap();
    write_fit_kv(&dir.path().join("fit.kv"));
    let out = soda(
        &["predict", "--fit", "fit.kv", "--budget", "-1e20"],
        dir.path(),
    );
    assert_failure(&out, "positive");
}

#[test]
fn predict_rejects_incomplete_point_flags() {
    let dir = tempfile::tempdir().unwrap();
    write_fit_kv(&dir.path().join("fit.kv"));
    let out = soda(&["predict", "--fit", "fit.kv", "--n", "1e9"], dir.path());
    assert_failure(&out, "--d");
}

#[test]
fn schedule_prints_reference_accounting() {
    let dir = tempfile::tempdir().unwrap();
    let out = soda(
        &[
            "schedule",
            "--tokens",
            "500000000000",
            "--batch",
            "512",
            "--seq-len",
            "4096",
            "--width",
            "1024",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("238419 steps"), "stdout: {text}");
    assert!(text.contains("multiplier 0.0 at step 0"));
    assert!(text.contains("multiplier 0.0 at step 238419"));

    let out = soda(
        &[
            "schedule",
            "--tokens",
            "500000000000",
            "--batch",
            "256",
            "--seq-len",
            "4096",
            "--width",
            "1024",
        ],
        dir.path(),
    );
    assert!(stdout(&out).contains("peak learning rate 0.003000"));
}

#[test]
fn schedule_rejects_zero_batch() {
    let dir = tempfile::tempdir().unwrap();
    let out = soda(
        &[
            "schedule",
            "--tokens",
            "1000",
            "--batch",
            "0",
            "--seq-len",
            "4096",
            "--width",
            "1024",
        ],
        dir.path(),
    );
    assert_failure(&out, "positive");
}

#[test]
fn correlate_monotone_series_and_constant_column() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("series.csv"),
        "model,nll_1,nll_2,acc,flat\n\
         m1,2.0,1.0,0.60,5\n\
         m2,1.5,0.9,0.70,5\n\
         m3,1.0,0.8,0.80,5\n\
         m4,0.5,0.7,0.90,5\n",
    )
    .unwrap();
    for out_name in ["c1.csv", "c2.csv"] {
        let out = soda(&["correlate", "series.csv", "--out", out_name], dir.path());
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        let text = stdout(&out);
        assert!(text.contains("rho = -1.0000"), "stdout: {text}");
        assert!(text.contains("undefined"));
    }
    let c1 = fs::read(dir.path().join("c1.csv")).unwrap();
    assert_eq!(c1, fs::read(dir.path().join("c2.csv")).unwrap());
    let text = String::from_utf8(c1).unwrap();
    assert!(text.contains("undefined"));
    assert!(text.lines().any(|l| l.starts_with("nll_1_abs,1.000000")));
}

#[test]
fn correlate_variant_flag_selects_one_column() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("series.csv"),
        "model,nll_1,nll_2,acc\nm1,2.0,1.0,0.6\nm2,1.5,0.9,0.7\nm3,1.0,0.8,0.8\n",
    )
    .unwrap();
    let out = soda(&["correlate", "series.csv", "--variant", "2"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("nll_2"));
    assert!(!text.contains("nll_1"), "stdout: {text}");

    let out = soda(&["correlate", "series.csv", "--variant", "7"], dir.path());
    assert_failure(&out, "nll_7");
}
