mod common;

use std::fs;

use common::*;
use wadistill::spectral::read_spectrum;
use wadistill::WeightedAutomaton;
use wadistill_cli::error::exit;
use wadistill_cli::manifest::Manifest;
use wadistill_cli::report::{read_report, Row};

fn load_wa(path: &std::path::Path) -> WeightedAutomaton {
    WeightedAutomaton::from_document(&fs::read_to_string(path).unwrap()).unwrap()
}

fn value(rows: &[Row], metric: &str, set: &str, rank: usize) -> f64 {
    rows.iter()
        .find(|r| r.metric == metric && r.eval_set == set && r.rank == rank)
        .and_then(|r| r.value)
        .unwrap_or_else(|| panic!("no {metric} {set} row at rank {rank}"))
}

#[test]
fn distill_over_protocol_recovers_two_state() {
    let dir = tempfile::tempdir().unwrap();
    let wa_out = dir.path().join("out.json");
    let oracle = mock_wa(&fixture("two_state.json"));
    let out = wadistill(&["distill", "--oracle", &oracle, "--p", "16", "--s", "16", "--rank", "2", "--wa-out", s(&wa_out)]);
    ok(&out);
    let wa = load_wa(&wa_out);
    assert_eq!(wa.rank(), 2);
    assert!(!wa.is_stochastic());
    for (w, want) in [(vec![0, 1], 5.0 / 96.0), (vec![0], 1.0 / 24.0), (vec![1], 1.0 / 12.0), (vec![], 0.0)] {
        assert!((wa.weight(&w).unwrap() - want).abs() < 1e-8, "{w:?}");
    }
    let spectrum = read_spectrum(fs::read_to_string(dir.path().join("out.json.spectrum.tsv")).unwrap().as_bytes()).unwrap();
    assert_eq!(spectrum.hankel_rank, 2);
    let m = Manifest::read(&dir.path().join("out.json.manifest.json")).unwrap();
    assert_eq!((m.rank, m.extracted_rank, m.hankel_rank), (Some(2), Some(2), 2));
    assert_eq!(m.oracle.spec, oracle);
    assert_eq!(m.oracle.sha256.len(), 64);
}

#[test]
fn distill_defaults_to_detected_rank() {
    let dir = tempfile::tempdir().unwrap();
    let wa_out = dir.path().join("w.json");
    let two_state = format!("wa:{}", fixture("two_state.json").display());
    ok(&wadistill(&["distill", "--oracle", &two_state, "--p", "20", "--s", "20", "--wa-out", s(&wa_out)]));
    assert_eq!(load_wa(&wa_out).rank(), 2);
}

#[test]
fn exit_codes_by_family() {
    let dir = tempfile::tempdir().unwrap();
    let wa_out = dir.path().join("w.json");
    let two_state = format!("wa:{}", fixture("two_state.json").display());

    let out = wadistill(&["distill", "--oracle", &two_state, "--p", "4", "--s", "6", "--rank", "5", "--wa-out", s(&wa_out)]);
    assert_eq!(code(&out), exit::USAGE);
    assert!(!wa_out.exists());

    let out = wadistill(&["distill", "--oracle", "tcp:127.0.0.1:1", "--wa-out", s(&wa_out)]);
    assert_eq!(code(&out), exit::ORACLE_UNAVAILABLE);
    let out = wadistill(&["distill", "--oracle", "exec:/nonexistent/oracle-binary", "--wa-out", s(&wa_out)]);
    assert_eq!(code(&out), exit::ORACLE_UNAVAILABLE);

    let missing = dir.path().join("missing.txt");
    let out = wadistill(&["eval", "--oracle", &two_state, "--candidate", &two_state, "--test-file", s(&missing), "--eval-size", "5"]);
    assert_eq!(code(&out), exit::PARSE);
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "1 2\n3 0 1\n").unwrap();
    let out = wadistill(&["eval", "--oracle", &two_state, "--candidate", &two_state, "--test-file", s(&bad), "--eval-size", "5"]);
    assert_eq!(code(&out), exit::PARSE);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let garbled = dir.path().join("garbled.json");
    fs::write(&garbled, "{\"format_version\":1").unwrap();
    let out = wadistill(&["distill", "--oracle", &format!("wa:{}", garbled.display()), "--wa-out", s(&wa_out)]);
    assert_eq!(code(&out), exit::PARSE);

    let out = wadistill(&["distill", "--oracle", &format!("wa:{}", dir.path().join("none.json").display()), "--wa-out", s(&wa_out)]);
    assert_eq!(code(&out), exit::IO);

    // Only 7 distinct strings of length ≤ 2 exist over {a, b}.
    let out = wadistill(&["distill", "--oracle", &two_state, "--strategy", "uniform", "--p", "50", "--s", "50", "--max-len", "2", "--wa-out", s(&wa_out)]);
    assert_eq!(code(&out), exit::BASIS);

    assert_eq!(code(&wadistill(&["distill", "--oracle", "rnn:x", "--wa-out", s(&wa_out)])), exit::USAGE);
    assert_eq!(code(&wadistill(&["sweep", "--oracle", &two_state, "--rank", "", "--report", s(&dir.path().join("r.csv"))])), exit::USAGE);
}

#[test]
fn stalled_server_times_out_as_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let oracle = format!("exec:{MOCK} --wa {} --stall-after 1", fixture("two_state.json").display());
    let start = std::time::Instant::now();
    let out = wadistill(&["distill", "--oracle", &oracle, "--timeout-secs", "1", "--p", "4", "--s", "4", "--wa-out", s(&dir.path().join("w.json"))]);
    assert_eq!(code(&out), exit::ORACLE_UNAVAILABLE);
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn eval_self_consistency_and_independent_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.json");
    let other = dir.path().join("other.json");
    ok(&wadistill(&["pfa", "gen", "--states", "4", "--alphabet", "3", "--seed", "11", "--out", s(&target)]));
    ok(&wadistill(&["pfa", "gen", "--states", "4", "--alphabet", "3", "--seed", "12", "--out", s(&other)]));
    let test_file = dir.path().join("test.txt");
    let ground = format!("wa:{}", target.display());
    ok(&wadistill(&["sample", "--oracle", &ground, "--count", "50", "--seed-eval", "5", "--out", s(&test_file)]));
    let report = dir.path().join("r.csv");
    for cand in [&target, &other] {
        let cand = format!("wa:{}", cand.display());
        let args = ["eval", "--oracle", &ground, "--candidate", &cand, "--test-file", s(&test_file), "--eval-size", "100", "--report", s(&report)];
        ok(&wadistill(&args));
    }
    let rows = read_report(&report).unwrap();
    assert_eq!(rows.len(), 8);
    for set in ["S_Test", "S_RNN"] {
        assert_eq!(rows.iter().filter(|r| r.eval_set == set).count(), 4);
    }
    let (same, diff) = rows.split_at(4);
    for r in same {
        let want = if r.metric == "NDCG5" { 1.0 } else { 0.0 };
        assert_eq!(r.value, Some(want), "{r:?}");
        assert_eq!(r.strategy, "wa");
        assert_eq!(r.wa_params, Some(4 * 4 * 3 + 8));
    }
    let wer: Vec<f64> = diff.iter().filter(|r| r.metric == "WER-D").map(|r| r.value.unwrap()).collect();
    assert!(wer.iter().all(|&x| x > 0.0), "{wer:?}");
}

#[test]
fn eval_prints_csv_and_dump_without_report() {
    let dir = tempfile::tempdir().unwrap();
    let two_state = format!("wa:{}", fixture("two_state.json").display());
    let dump = dir.path().join("dump.tsv");
    let out = wadistill(&["eval", "--oracle", &two_state, "--candidate", &two_state, "--eval-size", "3", "--dump", s(&dump)]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("problem,strategy,p,s,rank,metric,eval_set,value"));
    assert_eq!(text.lines().count(), 3);
    let lines = fs::read_to_string(&dump).unwrap();
    let first = lines.lines().next().unwrap();
    assert_eq!(first.split('\t').count(), 6);
    assert!(lines.lines().all(|l| l.ends_with("\t1")));
}

#[test]
fn sweep_saturates_at_true_rank_and_matches_distill() {
    let dir = tempfile::tempdir().unwrap();
    let two_state = format!("wa:{}", fixture("two_state.json").display());
    let report = dir.path().join("sweep.csv");
    let base = ["sweep", "--oracle", &two_state, "--p", "30", "--s", "30", "--rank", "1,2,4", "--seed-basis", "3", "--seed-eval", "4", "--eval-size", "200", "--report", s(&report)];
    ok(&wadistill(&base));
    let rows = read_report(&report).unwrap();
    assert!(rows.iter().all(|r| r.status == "ok"), "{rows:?}");
    assert!(rows.iter().all(|r| r.hankel_rank == Some(2)));
    let w: Vec<f64> = [1, 2, 4].iter().map(|&r| value(&rows, "WER-D", "S_RNN", r)).collect();
    let best = w.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((w[1] - best).abs() <= 1e-8, "{w:?}");
    assert!((w[2] - w[1]).abs() <= 1e-8, "{w:?}");
    assert!(w[1] <= 1e-12);
    assert!((value(&rows, "delta_WER-D", "S_RNN", 2)).abs() <= 1e-12);
    let best_row = rows.iter().find(|r| r.metric == "best_WER-D").unwrap();
    assert!(best_row.rank <= 2);

    // Independent distill at each rank with the same seeds gives the same metrics.
    for r in [1usize, 2, 4] {
        let wa_out = dir.path().join(format!("r{r}.json"));
        ok(&wadistill(&[
            "distill", "--oracle", &two_state, "--p", "30", "--s", "30", "--seed-basis", "3", "--rank", &r.to_string(), "--wa-out", s(&wa_out),
        ]));
        let cand = format!("wa:{}", wa_out.display());
        let out = wadistill(&["eval", "--oracle", &two_state, "--candidate", &cand, "--seed-eval", "4", "--eval-size", "200"]);
        ok(&out);
        let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
        let single: Vec<Row> = reader.deserialize().map(Result::unwrap).collect();
        for m in ["NDCG5", "WER-D"] {
            let a = value(&rows, m, "S_RNN", r);
            let b = single.iter().find(|x| x.metric == m).unwrap().value.unwrap();
            assert!((a - b).abs() <= 1e-12, "rank {r} {m}: {a} vs {b}");
        }
    }

    // Rerunning skips the finished configuration.
    ok(&wadistill(&base));
    assert_eq!(read_report(&report).unwrap().len(), rows.len());
}

#[test]
fn sweep_config_file_with_overrides_and_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    let report = dir.path().join("out.csv");
    fs::write(
        &cfg,
        format!(
            "problem = \"two_state\"\noracle = \"wa:{}\"\nsizes = [[12, 12], [20, 20]]\nranks = [1, 2]\nstrategies = [\"uniform\", \"oracle\"]\nmetrics = [\"wer-d\"]\neval-size = 30\nreport = \"{}\"\n",
            fixture("two_state.json").display(),
            report.display()
        ),
    )
    .unwrap();
    ok(&wadistill(&["sweep", "--config", s(&cfg), "--jobs", "3", "--seed-eval", "9"]));
    let rows = read_report(&report).unwrap();
    let configs: std::collections::HashSet<_> = rows.iter().map(|r| (r.strategy.clone(), r.p, r.s)).collect();
    assert_eq!(configs.len(), 4);
    assert!(rows.iter().all(|r| r.metric.ends_with("WER-D") && r.problem == "two_state"));
    // 2 ranks + best + delta per configuration.
    assert_eq!(rows.len(), 4 * 4);
}

#[test]
fn sweep_records_failed_configurations_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let two_state = format!("wa:{}", fixture("two_state.json").display());
    let report = dir.path().join("r.csv");
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "sizes = [[50, 50], [5, 5]]\nstrategies = [\"uniform\"]\nmax-len = 2\nranks = [1]\n").unwrap();
    ok(&wadistill(&["sweep", "--config", s(&cfg), "--oracle", &two_state, "--eval-size", "10", "--report", s(&report)]));
    let rows = read_report(&report).unwrap();
    let failed: Vec<&Row> = rows.iter().filter(|r| r.p == 50).collect();
    assert_eq!(failed.len(), 2);
    assert!(failed.iter().all(|r| r.status == "basis_error" && r.value.is_none() && r.rank == 0));
    assert!(rows.iter().any(|r| r.p == 5 && r.status == "ok"));
}

#[test]
fn spectrum_examples() {
    let dir = tempfile::tempdir().unwrap();
    let geo = dir.path().join("geo.json");
    fs::write(&geo, GEOMETRIC).unwrap();
    let rank_of = |oracle: &str, p: &str, extra: &[&str]| -> usize {
        let out_path = dir.path().join("spec.tsv");
        let mut args = vec!["spectrum", "--oracle", oracle, "--p", p, "--s", p, "--out", s(&out_path)];
        args.extend_from_slice(extra);
        ok(&wadistill(&args));
        read_spectrum(fs::read_to_string(&out_path).unwrap().as_bytes()).unwrap().hankel_rank
    };
    let geo_spec = format!("wa:{}", geo.display());
    assert_eq!(rank_of(&geo_spec, "8", &["--strategy", "uniform"]), 1);
    let pfa = dir.path().join("pfa5.json");
    ok(&wadistill(&["pfa", "gen", "--states", "5", "--alphabet", "3", "--seed", "2", "--out", s(&pfa)]));
    let pfa_spec = format!("wa:{}", pfa.display());
    assert!(rank_of(&pfa_spec, "64", &[]) <= 5);
    assert_eq!(rank_of(&pfa_spec, "64", &["--threshold-decades", "0"]), 1);
}

#[test]
fn manifests_replay_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let pfa = dir.path().join("pfa.json");
    ok(&wadistill(&["pfa", "gen", "--states", "3", "--alphabet", "2", "--seed", "8", "--out", s(&pfa)]));
    let wa_out = dir.path().join("d.json");
    let oracle = format!("wa:{}", pfa.display());
    let basis = dir.path().join("basis.txt");
    ok(&wadistill(&[
        "distill", "--oracle", &oracle, "--p", "40", "--s", "40", "--seed-basis", "17", "--noise", "0.01", "--noise-seed", "4", "--basis-out", s(&basis),
        "--wa-out", s(&wa_out),
    ]));
    let again = dir.path().join("again");
    ok(&wadistill(&["replay", "--manifest", s(&dir.path().join("d.json.manifest.json")), "--out-dir", s(&again)]));
    assert_eq!(fs::read(&wa_out).unwrap(), fs::read(again.join("d.json")).unwrap());
    assert_eq!(fs::read(dir.path().join("d.json.spectrum.tsv")).unwrap(), fs::read(again.join("d.json.spectrum.tsv")).unwrap());

    // An explicit basis file round-trips through the manifest as well.
    let from_file = dir.path().join("f.json");
    ok(&wadistill(&["distill", "--oracle", &oracle, "--basis-in", s(&basis), "--rank", "2", "--wa-out", s(&from_file)]));
    ok(&wadistill(&["replay", "--manifest", s(&dir.path().join("f.json.manifest.json")), "--out-dir", s(&again)]));
    assert_eq!(fs::read(&from_file).unwrap(), fs::read(again.join("f.json")).unwrap());

    // Changing the oracle breaks replay.
    ok(&wadistill(&["pfa", "gen", "--states", "3", "--alphabet", "2", "--seed", "9", "--out", s(&pfa)]));
    let out = wadistill(&["replay", "--manifest", s(&dir.path().join("d.json.manifest.json")), "--out-dir", s(&again)]);
    assert!(!out.status.success());
}

#[test]
fn ngram_train_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let two_state = format!("wa:{}", fixture("two_state.json").display());
    let data = dir.path().join("train.txt");
    fs::write(&data, "2 2\n3 0 0 1\n2 0 1\n").unwrap();
    let model = dir.path().join("bigram.txt");
    ok(&wadistill(&["ngram", "train", "--data", s(&data), "--n", "2", "--out", s(&model)]));
    assert!(fs::read_to_string(&model).unwrap().starts_with("2 2\n"));

    let sampled = dir.path().join("sampled.txt");
    ok(&wadistill(&["ngram", "train", "--oracle", &two_state, "--n", "3", "--budget", "2000", "--seed", "1", "--out", s(&sampled)]));
    let report = dir.path().join("r.csv");
    ok(&wadistill(&["ngram", "eval", "--oracle", &two_state, "--model", s(&sampled), "--eval-size", "50", "--report", s(&report)]));
    let rows = read_report(&report).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.strategy == "ngram" && r.rank == 3 && r.value.is_some()));
    let ngram_spec = format!("ngram:{}", sampled.display());
    ok(&wadistill(&["eval", "--oracle", &ngram_spec, "--candidate", &ngram_spec, "--eval-size", "20"]));

    assert_eq!(code(&wadistill(&["ngram", "train", "--data", s(&data), "--n", "1", "--out", s(&model)])), exit::USAGE);
}

#[test]
fn pfa_gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        ok(&wadistill(&["pfa", "gen", "--states", "6", "--alphabet", "4", "--seed", "21", "--out", s(p)]));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let wa = load_wa(&a);
    assert!(wa.is_stochastic());
    assert_eq!((wa.rank(), wa.alphabet().len()), (6, 4));
}

#[test]
fn help_and_unknown_flags() {
    let out = wadistill(&["--help"]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("distill"));
    assert_eq!(code(&wadistill(&["distill", "--bogus"])), exit::USAGE);
}
