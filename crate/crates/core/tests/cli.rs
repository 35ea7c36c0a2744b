use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mtmb::scores::scores_from_tsv;

fn mtmb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtmb"))
        .args(args)
        .env_remove("MTMB_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mtmb(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Work {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Work {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        ok(&["demo", "--out-dir", p(&root.join("demo"))]);
        Work { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn corpus(&self) -> PathBuf {
        self.root.join("demo").join("corpus.tsv")
    }
}

#[test]
fn help_and_usage_errors() {
    let help = mtmb(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    for sub in ["ingest", "embed-toy", "idf", "score", "train-head", "combine", "sweep-alpha", "evaluate", "demo"] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
    assert_eq!(mtmb(&["nonsense"]).status.code(), Some(2));
    assert_eq!(mtmb(&["score", "--metric", "bleu"]).status.code(), Some(2));
}

#[test]
fn domain_errors_exit_one_with_category() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, format!("{}\nde-en\t1\tA\tx\ty\tstd1\tz\t130\n", mtmb::corpus::TSV_HEADER)).unwrap();
    let out = mtmb(&["ingest", "--corpus", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[range]"));

    let out = mtmb(&["ingest", "--corpus", p(&dir.path().join("absent.tsv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[argument]"));

    // outputs are checked before any work happens
    let target = dir.path().join("no-such-dir").join("store.mtes");
    let out = mtmb(&["embed-toy", "--corpus", p(&bad), "--out", p(&target)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn full_pipeline_through_the_binary() {
    let w = Work::new();
    let corpus = w.corpus();
    let (store, idf) = (w.path("store.mtes"), w.path("idf.tsv"));

    let summary = ok(&["ingest", "--corpus", p(&corpus), "--out", p(&w.path("norm.jsonl")), "--sentences", p(&w.path("s.txt"))]);
    assert!(summary.starts_with("120 segments (120 rated)"));
    ok(&["embed-toy", "--dim", "16", "--in", p(&w.path("s.txt")), "--out", p(&store)]);
    ok(&["idf", "--refs", p(&corpus), "--out", p(&idf)]);

    let score = |metric: &str, out: &Path, extra: &[&str]| {
        let mut args = vec!["score", "--metric", metric, "--store", p(&store), "--idf", p(&idf), "--corpus", p(&corpus), "--out", p(out)];
        args.extend_from_slice(extra);
        ok(&args);
    };
    let (y1, y1b) = (w.path("y1.tsv"), w.path("y1b.tsv"));
    score("yisi1", &y1, &["--refs", "std1,para"]);
    score("yisi1", &y1b, &["--refs", "std1,para"]);
    assert_eq!(std::fs::read(&y1).unwrap(), std::fs::read(&y1b).unwrap());
    let sets = scores_from_tsv(&std::fs::read_to_string(&y1).unwrap()).unwrap();
    assert_eq!(sets.iter().map(|s| s.metric.as_str()).collect::<Vec<_>>(), ["yisi1@std1", "yisi1@para"]);
    assert!(sets.iter().all(|s| s.len() == 120));

    score("yisi2", &w.path("y2.tsv"), &[]);
    score("yisi-comb", &w.path("yc.tsv"), &["--alpha", "0.7"]);

    let head = w.path("head.mthead");
    ok(&[
        "train-head", "--corpus", p(&corpus), "--store", p(&store), "--grid", "0.01,0.03", "--eval-every", "50",
        "--max-steps", "300", "--refs", "std1,para", "--out", p(&head),
    ]);
    assert!(std::fs::read_to_string(&head).unwrap().starts_with("MTHEAD v1\n"));
    score("head", &w.path("h.tsv"), &["--head", p(&head), "--refs", "std1,para"]);

    let combined = w.path("comb.tsv");
    let inputs = [w.path("y1.tsv"), w.path("y2.tsv"), w.path("h.tsv")].map(|x| p(&x).to_owned()).join(",");
    let msg = ok(&["combine", "--mode", "all-comb", "--inputs", &inputs, "--out", p(&combined)]);
    assert!(msg.contains("over 5 columns"));
    assert_eq!(scores_from_tsv(&std::fs::read_to_string(&combined).unwrap()).unwrap()[0].metric, "all-comb");
    ok(&["combine", "--inputs", &inputs, "--zscore", "--out", p(&w.path("combz.tsv"))]);

    let report = w.path("report.csv");
    let all = [y1.clone(), w.path("y2.tsv"), w.path("yc.tsv"), w.path("h.tsv"), combined.clone()].map(|x| p(&x).to_owned()).join(",");
    let table = ok(&["evaluate", "--corpus", p(&corpus), "--scores", &all, "--out", p(&report), "--table", p(&w.path("report.txt"))]);
    assert!(table.contains("Segment-level DARR") && table.contains("System-level Pearson"));
    let csv = std::fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("lang_pair,metric,seg_darr,sys_pearson,pair_count,system_count\n"));
    for m in ["yisi1@std1", "yisi2@src", "yisi-comb", "head@para", "all-comb"] {
        assert!(csv.contains(&format!("de-en,{m},")), "report lacks {m}");
    }

    let sweep = w.path("sweep.csv");
    let msg = ok(&["sweep-alpha", "--corpus", p(&corpus), "--store", p(&store), "--refs", "std1", "--grid", "0:1:0.1", "--level", "system", "--out", p(&sweep)]);
    assert!(msg.starts_with("best alpha"));
    let rows: Vec<String> = std::fs::read_to_string(&sweep).unwrap().lines().map(str::to_owned).collect();
    assert_eq!(rows[0], "alpha,correlation");
    assert_eq!(rows.len(), 12);
}

#[test]
fn seed_flag_and_environment_agree() {
    let dir = tempfile::tempdir().unwrap();
    let sents = dir.path().join("s.txt");
    std::fs::write(&sents, "the cat sat\na dog\n").unwrap();
    let run = |out: &str, seed_flag: Option<&str>, env: Option<&str>| {
        let target = dir.path().join(out);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_mtmb"));
        cmd.env_remove("MTMB_SEED");
        if let Some(e) = env {
            cmd.env("MTMB_SEED", e);
        }
        cmd.args(["embed-toy", "--dim", "8", "--in", p(&sents), "--out", p(&target)]);
        if let Some(s) = seed_flag {
            cmd.args(["--seed", s]);
        }
        assert!(cmd.status().unwrap().success());
        std::fs::read(target).unwrap()
    };
    let default = run("a.mtes", None, None);
    assert_eq!(run("b.mtes", None, None), default);
    let env7 = run("c.mtes", None, Some("7"));
    assert_ne!(env7, default);
    assert_eq!(run("d.mtes", Some("7"), None), env7);
}

#[test]
fn demo_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = ok(&["demo", "--out-dir", p(&a)]);
    assert!(out.contains("oracle"));
    ok(&["demo", "--out-dir", p(&b)]);
    for f in ["report.csv", "scores.tsv", "store.mtes", "head.mthead", "combined.tsv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = std::fs::read_to_string(a.join("report.csv")).unwrap();
    assert!(csv.contains("de-en,oracle,1,1,"));
}
