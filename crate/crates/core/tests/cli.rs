use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gaussmin"))
}

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn config(&self, name: &str, json: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::write(&p, json).unwrap();
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn exec(&self, cmd: &str, config: &Path, out: &str, extra: &[&str]) -> Output {
        bin()
            .arg(cmd)
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(self.out(out))
            .args(extra)
            .output()
            .unwrap()
    }
}

/// Data rows of a CSV written by the CLI, header comments stripped.
fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = csv_rows(path);
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const OU_TAIL: &str = r#"{"kernel":{"type":"ou"},"interval":[0,1],"seed":11,
    "tail":{"k":5,"n":100000,"u":[0,0.5,1,1.5,2]}}"#;

#[test]
fn malformed_json_exits_3() {
    let r = Run::new();
    let c = r.config("bad.json", "{\"kernel\": ");
    let o = r.exec("solve", &c, "o", &[]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("malformed config"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_3() {
    let r = Run::new();
    let o = bin().arg("solve").output().unwrap();
    assert_eq!(code(&o), 3, "missing --config");
    let o = bin().arg("frobnicate").output().unwrap();
    assert_eq!(code(&o), 3, "unknown subcommand");
    let c = r.config("c.json", r#"{"kernel":{"type":"ou"},"interval":[0,1],"tail":{"nn":5}}"#);
    assert_eq!(code(&r.exec("tail", &c, "o", &[])), 3, "unknown field");
    let c = r.config("c2.json", r#"{"kernel":{"type":"ou"}}"#);
    assert_eq!(code(&r.exec("solve", &c, "o", &[])), 3, "missing interval");
    let c = r.config("c3.json", r#"{"kernel":{"type":"gram","matrix":[[1,2],[2,1]]}}"#);
    assert_eq!(code(&r.exec("solve", &c, "o", &[])), 3, "non-PSD Gram");
    let c = r.config("c4.json", OU_TAIL);
    assert_eq!(code(&r.exec("tail", &c, "o", &["--threads", "0"])), 3);
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);
}

#[test]
fn explicit_scalar_gram() {
    let r = Run::new();
    let c = r.config("g.json", r#"{"kernel":{"type":"gram","matrix":[[2.5]]}}"#);
    let o = r.exec("solve", &c, "o", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(column(&r.out("o").join("trace.csv"), "sigma_star_sq"), vec![2.5]);
    let j = json(&r.out("o").join("solution.json"));
    assert_eq!(j["result"]["solution"]["sigma_star_sq"], 2.5);
    assert_eq!(j["result"]["certificate"]["passed"], true);
}

#[test]
fn ou_refinement_trace_is_nonincreasing() {
    let r = Run::new();
    let c = r.config(
        "s.json",
        r#"{"kernel":{"type":"ou"},"interval":[0,1],"solve":{"k_min":2,"k_max":8}}"#,
    );
    let o = r.exec("solve", &c, "o", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = column(&r.out("o").join("trace.csv"), "sigma_star_sq");
    assert_eq!(s.len(), 7);
    assert!(s.windows(2).all(|w| w[1] <= w[0]), "{s:?}");
    assert!((s[6] - 2.0 / 3.0).abs() < 5e-3);
    let w = column(&r.out("o").join("weights.csv"), "weight");
    assert_eq!(w.len(), 257);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn analytic_examples() {
    let r = Run::new();
    let c = r.config(
        "a.json",
        r#"{"kernel":{"type":"modulated_bm","g":{"power":0.5}},"interval":[1,4]}"#,
    );
    let o = r.exec("analytic", &c, "a", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = &json(&r.out("a").join("analytic.json"))["result"];
    assert_eq!(j["case"], "A");
    // 1 / (1 + ln(4)/4)
    let exact = 1.0 / (1.0 + 4f64.ln() / 4.0);
    assert!((j["sigma_star_sq"].as_f64().unwrap() - exact).abs() < 1e-7);

    let c = r.config(
        "b.json",
        r#"{"kernel":{"type":"modulated_bm","g":{"shifted_root":1.0}},"interval":[1.5,4]}"#,
    );
    let o = r.exec("analytic", &c, "b", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = &json(&r.out("b").join("analytic.json"))["result"];
    assert_eq!(j["case"], "B");
    assert!((j["a0"].as_f64().unwrap() - 2.0).abs() < 1e-10);

    let c = r.config(
        "c.json",
        r#"{"kernel":{"type":"ou"},"interval":[0,2],"analytic":{"cross_check":true,"k":6}}"#,
    );
    let o = r.exec("analytic", &c, "c", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = &json(&r.out("c").join("analytic.json"))["result"];
    assert!((j["sigma_star_sq"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    let atoms = j["measure"]["atoms"].as_array().unwrap();
    assert_eq!(atoms.len(), 2);
    for a in atoms {
        assert!((a[1].as_f64().unwrap() - 0.25).abs() < 1e-12);
    }
    assert!(j["cross_check"]["tv"].as_f64().unwrap() < 0.05);
}

#[test]
fn analytic_hypothesis_violation_names_the_check() {
    let r = Run::new();
    // convex g violates concavity
    let c = r.config(
        "h.json",
        r#"{"kernel":{"type":"modulated_bm","g":{"tabulated":{"x":[1,2,3],"g":[1,4,9],"dg":[2,4,6],"d2g":[2,2,2]}}},
            "interval":[1,3]}"#,
    );
    let o = r.exec("analytic", &c, "h", &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("concave"), "{}", stderr(&o));

    let c = r.config("p.json", r#"{"kernel":{"type":"powerexp","alpha":0.5},"interval":[0,1]}"#);
    assert_eq!(code(&r.exec("analytic", &c, "p", &[])), 3);
}

#[test]
fn tail_sweep_both_methods_agree() {
    let r = Run::new();
    let c = r.config("t.json", OU_TAIL);
    let o = r.exec("tail", &c, "t", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["tail_crude.csv", "tail_is.csv"] {
        let p = r.out("t").join(f);
        assert_eq!(column(&p, "u"), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let agree = column(&p, "agreement");
        assert!(agree.iter().all(|&a| a <= 3.0), "{f}: {agree:?}");
    }
    let text = fs::read_to_string(r.out("t").join("tail_is.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# gaussmin tail"));
    assert_eq!(lines.next(), Some("# seed: 11"));
    let cfg: Value = serde_json::from_str(lines.next().unwrap().trim_start_matches("# config: ")).unwrap();
    assert_eq!(cfg["tail"]["n"], 100000);
    assert_eq!(cfg["tail"]["batch_size"], 4096);
}

#[test]
fn tail_zero_crude_hits_exit_2_with_outputs() {
    let r = Run::new();
    let c = r.config(
        "t.json",
        r#"{"kernel":{"type":"ou"},"interval":[0,1],"seed":3,"tail":{"k":5,"n":10000,"u":[1,4]}}"#,
    );
    let o = r.exec("tail", &c, "t", &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("zero hits"), "{}", stderr(&o));
    let is = column(&r.out("t").join("tail_is.csv"), "p_hat");
    assert!(is[1] > 0.0);
    assert_eq!(column(&r.out("t").join("tail_crude.csv"), "hits")[1], 0.0);
}

#[test]
fn argmin_low_ess_exit_2() {
    let r = Run::new();
    let c = r.config(
        "a.json",
        r#"{"kernel":{"type":"ou"},"interval":[0,1],"argmin":{"k":5,"n":1000,"u":[3]}}"#,
    );
    let o = r.exec("argmin", &c, "a", &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("effective sample size"), "{}", stderr(&o));
    assert!(r.out("a").join("argmin.csv").exists());
    assert!(r.out("a").join("argmin.json").exists());
}

#[test]
fn argmin_with_oracle_and_mx() {
    let r = Run::new();
    let c = r.config(
        "a.json",
        r#"{"kernel":{"type":"ou"},"interval":[0,1],"seed":2,
            "argmin":{"k":2,"n":200000,"u":[1],"x":[1.0,0.5],"direct":true}}"#,
    );
    let o = r.exec("argmin", &c, "a", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let z = column(&r.out("a").join("argmin_compare.csv"), "max_bin_z");
    assert!(z[0] < 4.0, "{z:?}");
    let (_, rows) = csv_rows(&r.out("a").join("mx.csv"));
    assert_eq!(rows.len(), 10);
}

#[test]
fn smallball_decreasing_in_eps() {
    let r = Run::new();
    let c = r.config(
        "s.json",
        r#"{"kernel":{"type":"ou"},"interval":[0,1],"smallball":{"k":5,"n":200000,"eps":[0.5,0.4,0.3]}}"#,
    );
    let o = r.exec("smallball", &c, "s", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let p = column(&r.out("s").join("smallball.csv"), "p_hat");
    assert!(p[0] > p[1] && p[1] > p[2], "{p:?}");
}

#[test]
fn diagnose_writes_fit_and_plot() {
    let r = Run::new();
    let c = r.config(
        "d.json",
        r#"{"kernel":{"type":"modulated_bm","g":{"power":0.5}},"interval":[1,2],
            "diagnose":{"k":4,"n":20000,"u":[2,3,4,5]}}"#,
    );
    let o = r.exec("diagnose", &c, "d", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = &json(&r.out("d").join("diagnose.json"))["result"];
    assert!(j["fit"]["exponent"].is_f64());
    assert!(j["fit"]["half_width"].is_f64());
    assert!((j["reference_exponent"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    let svg = fs::read_to_string(r.out("d").join("diagnose.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<!-- gaussmin diagnose -->"));
    assert_eq!(svg.matches("<circle").count(), 4);
}

#[test]
fn csv_outputs_identical_across_threads_and_reruns() {
    let r = Run::new();
    let c = r.config(
        "t.json",
        r#"{"kernel":{"type":"ou"},"interval":[0,1],"seed":99,
            "tail":{"k":5,"n":50000,"batch_size":1000,"u":[0,1,2]},
            "argmin":{"k":3,"n":50000,"u":[1,2]}}"#,
    );
    for (out, threads) in [("t1", "1"), ("t8", "8"), ("t8b", "8")] {
        for cmd in ["tail", "argmin"] {
            let o = r.exec(cmd, &c, out, &["--threads", threads]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
        }
    }
    for f in ["tail_crude.csv", "tail_is.csv", "tail.json", "argmin.csv", "argmin_summary.csv"] {
        let a = fs::read(r.out("t1").join(f)).unwrap();
        assert_eq!(a, fs::read(r.out("t8").join(f)).unwrap(), "{f} differs across threads");
        assert_eq!(a, fs::read(r.out("t8b").join(f)).unwrap(), "{f} differs across reruns");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let r = Run::new();
    let c = r.config("t.json", OU_TAIL);
    assert_eq!(code(&r.exec("tail", &c, "a", &["--seed", "7"])), 0);
    assert_eq!(code(&r.exec("tail", &c, "b", &[])), 0);
    let a = fs::read_to_string(r.out("a").join("tail_crude.csv")).unwrap();
    assert!(a.contains("\n# seed: 7\n"));
    assert!(a.contains("\"seed\":7"));
    let b = fs::read_to_string(r.out("b").join("tail_crude.csv")).unwrap();
    assert_ne!(column(&r.out("a").join("tail_crude.csv"), "hits"), column(&r.out("b").join("tail_crude.csv"), "hits"));
    assert!(b.contains("\n# seed: 11\n"));
}

#[test]
fn path_dump_is_capped() {
    let r = Run::new();
    let c = r.config(
        "t.json",
        r#"{"kernel":{"type":"ou"},"interval":[0,1],"tail":{"k":2,"n":20000,"u":[0],"dump_paths":50000}}"#,
    );
    let o = r.exec("tail", &c, "t", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&r.out("t").join("paths.csv"));
    assert_eq!(header.len(), 5);
    assert_eq!(rows.len(), 10_000);
}

#[test]
fn empty_report_is_header_only() {
    let r = Run::new();
    let c = r.config("r.json", r#"{"studies":[]}"#);
    let o = r.exec("report", &c, "r", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let md = fs::read_to_string(r.out("r").join("report.md")).unwrap();
    assert!(md.starts_with("# "));
    assert!(!md.contains("## "));
    assert!(!r.out("r").join("studies").exists());
}

const SMALL_STUDIES: &str = r#"{"seed":4,"studies":[
    {"name":"ou","kernel":{"type":"ou"},"interval":[0,1],
     "solve":{"k_min":2,"k_max":5},
     "analytic":{"cross_check":true,"k":5},
     "tail":{"k":3,"n":20000,"u":[0,1]},
     "diagnose":{"k":3,"n":20000,"u":[2,3,4]},
     "argmin":{"k":3,"n":20000,"u":[1]}},
    {"name":"broken","kernel":{"type":"powerexp","alpha":0.5},"interval":[0,1],
     "solve":{"k_min":2,"k_max":3},"analytic":{}},
    {"name":"gram","kernel":{"type":"gram","matrix":[[1,0.5],[0.5,1]]},
     "tail":{"n":20000,"u":[0]}}
]}"#;

#[test]
fn report_marks_failed_studies_and_continues() {
    let r = Run::new();
    let c = r.config("r.json", SMALL_STUDIES);
    let o = r.exec("report", &c, "r", &[]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let md = fs::read_to_string(r.out("r").join("report.md")).unwrap();
    assert!(md.contains("| ou | ok |"));
    assert!(md.contains("| broken | FAILED |"));
    assert!(md.contains("| gram | ok |"));
    assert!(md.contains("**FAILED**: invalid parameter: closed forms exist only"));
    assert!(md.contains("![diagnose](studies/ou/diagnose.svg)"));
    assert!(r.out("r").join("studies/gram/tail_is.csv").exists());
    assert!(r.out("r").join("studies/broken/trace.csv").exists());
}

#[test]
fn report_is_deterministic_and_concurrency_neutral() {
    let r = Run::new();
    let c = r.config("r.json", SMALL_STUDIES);
    let concurrent = SMALL_STUDIES.replacen("{\"seed\":4,", "{\"seed\":4,\"concurrent\":true,", 1);
    let cc = r.config("rc.json", &concurrent);
    r.exec("report", &c, "a", &[]);
    r.exec("report", &c, "b", &["--threads", "3"]);
    r.exec("report", &cc, "c", &[]);
    let files = [
        "studies/ou/trace.csv",
        "studies/ou/tail_crude.csv",
        "studies/ou/tail_is.csv",
        "studies/ou/diagnose.csv",
        "studies/ou/argmin.csv",
        "studies/gram/tail_is.csv",
    ];
    for f in files {
        let a = fs::read(r.out("a").join(f)).unwrap();
        assert_eq!(a, fs::read(r.out("b").join(f)).unwrap(), "{f}");
        assert_eq!(a, fs::read(r.out("c").join(f)).unwrap(), "{f}");
    }
    let ma = fs::read_to_string(r.out("a").join("report.md")).unwrap();
    let mb = fs::read_to_string(r.out("b").join("report.md")).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn paper_reproduction_preset_populates_every_table() {
    let r = Run::new();
    let c = r.config("p.json", r#"{"preset":"paper_reproduction","seed":1}"#);
    let o = r.exec("report", &c, "p", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let md = fs::read_to_string(r.out("p").join("report.md")).unwrap();
    for study in ["ou", "modulated_bm", "powerexp"] {
        assert!(md.contains(&format!("| {study} | ok |")), "{study}");
        for f in ["trace.csv", "tail_crude.csv", "tail_is.csv", "diagnose.csv", "diagnose.svg", "argmin.csv"] {
            assert!(r.out("p").join("studies").join(study).join(f).exists(), "{study}/{f}");
        }
    }
    assert_eq!(md.matches("Refinement trace").count(), 3);
    assert_eq!(md.matches("Closed form").count(), 2);
    assert_eq!(md.matches("Tail sweep").count(), 3);
    assert_eq!(md.matches("Fitted exponent").count(), 3);
    assert_eq!(md.matches("Argmin law given min > u").count(), 3);
    assert!(!md.contains("FAILED"));
}
