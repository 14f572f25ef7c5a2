use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spinobs_cli::{run_experiment, ExperimentConfig, Origin};

const K2: &str = "2 1\n0 1\n";
const K33: &str = "6 9\n0 3\n0 4\n0 5\n1 3\n1 4\n1 5\n2 3\n2 4\n2 5\n";

fn spinobs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinobs"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no '{key}' in:\n{text}"))
}

fn workdir() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("k2.el"), K2).unwrap();
    fs::write(d.path().join("k33.el"), K33).unwrap();
    d
}

/// 17 significant digits in exponent form, e.g. `5.0000000000000000e-1`.
fn is_real17(s: &str) -> bool {
    let s = s.strip_prefix('-').unwrap_or(s);
    let Some((mant, exp)) = s.split_once('e') else {
        return false;
    };
    let b = mant.as_bytes();
    mant.len() == 18 && b[0].is_ascii_digit() && b[1] == b'.' && b[2..].iter().all(u8::is_ascii_digit) && exp.parse::<i32>().is_ok()
}

#[test]
fn critical_potts_threshold() {
    let d = workdir();
    let o = spinobs(d.path(), &["critical", "potts", "--q", "3", "--delta", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let beta_c: f64 = value(&text, "beta_c").parse().unwrap();
    assert!((beta_c - 1.0 / (2f64.powf(1.0 / 3.0) - 1.0)).abs() < 1e-12);
    assert!(value(&text, "beta_c").starts_with("3.8473"));

    let o = spinobs(d.path(), &["critical", "potts", "--q", "3", "--delta", "3", "--beta", "4"]);
    assert_eq!(value(&stdout(&o), "port_bias_exact"), "2/3");

    let o = spinobs(d.path(), &["critical", "hardcore", "--delta", "6", "--lambda", "1"]);
    assert_eq!(value(&stdout(&o), "region"), "non-uniqueness");
    let o = spinobs(d.path(), &["critical", "hardcore", "--delta", "5", "--lambda", "1"]);
    assert_eq!(value(&stdout(&o), "region"), "uniqueness");
}

#[test]
fn exact_susceptibility_and_csv_schema() {
    let d = workdir();
    let o = spinobs(
        d.path(),
        &["exact", "--model", "potts", "--q", "3", "--beta", "2", "--graph", "k2.el", "--observable", "susceptibility"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(value(&text, "expectation"), "1/2");
    assert_eq!(value(&text, "z"), "12");

    let o = spinobs(d.path(), &["exact", "--model", "hardcore", "--lambda", "1", "--graph", "k2.el", "--format", "csv"]);
    let csv = stdout(&o);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("quantity,value,value_real"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][..2], ["z", "3"]);
    assert_eq!(rows[1][..2], ["expectation", "2/3"]);
    assert!(rows.iter().all(|r| is_real17(r[2])), "{csv}");
}

#[test]
fn malformed_rational_reports_location() {
    let d = workdir();
    let o = spinobs(d.path(), &["exact", "--model", "potts", "--q", "3", "--beta", "2//3", "--graph", "k2.el"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("argument --beta") && err.contains("column 3"), "{err}");

    fs::write(d.path().join("bad.cfg"), "command = exact\nmodel = potts\nq = 3\n\nbeta = 2//3\ngraph = k2.el\n").unwrap();
    let o = spinobs(d.path(), &["run", "bad.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 5: key 'beta': malformed rational '2//3' at column 3"), "{}", stderr(&o));
}

#[test]
fn config_validation() {
    let d = workdir();
    let cases = [
        ("command = exact\nmodel = potts\nq = 3\nbeta = 2\ngraph = k2.el\ncolour = red\n", "line 6: unknown key 'colour'"),
        ("command = exact\nmodel = potts\nq = 3\nq = 4\n", "line 4: duplicate key 'q'"),
        ("command = exact\nmodel = potts\nq = 3\nbeta = 2\ngraph = missing.el\n", "line 5: key 'graph': file 'missing.el' does not exist"),
        ("command = exact\nmodel = potts\nq = 3\nbeta = 2\ngamma = 1\ngraph = k2.el\n", "line 5: key 'gamma' does not apply"),
        ("command = exact\njust text\n", "line 2: expected 'key = value'"),
        ("command = explode\n", "line 1: key 'command': expected one of"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let name = format!("c{i}.cfg");
        fs::write(d.path().join(&name), text).unwrap();
        let o = spinobs(d.path(), &["run", &name]);
        assert_eq!(o.status.code(), Some(2), "case {i}");
        assert!(stderr(&o).contains(needle), "case {i}: {}", stderr(&o));
    }
}

#[test]
fn exit_codes_for_budget_and_numerical_failures() {
    let d = workdir();
    let o = spinobs(
        d.path(),
        &["interpolate", "--model", "potts", "--q", "3", "--graph", "k2.el", "--target", "2", "--eps", "1/1000", "--grid-mode", "paper"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = spinobs(d.path(), &["phase", "sample", "--n", "4", "--t", "2", "--delta", "3", "-o", "x.el", "--attempts", "0"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!d.path().join("x.el").exists());
    let o = spinobs(
        d.path(),
        &["gadget", "pair", "--model", "potts", "--q", "3", "--beta", "2", "--r", "1/100", "--gap", "3/2", "--max-vertices", "10"],
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let o = spinobs(d.path(), &["reduce", "potts", "--graph", "k33.el", "--target", "1", "--base", "q=3,beta=4"]);
    assert_eq!(o.status.code(), Some(2));
}

fn files(dir: &Path, names: &[&str]) -> Vec<(PathBuf, Vec<u8>)> {
    names.iter().map(|n| (PathBuf::from(n), fs::read(dir.join(n)).unwrap())).collect()
}

/// Runs `args` (which must write `outputs` plus `run.cfg`), deletes the
/// outputs, replays and compares every artifact byte for byte.
fn assert_replay(args: &[&str], outputs: &[&str]) {
    let d = workdir();
    let mut full: Vec<&str> = args.to_vec();
    full.extend(["--replay", "run.cfg"]);
    let first = spinobs(d.path(), &full);
    assert!(first.status.success(), "{}", stderr(&first));
    let mut names: Vec<&str> = outputs.to_vec();
    names.push("run.cfg");
    let before = files(d.path(), &names);
    for n in &names {
        fs::remove_file(d.path().join(n)).unwrap();
    }
    fs::write(d.path().join("replay.cfg"), &before.last().unwrap().1).unwrap();
    let second = spinobs(d.path(), &["run", "replay.cfg"]);
    assert!(second.status.success(), "{}", stderr(&second));
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(before, files(d.path(), &names));
}

#[test]
fn replay_reproduces_reduce() {
    assert_replay(
        &["reduce", "potts", "--graph", "k33.el", "--target", "21/20", "--base", "q=3,beta=4", "--plan-out", "plan.txt", "--csv", "out.csv"],
        &["plan.txt", "out.csv"],
    );
}

#[test]
fn replay_reproduces_monte_carlo_runs() {
    assert_replay(
        &[
            "interpolate", "--model", "hardcore", "--graph", "k33.el", "--target", "3", "--grid", "20", "--oracle",
            "mc:samples=500,burn_in=50,z=4", "--seed", "9", "--csv", "int.csv", "--summary", "sum.txt",
        ],
        &["int.csv", "sum.txt"],
    );
    assert_replay(
        &["sample", "--model", "potts", "--q", "3", "--beta", "2", "--graph", "k33.el", "--steps", "3000", "--seed", "4", "--csv", "s.csv"],
        &["s.csv"],
    );
    assert_replay(&["phase", "sample", "--n", "6", "--t", "3", "--delta", "3", "--seed", "2", "-o", "ph.el"], &["ph.el"]);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let d = workdir();
    let run = |threads: &str| {
        stdout(&spinobs(
            d.path(),
            &[
                "interpolate", "--model", "hardcore", "--graph", "k33.el", "--target", "3", "--grid", "12", "--oracle",
                "mc:samples=400,chains=2", "--threads", threads,
            ],
        ))
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn interpolation_csv_and_bracket() {
    let d = workdir();
    let o = spinobs(
        d.path(),
        &["interpolate", "--model", "potts", "--q", "3", "--graph", "k2.el", "--target", "2", "--eps", "1/1000", "--csv", "int.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(value(&text, "contains"), "true");
    let (lo, hi): (f64, f64) = (value(&text, "lower").parse().unwrap(), value(&text, "upper").parse().unwrap());
    assert!(lo <= 12f64.ln() && 12f64.ln() <= hi && hi - lo <= 1e-3);
    let m: usize = value(&text, "grid").parse().unwrap();
    let csv = fs::read_to_string(d.path().join("int.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("i,x,x_real,reading,reading_lower,reading_upper,lower_partial,upper_partial")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), m + 1);
    assert_eq!(rows[0][1], "1");
    assert_eq!(rows[m][1], "2");
    assert_eq!(rows[m][3], "1/2");
    assert!(rows.iter().all(|r| r[4..].iter().all(|x| is_real17(x))));
}

#[test]
fn phase_assess_reads_sampled_header() {
    let d = workdir();
    let o = spinobs(d.path(), &["phase", "sample", "--n", "4", "--t", "2", "--delta", "3", "--seed", "3", "-o", "ph.el"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = spinobs(d.path(), &["phase", "assess", "--graph", "ph.el", "--model", "potts", "--q", "3", "--beta", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(value(&text, "phases"), "3");
    assert_eq!(value(&text, "balance_exact"), "0");
}

#[test]
fn gadget_commands() {
    let d = workdir();
    fs::write(d.path().join("g.rcp"), "p = path 3\ncomposeE(p, edge)\n").unwrap();
    let o = spinobs(d.path(), &["gadget", "stats", "--model", "potts", "--q", "3", "--beta", "2", "--recipe", "g.rcp", "--graph-out", "g.el"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(value(&text, "recipe"), "composeE(path 3,edge)");
    assert_eq!(value(&text, "vertices"), "6");
    assert!(fs::read_to_string(d.path().join("g.el")).unwrap().starts_with("# ports 0 3\n6 6\n"));

    let o = spinobs(d.path(), &["gadget", "build-path", "--model", "potts", "--q", "3", "--beta", "2", "--r", "1/100"]);
    let text = stdout(&o);
    assert_eq!(value(&text, "recipe"), "path 5");
    assert_eq!(value(&text, "value"), "342/341");
}

#[test]
fn library_api_runs_without_writing() {
    let d = workdir();
    let graph = d.path().join("k2.el");
    let text = format!(
        "command = exact\nmodel = potts\nq = 3\nbeta = 2\ngraph = {}\ncsv = {}\n",
        graph.display(),
        d.path().join("never.csv").display()
    );
    let cfg = ExperimentConfig::parse(&text).unwrap();
    let art = run_experiment(&cfg).unwrap();
    assert!(art.stdout.contains("expectation=1/2"));
    assert_eq!(art.files.len(), 1);
    assert!(!d.path().join("never.csv").exists());
    let e = cfg.rational("model").unwrap_err();
    assert_eq!(e.origin, Origin::Line(2));
}
