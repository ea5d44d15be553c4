use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TRUTH: &str = "# readpp-params v1
[model]
kind = saccade
variant = hawkes
mean_fn = affine
link = softplus
columns = intercept,reader:r1,reader:r2
omega = 0.0,0.0,1920.0,1080.0
[values]
base_rate = 5e-7
spatial_var = 900.0
alpha[intercept] = 0.0
alpha[reader:r1] = 12.0
alpha[reader:r2] = 15.0
beta[intercept] = 0.0
beta[reader:r1] = 15.0
beta[reader:r2] = 18.0
A[x,x] = 1.0
A[x,y] = 0.0
A[y,x] = 0.0
A[y,y] = 1.0
b[x] = 130.0
b[y] = 0.0
";

fn readpp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_readpp"))
        .current_dir(dir)
        .args(args)
        .env_remove("READPP_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = readpp(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("truth.txt"), TRUTH).unwrap();
    dir
}

fn simulate(dir: &Path, out: &str, seed: &str) -> PathBuf {
    ok(
        dir,
        &["simulate", "-p", "truth.txt", "--horizon", "20", "--seed", seed, "--replicates", "8", "-o", out],
    );
    dir.join(out)
}

fn config(dir: &Path, name: &str, variant: &str) {
    let text = format!(
        r#"seed = 11
[data]
scanpaths = "sim.csv"
omega = [0.0, 0.0, 1920.0, 1080.0]
[design]
reader_encoding = true
[model]
kind = "saccade"
variant = "{variant}"
mean_fn = "affine"
[train]
max_epochs = 15
patience = 5
split = [0.5, 0.25, 0.25]
[eval]
bootstrap_replicates = 200
"#
    );
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn simulate_is_reproducible() {
    let dir = workspace();
    let a = fs::read(simulate(dir.path(), "a.csv", "7")).unwrap();
    let b = fs::read(simulate(dir.path(), "b.csv", "7")).unwrap();
    let c = fs::read(simulate(dir.path(), "c.csv", "8")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    // stdout carries the same bytes as the file.
    let out = ok(
        dir.path(),
        &["simulate", "-p", "truth.txt", "--horizon", "20", "--seed", "7", "--replicates", "8"],
    );
    assert_eq!(out.stdout, a);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# unit=s\nreader_id,text_id,onset,duration,x,y\n"));
    assert!(text.contains("\nr1,sim0,") && text.contains("\nr2,sim7,"));
}

#[test]
fn fit_then_eval_without_retraining() {
    let dir = workspace();
    let d = dir.path();
    simulate(d, "sim.csv", "3");
    config(d, "poisson.toml", "poisson");
    config(d, "hawkes.toml", "hawkes");
    ok(d, &["fit", "-c", "poisson.toml", "-o", "poisson.json"]);
    ok(d, &["fit", "-c", "hawkes.toml", "-o", "hawkes.json"]);

    // Identical inputs reproduce the fit byte for byte, whatever the thread count.
    let again = Command::new(env!("CARGO_BIN_EXE_readpp"))
        .current_dir(d)
        .args(["fit", "-c", "hawkes.toml", "-o", "again.json"])
        .env("READPP_THREADS", "1")
        .output()
        .unwrap();
    assert!(again.status.success());
    assert_eq!(fs::read(d.join("hawkes.json")).unwrap(), fs::read(d.join("again.json")).unwrap());

    let fit: serde_json::Value = serde_json::from_slice(&fs::read(d.join("poisson.json")).unwrap()).unwrap();
    assert_eq!(fit["closed_form"], true);
    assert_eq!(fit["seed"], 11);

    let args = [
        "eval",
        "-c",
        "hawkes.toml",
        "--fit",
        "poisson.json",
        "--fit",
        "hawkes=hawkes.json",
        "--baseline",
        "poisson",
        "-o",
        "report.json",
        "--deltas",
        "deltas.csv",
        "--summary",
        "summary.csv",
    ];
    ok(d, &args);
    let report = fs::read(d.join("report.json")).unwrap();
    let deltas = fs::read_to_string(d.join("deltas.csv")).unwrap();
    let reports: serde_json::Value = serde_json::from_slice(&report).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 2);
    assert_eq!(reports[0]["model"], "poisson");
    assert!(reports[0]["deltas"].as_array().unwrap().iter().all(|v| v == 0.0));
    assert!(reports[1]["ci"]["lower"].as_f64().unwrap() > 0.0, "hawkes should beat poisson");
    assert!(deltas.starts_with("variant,model,baseline,scanpath,fixation,delta\nfull,poisson,poisson,"));

    ok(d, &args);
    assert_eq!(fs::read(d.join("report.json")).unwrap(), report);
    assert_eq!(fs::read_to_string(d.join("deltas.csv")).unwrap(), deltas);
}

#[test]
fn exit_codes() {
    let dir = workspace();
    let d = dir.path();
    assert_eq!(readpp(d, &["--help"]).status.code(), Some(0));
    assert_eq!(readpp(d, &["bogus"]).status.code(), Some(2));
    assert_eq!(readpp(d, &["fit", "-o", "x.json"]).status.code(), Some(2), "missing data is a usage error");
    fs::write(d.join("bad.toml"), "[model]\nkind = \"nonsense\"\n").unwrap();
    assert_eq!(readpp(d, &["fit", "-c", "bad.toml", "-o", "x.json"]).status.code(), Some(2));
    fs::write(d.join("bad.csv"), "garbage\n1,2\n").unwrap();
    let out = readpp(d, &["fit", "--data", "bad.csv", "-o", "x.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv"));
    let out = readpp(d, &["simulate", "-p", "truth.txt", "--horizon", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plot_writes_grids_and_rejects_fixation_times() {
    let dir = workspace();
    let d = dir.path();
    fs::write(
        d.join("history.csv"),
        "reader_id,text_id,onset,duration,x,y\nr1,t,0.1,0.2,300,200\nr1,t,0.6,0.25,420,210\n",
    )
    .unwrap();
    ok(
        d,
        &[
            "plot", "-p", "truth.txt", "--history", "history.csv", "--times", "0.4,1.0", "--resolution", "8x6",
            "--out-dir", "plots",
        ],
    );
    for i in 0..2 {
        let csv = fs::read_to_string(d.join(format!("plots/intensity_{i:03}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 1 + 8 * 6);
        assert!(csv.starts_with("time,x,y,intensity\n"));
        let svg = fs::read_to_string(d.join(format!("plots/intensity_{i:03}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("<circle"));
    }
    let out = readpp(d, &["plot", "-p", "truth.txt", "--history", "history.csv", "--times", "0.7"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[0.6, 0.85"));
}

/// Two words, `ab cd`, on one line of a 200×200 screen.
const LAYOUT: &str = "# screen=200x200
text_id,glyph,x0,y0,w,h,word_index,char_index,is_whitespace
t,a,0,100,20,40,0,0,false
t,b,20,100,20,40,0,1,false
t, ,40,100,20,40,0,2,true
t,c,60,100,20,40,1,0,false
t,d,80,100,20,40,1,1,false
";

const SCANPATHS: &str = "reader_id,text_id,onset,duration,x,y
r1,t,0.0,0.2,10,120
r1,t,0.3,0.2,30,120
r1,t,0.6,0.2,50,120
r1,t,0.9,0.25,70,120
r1,t,1.2,0.2,150,150
r1,t,1.5,0.3,15,120
r2,t,0.0,0.3,10,120
r2,t,0.4,0.35,70,120
";

#[test]
fn ingest_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("layout.csv"), LAYOUT).unwrap();
    fs::write(d.join("sp.csv"), SCANPATHS).unwrap();

    ok(d, &["ingest", "--data", "sp.csv", "--layouts", "layout.csv", "--filtered", "-o", "filtered.csv"]);
    let filtered = fs::read_to_string(d.join("filtered.csv")).unwrap();
    // The whitespace and off-text fixations of r1 drop out.
    assert_eq!(filtered.lines().filter(|l| l.starts_with("r1,")).count(), 4);
    assert_eq!(filtered.lines().filter(|l| l.starts_with("r2,")).count(), 2);

    ok(d, &["ingest", "--data", "sp.csv", "--layouts", "layout.csv", "-o", "annotated.csv"]);
    assert_eq!(fs::read_to_string(d.join("annotated.csv")).unwrap().lines().count(), 9);

    ok(
        d,
        &["aggregate", "--data", "sp.csv", "--layouts", "layout.csv", "--measure", "total", "-o", "total.csv"],
    );
    let total = fs::read_to_string(d.join("total.csv")).unwrap();
    assert_eq!(
        total,
        "reader_id,text_id,word_index,measure,value\n\
         r1,t,0,total,0.7\nr1,t,1,total,0.25\nr2,t,0,total,0.3\nr2,t,1,total,0.35\n"
    );
    let out = readpp(d, &["aggregate", "--data", "sp.csv", "--measure", "median", "--layouts", "layout.csv", "-o", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(
        d.join("agg.toml"),
        "[data]\nscanpaths = \"sp.csv\"\nlayouts = \"layout.csv\"\n[model]\nkind = \"aggregated\"\nmeasure = \"total\"\n",
    )
    .unwrap();
    ok(d, &["fit", "-c", "agg.toml", "-o", "agg.json"]);
    let fit: serde_json::Value = serde_json::from_slice(&fs::read(d.join("agg.json")).unwrap()).unwrap();
    assert_eq!(fit["records"], 4);
    let logs: Vec<f64> = [0.7f64, 0.25, 0.3, 0.35].iter().map(|v| v.ln()).collect();
    let mean = logs.iter().sum::<f64>() / 4.0;
    let values = fit["params"]["values"].as_array().unwrap();
    let w0 = values.iter().find(|v| v[0] == "w[intercept]").unwrap()[1].as_f64().unwrap();
    assert!((w0 - mean).abs() < 1e-12, "{w0} vs {mean}");
}
