use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hmix::output::sha256_hex;
use hmix::{load_model, CliError};

fn hmix(dir: &Path, args: &[&str], workers: usize) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmix"))
        .args(args)
        .current_dir(dir)
        .env("HMIX_WORKERS", workers.to_string())
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn hmix")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_model(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p.display().to_string()
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn laplace_run_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = hmix(dir.path(), &["laplace", "--preset", "gauss1d", "--order", "2", "--out", "g.csv"], 2);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read(dir.path().join("g.csv")).unwrap();
    let text = String::from_utf8(csv.clone()).unwrap();
    assert!(text.starts_with("T,I_quadrature,I_reconstructed,abs_err\n"));
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        // √(2π/T) reconstructs the Gaussian exactly
        assert!(v[3] <= 1e-10 * v[1], "{line}");
        rows += 1;
    }
    // 1e2..1e6 at 8 per decade
    assert_eq!(rows, 33);
    let m = manifest(&dir.path().join("g.manifest.json"));
    assert_eq!(m["subcommand"], "laplace");
    assert_eq!(m["worker_count"], 2);
    assert_eq!(m["outputs"][0]["path"], "g.csv");
    assert_eq!(m["outputs"][0]["sha256"], sha256_hex(&csv));
    assert_eq!(m["config_digest"].as_str().unwrap().len(), 64);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["class"], "quadratic");
}

#[test]
fn zero_order_is_a_config_error_naming_the_order() {
    let dir = tempfile::tempdir().unwrap();
    let model = configs().join("disk2d.json");
    let out = hmix(dir.path(), &["cover", "--model", model.to_str().unwrap(), "--orders", "0,3"], 1);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("N_1 = 0"), "{err}");
    assert!(!dir.path().join("cover.manifest.json").exists());
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hmix(dir.path(), &["frobnicate"], 1).status.code(), Some(1));
    assert_eq!(hmix(dir.path(), &["laplace", "--preset", "nope"], 1).status.code(), Some(1));
    assert_eq!(hmix(dir.path(), &["laplace", "--preset", "custom-json"], 1).status.code(), Some(1));
    assert_eq!(hmix(dir.path(), &["--help"], 1).status.code(), Some(0));
}

#[test]
fn failed_validation_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // two decades at small T cannot pin c0 to 1e-6 against the chart
    let out = hmix(dir.path(), &["laplace", "--preset", "quartic1d", "--t-min", "1", "--t-max", "100"], 1);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("validation failed"));
    // outputs and manifest are still written
    assert!(dir.path().join("laplace.manifest.json").exists());
}

#[test]
fn load_model_examples() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_model(dir.path(), "ok.json", r#"{"genus": 2, "rank_d": 1, "gram": [1], "gap_delta": 0.1}"#);
    let m = load_model(Path::new(&ok)).unwrap();
    assert_eq!((m.genus(), m.rank()), (2, 1));

    let neg = write_model(dir.path(), "neg.json", r#"{"genus": 2, "rank_d": 2, "gram": [1, 2, 2, 1], "gap_delta": 0.1}"#);
    let e = load_model(Path::new(&neg)).unwrap_err();
    assert!(matches!(e, CliError::Config(_)));
    assert!(e.to_string().contains("gram not positive definite"), "{e}");

    let dip = write_model(
        dir.path(),
        "dip.json",
        r#"{"genus": 2, "rank_d": 1, "gram": [1], "gap_delta": 0.1,
            "perturbation": {"preset": "quartic", "coef": -200}, "domain_u": [0.2]}"#,
    );
    let e = load_model(Path::new(&dip)).unwrap_err();
    assert!(e.to_string().contains("positivity sweep failed"), "{e}");

    let typo = write_model(dir.path(), "typo.json", r#"{"genus": 2, "rank": 1, "gram": [1], "gap_delta": 0.1}"#);
    assert!(load_model(Path::new(&typo)).unwrap_err().to_string().contains("schema"));

    let out = hmix(dir.path(), &["cover", "--model", &neg], 1);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gram not positive definite"));
}

#[test]
fn mix_verdict_and_symbolic_time() {
    let dir = tempfile::tempdir().unwrap();
    let model = configs().join("disk2d.json");
    let model = model.to_str().unwrap();
    let out = hmix(dir.path(), &["mix", "--model", model, "--out", "m.csv"], 2);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let verdict: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("m.verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["c0_closed_form"], 0.5);
    assert!(verdict["rel_dev"].as_f64().unwrap() <= 5e-3);
    let csv = fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert!(csv.starts_with("log_t,integral,reconstruction,c0_running\n"));
    let m = manifest(&dir.path().join("m.manifest.json"));
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);

    // t = 10^100 given as a literal and as its logarithm
    let a = hmix(dir.path(), &["mix", "--model", model, "--t", "1e100", "--out", "a.csv"], 1);
    let b = hmix(dir.path(), &["mix", "--model", model, "--log-t", "230.25850929940458", "--out", "b.csv"], 1);
    let ia: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let ib: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
    let (x, y) = (ia["integral"].as_f64().unwrap(), ib["integral"].as_f64().unwrap());
    assert!((x - y).abs() <= 1e-12 * y, "{x} vs {y}");
    // far beyond f64 range for t itself
    let huge = hmix(dir.path(), &["mix", "--model", model, "--t", "1e4343", "--out", "h.csv"], 1);
    assert_eq!(huge.status.code(), Some(0));
    let both = hmix(dir.path(), &["mix", "--model", model, "--t", "10", "--log-t", "2"], 1);
    assert_eq!(both.status.code(), Some(1));
}

#[test]
fn ode_run_satisfies_its_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = hmix(dir.path(), &["ode", "--lambda", "0.05", "--n", "2", "--m", "-2", "--t-max", "1e4", "--out", "o.csv"], 1);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("o.csv")).unwrap();
    assert!(csv.starts_with("t,y_re,y_im,yp_re,yp_im,f_re,f_im,residual\n"));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["euler_residual"].as_f64().unwrap() <= 1e-6);
    let odd = hmix(dir.path(), &["ode", "--lambda", "0.05", "--n", "1"], 1);
    assert_eq!(odd.status.code(), Some(1));
    let edge = hmix(dir.path(), &["ode", "--lambda", "0.25"], 1);
    assert_eq!(edge.status.code(), Some(1));
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let model = configs().join("quartic2d.json");
    let model = model.to_str().unwrap();
    let mut seen: Vec<(Vec<u8>, Vec<u8>, serde_json::Value)> = Vec::new();
    for workers in [1, 3, 8] {
        let dir = tempfile::tempdir().unwrap();
        let out = hmix(dir.path(), &["cover", "--model", model, "--orders", "96,80", "--epsilon", "0.04", "--study", "--test-fn", "bump"], workers);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let mut m = manifest(&dir.path().join("cover.manifest.json"));
        assert_eq!(m["worker_count"], workers);
        m["worker_count"] = serde_json::Value::Null;
        seen.push((fs::read(dir.path().join("cover.csv")).unwrap(), out.stdout, m));
    }
    assert!(seen.windows(2).all(|w| w[0] == w[1]));
}
