use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn dicke(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dicke"))
        .args(args)
        .env_remove("DICKE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = dicke(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn checksums(dir: &Path) -> BTreeMap<String, String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let name = e.file_name().into_string().unwrap();
            (
                name,
                hex::encode(Sha256::digest(fs::read(e.path()).unwrap())),
            )
        })
        .collect()
}

fn schema_check(schema: &str, instance: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(schema);
    let schema = json(&path);
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator
        .iter_errors(instance)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "{}: {errors:#?}", path.display());
}

fn scan<'a>(lg: &'a Value, name: &str) -> &'a Value {
    lg["scans"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["name"] == name)
        .unwrap_or_else(|| panic!("no scan {name}"))
}

#[test]
fn pipeline_is_deterministic_and_complete() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["pipeline", "--out-dir", a.to_str().unwrap()]);
    ok(&["pipeline", "--out-dir", b.to_str().unwrap()]);
    assert_eq!(checksums(&a), checksums(&b));

    let manifest = json(&a.join("manifest.json"));
    let listed: BTreeMap<String, String> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            let path = f["path"].as_str().unwrap().to_string();
            let bytes = fs::metadata(a.join(&path)).unwrap().len();
            assert_eq!(f["bytes"].as_u64().unwrap(), bytes, "{path}");
            (path, f["sha256"].as_str().unwrap().to_string())
        })
        .collect();
    let mut on_disk = checksums(&a);
    on_disk.remove("manifest.json");
    assert_eq!(listed, on_disk);

    let derived = &manifest["derived"];
    let run200 = derived["dynamics"]["runs"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["n"] == 200)
        .unwrap();
    assert!(run200["period"].as_f64().unwrap() > 0.0);
    let model = &derived["effective_model"];
    for key in ["g_meV", "g_rad_per_ps", "kappa_meV", "gamma_per_ns"] {
        assert!(model[key].as_f64().unwrap() > 0.0, "{key}");
    }
    assert_eq!(derived["lg"]["scans"].as_array().unwrap().len(), 3);
    assert!(derived["calibration"]["period"]["ratio"].is_number());
    assert!(manifest["config"]["output"]["directory"].is_null());

    schema_check("manifest.schema.json", &manifest);
    schema_check(
        "dynamics_summary.schema.json",
        &json(&a.join("dynamics_summary.json")),
    );
    schema_check("dos_fit.schema.json", &json(&a.join("dos_fit_N200.json")));
    schema_check("lg_summary.schema.json", &json(&a.join("lg_summary.json")));

    let headers = [
        ("dynamics_N20_dde.csv", "t,re_b,im_b,population"),
        ("dos_N200.csv", "q,dos"),
        ("dos_fit_N200.csv", "q,dos,fit"),
        (
            "lg_original_equal_intervals.csv",
            "t,L_value,bound,violated",
        ),
        ("lg_markovian_plus.csv", "t,L_value,bound,violated"),
        ("lg_markovian_k0.csv", "t,L_value,bound,violated"),
    ];
    for (file, header) in headers {
        let text = fs::read_to_string(a.join(file)).unwrap();
        assert_eq!(text.lines().next(), Some(header), "{file}");
    }
}

#[test]
fn invalid_configs_fail_fast_without_output() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        ("[array]\nn = []\n", "array.n"),
        ("[lg]\nvariants = []\n", "lg.variants"),
        (
            "[spectral]\nfit_window = [1e-4, 2e-4]\n",
            "spectral.fit_window",
        ),
        ("[solver]\ndt = 1.0\n", "solver.dt"),
        ("[array]\nspacing = 400.0\n", "spacing"),
        ("[output]\nformats = []\n", "output.formats"),
    ];
    for (body, field) in cases {
        let config = write_config(tmp.path(), body);
        let out_dir = tmp.path().join("never");
        let start = Instant::now();
        let out = dicke(&[
            "pipeline",
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        let elapsed = start.elapsed();
        assert_eq!(out.status.code(), Some(2), "{body}: {}", stderr(&out));
        assert!(stderr(&out).contains(field), "{body}: {}", stderr(&out));
        assert!(elapsed < Duration::from_millis(100), "{body}: {elapsed:?}");
        assert!(!out_dir.exists());
    }
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = dicke(&["dos", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = dicke(&["dos", "--n", "2", "--out-dir", blocker.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn unconverged_quadrature_exits_3() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "[array]\nn = [1]\n[solver]\nmethod = \"quadrature\"\nt_max = 0.5\nquadrature_tolerance = 1e-300\n",
    );
    let out_dir = tmp.path().join("out");
    let out = dicke(&[
        "dynamics",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(!out_dir.exists());
}

#[test]
fn env_var_sets_default_output_directory() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("from_env");
    let out = Command::new(env!("CARGO_BIN_EXE_dicke"))
        .args(["dos", "--n", "2"])
        .env("DICKE_OUT_DIR", &out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out_dir.join("dos_N2.csv").exists());
}

#[test]
fn two_emitter_dos_matches_closed_form() {
    let tmp = TempDir::new().unwrap();
    ok(&["dos", "--n", "2", "--out-dir", tmp.path().to_str().unwrap()]);
    let (header, rows) = csv_rows(&tmp.path().join("dos_N2.csv"));
    assert_eq!(header, "q,dos");
    assert_eq!(rows.len(), 2001);
    let h = 400.0;
    for row in rows {
        let expected = (2.0 + 2.0 * (row[0] * h).cos()) / 4.0;
        assert!((row[1] - expected).abs() < 1e-12, "{row:?}");
    }
}

#[test]
fn large_array_dos_peaks_at_zero() {
    let tmp = TempDir::new().unwrap();
    ok(&[
        "dos",
        "--n",
        "300",
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    let (_, rows) = csv_rows(&tmp.path().join("dos_N300.csv"));
    let peak = rows.iter().max_by(|a, b| a[1].total_cmp(&b[1])).unwrap();
    assert_eq!(peak[0], 0.0);
    assert!((peak[1] - 1.0).abs() < 1e-12);
    schema_check(
        "dos_fit.schema.json",
        &json(&tmp.path().join("dos_fit_N300.json")),
    );
}

#[test]
fn both_methods_report_their_deviation() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "[array]\nn = [5]\n[solver]\nmethod = \"both\"\n",
    );
    let out_dir = tmp.path().join("out");
    ok(&[
        "dynamics",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    let summary = json(&out_dir.join("dynamics_summary.json"));
    schema_check("dynamics_summary.schema.json", &summary);
    let run = &summary["runs"][0];
    let deviation = run["max_population_deviation"].as_f64().unwrap();
    assert!(deviation < 1e-3, "{deviation}");
    assert!(run["quadrature"]["refinement_change"].as_f64().unwrap() < 1e-4);
    assert!(out_dir.join("dynamics_N5_quadrature.csv").exists());
    assert!(out_dir.join("dynamics_N5_dde.csv").exists());
}

#[test]
fn undamped_lg_maxima() {
    let tmp = TempDir::new().unwrap();
    ok(&[
        "lg",
        "--g-mev",
        "8.3",
        "--kappa-mev",
        "0",
        "--gamma-per-ns",
        "0",
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    let lg = json(&tmp.path().join("lg_summary.json"));
    schema_check("lg_summary.schema.json", &lg);
    let g = lg["model"]["g_per_unit"].as_f64().unwrap();
    for (name, expected, phase) in [
        ("original_equal_intervals", 3.0, PI / 2.0),
        ("markovian_plus", 1.25, PI / 6.0),
        ("markovian_k0", 1.25, PI / 6.0),
    ] {
        let s = scan(&lg, name);
        let max = s["max_value"].as_f64().unwrap();
        let at = s["argmax"].as_f64().unwrap();
        assert!((max - expected).abs() < 1e-4, "{name}: {max}");
        // The scans repeat with period pi in g t, symmetric about zero.
        let r = (g * at).rem_euclid(PI);
        let off = (r - phase).abs().min((r - (PI - phase)).abs());
        assert!(off < 2e-3, "{name}: {at}");
    }

    // The upper branch, 2 g t < pi / 2, peaks at 1.5.
    let (_, rows) = csv_rows_bool(&tmp.path().join("lg_original_equal_intervals.csv"));
    let text = fs::read_to_string(tmp.path().join("lg_original_equal_intervals.csv")).unwrap();
    let times: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    let upper = times
        .iter()
        .zip(&rows)
        .filter(|(&t, _)| 2.0 * g * t < PI / 2.0)
        .map(|(_, &(v, _))| v)
        .fold(0.0, f64::max);
    assert!((upper - 1.5).abs() < 1e-4, "{upper}");
}

#[test]
fn lab_parameters_violate_every_variant() {
    let tmp = TempDir::new().unwrap();
    ok(&[
        "lg",
        "--g-mev",
        "8.3",
        "--kappa-mev",
        "3.3",
        "--gamma-per-ns",
        "100",
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    let lg = json(&tmp.path().join("lg_summary.json"));
    for name in ["original_equal_intervals", "markovian_plus", "markovian_k0"] {
        let s = scan(&lg, name);
        assert!(s["violated"].as_bool().unwrap(), "{name}");
        assert!(!s["intervals"].as_array().unwrap().is_empty(), "{name}");
        let (_, rows) = csv_rows_bool(&tmp.path().join(format!("lg_{name}.csv")));
        assert!(rows.iter().any(|&(v, flag)| flag && v > 1.0));
    }
}

fn csv_rows_bool(path: &Path) -> (String, Vec<(f64, bool)>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            (cols[1].parse().unwrap(), cols[3].parse().unwrap())
        })
        .collect();
    (header, rows)
}

#[test]
fn variant_flag_selects_scans() {
    let tmp = TempDir::new().unwrap();
    ok(&[
        "lg",
        "--g-mev",
        "8.3",
        "--kappa-mev",
        "3.3",
        "--variant",
        "markovian_k0",
        "--t1",
        "0.01",
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    let lg = json(&tmp.path().join("lg_summary.json"));
    assert_eq!(lg["scans"].as_array().unwrap().len(), 1);
    assert!(tmp.path().join("lg_markovian_k0.csv").exists());
    assert!(!tmp.path().join("lg_markovian_plus.csv").exists());
}

#[test]
fn lg_without_upstream_products_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = dicke(&["lg", "--out-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("effective"), "{}", stderr(&out));
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
}

#[test]
fn lg_reads_upstream_products() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().to_str().unwrap();
    ok(&["dynamics", "--n", "200", "--out-dir", dir]);
    ok(&["dos", "--n", "200", "--out-dir", dir]);
    ok(&["lg", "--n", "200", "--out-dir", dir]);
    let lg = json(&tmp.path().join("lg_summary.json"));
    let summary = json(&tmp.path().join("dynamics_summary.json"));
    let fit = json(&tmp.path().join("dos_fit_N200.json"));
    assert_eq!(lg["model"]["g_source"], "period");
    assert_eq!(lg["model"]["kappa_source"], "fit");
    assert_eq!(lg["model"]["period"], summary["runs"][0]["period"]);
    assert_eq!(lg["model"]["kappa_per_unit"], fit["kappa_per_unit"]);
}

#[test]
fn formats_filter_outputs() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "[output]\nformats = [\"json\"]\n");
    let out_dir = tmp.path().join("out");
    ok(&[
        "dos",
        "--n",
        "20",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    let names: Vec<String> = checksums(&out_dir).into_keys().collect();
    assert_eq!(names, ["dos_fit_N20.json"]);
}

#[test]
fn shipped_config_matches_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/mqw.toml");
    let cfg = dicke_cli::RunConfig::load(&path).unwrap();
    assert_eq!(cfg, dicke_cli::RunConfig::default());
}
