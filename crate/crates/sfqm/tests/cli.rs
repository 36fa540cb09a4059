//! Black-box tests of the sfqm binary: output formats, error contract,
//! exit codes, and bit-for-bit determinism (including across --workers).

use std::process::{Command, Output};

fn sfqm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfqm")).args(args).output().unwrap()
}

fn sfqm_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfqm")).args(args).env(key, value).output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Asserts the error contract: given exit code, empty stdout, and a single
/// `ERROR <code>: <message>` line on stderr.
fn assert_error(out: &Output, code: i32) -> String {
    assert_eq!(out.status.code(), Some(code));
    assert!(out.stdout.is_empty(), "stdout not empty: {}", String::from_utf8_lossy(&out.stdout));
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(stderr.lines().count(), 1, "stderr not single-line: {stderr:?}");
    assert!(
        stderr.starts_with(&format!("ERROR {code}: ")),
        "bad error prefix: {stderr:?}"
    );
    stderr
}

const SCAN: &[&str] = &[
    "scan1d", "--family", "cantor", "--rho", "3", "--V", "100", "--G", "3", "--alpha", "1.8",
    "--kmin", "1", "--kmax", "40", "--n", "400",
];

#[test]
fn determinism_across_runs_and_workers() {
    let grid = &[
        "scan2d", "--family", "svc", "--rho", "3", "--V", "100", "--G", "3", "--alpha-min", "1.5",
        "--alpha-max", "2.0", "--n-alpha", "4", "--kmin", "1", "--kmax", "20", "--n-k", "200",
    ];
    let base = stdout(&sfqm(grid));
    let repeat = stdout(&sfqm(grid));
    let one = stdout(&sfqm(&[grid, &["--workers", "1"][..]].concat()));
    let four = stdout(&sfqm(&[grid, &["--workers", "4"][..]].concat()));
    assert_eq!(base, repeat, "C11 FAIL: repeated runs differ");
    assert_eq!(base, one, "C11 FAIL: --workers 1 differs");
    assert_eq!(base, four, "C11 FAIL: --workers 4 differs");

    let scan_base = stdout(&sfqm(SCAN));
    let scan_four = stdout(&sfqm(&[SCAN, &["--workers", "4"][..]].concat()));
    assert_eq!(scan_base, scan_four, "C11 FAIL: scan1d differs across --workers");
    println!("PASS C11 determinism: identical bytes across reruns and --workers 1/4");
}

#[test]
fn scan_csv_format() {
    let text = stdout(&sfqm(SCAN));
    let mut lines = text.lines();
    let config = lines.next().unwrap();
    assert!(config.starts_with("# config: {"), "missing config header: {config}");
    assert!(config.contains("\"family\":\"cantor\"") && config.contains("\"alpha\":1.8"));
    assert_eq!(lines.next(), Some("k,T,R"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 400);
    for row in &rows {
        let fields: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(fields.len(), 3);
        assert!((fields[1] + fields[2] - 1.0).abs() < 1e-9);
    }
    // 17 significant digits survive a parse round-trip
    let k: f64 = rows[1].split(',').next().unwrap().parse().unwrap();
    assert_eq!(format!("{:.16e}", k), rows[1].split(',').next().unwrap());
}

#[test]
fn scan_json_embeds_config() {
    let text = stdout(&sfqm(&[SCAN, &["--format", "json"][..]].concat()));
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["config"]["rho"], 3.0);
    assert_eq!(doc["config"]["stage"], 3);
    assert_eq!(doc["data"].as_array().unwrap().len(), 400);
}

#[test]
fn layout_json_fields() {
    let text = stdout(&sfqm(&[
        "layout", "--family", "cantor", "--rho", "3", "--G", "2", "--format", "json",
    ]));
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let data = &doc["data"];
    for field in ["family", "rho", "L", "V_G", "G", "l_G", "gaps", "spacings", "segments"] {
        assert!(!data[field].is_null(), "missing layout field {field}");
    }
    assert_eq!(data["G"], 2);
    assert_eq!(data["segments"].as_array().unwrap().len(), 4);
    let seg0 = data["segments"][0].as_array().unwrap();
    assert!((seg0[1].as_f64().unwrap() - 1.0 / 9.0).abs() < 1e-15);
}

#[test]
fn layout_csv_format() {
    let text = stdout(&sfqm(&["layout", "--family", "svc", "--rho", "3", "--G", "2"]));
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert_eq!(lines.next(), Some("index,start,end"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn peaks_from_precomputed_scan() {
    let dir = std::env::temp_dir().join(format!("sfqm-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let scan_path = dir.join("scan.csv");
    let scan_args = [
        "scan1d", "--family", "svc", "--rho", "3", "--V", "100", "--G", "3", "--alpha", "2",
        "--dispersion", "quadratic", "--kmin", "6", "--kmax", "15", "--n", "1801",
    ];
    stdout(&sfqm(&[&scan_args[..], &["--out", scan_path.to_str().unwrap()]].concat()));

    let direct = stdout(&sfqm(&[
        "peaks", "--family", "svc", "--rho", "3", "--V", "100", "--G", "3", "--alpha", "2",
        "--dispersion", "quadratic", "--kmin", "6", "--kmax", "15", "--n", "1801",
    ]));
    let from_file = stdout(&sfqm(&[
        "peaks", "--family", "svc", "--rho", "3", "--V", "100", "--G", "3", "--alpha", "2",
        "--dispersion", "quadratic", "--kmin", "6", "--kmax", "15", "--n", "1801", "--input",
        scan_path.to_str().unwrap(),
    ]));
    // identical peak tables whether the scan is recomputed or read back
    let body = |s: &str| s.lines().skip(1).map(String::from).collect::<Vec<_>>();
    assert_eq!(body(&direct), body(&from_file));
    assert_eq!(direct.lines().nth(1), Some("k_peak,width"));
    assert!(direct.lines().count() > 2, "expected at least one peak");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn out_file_matches_stdout() {
    let dir = std::env::temp_dir().join(format!("sfqm-out-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("scan.csv");
    let piped = stdout(&sfqm(SCAN));
    let saved = sfqm(&[SCAN, &["--out", path.to_str().unwrap()][..]].concat());
    assert!(saved.status.success());
    assert!(saved.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&path).unwrap(), piped);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn invalid_input_exits_1() {
    // alpha out of range
    let out = sfqm(&[
        "transmit", "--family", "cantor", "--rho", "3", "--G", "2", "--alpha", "2.5", "--k", "5",
    ]);
    let msg = assert_error(&out, 1);
    assert!(msg.contains("alpha"), "message does not name the bad field: {msg}");

    // rho <= 1 is geometrically impossible
    let out = sfqm(&[
        "transmit", "--family", "cantor", "--rho", "0.9", "--G", "2", "--alpha", "1.5", "--k", "5",
    ]);
    assert_error(&out, 1);

    // unknown flags are also exit 1
    let out = sfqm(&["transmit", "--no-such-flag"]);
    assert_error(&out, 1);
}

#[test]
fn oracle_check_failure_exits_2() {
    let args = [
        "oracle-check", "--family", "cantor", "--rho", "3", "--V", "100", "--G", "4", "--alpha",
        "2", "--samples", "50", "--seed", "1",
    ];
    let pass = sfqm(&args);
    let text = stdout(&pass);
    assert!(text.contains("max |dT|") && text.contains("PASS"), "{text}");

    // an impossible tolerance forces the disagreement branch
    let fail = sfqm(&[&args[..], &["--tol", "1e-30"]].concat());
    assert_eq!(fail.status.code(), Some(2));
    let stderr = String::from_utf8(fail.stderr.clone()).unwrap();
    assert!(stderr.starts_with("ERROR 2: "), "bad error line: {stderr:?}");
}

#[test]
fn stage_cap_exits_3_and_env_overrides() {
    let args = [
        "layout", "--family", "cantor", "--rho", "3", "--G", "24",
    ];
    let out = sfqm(&args);
    let msg = assert_error(&out, 3);
    assert!(msg.contains("24"), "message does not mention the stage: {msg}");

    let lifted = sfqm_env(&args, "SFQM_MAX_G", "25");
    assert!(lifted.status.success(), "SFQM_MAX_G=25 should admit G=24");

    let tightened = sfqm_env(
        &["layout", "--family", "cantor", "--rho", "3", "--G", "6"],
        "SFQM_MAX_G",
        "5",
    );
    assert_error(&tightened, 3);
}

#[test]
fn transmit_reports_t_r_and_zetas() {
    let text = stdout(&sfqm(&[
        "transmit", "--family", "cantor", "--rho", "3", "--V", "100", "--G", "3", "--alpha",
        "1.8", "--k", "7",
    ]));
    assert!(text.contains("T = ") && text.contains("R = "));
    assert!(text.contains("zeta_1") && text.contains("zeta_3"));
}
