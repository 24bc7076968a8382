use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hamflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hamflow"))
        .args(args)
        .current_dir(dir)
        .env("HAMFLOW_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn verify_example_k1_and_k2() {
    let tmp = tempfile::tempdir().unwrap();
    for k in ["1", "2"] {
        let out = format!("v{k}");
        let o = hamflow(&["verify-example", "--k", k, "--out", &out], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let r = report(&tmp.path().join(&out));
        assert_eq!(r["schema_version"], 1);
        assert_eq!(r["result"]["sfl"], -1);
        assert_eq!(r["result"]["verified"], true);
        assert_eq!(r["family"]["k"].as_u64(), Some(k.parse().unwrap()));
        let gamma = r["result"]["crossings"][0]["form"][0][0].as_f64().unwrap();
        assert!((gamma + 0.255_286_962_3).abs() < 2.6e-4);
        let profile = fs::read_to_string(tmp.path().join(&out).join("gap_profile.dat")).unwrap();
        assert_eq!(profile.lines().count(), 65);
    }
}

#[test]
fn compact_control_negative_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hamflow(&["verify-example", "--k", "2", "--out", "cc", "--family", "compact-control"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&tmp.path().join("cc"));
    assert_eq!(r["result"]["sfl"], 0);
    assert_eq!(r["result"]["crossings"].as_array().unwrap().len(), 0);

    write(tmp.path(), "cc.toml", "[family]\nkind = \"compact-control\"\nk = 2\n[analysis]\nmode = \"certify\"\n");
    let o = hamflow(&["analyze", "--config", "cc.toml", "--out", "cert"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("CertificateUnavailable"));
    assert_eq!(report(&tmp.path().join("cert"))["result"]["hypothesis"], "nonzero Chern component");
}

#[test]
fn malformed_configs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("unknown.toml", "[family]\nkind = \"example\"\nk = 1\nextra = true\n"),
        ("syntax.toml", "[family\nkind = \"example\"\n"),
        ("nofamily.toml", "seed = 1\n"),
        ("mode.toml", "[family]\nkind = \"example\"\nk = 1\n[analysis]\nmode = \"spiral\"\n"),
    ];
    for (name, text) in cases {
        write(tmp.path(), name, text);
        let o = hamflow(&["analyze", "--config", name], tmp.path());
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = hamflow(&["analyze", "--config", "missing.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reports_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "loop.toml",
        "seed = 3\n[family]\nkind = \"example\"\nk = 2\n[analysis]\nwaypoints = [[-3.0, 0.2], [0.0, 0.2], [3.0, 0.2]]\ngrid = 32\nregrid_check = true\n",
    );
    for out in ["a", "b"] {
        let o = hamflow(&["analyze", "--config", "loop.toml", "--out", out], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["report.json", "gap_profile.dat"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }
    let r = report(&tmp.path().join("a"));
    assert_eq!(r["result"]["sfl"], -1);
    assert_eq!(r["result"]["regrid_sfl"], -1);
}

#[test]
fn scan_writes_csv_and_family_file_works() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "fam.toml", "kind = \"example\"\nk = 2\n");
    write(
        tmp.path(),
        "scan.toml",
        "family_file = \"fam.toml\"\noutput_dir = \"scan-out\"\n[analysis]\nresolution = 8\nlevels = 2\n",
    );
    let o = hamflow(&["scan", "--config", "scan.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("scan-out/degeneracy.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("resolution,indices,angles,kernel_dim,gap"));
    assert_eq!(lines.count(), 24 + 48);
    let r = report(&tmp.path().join("scan-out"));
    assert_eq!(r["command"], "scan");
    assert!((r["result"]["dimension"].as_f64().unwrap() - 1.0).abs() < 0.15);
    assert_eq!(r["result"]["chern"]["components"], serde_json::json!([-1, -1]));
}

#[test]
fn selftest_and_check_family() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hamflow(&["selftest", "--seed", "11"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(String::from_utf8_lossy(&o.stdout).matches("PASS").count(), 4);

    write(tmp.path(), "f.toml", "[family]\nkind = \"example\"\nk = 1\n");
    let o = hamflow(&["check-family", "--config", "f.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["family"]["n"], 1);
    assert_eq!(v["validation"]["ok"], true);
}

#[test]
fn zero_workers_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hamflow"))
        .args(["selftest"])
        .current_dir(tmp.path())
        .env("HAMFLOW_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
