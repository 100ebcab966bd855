//! Regression tests of the shipped presets.

use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets").join(format!("{name}.json"))
}

fn run(cmd: &str, name: &str, out: &Path) -> Value {
    let o = Command::new(env!("CARGO_BIN_EXE_cylwave"))
        .args([cmd, "--config"])
        .arg(preset(name))
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary, serde_json::from_slice::<Value>(&o.stdout).unwrap());
    assert_eq!(summary["schema"], 1);
    assert_eq!(summary["failures"].as_u64().unwrap_or(0), 0);
    summary
}

/// Parsed CSV body (after the schema line), as header-keyed rows.
fn csv(path: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let body = text.strip_prefix("# schema=1\n").unwrap_or_else(|| panic!("{} lacks the schema line", path.display()));
    let mut lines = body.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(String::from)).collect())
        .collect()
}

fn f(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: '{s}'"))
}

fn runs<'a>(summary: &'a Value, method: &str) -> impl Iterator<Item = &'a Value> + 'a {
    let method = method.to_string();
    summary["runs"].as_array().unwrap().iter().filter(move |r| r["method"] == method.as_str())
}

fn max_growth(run: &Value) -> f64 {
    run["oscillation"].as_array().unwrap().iter().filter_map(|o| o["growth_factor"].as_f64()).fold(0.0, f64::max)
}

fn check_fig3(name: &str) {
    let dir = tempfile::tempdir().unwrap();
    let s = run("solve", name, dir.path());
    let currents = csv(&dir.path().join("currents.csv"));
    assert_eq!(currents.len(), 2 * 2 * 40);
    let densities = csv(&dir.path().join("densities.csv"));
    assert_eq!(densities.len(), 64);
    for r in runs(&s, "nfm") {
        let b = &r["boundary_residuals"];
        assert!(b["e_tangential"].as_f64().unwrap() < 2e-3, "{name}: {r}");
        assert!(b["h_tangential"].as_f64().unwrap() < 2e-3, "{name}: {r}");
        assert!(r["oscillation"].as_array().unwrap().iter().all(|o| o["flagged"] == false));
    }
    // The normalized NFM currents of both aux pairs coincide.
    let norm = |aux: &str, l: usize| {
        let r = currents.iter().find(|r| r["method"] == "nfm" && r["aux"] == aux && r["l"] == l.to_string()).unwrap();
        [f(&r["first_norm_re"]), f(&r["first_norm_im"]), f(&r["second_norm_re"]), f(&r["second_norm_im"])]
    };
    let peak = (0..40).flat_map(|l| norm("1", l)).map(f64::abs).fold(0.0, f64::max);
    let diff = (0..40)
        .flat_map(|l| norm("0", l).into_iter().zip(norm("1", l)).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    assert!(diff / peak < 1e-3, "{name}: aux pairs disagree by {}", diff / peak);
}

#[test]
fn fig3_external_currents() {
    check_fig3("fig3-external");
}

#[test]
fn fig3_internal_currents() {
    check_fig3("fig3-internal");
}

#[test]
fn fig4_exact_and_nfm_coincide() {
    let dir = tempfile::tempdir().unwrap();
    let s = run("fields", "fig4", dir.path());
    let rows = csv(&dir.path().join("fields.csv"));
    assert_eq!(rows.len(), 2 * 72);
    for r in &rows {
        for col in ["exact_re", "nfm_re", "mas_re"] {
            f(&r[col]);
        }
    }
    for e in s["field_errors"].as_array().unwrap() {
        if e["method"] == "nfm" {
            assert!(e["max_relative_error"].as_f64().unwrap() < 1e-3, "{e}");
        }
    }
    let mas_46 = runs(&s, "mas").find(|r| r["n"] == 46).unwrap();
    assert!(max_growth(mas_46) > 3.0, "{mas_46}");
}

#[test]
fn fig6_ellipse_currents() {
    let dir = tempfile::tempdir().unwrap();
    let s = run("solve", "fig6", dir.path());
    assert_eq!(csv(&dir.path().join("currents.csv")).len(), 2 * (40 + 44));
    assert!(!dir.path().join("densities.csv").exists());
    for r in runs(&s, "nfm") {
        let b = &r["boundary_residuals"];
        assert!(b["e_tangential"].as_f64().unwrap().max(b["h_tangential"].as_f64().unwrap()) < 1e-2, "{r}");
        assert!(r["oscillation"].as_array().unwrap().iter().all(|o| o["flagged"] == false), "{r}");
    }
    let mas_44 = runs(&s, "mas").find(|r| r["n"] == 44).unwrap();
    assert!(mas_44["oscillation"].as_array().unwrap().iter().any(|o| o["flagged"] == true), "{mas_44}");
}

#[test]
fn fig7_ellipse_fields() {
    let dir = tempfile::tempdir().unwrap();
    let s = run("fields", "fig7", dir.path());
    let rows = csv(&dir.path().join("fields.csv"));
    assert_eq!(rows.len(), 2 * 144);
    assert!(rows.iter().all(|r| r["exact_re"].is_empty() && !r["nfm_re"].is_empty()));
    assert_eq!(rows.iter().filter(|r| r["region"] == "1").count(), 2 * 72);
    assert!(s["field_errors"].as_array().unwrap().is_empty());
    // NFM fields at N = 40 and 44 agree.
    let at = |n: &str| -> Vec<f64> { rows.iter().filter(|r| r["n"] == n).flat_map(|r| [f(&r["nfm_re"]), f(&r["nfm_im"])]).collect() };
    let (a, b) = (at("40"), at("44"));
    let peak = a.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff / peak < 1e-6, "{}", diff / peak);
}

#[test]
fn fig9_three_way_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let s = run("fields", "fig9", dir.path());
    let rows = csv(&dir.path().join("fields.csv"));
    assert_eq!(rows.len(), 2 * 72);
    assert!(rows.iter().all(|r| r["region"] == "2" && !r["exact_re"].is_empty() && !r["nfm_re"].is_empty() && !r["mas_re"].is_empty()));
    let err = |m: &str, n: u64| {
        s["field_errors"].as_array().unwrap().iter().find(|e| e["method"] == m && e["n"] == n).unwrap()["max_relative_error"]
            .as_f64()
            .unwrap()
    };
    // Both methods are visibly approximate at N = 10 and improve at N = 11.
    for m in ["nfm", "mas"] {
        assert!(err(m, 10) < 0.2 && err(m, 11) < err(m, 10), "{m}");
    }
}

#[test]
fn mas_divergence_concordance() {
    let dir = tempfile::tempdir().unwrap();
    let s = run("sweep", "mas-divergence", dir.path());
    let rows = csv(&dir.path().join("concordance.csv"));
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r["agrees"] == "true" && r["nfm_flagged"] == "false"));
    assert_eq!(s["agreeing"], 9);
    assert!(rows.iter().any(|r| r["predicted_aux1"] == "diverges"));
    assert!(rows.iter().any(|r| r["predicted_aux2"] == "diverges"));
}

#[test]
fn nfm_stability_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let s = run("sweep", "nfm-stability", dir.path());
    let rows = csv(&dir.path().join("oscillation.csv"));
    assert_eq!(rows.len(), 2 * 3 * 2);
    for r in rows.iter().filter(|r| r["method"] == "nfm") {
        assert!(f(&r["omega"]) < 0.3, "{r:?}");
        if !r["growth_factor"].is_empty() {
            assert!(f(&r["growth_factor"]) < 2.0, "{r:?}");
        }
        assert_eq!(r["flagged"], "false");
    }
    let scans = s["scans"].as_array().unwrap();
    let mas = scans.iter().find(|x| x["method"] == "mas").unwrap();
    assert!(!mas["flagged_vectors"].as_array().unwrap().is_empty());
    let nfm = scans.iter().find(|x| x["method"] == "nfm").unwrap();
    assert!(nfm["flagged_vectors"].as_array().unwrap().is_empty());
}
