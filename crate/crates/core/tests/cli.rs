use serde_json::Value;
use std::path::Path;
use std::process::Command;

fn ahym(args: &[&str], out: &Path) -> (i32, Value) {
    let o = Command::new(env!("CARGO_BIN_EXE_ahym")).args(args).arg("--out").arg(out).output().unwrap();
    let v = serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)));
    (o.status.code().unwrap(), v)
}

fn config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn indicial_reports_roots_and_windows() {
    let dir = tempfile::tempdir().unwrap();
    let (code, v) = ahym(&["indicial"], dir.path());
    assert_eq!(code, 0);
    assert_eq!(v["status"], "ok");
    let ops = v["result"]["operators"].as_array().unwrap();
    let parts = |i: usize| -> Vec<f64> {
        ops[i]["data"]["distinct_real_parts"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
    };
    for (got, want) in [(parts(0), vec![0.0, 3.0]), (parts(1), vec![0.0, 1.0, 2.0, 3.0])] {
        assert_eq!(got.len(), want.len());
        assert!(got.iter().zip(&want).all(|(g, w)| (g - w).abs() < 1e-10), "{got:?}");
    }
    let w = &ops[1]["data"]["window"];
    assert!((w["lo"].as_f64().unwrap() - 1.0).abs() < 1e-12 && (w["hi"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!(dir.path().join("report.json").exists() && dir.path().join("roots.csv").exists());
}

#[test]
fn zero_data_needs_no_newton_steps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "boundary_data.kind = coexact_mode\nboundary_data.amplitude = 0\ngrid_points = 32\n");
    let (code, v) = ahym(&["solve-ym", "--config", &cfg], dir.path());
    assert_eq!(code, 0);
    assert_eq!(v["result"]["newton_iterations"], 0);
    assert_eq!(v["result"]["solution_max_abs"].as_f64().unwrap(), 0.0);
    assert!(dir.path().join("convergence.csv").exists() && dir.path().join("solution.csv").exists());
}

#[test]
fn bad_configs_exit_with_an_error_report() {
    let dir = tempfile::tempdir().unwrap();
    for (text, kind) in [("delta = 2.5", "OutOfRange"), ("n = 2", "OutOfRange"), ("colour = red", "UnknownKey")] {
        let cfg = config(dir.path(), text);
        let (code, v) = ahym(&["indicial", "--config", &cfg], dir.path());
        assert_eq!(code, 1, "{text}");
        assert_eq!(v["status"], "error");
        assert_eq!(v["error"]["kind"], kind, "{text}");
    }
    let (code, v) = ahym(&["solve-ym"], dir.path());
    assert_eq!((code, v["error"]["kind"].as_str()), (1, Some("MissingRequired")));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "grid_points = 32\nseed = 11\n");
    let run = || {
        let o = Command::new(env!("CARGO_BIN_EXE_ahym"))
            .args(["solve-laplace", "--config", &cfg, "--out"])
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(o.status.success());
        (
            o.stdout,
            std::fs::read(dir.path().join("report.json")).unwrap(),
            std::fs::read(dir.path().join("solution.csv")).unwrap(),
        )
    };
    let first = run();
    assert!(first == run(), "reports differ between runs");
    let text = |b: &[u8]| String::from_utf8(b.to_vec()).unwrap().trim_end().to_string();
    assert_eq!(text(&first.0), text(&first.1));
}
