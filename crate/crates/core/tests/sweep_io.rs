use std::io::Cursor;
use std::process::Command;

use deltaguide::geometry::{build_mesh, GeometryParams, MeshControl};
use deltaguide::io::{band_csv, read_json, read_mesh, read_triplets, write_json, write_mesh, write_triplets};
use deltaguide::kronig_penney::kp_band_edges;
use deltaguide::sparse::from_triplets;
use deltaguide::sweep::{fit_slope, run_sweep, Metric, SweepConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn eps_grid() -> Vec<f64> {
    (0..6).map(|i| 0.2 * 0.6f64.powi(i)).collect()
}

#[test]
fn exact_power_laws_are_recovered() {
    let rows: Vec<(f64, f64)> = eps_grid().iter().map(|&e| (e, e.sqrt())).collect();
    let f = fit_slope(&rows).unwrap();
    assert!((f.slope - 0.5).abs() < 1e-12);
    assert!(f.intercept.abs() < 1e-12);
    assert!(f.residual < 1e-12);
    let c = 3.7;
    let rows: Vec<(f64, f64)> = eps_grid().iter().map(|&e| (e, c * e.powf(1.0 / 3.0))).collect();
    let f = fit_slope(&rows).unwrap();
    assert!((f.slope - 1.0 / 3.0).abs() < 1e-12);
    assert!((f.intercept - c.ln()).abs() < 1e-12);
    assert_eq!((f.points, f.dropped), (6, 0));
}

#[test]
fn five_percent_noise_keeps_the_slope_close() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let eps = eps_grid();
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let rows: Vec<(f64, f64)> = eps
            .iter()
            .map(|&e| (e, e.powf(0.25) * (1.0 + rng.random_range(-0.05..=0.05))))
            .collect();
        worst = worst.max((fit_slope(&rows).unwrap().slope - 0.25).abs());
    }
    assert!(worst < 0.05, "{worst}");
}

#[test]
fn unusable_rows() {
    assert!(fit_slope(&[(0.1, 1.0), (0.05, 0.5)]).is_err());
    assert!(fit_slope(&[(0.1, 1.0), (0.05, 0.0), (0.02, -1.0), (0.01, f64::NAN)]).is_err());
    assert!(fit_slope(&[(0.1, 1.0), (0.1, 2.0), (0.1, 3.0)]).is_err());
    let f = fit_slope(&[(0.1, 0.1), (0.05, 0.0), (0.02, 0.02), (0.01, 0.01), (0.005, -3.0)]).unwrap();
    assert_eq!((f.points, f.dropped), (3, 2));
    assert!((f.slope - 1.0).abs() < 1e-12);
}

#[test]
fn expected_exponents() {
    assert_eq!(Metric::ResolventDefect.expected_slope(1.0, 0.25), 0.25);
    assert_eq!(Metric::ResolventDefect.expected_slope(0.2, 0.1), 0.2);
    assert_eq!(Metric::SpectralDistance.expected_slope(1.0, 0.1), 0.2);
    assert_eq!(Metric::QuasiUnitarity.expected_slope(1.0, 0.25), 0.25);
}

#[test]
fn triplets_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let entries: Vec<(usize, usize, f64)> = (0..40)
        .map(|_| (rng.random_range(0..7), rng.random_range(0..5), rng.random_range(-1e3..1e3)))
        .collect();
    let a = from_triplets(7, 5, &entries);
    let mut buf = Vec::new();
    write_triplets(&mut buf, "probe", &a).unwrap();
    let (h, b) = read_triplets(Cursor::new(&buf)).unwrap();
    assert_eq!((h.name.as_str(), h.rows, h.cols, h.nnz), ("probe", 7, 5, a.nnz()));
    assert_eq!(a, b);

    let text = String::from_utf8(buf).unwrap();
    let truncated: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
    assert!(read_triplets(Cursor::new(truncated)).is_err());
    let mut lines: Vec<&str> = text.lines().collect();
    lines[1] = "99 0 1.0";
    assert!(read_triplets(Cursor::new(lines.join("\n"))).is_err());
    assert!(read_triplets(Cursor::new("")).is_err());
}

#[test]
fn mesh_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = GeometryParams::symmetric(1.0, 1.0 / 3.0, 1.0 / 6.0, 0.1).validate().unwrap();
    let mesh = build_mesh(&g, &MeshControl::for_geometry(&g).scaled(2.0)).unwrap();
    let path = dir.path().join("mesh.json");
    write_mesh(&path, &mesh).unwrap();
    let back = read_mesh(&path).unwrap();
    assert_eq!(serde_json::to_value(&mesh).unwrap(), serde_json::to_value(&back).unwrap());
    assert_eq!(back.total_area(), mesh.total_area());

    let p = dir.path().join("params.json");
    write_json(&p, &g.params).unwrap();
    let q: GeometryParams = read_json(&p).unwrap();
    assert_eq!(q, g.params);
}

#[test]
fn band_table_round_trip() {
    let bands = kp_band_edges(1.3, 5).unwrap();
    let csv = band_csv(&bands);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("band_index,start,end"));
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0].parse::<usize>().unwrap(), i + 1);
        let (a, b): (f64, f64) = (cols[1].parse().unwrap(), cols[2].parse().unwrap());
        assert!((a - bands[i].0).abs() <= 1e-12 * a.abs());
        assert!((b - bands[i].1).abs() <= 1e-12 * b.abs());
    }
}

fn small_sweep(workers: usize) -> SweepConfig {
    let base = GeometryParams::symmetric(1.0, 1.0 / 3.0, 1.0 / 6.0, 0.1);
    let mut cfg = SweepConfig::new(base, vec![0.1, 0.08, 0.064]);
    cfg.mesh_scale = 2.0;
    cfg.cutoff = 100.0;
    cfg.metrics = vec![Metric::ResolventDefect, Metric::QuasiUnitarity];
    cfg.workers = workers;
    cfg
}

#[test]
fn sweeps_are_reproducible() {
    let a = run_sweep(&small_sweep(1)).unwrap();
    let b = run_sweep(&small_sweep(3)).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.rows.iter().all(|r| r.error.is_none()));
    let csv = a.to_csv();
    assert_eq!(
        csv.lines().next().unwrap(),
        "epsilon,resolvent_defect,resolvent_defect_mesh_error,resolvent_defect_flagged,\
         quasi_unitarity,quasi_unitarity_mesh_error,quasi_unitarity_flagged,error"
    );
    assert_eq!(csv.lines().count(), 4);
    for r in &a.rows {
        assert!(r.values[&Metric::ResolventDefect].value > 0.0);
    }
}

#[test]
fn bad_sweeps_are_refused() {
    let mut cfg = small_sweep(1);
    cfg.eps_list = vec![0.05, 0.1, 0.02];
    assert!(run_sweep(&cfg).is_err());
    let mut cfg = small_sweep(1);
    cfg.coarse_factor = 1.0;
    assert!(run_sweep(&cfg).is_err());
    let mut cfg = small_sweep(1);
    cfg.metrics.clear();
    assert!(run_sweep(&cfg).is_err());
    let mut cfg = small_sweep(1);
    cfg.eps_list = vec![0.9, 0.1, 0.05];
    assert!(run_sweep(&cfg).is_err());
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_deltaguide")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn cli_exit_codes() {
    let (code, out, _) = cli(&["validate", "--eps", "0.05"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["passage_width"].as_f64().unwrap() - 0.05f64.powf(4.0 / 3.0)).abs() < 1e-12);

    let (code, _, err) = cli(&["validate", "--eps", "0.5"]);
    assert_eq!(code, 2, "{err}");
    assert_eq!(cli(&["validate", "--alpha", "-1"]).0, 2);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"epsilon\": 0.1, \"no_such_key\": 1}").unwrap();
    assert_eq!(cli(&["validate", "--config", bad.to_str().unwrap()]).0, 2);
    std::fs::write(&bad, "{not json").unwrap();
    assert_eq!(cli(&["validate", "--config", bad.to_str().unwrap()]).0, 2);
    assert_eq!(cli(&["sweep"]).0, 2);

    // two rows cannot carry a fit: numerical failure
    let two = dir.path().join("two.json");
    std::fs::write(&two, r#"{"eps_list": [0.1, 0.08], "mesh_scale": 2.0, "cutoff": 50.0, "metrics": ["quasi_unitarity"]}"#)
        .unwrap();
    let report = dir.path().join("report.json");
    let (code, _, err) = cli(&["sweep", "--config", two.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert_eq!(code, 3, "{err}");
    assert!(report.exists() && report.with_extension("csv").exists());
}

#[test]
fn cli_band_table_and_suite() {
    let (code, out, _) = cli(&["kp-bands", "--gamma", "1"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("band_index,start,end\n1,"));
    assert_eq!(out.trim_end().lines().count(), 7);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("suite.json");
    std::fs::write(&cfg, r#"{"draws": 50, "max_dim": 8, "seed": 4}"#).unwrap();
    let (code, out, err) = cli(&["abstract-suite", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["draws"], 50);
}
