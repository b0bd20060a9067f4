use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use odmr_cli::{ArgminReport, FitReport};
use odmr_core::analysis::StepReport;
use odmr_core::io_formats::{load_json, parse_sweep, write_sweep, RunManifest, SweepRecord};
use odmr_core::lineshape::linspace;
use tempfile::TempDir;

fn odmr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_odmr")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn out(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

fn manifest(dir: &str) -> RunManifest {
    RunManifest::load(&PathBuf::from(dir).join("manifest.json")).unwrap()
}

const FAST_LOCKIN: &str =
    r#""lockin": { "mod_freq_hz": 1000.0, "sample_rate_hz": 20000.0, "time_constant_s": 0.01, "output_rate_hz": 10.0 }"#;

#[test]
fn help_lists_config_keys() {
    for (cmd, key) in [
        ("spectrum", "spectrum.field_points"),
        ("simulate", "sweep.n_points"),
        ("fit", "detector.transimpedance_v_per_a"),
        ("map", "map.source"),
        ("steps", "schedule.interval_s"),
    ] {
        let o = odmr(&[cmd, "--help"]);
        assert!(o.status.success());
        let text = String::from_utf8(o.stdout).unwrap();
        assert!(text.contains("Config keys read:"), "{cmd}");
        for k in odmr_cli::keys_for(cmd) {
            assert!(text.contains(&k), "{cmd} help lacks {k}");
        }
        assert!(text.contains(key), "{cmd}");
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(odmr(&[]).status.code(), Some(2));
    assert_eq!(odmr(&["bogus"]).status.code(), Some(2));
    assert_eq!(odmr(&["fit"]).status.code(), Some(2));

    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{ "lockin": { "time_constant_s": -1 } }"#);
    let o = odmr(&["steps", "--config", &cfg, "--out", &out(dir.path(), "o")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lockin.time_constant_s"));

    let cfg = write_config(dir.path(), "typo.json", r#"{ "lockin": { "tau": 1 } }"#);
    let o = odmr(&["steps", "--config", &cfg, "--out", &out(dir.path(), "o")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lockin.tau"));
}

#[test]
fn malformed_sweep_reports_line() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("s.csv");
    fs::write(&p, "frequency_hz,lockin_v,dc_v\n1e8,1e-3,1.0\n1.1e8,abc,1.0\n").unwrap();
    let o = odmr(&["fit", "--sweep", p.to_str().unwrap(), "--out", &out(dir.path(), "o")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn flat_sweep_is_a_domain_error() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("s.csv");
    let f = linspace(9e7, 1.1e8, 41);
    let rec = SweepRecord {
        lockin_v: (0..f.len()).map(|i| 1e-6 * ((i * 7919 % 23) as f64 / 23.0 - 0.5)).collect(),
        dc_v: vec![Some(1.0); f.len()],
        frequency_hz: f,
    };
    write_sweep(&p, &rec).unwrap();
    let o = odmr(&["fit", "--sweep", p.to_str().unwrap(), "--out", &out(dir.path(), "o")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no peak"));
}

#[test]
fn spectrum_shows_crossing_and_hyperfine_flag() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{ "spectrum": { "field_start_t": 1.0e-3, "field_stop_t": 1.5e-3, "field_points": 11, "f_points": 60 } }"#,
    );
    let a = out(dir.path(), "a");
    assert!(odmr(&["spectrum", "--config", &cfg, "--out", &a]).status.success());
    let text = fs::read_to_string(PathBuf::from(&a).join("transitions.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let freq = |label: &str| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| r[1] == label)
            .map(|r| (r[0].parse().unwrap(), r[4].parse().unwrap()))
            .collect()
    };
    let gap: Vec<(f64, f64)> = freq("nu1").iter().zip(freq("dark")).map(|(n, d)| (n.0, n.1 - d.1)).collect();
    let flip = gap.windows(2).find(|w| w[0].1 > 0.0 && w[1].1 <= 0.0).unwrap();
    assert!(flip[0].0 <= 1.2483e-3 && flip[1].0 >= 1.2483e-3, "{flip:?}");
    assert!(text.contains("nu2_hf_plus"));

    let b = out(dir.path(), "b");
    assert!(odmr(&["spectrum", "--config", &cfg, "--out", &b, "--no-hyperfine"]).status.success());
    let text = fs::read_to_string(PathBuf::from(&b).join("transitions.csv")).unwrap();
    assert!(!text.contains("_hf_"));
    assert_eq!(text.lines().count(), 1 + 11 * 5);

    let c = out(dir.path(), "c");
    assert!(odmr(&["spectrum", "--config", &cfg, "--out", &c]).status.success());
    assert_eq!(manifest(&a).outputs, manifest(&c).outputs);
}

#[test]
fn simulate_then_fit_recovers_scene() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &format!("{{ {FAST_LOCKIN} }}"));
    let sim = out(dir.path(), "sim");
    assert!(odmr(&["simulate", "--config", &cfg, "--out", &sim, "--seed", "3", "--svg"]).status.success());
    let sweep = PathBuf::from(&sim).join("sweep.csv");
    assert!(PathBuf::from(&sim).join("sweep.svg").exists());
    let fit_dir = out(dir.path(), "fit");
    let o = odmr(&["fit", "--config", &cfg, "--sweep", sweep.to_str().unwrap(), "--out", &fit_dir]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: FitReport = load_json(&PathBuf::from(&fit_dir).join("fit.json")).unwrap();

    // Quenched preset at 0.4 W optical and 1 W RF.
    let fwhm = 4e6 * 3f64.sqrt();
    let contrast = 0.03 * (1.0 / 1.5) * 0.5;
    assert!((report.fit.fwhm_hz / fwhm - 1.0).abs() < 0.02);
    assert!((report.contrast.unwrap() / contrast - 1.0).abs() < 0.05);
    assert!((report.rate_hz.unwrap() / (1.477e14 * 0.4) - 1.0).abs() < 1e-3);
    assert!((report.eta_t_rthz.unwrap() * 1e9 - 3.5).abs() < 0.35);
    assert!(report.fit.fwhm_ci_hz > 0.0);
}

#[test]
fn fit_without_dc_omits_contrast() {
    let dir = TempDir::new().unwrap();
    let f = linspace(9e7, 1.06e8, 81);
    let text = std::iter::once("frequency_hz,lockin_v,dc_v".to_owned())
        .chain(f.iter().map(|&x| {
            let u = (x - 9.8e7) / 3e6;
            format!("{x:e},{:e},", 1e-3 / (1.0 + u * u))
        }))
        .collect::<Vec<_>>()
        .join("\n");
    let p = dir.path().join("s.csv");
    fs::write(&p, text).unwrap();
    assert!(parse_sweep(&fs::read_to_string(&p).unwrap()).unwrap().dc_complete().is_none());
    let o_dir = out(dir.path(), "o");
    let o = odmr(&["fit", "--sweep", p.to_str().unwrap(), "--out", &o_dir, "--no-hyperfine"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("dc_v"));
    let report: FitReport = load_json(&PathBuf::from(&o_dir).join("fit.json")).unwrap();
    assert!(report.contrast.is_none() && report.eta_t_rthz.is_none());
    assert!((report.fit.fwhm_hz - 6e6).abs() < 1.0);
}

fn map_config(dir: &Path, name: &str, p_opt_points: usize, p_rf_points: usize) -> String {
    write_config(
        dir,
        name,
        &format!(
            r#"{{ "field": {{ "bz_t": 5e-3 }}, "map": {{ "source": "model",
                "p_opt_start_w": 0.1, "p_opt_stop_w": 0.4, "p_opt_points": {p_opt_points},
                "p_rf_start_w": 0.2, "p_rf_stop_w": 1.8, "p_rf_points": {p_rf_points} }} }}"#
        ),
    )
}

#[test]
fn map_single_cell_and_refinement() {
    let dir = TempDir::new().unwrap();
    let one = write_config(
        dir.path(),
        "one.json",
        r#"{ "map": { "source": "model", "p_opt_start_w": 0.3, "p_opt_stop_w": 0.3, "p_opt_points": 1,
             "p_rf_start_w": 0.7, "p_rf_stop_w": 0.7, "p_rf_points": 1 } }"#,
    );
    let o1 = out(dir.path(), "one");
    assert!(odmr(&["map", "--config", &one, "--out", &o1]).status.success());
    let r: ArgminReport = load_json(&PathBuf::from(&o1).join("argmin.json")).unwrap();
    assert_eq!((r.i_opt, r.i_rf, r.best.p_opt_w, r.best.p_rf_w), (0, 0, 0.3, 0.7));

    let coarse = map_config(dir.path(), "coarse.json", 4, 5);
    let fine = map_config(dir.path(), "fine.json", 7, 9);
    let (oc, of) = (out(dir.path(), "coarse"), out(dir.path(), "fine"));
    assert!(odmr(&["map", "--config", &coarse, "--out", &oc, "--svg"]).status.success());
    assert!(odmr(&["map", "--config", &fine, "--out", &of]).status.success());
    let rc: ArgminReport = load_json(&PathBuf::from(&oc).join("argmin.json")).unwrap();
    let rf: ArgminReport = load_json(&PathBuf::from(&of).join("argmin.json")).unwrap();
    assert!(rf.best.eta_t_rthz <= rc.best.eta_t_rthz * (1.0 + 1e-9));
    let csv = fs::read_to_string(PathBuf::from(&oc).join("map.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 20);
}

#[test]
fn map_is_independent_of_thread_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "m.json",
        &format!(
            r#"{{ {FAST_LOCKIN}, "sweep": {{ "n_points": 41 }}, "map": {{ "p_opt_points": 3, "p_rf_points": 4 }} }}"#
        ),
    );
    let run = |threads: &str, name: &str| {
        let o = out(dir.path(), name);
        let status = Command::new(env!("CARGO_BIN_EXE_odmr"))
            .args(["map", "--config", &cfg, "--out", &o, "--seed", "11"])
            .env("ODMR_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        manifest(&o).outputs
    };
    assert_eq!(run("1", "t1"), run("4", "t4"));
    let bad = Command::new(env!("CARGO_BIN_EXE_odmr"))
        .args(["map", "--config", &cfg, "--out", &out(dir.path(), "t0")])
        .env("ODMR_THREADS", "zero")
        .status()
        .unwrap();
    assert_eq!(bad.code(), Some(2));
}

fn steps_config(dir: &Path, name: &str, noise: &str) -> String {
    write_config(
        dir,
        name,
        &format!(
            r#"{{ "lockin": {{ "mod_freq_hz": 100.0, "sample_rate_hz": 2000.0, "time_constant_s": 0.5 }},
                 "schedule": {{ "n_steps": 3, "interval_s": 120.0 }}, "noise": {noise} }}"#
        ),
    )
}

#[test]
fn steps_without_noise_report_zero_sigma() {
    let dir = TempDir::new().unwrap();
    let cfg = steps_config(dir.path(), "c.json", r#"{ "shot_noise": false, "field_noise_asd_t": 0.0 }"#);
    let o = out(dir.path(), "o");
    assert!(odmr(&["steps", "--config", &cfg, "--out", &o, "--svg"]).status.success());
    let report: StepReport = load_json(&PathBuf::from(&o).join("steps.json")).unwrap();
    assert!(report.pooled_sigma_t < 1e-12, "{}", report.pooled_sigma_t);
    // Linearized discriminator: the cubic term of the Lorentzian leaves a
    // relative error of order (shift / FWHM)^2 ~ 1e-5.
    for d in report.step_differences() {
        assert!((d / 500e-9 - 1.0).abs() < 1e-4, "{d}");
    }
    assert!(PathBuf::from(&o).join("tracking.svg").exists());
}

#[test]
fn steps_sigma_is_stable_across_seeds() {
    let dir = TempDir::new().unwrap();
    let cfg = steps_config(dir.path(), "c.json", r#"{ "field_step_sigma_t": 70e-9 }"#);
    let sigma = |seed: &str| {
        let o = out(dir.path(), seed);
        assert!(odmr(&["steps", "--config", &cfg, "--out", &o, "--seed", seed]).status.success());
        load_json::<StepReport>(&PathBuf::from(&o).join("steps.json")).unwrap().pooled_sigma_t
    };
    let (a, b) = (sigma("1"), sigma("2"));
    assert!(a != b && (a / b - 1.0).abs() < 0.2, "{a} {b}");
}

#[test]
fn rerun_replaces_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = steps_config(dir.path(), "c.json", r#"{ "shot_noise": true }"#);
    let o = out(dir.path(), "o");
    assert!(odmr(&["steps", "--config", &cfg, "--out", &o]).status.success());
    let first = manifest(&o);
    assert!(odmr(&["steps", "--config", &cfg, "--out", &o]).status.success());
    let second = manifest(&o);
    assert_eq!(first.outputs, second.outputs);
    assert_eq!(first.seed, Some(0));
    second.verify(Path::new(&o)).unwrap();
}
