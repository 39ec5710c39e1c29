use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hagedorn_cli::config::parse;
use serde_json::Value;
use tempfile::TempDir;

const HARMONIC: &str = r#"
[potential]
kind = "harmonic"

[initial]
a = [1.0]
eta = [0.0]
coefficients = [
  { j = [0], re = 0.7071067811865476 },
  { j = [1], re = 0.7071067811865476 },
]

[run]
hbar = [0.1, 0.05]
g = 0.4
times = [1.5707963267948966, 3.141592653589793]
b = [0.5]

[grid]
center = [0.0]
half_width = [8.0]
points = 1024
dt = 1e-4
"#;

const QUARTIC: &str = r#"
[potential]
kind = "polynomial"
coefficients = [0.0, 0.0, 0.5, 0.0, 0.1]

[initial]
a = [1.0]
eta = [0.0]

[run]
hbar = [0.2, 0.1]
g = 0.4
t_end = 0.5
b = [0.25, 0.5, 1.0]

[grid]
center = [0.5]
half_width = [8.0]
points = 512
dt = 1e-4
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hagedorn"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Data rows of a csv artifact, skipping the comment line and header.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn harmonic_propagation_matches_the_reference() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "h.toml", HARMONIC);
    let out = tmp.path().join("out");
    let o = run("propagate", &cfg, &out, &["--jobs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&out.join("runs.csv"));
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let err: f64 = r[4].parse().unwrap();
        assert!(err < 1e-6, "{r:?}");
        assert!(r[7].is_empty(), "wall time present without --timing");
    }
    for h in ["0.1", "0.05"] {
        let dir = out.join(format!("hbar_{h}"));
        for f in ["summary.json", "hierarchy.json", "psi_0.json", "psi_0.bin", "psi_1.json", "psi_1.bin"] {
            assert!(dir.join(f).exists(), "missing {h}/{f}");
        }
        let s = json(&dir.join("summary.json"));
        assert_eq!(s["schema_version"], 1);
        assert_eq!(s["sparsity_holds"], true);
        assert!(s["max_cond1_residual"].as_f64().unwrap() < 1e-10);
    }
    assert!(out.join("trajectory.json").exists());
}

#[test]
fn outputs_are_deterministic_across_job_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "q.toml", QUARTIC);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run("propagate", &cfg, &a, &["--jobs", "1"]).status.success());
    assert!(run("propagate", &cfg, &b, &["--jobs", "3"]).status.success());
    for f in ["runs.csv", "summary.json", "trajectory.json", "hbar_0.1/hierarchy.json", "hbar_0.2/psi_0.bin"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn timing_flag_adds_wall_time() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "q.toml", &QUARTIC.replace("[0.2, 0.1]", "[0.2]"));
    let out = tmp.path().join("out");
    assert!(run("propagate", &cfg, &out, &["--timing"]).status.success());
    let rows = csv_rows(&out.join("runs.csv"));
    assert!(rows.iter().all(|r| r[7].parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn config_errors_exit_with_code_two_and_name_the_field() {
    let cases = [
        (HARMONIC.replace("g = 0.4", "g = 0.4\nbogus = 1"), "bogus"),
        (HARMONIC.replace("hbar = [0.1, 0.05]", "hbar = [1.5]"), "run.hbar"),
        (HARMONIC.replace("re = 0.7071067811865476 },\n]", "re = 0.5 },\n]"), "initial.coefficients"),
        (HARMONIC.replace("kind = \"harmonic\"", "kind = \"cubic\""), "potential"),
        (HARMONIC.replace("g = 0.4\n", ""), "run.g"),
        (HARMONIC.replace("eta = [0.0]", "eta = [0.0]\na_re = [2.0]"), "initial.a_re"),
        (HARMONIC.replace("points = 1024", "points = 1000"), "grid.points"),
    ];
    let tmp = TempDir::new().unwrap();
    for (i, (text, field)) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("bad{i}.toml"), text);
        let o = run("propagate", &cfg, &tmp.path().join(format!("out{i}")), &[]);
        assert_eq!(o.status.code(), Some(2), "case {i}: {}", stderr(&o));
        assert!(stderr(&o).contains(field), "case {i}: expected `{field}` in {}", stderr(&o));
    }
}

#[test]
fn missing_config_file_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let o = run("propagate", &tmp.path().join("absent.toml"), &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn unstable_reference_step_is_a_numerical_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "cfl.toml", &HARMONIC.replace("dt = 1e-4", "dt = 0.5"));
    let o = run("propagate", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("hbar"));
}

#[test]
fn tail_class_state_reports_its_truncation() {
    let text = r#"
[potential]
kind = "polynomial"
coefficients = [0.0, 0.0, 0.5, 0.0, 0.1]

[initial]
a = [1.0]
eta = [0.0]
tail = { k = 1.0, nu = 0.5 }
coefficients = [
  { j = [0], re = 0.9535628414995635 },
  { j = [1], re = 0.28720760855422117 },
  { j = [2], re = 0.08650526931367687 },
  { j = [3], re = 0.026054886417185712 },
  { j = [4], re = 0.007847580980886188 },
  { j = [5], re = 0.002363645968955201 },
  { j = [6], re = 0.0007119164848589155 },
]

[run]
hbar = [0.1]
g = 0.4
t_end = 0.5
oracle = false
"#;
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tail.toml", text);
    let out = tmp.path().join("out");
    let o = run("propagate", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&out.join("hbar_0.1/summary.json"));
    let tt = &s["tail_truncation"];
    assert_eq!(s["l"], 4);
    assert_eq!(tt["j_cut"], 2);
    let tail = tt["tail"].as_f64().unwrap();
    let want = (0.026054886417185712f64.powi(2)
        + 0.007847580980886188f64.powi(2)
        + 0.002363645968955201f64.powi(2)
        + 0.0007119164848589155f64.powi(2))
    .sqrt();
    assert!((tail - want).abs() < 1e-14, "{tail} vs {want}");
    assert!((tt["bound"].as_f64().unwrap() - (-2.0f64).exp()).abs() < 1e-15);
    assert_eq!(tt["within_bound"], true);

    let bad = text.replace("re = 0.28720760855422117", "re = 0.4");
    let cfg = write_config(tmp.path(), "bad.toml", &bad);
    let o = run("propagate", &cfg, &tmp.path().join("bad"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("initial"));
}

#[test]
fn free_scattering_is_the_identity() {
    let text = r#"
[potential]
kind = "free"

[initial]
a = [0.0]
eta = [1.0]
coefficients = [
  { j = [0], re = 0.6 },
  { j = [3], re = 0.0, im = 0.8 },
]

[run]
hbar = [0.1, 0.05]
g = 0.3

[scatter]
tol = 1e-8
"#;
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "free.toml", text);
    let out = tmp.path().join("out");
    let o = run("scatter", &cfg, &out, &["--jobs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("caveat") || stderr(&o).contains("caveat"));
    for h in ["0.1", "0.05"] {
        let r = json(&out.join(format!("hbar_{h}/report.json")));
        assert!(r["unitarity_deviation"].as_f64().unwrap() < 1e-12);
        assert_eq!(r["low_dimension_caveat"], true);
        let entries = r["out_coefficients"]["entries"].as_array().unwrap();
        for e in entries {
            let j = e[0][0].as_u64().unwrap();
            let (re, im) = (e[1].as_f64().unwrap(), e[2].as_f64().unwrap());
            let (want_re, want_im) = match j {
                0 => (0.6, 0.0),
                3 => (0.0, 0.8),
                _ => (0.0, 0.0),
            };
            assert!((re - want_re).abs() < 1e-12 && (im - want_im).abs() < 1e-12, "j = {j}: {re} {im}");
        }
        let inc = &r["incoming"];
        let out_state = &r["outgoing"];
        for key in ["a", "eta", "a_re", "a_im", "b_re", "b_im"] {
            let x = inc[key][0].as_f64().unwrap();
            let y = out_state[key][0].as_f64().unwrap();
            assert!((x - y).abs() < 1e-12, "{key}: {x} vs {y}");
        }
    }
    assert_eq!(csv_rows(&out.join("scatter.csv")).len(), 2);
}

#[test]
fn scatter_requires_its_section() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "h.toml", HARMONIC);
    let o = run("scatter", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scatter"));
}

#[test]
fn ehrenfest_reports_the_admissible_window() {
    let text = r#"
[potential]
kind = "double_well"
growth = { m = 16.0, tau = 0.1 }

[initial]
a = [0.0]
eta = [0.0]

[run]
hbar = [0.1, 0.05]
g = 0.3

[grid]
center = [0.0]
half_width = [8.0]
points = 512
dt = 1e-4

[ehrenfest]
t_prime = 0.1
tau = 0.1
v = 1.0
"#;
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "dw.toml", text);
    let out = tmp.path().join("out");
    let o = run("ehrenfest", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text_out = stdout(&o);
    assert!(text_out.contains("kappa window (6.2"), "{text_out}");
    let rows = csv_rows(&out.join("ehrenfest.csv"));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let hbar: f64 = r[0].parse().unwrap();
        let t_end: f64 = r[1].parse().unwrap();
        let kappa: f64 = r[3].parse().unwrap();
        let (lo, hi): (f64, f64) = (r[4].parse().unwrap(), r[5].parse().unwrap());
        let g: f64 = r[6].parse().unwrap();
        assert!((t_end - 0.1 * (1.0 / hbar).ln()).abs() < 1e-10);
        assert!(lo < kappa && kappa < hi);
        assert!((g - hbar.powf(kappa * 0.1)).abs() < 1e-10);
        assert!(r[8].parse::<f64>().unwrap() < 5e-2);
    }

    let wide = text.replace("t_prime = 0.1", "t_prime = 0.5");
    let cfg = write_config(tmp.path(), "wide.toml", &wide);
    let o = run("ehrenfest", &cfg, &tmp.path().join("wide"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("ehrenfest.t_prime"));
}

#[test]
fn localization_mass_decreases_with_radius() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "q.toml", QUARTIC);
    let out = tmp.path().join("out");
    let o = run("localize", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&out.join("localize.csv"));
    assert_eq!(rows.len(), 6);
    for chunk in rows.chunks(3) {
        let approx: Vec<f64> = chunk.iter().map(|r| r[4].parse().unwrap()).collect();
        let oracle: Vec<f64> = chunk.iter().map(|r| r[5].parse().unwrap()).collect();
        assert!(approx.windows(2).all(|w| w[1] <= w[0]), "{approx:?}");
        assert!(oracle.windows(2).all(|w| w[1] <= w[0]), "{oracle:?}");
    }
    let at = |h: &str, b: &str| -> f64 {
        rows.iter().find(|r| r[0] == h && r[3] == b).unwrap()[5].parse().unwrap()
    };
    assert!(at("0.1", "0.5") < at("0.2", "0.5"));
}

#[test]
fn validate_passes_and_detects_mutations() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("val");
    let o = bin().arg("validate").arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("all 31 invariants passed"));
    let report = json(&out.join("validate.json"));
    assert!(report.to_string().contains("ladder_commutators"));

    let o = bin().args(["validate", "--mutate-position-sign"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));

    let o = bin().args(["validate", "--tighten", "100"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn parse_reports_line_numbers() {
    let text = HARMONIC.replace("g = 0.4", "g = \"big\"");
    let err = parse(&text).unwrap_err();
    let line = text.lines().position(|l| l.starts_with("g = ")).unwrap() + 1;
    assert_eq!(err.line, Some(line), "{err}");

    let text = HARMONIC.replace("hbar = [0.1, 0.05]", "hbar = [0.1, -0.05]");
    let err = parse(&text).unwrap_err();
    assert_eq!(err.field, "run.hbar");
    let line = text.lines().position(|l| l.starts_with("hbar = ")).unwrap() + 1;
    assert_eq!(err.line, Some(line));
}

#[test]
fn parse_defaults() {
    let cfg = parse(QUARTIC).unwrap();
    assert_eq!(cfg.run.hbars, vec![0.2, 0.1]);
    assert_eq!(cfg.run.flow_tol, 1e-12);
    assert_eq!(cfg.run.l_max, 20);
    assert!(cfg.run.oracle);
    assert_eq!(cfg.initial.entries.len(), 1);
    assert!(cfg.scatter.is_none() && cfg.ehrenfest.is_none());
    assert_eq!(cfg.run.times, vec![0.5]);
}
