use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bslab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Data rows of a CSV written by the tool, header comments skipped.
fn rows(file: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(file)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

const HARMONIC_MODEL: &str = r#"
[model]
dimension = 1
potential = { kind = "constant", value = 0.0 }
birth = { kind = "constant", value = 0.0 }
death = { kind = "quadratic", c = 1.0 }
"#;

#[test]
fn spectrum_harmonic_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = bslab(&["spectrum", "--scenario", "harmonic", "--out", path(d)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let vals = rows(&a.join("eigenvalues.csv"));
    let l0: f64 = vals[0][1].parse().unwrap();
    assert!((l0 - 0.5).abs() < 1e-3);
    for f in ["eigenvalues.csv", "eigenvectors.csv", "ground_state.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
        let text = fs::read_to_string(a.join(f)).unwrap();
        assert!(text.starts_with("# bslab version="), "{f}");
        assert!(text.lines().next().unwrap().contains("config_sha256="));
    }
}

#[test]
fn flat_model_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("flat.toml");
    fs::write(
        &cfg,
        r#"
[model]
dimension = 1
potential = { kind = "constant", value = 0.0 }
birth = { kind = "constant", value = 0.0 }
death = { kind = "constant", value = 0.0 }

[grid]
radius = 6.0
points = 121
"#,
    )
    .unwrap();
    let out = bslab(&[
        "spectrum",
        "--config",
        path(&cfg),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not discrete"), "{err}");
}

#[test]
fn critical_simulation_keeps_unit_mean() {
    let dir = tempfile::tempdir().unwrap();
    let out = bslab(&[
        "simulate",
        "--scenario",
        "critical",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0);
    for r in rows(&dir.path().join("mass_summary.csv")) {
        let mean: f64 = r[1].parse().unwrap();
        let se: f64 = r[2].parse().unwrap();
        assert!((mean - 1.0).abs() <= 3.0 * se, "{r:?}");
    }
}

#[test]
fn fk_matches_cameron_martin_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fk.toml");
    fs::write(
        &cfg,
        format!(
            "{HARMONIC_MODEL}\n[sim]\ndt = 0.002\nt_max = 1.0\nn_paths = 20000\nseed = 3\ntimes = [1.0]\n"
        ),
    )
    .unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert_eq!(
        code(&bslab(&["fk", "--config", path(&cfg), "--out", path(&a)])),
        0
    );
    assert_eq!(
        code(&bslab(&["fk", "--config", path(&cfg), "--out", path(&b)])),
        0
    );
    assert_eq!(
        code(&bslab(&[
            "fk",
            "--config",
            path(&cfg),
            "--out",
            path(&c),
            "--seed",
            "4"
        ])),
        0
    );
    let r = &rows(&a.join("fk.csv"))[0];
    let est: f64 = r[2].parse().unwrap();
    let se: f64 = r[3].parse().unwrap();
    let exact = 1f64.cosh().powf(-0.5);
    assert!((est - exact).abs() <= 3.0 * se, "{est} +- {se}");
    assert_eq!(
        fs::read(a.join("fk.csv")).unwrap(),
        fs::read(b.join("fk.csv")).unwrap()
    );
    assert_ne!(
        fs::read(a.join("fk.csv")).unwrap(),
        fs::read(c.join("fk.csv")).unwrap()
    );
}

#[test]
fn qsd_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        assert_eq!(
            code(&bslab(&["qsd", "--scenario", "harmonic", "--out", path(d)])),
            0
        );
    }
    for f in ["qsd_summary.csv", "qsd_particles.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn bundled_verification_scenarios_pass() {
    for name in ["harmonic", "ou-kappa"] {
        let dir = tempfile::tempdir().unwrap();
        let out = bslab(&["verify", "--scenario", name, "--out", path(dir.path())]);
        assert_eq!(
            code(&out),
            0,
            "{name}: {}",
            String::from_utf8_lossy(&out.stdout)
        );
        let summary = fs::read_to_string(dir.path().join("verify_summary.txt")).unwrap();
        assert!(
            summary.lines().skip(1).all(|l| l.contains("verdict=pass")),
            "{summary}"
        );
    }
}

#[test]
fn wrong_lambda0_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        format!(
            r#"{HARMONIC_MODEL}
[grid]
radius = 8.0
points = 401

[verify]
checks = ["gap-rate"]

[verify.gap_rate]
phi = {{ kind = "gaussian", amplitude = 1.0, center = [0.7], width = 0.5 }}
times = [1.0, 2.0, 3.0, 4.0]

[verify.tolerances]
lambda0_offset = 0.3
"#
        ),
    )
    .unwrap();
    let out = bslab(&["verify", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn capped_population_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("capped.toml");
    fs::write(
        &cfg,
        r#"
[model]
dimension = 1
potential = { kind = "quadratic", c = -1.0 }
birth = { kind = "constant", value = 3.0 }
death = { kind = "constant", value = 1.0 }

[grid]
radius = 7.0
points = 281

[sim]
dt = 0.01
t_max = 2.0
n_paths = 40
seed = 1
population_cap = 20
times = [2.0]

[verify]
checks = ["total-mass"]

[verify.total_mass]
x0 = [0.0]
times = [1.0, 2.0]
"#,
    )
    .unwrap();
    let out = bslab(&["verify", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("guard_violated=capped_fraction"),
        "{stdout}"
    );
}

fn bounds_config(dir: &Path, alpha: f64, c: &str) -> std::path::PathBuf {
    let cfg = dir.join(format!("bounds_{alpha}.toml"));
    fs::write(
        &cfg,
        format!(
            "{HARMONIC_MODEL}\n[bounds]\nbranch = \"ess2\"\nc = {c}\nc0 = [0.5, 1.0]\ngrowth_exponents = {{ alpha = {alpha:?}, beta = 2.0 }}\n"
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn bounds_sweep_follows_growth_clause() {
    let dir = tempfile::tempdir().unwrap();
    let ok = bounds_config(dir.path(), 1.0, "[10.0, 50.0]");
    let out = bslab(&["bounds", "--config", path(&ok), "--out", path(dir.path())]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert!(text.contains("admissible=true"));
    assert!(rows(&dir.path().join("bounds.csv"))
        .iter()
        .all(|r| r[4] == "converged"));

    let bad = bounds_config(dir.path(), 3.0, "[10.0, 50.0]");
    let out = bslab(&["bounds", "--config", path(&bad), "--out", path(dir.path())]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert!(text.contains("admissible=false"));
    assert!(rows(&dir.path().join("bounds.csv"))
        .iter()
        .all(|r| r[4] == "diverged"));

    let empty = bounds_config(dir.path(), 1.0, "[]");
    let out = bslab(&[
        "bounds",
        "--config",
        path(&empty),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&bslab(&["spectrum"])), 1);
    assert_eq!(code(&bslab(&["frobnicate"])), 1);
    assert_eq!(code(&bslab(&["spectrum", "--scenario", "nope"])), 1);
    let cfg = dir.path().join("typo.toml");
    fs::write(
        &cfg,
        format!("{HARMONIC_MODEL}\n[grid]\nradius = 8.0\npoints = 101\nmodez = 3\n"),
    )
    .unwrap();
    let out = bslab(&[
        "spectrum",
        "--config",
        path(&cfg),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("modez"));
    assert_eq!(code(&bslab(&["--help"])), 0);
}
