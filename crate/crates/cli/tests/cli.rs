use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sbcal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbcal"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn draws(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn sd(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

#[test]
fn runs_without_a_seed_are_rejected() {
    let out = sbcal(&["sbc", "-L", "10", "-S", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("seed"), "{}", stderr(&out));
}

#[test]
fn unknown_experiment_lists_the_valid_names() {
    let out = sbcal(&["experiment", "nine-schools", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    for name in [
        "simple-gaussian",
        "eight-schools",
        "normal-normal-figures",
        "hierarchical-posterior-trend",
    ] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn unknown_config_keys_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\nreplicashuns = 5\n").unwrap();
    let out = sbcal(&["sbc", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

/// Parses the `mean = ..` and `sd = ..` lines printed by `analytic`.
fn law(args: &[&str]) -> (f64, f64) {
    let out = stdout(&sbcal(args));
    let field = |k: &str| -> f64 {
        out.lines()
            .find_map(|l| l.strip_prefix(k))
            .unwrap_or_else(|| panic!("{out}"))
            .trim()
            .parse()
            .unwrap()
    };
    (field("mean = "), field("sd = "))
}

fn close(a: (f64, f64), b: (f64, f64), tol: f64) -> bool {
    (a.0 - b.0).abs() < tol && (a.1 - b.1).abs() < tol
}

#[test]
fn analytic_values() {
    assert!(close(
        law(&["analytic", "zlaw", "--sigma", "1", "--y", "1"]),
        (0.3536, 0.8660),
        5e-5
    ));
    assert!(close(
        law(&["analytic", "posterior", "--sigma", "1", "--y", "0"]),
        (0.0, std::f64::consts::FRAC_1_SQRT_2),
        5e-5
    ));
    assert!(close(
        law(&["analytic", "recal-limit", "--sigma", "1", "--y", "1"]),
        (0.75, 0.6124),
        5e-5
    ));
    assert!(close(
        law(&["analytic", "conjugate", "--y", "-1,1,0.5,0.5"]),
        (0.2, 0.4472),
        5e-5
    ));
}

#[test]
fn identity_and_tripling_adjustments() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let input = d.join("draws.csv");
    fs::write(&input, "draw_1,draw_2,draw_3,draw_4\n1,2,3,6\n-1,0,0,1\n").unwrap();
    for (name, body) in [
        (
            "identity",
            "kind = \"scale_only\"\nscale = 1.0\nshift_coefficient = 0.0\n",
        ),
        (
            "triple",
            "kind = \"scale_only\"\nscale = 3.0\nshift_coefficient = 0.0\n",
        ),
    ] {
        let adj = d.join(format!("{name}.toml"));
        fs::write(&adj, body).unwrap();
        let out_dir = d.join(name);
        let out = sbcal(&[
            "apply",
            "--adjustment",
            adj.to_str().unwrap(),
            "--draws-file",
            input.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let before = draws(&input);
        let after = draws(&out_dir.join("adjusted_draws.csv"));
        for (b, a) in before.iter().zip(&after) {
            if name == "identity" {
                assert_eq!(a, b);
            } else {
                assert!((sd(a) - 3.0 * sd(b)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn mismatched_adjustment_warns_but_applies() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let fit = d.join("fit");
    let out = sbcal(&[
        "calibrate",
        "--model",
        "conjugate-normal",
        "--narrow",
        "3",
        "-L",
        "100",
        "-S",
        "100",
        "--seed",
        "3",
        "--out",
        fit.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let applied = d.join("applied");
    let out = sbcal(&[
        "apply",
        "--adjustment",
        fit.join("adjustment.toml").to_str().unwrap(),
        "--model",
        "normal-normal",
        "--y-d",
        "1",
        "--seed",
        "3",
        "-S",
        "100",
        "--out",
        applied.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stderr(&out).contains("warning: adjustment was estimated for"),
        "{}",
        stderr(&out)
    );
    assert!(applied.join("adjusted_draws.csv").exists());
}

#[test]
fn report_regenerates_an_sbc_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = d.join("run");
    let cfg = d.join("run.toml");
    fs::write(
        &cfg,
        "model = \"normal-normal\"\nL = 60\nS = 50\nseed = 9\nwrite_draws = true\n",
    )
    .unwrap();
    let out = sbcal(&[
        "sbc",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = d.join("report");
    let out = sbcal(&[
        "report",
        "--input",
        run.join("replications").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for file in [
        "diagnostics.csv",
        "summary.csv",
        "quantile_ecdf.csv",
        "z_histogram.csv",
    ] {
        assert_eq!(
            fs::read(run.join(file)).unwrap(),
            fs::read(report.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn negative_observations_parse() {
    let out = sbcal(&["analytic", "conjugate", "--y", "-1,-2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = sbcal(&[
        "sbc",
        "--model",
        "eight-schools",
        "--sampler",
        "vi",
        "--mode",
        "posterior",
        "--y-d",
        "-3,5,-1,7,2,0,4,-6",
        "-L",
        "5",
        "-S",
        "20",
        "--seed",
        "2",
        "--out",
        tempfile::tempdir().unwrap().path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
}
