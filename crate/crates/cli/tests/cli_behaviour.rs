//! Exit-status and schema behaviour of the command-line driver.

use std::path::Path;

use evolve1d_cli::{execute, CliArgs};

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

fn family_toml() -> &'static str {
    r#"
kind = "static-points"

[window]
t0 = 0.0
t1 = 1.0

[grid]
half_width = 10.0
n = 129

[[points]]
x = -1.0
coupling = { kind = "piecewise", knots = [0.0, 1.0], values = [1.0, 2.0] }

[[points]]
x = 1.0
coupling = { kind = "constant", value = 2.0 }

[couplings]
lipschitz = 1.0
"#
}

fn run(config: &Path, out: &Path, tol: Vec<String>) -> i32 {
    execute(CliArgs {
        config: config.to_path_buf(),
        mode: None,
        output_dir: Some(out.to_path_buf()),
        seed: None,
        tol,
        verbose: false,
    })
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("family.toml"), family_toml());
    let config = dir.path().join("run.toml");
    write(
        &config,
        r#"
mode = "simulate"
spec = "family.toml"
seed = 1
surprise_key = true

[schedule]
s = 0.0
t = 1.0
n_slices = 4
"#,
    );
    assert_eq!(run(&config, &dir.path().join("out"), vec![]), 2);
}

#[test]
fn unknown_spec_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("family.toml"),
        &family_toml().replace("[couplings]", "mystery = 1\n[couplings]"),
    );
    let config = dir.path().join("run.toml");
    write(
        &config,
        r#"
mode = "simulate"
spec = "family.toml"
seed = 1

[schedule]
s = 0.0
t = 1.0
n_slices = 4
"#,
    );
    assert_eq!(run(&config, &dir.path().join("out"), vec![]), 2);
}

#[test]
fn schedule_outside_family_window_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("family.toml"), family_toml());
    let config = dir.path().join("run.toml");
    write(
        &config,
        r#"
mode = "simulate"
spec = "family.toml"
seed = 1

[schedule]
s = 0.0
t = 3.0
n_slices = 4
"#,
    );
    assert_eq!(run(&config, &dir.path().join("out"), vec![]), 2);
}

#[test]
fn unknown_tolerance_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("family.toml"), family_toml());
    let config = dir.path().join("run.toml");
    write(
        &config,
        r#"
mode = "verify"
spec = "family.toml"
seed = 1

[schedule]
s = 0.0
t = 1.0
n_slices = 4
"#,
    );
    assert_eq!(
        run(
            &config,
            &dir.path().join("out"),
            vec!["nonsense=1e-3".into()]
        ),
        2
    );
}

#[test]
fn frames_mode_on_static_family_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("family.toml"), family_toml());
    let config = dir.path().join("run.toml");
    write(
        &config,
        r#"
mode = "frames"
spec = "family.toml"
seed = 1

[schedule]
s = 0.0
t = 1.0
n_slices = 4
"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&config, &out, vec![]), 3);
    let err_text = std::fs::read_to_string(out.join("error.txt")).unwrap();
    assert!(err_text.contains("numeric failure"));
}

#[test]
fn impossible_tolerance_turns_verify_into_diag_fail() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("family.toml"), family_toml());
    let config = dir.path().join("run.toml");
    write(
        &config,
        r#"
mode = "verify"
spec = "family.toml"
seed = 1

[schedule]
s = 0.0
t = 1.0
n_slices = 8

[verify]
form_trials = 4
pair_samples = 2
stability_samples = 8
equivalence_n = 34
"#,
    );
    let out = dir.path().join("out");
    // unsatisfiable drift bound forces a FAIL row and exit 4
    assert_eq!(run(&config, &out, vec!["unitarity=1e-30".into()]), 4);
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("[FAIL] unitarity.norm-drift"));
}

#[test]
fn simulate_final_state_feeds_back_as_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("family.toml"), family_toml());
    let config = dir.path().join("run.toml");
    write(
        &config,
        r#"
mode = "simulate"
spec = "family.toml"
seed = 1

[schedule]
s = 0.0
t = 0.5
n_slices = 8

[initial_state]
kind = "gaussian"
center = 0.0
width = 1.0
momentum = 0.5
"#,
    );
    let first_out = dir.path().join("leg1");
    assert_eq!(run(&config, &first_out, vec![]), 0);

    // feed the dumped state into a second leg
    std::fs::copy(
        first_out.join("final_state.csv"),
        dir.path().join("state.csv"),
    )
    .unwrap();
    let config2 = dir.path().join("run2.toml");
    write(
        &config2,
        r#"
mode = "simulate"
spec = "family.toml"
seed = 1

[schedule]
s = 0.5
t = 1.0
n_slices = 8

[initial_state]
kind = "file"
path = "state.csv"
"#,
    );
    let second_out = dir.path().join("leg2");
    assert_eq!(run(&config2, &second_out, vec![]), 0);

    let norms = std::fs::read_to_string(second_out.join("norms.csv")).unwrap();
    let last = norms.lines().last().unwrap();
    let norm: f64 = last.split(',').nth(2).unwrap().parse().unwrap();
    assert!(
        (norm - 1.0).abs() < 1e-9,
        "norm after two-leg evolution drifted to {norm}"
    );
}
