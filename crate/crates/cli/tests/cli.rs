use std::path::Path;
use std::process::{Command, Output};

fn demailly(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_demailly"))
        .args(args)
        .current_dir(dir)
        .env("DEMAILLY_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn ample_run_succeeds_and_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = demailly(&["run", "--preset", "ample_sum", "--n", "16", "--snapshots", "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("outcome: Success"));
    for f in ["config.txt", "records.csv", "outcome.txt"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let snaps = std::fs::read_dir(out.join("snapshots")).unwrap().count();
    assert!(snaps >= 2);
    let outcome = std::fs::read_to_string(out.join("outcome.txt")).unwrap();
    assert!(outcome.contains("final_min_curvature_eigenvalue"));
}

#[test]
fn nonample_run_exits_destabilized() {
    let tmp = tempfile::tempdir().unwrap();
    let o = demailly(&["run", "--preset", "nonample_sum", "--n", "8"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let s = stdout(&o);
    assert!(s.contains("outcome: Destabilized"));
    assert!(s.contains("rank_pi: 1"));
}

#[test]
fn records_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "3")] {
        let out = tmp.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_demailly"))
            .args(["run", "--preset", "extension", "--n", "16", "--out", out.to_str().unwrap()])
            .env("DEMAILLY_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        csv.push(std::fs::read(out.join("records.csv")).unwrap());
    }
    assert_eq!(csv[0], csv[1]);
}

#[test]
fn config_file_and_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("scenario.txt");
    std::fs::write(&cfg, "# rank two constant model\npreset = constant_model\nrank = 2\nn = 32\nseed = 4\n").unwrap();
    let out = tmp.path().join("o");
    let o = demailly(
        &["run", "--config", cfg.to_str().unwrap(), "--n", "8", "--seed", "9", "--out", out.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let written = std::fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(written.contains("n = 8"), "{written}");
    assert!(written.contains("seed = 9"), "{written}");
    assert!(!out.join("snapshots").exists());
}

#[test]
fn verify_and_oracle_pass_on_diagonal_data() {
    let tmp = tempfile::tempdir().unwrap();
    let o = demailly(&["verify", "--preset", "constant_model", "--n", "16"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = demailly(&["oracle", "--preset", "ample_sum", "--n", "16"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));
}

#[test]
fn oracle_rejects_off_diagonal_data() {
    let tmp = tempfile::tempdir().unwrap();
    let o = demailly(&["oracle", "--preset", "extension", "--n", "8"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_configs_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.txt");
    std::fs::write(&cfg, "preset = ample_sum\nbogus = 3\n").unwrap();
    let o = demailly(&["run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let o = demailly(&["run", "--preset", "ample_sum", "--n", "7"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let o = demailly(&["run", "--preset", "no_such_preset"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}
