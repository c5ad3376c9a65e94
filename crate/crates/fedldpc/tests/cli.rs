use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fedldpc::formats::read_table;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedldpc")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

const SMALL_CODE: &str = "[code]\nn = 96\nseed = 4\n";

fn calibration_config(dir: &Path) -> String {
    let body = format!(
        "[run]\nseed = 3\n{SMALL_CODE}[calibration]\nsnr_points = [0.0, 2.0]\nq_points = [2, 4, 8]\nmin_error_bits = 50\nmax_frames = 300\n"
    );
    write(dir, "cal.toml", &body)
}

fn train_config(dir: &Path, table: &str, extra: &str) -> String {
    let body = format!(
        "[run]\nseed = 5\n{SMALL_CODE}[channel]\nsnr_db = 0.0\n[calibration]\ntable = \"{table}\"\n\
         [fl]\nclients = 3\nrounds = 6\nlocal_steps = 2\neta = 0.05\nbatch_size = 16\n\
         [dataset]\nper_class = 60\ndim = 4\nspread = 1.0\nseparation = 3.0\noffset = 0.0\n{extra}"
    );
    write(dir, "train.toml", &body)
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn usage_errors_exit_two() {
    let o = run(&["train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"));
    assert_eq!(run(&["validate", "nonsense"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--config", "/definitely/missing.toml"]).status.code(), Some(2));
}

#[test]
fn config_errors_are_one_line_listing_everything() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[fl]\neta = -1\nbogus = 1\n[run]\nmode = \"fast\"\n[nope]\n");
    let o = run(&["train", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    for needle in
        ["unknown section [nope]", "unknown key fl.bogus", "fl.eta must be positive", "run.mode must be one of"]
    {
        assert!(err.contains(needle), "{needle} missing from {err}");
    }
}

#[test]
fn calibrate_and_train_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cal = calibration_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = run(&["calibrate", "--config", &cal, "--threads", threads, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["calibration.csv", "calibration.sha256", "calibration_summary.txt", "config.toml"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let table = read_table(&String::from_utf8(read(&a.join("calibration.csv"))).unwrap(), "t").unwrap();
    assert_eq!((table.code_n, table.code_seed, table.entries.len()), (96, 4, 6));

    let table_path = a.join("calibration.csv").display().to_string();
    let cfg = train_config(dir.path(), &table_path, "");
    for mode in ["statistical", "physical"] {
        let (x, y) = (dir.path().join(format!("{mode}1")), dir.path().join(format!("{mode}4")));
        for (out, threads) in [(&x, "1"), (&y, "4")] {
            let o =
                run(&["train", "--config", &cfg, "--mode", mode, "--threads", threads, "--out", out.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        }
        for f in ["rounds.csv", "summary.json", "config.toml", "calibration.sha256"] {
            assert_eq!(read(&x.join(f)), read(&y.join(f)), "{mode} {f}");
        }
        let rounds = String::from_utf8(read(&x.join("rounds.csv"))).unwrap();
        assert_eq!(
            rounds.lines().next().unwrap(),
            "round,target_ber,q_r,measured_ber,mean_iters,energy_j,train_loss,test_acc"
        );
        assert_eq!(rounds.lines().count(), 7);
        let hash = String::from_utf8(read(&x.join("calibration.sha256"))).unwrap();
        assert_eq!(hash, String::from_utf8(read(&a.join("calibration.sha256"))).unwrap());
    }
}

#[test]
fn error_free_blobs_are_learned() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = train_config(dir.path(), "unused.csv", "");
    let out = dir.path().join("o");
    let o = run(&["train", "--config", &cfg, "--mode", "error_free", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&read(&out.join("summary.json"))).unwrap();
    assert!(summary["final_test_acc"].as_f64().unwrap() >= 0.99, "{summary}");
    assert!(summary["calibration_sha256"].is_null());
}

#[test]
fn heavy_errors_are_recorded_without_crashing() {
    let dir = tempfile::tempdir().unwrap();
    let cal = calibration_config(dir.path());
    let table = dir.path().join("t");
    assert_eq!(run(&["calibrate", "--config", &cal, "--out", table.to_str().unwrap()]).status.code(), Some(0));
    let table_path = table.join("calibration.csv").display().to_string();
    let cfg = train_config(dir.path(), &table_path, "[schedule]\npolicy = \"fixed_q\"\nfixed_q = 2\n");
    let out = dir.path().join("o");
    let o = run(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rounds = String::from_utf8(read(&out.join("rounds.csv"))).unwrap();
    let measured: Vec<f64> = rounds.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(measured.iter().all(|&b| b > 1e-3), "{measured:?}");
}

#[test]
fn runtime_failures_exit_one_and_name_the_module() {
    let dir = tempfile::tempdir().unwrap();
    let cal = calibration_config(dir.path());
    let table = dir.path().join("t");
    assert_eq!(run(&["calibrate", "--config", &cal, "--out", table.to_str().unwrap()]).status.code(), Some(0));
    let table_path = table.join("calibration.csv").display().to_string();
    // The table was measured on a different code.
    let cfg = train_config(dir.path(), &table_path, "");
    let text = fs::read_to_string(&cfg).unwrap().replace("seed = 4", "seed = 9");
    let cfg = write(dir.path(), "mismatch.toml", &text);
    let o = run(&["train", "--config", &cfg, "--mode", "physical", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: calibration: table is for n=96 code_seed=4"), "{}", stderr(&o));

    let cfg = train_config(dir.path(), "/no/such/table.csv", "");
    let o = run(&["train", "--config", &cfg, "--out", dir.path().join("p").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn physical_mode_without_table_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[fl]\nrounds = 2\n");
    let o = run(&["train", "--config", &cfg, "--mode", "physical", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("calibration.table is required"));
}

#[test]
fn exported_alist_reproduces_the_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let cal = calibration_config(dir.path());
    let ex = dir.path().join("ex");
    assert_eq!(run(&["export-alist", "--config", &cal, "--out", ex.to_str().unwrap()]).status.code(), Some(0));
    let alist = ex.join("code.alist").display().to_string();
    let via_alist = fs::read_to_string(&cal).unwrap().replace("[code]\n", &format!("[code]\nalist = \"{alist}\"\n"));
    let via_alist = write(dir.path(), "alist.toml", &via_alist);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["calibrate", "--config", &cal, "--out", a.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(run(&["calibrate", "--config", &via_alist, "--out", b.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(read(&a.join("calibration.csv")), read(&b.join("calibration.csv")));
}

#[test]
fn validate_and_bound_report() {
    let o = run(&["validate", "energy"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 3);
    assert!(text.contains("decoding energy"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.toml", "[fl]\nrounds = 100\n[bound]\nsmoothness = 1.0\n");
    let out = dir.path().join("o");
    let o = run(&["bound", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&read(&out.join("bound.json"))).unwrap();
    assert_eq!(v["bers"].as_array().unwrap().len(), 100);
    for term in ["initial", "bit_errors", "gradient_noise", "client_drift", "total"] {
        assert!(v["report"]["full"][term].is_number(), "{term}");
    }
}
