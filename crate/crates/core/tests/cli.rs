use std::path::Path;
use std::process::{Command, Output};

fn abcstar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abcstar")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const NORMAL: &str = "seed = 4\n[model]\nkind = \"normal\"\n[sampler]\niterations = 20000\n";

#[test]
fn calibrate_writes_csv_with_config_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), NORMAL);
    let out = dir.path().join("out");
    let o = abcstar(&["calibrate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("calibration.csv")).unwrap();
    assert!(text.starts_with("# seed = 4\n"));
    assert!(text.contains("# kind = \"normal\""));
    let row = text.lines().find(|l| l.starts_with("1,")).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[1], "chisq-dispersion");
    // 17 significant digits in scientific notation
    let mantissa = fields[5].split('e').next().unwrap();
    assert_eq!(mantissa.replace(['.', '-'], "").len(), 17);
}

#[test]
fn run_is_reproducible_and_seed_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), NORMAL);
    let read = |name: &str, seed: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = abcstar(&["run", "--config", &cfg, "--seed", seed, "--threads", threads, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out.join("samples.csv")).unwrap()
    };
    let a = read("a", "8", "1");
    assert_eq!(a, read("b", "8", "2"));
    assert_ne!(a, read("c", "9", "1"));
    assert!(String::from_utf8_lossy(&a).starts_with("# seed = 8\n"));
}

#[test]
fn power_curve_and_oracle_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 2\n[model]\nkind = \"normal\"\n[power_curve]\npoints = 25\n");
    let out = dir.path().join("out");
    for cmd in ["power-curve", "oracle"] {
        let o = abcstar(&[cmd, "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let curve = std::fs::read_to_string(out.join("power_curve.csv")).unwrap();
    assert_eq!(curve.lines().filter(|l| l.starts_with("1,")).count(), 25);
    let grid = std::fs::read_to_string(out.join("posterior_grid.csv")).unwrap();
    assert!(grid.contains("# binning_sha256 = "));
    let total: f64 = grid
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("cell"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-6, "grid mass {total}");
}

#[test]
fn data_file_is_used_when_given() {
    let dir = tempfile::tempdir().unwrap();
    let data: String = (0..40).map(|i| format!("{}\n", ((i * 37) % 17) as f64 / 8.0 - 1.0)).collect();
    std::fs::write(dir.path().join("x.csv"), format!("x\n{data}")).unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n[model]\nkind = \"normal\"\ndata = \"x.csv\"\n");
    let o = abcstar(&["calibrate", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("o/calibration.csv")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("1,chisq-dispersion,40,")));
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(abcstar(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(abcstar(&["run"]).status.code(), Some(2));
    assert_eq!(abcstar(&["run", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    let bad = write_config(dir.path(), "seed = 1\n[model]\nkind = \"normal\"\nbogus = 3\n");
    assert_eq!(abcstar(&["calibrate", "--config", &bad]).status.code(), Some(2));
    let missing = write_config(dir.path(), "seed = 1\n[model]\nkind = \"normal\"\ndata = \"nope.csv\"\n");
    assert_eq!(abcstar(&["calibrate", "--config", &missing]).status.code(), Some(2));
    assert_eq!(abcstar(&["run", "--threads", "0", "--config", &bad]).status.code(), Some(2));
    assert_eq!(abcstar(&["--help"]).status.code(), Some(0));
}

#[test]
fn reproduce_reports_checks_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = abcstar(&["reproduce", "critical-regions", "--out", dir.path().to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count(), 6);
    let failed = stdout.lines().any(|l| l.starts_with("FAIL"));
    assert_eq!(o.status.code(), Some(if failed { 1 } else { 0 }));
    let csv = std::fs::read_to_string(dir.path().join("reproduce_critical_regions.csv")).unwrap();
    assert!(csv.starts_with("# reproduce = \"critical-regions\"\n"));
    assert!(csv.contains("name,published,computed,tolerance,pass"));
}
