use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cone-green"));
    c.env_remove("CONE_GREEN_MEMCAP_BYTES");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const RAD2: &[&str] = &["--set", "walk.kind=product-rademacher", "--deterministic"];

fn with(base: &[&'static str], extra: &[&'static str]) -> Vec<&'static str> {
    base.iter().chain(extra).copied().collect()
}

#[test]
fn integral_prints_value() {
    let o = run(&["integral", "--p", "1", "--d", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "2.0000000000");
}

#[test]
fn invalid_config_lists_every_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "bogus = 1\ncone.d = 3\ntarget = 1,2\nmethod = mc\n").unwrap();
    let o = run(&["green-mc", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("3 configuration error(s)"), "{err}");
    assert!(err.contains("unknown key `bogus`"));
    assert!(err.contains("dimension mismatch"));
    assert!(err.contains("missing seed"));
}

#[test]
fn green_exact_half_line() {
    let o = run(&[
        "green-exact", "--deterministic", "--set", "cone.d=1", "--set", "start=1", "--set", "target=1", "--set",
        "horizon=4",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("# command: green-exact\n# method: dp\n# units: "), "{text}");
    assert!(text.contains("n,survival,p_n_at_y,partial_green\n"));
    assert!(text.contains("\n4,3.75e-1,1.25e-1,1.375e0\n"), "{text}");
    assert!(text.contains("G_N(x,y) = 1.3750000000"));
}

fn csv(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = with(RAD2, &["green-mc", "--seed", "7", "--set", "start=0,1", "--set", "target=2,3", "--set", "horizon=200", "--set", "replicas=4000"]);
    let o1 = bin().args(&args).arg("--out").arg(&a).arg("--threads").arg("1").output().unwrap();
    let o2 = bin().args(&args).arg("--out").arg(&b).arg("--threads").arg("3").output().unwrap();
    assert_eq!(o1.status.code(), Some(0), "{}", stderr(&o1));
    assert_eq!(o2.status.code(), Some(0));
    assert_eq!(csv(&a), csv(&b));
    assert!(csv(&a).contains("estimate,stderr,replicas,horizon,seed,method\n"));
    assert!(csv(&a).trim_end().ends_with(",4000,200,7,plain"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2, "no temporary files left behind");
}

#[test]
fn timestamp_only_without_deterministic() {
    let args = ["integral", "--p", "2", "--d", "3"];
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    bin().args(args).arg("--out").arg(&a).output().unwrap();
    bin().args(args).arg("--deterministic").arg("--out").arg(&b).output().unwrap();
    assert!(csv(&a).starts_with("# generated: "));
    assert!(csv(&b).starts_with("# command: integral\n"));
    assert!(csv(&b).contains("p,d,eps,value,closed_form\n"));
}

#[test]
fn missing_seed_for_random_command() {
    let o = run(&with(RAD2, &["green-tilted", "--set", "start=0,1", "--set", "target=8,3"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing seed"));
}

#[test]
fn tilted_estimate_runs() {
    let o = run(&with(RAD2, &["green-tilted", "--seed", "3", "--set", "start=0,1", "--set", "target=8,3", "--set", "horizon=200", "--set", "replicas=2000"]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("# method: tilted\n"));
    assert!(text.contains("truncation remainder bound"));
}

#[test]
fn martin_baseline_passes() {
    let o = run(&with(RAD2, &["verify-martin"]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let last = stdout(&o).lines().last().unwrap().to_string();
    assert!(last.starts_with("PASS verify-martin: ratio 0.3"), "{last}");
    assert!(last.contains("target V(x)/V(x') = 0.3333"));
}

#[test]
fn failing_verification_exits_2() {
    let o = run(&with(RAD2, &["verify-llt", "--set", "tolerance.llt=0.0001"]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).lines().last().unwrap().starts_with("FAIL verify-llt"));
}

#[test]
fn validate_reports_covariance() {
    assert_eq!(run(&with(RAD2, &["validate"])).status.code(), Some(0));
    // The simple planar walk has covariance I/2.
    let o = run(&["validate", "--deterministic"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("covariance_identity_ok,false"));
}

#[test]
fn memory_cap_from_environment() {
    let o = bin()
        .args(with(RAD2, &["green-exact", "--set", "start=0,1", "--set", "target=4,3", "--set", "horizon=400"]))
        .env("CONE_GREEN_MEMCAP_BYTES", "1000")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("memory cap of 1000 bytes"), "{}", stderr(&o));
}

#[test]
fn auto_falls_back_to_tilted_under_the_cap() {
    let o = bin()
        .args(with(RAD2, &["verify-halfspace", "--set", "method=auto", "--seed", "5", "--set", "replicas=2000", "--set", "targets=10,3;12,3"]))
        .env("CONE_GREEN_MEMCAP_BYTES", "1000")
        .output()
        .unwrap();
    assert!(o.status.code() == Some(0) || o.status.code() == Some(2), "{}", stderr(&o));
    assert!(stdout(&o).contains("# method: tilted\n"));
}

#[test]
fn ladder_table() {
    let o = run(&[
        "ladder", "--deterministic", "--set", "walk.kind=custom-atoms", "--set", "cone.d=1", "--set",
        "walk.atoms=-1 0.25; 0 0.5; 1 0.25", "--set", "ladder.k_max=5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    // Skip-free upward: every ladder height is 1 and U(k) = k + 1.
    assert!(text.contains("k,ladder_pmf,U(k)\n0,0e0,1e0\n1,1e0,2e0\n"), "{text}");
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 6 + 1);
}

#[test]
fn boundary_and_interior_on_the_quadrant() {
    let q = ["--set", "cone.kind=wedge", "--set", "cone.beta=1.5707963267948966", "--set", "start=1,1", "--set", "horizon.factor=4"];
    let o = run(&with(&with(RAD2, &q), &["verify-boundary"]));
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = run(&with(&with(RAD2, &q), &["verify-interior", "--set", "ray.moduli=8.49,11.31,14.14,16.97"]));
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("raw slope of G"));
}
