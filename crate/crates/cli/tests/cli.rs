use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_molodensky")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("molodensky-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn eoc_appends_rates() {
    let d = scratch("eoc");
    let csv = d.join("errors.csv");
    fs::write(&csv, "level,dof,error\n0,10,1.0\n1,40,0.25\n2,160,0.0625\n").unwrap();
    let out = bin(&["eoc", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "level,dof,error,eoc");
    assert!(lines[1].ends_with(",nan"));
    for l in &lines[2..] {
        let r: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }
}

#[test]
fn bad_config_exits_with_one() {
    let d = scratch("bad");
    let cfg = d.join("bad.txt");
    fs::write(&cfg, "experiment = smoother_report\nlevles = 1\n").unwrap();
    assert_eq!(bin(&["smoother-report", cfg.to_str().unwrap()]).status.code(), Some(1));
    fs::write(&cfg, "experiment = bench3d_cube\n").unwrap();
    assert_eq!(bin(&["smoother-report", cfg.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(bin(&["eoc", d.join("missing.csv").to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn smoother_report_runs() {
    let d = scratch("smoother");
    let cfg = d.join("smoother.txt");
    fs::write(&cfg, format!("experiment = smoother_report\nlevels = 1\noutput = {}\n", d.join("out").display())).unwrap();
    let out = bin(&["smoother-report", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(d.join("out/report.txt")).unwrap();
    assert!(report.contains("status = ok"));
    assert!(d.join("out/smoother_L1.csv").exists());
}
