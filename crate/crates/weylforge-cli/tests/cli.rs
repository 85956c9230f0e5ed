use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_weylforge"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("weylforge-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn writes_json_csv_and_dat() {
    let d = scratch("outputs");
    let out = bin().args(["crt-verify", "--max-q", "8", "--out"]).arg(d.join("crt.json")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("crt.json")).unwrap()).unwrap();
    assert_eq!(json["schema"], "weylforge.report/1");
    assert_eq!(json["config"]["max_q"], 8);
    let csv = std::fs::read_to_string(d.join("crt.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("# p:"));
    assert!(csv.lines().any(|l| l.starts_with("p,q,tuples")));
    assert!(d.join("crt.dat").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}

#[test]
fn flags_override_the_config_file() {
    let d = scratch("override");
    std::fs::write(d.join("run.cfg"), "# crt\nmax_q = 6\nexhaustive = true\n").unwrap();
    let out = bin()
        .args(["crt-verify", "--max-q", "7", "--config"])
        .arg(d.join("run.cfg"))
        .arg("--out-dir")
        .arg(&d)
        .output()
        .unwrap();
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("crt-verify.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["max_q"], 7);
    assert_eq!(json["config"]["exhaustive"], true);
}

#[test]
fn randomized_experiment_without_seed_is_a_config_error() {
    let out = bin().args(["mr-check", "--n", "16"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn out_of_range_values_name_their_field() {
    let out = bin().args(["divergence-sim", "--seed", "1", "--rho", "0.5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho"));
    let d = scratch("badcfg");
    std::fs::write(d.join("bad.cfg"), "warp = 9\n").unwrap();
    let out = bin().args(["crt-verify", "--config"]).arg(d.join("bad.cfg")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warp"));
}

#[test]
fn sequential_flag_gives_identical_numbers() {
    let d = scratch("seq");
    let run = |name: &str, extra: &[&str]| {
        let path = d.join(name);
        let st = bin().args(["mr-check", "--n", "16,32", "--trials", "5", "--seed", "9", "--out"]).arg(&path).args(extra).output().unwrap().status;
        assert!(st.success());
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        let o = v.as_object_mut().unwrap();
        o.remove("timings");
        o.get_mut("config").unwrap().as_object_mut().unwrap().retain(|k, _| k != "parallel" && k != "out");
        v
    };
    assert_eq!(run("a.json", &[]), run("b.json", &["--sequential"]));
}
