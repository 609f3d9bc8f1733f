mod common;

use std::fs;
use std::process::Command;

use rlcsim::runner::{load_sweep, plotdata, run_sweep, run_to_dir, simulate, Sweep};
use rlcsim::scenario::{load_scenario, Scenario};

fn fig5(name: &str) -> (Scenario, rlcsim::world::WorldOutput) {
    let s = load_scenario(name).unwrap();
    let out = simulate(&s).unwrap();
    (s, out)
}

#[test]
fn fig5_droptail_collapses_after_overflow() {
    let (s, out) = fig5("fig5-droptail");
    let r = common::droptail_collapse_order(&out, s.queue.capacity_bytes(), s.flow.mss as u64);
    assert!(r.is_ok(), "{r:?}");
}

#[test]
fn fig5_aqm_acts_before_buffer_fills() {
    let (_, out) = fig5("fig5-aqm");
    let r = common::aqm_before_overflow(&out);
    assert!(r.is_ok(), "{r:?}");
}

#[test]
fn fig5_ecn_marks_replace_overflow() {
    let (_, out) = fig5("fig5-ecn");
    let r = common::no_overflow_before_ce(&out);
    assert!(r.is_ok(), "{r:?}");
    assert!(common::conserved_everywhere(&out));
}

const SMALL: &str = r#"
name = "small"
horizon_s = 3
seed = 4
num_flows = 2

[channel]
kind = "los_nlos"
los_capacity_mbps = 200
nlos_capacity_mbps = 20
los_s = 1
nlos_s = 1

[queue]
aqm = "l4s"
mode = "mark"

[flow]
cc = "dctcp"
ecn = true
app = { kind = "vbr", datarate_mbps = 15 }
"#;

#[test]
fn run_writes_identical_results_twice() {
    let s = Scenario::from_toml_str(SMALL).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (da, oa) = run_to_dir(&s, a.path()).unwrap();
    let (db, _) = run_to_dir(&s, b.path()).unwrap();
    assert!(common::conserved_everywhere(&oa));
    let mut names: Vec<_> = fs::read_dir(&da).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for want in ["results.json", "results.csv", "scenario.toml", "flow0_timeline.csv", "flow1_rates.csv"] {
        assert!(names.iter().any(|n| n == want), "missing {want}");
    }
    for n in names {
        assert_eq!(fs::read(da.join(&n)).unwrap(), fs::read(db.join(&n)).unwrap(), "{n:?} differs");
    }
    let dir = da.file_name().unwrap().to_string_lossy().into_owned();
    assert!(dir.starts_with("small-") && dir.ends_with("-seed4"), "{dir}");
}

#[test]
fn sweep_and_plotdata() {
    let src = format!(
        "name = \"tiny\"\naxis = \"queue.codel_target_ms\"\nvalues = [2, 20]\nbase_patch = {{ queue = {{ aqm = \"codel\", mode = \"drop\" }}, flow = {{ ecn = false }} }}\n[base]\n{}",
        SMALL.replace("[channel]", "[base.channel]").replace("[queue]", "[base.queue]").replace("[flow]", "[base.flow]")
    );
    let sweep = Sweep::from_toml_str(&src, None).unwrap();
    let root = tempfile::tempdir().unwrap();
    let (dir, rows) = run_sweep(&sweep, root.path(), 2).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows.iter().filter(|r| r.best).count(), 1);
    assert_ne!(rows[0].seed, rows[1].seed);
    assert!(dir.join("summary.csv").exists());

    let files = plotdata(&dir).unwrap();
    let scatter = fs::read_to_string(dir.join("plotdata/scatter.csv")).unwrap();
    assert!(scatter.starts_with("scenario,aqm,mode,mean_goodput_bps,mean_srtt_us"));
    assert_eq!(scatter.lines().count(), 3);
    assert!(!files.is_empty());
}

#[test]
fn shipped_sweeps_parse() {
    for name in ["fig6-grid", "codel-target"] {
        let sw = load_sweep(name).unwrap();
        for i in 0..sw.values.len() {
            sw.scenario(i).unwrap().validate().unwrap();
        }
    }
}

#[test]
fn cli_presets_and_errors() {
    let bin = env!("CARGO_BIN_EXE_rlcsim");
    let out = Command::new(bin).args(["presets", "list"]).output().unwrap();
    assert!(out.status.success());
    let listing = String::from_utf8(out.stdout).unwrap();
    assert!(listing.contains("table5-A") && listing.contains("fig6-grid"));

    let out = Command::new(bin).args(["presets", "show", "fig5-ecn"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("dctcp"));

    let out = Command::new(bin).args(["run", "no-such-thing"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("error"));
}

#[test]
fn cli_run_honours_output_env() {
    let bin = env!("CARGO_BIN_EXE_rlcsim");
    let root = tempfile::tempdir().unwrap();
    let scen = root.path().join("small.toml");
    fs::write(&scen, SMALL).unwrap();
    let out = Command::new(bin)
        .args(["run", scen.to_str().unwrap(), "--seed", "8"])
        .env(rlcsim::runner::OUT_ENV, root.path().join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let runs: Vec<_> = fs::read_dir(root.path().join("out")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let name = runs[0].as_ref().unwrap().file_name().to_string_lossy().into_owned();
    assert!(name.ends_with("-seed8"));
}
