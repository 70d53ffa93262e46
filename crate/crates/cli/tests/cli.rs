use std::path::Path;
use std::process::{Command, Output};

fn ndp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ndp")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let collect = dir.join("collect.cfg");
    std::fs::write(&collect, "collect.duration = 20\n").unwrap();
    let data = dir.join("data.csv");
    let out = ndp(&["sim-collect", "--config", s(&collect), "--out", s(&data), "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&data), "rel_px,rel_py,rel_pz,rel_vx,rel_vy,rel_vz,fd_x,fd_y,fd_z");
    assert!(dir.join("data_log.csv").exists());

    let model = dir.join("model.txt");
    let out = ndp(&[
        "train", "--data", s(&data), "--gamma", "4", "--epochs", "2", "--lr", "1e-3", "--sn-mode", "clip", "--out",
        s(&model), "--seed", "1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("lipschitz_bound"));

    let map = dir.join("map.csv");
    let out = ndp(&["predict-map", "--model", s(&model), "--height", "-0.6", "--extent", "1.0", "--res", "21", "--out", s(&map)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&map).unwrap();
    assert_eq!(text.lines().count(), 22);

    let wps = dir.join("wps.csv");
    std::fs::write(&wps, "x,y,z,psi\n0,0,1,0\n1,0,1,0\n1,1,1.5,0\n").unwrap();
    let traj = dir.join("traj.csv");
    let out = ndp(&["traj", "--waypoints", s(&wps), "--v-avg", "0.5", "--dt", "0.1", "--out", s(&traj)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&traj), "t,x,y,z,psi,vx,vy,vz,ax,ay,az");

    let scenario = dir.join("fly.cfg");
    std::fs::write(&scenario, "sim.duration = 6\nrun.rounds = 1\n").unwrap();
    let (base, with_model) = (dir.join("base"), dir.join("ndp"));
    let out = ndp(&["fly", "--scenario", s(&scenario), "--baseline", "--out", s(&base), "--seed", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = ndp(&["fly", "--scenario", s(&scenario), "--model", s(&model), "--out", s(&with_model), "--seed", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(with_model.join("round0/drone0.csv").exists());

    let report = dir.join("report");
    let out = ndp(&["report", "--baseline", s(&base), "--ndp", s(&with_model), "--out", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&report.join("report.csv")), "metric,axis,baseline,ndp,reduction_pct");

    let other = dir.join("other");
    let out = ndp(&["fly", "--scenario", s(&scenario), "--baseline", "--out", s(&other), "--seed", "2"]);
    assert_eq!(code(&out), 0);
    let out = ndp(&["report", "--baseline", s(&base), "--ndp", s(&other), "--out", s(&report)]);
    assert_eq!(code(&out), 2);

    let out = ndp(&[
        "train", "--data", s(&data), "--gamma", "inf", "--epochs", "3", "--lr", "1e200", "--sn-mode", "clip", "--out",
        s(&dir.join("bad.txt")), "--seed", "1",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let bad = dir.join("bad.cfg");
    std::fs::write(&bad, "sim.duration = 6\nsim.warp_drive = 1\n").unwrap();
    let out = ndp(&["fly", "--scenario", s(&bad), "--baseline", "--out", s(&dir.join("o")), "--seed", "1"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warp_drive"));

    let missing = dir.join("nope.cfg");
    let out = ndp(&["sim-collect", "--config", s(&missing), "--out", s(&dir.join("d.csv")), "--seed", "1"]);
    assert_eq!(code(&out), 2);

    let garbage = dir.join("model.txt");
    std::fs::write(&garbage, "not a model\n").unwrap();
    let out = ndp(&["predict-map", "--model", s(&garbage), "--height", "0.5", "--out", s(&dir.join("m.csv"))]);
    assert_eq!(code(&out), 2);

    let one = dir.join("one.csv");
    std::fs::write(&one, "x,y,z,psi\n0,0,1,0\n").unwrap();
    let out = ndp(&["traj", "--waypoints", s(&one), "--v-avg", "0.5", "--dt", "0.1", "--out", s(&dir.join("t.csv"))]);
    assert_eq!(code(&out), 2);
}
