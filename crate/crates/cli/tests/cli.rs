use std::process::Command;

fn beamsel() -> Command {
    Command::new(env!("CARGO_BIN_EXE_beamsel"))
}

fn run(cmd: &mut Command) -> String {
    let out = cmd.output().expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn gen_then_solve_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let sol = dir.path().join("sol.json");
    run(beamsel().args(["gen", "-n", "8", "-k", "2", "--seed", "4", "--out"]).arg(&inst));
    run(beamsel().args(["solve", "--variant", "modulus", "--in"]).arg(&inst).arg("--out").arg(&sol));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sol).unwrap()).unwrap();
    assert_eq!(v["status"], "optimal");
    let card = v["cardinality"].as_u64().unwrap() as usize;
    let x = v["x"].as_array().unwrap();
    assert_eq!(x.len(), 8);
    let active = x.iter().filter(|c| c[0].as_f64().unwrap() != 0.0 || c[1].as_f64().unwrap() != 0.0).count();
    assert_eq!(active, card);

    let heur = run(beamsel().args(["solve", "--variant", "heur", "--in"]).arg(&inst));
    let h: serde_json::Value = serde_json::from_str(&heur).unwrap();
    assert!(h["cardinality"].as_u64().unwrap() as usize >= card);
}

#[test]
fn suite_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("runs.csv");
    let table = run(beamsel()
        .args(["suite", "--antennas", "6", "--users", "2", "--seeds", "1", "--variants", "modulus,heur", "--csv"])
        .arg(&csv));
    assert!(table.contains("modulus"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("instance,N,K,preset,seed,variant,nodes,time_s,status,opt_card,heur_card,heur_time_s"));
    assert_eq!(text.lines().count(), 1 + 2 * 2);
    let stats = run(beamsel().arg("stats").arg("--csv").arg(&csv));
    assert_eq!(stats.lines().count(), 3);
}

#[test]
fn bad_arguments_fail() {
    assert!(!beamsel().args(["solve", "--variant", "fastest"]).output().unwrap().status.success());
    assert!(!beamsel().args(["solve", "--in", "/nonexistent/inst.json"]).output().unwrap().status.success());
    assert!(!beamsel().args(["suite", "--grid", "huge", "--csv", "x.csv"]).output().unwrap().status.success());
}
