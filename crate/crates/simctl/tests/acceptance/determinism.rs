use std::fs;
use std::process::Command;

use parkchain_simctl::Runner;

use crate::{ensure, golden, golden_path, Outcome};

type Artifacts = [Vec<u8>; 3];

fn in_process() -> Result<Artifacts, String> {
    let r = Runner::run(&golden()).map_err(|e| e.to_string())?;
    let (mut events, mut trace) = (Vec::new(), Vec::new());
    r.write_events(&mut events).map_err(|e| e.to_string())?;
    r.write_trace(&mut trace).map_err(|e| e.to_string())?;
    Ok([events, trace, r.report().to_json().into_bytes()])
}

fn through_cli() -> Result<Artifacts, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let [ev, tr, rep] = ["events.jsonl", "trace.jsonl", "report.json"].map(|f| dir.path().join(f));
    let status = Command::new(env!("CARGO_BIN_EXE_parksim"))
        .arg("run")
        .arg(golden_path())
        .arg("--out")
        .arg(&ev)
        .arg("--offchain")
        .arg(&tr)
        .arg("--report")
        .arg(&rep)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(status.status.success(), "parksim exited with {}", status.status);
    let read = |p| fs::read(p).map_err(|e: std::io::Error| e.to_string());
    Ok([read(&ev)?, read(&tr)?, read(&rep)?])
}

pub fn run() -> Outcome {
    let names = ["events", "trace", "report"];
    let runs = [in_process()?, in_process()?, through_cli()?, through_cli()?];
    for (i, run) in runs.iter().enumerate().skip(1) {
        for (k, name) in names.iter().enumerate() {
            ensure!(run[k] == runs[0][k], "{name} of run {} differs from run 1", i + 1);
        }
    }
    let sizes: Vec<String> = names.iter().zip(&runs[0]).map(|(n, b)| format!("{n} {}B", b.len())).collect();
    ensure!(runs[0].iter().all(|b| !b.is_empty()), "empty artifact: {}", sizes.join(", "));
    Ok(format!("4 runs (2 in-process, 2 CLI) byte-identical: {}", sizes.join(", ")))
}
