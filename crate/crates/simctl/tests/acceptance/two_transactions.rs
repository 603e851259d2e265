use std::collections::BTreeMap;

use parkchain_core::{ChannelStatus, EventKind};
use parkchain_simctl::{Action, Runner, Scenario};

use crate::{ensure, golden, Outcome};

fn events_jsonl(r: &Runner) -> Vec<u8> {
    let mut out = Vec::new();
    r.write_events(&mut out).unwrap();
    out
}

/// Keeps only the last emit/accept pair of each channel: the one settlement needs.
fn without_extra_vouchers(s: &Scenario) -> Scenario {
    let mut last: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, step) in s.steps.iter().enumerate() {
        if let Action::EmitVoucher { channel } = &step.action {
            last.insert(channel, i);
        }
    }
    let mut keep = Vec::new();
    for (i, step) in s.steps.iter().enumerate() {
        let drop = match &step.action {
            Action::EmitVoucher { channel } => last[channel.as_str()] != i,
            Action::AcceptVoucher { channel } => last[channel.as_str()] != i - 1,
            _ => false,
        };
        if !drop {
            keep.push(step.clone());
        }
    }
    Scenario { steps: keep, ..s.clone() }
}

pub fn run() -> Outcome {
    let scenario = golden();
    let r = Runner::run(&scenario).map_err(|e| e.to_string())?;
    let events = r.engine().ledger().events();
    let mut completed = 0;
    for ch in r.engine().channels() {
        if ch.status == ChannelStatus::Open {
            continue;
        }
        completed += 1;
        let id = ch.id.to_hex();
        let kinds: Vec<EventKind> = events
            .iter()
            .filter(|e| e.kind.is_transaction() && e.payload.get("channel").and_then(|c| c.as_str()) == Some(id.as_str()))
            .map(|e| e.kind)
            .collect();
        ensure!(
            kinds == [EventKind::EscrowLock, EventKind::EscrowRelease],
            "channel {id} produced transactions {kinds:?}"
        );
    }
    ensure!(completed >= 3, "golden scenario completes only {completed} sessions");

    let trace = r.trace();
    ensure!(!trace.is_empty(), "no off-chain traffic recorded");
    let log = String::from_utf8(events_jsonl(&r)).unwrap();
    for rec in trace {
        let hex = serde_json::to_value(rec.voucher).unwrap();
        ensure!(!log.contains(hex.as_str().unwrap()), "voucher from step {} appears in the ledger", rec.step);
    }

    let thin = without_extra_vouchers(&scenario);
    let vouchers_dropped = scenario.steps.len() - thin.steps.len();
    ensure!(vouchers_dropped > 0, "golden scenario streams a single voucher per channel");
    let r2 = Runner::run(&thin).map_err(|e| e.to_string())?;
    ensure!(
        events_jsonl(&r2) == events_jsonl(&r),
        "dropping {vouchers_dropped} intermediate voucher steps changed the ledger"
    );
    Ok(format!(
        "{completed} sessions x 2 transactions; {} trace records, none on the ledger; {} extra voucher steps leave the log unchanged",
        trace.len(),
        vouchers_dropped
    ))
}
