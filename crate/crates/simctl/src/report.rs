//! Funds-flow report, folded from the ledger event log alone.

use std::collections::BTreeMap;

use parkchain_core::{Address, ChannelId, EventKind, EventRecord, Funds};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Totals {
    pub tax: u64,
    pub service: u64,
    pub landlord: u64,
    pub operator: u64,
    /// Unclaimed escrow returned at settlement.
    pub settlement_refunds: u64,
    pub timeout_refunds: u64,
    pub rents: u64,
    pub penalties: u64,
    /// Plain transfers, excluding rent.
    pub transfers: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Breakdown {
    pub claimed: u64,
    pub tax: u64,
    pub service: u64,
    pub landlord: u64,
    pub operator: u64,
    pub refund: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Open,
    Settled,
    Refunded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChannelReport {
    pub name: Option<String>,
    pub payer: String,
    pub locked: u64,
    pub outcome: Outcome,
    pub settlement: Option<Breakdown>,
    /// Ledger transactions tagged with this channel.
    pub transactions: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Occupancy {
    pub ok: u64,
    pub violations: u64,
    pub mismatches: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    pub genesis_total: u64,
    pub final_balances: BTreeMap<String, u64>,
    pub escrow_outstanding: u64,
    pub conserved: bool,
    pub channels: BTreeMap<String, ChannelReport>,
    pub totals: Totals,
    pub occupancy: Occupancy,
    pub events: u64,
    pub transactions: u64,
    pub event_kinds: BTreeMap<String, u64>,
}

fn u(p: &Value, key: &str) -> u64 {
    p[key].as_u64().unwrap_or_else(|| panic!("event payload lacks integer `{key}`: {p}"))
}

fn s<'a>(p: &'a Value, key: &str) -> &'a str {
    p[key].as_str().unwrap_or_else(|| panic!("event payload lacks string `{key}`: {p}"))
}

impl Report {
    /// Replays `events` over the genesis balances. Channel names are labels only.
    pub fn fold(
        genesis: &[(String, Address, Funds)],
        events: &[EventRecord],
        channel_names: &BTreeMap<ChannelId, String>,
    ) -> Report {
        let names: BTreeMap<String, &str> = genesis.iter().map(|(n, a, _)| (a.to_hex(), n.as_str())).collect();
        let name = |hex: &str| -> String { names.get(hex).map_or_else(|| hex.to_owned(), |n| (*n).to_owned()) };
        let mut balances: BTreeMap<String, i128> = genesis.iter().map(|(n, _, b)| (n.clone(), i128::from(b.0))).collect();
        let mut credit = |who: &str, amount: u64, sign: i128| {
            *balances.entry(name(who)).or_default() += sign * i128::from(amount);
        };
        let labels: BTreeMap<String, &String> = channel_names.iter().map(|(id, n)| (id.to_hex(), n)).collect();
        let mut channels: BTreeMap<String, ChannelReport> = BTreeMap::new();
        let mut totals = Totals::default();
        let mut occupancy = Occupancy::default();
        let mut kinds: BTreeMap<String, u64> = BTreeMap::new();
        let mut transactions = 0;

        for ev in events {
            let kind = serde_json::to_value(ev.kind).expect("kind serializes");
            *kinds.entry(kind.as_str().unwrap_or_default().to_owned()).or_default() += 1;
            if ev.kind.is_transaction() {
                transactions += 1;
            }
            let p = Value::Object(ev.payload.clone());
            match ev.kind {
                EventKind::Transfer => {
                    let amount = u(&p, "amount");
                    credit(s(&p, "from"), amount, -1);
                    credit(s(&p, "to"), amount, 1);
                    if p["purpose"] == "rent" {
                        totals.rents += u(&p, "rent");
                        totals.penalties += u(&p, "penalty");
                    } else {
                        totals.transfers += amount;
                    }
                }
                EventKind::EscrowLock => {
                    let id = s(&p, "channel");
                    credit(s(&p, "payer"), u(&p, "amount"), -1);
                    channels.insert(
                        id.to_owned(),
                        ChannelReport {
                            name: labels.get(id).map(|n| (*n).clone()),
                            payer: name(s(&p, "payer")),
                            locked: u(&p, "amount"),
                            outcome: Outcome::Open,
                            settlement: None,
                            transactions: 1,
                        },
                    );
                }
                EventKind::EscrowRelease => {
                    for payout in p["payouts"].as_array().expect("payouts") {
                        credit(s(payout, "to"), u(payout, "amount"), 1);
                    }
                    let ch = channels.get_mut(s(&p, "channel")).expect("release follows its lock");
                    ch.transactions += 1;
                    if p["reason"] == "settle" {
                        let b = Breakdown {
                            claimed: u(&p, "claimed"),
                            tax: u(&p, "tax"),
                            service: u(&p, "service"),
                            landlord: u(&p, "landlord"),
                            operator: u(&p, "operator"),
                            refund: u(&p, "refund"),
                        };
                        totals.tax += b.tax;
                        totals.service += b.service;
                        totals.landlord += b.landlord;
                        totals.operator += b.operator;
                        totals.settlement_refunds += b.refund;
                        ch.outcome = Outcome::Settled;
                        ch.settlement = Some(b);
                    } else {
                        totals.timeout_refunds += u(&p, "refund");
                        ch.outcome = Outcome::Refunded;
                    }
                }
                EventKind::OccupancyOk => occupancy.ok += 1,
                EventKind::OccupancyViolation => occupancy.violations += 1,
                EventKind::OccupancyMismatch => occupancy.mismatches += 1,
                _ => {}
            }
        }

        let genesis_total: u64 = genesis.iter().map(|(_, _, b)| b.0).sum();
        let escrow_outstanding: u64 =
            channels.values().filter(|c| c.outcome == Outcome::Open).map(|c| c.locked).sum();
        let final_balances: BTreeMap<String, u64> = balances
            .into_iter()
            .map(|(n, b)| (n, u64::try_from(b).expect("fold yields a non-negative balance")))
            .collect();
        let held: u128 = final_balances.values().map(|b| u128::from(*b)).sum();
        Report {
            genesis_total,
            conserved: held + u128::from(escrow_outstanding) == u128::from(genesis_total),
            final_balances,
            escrow_outstanding,
            channels,
            totals,
            occupancy,
            events: events.len() as u64,
            transactions,
            event_kinds: kinds,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
