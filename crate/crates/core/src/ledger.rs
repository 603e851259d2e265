//! Fee-less single-writer ledger: accounts, escrowed channel funds, the
//! simulated clock and the append-only event log.
//!
//! Every other module mutates funds and records events through [`Ledger`].
//! Funds only ever move between accounts and escrow, so at any point
//! `sum(balances) + sum(escrow) == genesis total`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::sigchain::{KeyPair, PublicKey, Seed};

macro_rules! hex_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; 32]);

        impl $name {
            pub fn as_bytes(&self) -> &[u8; 32] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Option<Self> {
                let mut out = [0u8; 32];
                hex::decode_to_slice(s, &mut out).ok()?;
                Some(Self(out))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "({}..)"), &self.to_hex()[..12])
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 64 hex digits"))
            }
        }
    };
}

hex_id!(
    /// Account identifier: SHA-256 of the account's public key.
    Address
);

hex_id!(
    /// Payment channel identifier.
    ChannelId
);

/// An amount of money in minor currency units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Funds(pub u64);

impl Funds {
    pub const ZERO: Funds = Funds(0);

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, other: Funds) -> Result<Funds> {
        self.0.checked_add(other.0).map(Funds).ok_or(Error::Overflow)
    }

    pub fn checked_sub(self, other: Funds) -> Option<Funds> {
        self.0.checked_sub(other.0).map(Funds)
    }

    /// `floor(self * bps / 10000)`. Never exceeds `self` for `bps <= 10000`.
    pub fn share(self, bps: u32) -> Funds {
        Funds((u128::from(self.0) * u128::from(bps) / 10_000) as u64)
    }

    pub fn sum<I: IntoIterator<Item = Funds>>(items: I) -> Result<Funds> {
        items.into_iter().try_fold(Funds::ZERO, Funds::checked_add)
    }
}

impl fmt::Display for Funds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Simulated seconds since the epoch (Monday 00:00).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimePoint(pub u64);

impl TimePoint {
    pub fn seconds(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, secs: u64) -> Result<TimePoint> {
        self.0.checked_add(secs).map(TimePoint).ok_or(Error::Overflow)
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Transfer,
    EscrowLock,
    EscrowRelease,
    PolicyDeployed,
    RegistrationRequested,
    RegistrationDecided,
    CarRegistered,
    AmendmentProposed,
    AmendmentResolved,
    LotCreated,
    TenancyRequested,
    TenancyApproved,
    TenancyTerminated,
    PolicySet,
    ServiceProviderRegistered,
    OccupancyOk,
    OccupancyViolation,
    OccupancyMismatch,
}

impl EventKind {
    /// Whether the event moves funds, i.e. counts as a ledger transaction.
    pub fn is_transaction(self) -> bool {
        matches!(self, EventKind::Transfer | EventKind::EscrowLock | EventKind::EscrowRelease)
    }
}

pub type Payload = Map<String, Value>;

/// Unwraps a `json!({...})` object literal into a payload.
pub(crate) fn payload(value: Value) -> Payload {
    match value {
        Value::Object(map) => map,
        other => panic!("event payload must be an object, got {other}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub index: u64,
    pub time: TimePoint,
    pub kind: EventKind,
    pub payload: Payload,
}

#[derive(Debug, Clone)]
struct Account {
    public: PublicKey,
    balance: Funds,
}

#[derive(Debug, Clone, Copy)]
struct Escrow {
    payer: Address,
    amount: Funds,
}

/// Immutable view of balances and clock, safe to hand to other threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerSnapshot {
    pub time: TimePoint,
    pub balances: BTreeMap<Address, Funds>,
    pub escrow: BTreeMap<ChannelId, Funds>,
    pub event_count: u64,
    pub genesis_total: Funds,
}

impl LedgerSnapshot {
    pub fn is_conserved(&self) -> bool {
        Funds::sum(self.balances.values().chain(self.escrow.values()).copied())
            .is_ok_and(|total| total == self.genesis_total)
    }
}

#[derive(Debug, Clone)]
pub struct Ledger {
    accounts: BTreeMap<Address, Account>,
    seeds: BTreeSet<Seed>,
    escrow: BTreeMap<ChannelId, Escrow>,
    clock: TimePoint,
    events: Vec<EventRecord>,
    genesis_open: bool,
    genesis_total: Funds,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new()
    }
}

impl Ledger {
    pub fn new() -> Self {
        Ledger {
            accounts: BTreeMap::new(),
            seeds: BTreeSet::new(),
            escrow: BTreeMap::new(),
            clock: TimePoint(0),
            events: Vec::new(),
            genesis_open: true,
            genesis_total: Funds::ZERO,
        }
    }

    /// Creates the account whose key pair derives from `seed`.
    ///
    /// A non-zero `initial_balance` mints money and is refused once genesis
    /// has been sealed.
    pub fn create_account(&mut self, seed: &Seed, initial_balance: Funds) -> Result<Address> {
        if self.seeds.contains(seed) {
            return Err(Error::DuplicateSeed);
        }
        if initial_balance > Funds::ZERO && !self.genesis_open {
            return Err(Error::MintAfterGenesis);
        }
        let genesis_total = self.genesis_total.checked_add(initial_balance)?;
        let keys = KeyPair::from_seed(seed);
        let address = keys.address();
        self.seeds.insert(*seed);
        self.accounts.insert(address, Account { public: keys.public(), balance: initial_balance });
        self.genesis_total = genesis_total;
        Ok(address)
    }

    /// Ends the genesis phase. Also happens implicitly on the first logged event.
    pub fn seal_genesis(&mut self) {
        self.genesis_open = false;
    }

    pub fn is_genesis_open(&self) -> bool {
        self.genesis_open
    }

    pub fn contains(&self, address: &Address) -> bool {
        self.accounts.contains_key(address)
    }

    pub fn balance(&self, address: &Address) -> Result<Funds> {
        self.account(address).map(|a| a.balance)
    }

    pub fn public_key(&self, address: &Address) -> Result<&PublicKey> {
        self.account(address).map(|a| &a.public)
    }

    fn account(&self, address: &Address) -> Result<&Account> {
        self.accounts.get(address).ok_or(Error::UnknownAccount(*address))
    }

    fn debit_check(&self, from: &Address, amount: Funds) -> Result<()> {
        let balance = self.balance(from)?;
        if balance < amount {
            return Err(Error::InsufficientFunds { balance, needed: amount });
        }
        Ok(())
    }

    pub fn transfer(&mut self, from: &Address, to: &Address, amount: Funds) -> Result<EventRecord> {
        self.transfer_with_memo(from, to, amount, Payload::new())
    }

    /// Moves `amount` and logs one TRANSFER event carrying `memo` fields in
    /// addition to `from`, `to` and `amount`.
    pub fn transfer_with_memo(
        &mut self,
        from: &Address,
        to: &Address,
        amount: Funds,
        memo: Payload,
    ) -> Result<EventRecord> {
        self.debit_check(from, amount)?;
        let credited = self.balance(to)?;
        if from != to {
            // the debit check bounds the credit by the total supply
            credited.checked_add(amount)?;
            self.accounts.get_mut(from).expect("checked").balance.0 -= amount.0;
            self.accounts.get_mut(to).expect("checked").balance.0 += amount.0;
        }
        let mut payload = memo;
        payload.insert("from".into(), from.to_hex().into());
        payload.insert("to".into(), to.to_hex().into());
        payload.insert("amount".into(), amount.0.into());
        Ok(self.record(EventKind::Transfer, payload))
    }

    /// Moves `amount` from `payer` into escrow under `channel`.
    pub fn lock_escrow(
        &mut self,
        payer: &Address,
        channel: ChannelId,
        amount: Funds,
        memo: Payload,
    ) -> Result<EventRecord> {
        if self.escrow.contains_key(&channel) {
            return Err(Error::InvalidTerms("channel id already has escrow"));
        }
        self.debit_check(payer, amount)?;
        self.accounts.get_mut(payer).expect("checked").balance.0 -= amount.0;
        self.escrow.insert(channel, Escrow { payer: *payer, amount });
        let mut payload = memo;
        payload.insert("channel".into(), channel.to_hex().into());
        payload.insert("payer".into(), payer.to_hex().into());
        payload.insert("amount".into(), amount.0.into());
        Ok(self.record(EventKind::EscrowLock, payload))
    }

    /// Pays out the whole escrow of `channel` in one transaction.
    ///
    /// The payouts must add up to exactly the locked amount.
    pub fn release_escrow(
        &mut self,
        channel: &ChannelId,
        payouts: &[(Address, Funds)],
        memo: Payload,
    ) -> Result<EventRecord> {
        let escrow = *self.escrow.get(channel).ok_or_else(|| Error::UnknownEscrow(channel.to_hex()))?;
        let paid = Funds::sum(payouts.iter().map(|(_, f)| *f))?;
        if paid != escrow.amount {
            return Err(Error::UnbalancedRelease { paid, locked: escrow.amount });
        }
        for (to, _) in payouts {
            self.account(to)?;
        }
        for (to, amount) in payouts {
            // bounded by total supply, cannot overflow
            self.accounts.get_mut(to).expect("checked").balance.0 += amount.0;
        }
        self.escrow.remove(channel);
        let mut payload = memo;
        payload.insert("channel".into(), channel.to_hex().into());
        payload.insert("payer".into(), escrow.payer.to_hex().into());
        payload.insert(
            "payouts".into(),
            payouts
                .iter()
                .map(|(to, amount)| serde_json::json!({ "to": to.to_hex(), "amount": amount.0 }))
                .collect::<Vec<_>>()
                .into(),
        );
        Ok(self.record(EventKind::EscrowRelease, payload))
    }

    pub fn escrowed(&self, channel: &ChannelId) -> Option<Funds> {
        self.escrow.get(channel).map(|e| e.amount)
    }

    /// Appends an event at the current time.
    pub fn record(&mut self, kind: EventKind, payload: Payload) -> EventRecord {
        self.genesis_open = false;
        let event = EventRecord { index: self.events.len() as u64, time: self.clock, kind, payload };
        self.events.push(event.clone());
        event
    }

    pub fn now(&self) -> TimePoint {
        self.clock
    }

    pub fn advance_time(&mut self, delta: u64) -> Result<TimePoint> {
        self.clock = self.clock.checked_add(delta)?;
        Ok(self.clock)
    }

    pub fn advance_to(&mut self, t: TimePoint) -> Result<TimePoint> {
        if t < self.clock {
            return Err(Error::ClockRegression { now: self.clock, requested: t });
        }
        self.clock = t;
        Ok(t)
    }

    /// Index the next recorded event will receive.
    pub fn next_event_index(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn events_since(&self, index: u64) -> &[EventRecord] {
        let start = usize::try_from(index).unwrap_or(usize::MAX).min(self.events.len());
        &self.events[start..]
    }

    pub fn genesis_total(&self) -> Funds {
        self.genesis_total
    }

    pub fn total_balances(&self) -> Funds {
        Funds::sum(self.accounts.values().map(|a| a.balance)).expect("bounded by genesis total")
    }

    pub fn total_escrow(&self) -> Funds {
        Funds::sum(self.escrow.values().map(|e| e.amount)).expect("bounded by genesis total")
    }

    pub fn is_conserved(&self) -> bool {
        self.total_balances().checked_add(self.total_escrow()).is_ok_and(|t| t == self.genesis_total)
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            time: self.clock,
            balances: self.accounts.iter().map(|(a, acc)| (*a, acc.balance)).collect(),
            escrow: self.escrow.iter().map(|(c, e)| (*c, e.amount)).collect(),
            event_count: self.events.len() as u64,
            genesis_total: self.genesis_total,
        }
    }

    /// Writes the event log as JSON lines.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for event in &self.events {
            serde_json::to_writer(&mut out, event)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
