#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use parkchain_core::ids::*;
use parkchain_core::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ACTORS: usize = 9;
pub const START: u64 = 500_000;

/// A funded world: actor 0 administers, the rest play any role.
pub struct World {
    pub engine: Engine,
    pub actors: Vec<Address>,
    pub keys: BTreeMap<Address, KeyPair>,
    pub genesis: Funds,
}

impl World {
    pub fn new(seed: u64) -> World {
        let mut ledger = Ledger::new();
        let mut actors = Vec::new();
        let mut keys = BTreeMap::new();
        for i in 0..ACTORS {
            let s = Seed::derive(seed, &format!("actor{i}"));
            let a = ledger.create_account(&s, Funds(START)).unwrap();
            keys.insert(a, KeyPair::from_seed(&s));
            actors.push(a);
        }
        let genesis = ledger.genesis_total();
        let engine = Engine::new(ledger, actors[0], EngineConfig { grace: 3600 }).unwrap();
        World { engine, actors, keys, genesis }
    }

    pub fn admin(&self) -> Address {
        self.actors[0]
    }
}

/// Entity state, balances and the event count; the log itself is append-only.
pub fn fingerprint(e: &Engine) -> String {
    let channels: Vec<_> = e.channels().collect();
    let l = e.ledger();
    format!("{:?}{:?}{channels:?}{:?}{}", e.system(), e.market(), l.snapshot(), l.events().len())
}

/// Structural invariants that must hold after every operation.
/// Events before `since` are assumed already checked.
pub fn check_invariants(w: &World, since: usize) -> Result<(), String> {
    let e = &w.engine;
    let l = e.ledger();
    if !l.is_conserved() || l.total_balances().0 + l.total_escrow().0 != w.genesis.0 {
        return Err(format!("conservation broken: {:?}", l.snapshot()));
    }
    let events = l.events();
    for i in since.max(1).min(events.len())..events.len() {
        if events[i].index != i as u64 {
            return Err(format!("event index gap at {i}"));
        }
        if events[i].time < events[i - 1].time {
            return Err(format!("clock regression at event {i}"));
        }
    }
    let market = e.market();
    for (lot_id, lot) in &market.lots {
        let contract = e.landlord_contract(lot.landlord_contract).map_err(|x| x.to_string())?;
        if contract.landlord != lot.core.owner {
            return Err(format!("{lot_id} owned by a non-landlord"));
        }
        let mut seen = BTreeSet::new();
        for rc in market.renting.values().filter(|c| c.lot == *lot_id && c.is_active()) {
            for s in &rc.terms.stalls {
                if (*s as usize) >= lot.stalls.len() || !seen.insert(*s) {
                    return Err(format!("{lot_id}: stall {s} outside lot or double-rented"));
                }
                if lot.stalls[*s as usize].controller != Controller::Tenant(rc.id) {
                    return Err(format!("{lot_id}: stall {s} controller disagrees with {}", rc.id));
                }
            }
        }
        for st in &lot.stalls {
            if let Controller::Tenant(c) = st.controller {
                let rc = e.renting_contract(c).map_err(|x| x.to_string())?;
                if !rc.is_active() || !rc.terms.stalls.contains(&st.id) {
                    return Err(format!("{lot_id}: stall {} held by stale tenancy", st.id));
                }
            }
            if let Some(ch) = st.session {
                let ch = e.channel(&ch).map_err(|x| x.to_string())?;
                if !ch.is_open() || ch.stall != st.id || ch.lot != *lot_id {
                    return Err(format!("{lot_id}: stall {} points at a closed channel", st.id));
                }
            }
        }
    }
    let mut open_per_car = BTreeMap::new();
    let mut escrow = 0u64;
    for ch in e.channels().filter(|c| c.is_open()) {
        *open_per_car.entry(ch.car).or_insert(0) += 1;
        escrow += ch.locked.0;
        let stall = e.lot(ch.lot).unwrap().stalls[ch.stall as usize].session;
        if stall != Some(ch.id) {
            return Err(format!("open channel {} not on its stall", ch.id));
        }
        if e.car(ch.car).unwrap().parked.map(|p| p.channel) != Some(ch.id) {
            return Err(format!("car of channel {} not parked there", ch.id));
        }
    }
    if open_per_car.values().any(|n| *n > 1) {
        return Err("a car has two open sessions".into());
    }
    if escrow != l.total_escrow().0 {
        return Err("open channels disagree with ledger escrow".into());
    }
    Ok(())
}

/// Random operation sequences against the engine, with a bias towards
/// the right caller and plausible arguments.
pub struct Chaos {
    pub world: World,
    pub rng: ChaCha8Rng,
    pub ok: usize,
    pub failed: usize,
    pub settled: usize,
}

impl Chaos {
    pub fn new(seed: u64) -> Chaos {
        Chaos { world: World::new(seed), rng: ChaCha8Rng::seed_from_u64(seed), ok: 0, failed: 0, settled: 0 }
    }

    fn actor(&mut self) -> Address {
        *self.world.actors.choose(&mut self.rng).unwrap()
    }

    /// `right` with probability 0.8, otherwise anyone.
    fn caller(&mut self, right: Address) -> Address {
        if self.rng.gen_bool(0.8) {
            right
        } else {
            self.actor()
        }
    }

    fn pick<T: Copy>(&mut self, items: &[T]) -> Option<T> {
        items.choose(&mut self.rng).copied()
    }

    fn id(&mut self, len: usize) -> u32 {
        self.rng.gen_range(1..=len as u32 + 1)
    }

    /// Runs one random step and checks invariants. Returns the op name.
    pub fn step(&mut self) -> Result<&'static str, String> {
        let before = fingerprint(&self.world.engine);
        let since = self.world.engine.ledger().events().len();
        let (name, result) = self.random_op();
        match result {
            Ok(()) => self.ok += 1,
            Err(err) => {
                self.failed += 1;
                if fingerprint(&self.world.engine) != before {
                    return Err(format!("{name} failed with {err} but changed state"));
                }
            }
        }
        check_invariants(&self.world, since).map_err(|m| format!("after {name}: {m}"))?;
        Ok(name)
    }

    fn random_op(&mut self) -> (&'static str, Result<(), Error>) {
        let now = self.world.engine.now();
        match self.rng.gen_range(0..20) {
            0 => {
                let who = self.actor();
                let from = TimePoint(now.0.saturating_sub(self.rng.gen_range(0..1000)));
                let terms = LandlordTerms {
                    tax_rate: self.rng.gen_range(0..3000),
                    land_info: "plot".into(),
                    valid_from: from,
                    valid_until: TimePoint(now.0 + self.rng.gen_range(0..400_000)),
                };
                ("request_landlord_registration", self.world.engine.request_landlord_registration(&who, terms).map(drop))
            }
            1 => {
                let admin = self.world.admin();
                let who = self.caller(admin);
                let n = self.world.engine.system().requests.len();
                let r = RequestId(self.id(n));
                let approve = self.rng.gen_bool(0.85);
                ("decide_registration", self.world.engine.decide_registration(&who, r, approve).map(drop))
            }
            2 => {
                let contracts: Vec<_> = self.world.engine.system().landlord_contracts.values().map(|c| (c.id, c.landlord)).collect();
                let Some((c, owner)) = self.pick(&contracts) else { return ("create_parking_lot", Err(Error::NotFound("none"))) };
                let who = self.caller(owner);
                let np = self.world.engine.market().policies.len();
                let policy = PolicyId(self.id(np));
                let stalls = self.rng.gen_range(0..7);
                ("create_parking_lot", self.world.engine.create_parking_lot(&who, c, stalls, policy, "here").map(drop))
            }
            3 => {
                let who = self.actor();
                let base = self.rng.gen_range(0..3000);
                let spread = self.rng.gen_range(0..2000);
                let seed = self.rng.gen::<u64>();
                let p = WeekHourPolicy::from_fn(|d, h| base + (seed.rotate_left((d * 24 + h) as u32) % (spread + 1)));
                ("deploy_policy", self.world.engine.deploy_policy(&who, Arc::new(p)).map(drop))
            }
            4 => {
                let who = self.actor();
                let plate = format!("P{}", self.rng.gen_range(0..30));
                ("register_car", self.world.engine.register_car(&who, &plate).map(drop))
            }
            5 => {
                let lots: Vec<_> = self.world.engine.market().lots.values().map(|l| (l.id, l.stalls.len() as u32)).collect();
                let Some((lot, n)) = self.pick(&lots) else { return ("request_tenancy", Err(Error::NotFound("none"))) };
                let who = self.actor();
                let k = self.rng.gen_range(0..=n.min(3));
                let stalls: BTreeSet<_> = (0..k).map(|_| self.rng.gen_range(0..n + 1)).collect();
                let terms = RentingTerms {
                    stalls,
                    rent_fee: Funds(self.rng.gen_range(0..20_000)),
                    period: self.rng.gen_range(0..50_000),
                    landlord_share: self.rng.gen_range(0..4000),
                    penalty_rate: self.rng.gen_range(0..3000),
                };
                let np = self.world.engine.market().policies.len();
                let policy = self.rng.gen_bool(0.5).then(|| PolicyId(self.id(np)));
                ("request_tenancy", self.world.engine.request_tenancy(&who, lot, terms, policy).map(drop))
            }
            6 => {
                let reqs: Vec<_> = self.world.engine.market().tenancy_requests.values().map(|r| (r.id, r.lot)).collect();
                let Some((r, lot)) = self.pick(&reqs) else { return ("approve_tenancy", Err(Error::NotFound("none"))) };
                let owner = self.world.engine.lot(lot).unwrap().core.owner;
                let who = self.caller(owner);
                ("approve_tenancy", self.world.engine.approve_tenancy(&who, r).map(drop))
            }
            7 => {
                let rcs: Vec<_> = self.world.engine.market().renting.values().map(|c| (c.id, c.tenant)).collect();
                let Some((c, tenant)) = self.pick(&rcs) else { return ("pay_rent", Err(Error::NotFound("none"))) };
                let who = self.caller(tenant);
                ("pay_rent", self.world.engine.pay_rent(&who, c).map(drop))
            }
            8 => {
                let rcs: Vec<_> = self.world.engine.market().renting.values().map(|c| (c.id, c.tenant)).collect();
                let Some((c, tenant)) = self.pick(&rcs) else { return ("terminate_tenancy", Err(Error::NotFound("none"))) };
                let who = self.caller(tenant);
                ("terminate_tenancy", self.world.engine.terminate_tenancy(&who, c).map(drop))
            }
            9 => {
                let Some((provider, owner)) = self.random_provider() else { return ("register_service_provider", Err(Error::NotFound("none"))) };
                let who = self.caller(owner);
                let sp = self.actor();
                let share = self.rng.gen_range(0..3000);
                ("register_service_provider", self.world.engine.register_service_provider(&who, provider, &sp, share).map(drop))
            }
            10..=12 => ("open_channel", self.random_open()),
            13 | 14 => ("settle_channel", self.random_settle()),
            15 => {
                let open: Vec<_> = self.world.engine.channels().map(|c| (c.id, c.payer)).collect();
                let Some((ch, payer)) = self.pick(&open) else { return ("timeout_refund", Err(Error::NotFound("none"))) };
                let who = self.caller(payer);
                ("timeout_refund", self.world.engine.timeout_refund(&who, &ch).map(drop))
            }
            16 => {
                let dt = self.rng.gen_range(0..20_000);
                ("advance_time", self.world.engine.advance_time(dt).map(drop))
            }
            17 => ("amendment", self.random_amendment()),
            18 => {
                let (a, b) = (self.actor(), self.actor());
                let amount = Funds(self.rng.gen_range(0..START));
                ("transfer", self.world.engine.transfer(&a, &b, amount))
            }
            _ => {
                let lots: Vec<_> = self.world.engine.market().lots.values().map(|l| (l.id, l.core.owner, l.stalls.len() as u32)).collect();
                let Some((lot, owner, n)) = self.pick(&lots) else { return ("observe_occupancy", Err(Error::NotFound("none"))) };
                let who = self.caller(owner);
                let stall = self.rng.gen_range(0..n + 1);
                let plate = format!("P{}", self.rng.gen_range(0..30));
                let plate = self.rng.gen_bool(0.7).then_some(plate.as_str());
                ("observe_occupancy", self.world.engine.observe_occupancy(&who, lot, stall, plate).map(drop))
            }
        }
    }

    fn random_provider(&mut self) -> Option<(ProviderId, Address)> {
        let m = self.world.engine.market();
        let mut all: Vec<_> = m.lots.values().map(|l| (ProviderId::Lot(l.id), l.core.owner)).collect();
        all.extend(m.tenants.values().map(|t| (ProviderId::Tenant(t.contract), t.core.owner)));
        self.pick(&all)
    }

    fn random_open(&mut self) -> Result<(), Error> {
        let cars: Vec<_> = self.world.engine.system().cars.values().map(|c| (c.id, c.owner)).collect();
        let Some((car, owner)) = self.pick(&cars) else { return Err(Error::NotFound("none")) };
        let Some((provider, _)) = self.random_provider() else { return Err(Error::NotFound("none")) };
        let lot = self.world.engine.lot_of(provider)?;
        let n = self.world.engine.lot(lot)?.stalls.len() as u32;
        let who = self.caller(owner);
        let now = self.world.engine.now();
        let until = TimePoint(now.0 + self.rng.gen_range(0..5 * 3600));
        let price = self
            .world
            .engine
            .provider(provider)
            .and_then(|p| self.world.engine.policy(p.policy))
            .and_then(|p| p.total_price(now, until))
            .map_or(0, |f| f.0);
        let deposit = Funds((price + self.rng.gen_range(0..3000)).saturating_sub(self.rng.gen_range(0..500)));
        let sps: Vec<_> = self.world.engine.service_providers_of(provider).map(|s| s.id).collect();
        let sp = if self.rng.gen_bool(0.5) { self.pick(&sps) } else { None };
        let req = OpenChannel { car, provider, stall: self.rng.gen_range(0..n + 1), until, deposit, sp };
        self.world.engine.open_channel(&who, req).map(drop)
    }

    fn random_settle(&mut self) -> Result<(), Error> {
        let open: Vec<_> = self.world.engine.channels().filter(|c| c.is_open()).map(|c| c.id).collect();
        let Some(id) = self.pick(&open) else { return Err(Error::NotFound("none")) };
        let e = &self.world.engine;
        let ch = e.channel(&id)?;
        let owner = e.provider(ch.payee)?.owner;
        let mut session = e.open_session(&id)?;
        let keys = &self.world.keys[&ch.payer];
        let t = TimePoint(self.rng.gen_range(ch.opened_at.0..=ch.expiry.0 + 1));
        let mut v = session.next_voucher(ch, keys, t)?;
        match self.rng.gen_range(0..10) {
            0 => v.cumulative = Funds(v.cumulative.0 + 1),
            1 => v = sign_voucher(&self.world.keys[&owner], id, v.cumulative),
            2 => v = sign_voucher(keys, id, Funds(ch.locked.0 + 1)),
            _ => {}
        }
        let who = self.caller(owner);
        let result = self.world.engine.settle_channel(&who, &v);
        if result.is_ok() {
            self.settled += 1;
        }
        result.map(drop)
    }

    fn random_amendment(&mut self) -> Result<(), Error> {
        let e = &self.world.engine;
        let admin = self.world.admin();
        let mut targets: Vec<_> = e
            .system()
            .landlord_contracts
            .values()
            .map(|c| (ContractRef::Landlord(c.id), admin, c.landlord))
            .collect();
        for rc in e.market().renting.values() {
            targets.push((ContractRef::Renting(rc.id), e.lot(rc.lot)?.core.owner, rc.tenant));
        }
        let pending: Vec<_> = e
            .system()
            .amendments
            .values()
            .filter(|a| a.status == registry::AmendmentStatus::Proposed)
            .map(|a| (a.id, a.proposer, a.target))
            .collect();
        if self.rng.gen_bool(0.5) && !pending.is_empty() {
            let (id, proposer, target) = self.pick(&pending).unwrap();
            let (a, b) = targets.iter().find(|t| t.0 == target).map(|t| (t.1, t.2)).unwrap();
            let other = if proposer == a { b } else { a };
            let who = self.caller(other);
            let accept = self.rng.gen_bool(0.7);
            return self.world.engine.resolve_amendment(&who, id, accept).map(drop);
        }
        let Some((target, a, b)) = self.pick(&targets) else { return Err(Error::NotFound("none")) };
        let party = if self.rng.gen_bool(0.5) { a } else { b };
        let who = self.caller(party);
        let change = match target {
            ContractRef::Landlord(_) => TermsChange::Landlord(LandlordChanges {
                tax_rate: Some(self.rng.gen_range(0..4000)),
                ..Default::default()
            }),
            ContractRef::Renting(c) => {
                let lot = self.world.engine.renting_contract(c)?.lot;
                let n = self.world.engine.lot(lot)?.stalls.len() as u32;
                TermsChange::Renting(RentingChanges {
                    stalls: self.rng.gen_bool(0.5).then(|| [self.rng.gen_range(0..n)].into()),
                    landlord_share: Some(self.rng.gen_range(0..4000)),
                    ..Default::default()
                })
            }
        };
        self.world.engine.propose_amendment(&who, target, change).map(drop)
    }
}
