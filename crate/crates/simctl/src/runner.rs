//! Executes scenario steps against an engine, in time order.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::Arc;

use parkchain_core::ids::*;
use parkchain_core::payments::OffchainSession;
use parkchain_core::*;
use serde::Serialize;

use crate::report::Report;
use crate::scenario::{Action, PolicyArgs, Role, Scenario, Step};

#[derive(Debug, Clone)]
pub struct Actor {
    pub address: Address,
    pub keys: KeyPair,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Binding {
    Policy(PolicyId),
    Request(RequestId),
    LandlordContract(LandlordContractId),
    Car(CarId),
    Lot(LotId),
    TenancyRequest(TenancyRequestId),
    Renting(RentingContractId),
    ServiceProvider(ServiceProviderId),
    Amendment(AmendmentId),
    Channel(ChannelId),
}

/// Both ends of the voucher stream of one channel.
#[derive(Debug, Clone)]
struct Sides {
    payer: OffchainSession,
    payee: OffchainSession,
    /// Last emitted voucher, not yet offered to the payee.
    in_flight: Option<Voucher>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Emit,
    Accept,
    Reject,
}

/// One line of the off-chain trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub step: usize,
    pub time: TimePoint,
    pub kind: TraceKind,
    pub actor: String,
    pub channel: String,
    pub channel_id: ChannelId,
    pub cumulative: Funds,
    pub voucher: Voucher,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StepError {
    #[error(transparent)]
    Engine(#[from] Error),
    #[error("unknown actor `{0}`")]
    UnknownActor(String),
    #[error("`{0}` is not bound to a {1}")]
    Unbound(String, &'static str),
    #[error("no voucher to {1} on channel `{0}`")]
    NoVoucher(String, &'static str),
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error("invalid amendment changes: {0}")]
    Changes(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("step {index} ({action}) at t={at}: {error}")]
pub struct RunError {
    pub index: usize,
    pub action: String,
    pub at: u64,
    pub error: StepError,
}

#[derive(Clone)]
pub struct Runner {
    engine: Engine,
    actors: BTreeMap<String, Actor>,
    genesis: Vec<(String, Address, Funds)>,
    bindings: BTreeMap<String, Binding>,
    sessions: BTreeMap<String, Sides>,
    channel_names: BTreeMap<ChannelId, String>,
    trace: Vec<TraceRecord>,
    steps_done: usize,
}

macro_rules! lookup {
    ($self:ident, $name:expr, $variant:ident, $what:literal) => {
        match $self.bindings.get($name.as_str()) {
            Some(Binding::$variant(id)) => Ok(*id),
            _ => Err(StepError::Unbound($name.clone(), $what)),
        }
    };
}

impl Runner {
    pub fn new(scenario: &Scenario) -> Result<Runner, Error> {
        let mut ledger = Ledger::new();
        let mut actors = BTreeMap::new();
        let mut genesis = Vec::new();
        for g in &scenario.genesis {
            let seed = Seed::derive(scenario.seed, &g.actor);
            let address = ledger.create_account(&seed, Funds(g.balance))?;
            actors.insert(g.actor.clone(), Actor { address, keys: KeyPair::from_seed(&seed), role: g.role });
            genesis.push((g.actor.clone(), address, Funds(g.balance)));
        }
        let admin = actors[&scenario.administrator().actor].address;
        let engine = Engine::new(ledger, admin, EngineConfig { grace: scenario.grace })?;
        Ok(Runner {
            engine,
            actors,
            genesis,
            bindings: BTreeMap::new(),
            sessions: BTreeMap::new(),
            channel_names: BTreeMap::new(),
            trace: Vec::new(),
            steps_done: 0,
        })
    }

    /// Runs every step, stopping at the first failure.
    pub fn run(scenario: &Scenario) -> Result<Runner, RunError> {
        let mut runner = Runner::new(scenario).map_err(|e| RunError {
            index: 0,
            action: "genesis".into(),
            at: 0,
            error: e.into(),
        })?;
        for (index, step) in scenario.steps.iter().enumerate() {
            runner.step(step).map_err(|error| RunError {
                index,
                action: action_name(&step.action),
                at: step.at,
                error,
            })?;
        }
        Ok(runner)
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn actors(&self) -> &BTreeMap<String, Actor> {
        &self.actors
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn channel_names(&self) -> &BTreeMap<ChannelId, String> {
        &self.channel_names
    }

    pub fn channel_id(&self, name: &str) -> Option<ChannelId> {
        match self.bindings.get(name) {
            Some(Binding::Channel(id)) => Some(*id),
            _ => None,
        }
    }

    pub fn report(&self) -> Report {
        Report::fold(&self.genesis, self.engine.ledger().events(), &self.channel_names)
    }

    pub fn write_events<W: Write>(&self, out: W) -> io::Result<()> {
        self.engine.ledger().write_jsonl(out)
    }

    pub fn write_trace<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.trace {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    fn actor(&self, name: &str) -> Result<&Actor, StepError> {
        self.actors.get(name).ok_or_else(|| StepError::UnknownActor(name.into()))
    }

    fn provider(&self, name: &str) -> Result<ProviderId, StepError> {
        match self.bindings.get(name) {
            Some(Binding::Lot(id)) => Ok(ProviderId::Lot(*id)),
            Some(Binding::Renting(id)) => Ok(ProviderId::Tenant(*id)),
            _ => Err(StepError::Unbound(name.to_owned(), "provider")),
        }
    }

    fn bind(&mut self, name: &str, b: Binding) {
        self.bindings.insert(name.to_owned(), b);
    }

    /// Executes one step: the clock moves to `step.at`, then the action runs.
    /// On failure nothing but the clock has moved.
    pub fn step(&mut self, step: &Step) -> Result<(), StepError> {
        let index = self.steps_done;
        self.steps_done += 1;
        self.engine.advance_to(TimePoint(step.at))?;
        let caller = self.actor(&step.actor)?.address;
        match &step.action {
            Action::DeployPolicy(args) => {
                let id = self.engine.deploy_policy(&caller, Arc::new(policy(args)?))?;
                self.bind(&args.name, Binding::Policy(id));
            }
            Action::Transfer { to, amount } => {
                let to = self.actor(to)?.address;
                self.engine.transfer(&caller, &to, Funds(*amount))?;
            }
            Action::RequestLandlordRegistration { name, tax_rate, land_info, valid_from, valid_until } => {
                let terms = LandlordTerms {
                    tax_rate: *tax_rate,
                    land_info: land_info.clone(),
                    valid_from: TimePoint(*valid_from),
                    valid_until: TimePoint(*valid_until),
                };
                let id = self.engine.request_landlord_registration(&caller, terms)?;
                self.bind(name, Binding::Request(id));
            }
            Action::DecideRegistration { request, approve, name } => {
                let r = lookup!(self, request, Request, "registration request")?;
                let contract = self.engine.decide_registration(&caller, r, *approve)?;
                if let (Some(name), Some(c)) = (name, contract) {
                    self.bind(name, Binding::LandlordContract(c));
                }
            }
            Action::RegisterCar { name, plate } => {
                let id = self.engine.register_car(&caller, plate)?;
                self.bind(name, Binding::Car(id));
            }
            Action::CreateParkingLot { name, contract, stalls, policy, location } => {
                let c = lookup!(self, contract, LandlordContract, "landlord contract")?;
                let p = lookup!(self, policy, Policy, "policy")?;
                let id = self.engine.create_parking_lot(&caller, c, *stalls, p, location)?;
                self.bind(name, Binding::Lot(id));
            }
            Action::RequestTenancy { name, lot, stalls, rent_fee, period, landlord_share, penalty_rate, policy } => {
                let lot = lookup!(self, lot, Lot, "lot")?;
                let policy = policy.as_ref().map(|p| lookup!(self, p, Policy, "policy")).transpose()?;
                let terms = RentingTerms {
                    stalls: stalls.clone(),
                    rent_fee: Funds(*rent_fee),
                    period: *period,
                    landlord_share: *landlord_share,
                    penalty_rate: *penalty_rate,
                };
                let id = self.engine.request_tenancy(&caller, lot, terms, policy)?;
                self.bind(name, Binding::TenancyRequest(id));
            }
            Action::ApproveTenancy { request, name } => {
                let r = lookup!(self, request, TenancyRequest, "tenancy request")?;
                let id = self.engine.approve_tenancy(&caller, r)?;
                self.bind(name, Binding::Renting(id));
            }
            Action::PayRent { contract } => {
                let c = lookup!(self, contract, Renting, "renting contract")?;
                self.engine.pay_rent(&caller, c)?;
            }
            Action::TerminateTenancy { contract } => {
                let c = lookup!(self, contract, Renting, "renting contract")?;
                self.engine.terminate_tenancy(&caller, c)?;
            }
            Action::SetPaymentPolicy { provider, policy } => {
                let pr = self.provider(provider)?;
                let p = lookup!(self, policy, Policy, "policy")?;
                self.engine.set_payment_policy(&caller, pr, p)?;
            }
            Action::RegisterServiceProvider { name, provider, sp, share } => {
                let pr = self.provider(provider)?;
                let sp = self.actor(sp)?.address;
                let id = self.engine.register_service_provider(&caller, pr, &sp, *share)?;
                self.bind(name, Binding::ServiceProvider(id));
            }
            Action::ProposeAmendment { name, contract, changes } => {
                let (target, change) = match self.bindings.get(contract.as_str()) {
                    Some(Binding::LandlordContract(id)) => (
                        ContractRef::Landlord(*id),
                        TermsChange::Landlord(
                            serde_json::from_value(changes.clone()).map_err(|e| StepError::Changes(e.to_string()))?,
                        ),
                    ),
                    Some(Binding::Renting(id)) => (
                        ContractRef::Renting(*id),
                        TermsChange::Renting(
                            serde_json::from_value(changes.clone()).map_err(|e| StepError::Changes(e.to_string()))?,
                        ),
                    ),
                    _ => return Err(StepError::Unbound(contract.clone(), "contract")),
                };
                let id = self.engine.propose_amendment(&caller, target, change)?;
                self.bind(name, Binding::Amendment(id));
            }
            Action::ResolveAmendment { amendment, accept } => {
                let a = lookup!(self, amendment, Amendment, "amendment")?;
                self.engine.resolve_amendment(&caller, a, *accept)?;
            }
            Action::StartParking { name, car, provider, stall, until, deposit, sp } => {
                let req = OpenChannel {
                    car: lookup!(self, car, Car, "car")?,
                    provider: self.provider(provider)?,
                    stall: *stall,
                    until: TimePoint(*until),
                    deposit: Funds(*deposit),
                    sp: sp.as_ref().map(|s| lookup!(self, s, ServiceProvider, "service provider")).transpose()?,
                };
                let id = self.engine.start_parking(&caller, req)?;
                let session = self.engine.open_session(&id)?;
                self.sessions.insert(
                    name.clone(),
                    Sides { payer: session.clone(), payee: session, in_flight: None },
                );
                self.channel_names.insert(id, name.clone());
                self.bind(name, Binding::Channel(id));
            }
            Action::EmitVoucher { channel } => {
                let id = lookup!(self, channel, Channel, "channel")?;
                let ch = self.engine.channel(&id)?;
                let keys = &self.actors[&step.actor].keys;
                let sides = self.sessions.get_mut(channel.as_str()).expect("bound with the channel");
                let v = sides.payer.next_voucher(ch, keys, self.engine.now())?;
                sides.in_flight = Some(v);
                self.trace.push(TraceRecord {
                    step: index,
                    time: self.engine.now(),
                    kind: TraceKind::Emit,
                    actor: step.actor.clone(),
                    channel: channel.clone(),
                    channel_id: id,
                    cumulative: v.cumulative,
                    voucher: v,
                });
            }
            Action::AcceptVoucher { channel } => {
                let id = lookup!(self, channel, Channel, "channel")?;
                let ch = self.engine.channel(&id)?;
                let owner = self.engine.provider(ch.payee)?.owner;
                if caller != owner {
                    return Err(Error::Unauthorized(caller).into());
                }
                let sides = self.sessions.get_mut(channel.as_str()).expect("bound with the channel");
                let v = sides.in_flight.take().ok_or_else(|| StepError::NoVoucher(channel.clone(), "accept"))?;
                let kind = if sides.payee.accept_voucher(&v) { TraceKind::Accept } else { TraceKind::Reject };
                self.trace.push(TraceRecord {
                    step: index,
                    time: self.engine.now(),
                    kind,
                    actor: step.actor.clone(),
                    channel: channel.clone(),
                    channel_id: id,
                    cumulative: v.cumulative,
                    voucher: v,
                });
            }
            Action::SettleChannel { channel } => {
                lookup!(self, channel, Channel, "channel")?;
                let sides = &self.sessions[channel.as_str()];
                let v = *sides.payee.best_voucher().ok_or_else(|| StepError::NoVoucher(channel.clone(), "settle"))?;
                self.engine.settle_channel(&caller, &v)?;
            }
            Action::TimeoutRefund { channel } => {
                let id = lookup!(self, channel, Channel, "channel")?;
                self.engine.timeout_refund(&caller, &id)?;
            }
            Action::ObserveOccupancy { lot, stall, plate } => {
                let lot = lookup!(self, lot, Lot, "lot")?;
                self.engine.observe_occupancy(&caller, lot, *stall, plate.as_deref())?;
            }
        }
        Ok(())
    }
}

fn policy(args: &PolicyArgs) -> Result<WeekHourPolicy, StepError> {
    match (&args.rates, args.uniform) {
        (Some(r), None) => WeekHourPolicy::try_from(r.clone()).map_err(StepError::Policy),
        (None, Some(u)) => Ok(WeekHourPolicy::uniform(u)),
        _ => Err(StepError::Policy("exactly one of `rates` and `uniform` is required".into())),
    }
}

pub fn action_name(a: &Action) -> String {
    serde_json::to_value(a).ok().and_then(|v| v["action"].as_str().map(str::to_owned)).unwrap_or_default()
}
