//! Scenario files: genesis accounts plus a timed list of actions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use parkchain_core::{LandlordChanges, RentingChanges};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SUPPORTED_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Administrator,
    Landlord,
    Tenant,
    Driver,
    ServiceProvider,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisAccount {
    pub actor: String,
    pub role: Role,
    pub balance: u64,
}

/// A step as written in the file; `args` is checked against `action` later
/// so that every bad step gets its own diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStep {
    pub at: u64,
    pub actor: String,
    pub action: String,
    #[serde(default)]
    pub args: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub version: u32,
    pub seed: u64,
    #[serde(default = "default_grace")]
    pub grace: u64,
    pub genesis: Vec<GenesisAccount>,
    #[serde(default)]
    pub steps: Vec<RawStep>,
}

fn default_grace() -> u64 {
    parkchain_core::DEFAULT_GRACE
}

/// Exactly one of `rates` (168 entries, Monday 00:00 first) or `uniform`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyArgs {
    #[serde(rename = "as")]
    pub name: String,
    #[serde(default)]
    pub rates: Option<Vec<u64>>,
    #[serde(default)]
    pub uniform: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", content = "args", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    DeployPolicy(PolicyArgs),
    Transfer {
        to: String,
        amount: u64,
    },
    RequestLandlordRegistration {
        #[serde(rename = "as")]
        name: String,
        tax_rate: u32,
        #[serde(default)]
        land_info: String,
        valid_from: u64,
        valid_until: u64,
    },
    DecideRegistration {
        request: String,
        approve: bool,
        /// Name for the landlord contract deployed on approval.
        #[serde(rename = "as", default)]
        name: Option<String>,
    },
    RegisterCar {
        #[serde(rename = "as")]
        name: String,
        plate: String,
    },
    CreateParkingLot {
        #[serde(rename = "as")]
        name: String,
        contract: String,
        stalls: u32,
        policy: String,
        #[serde(default)]
        location: String,
    },
    RequestTenancy {
        #[serde(rename = "as")]
        name: String,
        lot: String,
        stalls: BTreeSet<u32>,
        rent_fee: u64,
        period: u64,
        landlord_share: u32,
        penalty_rate: u32,
        #[serde(default)]
        policy: Option<String>,
    },
    ApproveTenancy {
        request: String,
        /// Name for the renting contract, which also names the tenant provider.
        #[serde(rename = "as")]
        name: String,
    },
    PayRent {
        contract: String,
    },
    TerminateTenancy {
        contract: String,
    },
    SetPaymentPolicy {
        provider: String,
        policy: String,
    },
    RegisterServiceProvider {
        #[serde(rename = "as")]
        name: String,
        provider: String,
        sp: String,
        share: u32,
    },
    ProposeAmendment {
        #[serde(rename = "as")]
        name: String,
        contract: String,
        changes: Value,
    },
    ResolveAmendment {
        amendment: String,
        accept: bool,
    },
    StartParking {
        #[serde(rename = "as")]
        name: String,
        car: String,
        provider: String,
        stall: u32,
        until: u64,
        deposit: u64,
        #[serde(default)]
        sp: Option<String>,
    },
    EmitVoucher {
        channel: String,
    },
    AcceptVoucher {
        channel: String,
    },
    SettleChannel {
        channel: String,
    },
    TimeoutRefund {
        channel: String,
    },
    ObserveOccupancy {
        lot: String,
        stall: u32,
        #[serde(default)]
        plate: Option<String>,
    },
}

/// Kinds of entity a scenario name can be bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Policy,
    RegistrationRequest,
    LandlordContract,
    Car,
    Lot,
    TenancyRequest,
    RentingContract,
    ServiceProvider,
    Amendment,
    Channel,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Kind::Policy => "policy",
            Kind::RegistrationRequest => "registration request",
            Kind::LandlordContract => "landlord contract",
            Kind::Car => "car",
            Kind::Lot => "lot",
            Kind::TenancyRequest => "tenancy request",
            Kind::RentingContract => "renting contract",
            Kind::ServiceProvider => "service provider",
            Kind::Amendment => "amendment",
            Kind::Channel => "channel",
        };
        f.write_str(s)
    }
}

impl Action {
    /// The name this action binds, with its kind.
    pub fn binds(&self) -> Option<(&str, Kind)> {
        match self {
            Action::DeployPolicy(p) => Some((&p.name, Kind::Policy)),
            Action::RequestLandlordRegistration { name, .. } => Some((name, Kind::RegistrationRequest)),
            Action::DecideRegistration { name, .. } => name.as_deref().map(|n| (n, Kind::LandlordContract)),
            Action::RegisterCar { name, .. } => Some((name, Kind::Car)),
            Action::CreateParkingLot { name, .. } => Some((name, Kind::Lot)),
            Action::RequestTenancy { name, .. } => Some((name, Kind::TenancyRequest)),
            Action::ApproveTenancy { name, .. } => Some((name, Kind::RentingContract)),
            Action::RegisterServiceProvider { name, .. } => Some((name, Kind::ServiceProvider)),
            Action::ProposeAmendment { name, .. } => Some((name, Kind::Amendment)),
            Action::StartParking { name, .. } => Some((name, Kind::Channel)),
            _ => None,
        }
    }

    /// Names this action refers to, with the kinds each may have.
    pub fn references(&self) -> Vec<(&str, &'static [Kind])> {
        const PROVIDER: &[Kind] = &[Kind::Lot, Kind::RentingContract];
        const CONTRACT: &[Kind] = &[Kind::LandlordContract, Kind::RentingContract];
        let mut refs: Vec<(&str, &'static [Kind])> = Vec::new();
        match self {
            Action::DeployPolicy(_)
            | Action::Transfer { .. }
            | Action::RequestLandlordRegistration { .. }
            | Action::RegisterCar { .. } => {}
            Action::DecideRegistration { request, .. } => refs.push((request, &[Kind::RegistrationRequest])),
            Action::CreateParkingLot { contract, policy, .. } => {
                refs.push((contract, &[Kind::LandlordContract]));
                refs.push((policy, &[Kind::Policy]));
            }
            Action::RequestTenancy { lot, policy, .. } => {
                refs.push((lot, &[Kind::Lot]));
                if let Some(p) = policy {
                    refs.push((p, &[Kind::Policy]));
                }
            }
            Action::ApproveTenancy { request, .. } => refs.push((request, &[Kind::TenancyRequest])),
            Action::PayRent { contract } | Action::TerminateTenancy { contract } => {
                refs.push((contract, &[Kind::RentingContract]))
            }
            Action::SetPaymentPolicy { provider, policy } => {
                refs.push((provider, PROVIDER));
                refs.push((policy, &[Kind::Policy]));
            }
            Action::RegisterServiceProvider { provider, .. } => refs.push((provider, PROVIDER)),
            Action::ProposeAmendment { contract, .. } => refs.push((contract, CONTRACT)),
            Action::ResolveAmendment { amendment, .. } => refs.push((amendment, &[Kind::Amendment])),
            Action::StartParking { car, provider, sp, .. } => {
                refs.push((car, &[Kind::Car]));
                refs.push((provider, PROVIDER));
                if let Some(sp) = sp {
                    refs.push((sp, &[Kind::ServiceProvider]));
                }
            }
            Action::EmitVoucher { channel }
            | Action::AcceptVoucher { channel }
            | Action::SettleChannel { channel }
            | Action::TimeoutRefund { channel } => refs.push((channel, &[Kind::Channel])),
            Action::ObserveOccupancy { lot, .. } => refs.push((lot, &[Kind::Lot])),
        }
        refs
    }

    /// Actors (not entities) named in the arguments.
    pub fn actor_args(&self) -> Vec<&str> {
        match self {
            Action::Transfer { to, .. } => vec![to],
            Action::RegisterServiceProvider { sp, .. } => vec![sp],
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub at: u64,
    pub actor: String,
    pub action: Action,
}

/// A scenario that passed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub version: u32,
    pub seed: u64,
    pub grace: u64,
    pub genesis: Vec<GenesisAccount>,
    pub steps: Vec<Step>,
}

impl Scenario {
    pub fn administrator(&self) -> &GenesisAccount {
        self.genesis.iter().find(|g| g.role == Role::Administrator).expect("validated")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// Offending step, if the problem is local to one.
    pub step: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(i) => write!(f, "step {i}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{} problem(s):\n{}", .0.len(), .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
}

fn diag(step: Option<usize>, message: impl Into<String>) -> Diagnostic {
    Diagnostic { step, message: message.into() }
}

fn parse_action(step: &RawStep) -> Result<Action, String> {
    let tagged = serde_json::json!({ "action": step.action, "args": step.args });
    let action: Action = serde_json::from_value(tagged).map_err(|e| e.to_string())?;
    if let Action::DeployPolicy(p) = &action {
        match (&p.rates, p.uniform) {
            (Some(r), None) if r.len() != parkchain_core::payments::HOURS_PER_WEEK => {
                return Err(format!("rates must have 168 entries, got {}", r.len()))
            }
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err("deploy_policy needs exactly one of `rates` and `uniform`".into()),
        }
    }
    Ok(action)
}

fn check_changes(changes: &Value, kind: Kind) -> Result<(), String> {
    let r = match kind {
        Kind::LandlordContract => serde_json::from_value::<LandlordChanges>(changes.clone()).map(drop),
        _ => serde_json::from_value::<RentingChanges>(changes.clone()).map(drop),
    };
    r.map_err(|e| format!("changes for a {kind}: {e}"))
}

/// Schema and referential checks, no execution. Empty means valid.
pub fn check(raw: &RawScenario) -> (Vec<Diagnostic>, Vec<Step>) {
    let mut out = Vec::new();
    if raw.version != SUPPORTED_VERSION {
        out.push(diag(None, format!("unsupported version {} (expected {SUPPORTED_VERSION})", raw.version)));
    }
    let mut actors = BTreeSet::new();
    for g in &raw.genesis {
        if g.actor.is_empty() {
            out.push(diag(None, "empty actor id in genesis"));
        }
        if !actors.insert(g.actor.as_str()) {
            out.push(diag(None, format!("duplicate actor `{}` in genesis", g.actor)));
        }
    }
    let admins = raw.genesis.iter().filter(|g| g.role == Role::Administrator).count();
    if admins != 1 {
        out.push(diag(None, format!("genesis needs exactly one administrator, found {admins}")));
    }
    if raw.genesis.iter().try_fold(0u64, |acc, g| acc.checked_add(g.balance)).is_none() {
        out.push(diag(None, "genesis balances overflow"));
    }

    let mut names: BTreeMap<String, Kind> = BTreeMap::new();
    let mut steps = Vec::new();
    let mut last_at = 0;
    for (i, s) in raw.steps.iter().enumerate() {
        let here = Some(i);
        if s.at < last_at {
            out.push(diag(here, format!("at {} is before the previous step's {last_at}", s.at)));
        }
        last_at = last_at.max(s.at);
        if !actors.contains(s.actor.as_str()) {
            out.push(diag(here, format!("unknown actor `{}`", s.actor)));
        }
        let action = match parse_action(s) {
            Ok(a) => a,
            Err(e) => {
                out.push(diag(here, format!("{}: {e}", s.action)));
                continue;
            }
        };
        for a in action.actor_args() {
            if !actors.contains(a) {
                out.push(diag(here, format!("unknown actor `{a}`")));
            }
        }
        for (name, kinds) in action.references() {
            match names.get(name) {
                None => out.push(diag(here, format!("`{name}` is not bound by an earlier step"))),
                Some(k) if !kinds.contains(k) => {
                    out.push(diag(here, format!("`{name}` is a {k}, expected {}", kinds[0])))
                }
                Some(k) => {
                    if let Action::ProposeAmendment { changes, .. } = &action {
                        if let Err(e) = check_changes(changes, *k) {
                            out.push(diag(here, e));
                        }
                    }
                }
            }
        }
        if let Some((name, kind)) = action.binds() {
            if name.is_empty() {
                out.push(diag(here, "empty name in `as`"));
            } else if names.insert(name.to_owned(), kind).is_some() {
                out.push(diag(here, format!("name `{name}` is already bound")));
            }
        }
        steps.push(Step { at: s.at, actor: s.actor.clone(), action });
    }
    (out, steps)
}

pub fn parse(text: &str) -> Result<Scenario, LoadError> {
    let raw: RawScenario =
        serde_json::from_str(text).map_err(|e| LoadError::Invalid(vec![diag(None, format!("schema: {e}"))]))?;
    let (diagnostics, steps) = check(&raw);
    if !diagnostics.is_empty() {
        return Err(LoadError::Invalid(diagnostics));
    }
    Ok(Scenario { version: raw.version, seed: raw.seed, grace: raw.grace, genesis: raw.genesis, steps })
}

pub fn load(path: &Path) -> Result<Scenario, LoadError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| LoadError::Io { path: path.display().to_string(), source })?;
    parse(&text)
}

/// Diagnostics for the file at `path`; empty means valid. Fails only if unreadable.
pub fn validate_scenario(path: &Path) -> Result<Vec<Diagnostic>, LoadError> {
    match load(path) {
        Ok(_) => Ok(Vec::new()),
        Err(LoadError::Invalid(d)) => Ok(d),
        Err(e) => Err(e),
    }
}
