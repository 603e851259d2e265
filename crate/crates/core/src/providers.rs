//! Parking providers (lots and the tenants renting parts of them), renting
//! contracts with rent and late penalties, service providers, and stall
//! occupancy reports.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::ids::{
    self, LandlordContractId, LotId, PolicyId, ProviderId, RentingContractId, ServiceProviderId, StallId,
    TenancyRequestId,
};
use crate::ledger::{payload, Address, ChannelId, EventKind, EventRecord, Funds, TimePoint};
use crate::payments::PaymentPolicy;
use crate::registry::{RequestStatus, MAX_BPS};

/// State every provider has: who runs it and how it prices parking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProviderCore {
    pub owner: Address,
    pub policy: PolicyId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ServiceProvider {
    pub id: ServiceProviderId,
    pub provider: ProviderId,
    pub address: Address,
    /// Basis points of each claimed payment routed to the service provider.
    pub share: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    Lot,
    Tenant(RentingContractId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stall {
    pub id: StallId,
    pub controller: Controller,
    /// Last observed plate, if any.
    pub occupied_by: Option<String>,
    pub session: Option<ChannelId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParkingLot {
    pub id: LotId,
    pub core: ProviderCore,
    pub landlord_contract: LandlordContractId,
    pub stalls: Vec<Stall>,
    pub rating: i64,
    pub location: String,
}

impl ParkingLot {
    pub fn stall(&self, stall: StallId) -> Result<&Stall> {
        self.stalls.get(stall as usize).ok_or(Error::UnknownStall(stall))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RentingTerms {
    pub stalls: BTreeSet<StallId>,
    /// Due once per period.
    pub rent_fee: Funds,
    pub period: u64,
    /// Basis points of each claimed payment on the tenant's stalls owed to the landlord.
    pub landlord_share: u32,
    /// Basis points of the rent fee charged per whole period of lateness.
    pub penalty_rate: u32,
}

impl RentingTerms {
    pub fn validate(&self) -> Result<()> {
        if self.stalls.is_empty() {
            return Err(Error::InvalidTerms("stall subset must not be empty"));
        }
        if self.period == 0 {
            return Err(Error::InvalidTerms("rent period must be positive"));
        }
        if self.landlord_share > MAX_BPS {
            return Err(Error::InvalidTerms("landlord share above 10000 bp"));
        }
        Ok(())
    }
}

/// Whole-field replacements for renting contract terms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RentingChanges {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stalls: Option<BTreeSet<StallId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rent_fee: Option<Funds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landlord_share: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_rate: Option<u32>,
}

impl RentingChanges {
    pub fn is_empty(&self) -> bool {
        *self == RentingChanges::default()
    }

    pub fn apply(&self, terms: &RentingTerms) -> RentingTerms {
        RentingTerms {
            stalls: self.stalls.clone().unwrap_or_else(|| terms.stalls.clone()),
            rent_fee: self.rent_fee.unwrap_or(terms.rent_fee),
            period: self.period.unwrap_or(terms.period),
            landlord_share: self.landlord_share.unwrap_or(terms.landlord_share),
            penalty_rate: self.penalty_rate.unwrap_or(terms.penalty_rate),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RentingStatus {
    Active,
    Terminated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RentingContract {
    pub id: RentingContractId,
    pub lot: LotId,
    pub tenant: Address,
    pub terms: RentingTerms,
    pub next_due: TimePoint,
    pub status: RentingStatus,
}

impl RentingContract {
    pub fn is_active(&self) -> bool {
        self.status == RentingStatus::Active
    }
}

/// The provider run by a tenant under one renting contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Tenant {
    pub contract: RentingContractId,
    pub core: ProviderCore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TenancyRequest {
    pub id: TenancyRequestId,
    pub lot: LotId,
    pub tenant: Address,
    pub terms: RentingTerms,
    /// Tenant's own policy; the lot's policy is used when absent.
    pub policy: Option<PolicyId>,
    pub status: RequestStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RentDue {
    pub rent: Funds,
    pub penalty: Funds,
    pub periods_late: u64,
}

impl RentDue {
    pub fn total(&self) -> Result<Funds> {
        self.rent.checked_add(self.penalty)
    }
}

/// Rent owed when paying at `now` for the period due at `next_due`.
///
/// The penalty grows linearly with the number of whole periods elapsed past
/// `next_due`: `floor(rent_fee * penalty_rate * k / 10000)`.
pub fn rent_due(terms: &RentingTerms, next_due: TimePoint, now: TimePoint) -> Result<RentDue> {
    let periods_late = now.0.saturating_sub(next_due.0) / terms.period;
    let penalty = u128::from(terms.rent_fee.0) * u128::from(terms.penalty_rate) * u128::from(periods_late) / 10_000;
    let penalty = u64::try_from(penalty).map_err(|_| Error::Overflow)?;
    Ok(RentDue { rent: terms.rent_fee, penalty: Funds(penalty), periods_late })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RentPayment {
    pub contract: RentingContractId,
    pub due: RentDue,
    pub total: Funds,
    pub paid_at: TimePoint,
    pub next_due: TimePoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupancy {
    Ok,
    /// A car stands on a stall without a session, or the wrong car on one.
    Violation,
    /// A stall with an active session reports no car.
    Mismatch,
}

impl Occupancy {
    fn event_kind(self) -> EventKind {
        match self {
            Occupancy::Ok => EventKind::OccupancyOk,
            Occupancy::Violation => EventKind::OccupancyViolation,
            Occupancy::Mismatch => EventKind::OccupancyMismatch,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeployedPolicy {
    pub owner: Address,
    pub policy: Arc<dyn PaymentPolicy>,
}

#[derive(Debug, Clone, Default)]
pub struct Market {
    pub policies: BTreeMap<PolicyId, DeployedPolicy>,
    pub lots: BTreeMap<LotId, ParkingLot>,
    pub tenancy_requests: BTreeMap<TenancyRequestId, TenancyRequest>,
    pub renting: BTreeMap<RentingContractId, RentingContract>,
    pub tenants: BTreeMap<RentingContractId, Tenant>,
    pub service_providers: BTreeMap<ServiceProviderId, ServiceProvider>,
}

impl Engine {
    pub fn market(&self) -> &Market {
        &self.market
    }

    pub fn lot(&self, id: LotId) -> Result<&ParkingLot> {
        self.market.lots.get(&id).ok_or(Error::NotFound("parking lot"))
    }

    pub fn renting_contract(&self, id: RentingContractId) -> Result<&RentingContract> {
        self.market.renting.get(&id).ok_or(Error::NotFound("renting contract"))
    }

    pub fn tenancy_request(&self, id: TenancyRequestId) -> Result<&TenancyRequest> {
        self.market.tenancy_requests.get(&id).ok_or(Error::NotFound("tenancy request"))
    }

    pub fn service_provider(&self, id: ServiceProviderId) -> Result<&ServiceProvider> {
        self.market.service_providers.get(&id).ok_or(Error::NotFound("service provider"))
    }

    pub fn policy(&self, id: PolicyId) -> Result<&Arc<dyn PaymentPolicy>> {
        self.market.policies.get(&id).map(|p| &p.policy).ok_or(Error::NotFound("payment policy"))
    }

    pub fn provider(&self, id: ProviderId) -> Result<&ProviderCore> {
        match id {
            ProviderId::Lot(lot) => self.lot(lot).map(|l| &l.core),
            ProviderId::Tenant(c) => self.market.tenants.get(&c).map(|t| &t.core).ok_or(Error::NotFound("tenant")),
        }
    }

    fn provider_mut(&mut self, id: ProviderId) -> Result<&mut ProviderCore> {
        match id {
            ProviderId::Lot(lot) => self.market.lots.get_mut(&lot).map(|l| &mut l.core),
            ProviderId::Tenant(c) => self.market.tenants.get_mut(&c).map(|t| &mut t.core),
        }
        .ok_or(Error::NotFound("provider"))
    }

    /// The lot a provider's stalls belong to.
    pub fn lot_of(&self, id: ProviderId) -> Result<LotId> {
        match id {
            ProviderId::Lot(lot) => self.lot(lot).map(|_| lot),
            ProviderId::Tenant(c) => self.renting_contract(c).map(|r| r.lot),
        }
    }

    /// Tax rate of the landlord contract governing a lot, as of now.
    pub fn tax_rate_of(&self, lot: LotId) -> Result<u32> {
        let contract = self.lot(lot)?.landlord_contract;
        Ok(self.landlord_contract(contract)?.terms.tax_rate)
    }

    /// Landlord share of a provider's parking income: zero for the lot itself.
    pub fn landlord_share_of(&self, id: ProviderId) -> Result<u32> {
        match id {
            ProviderId::Lot(_) => Ok(0),
            ProviderId::Tenant(c) => self.renting_contract(c).map(|r| r.terms.landlord_share),
        }
    }

    pub fn service_providers_of(&self, id: ProviderId) -> impl Iterator<Item = &ServiceProvider> {
        self.market.service_providers.values().filter(move |sp| sp.provider == id)
    }

    /// Checks that tax, landlord share and every service provider share
    /// of each provider on the lot fit in 10000 basis points together.
    pub(crate) fn check_lot_share_budget(&self, lot: LotId) -> Result<()> {
        let tax = u64::from(self.tax_rate_of(lot)?);
        let mut providers = vec![(ProviderId::Lot(lot), 0u64)];
        providers.extend(
            self.market
                .renting
                .values()
                .filter(|r| r.lot == lot && r.is_active())
                .map(|r| (ProviderId::Tenant(r.id), u64::from(r.terms.landlord_share))),
        );
        for (provider, landlord_share) in providers {
            let base = tax + landlord_share;
            let worst = self.service_providers_of(provider).map(|sp| u64::from(sp.share)).max().unwrap_or(0);
            if base + worst > u64::from(MAX_BPS) {
                return Err(Error::ShareOverflow(base + worst));
            }
        }
        Ok(())
    }

    /// Publishes a payment policy that any provider may then adopt.
    pub fn deploy_policy(&mut self, owner: &Address, policy: Arc<dyn PaymentPolicy>) -> Result<PolicyId> {
        if !self.ledger.contains(owner) {
            return Err(Error::UnknownAccount(*owner));
        }
        let id = PolicyId(ids::next(&self.market.policies));
        self.ledger.record(
            EventKind::PolicyDeployed,
            payload(json!({ "policy": id, "owner": owner, "definition": policy.describe() })),
        );
        self.market.policies.insert(id, DeployedPolicy { owner: *owner, policy });
        Ok(id)
    }

    /// Deploys a lot under the landlord's active contract. The contract's
    /// existence is the administrator's approval.
    pub fn create_parking_lot(
        &mut self,
        landlord: &Address,
        contract: LandlordContractId,
        stalls: u32,
        policy: PolicyId,
        location: &str,
    ) -> Result<LotId> {
        let c = self.landlord_contract(contract)?;
        self.require(landlord, &c.landlord)?;
        if !c.is_active_at(self.now()) {
            return Err(Error::InactiveContract);
        }
        if stalls == 0 {
            return Err(Error::NoStalls);
        }
        self.policy(policy)?;
        let id = LotId(ids::next(&self.market.lots));
        self.ledger.record(
            EventKind::LotCreated,
            payload(json!({
                "lot": id, "landlord": landlord, "contract": contract,
                "stalls": stalls, "policy": policy, "location": location,
            })),
        );
        let stalls = (0..stalls)
            .map(|i| Stall { id: i, controller: Controller::Lot, occupied_by: None, session: None })
            .collect();
        self.market.lots.insert(
            id,
            ParkingLot {
                id,
                core: ProviderCore { owner: *landlord, policy },
                landlord_contract: contract,
                stalls,
                rating: 0,
                location: location.to_owned(),
            },
        );
        self.system.lots.insert(id, contract);
        Ok(id)
    }

    /// Whether the lot may currently take new business.
    fn lot_operating(&self, lot: LotId) -> Result<()> {
        let contract = self.lot(lot)?.landlord_contract;
        if self.landlord_contract(contract)?.is_active_at(self.now()) {
            Ok(())
        } else {
            Err(Error::InactiveContract)
        }
    }

    /// Stalls must exist and be controlled by the lot itself.
    fn check_stalls_free(&self, lot: &ParkingLot, stalls: &BTreeSet<StallId>) -> Result<()> {
        for &s in stalls {
            if lot.stall(s)?.controller != Controller::Lot {
                return Err(Error::StallOverlap(s));
            }
        }
        Ok(())
    }

    pub fn request_tenancy(
        &mut self,
        tenant: &Address,
        lot: LotId,
        terms: RentingTerms,
        policy: Option<PolicyId>,
    ) -> Result<TenancyRequestId> {
        if !self.ledger.contains(tenant) {
            return Err(Error::UnknownAccount(*tenant));
        }
        self.lot_operating(lot)?;
        terms.validate()?;
        self.check_stalls_free(self.lot(lot)?, &terms.stalls)?;
        let base = u64::from(self.tax_rate_of(lot)?) + u64::from(terms.landlord_share);
        if base > u64::from(MAX_BPS) {
            return Err(Error::ShareOverflow(base));
        }
        if let Some(p) = policy {
            self.policy(p)?;
        }
        let id = TenancyRequestId(ids::next(&self.market.tenancy_requests));
        self.ledger.record(
            EventKind::TenancyRequested,
            payload(json!({ "request": id, "lot": lot, "tenant": tenant, "terms": terms, "policy": policy })),
        );
        self.market.tenancy_requests.insert(
            id,
            TenancyRequest { id, lot, tenant: *tenant, terms, policy, status: RequestStatus::Pending },
        );
        Ok(id)
    }

    /// The lot owner approves a pending request, deploying the renting
    /// contract and handing the stalls over to the tenant.
    pub fn approve_tenancy(&mut self, landlord: &Address, request: TenancyRequestId) -> Result<RentingContractId> {
        let req = self.tenancy_request(request)?.clone();
        let lot = self.lot(req.lot)?;
        self.require(landlord, &lot.core.owner)?;
        if req.status != RequestStatus::Pending {
            return Err(Error::NotPending);
        }
        self.lot_operating(req.lot)?;
        for &s in &req.terms.stalls {
            let stall = lot.stall(s)?;
            if stall.controller != Controller::Lot {
                return Err(Error::StaleTenancy(s));
            }
            if stall.session.is_some() {
                return Err(Error::StallBusy(s));
            }
        }
        let base = u64::from(self.tax_rate_of(req.lot)?) + u64::from(req.terms.landlord_share);
        if base > u64::from(MAX_BPS) {
            return Err(Error::ShareOverflow(base));
        }
        let policy = req.policy.unwrap_or(lot.core.policy);
        let next_due = self.now().checked_add(req.terms.period)?;
        let id = RentingContractId(ids::next(&self.market.renting));
        self.ledger.record(
            EventKind::TenancyApproved,
            payload(json!({
                "request": request, "contract": id, "lot": req.lot, "tenant": req.tenant,
                "terms": req.terms, "next_due": next_due, "policy": policy,
            })),
        );
        let lot = self.market.lots.get_mut(&req.lot).expect("checked");
        for &s in &req.terms.stalls {
            lot.stalls[s as usize].controller = Controller::Tenant(id);
        }
        self.market.tenancy_requests.get_mut(&request).expect("checked").status = RequestStatus::Approved;
        self.market.tenants.insert(id, Tenant { contract: id, core: ProviderCore { owner: req.tenant, policy } });
        self.market.renting.insert(
            id,
            RentingContract {
                id,
                lot: req.lot,
                tenant: req.tenant,
                terms: req.terms,
                next_due,
                status: RentingStatus::Active,
            },
        );
        Ok(id)
    }

    /// Pays the rent for the period due at `next_due`, plus any late penalty.
    pub fn pay_rent(&mut self, tenant: &Address, contract: RentingContractId) -> Result<RentPayment> {
        let c = self.renting_contract(contract)?;
        self.require(tenant, &c.tenant)?;
        if !c.is_active() {
            return Err(Error::InactiveContract);
        }
        let now = self.now();
        let due = rent_due(&c.terms, c.next_due, now)?;
        let total = due.total()?;
        let next_due = c.next_due.checked_add(c.terms.period)?;
        let landlord = self.lot(c.lot)?.core.owner;
        self.ledger.transfer_with_memo(
            tenant,
            &landlord,
            total,
            payload(json!({
                "purpose": "rent", "contract": contract, "rent": due.rent,
                "penalty": due.penalty, "periods_late": due.periods_late,
            })),
        )?;
        self.market.renting.get_mut(&contract).expect("checked").next_due = next_due;
        Ok(RentPayment { contract, due, total, paid_at: now, next_due })
    }

    /// Ends a renting contract; either party may terminate once none of the
    /// tenant's stalls has an active session. The stalls return to the lot.
    pub fn terminate_tenancy(&mut self, caller: &Address, contract: RentingContractId) -> Result<()> {
        let c = self.renting_contract(contract)?;
        let lot = self.lot(c.lot)?;
        if *caller != c.tenant && *caller != lot.core.owner {
            return Err(Error::Unauthorized(*caller));
        }
        if !c.is_active() {
            return Err(Error::InactiveContract);
        }
        if c.terms.stalls.iter().any(|s| lot.stalls[*s as usize].session.is_some()) {
            return Err(Error::ActiveSessions);
        }
        let lot_id = c.lot;
        self.ledger.record(
            EventKind::TenancyTerminated,
            payload(json!({ "contract": contract, "lot": lot_id, "by": caller })),
        );
        let lot = self.market.lots.get_mut(&lot_id).expect("checked");
        for stall in lot.stalls.iter_mut().filter(|s| s.controller == Controller::Tenant(contract)) {
            stall.controller = Controller::Lot;
        }
        self.market.renting.get_mut(&contract).expect("checked").status = RentingStatus::Terminated;
        Ok(())
    }

    pub(crate) fn amend_renting_contract(&mut self, id: RentingContractId, changes: &RentingChanges) -> Result<()> {
        let c = self.renting_contract(id)?;
        let new = changes.apply(&c.terms);
        new.validate()?;
        let lot = self.lot(c.lot)?;
        for &s in new.stalls.symmetric_difference(&c.terms.stalls) {
            let stall = lot.stall(s)?;
            if stall.session.is_some() {
                return Err(Error::StallBusy(s));
            }
            if !c.terms.stalls.contains(&s) && stall.controller != Controller::Lot {
                return Err(Error::StallOverlap(s));
            }
        }
        let base = u64::from(self.tax_rate_of(c.lot)?) + u64::from(new.landlord_share);
        let worst = self
            .service_providers_of(ProviderId::Tenant(id))
            .map(|sp| u64::from(sp.share))
            .max()
            .unwrap_or(0);
        if base + worst > u64::from(MAX_BPS) {
            return Err(Error::ShareOverflow(base + worst));
        }
        let lot_id = c.lot;
        let lot = self.market.lots.get_mut(&lot_id).expect("checked");
        for stall in lot.stalls.iter_mut() {
            if new.stalls.contains(&stall.id) {
                stall.controller = Controller::Tenant(id);
            } else if stall.controller == Controller::Tenant(id) {
                stall.controller = Controller::Lot;
            }
        }
        self.market.renting.get_mut(&id).expect("checked").terms = new;
        Ok(())
    }

    /// Swaps the policy used for sessions started from now on.
    pub fn set_payment_policy(&mut self, caller: &Address, provider: ProviderId, policy: PolicyId) -> Result<()> {
        self.require(caller, &self.provider(provider)?.owner)?;
        if let ProviderId::Tenant(c) = provider {
            if !self.renting_contract(c)?.is_active() {
                return Err(Error::InactiveContract);
            }
        }
        self.policy(policy)?;
        self.ledger.record(EventKind::PolicySet, payload(json!({ "provider": provider, "policy": policy })));
        self.provider_mut(provider)?.policy = policy;
        Ok(())
    }

    pub fn register_service_provider(
        &mut self,
        caller: &Address,
        provider: ProviderId,
        sp: &Address,
        share: u32,
    ) -> Result<ServiceProviderId> {
        self.require(caller, &self.provider(provider)?.owner)?;
        if !self.ledger.contains(sp) {
            return Err(Error::UnknownAccount(*sp));
        }
        let lot = self.lot_of(provider)?;
        let total = u64::from(share) + u64::from(self.landlord_share_of(provider)?) + u64::from(self.tax_rate_of(lot)?);
        if total > u64::from(MAX_BPS) {
            return Err(Error::ShareOverflow(total));
        }
        let id = ServiceProviderId(ids::next(&self.market.service_providers));
        self.ledger.record(
            EventKind::ServiceProviderRegistered,
            payload(json!({ "service_provider": id, "provider": provider, "address": sp, "share": share })),
        );
        self.market.service_providers.insert(id, ServiceProvider { id, provider, address: *sp, share });
        Ok(id)
    }

    /// Records what the lot's camera sees on a stall and flags disagreement
    /// with the stall's session. Only the lot owner operates the camera.
    pub fn observe_occupancy(
        &mut self,
        caller: &Address,
        lot: LotId,
        stall: StallId,
        plate: Option<&str>,
    ) -> Result<EventRecord> {
        let l = self.lot(lot)?;
        self.require(caller, &l.core.owner)?;
        let s = l.stall(stall)?;
        let session_plate = match s.session {
            Some(ch) => {
                let car = self.channel(&ch)?.car;
                Some(self.car(car)?.plate.as_str())
            }
            None => None,
        };
        let (verdict, reason) = match (session_plate, plate) {
            (None, None) => (Occupancy::Ok, "free"),
            (Some(expected), Some(seen)) if expected == seen => (Occupancy::Ok, "matches_session"),
            (Some(_), Some(_)) => (Occupancy::Violation, "foreign_car_on_session_stall"),
            (None, Some(_)) => (Occupancy::Violation, "car_without_session"),
            (Some(_), None) => (Occupancy::Mismatch, "session_without_car"),
        };
        let event = self.ledger.record(
            verdict.event_kind(),
            payload(json!({
                "lot": lot, "stall": stall, "plate": plate,
                "session": s.session, "reason": reason,
            })),
        );
        self.market.lots.get_mut(&lot).expect("checked").stalls[stall as usize].occupied_by = plate.map(str::to_owned);
        Ok(event)
    }
}
