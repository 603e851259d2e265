//! The parking system contract: landlord registration, car records, and
//! two-party amendments of landlord and renting contracts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::ids::{self, AmendmentId, CarId, ContractRef, LandlordContractId, LotId, ProviderId, RequestId, StallId};
use crate::ledger::{payload, Address, ChannelId, EventKind, TimePoint};
use crate::providers::RentingChanges;

pub const MAX_BPS: u32 = 10_000;

/// Terms of the administrator-landlord contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandlordTerms {
    /// Basis points of every claimed parking payment owed to the administrator.
    pub tax_rate: u32,
    pub land_info: String,
    pub valid_from: TimePoint,
    pub valid_until: TimePoint,
}

impl LandlordTerms {
    pub fn validate(&self) -> Result<()> {
        if self.tax_rate > MAX_BPS {
            return Err(Error::InvalidTerms("tax rate above 10000 bp"));
        }
        if self.valid_from >= self.valid_until {
            return Err(Error::InvalidTerms("valid_from must precede valid_until"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractStatus {
    Active,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LandlordContract {
    pub id: LandlordContractId,
    pub landlord: Address,
    pub terms: LandlordTerms,
}

impl LandlordContract {
    /// Expiry is evaluated lazily against the ledger clock.
    pub fn status_at(&self, now: TimePoint) -> ContractStatus {
        if now >= self.terms.valid_until {
            ContractStatus::Expired
        } else {
            ContractStatus::Active
        }
    }

    pub fn is_active_at(&self, now: TimePoint) -> bool {
        self.terms.valid_from <= now && self.status_at(now) == ContractStatus::Active
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestStatus {
    Pending,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegistrationRequest {
    pub id: RequestId,
    pub requester: Address,
    pub terms: LandlordTerms,
    pub status: RequestStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParkedAt {
    pub provider: ProviderId,
    pub stall: StallId,
    pub channel: ChannelId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CarRecord {
    pub id: CarId,
    pub plate: String,
    pub owner: Address,
    /// Stored for display; no operation changes it.
    pub rating: i64,
    pub parked: Option<ParkedAt>,
    /// Settled sessions, oldest first.
    pub history: Vec<ChannelId>,
}

/// Whole-field replacements for landlord contract terms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandlordChanges {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tax_rate: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub land_info: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_from: Option<TimePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_until: Option<TimePoint>,
}

impl LandlordChanges {
    pub fn is_empty(&self) -> bool {
        *self == LandlordChanges::default()
    }

    pub fn apply(&self, terms: &LandlordTerms) -> LandlordTerms {
        LandlordTerms {
            tax_rate: self.tax_rate.unwrap_or(terms.tax_rate),
            land_info: self.land_info.clone().unwrap_or_else(|| terms.land_info.clone()),
            valid_from: self.valid_from.unwrap_or(terms.valid_from),
            valid_until: self.valid_until.unwrap_or(terms.valid_until),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermsChange {
    Landlord(LandlordChanges),
    Renting(RentingChanges),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmendmentStatus {
    Proposed,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Amendment {
    pub id: AmendmentId,
    pub target: ContractRef,
    pub proposer: Address,
    pub changes: TermsChange,
    pub status: AmendmentStatus,
}

#[derive(Debug, Clone)]
pub struct SystemState {
    pub administrator: Address,
    pub landlord_contracts: BTreeMap<LandlordContractId, LandlordContract>,
    pub requests: BTreeMap<RequestId, RegistrationRequest>,
    pub cars: BTreeMap<CarId, CarRecord>,
    pub lots: BTreeMap<LotId, LandlordContractId>,
    pub amendments: BTreeMap<AmendmentId, Amendment>,
}

impl SystemState {
    pub fn new(administrator: Address) -> SystemState {
        SystemState {
            administrator,
            landlord_contracts: BTreeMap::new(),
            requests: BTreeMap::new(),
            cars: BTreeMap::new(),
            lots: BTreeMap::new(),
            amendments: BTreeMap::new(),
        }
    }
}

impl Engine {
    pub fn system(&self) -> &SystemState {
        &self.system
    }

    pub fn landlord_contract(&self, id: LandlordContractId) -> Result<&LandlordContract> {
        self.system.landlord_contracts.get(&id).ok_or(Error::NotFound("landlord contract"))
    }

    pub fn registration_request(&self, id: RequestId) -> Result<&RegistrationRequest> {
        self.system.requests.get(&id).ok_or(Error::NotFound("registration request"))
    }

    pub fn car(&self, id: CarId) -> Result<&CarRecord> {
        self.system.cars.get(&id).ok_or(Error::NotFound("car"))
    }

    pub fn amendment(&self, id: AmendmentId) -> Result<&Amendment> {
        self.system.amendments.get(&id).ok_or(Error::NotFound("amendment"))
    }

    pub fn request_landlord_registration(&mut self, landlord: &Address, terms: LandlordTerms) -> Result<RequestId> {
        if !self.ledger.contains(landlord) {
            return Err(Error::UnknownAccount(*landlord));
        }
        terms.validate()?;
        if self
            .system
            .requests
            .values()
            .any(|r| r.requester == *landlord && r.status == RequestStatus::Pending)
        {
            return Err(Error::DuplicatePendingRequest);
        }
        let id = RequestId(ids::next(&self.system.requests));
        self.ledger.record(
            EventKind::RegistrationRequested,
            payload(json!({ "request": id, "landlord": landlord, "terms": terms })),
        );
        self.system.requests.insert(
            id,
            RegistrationRequest { id, requester: *landlord, terms, status: RequestStatus::Pending },
        );
        Ok(id)
    }

    /// Administrator decision on a pending registration. Approval deploys
    /// the landlord contract with the requested terms.
    pub fn decide_registration(
        &mut self,
        caller: &Address,
        request: RequestId,
        approve: bool,
    ) -> Result<Option<LandlordContractId>> {
        self.require(caller, &self.system.administrator)?;
        let req = self.registration_request(request)?;
        if req.status != RequestStatus::Pending {
            return Err(Error::NotPending);
        }
        let (landlord, terms) = (req.requester, req.terms.clone());
        let contract = approve.then(|| LandlordContractId(ids::next(&self.system.landlord_contracts)));
        self.ledger.record(
            EventKind::RegistrationDecided,
            payload(json!({ "request": request, "approved": approve, "contract": contract })),
        );
        let req = self.system.requests.get_mut(&request).expect("checked");
        req.status = if approve { RequestStatus::Approved } else { RequestStatus::Rejected };
        if let Some(id) = contract {
            self.system.landlord_contracts.insert(id, LandlordContract { id, landlord, terms });
        }
        Ok(contract)
    }

    /// Plates are case-sensitive and must be non-empty and unique.
    pub fn register_car(&mut self, owner: &Address, plate: &str) -> Result<CarId> {
        if !self.ledger.contains(owner) {
            return Err(Error::UnknownAccount(*owner));
        }
        if plate.is_empty() {
            return Err(Error::EmptyPlate);
        }
        if self.car_by_plate(plate).is_some() {
            return Err(Error::DuplicatePlate(plate.to_owned()));
        }
        let id = CarId(ids::next(&self.system.cars));
        self.ledger.record(EventKind::CarRegistered, payload(json!({ "car": id, "plate": plate, "owner": owner })));
        self.system.cars.insert(
            id,
            CarRecord { id, plate: plate.to_owned(), owner: *owner, rating: 0, parked: None, history: Vec::new() },
        );
        Ok(id)
    }

    pub fn car_by_plate(&self, plate: &str) -> Option<&CarRecord> {
        self.system.cars.values().find(|c| c.plate == plate)
    }

    /// The two parties of a contract and whether it is currently active.
    fn contract_parties(&self, target: ContractRef) -> Result<([Address; 2], bool)> {
        let now = self.now();
        match target {
            ContractRef::Landlord(id) => {
                let c = self.landlord_contract(id)?;
                Ok(([self.system.administrator, c.landlord], c.is_active_at(now)))
            }
            ContractRef::Renting(id) => {
                let c = self.renting_contract(id)?;
                let landlord = self.lot(c.lot)?.core.owner;
                Ok(([landlord, c.tenant], c.is_active()))
            }
        }
    }

    pub fn propose_amendment(
        &mut self,
        party: &Address,
        target: ContractRef,
        changes: TermsChange,
    ) -> Result<AmendmentId> {
        let (parties, active) = self.contract_parties(target)?;
        if !parties.contains(party) {
            return Err(Error::Unauthorized(*party));
        }
        if !active {
            return Err(Error::InactiveContract);
        }
        match (&target, &changes) {
            (ContractRef::Landlord(id), TermsChange::Landlord(ch)) => {
                if ch.is_empty() {
                    return Err(Error::InvalidTerms("empty amendment"));
                }
                ch.apply(&self.landlord_contract(*id)?.terms).validate()?;
            }
            (ContractRef::Renting(id), TermsChange::Renting(ch)) => {
                if ch.is_empty() {
                    return Err(Error::InvalidTerms("empty amendment"));
                }
                ch.apply(&self.renting_contract(*id)?.terms).validate()?;
            }
            _ => return Err(Error::AmendmentKindMismatch),
        }
        let id = AmendmentId(ids::next(&self.system.amendments));
        self.ledger.record(
            EventKind::AmendmentProposed,
            payload(json!({ "amendment": id, "target": target, "proposer": party, "changes": changes })),
        );
        self.system.amendments.insert(
            id,
            Amendment { id, target, proposer: *party, changes, status: AmendmentStatus::Proposed },
        );
        Ok(id)
    }

    /// The counterparty accepts or rejects. Accepted changes replace whole
    /// fields at once and only affect computations from now on.
    pub fn resolve_amendment(
        &mut self,
        counterparty: &Address,
        amendment: AmendmentId,
        accept: bool,
    ) -> Result<Option<ContractRef>> {
        let a = self.amendment(amendment)?.clone();
        let (parties, active) = self.contract_parties(a.target)?;
        if *counterparty == a.proposer {
            return Err(Error::SelfResolution);
        }
        if !parties.contains(counterparty) {
            return Err(Error::Unauthorized(*counterparty));
        }
        if a.status != AmendmentStatus::Proposed {
            return Err(Error::NotPending);
        }
        if accept {
            if !active {
                return Err(Error::InactiveContract);
            }
            match (a.target, &a.changes) {
                (ContractRef::Landlord(id), TermsChange::Landlord(ch)) => self.amend_landlord_contract(id, ch)?,
                (ContractRef::Renting(id), TermsChange::Renting(ch)) => self.amend_renting_contract(id, ch)?,
                _ => return Err(Error::AmendmentKindMismatch),
            }
        }
        self.ledger.record(
            EventKind::AmendmentResolved,
            payload(json!({ "amendment": amendment, "target": a.target, "accepted": accept })),
        );
        self.system.amendments.get_mut(&amendment).expect("checked").status =
            if accept { AmendmentStatus::Accepted } else { AmendmentStatus::Rejected };
        Ok(accept.then_some(a.target))
    }

    fn amend_landlord_contract(&mut self, id: LandlordContractId, changes: &LandlordChanges) -> Result<()> {
        let old = self.landlord_contract(id)?.terms.clone();
        let new = changes.apply(&old);
        new.validate()?;
        self.system.landlord_contracts.get_mut(&id).expect("checked").terms = new;
        let lots: Vec<LotId> =
            self.system.lots.iter().filter(|(_, c)| **c == id).map(|(lot, _)| *lot).collect();
        if let Err(e) = lots.iter().try_for_each(|lot| self.check_lot_share_budget(*lot)) {
            self.system.landlord_contracts.get_mut(&id).expect("checked").terms = old;
            return Err(e);
        }
        Ok(())
    }
}
