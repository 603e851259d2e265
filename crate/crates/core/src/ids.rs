//! Sequential identifiers for on-ledger entities.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! seq_id {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "-{}"), self.0)
            }
        }
    };
}

seq_id!(PolicyId, "policy");
seq_id!(RequestId, "request");
seq_id!(LandlordContractId, "landlord-contract");
seq_id!(CarId, "car");
seq_id!(AmendmentId, "amendment");
seq_id!(LotId, "lot");
seq_id!(TenancyRequestId, "tenancy-request");
seq_id!(RentingContractId, "renting-contract");
seq_id!(ServiceProviderId, "sp");

/// Stall number within a lot, `0..stall_count`.
pub type StallId = u32;

/// A parking provider: a lot, or the tenant operating under a renting contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderId {
    Lot(LotId),
    Tenant(RentingContractId),
}

impl fmt::Display for ProviderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderId::Lot(id) => id.fmt(f),
            ProviderId::Tenant(id) => write!(f, "tenant-{}", id.0),
        }
    }
}

/// A two-party contract that can be amended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractRef {
    Landlord(LandlordContractId),
    Renting(RentingContractId),
}

impl fmt::Display for ContractRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContractRef::Landlord(id) => id.fmt(f),
            ContractRef::Renting(id) => id.fmt(f),
        }
    }
}

/// Next id for a map whose entries are never removed.
pub(crate) fn next<K>(map: &std::collections::BTreeMap<K, impl Sized>) -> u32 {
    map.len() as u32 + 1
}
