//! A parking marketplace run by smart contracts on a deterministic,
//! single-writer, fee-less ledger.
//!
//! An administrator approves landlords; landlords deploy parking lots and
//! rent stall subsets to tenants; drivers park through payment channels
//! that settle in exactly two ledger transactions.

pub mod engine;
pub mod error;
pub mod ids;
pub mod ledger;
pub mod payments;
pub mod providers;
pub mod registry;
pub mod sigchain;


pub use engine::{Engine, EngineConfig, DEFAULT_GRACE};
pub use error::{Error, Result};
pub use ids::{
    AmendmentId, CarId, ContractRef, LandlordContractId, LotId, PolicyId, ProviderId, RentingContractId, RequestId,
    ServiceProviderId, StallId, TenancyRequestId,
};
pub use ledger::{Address, ChannelId, EventKind, EventRecord, Funds, Ledger, LedgerSnapshot, Payload, TimePoint};
pub use payments::{
    ChannelState, ChannelStatus, OffchainSession, OpenChannel, PaymentPolicy, SettlementBreakdown, WeekHourPolicy,
};
pub use providers::{Controller, RentDue, RentPayment, RentingChanges, RentingTerms};
pub use registry::{LandlordChanges, LandlordTerms, TermsChange};
pub use sigchain::{encode_voucher, sign_voucher, verify_voucher, KeyPair, PublicKey, Seed, Voucher};
