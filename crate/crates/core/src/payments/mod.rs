//! Pricing policies, payment channels and settlement.
//!
//! A parking session is a unidirectional channel: the driver escrows a
//! deposit (one ledger transaction), streams signed cumulative vouchers to
//! the provider off-ledger, and the provider redeems the last voucher
//! (the second and final transaction), which also refunds the remainder.

mod channel;
mod offchain;
mod policy;
mod settlement;

pub use channel::{ChannelState, ChannelStatus, OpenChannel};
pub use offchain::OffchainSession;
pub use policy::{PaymentPolicy, WeekHourPolicy, HOURS_PER_WEEK, SECONDS_PER_HOUR, SECONDS_PER_WEEK};
pub use settlement::SettlementBreakdown;
