use thiserror::Error;

use crate::ledger::{Address, Funds, TimePoint};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every way an engine operation can be refused.
///
/// A failed operation never leaves partial state behind: all checks run
/// before the first mutation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    // ledger
    #[error("seed already used for another account")]
    DuplicateSeed,
    #[error("minting is only allowed before the first step")]
    MintAfterGenesis,
    #[error("unknown account {0}")]
    UnknownAccount(Address),
    #[error("insufficient funds: balance {balance}, needed {needed}")]
    InsufficientFunds { balance: Funds, needed: Funds },
    #[error("arithmetic overflow")]
    Overflow,
    #[error("clock cannot move backwards from {now} to {requested}")]
    ClockRegression { now: TimePoint, requested: TimePoint },
    #[error("escrow for channel {0} not found")]
    UnknownEscrow(String),
    #[error("escrow payouts sum to {paid}, locked amount is {locked}")]
    UnbalancedRelease { paid: Funds, locked: Funds },

    // access control
    #[error("caller {0} is not authorized for this operation")]
    Unauthorized(Address),

    // registry
    #[error("a registration request is already pending for this landlord")]
    DuplicatePendingRequest,
    #[error("invalid terms: {0}")]
    InvalidTerms(&'static str),
    #[error("request is not pending")]
    NotPending,
    #[error("plate must not be empty")]
    EmptyPlate,
    #[error("plate {0:?} is already registered")]
    DuplicatePlate(String),
    #[error("contract is not active")]
    InactiveContract,
    #[error("amendment changes do not match the target contract kind")]
    AmendmentKindMismatch,
    #[error("proposer cannot resolve their own amendment")]
    SelfResolution,
    #[error("unknown {0}")]
    NotFound(&'static str),

    // providers
    #[error("a parking lot needs at least one stall")]
    NoStalls,
    #[error("stall {0} does not exist")]
    UnknownStall(u32),
    #[error("stall {0} is already rented out")]
    StallOverlap(u32),
    #[error("stall {0} is not controlled by this provider")]
    ForeignStall(u32),
    #[error("stall {0} has an active session")]
    StallBusy(u32),
    #[error("tenancy request is stale: stall {0} was rented meanwhile")]
    StaleTenancy(u32),
    #[error("shares exceed 10000 basis points (total {0})")]
    ShareOverflow(u64),
    #[error("tenant still has active sessions")]
    ActiveSessions,

    // payments
    #[error("interval start {start} is after end {end}")]
    InvalidInterval { start: TimePoint, end: TimePoint },
    #[error("car is already parked")]
    AlreadyParked,
    #[error("parking end {until} is not after now ({now})")]
    UntilInPast { now: TimePoint, until: TimePoint },
    #[error("deposit {deposit} is below the quoted price {price}")]
    InsufficientDeposit { deposit: Funds, price: Funds },
    #[error("channel is not open")]
    ChannelClosed,
    #[error("voucher rejected: {0}")]
    InvalidVoucher(&'static str),
    #[error("refund not possible before expiry at {expiry}")]
    TooEarly { expiry: TimePoint },
    #[error("malformed voucher wire data: {0}")]
    MalformedVoucher(&'static str),
}
