use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{Address, ChannelId, Funds, Ledger, TimePoint};
use crate::payments::ChannelState;
use crate::providers::Market;
use crate::registry::SystemState;
use crate::sigchain::Seed;

/// Default time after the booked end of parking before the payer may reclaim escrow.
pub const DEFAULT_GRACE: u64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub grace: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { grace: DEFAULT_GRACE }
    }
}

/// The whole contract system on top of one ledger.
///
/// Operations take the calling account first and check access before
/// touching any state. `Engine` is `Clone + Send + Sync`, so a clone serves
/// as an immutable snapshot for readers on other threads.
#[derive(Debug, Clone)]
pub struct Engine {
    pub(crate) ledger: Ledger,
    pub(crate) config: EngineConfig,
    pub(crate) system: SystemState,
    pub(crate) market: Market,
    pub(crate) channels: BTreeMap<ChannelId, ChannelState>,
}

impl Engine {
    /// Deploys the parking system on `ledger`, administered by `administrator`.
    pub fn new(ledger: Ledger, administrator: Address, config: EngineConfig) -> Result<Engine> {
        if !ledger.contains(&administrator) {
            return Err(Error::UnknownAccount(administrator));
        }
        Ok(Engine {
            ledger,
            config,
            system: SystemState::new(administrator),
            market: Market::default(),
            channels: BTreeMap::new(),
        })
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn config(&self) -> EngineConfig {
        self.config
    }

    pub fn now(&self) -> TimePoint {
        self.ledger.now()
    }

    pub fn create_account(&mut self, seed: &Seed, initial_balance: Funds) -> Result<Address> {
        self.ledger.create_account(seed, initial_balance)
    }

    pub fn transfer(&mut self, from: &Address, to: &Address, amount: Funds) -> Result<()> {
        self.ledger.transfer(from, to, amount).map(drop)
    }

    pub fn advance_time(&mut self, delta: u64) -> Result<TimePoint> {
        self.ledger.advance_time(delta)
    }

    pub fn advance_to(&mut self, t: TimePoint) -> Result<TimePoint> {
        self.ledger.advance_to(t)
    }

    pub fn seal_genesis(&mut self) {
        self.ledger.seal_genesis()
    }

    pub fn administrator(&self) -> Address {
        self.system.administrator
    }

    pub(crate) fn require(&self, caller: &Address, expected: &Address) -> Result<()> {
        if caller == expected {
            Ok(())
        } else {
            Err(Error::Unauthorized(*caller))
        }
    }
}
