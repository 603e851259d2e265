use std::sync::Arc;

use super::{ChannelState, PaymentPolicy};
use crate::error::{Error, Result};
use crate::ledger::{ChannelId, Funds, TimePoint};
use crate::sigchain::{sign_voucher, verify_voucher, KeyPair, PublicKey, Voucher};

/// Voucher bookkeeping for one channel, outside the ledger.
///
/// The payer side emits cumulative vouchers priced from the captured
/// policy; the payee side accepts only valid, strictly increasing vouchers
/// within the escrow.
#[derive(Debug, Clone)]
pub struct OffchainSession {
    channel: ChannelId,
    payer: PublicKey,
    locked: Funds,
    opened_at: TimePoint,
    park_until: TimePoint,
    policy: Arc<dyn PaymentPolicy>,
    last_emitted: Funds,
    last_accepted: Funds,
    best: Option<Voucher>,
}

impl OffchainSession {
    pub fn new(channel: &ChannelState, payer: PublicKey) -> OffchainSession {
        OffchainSession {
            channel: channel.id,
            payer,
            locked: channel.locked,
            opened_at: channel.opened_at,
            park_until: channel.park_until,
            policy: channel.policy.clone(),
            last_emitted: Funds::ZERO,
            last_accepted: Funds::ZERO,
            best: None,
        }
    }

    pub fn channel(&self) -> ChannelId {
        self.channel
    }

    pub fn last_emitted(&self) -> Funds {
        self.last_emitted
    }

    pub fn last_accepted(&self) -> Funds {
        self.last_accepted
    }

    /// The highest voucher accepted so far, which the payee redeems.
    pub fn best_voucher(&self) -> Option<&Voucher> {
        self.best.as_ref()
    }

    /// Amount owed for parking up to `now`, capped at the booking end and the escrow.
    pub fn owed_at(&self, now: TimePoint) -> Result<Funds> {
        let price = self.policy.total_price(self.opened_at, now.min(self.park_until))?;
        Ok(price.min(self.locked))
    }

    /// Signs the cumulative amount owed at `now`. No ledger interaction.
    pub fn next_voucher(&mut self, channel: &ChannelState, keys: &KeyPair, now: TimePoint) -> Result<Voucher> {
        if channel.id != self.channel || !channel.is_open() {
            return Err(Error::ChannelClosed);
        }
        if keys.public() != self.payer {
            return Err(Error::Unauthorized(keys.address()));
        }
        if now < self.opened_at {
            return Err(Error::InvalidInterval { start: self.opened_at, end: now });
        }
        let cumulative = self.owed_at(now)?;
        self.last_emitted = self.last_emitted.max(cumulative);
        Ok(sign_voucher(keys, self.channel, cumulative))
    }

    /// Accepts `v` iff it is signed by the payer for this channel, strictly
    /// above the last accepted amount, and within the escrow.
    pub fn accept_voucher(&mut self, v: &Voucher) -> bool {
        let ok = v.channel_id == self.channel
            && v.cumulative > self.last_accepted
            && v.cumulative <= self.locked
            && verify_voucher(&self.payer, v);
        if ok {
            self.last_accepted = v.cumulative;
            self.best = Some(*v);
        }
        ok
    }
}
