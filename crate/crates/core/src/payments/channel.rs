use std::sync::Arc;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{OffchainSession, PaymentPolicy, SettlementBreakdown};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::ids::{CarId, LotId, PolicyId, ProviderId, ServiceProviderId, StallId};
use crate::ledger::{payload, Address, ChannelId, Funds, TimePoint};
use crate::providers::Controller;
use crate::registry::ParkedAt;
use crate::sigchain::{verify_voucher, Voucher};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelStatus {
    Open,
    Settled,
    Refunded,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChannelState {
    pub id: ChannelId,
    /// The car owner.
    pub payer: Address,
    pub payee: ProviderId,
    pub car: CarId,
    pub lot: LotId,
    pub stall: StallId,
    pub locked: Funds,
    /// Price of the whole booking quoted at opening.
    pub quoted: Funds,
    pub opened_at: TimePoint,
    pub park_until: TimePoint,
    /// `park_until + grace`; from then on the payer may reclaim the escrow.
    pub expiry: TimePoint,
    pub policy_id: PolicyId,
    /// Policy captured at opening; later policy swaps do not affect it.
    #[serde(skip)]
    pub policy: Arc<dyn PaymentPolicy>,
    pub sp: Option<ServiceProviderId>,
    pub status: ChannelStatus,
}

impl ChannelState {
    pub fn is_open(&self) -> bool {
        self.status == ChannelStatus::Open
    }
}

/// Arguments of a parking request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpenChannel {
    pub car: CarId,
    pub provider: ProviderId,
    pub stall: StallId,
    pub until: TimePoint,
    pub deposit: Funds,
    pub sp: Option<ServiceProviderId>,
}

fn channel_id(payer: &Address, payee: ProviderId, opened_at: TimePoint, event_index: u64) -> ChannelId {
    let (kind, n) = match payee {
        ProviderId::Lot(id) => (0u8, id.0),
        ProviderId::Tenant(id) => (1u8, id.0),
    };
    ChannelId(
        Sha256::new()
            .chain_update(b"parkchain/channel")
            .chain_update(payer.as_bytes())
            .chain_update([kind])
            .chain_update(n.to_be_bytes())
            .chain_update(opened_at.0.to_be_bytes())
            .chain_update(event_index.to_be_bytes())
            .finalize()
            .into(),
    )
}

impl Engine {
    pub fn channel(&self, id: &ChannelId) -> Result<&ChannelState> {
        self.channels.get(id).ok_or(Error::NotFound("channel"))
    }

    pub fn channels(&self) -> impl Iterator<Item = &ChannelState> {
        self.channels.values()
    }

    /// Parks a car: the provider-facing name of [`Engine::open_channel`].
    pub fn start_parking(&mut self, caller: &Address, req: OpenChannel) -> Result<ChannelId> {
        self.open_channel(caller, req)
    }

    /// Opens a payment channel for a parking session, moving the deposit
    /// into escrow. The deposit must cover the price of the whole booking
    /// under the provider's current policy.
    pub fn open_channel(&mut self, caller: &Address, req: OpenChannel) -> Result<ChannelId> {
        let car = self.car(req.car)?;
        self.require(caller, &car.owner)?;
        if car.parked.is_some() {
            return Err(Error::AlreadyParked);
        }
        let core = self.provider(req.provider)?;
        let policy_id = core.policy;
        let lot_id = self.lot_of(req.provider)?;
        let lot = self.lot(lot_id)?;
        if !self.landlord_contract(lot.landlord_contract)?.is_active_at(self.now()) {
            return Err(Error::InactiveContract);
        }
        let stall = lot.stall(req.stall)?;
        let expected = match req.provider {
            ProviderId::Lot(_) => Controller::Lot,
            ProviderId::Tenant(c) => {
                if !self.renting_contract(c)?.is_active() {
                    return Err(Error::InactiveContract);
                }
                Controller::Tenant(c)
            }
        };
        if stall.controller != expected {
            return Err(Error::ForeignStall(req.stall));
        }
        if stall.session.is_some() {
            return Err(Error::StallBusy(req.stall));
        }
        let now = self.now();
        if req.until <= now {
            return Err(Error::UntilInPast { now, until: req.until });
        }
        if let Some(sp) = req.sp {
            if self.service_provider(sp)?.provider != req.provider {
                return Err(Error::NotFound("service provider for this provider"));
            }
        }
        let policy = self.policy(policy_id)?.clone();
        let price = policy.total_price(now, req.until)?;
        if req.deposit < price {
            return Err(Error::InsufficientDeposit { deposit: req.deposit, price });
        }
        let expiry = req.until.checked_add(self.config.grace)?;
        let payer = car.owner;
        let id = channel_id(&payer, req.provider, now, self.ledger.next_event_index());
        self.ledger.lock_escrow(
            &payer,
            id,
            req.deposit,
            payload(json!({
                "payee": req.provider, "car": req.car, "lot": lot_id, "stall": req.stall,
                "quoted": price, "opened_at": now, "park_until": req.until, "expiry": expiry,
                "policy": policy_id, "sp": req.sp,
            })),
        )?;
        self.channels.insert(
            id,
            ChannelState {
                id,
                payer,
                payee: req.provider,
                car: req.car,
                lot: lot_id,
                stall: req.stall,
                locked: req.deposit,
                quoted: price,
                opened_at: now,
                park_until: req.until,
                expiry,
                policy_id,
                policy,
                sp: req.sp,
                status: ChannelStatus::Open,
            },
        );
        self.market.lots.get_mut(&lot_id).expect("checked").stalls[req.stall as usize].session = Some(id);
        self.system.cars.get_mut(&req.car).expect("checked").parked =
            Some(ParkedAt { provider: req.provider, stall: req.stall, channel: id });
        Ok(id)
    }

    /// Payer-side and payee-side bookkeeping for the off-ledger voucher stream.
    pub fn open_session(&self, channel: &ChannelId) -> Result<OffchainSession> {
        let ch = self.channel(channel)?;
        if !ch.is_open() {
            return Err(Error::ChannelClosed);
        }
        Ok(OffchainSession::new(ch, *self.ledger.public_key(&ch.payer)?))
    }

    /// Redeems a voucher, distributing the claim and refunding the rest in
    /// a single ledger transaction. Tax rate and landlord share are read at
    /// settlement time.
    pub fn settle_channel(&mut self, caller: &Address, voucher: &Voucher) -> Result<SettlementBreakdown> {
        let ch = self.channel(&voucher.channel_id)?;
        self.require(caller, &self.provider(ch.payee)?.owner)?;
        if !ch.is_open() {
            return Err(Error::ChannelClosed);
        }
        if !verify_voucher(self.ledger.public_key(&ch.payer)?, voucher) {
            return Err(Error::InvalidVoucher("signature does not verify under the payer's key"));
        }
        let tax_bps = self.tax_rate_of(ch.lot)?;
        let landlord_bps = self.landlord_share_of(ch.payee)?;
        let sp = ch.sp.map(|id| self.service_provider(id)).transpose()?;
        let breakdown = SettlementBreakdown::compute(
            ch.locked,
            voucher.cumulative,
            tax_bps,
            sp.map_or(0, |s| s.share),
            landlord_bps,
        )?;
        let lot_owner = self.lot(ch.lot)?.core.owner;
        let mut payouts = vec![(self.system.administrator, breakdown.tax)];
        if let Some(sp) = sp {
            payouts.push((sp.address, breakdown.service));
        }
        payouts.extend([
            (lot_owner, breakdown.landlord),
            (*caller, breakdown.operator),
            (ch.payer, breakdown.refund),
        ]);
        let (car, lot, stall, id) = (ch.car, ch.lot, ch.stall, ch.id);
        self.ledger.release_escrow(
            &id,
            &payouts,
            payload(json!({
                "reason": "settle", "payee": ch.payee, "car": car, "lot": lot, "stall": stall,
                "sp": ch.sp, "tax_rate": tax_bps, "landlord_share": landlord_bps,
                "claimed": breakdown.claimed, "tax": breakdown.tax, "service": breakdown.service,
                "landlord": breakdown.landlord, "operator": breakdown.operator, "refund": breakdown.refund,
            })),
        )?;
        self.close_channel(id, ChannelStatus::Settled);
        Ok(breakdown)
    }

    /// Returns the whole escrow to the payer once the channel has expired
    /// without being settled.
    pub fn timeout_refund(&mut self, caller: &Address, channel: &ChannelId) -> Result<Funds> {
        let ch = self.channel(channel)?;
        self.require(caller, &ch.payer)?;
        if !ch.is_open() {
            return Err(Error::ChannelClosed);
        }
        if self.now() < ch.expiry {
            return Err(Error::TooEarly { expiry: ch.expiry });
        }
        let (payer, locked) = (ch.payer, ch.locked);
        self.ledger.release_escrow(
            channel,
            &[(payer, locked)],
            payload(json!({
                "reason": "timeout", "payee": ch.payee, "car": ch.car, "lot": ch.lot, "stall": ch.stall,
                "claimed": 0, "refund": locked,
            })),
        )?;
        self.close_channel(*channel, ChannelStatus::Refunded);
        Ok(locked)
    }

    fn close_channel(&mut self, id: ChannelId, status: ChannelStatus) {
        let ch = self.channels.get_mut(&id).expect("channel exists");
        ch.status = status;
        let (car, lot, stall) = (ch.car, ch.lot, ch.stall);
        self.market.lots.get_mut(&lot).expect("channel lot exists").stalls[stall as usize].session = None;
        let car = self.system.cars.get_mut(&car).expect("channel car exists");
        car.parked = None;
        if status == ChannelStatus::Settled {
            car.history.push(id);
        }
    }
}
