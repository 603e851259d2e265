use serde::Serialize;

use crate::error::{Error, Result};
use crate::ledger::Funds;
use crate::registry::MAX_BPS;

/// How a claimed amount is split, and what returns to the payer.
///
/// Shares are floors of the gross claim; the operator takes the remainder,
/// so `tax + service + landlord + operator == claimed` and
/// `claimed + refund == locked` hold exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SettlementBreakdown {
    pub claimed: Funds,
    pub tax: Funds,
    pub service: Funds,
    pub landlord: Funds,
    pub operator: Funds,
    pub refund: Funds,
}

impl SettlementBreakdown {
    pub fn compute(locked: Funds, claimed: Funds, tax_bps: u32, service_bps: u32, landlord_bps: u32) -> Result<Self> {
        let refund = locked.checked_sub(claimed).ok_or(Error::InvalidVoucher("claim exceeds locked funds"))?;
        let total_bps = u64::from(tax_bps) + u64::from(service_bps) + u64::from(landlord_bps);
        if total_bps > u64::from(MAX_BPS) {
            return Err(Error::ShareOverflow(total_bps));
        }
        let tax = claimed.share(tax_bps);
        let service = claimed.share(service_bps);
        let landlord = claimed.share(landlord_bps);
        // total_bps <= 10000 keeps the three floors within the claim
        let operator = Funds(claimed.0 - tax.0 - service.0 - landlord.0);
        Ok(SettlementBreakdown { claimed, tax, service, landlord, operator, refund })
    }
}
