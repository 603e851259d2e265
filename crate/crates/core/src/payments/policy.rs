use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::ledger::{Funds, TimePoint};

pub const HOURS_PER_WEEK: usize = 7 * 24;
pub const SECONDS_PER_HOUR: u64 = 3600;
pub const SECONDS_PER_WEEK: u64 = HOURS_PER_WEEK as u64 * SECONDS_PER_HOUR;

/// How a provider prices parking. Providers may deploy their own.
pub trait PaymentPolicy: fmt::Debug + Send + Sync {
    /// Rate in minor units per hour at `t`.
    fn rate_at(&self, t: TimePoint) -> u64;

    /// Price of parking over `[start, end)`.
    fn total_price(&self, start: TimePoint, end: TimePoint) -> Result<Funds>;

    /// JSON description recorded when the policy is deployed.
    fn describe(&self) -> Value;
}

/// A 7 x 24 grid of hourly rates; index 0 is Monday 00:00-01:00.
///
/// Serializes as a JSON array of 168 integers.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct WeekHourPolicy {
    rates: [u64; HOURS_PER_WEEK],
}

impl WeekHourPolicy {
    pub fn new(rates: [u64; HOURS_PER_WEEK]) -> WeekHourPolicy {
        WeekHourPolicy { rates }
    }

    pub fn uniform(rate: u64) -> WeekHourPolicy {
        WeekHourPolicy { rates: [rate; HOURS_PER_WEEK] }
    }

    /// Builds the grid from `rate(day, hour)`, day 0 being Monday.
    pub fn from_fn(mut rate: impl FnMut(usize, usize) -> u64) -> WeekHourPolicy {
        WeekHourPolicy { rates: std::array::from_fn(|i| rate(i / 24, i % 24)) }
    }

    pub fn rates(&self) -> &[u64; HOURS_PER_WEEK] {
        &self.rates
    }

    fn slot(t: u64) -> usize {
        ((t / SECONDS_PER_HOUR) % HOURS_PER_WEEK as u64) as usize
    }
}

impl TryFrom<Vec<u64>> for WeekHourPolicy {
    type Error = String;

    fn try_from(v: Vec<u64>) -> std::result::Result<Self, String> {
        let len = v.len();
        let rates = v.try_into().map_err(|_| format!("expected {HOURS_PER_WEEK} hourly rates, got {len}"))?;
        Ok(WeekHourPolicy { rates })
    }
}

impl From<WeekHourPolicy> for Vec<u64> {
    fn from(p: WeekHourPolicy) -> Vec<u64> {
        p.rates.to_vec()
    }
}

impl fmt::Debug for WeekHourPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (min, max) = (self.rates.iter().min(), self.rates.iter().max());
        write!(f, "WeekHourPolicy {{ min: {min:?}, max: {max:?} }}")
    }
}

impl PaymentPolicy for WeekHourPolicy {
    fn rate_at(&self, t: TimePoint) -> u64 {
        self.rates[Self::slot(t.0)]
    }

    /// `ceil(sum over hour slots of seconds_in_slot * rate / 3600)`, rounded
    /// once at the end.
    fn total_price(&self, start: TimePoint, end: TimePoint) -> Result<Funds> {
        if start > end {
            return Err(Error::InvalidInterval { start, end });
        }
        // rate-seconds
        let mut acc: u128 = 0;
        let weeks = (end.0 - start.0) / SECONDS_PER_WEEK;
        if weeks > 0 {
            let week_sum: u128 = self.rates.iter().map(|r| u128::from(*r)).sum();
            acc = u128::from(weeks) * week_sum * u128::from(SECONDS_PER_HOUR);
        }
        let mut t = start.0 + weeks * SECONDS_PER_WEEK;
        while t < end.0 {
            let slot_end = (t / SECONDS_PER_HOUR + 1).saturating_mul(SECONDS_PER_HOUR);
            let seg_end = slot_end.min(end.0);
            acc += u128::from(seg_end - t) * u128::from(self.rates[Self::slot(t)]);
            t = seg_end;
        }
        let price = acc.div_ceil(u128::from(SECONDS_PER_HOUR));
        u64::try_from(price).map(Funds).map_err(|_| Error::Overflow)
    }

    fn describe(&self) -> Value {
        serde_json::json!({ "week_hour": self.rates.to_vec() })
    }
}
