use num_rational::Ratio;
use num_traits::{One, Zero};

use crate::SimTime;

/// Tokens per second, exact.
pub type TokenRate = Ratio<i128>;

const MICROS_PER_SEC: i128 = 1_000_000;

/// Lazily refilled token bucket. The balance is exact and never leaves
/// `[0, depth]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBucket {
    rate: TokenRate,
    balance: Ratio<i128>,
    depth: u32,
    last_refill: SimTime,
}

impl TokenBucket {
    /// A new bucket starts full.
    pub fn new(rate: TokenRate, depth: u32, now: SimTime) -> Self {
        assert!(depth >= 1, "bucket depth must be positive");
        assert!(rate >= TokenRate::zero(), "negative token rate");
        Self {
            rate,
            balance: Ratio::from_integer(depth.into()),
            depth,
            last_refill: now,
        }
    }

    pub fn rate(&self) -> &TokenRate {
        &self.rate
    }

    pub fn balance(&self) -> &Ratio<i128> {
        &self.balance
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn refill(&mut self, now: SimTime) {
        if now <= self.last_refill {
            return;
        }
        let elapsed = (now - self.last_refill).as_micros() as i128;
        let cap = Ratio::from_integer(self.depth.into());
        let next = self.balance + self.rate * Ratio::new(elapsed, MICROS_PER_SEC);
        self.balance = next.min(cap);
        self.last_refill = now;
    }

    /// Takes one token if the bucket holds a whole one at `now`.
    pub fn try_take(&mut self, now: SimTime) -> bool {
        self.refill(now);
        if self.balance >= Ratio::one() {
            self.balance -= Ratio::one();
            true
        } else {
            false
        }
    }

    /// Changes the refill rate; tokens accrued so far are kept.
    pub fn set_rate(&mut self, rate: TokenRate, now: SimTime) {
        assert!(rate >= TokenRate::zero(), "negative token rate");
        self.refill(now);
        self.rate = rate;
    }

    /// Earliest time at which a whole token is available, or `None` if the
    /// bucket is empty and not refilling.
    pub fn ready_at(&self) -> Option<SimTime> {
        if self.balance >= Ratio::one() {
            return Some(self.last_refill);
        }
        if self.rate.is_zero() {
            return None;
        }
        let wait = (Ratio::one() - self.balance) * Ratio::from_integer(MICROS_PER_SEC) / self.rate;
        let micros = wait.ceil().to_integer() as u64;
        Some(self.last_refill + SimTime::from_micros(micros))
    }
}
