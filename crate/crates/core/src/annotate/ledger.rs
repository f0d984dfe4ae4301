use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("token budget exhausted: {used} used + {requested} requested > {budget}")]
pub struct BudgetExhausted {
    pub used: u64,
    pub requested: u64,
    pub budget: u64,
}

/// Cumulative annotator output tokens of one method against a budget.
/// Charges that would exceed the budget are refused before any work is
/// issued, so `used <= budget` holds after every completed call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLedger {
    pub method: String,
    pub budget: u64,
    pub used: u64,
    /// Tokens held by in-flight requests.
    #[serde(skip)]
    reserved: u64,
    /// Charged calls.
    pub calls: u64,
    /// Calls served from the response cache.
    pub cached: u64,
    /// Calls refused for lack of budget.
    pub refused: u64,
}

impl TokenLedger {
    pub fn new(method: impl Into<String>, budget: u64) -> Self {
        TokenLedger {
            method: method.into(),
            budget,
            used: 0,
            reserved: 0,
            calls: 0,
            cached: 0,
            refused: 0,
        }
    }

    pub fn remaining(&self) -> u64 {
        self.budget.saturating_sub(self.used + self.reserved)
    }

    pub fn can_afford(&self, tokens: u64) -> bool {
        tokens <= self.remaining()
    }

    fn refuse(&mut self, requested: u64) -> BudgetExhausted {
        self.refused += 1;
        BudgetExhausted {
            used: self.used + self.reserved,
            requested,
            budget: self.budget,
        }
    }

    /// Charge a response whose size is known up front.
    pub fn charge(&mut self, tokens: u64) -> Result<(), BudgetExhausted> {
        if !self.can_afford(tokens) {
            return Err(self.refuse(tokens));
        }
        self.used += tokens;
        self.calls += 1;
        Ok(())
    }

    /// Hold `max_tokens` for a request whose response size is unknown.
    pub fn reserve(&mut self, max_tokens: u64) -> Result<(), BudgetExhausted> {
        if !self.can_afford(max_tokens) {
            return Err(self.refuse(max_tokens));
        }
        self.reserved += max_tokens;
        Ok(())
    }

    /// Settle a reservation: `actual` (at most `max_tokens`) is charged.
    pub fn settle(&mut self, max_tokens: u64, actual: Option<u64>) {
        self.reserved -= max_tokens;
        if let Some(n) = actual {
            self.used += n.min(max_tokens);
            self.calls += 1;
        }
    }

    pub fn record_cached(&mut self) {
        self.cached += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charges_past_the_budget_are_refused() {
        let mut l = TokenLedger::new("lfm", 10);
        l.charge(6).unwrap();
        let err = l.charge(5).unwrap_err();
        assert_eq!(err.requested, 5);
        assert_eq!(l.used, 6);
        l.charge(4).unwrap();
        assert_eq!(l.remaining(), 0);
        assert_eq!(l.refused, 1);
    }

    #[test]
    fn reservations_hold_budget_until_settled() {
        let mut l = TokenLedger::new("lfm", 100);
        assert!(l.reserve(120).is_err());
        l.reserve(60).unwrap();
        assert!(l.reserve(60).is_err());
        l.settle(60, Some(7));
        assert_eq!(l.used, 7);
        assert_eq!(l.remaining(), 93);
    }
}
