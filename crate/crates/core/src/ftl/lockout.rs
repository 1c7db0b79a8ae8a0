use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("lockout threshold must be at least 1")]
pub struct ZeroThreshold;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LockoutStatus {
    Ok,
    LockedOut,
}

/// Global invalid-attempt counter. Successful requests never decrement it;
/// only [`LockoutState::admin_reset`] clears it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LockoutState {
    invalid_attempts: u64,
    threshold: u64,
    locked_out: bool,
}

impl LockoutState {
    pub fn new(threshold: u64) -> Result<Self, ZeroThreshold> {
        if threshold == 0 {
            return Err(ZeroThreshold);
        }
        Ok(LockoutState {
            invalid_attempts: 0,
            threshold,
            locked_out: false,
        })
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn invalid_attempts(&self) -> u64 {
        self.invalid_attempts
    }

    pub fn is_locked_out(&self) -> bool {
        self.locked_out
    }

    /// Feeds one authorization result into the counter.
    pub fn check_and_record(&mut self, granted: bool) -> LockoutStatus {
        if !granted && !self.locked_out {
            self.invalid_attempts += 1;
            if self.invalid_attempts >= self.threshold {
                self.locked_out = true;
            }
        }
        if self.locked_out {
            LockoutStatus::LockedOut
        } else {
            LockoutStatus::Ok
        }
    }

    pub fn admin_reset(&mut self) {
        self.invalid_attempts = 0;
        self.locked_out = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trips_exactly_at_threshold() {
        let mut s = LockoutState::new(8).unwrap();
        for _ in 0..7 {
            assert_eq!(s.check_and_record(false), LockoutStatus::Ok);
        }
        assert_eq!(s.check_and_record(false), LockoutStatus::LockedOut);
        assert!(s.is_locked_out());
        assert_eq!(s.check_and_record(true), LockoutStatus::LockedOut);
    }

    #[test]
    fn grants_do_not_decrement() {
        let mut s = LockoutState::new(8).unwrap();
        for _ in 0..7 {
            s.check_and_record(false);
        }
        assert_eq!(s.check_and_record(true), LockoutStatus::Ok);
        assert_eq!(s.invalid_attempts(), 7);
        assert_eq!(s.check_and_record(false), LockoutStatus::LockedOut);
    }

    #[test]
    fn zero_threshold_rejected_and_reset_clears() {
        assert_eq!(LockoutState::new(0), Err(ZeroThreshold));
        let mut s = LockoutState::new(1).unwrap();
        assert_eq!(s.check_and_record(false), LockoutStatus::LockedOut);
        s.admin_reset();
        assert!(!s.is_locked_out());
        assert_eq!(s.invalid_attempts(), 0);
    }
}
