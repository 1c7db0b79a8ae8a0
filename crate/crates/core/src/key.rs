use std::fmt;

/// 32-bit credential carried with every block request.
///
/// The all-ones word is reserved as [`AccessKey::NONE`]: a request carrying
/// it has no credential. Every other value, including `0` and `0xFFFFFF`,
/// is an ordinary key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AccessKey(u32);

impl AccessKey {
    pub const NONE: AccessKey = AccessKey(u32::MAX);

    pub const fn new(value: u32) -> Self {
        AccessKey(value)
    }

    pub const fn value(self) -> u32 {
        self.0
    }

    pub const fn is_none(self) -> bool {
        self.0 == u32::MAX
    }

    pub const fn is_some(self) -> bool {
        !self.is_none()
    }

    /// Rendering used in log lines: only the low byte is shown.
    pub fn masked(self) -> String {
        if self.is_none() {
            "none".to_string()
        } else {
            format!("0x******{:02x}", self.0 & 0xFF)
        }
    }
}

impl fmt::Debug for AccessKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_none() {
            f.write_str("AccessKey(NONE)")
        } else {
            write!(f, "AccessKey({:#08x})", self.0)
        }
    }
}

impl fmt::Display for AccessKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_none() {
            f.write_str("none")
        } else {
            write!(f, "{:#08x}", self.0)
        }
    }
}

impl From<u32> for AccessKey {
    fn from(v: u32) -> Self {
        AccessKey(v)
    }
}
