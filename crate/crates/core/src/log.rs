//! Line-oriented device/host event log.
//!
//! Records render as
//! `ts=<op-index> layer=<ftl|host|transport> event=<grant|deny|flush|gc|lockout> lba=0x<hex> key=<masked> detail=<text>`.

use std::collections::VecDeque;
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::key::AccessKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogLayer {
    Ftl,
    Host,
    Transport,
}

impl LogLayer {
    pub fn as_str(self) -> &'static str {
        match self {
            LogLayer::Ftl => "ftl",
            LogLayer::Host => "host",
            LogLayer::Transport => "transport",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogEvent {
    Grant,
    Deny,
    Flush,
    Gc,
    Lockout,
}

impl LogEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            LogEvent::Grant => "grant",
            LogEvent::Deny => "deny",
            LogEvent::Flush => "flush",
            LogEvent::Gc => "gc",
            LogEvent::Lockout => "lockout",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogRecord {
    pub ts: u64,
    pub layer: LogLayer,
    pub event: LogEvent,
    /// Sector address.
    pub lba: u64,
    pub key: AccessKey,
    pub detail: String,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ts={} layer={} event={} lba={:#x} key={} detail={}",
            self.ts,
            self.layer.as_str(),
            self.event.as_str(),
            self.lba,
            self.key.masked(),
            self.detail
        )
    }
}

#[derive(Debug)]
struct Inner {
    records: VecDeque<LogRecord>,
    capacity: usize,
    dropped: u64,
    log_grants: bool,
}

/// Bounded, shareable event log. Oldest records are dropped once full.
#[derive(Clone, Debug)]
pub struct EventLog {
    inner: Arc<Mutex<Inner>>,
}

impl Default for EventLog {
    fn default() -> Self {
        EventLog::with_capacity(4096)
    }
}

impl EventLog {
    pub fn with_capacity(capacity: usize) -> Self {
        EventLog {
            inner: Arc::new(Mutex::new(Inner {
                records: VecDeque::new(),
                capacity: capacity.max(1),
                dropped: 0,
                log_grants: false,
            })),
        }
    }

    /// Grants are high-volume; they are only recorded when asked for.
    pub fn set_log_grants(&self, on: bool) {
        self.inner.lock().unwrap().log_grants = on;
    }

    pub fn record(&self, rec: LogRecord) {
        let mut inner = self.inner.lock().unwrap();
        if rec.event == LogEvent::Grant && !inner.log_grants {
            return;
        }
        if inner.records.len() == inner.capacity {
            inner.records.pop_front();
            inner.dropped += 1;
        }
        inner.records.push_back(rec);
    }

    pub fn records(&self) -> Vec<LogRecord> {
        self.inner.lock().unwrap().records.iter().cloned().collect()
    }

    pub fn lines(&self) -> Vec<String> {
        self.records().iter().map(ToString::to_string).collect()
    }

    pub fn dropped(&self) -> u64 {
        self.inner.lock().unwrap().dropped
    }

    pub fn clear(&self) {
        let mut inner = self.inner.lock().unwrap();
        inner.records.clear();
        inner.dropped = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(ts: u64, event: LogEvent) -> LogRecord {
        LogRecord {
            ts,
            layer: LogLayer::Ftl,
            event,
            lba: 0x43000,
            key: AccessKey::NONE,
            detail: "write".into(),
        }
    }

    #[test]
    fn line_format() {
        assert_eq!(
            rec(7, LogEvent::Deny).to_string(),
            "ts=7 layer=ftl event=deny lba=0x43000 key=none detail=write"
        );
    }

    #[test]
    fn bounded_and_grants_filtered() {
        let log = EventLog::with_capacity(2);
        log.record(rec(0, LogEvent::Grant));
        assert!(log.records().is_empty());
        for ts in 1..=3 {
            log.record(rec(ts, LogEvent::Deny));
        }
        let ts: Vec<u64> = log.records().iter().map(|r| r.ts).collect();
        assert_eq!(ts, vec![2, 3]);
        assert_eq!(log.dropped(), 1);
        log.set_log_grants(true);
        log.record(rec(4, LogEvent::Grant));
        assert_eq!(log.records().last().unwrap().event, LogEvent::Grant);
    }
}
