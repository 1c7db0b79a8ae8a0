//! SATA-side plumbing: Register FIS codec and the device's software event
//! queue.
//!
//! Commands enter through [`Transport::submit`] as raw 20-byte frames. The
//! frame is decoded and queued together with its key, so the FTL always
//! authorizes a command with the key from that command's own frame. The
//! device owner drains the queue in FIFO order.

mod fis;

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, MutexGuard};

use thiserror::Error;

pub use fis::{
    decode_register_fis, encode_register_fis, Command, RegisterFis, DEVICE_LBA, FIS_LEN,
    FIS_TYPE_REG_H2D, FLAG_COMMAND, MAX_LBA,
};

use crate::flash::FlashGeometry;
use crate::ftl::{FtlError, KeyFtl, ReadOutcome, Verdict};
use crate::key::AccessKey;
use crate::log::{EventLog, LogEvent, LogLayer, LogRecord};

pub const QUEUE_CAPACITY: usize = 128;

pub type CommandId = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("{field} value {value:#x} does not fit the frame")]
    FieldOverflow { field: &'static str, value: u64 },
    #[error("malformed frame: {0}")]
    MalformedFrame(&'static str),
    #[error("request lba={lba:#x} count={count} is not host-page aligned")]
    Unaligned { lba: u64, count: u16 },
    #[error("payload of {got} bytes does not match {expected}")]
    PayloadSize { got: usize, expected: usize },
    #[error("event queue full ({QUEUE_CAPACITY} commands pending)")]
    QueueFull,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventQueueEntry {
    pub id: CommandId,
    pub command: Command,
    pub lba: u64,
    pub sector_count: u16,
    pub key: AccessKey,
    pub payload: Option<Vec<u8>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompletionStatus {
    Success,
    AccessDenied,
    DeviceLockedOut,
    DeviceError,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completion {
    pub id: CommandId,
    pub command: Command,
    pub lba: u64,
    pub status: CompletionStatus,
    /// Read data for successful reads.
    pub payload: Option<Vec<u8>>,
}

impl Completion {
    pub fn is_success(&self) -> bool {
        self.status == CompletionStatus::Success
    }
}

pub struct Transport {
    geometry: FlashGeometry,
    queue: Mutex<VecDeque<EventQueueEntry>>,
    next_id: AtomicU64,
    device: Mutex<KeyFtl>,
    mailbox: Mutex<HashMap<CommandId, Completion>>,
    log: EventLog,
}

impl std::fmt::Debug for Transport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transport")
            .field("pending", &self.pending())
            .finish_non_exhaustive()
    }
}

impl Transport {
    /// Takes ownership of the device. The transport and the device share
    /// the device's event log.
    pub fn new(device: KeyFtl) -> Self {
        Transport {
            geometry: *device.geometry(),
            log: device.log().clone(),
            queue: Mutex::new(VecDeque::with_capacity(QUEUE_CAPACITY)),
            next_id: AtomicU64::new(1),
            device: Mutex::new(device),
            mailbox: Mutex::new(HashMap::new()),
        }
    }

    pub fn geometry(&self) -> &FlashGeometry {
        &self.geometry
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn pending(&self) -> usize {
        self.queue.lock().unwrap().len()
    }

    /// Runs `f` with exclusive access to the device.
    pub fn with_device<R>(&self, f: impl FnOnce(&mut KeyFtl) -> R) -> R {
        f(&mut self.device())
    }

    fn device(&self) -> MutexGuard<'_, KeyFtl> {
        self.device.lock().unwrap()
    }

    fn reject(&self, lba: u64, key: AccessKey, err: TransportError) -> TransportError {
        self.log.record(LogRecord {
            ts: self.next_id.load(Ordering::Relaxed),
            layer: LogLayer::Transport,
            event: LogEvent::Deny,
            lba,
            key,
            detail: err.to_string().replace(' ', "-"),
        });
        err
    }

    /// Decodes `frame` and queues it with its key. Write commands carry
    /// their data in `payload`.
    pub fn submit(
        &self,
        frame: &[u8],
        payload: Option<Vec<u8>>,
    ) -> Result<CommandId, TransportError> {
        let fis = RegisterFis::decode(frame)?;
        let command = fis
            .kind()
            .ok_or(TransportError::MalformedFrame("unknown command opcode"))?;
        let spp = self.geometry.sectors_per_host_page();
        if command != Command::Flush
            && (fis.count == 0 || fis.lba % spp != 0 || u64::from(fis.count) % spp != 0)
        {
            return Err(self.reject(
                fis.lba,
                fis.key,
                TransportError::Unaligned {
                    lba: fis.lba,
                    count: fis.count,
                },
            ));
        }
        let payload = match command {
            Command::Write => {
                let expected = usize::from(fis.count) * self.geometry.sector_bytes as usize;
                let got = payload.as_ref().map_or(0, Vec::len);
                if got != expected {
                    return Err(TransportError::PayloadSize { got, expected });
                }
                payload
            }
            _ => None,
        };
        let mut queue = self.queue.lock().unwrap();
        if queue.len() >= QUEUE_CAPACITY {
            drop(queue);
            return Err(self.reject(fis.lba, fis.key, TransportError::QueueFull));
        }
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        queue.push_back(EventQueueEntry {
            id,
            command,
            lba: fis.lba,
            sector_count: fis.count,
            key: fis.key,
            payload,
        });
        Ok(id)
    }

    /// Convenience: encode and submit.
    pub fn submit_command(
        &self,
        command: Command,
        lba: u64,
        sector_count: u32,
        key: AccessKey,
        payload: Option<Vec<u8>>,
    ) -> Result<CommandId, TransportError> {
        let frame = encode_register_fis(command, lba, sector_count, key)?;
        self.submit(&frame, payload)
    }

    /// Processes every queued command in FIFO order and returns one
    /// completion per command, in processing order.
    ///
    /// With several clients sharing the transport, use
    /// [`collect`](Self::collect) instead so each client receives its own
    /// completions.
    pub fn device_drain(&self) -> Vec<Completion> {
        let mut device = self.device();
        let mut out = Vec::new();
        loop {
            // Pop one at a time so submitters are not blocked for the
            // whole drain.
            let Some(entry) = self.queue.lock().unwrap().pop_front() else {
                break;
            };
            out.push(execute(&mut device, &self.geometry, entry));
        }
        out
    }

    /// Drains the queue and returns the completions for `ids`, in the
    /// order given. Completions belonging to other clients stay in the
    /// mailbox until collected.
    pub fn collect(&self, ids: &[CommandId]) -> Vec<Completion> {
        // Hold the mailbox across the drain so a concurrent collector
        // cannot look for its completions between drain and delivery.
        let mut mailbox = self.mailbox.lock().unwrap();
        for c in self.device_drain() {
            mailbox.insert(c.id, c);
        }
        ids.iter()
            .map(|id| {
                mailbox
                    .remove(id)
                    .unwrap_or_else(|| panic!("no completion for command {id}"))
            })
            .collect()
    }

    /// Submits a single command and waits for its completion.
    pub fn execute(
        &self,
        command: Command,
        lba: u64,
        sector_count: u32,
        key: AccessKey,
        payload: Option<Vec<u8>>,
    ) -> Result<Completion, TransportError> {
        let id = self.submit_command(command, lba, sector_count, key, payload)?;
        Ok(self.collect(&[id]).pop().unwrap())
    }
}

fn status_of(err: &FtlError) -> CompletionStatus {
    match err {
        FtlError::DeviceLockedOut => CompletionStatus::DeviceLockedOut,
        _ => CompletionStatus::DeviceError,
    }
}

fn execute(device: &mut KeyFtl, g: &FlashGeometry, entry: EventQueueEntry) -> Completion {
    let spp = g.sectors_per_host_page();
    let lpn = entry.lba / spp;
    let pages = u64::from(entry.sector_count) / spp;
    let verdict_status = |v: Verdict| match v {
        Verdict::Granted => CompletionStatus::Success,
        Verdict::Denied => CompletionStatus::AccessDenied,
    };
    let (status, payload) = match entry.command {
        Command::Read => match device.read_multi(lpn, pages, entry.key) {
            Ok(ReadOutcome::Granted(data)) => (CompletionStatus::Success, Some(data)),
            Ok(ReadOutcome::Denied) => (CompletionStatus::AccessDenied, None),
            Err(e) => (status_of(&e), None),
        },
        Command::Write => {
            let data = entry.payload.as_deref().unwrap_or(&[]);
            match device.write_multi(lpn, pages, entry.key, data) {
                Ok(v) => (verdict_status(v), None),
                Err(e) => (status_of(&e), None),
            }
        }
        Command::Trim => match device.trim(lpn, pages, entry.key) {
            Ok(v) => (verdict_status(v), None),
            Err(e) => (status_of(&e), None),
        },
        Command::Flush => match device.flush() {
            Ok(_) => (CompletionStatus::Success, None),
            Err(e) => (status_of(&e), None),
        },
    };
    Completion {
        id: entry.id,
        command: entry.command,
        lba: entry.lba,
        status,
        payload,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ftl::{FtlConfig, FtlVariant};

    fn transport() -> Transport {
        let cfg = FtlConfig::new(FtlVariant::KeyStatic).with_geometry(FlashGeometry::small());
        Transport::new(KeyFtl::new(cfg).unwrap())
    }

    const K: AccessKey = AccessKey::new(0x33);

    #[test]
    fn fifo_completions() {
        let t = transport();
        let ids: Vec<_> = (0..3u64)
            .map(|i| {
                t.submit_command(Command::Write, i * 8, 8, K, Some(vec![i as u8; 4096]))
                    .unwrap()
            })
            .collect();
        let done = t.device_drain();
        assert_eq!(done.iter().map(|c| c.id).collect::<Vec<_>>(), ids);
        assert!(done.iter().all(Completion::is_success));
        assert_eq!(t.pending(), 0);
    }

    #[test]
    fn queue_capacity_is_128() {
        let t = transport();
        for _ in 0..QUEUE_CAPACITY {
            t.submit_command(Command::Read, 0, 8, AccessKey::NONE, None)
                .unwrap();
        }
        assert_eq!(
            t.submit_command(Command::Read, 0, 8, AccessKey::NONE, None),
            Err(TransportError::QueueFull)
        );
        assert_eq!(t.device_drain().len(), QUEUE_CAPACITY);
    }

    #[test]
    fn wrong_key_read_is_access_denied() {
        let t = transport();
        let c = t
            .execute(Command::Write, 16, 8, K, Some(vec![1; 4096]))
            .unwrap();
        assert!(c.is_success());
        let c = t
            .execute(Command::Read, 16, 8, AccessKey::new(0x18), None)
            .unwrap();
        assert_eq!(c.status, CompletionStatus::AccessDenied);
        assert_eq!(c.payload, None);
        let c = t.execute(Command::Read, 16, 8, K, None).unwrap();
        assert_eq!(c.payload, Some(vec![1; 4096]));
    }

    #[test]
    fn rejects_unaligned_and_short_payloads() {
        let t = transport();
        assert!(matches!(
            t.submit_command(Command::Read, 4, 8, K, None),
            Err(TransportError::Unaligned { .. })
        ));
        assert!(matches!(
            t.submit_command(Command::Read, 8, 12, K, None),
            Err(TransportError::Unaligned { .. })
        ));
        assert!(matches!(
            t.submit_command(Command::Write, 8, 8, K, Some(vec![0; 100])),
            Err(TransportError::PayloadSize { .. })
        ));
        assert_eq!(t.pending(), 0);
        assert!(t
            .log()
            .lines()
            .iter()
            .any(|l| l.contains("layer=transport")));
    }

    #[test]
    fn lockout_surfaces_as_status() {
        let mut cfg = FtlConfig::new(FtlVariant::KeyStatic).with_geometry(FlashGeometry::small());
        cfg.lockout_threshold = 1;
        let t = Transport::new(KeyFtl::new(cfg).unwrap());
        t.execute(Command::Write, 0, 8, K, Some(vec![1; 4096]))
            .unwrap();
        let c = t
            .execute(Command::Read, 0, 8, AccessKey::NONE, None)
            .unwrap();
        assert_eq!(c.status, CompletionStatus::AccessDenied);
        let c = t.execute(Command::Read, 0, 8, K, None).unwrap();
        assert_eq!(c.status, CompletionStatus::DeviceLockedOut);
        let c = t.execute(Command::Flush, 0, 0, K, None).unwrap();
        assert_eq!(c.status, CompletionStatus::DeviceLockedOut);
    }

    #[test]
    fn out_of_range_is_device_error() {
        let t = transport();
        let limit = t.with_device(|d| d.host_lpns()) * 8;
        let c = t.execute(Command::Read, limit, 8, K, None).unwrap();
        assert_eq!(c.status, CompletionStatus::DeviceError);
    }
}
