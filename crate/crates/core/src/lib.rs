//! Deterministic simulator of a key-authenticated SSD stack.
//!
//! The layers, bottom up:
//!
//! * [`flash`]: NAND pages with program-once/erase-by-block discipline.
//! * [`ftl`]: page-mapping FTL that authenticates every request against a
//!   per-page access key, in a static (per-entry slot) or dynamic
//!   (per-key search tree) layout.
//! * [`transport`]: host-to-device Register FIS codec with the key in the
//!   fifth word, and the device's FIFO software event queue.
//! * [`host`]: a small file layer that attaches keys to block requests,
//!   with a page cache and the read-verify defense.
//! * [`workload`]: benchmark generators and scripted ransomware behaviours.
//! * [`harness`]: experiment configs, CSV metrics and the verify batteries.

pub mod flash;
pub mod ftl;
pub mod harness;
pub mod host;
pub mod key;
pub mod log;
pub mod oracle;
pub mod transport;
pub mod workload;

pub use flash::{FlashCounters, FlashDevice, FlashError, FlashGeometry, PageState};
pub use ftl::{
    AccessMode, FlushMode, FtlConfig, FtlError, FtlMetrics, FtlVariant, KeyFtl, MultiMode,
    ReadOutcome, Verdict,
};

pub use host::{CloseMode, FileHandle, HostConfig, HostError, HostStack, RawOp, RequestClass};
pub use key::AccessKey;
pub use log::{EventLog, LogEvent, LogLayer, LogRecord};
pub use transport::{
    Command, Completion, CompletionStatus, RegisterFis, Transport, TransportError,
};
