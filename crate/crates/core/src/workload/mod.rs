//! Benchmark generators and scripted attack scenarios.
//!
//! [`generate`] turns a [`WorkloadSpec`] into a deterministic op stream;
//! [`run_workload`] replays it against a [`HostStack`]. Scenarios live in
//! [`attack`].

pub mod attack;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::host::{HostError, HostStack};
use crate::key::AccessKey;
use crate::transport::{Command, CompletionStatus, TransportError, QUEUE_CAPACITY};

pub use attack::{
    encrypt, run_scenario, AttackKind, ScenarioConfig, ScenarioVerdict, Step, StepOutcome,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pattern {
    SeqRead,
    SeqWrite,
    RandRead,
    RandWrite,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [
        Pattern::SeqRead,
        Pattern::SeqWrite,
        Pattern::RandRead,
        Pattern::RandWrite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::SeqRead => "seqread",
            Pattern::SeqWrite => "seqwrite",
            Pattern::RandRead => "randread",
            Pattern::RandWrite => "randwrite",
        }
    }

    pub fn parse(s: &str) -> Option<Pattern> {
        Pattern::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn is_write(self) -> bool {
        matches!(self, Pattern::SeqWrite | Pattern::RandWrite)
    }

    pub fn is_random(self) -> bool {
        matches!(self, Pattern::RandRead | Pattern::RandWrite)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileProfile {
    /// `count` one-page files, each opened and closed around its I/O.
    SmallFiles { count: u64 },
    /// `count` files of `bytes` each, held open for the whole run.
    BigFiles { count: u64, bytes: u64 },
    /// `pages` host pages of the raw device starting at `first_lpn`.
    RawDevice { first_lpn: u64, pages: u64 },
}

impl FileProfile {
    pub const BIG_FILE_BYTES: u64 = 8 << 20;

    pub fn name(&self) -> &'static str {
        match self {
            FileProfile::SmallFiles { .. } => "small",
            FileProfile::BigFiles { .. } => "big",
            FileProfile::RawDevice { .. } => "raw",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub pattern: Pattern,
    pub queue_depth: usize,
    pub profile: FileProfile,
    pub client_count: usize,
    pub seed: u64,
    /// Page operations for random patterns; defaults to the footprint.
    pub random_ops: Option<u64>,
}

impl WorkloadSpec {
    pub fn new(pattern: Pattern, profile: FileProfile) -> Self {
        WorkloadSpec {
            pattern,
            queue_depth: 1,
            profile,
            client_count: 1,
            seed: 0,
            random_ops: None,
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.queue_depth == 0 || self.queue_depth > QUEUE_CAPACITY {
            return Err(WorkloadError::Spec(format!(
                "queue depth {} outside 1..={QUEUE_CAPACITY}",
                self.queue_depth
            )));
        }
        if self.client_count == 0 {
            return Err(WorkloadError::Spec(
                "client count must be at least 1".into(),
            ));
        }
        let empty = match self.profile {
            FileProfile::SmallFiles { count } => count == 0,
            FileProfile::BigFiles { count, bytes } => count == 0 || bytes == 0,
            FileProfile::RawDevice { pages, .. } => pages == 0,
        };
        if empty {
            return Err(WorkloadError::Spec("workload footprint is empty".into()));
        }
        Ok(())
    }

    /// Pages in one file, or in the raw region.
    fn pages_per_target(&self, page_bytes: u64) -> u64 {
        match self.profile {
            FileProfile::SmallFiles { .. } => 1,
            FileProfile::BigFiles { bytes, .. } => bytes.div_ceil(page_bytes),
            FileProfile::RawDevice { pages, .. } => pages,
        }
    }

    fn targets(&self) -> u64 {
        match self.profile {
            FileProfile::SmallFiles { count } | FileProfile::BigFiles { count, .. } => count,
            FileProfile::RawDevice { .. } => 1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("invalid workload: {0}")]
    Spec(String),
    #[error(transparent)]
    Host(#[from] HostError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    Raw,
    File(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WorkloadOp {
    Open {
        client: usize,
        file: u64,
    },
    Close {
        client: usize,
        file: u64,
    },
    /// Pages submitted together and kept outstanding at once. Raw pages
    /// are host LPNs; file pages are file page indexes.
    Io {
        client: usize,
        target: Target,
        write: bool,
        pages: Vec<u64>,
    },
}

pub fn file_path(file: u64) -> String {
    format!("wl{file:06}")
}

/// Op stream for one client, before interleaving.
fn client_stream(
    spec: &WorkloadSpec,
    client: usize,
    page_bytes: u64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<WorkloadOp>> {
    let qd = spec.queue_depth;
    let write = spec.pattern.is_write();
    let clients = spec.client_count as u64;
    let per_target = spec.pages_per_target(page_bytes);
    let io = |target, pages: Vec<u64>| WorkloadOp::Io {
        client,
        target,
        write,
        pages,
    };
    // Each inner Vec is a unit the scheduler never splits.
    let mut units: Vec<Vec<WorkloadOp>> = Vec::new();
    match spec.profile {
        FileProfile::RawDevice {
            first_lpn: base,
            pages,
        } => {
            if spec.pattern.is_random() {
                let n = spec.random_ops.unwrap_or(pages) / clients
                    + u64::from((client as u64) < spec.random_ops.unwrap_or(pages) % clients);
                let picks: Vec<u64> = (0..n).map(|_| base + rng.random_range(0..pages)).collect();
                for chunk in picks.chunks(qd) {
                    units.push(vec![io(Target::Raw, chunk.to_vec())]);
                }
            } else {
                let lo = pages * client as u64 / clients;
                let hi = pages * (client as u64 + 1) / clients;
                let all: Vec<u64> = (base + lo..base + hi).collect();
                for chunk in all.chunks(qd) {
                    units.push(vec![io(Target::Raw, chunk.to_vec())]);
                }
            }
        }
        _ => {
            let mine: Vec<u64> = (0..spec.targets())
                .filter(|f| f % clients == client as u64)
                .collect();
            if mine.is_empty() {
                return units;
            }
            let small = matches!(spec.profile, FileProfile::SmallFiles { .. });
            if !spec.pattern.is_random() {
                for &f in &mine {
                    let mut unit = vec![WorkloadOp::Open { client, file: f }];
                    let pages: Vec<u64> = (0..per_target).collect();
                    for chunk in pages.chunks(qd) {
                        unit.push(io(Target::File(f), chunk.to_vec()));
                    }
                    unit.push(WorkloadOp::Close { client, file: f });
                    units.push(unit);
                }
            } else {
                let total = mine.len() as u64 * per_target;
                let n = spec.random_ops.map_or(total, |n| n / clients);
                if small {
                    for _ in 0..n {
                        let f = mine[rng.random_range(0..mine.len())];
                        units.push(vec![
                            WorkloadOp::Open { client, file: f },
                            io(Target::File(f), vec![0]),
                            WorkloadOp::Close { client, file: f },
                        ]);
                    }
                } else {
                    units.push(
                        mine.iter()
                            .map(|&f| WorkloadOp::Open { client, file: f })
                            .collect(),
                    );
                    for _ in 0..n {
                        let f = mine[rng.random_range(0..mine.len())];
                        let p = rng.random_range(0..per_target);
                        units.push(vec![io(Target::File(f), vec![p])]);
                    }
                    units.push(
                        mine.iter()
                            .map(|&f| WorkloadOp::Close { client, file: f })
                            .collect(),
                    );
                }
            }
        }
    }
    units
}

/// Deterministic op stream for `spec`. Clients are interleaved by a
/// scheduler seeded from the spec, one unit (an I/O batch, or an
/// open/I/O/close group for small files) at a time.
pub fn generate(spec: &WorkloadSpec, page_bytes: u64) -> Result<Vec<WorkloadOp>, WorkloadError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut streams: Vec<std::collections::VecDeque<Vec<WorkloadOp>>> = (0..spec.client_count)
        .map(|c| client_stream(spec, c, page_bytes, &mut rng).into())
        .collect();
    let mut out = Vec::new();
    loop {
        let live: Vec<usize> = (0..streams.len())
            .filter(|&c| !streams[c].is_empty())
            .collect();
        let Some(&c) = live.choose(&mut rng) else {
            break;
        };
        out.extend(streams[c].pop_front().unwrap());
    }
    Ok(out)
}

/// Page-level view of a stream: (target, write, page) in submission order.
pub fn page_ops(ops: &[WorkloadOp]) -> Vec<(Target, bool, u64)> {
    ops.iter()
        .filter_map(|op| match op {
            WorkloadOp::Io {
                target,
                write,
                pages,
                ..
            } => Some(pages.iter().map(move |&p| (*target, *write, p))),
            _ => None,
        })
        .flatten()
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    pub ops: u64,
    pub pages_read: u64,
    pub pages_written: u64,
    pub denied: u64,
    pub flushes: u64,
}

/// Payload written to `page` of `target` by write workloads.
pub fn fill_byte(target: Target, page: u64, seed: u64) -> u8 {
    let t = match target {
        Target::Raw => 0xA5,
        Target::File(f) => f,
    };
    (page.wrapping_mul(0x9E37_79B9) ^ t.wrapping_mul(31) ^ seed) as u8
}

/// Replays `ops` against `host`. Client `c` uses `keys[c % keys.len()]`.
/// With `flush_interval = Some(n)`, a FLUSH follows every `n` written
/// pages. Denied I/O is counted, not treated as an error.
pub fn run_workload(
    host: &HostStack,
    ops: &[WorkloadOp],
    keys: &[AccessKey],
    seed: u64,
    flush_interval: Option<u64>,
) -> Result<RunStats, WorkloadError> {
    let keys = if keys.is_empty() {
        &[AccessKey::NONE][..]
    } else {
        keys
    };
    let pb = host.transport().geometry().host_page_bytes;
    let spp = host.transport().geometry().sectors_per_host_page();
    let mut stats = RunStats::default();
    let mut handles = std::collections::HashMap::new();
    let mut since_flush = 0u64;
    for op in ops {
        stats.ops += 1;
        match op {
            WorkloadOp::Open { client, file } => {
                let key = keys[client % keys.len()];
                let h = host.open_key(&file_path(*file), key, true)?;
                handles.insert((*client, *file), h);
            }
            WorkloadOp::Close { client, file } => {
                if let Some(h) = handles.remove(&(*client, *file)) {
                    host.close_key(h)?;
                }
            }
            WorkloadOp::Io {
                client,
                target,
                write,
                pages,
            } => {
                let key = keys[client % keys.len()];
                let n = pages.len() as u64;
                match target {
                    Target::Raw => {
                        let t = host.transport();
                        let ids = pages
                            .iter()
                            .map(|&lpn| {
                                let data =
                                    write.then(|| vec![fill_byte(*target, lpn, seed); pb as usize]);
                                let cmd = if *write {
                                    Command::Write
                                } else {
                                    Command::Read
                                };
                                t.submit_command(cmd, lpn * spp, spp as u32, key, data)
                            })
                            .collect::<Result<Vec<_>, _>>()?;
                        for c in t.collect(&ids) {
                            match c.status {
                                CompletionStatus::Success => {}
                                CompletionStatus::AccessDenied => stats.denied += 1,
                                CompletionStatus::DeviceLockedOut => {
                                    return Err(HostError::DeviceLockedOut.into())
                                }
                                CompletionStatus::DeviceError => {
                                    return Err(HostError::DeviceError { lba: c.lba }.into())
                                }
                            }
                        }
                    }
                    Target::File(f) => {
                        let h = handles
                            .get(&(*client, *f))
                            .copied()
                            .ok_or(HostError::NotFound(file_path(*f)))?;
                        let contiguous = pages.windows(2).all(|w| w[1] == w[0] + 1);
                        let runs: Vec<(u64, u64)> = if contiguous {
                            vec![(pages[0], n)]
                        } else {
                            pages.iter().map(|&p| (p, 1)).collect()
                        };
                        for (p, len) in runs {
                            let res = if *write {
                                let mut data = Vec::with_capacity((len * pb) as usize);
                                for q in p..p + len {
                                    data.resize(
                                        data.len() + pb as usize,
                                        fill_byte(*target, q, seed),
                                    );
                                }
                                host.file_write(h, p * pb, &data)
                            } else {
                                host.file_read(h, p * pb, len * pb).map(drop)
                            };
                            match res {
                                Ok(()) => {}
                                Err(HostError::AccessDenied { .. }) => stats.denied += len,
                                Err(e) => return Err(e.into()),
                            }
                        }
                    }
                }
                if *write {
                    stats.pages_written += n;
                    since_flush += n;
                    if let Some(every) = flush_interval.filter(|&e| e > 0) {
                        if since_flush >= every {
                            host.sync()?;
                            stats.flushes += 1;
                            since_flush = 0;
                        }
                    }
                } else {
                    stats.pages_read += n;
                }
            }
        }
    }
    for (_, h) in handles {
        host.close_key(h)?;
    }
    Ok(stats)
}

/// Writes every page the spec will touch so read workloads find data.
/// Target `t` gets key `key_for(t)`; files are created as needed.
pub fn prefill(
    host: &HostStack,
    spec: &WorkloadSpec,
    seed: u64,
    key_for: impl Fn(Target, u64) -> AccessKey,
) -> Result<(), WorkloadError> {
    spec.validate()?;
    let g = *host.transport().geometry();
    let pb = g.host_page_bytes;
    let spp = g.sectors_per_host_page();
    match spec.profile {
        FileProfile::RawDevice {
            first_lpn: base,
            pages,
        } => {
            let t = host.transport();
            let all: Vec<u64> = (base..base + pages).collect();
            for chunk in all.chunks(QUEUE_CAPACITY) {
                let ids = chunk
                    .iter()
                    .map(|&lpn| {
                        let data = vec![fill_byte(Target::Raw, lpn, seed); pb as usize];
                        t.submit_command(
                            Command::Write,
                            lpn * spp,
                            spp as u32,
                            key_for(Target::Raw, lpn),
                            Some(data),
                        )
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if let Some(c) = t.collect(&ids).into_iter().find(|c| !c.is_success()) {
                    return Err(HostError::AccessDenied { lba: c.lba }.into());
                }
            }
        }
        _ => {
            let per = spec.pages_per_target(pb);
            for f in 0..spec.targets() {
                let target = Target::File(f);
                let h = host.open_key(&file_path(f), key_for(target, 0), true)?;
                let mut data = Vec::with_capacity((per * pb) as usize);
                for p in 0..per {
                    data.resize(data.len() + pb as usize, fill_byte(target, p, seed));
                }
                host.file_write(h, 0, &data)?;
                host.close_key(h)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flash::FlashGeometry;
    use crate::ftl::{FtlConfig, FtlVariant, KeyFtl};
    use crate::host::HostConfig;

    fn raw(pattern: Pattern, pages: u64) -> WorkloadSpec {
        WorkloadSpec::new(
            pattern,
            FileProfile::RawDevice {
                first_lpn: 0,
                pages,
            },
        )
    }

    #[test]
    fn seq_write_one_mib_is_256_in_order_pages() {
        let ops = generate(&raw(Pattern::SeqWrite, 256), 4096).unwrap();
        let pages = page_ops(&ops);
        assert_eq!(pages.len(), 256);
        assert!(pages
            .iter()
            .enumerate()
            .all(|(i, &(t, w, p))| t == Target::Raw && w && p == i as u64));
        assert_eq!(ops.len(), 256);
    }

    #[test]
    fn queue_depth_sets_batch_size() {
        let mut spec = raw(Pattern::SeqRead, 100);
        spec.queue_depth = 32;
        let ops = generate(&spec, 4096).unwrap();
        let sizes: Vec<usize> = ops
            .iter()
            .map(|o| match o {
                WorkloadOp::Io { pages, .. } => pages.len(),
                _ => 0,
            })
            .collect();
        assert_eq!(sizes, vec![32, 32, 32, 4]);
    }

    #[test]
    fn random_streams_are_seeded() {
        let mut spec = raw(Pattern::RandRead, 512);
        spec.queue_depth = 32;
        spec.seed = 9;
        let a = generate(&spec, 4096).unwrap();
        assert_eq!(a, generate(&spec, 4096).unwrap());
        spec.seed = 10;
        assert_ne!(a, generate(&spec, 4096).unwrap());
    }

    #[test]
    fn small_files_are_open_io_close_triples() {
        let spec = WorkloadSpec::new(Pattern::SeqWrite, FileProfile::SmallFiles { count: 1000 });
        let ops = generate(&spec, 4096).unwrap();
        assert_eq!(ops.len(), 3000);
        for (i, t) in ops.chunks(3).enumerate() {
            let f = i as u64;
            assert_eq!(t[0], WorkloadOp::Open { client: 0, file: f });
            assert!(matches!(&t[1], WorkloadOp::Io { target: Target::File(x), .. } if *x == f));
            assert_eq!(t[2], WorkloadOp::Close { client: 0, file: f });
        }
    }

    #[test]
    fn clients_partition_the_work() {
        let mut spec = WorkloadSpec::new(
            Pattern::SeqWrite,
            FileProfile::BigFiles {
                count: 4,
                bytes: 64 * 4096,
            },
        );
        spec.client_count = 3;
        spec.queue_depth = 8;
        let ops = generate(&spec, 4096).unwrap();
        assert_eq!(page_ops(&ops).len(), 4 * 64);
        for op in &ops {
            if let WorkloadOp::Io {
                client,
                target: Target::File(f),
                ..
            } = op
            {
                assert_eq!(*f % 3, *client as u64);
            }
        }
        assert!(generate(
            &WorkloadSpec {
                client_count: 0,
                ..spec
            },
            4096
        )
        .is_err());
    }

    #[test]
    fn runs_against_the_stack() {
        let ftl = FtlConfig::new(FtlVariant::KeyDynamic).with_geometry(FlashGeometry::small());
        let host = HostStack::with_device(
            HostConfig {
                queue_depth: 4,
                ..HostConfig::default()
            },
            KeyFtl::new(ftl).unwrap(),
        )
        .unwrap();
        let mut spec = WorkloadSpec::new(
            Pattern::SeqWrite,
            FileProfile::BigFiles {
                count: 2,
                bytes: 16 * 4096,
            },
        );
        spec.queue_depth = 4;
        spec.client_count = 2;
        let ops = generate(&spec, 4096).unwrap();
        let keys = [AccessKey::new(1), AccessKey::new(2)];
        let st = run_workload(&host, &ops, &keys, 0, Some(8)).unwrap();
        assert_eq!(st.pages_written, 32);
        assert_eq!(st.flushes, 4);
        assert_eq!(st.denied, 0);
        spec.pattern = Pattern::RandRead;
        let ops = generate(&spec, 4096).unwrap();
        let st = run_workload(&host, &ops, &keys, 0, None).unwrap();
        assert_eq!(st.denied, 0);
        // Swapped keys: every read is refused at open.
        let st = run_workload(&host, &ops, &[keys[1], keys[0]], 0, None);
        assert!(matches!(
            st,
            Err(WorkloadError::Host(HostError::OpenDeniedByDevice(_)))
        ));
        assert!(host.key_lba_table().is_empty());
        assert!(host.key_inode_table().is_empty());
    }
}
