//! The bench sweep: one metrics row per configuration point.

use std::io::{self, Write};

use thiserror::Error;

use super::config::ExperimentConfig;
use crate::ftl::{FlushMode, FtlConfig, FtlError, FtlMetrics, FtlVariant, KeyFtl};
use crate::host::{HostError, HostStack};
use crate::key::AccessKey;
use crate::workload::{
    generate, prefill, run_workload, FileProfile, Target, WorkloadError, WorkloadSpec,
};

pub const CSV_VERSION: &str = "# keyssd-metrics v1";

pub const CSV_HEADER: &str = "variant,flush_mode,queue_depth,locked_fraction,workload,profile,\
clients,seed,ops,pages_read,pages_written,grants,denials,decisions,flash_reads,flash_programs,\
flash_erases,flushes,flushed_bytes,flushed_pages,flush_image_pages,gc_runs,gc_moves,\
index_inserts,index_searches,cache_hits,cache_misses,key_inode_entries,key_lba_entries";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Ftl(#[from] FtlError),
    #[error(transparent)]
    Host(#[from] HostError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetricsRow {
    pub variant: FtlVariant,
    pub flush_mode: FlushMode,
    pub queue_depth: usize,
    pub locked_fraction: u8,
    pub workload: &'static str,
    pub profile: &'static str,
    pub clients: usize,
    pub seed: u64,
    pub ops: u64,
    pub pages_read: u64,
    pub pages_written: u64,
    pub ftl: FtlMetrics,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub key_inode_entries: usize,
    pub key_lba_entries: usize,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        let m = &self.ftl;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.variant.name(),
            self.flush_mode.short(),
            self.queue_depth,
            self.locked_fraction,
            self.workload,
            self.profile,
            self.clients,
            self.seed,
            self.ops,
            self.pages_read,
            self.pages_written,
            m.grants,
            m.denials,
            m.decisions(),
            m.flash.reads,
            m.flash.programs,
            m.flash.erases,
            m.flushes,
            m.flushed_bytes,
            m.flushed_pages,
            m.flush_image_pages,
            m.gc_runs,
            m.gc_moves,
            m.index_inserts,
            m.index_searches,
            self.cache_hits,
            self.cache_misses,
            self.key_inode_entries,
            self.key_lba_entries,
        )
    }

    /// Fraction of the metadata image actually written by the flushes.
    pub fn dirty_fraction(&self) -> f64 {
        if self.ftl.flush_image_pages == 0 {
            0.0
        } else {
            self.ftl.flushed_pages as f64 / self.ftl.flush_image_pages as f64
        }
    }

    pub fn write_csv<W: Write>(rows: &[MetricsRow], mut out: W) -> io::Result<()> {
        writeln!(out, "{CSV_VERSION}")?;
        writeln!(out, "{CSV_HEADER}")?;
        for r in rows {
            writeln!(out, "{}", r.csv_line())?;
        }
        Ok(())
    }
}

fn delta(after: FtlMetrics, before: FtlMetrics) -> FtlMetrics {
    FtlMetrics {
        flash: after.flash.saturating_sub(before.flash),
        grants: after.grants - before.grants,
        denials: after.denials - before.denials,
        flushes: after.flushes - before.flushes,
        flushed_bytes: after.flushed_bytes - before.flushed_bytes,
        flushed_pages: after.flushed_pages - before.flushed_pages,
        flush_image_pages: after.flush_image_pages - before.flush_image_pages,
        gc_runs: after.gc_runs - before.gc_runs,
        gc_moves: after.gc_moves - before.gc_moves,
        index_inserts: after.index_inserts - before.index_inserts,
        index_searches: after.index_searches - before.index_searches,
        meta_relocations: after.meta_relocations - before.meta_relocations,
        trims: after.trims - before.trims,
    }
}

/// Runs one configuration point.
fn run_point(
    cfg: &ExperimentConfig,
    variant: FtlVariant,
    flush_mode: FlushMode,
    queue_depth: usize,
    locked_fraction: u8,
) -> Result<MetricsRow, BenchError> {
    let mut ftl = FtlConfig::new(variant).with_geometry(cfg.geometry);
    ftl.flush_mode = flush_mode;
    ftl.lockout_threshold = cfg.lockout_threshold;
    let host = HostStack::with_device(cfg.host_config(queue_depth), KeyFtl::new(ftl)?)?;
    let spec = WorkloadSpec {
        pattern: cfg.pattern,
        queue_depth,
        profile: cfg.file_profile(),
        client_count: cfg.clients,
        seed: cfg.seed,
        random_ops: cfg.random_ops,
    };
    let owner = cfg.owner_key;

    // Setup: populate and lock the footprint. Not part of the measurement.
    if !cfg.pattern.is_write() || locked_fraction > 0 {
        let locked_below = |n: u64| n * u64::from(locked_fraction) / 100;
        let (first, span) = match spec.profile {
            FileProfile::RawDevice { first_lpn, pages } => (first_lpn, pages),
            FileProfile::SmallFiles { count } | FileProfile::BigFiles { count, .. } => (0, count),
        };
        let cut = first + locked_below(span);
        prefill(&host, &spec, cfg.seed, |t, lpn| {
            let idx = match t {
                Target::Raw => lpn,
                Target::File(f) => f,
            };
            if idx < cut {
                owner
            } else {
                AccessKey::NONE
            }
        })?;
        host.sync()?;
        host.drop_caches();
    }
    let ftl_before = host.transport().with_device(|d| d.metrics());
    let host_before = host.metrics();
    // Setup opens stay behind in NoClose mode; report only the run's.
    let inode_entries_before = host.key_inode_table().len();

    let ops = generate(&spec, cfg.geometry.host_page_bytes)?;
    let flush_every = (cfg.flush_interval > 0).then_some(cfg.flush_interval);
    let stats = run_workload(&host, &ops, &[owner], cfg.seed, flush_every)?;

    let ftl_after = host.transport().with_device(|d| d.metrics());
    let host_after = host.metrics();
    Ok(MetricsRow {
        variant,
        flush_mode,
        queue_depth,
        locked_fraction,
        workload: cfg.pattern.name(),
        profile: spec.profile.name(),
        clients: cfg.clients,
        seed: cfg.seed,
        ops: stats.ops,
        pages_read: stats.pages_read,
        pages_written: stats.pages_written,
        ftl: delta(ftl_after, ftl_before),
        cache_hits: host_after.cache_hits - host_before.cache_hits,
        cache_misses: host_after.cache_misses - host_before.cache_misses,
        key_inode_entries: host.key_inode_table().len() - inode_entries_before,
        key_lba_entries: host.key_lba_table().len(),
    })
}

/// Runs every (variant, flush mode, queue depth, locked fraction) point in
/// that nesting order.
pub fn run_bench(cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>, BenchError> {
    let mut rows = Vec::new();
    for &v in &cfg.variants {
        for &f in &cfg.flush_modes {
            for &q in &cfg.queue_depths {
                for &l in &cfg.locked_fractions {
                    rows.push(run_point(cfg, v, f, q, l)?);
                }
            }
        }
    }
    Ok(rows)
}
