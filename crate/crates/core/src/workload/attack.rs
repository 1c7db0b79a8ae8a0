//! Scripted ransomware behaviours run against a fresh stack.
//!
//! Each scenario sets up a victim file owned by a key, then plays the
//! attacker's steps in order. The first refused step is recorded as
//! `blocked_at` and every later step is skipped.

use std::collections::HashSet;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::flash::FlashGeometry;
use crate::ftl::{FtlConfig, FtlVariant, KeyFtl};
use crate::host::{CloseMode, HostConfig, HostError, HostStack, RawOp};
use crate::key::AccessKey;
use crate::log::{LogEvent, LogLayer};
use crate::transport::{Command, CompletionStatus};

use super::WorkloadError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttackKind {
    NormalPathEncrypt,
    DirectIoOverwrite,
    PageCacheExfiltrate,
    BruteForce,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [
        AttackKind::NormalPathEncrypt,
        AttackKind::DirectIoOverwrite,
        AttackKind::PageCacheExfiltrate,
        AttackKind::BruteForce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::NormalPathEncrypt => "normal-path-encrypt",
            AttackKind::DirectIoOverwrite => "direct-io-overwrite",
            AttackKind::PageCacheExfiltrate => "page-cache-exfiltrate",
            AttackKind::BruteForce => "brute-force",
        }
    }

    pub fn parse(s: &str) -> Option<AttackKind> {
        AttackKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Step {
    Infection,
    Open,
    Read,
    Encrypt,
    WriteCopy,
    Delete,
    RawWrite,
    KeyGuess,
    Notice,
}

impl Step {
    pub fn name(self) -> &'static str {
        match self {
            Step::Infection => "infection",
            Step::Open => "open",
            Step::Read => "read",
            Step::Encrypt => "encrypt",
            Step::WriteCopy => "write-copy",
            Step::Delete => "delete",
            Step::RawWrite => "raw-write",
            Step::KeyGuess => "key-guess",
            Step::Notice => "notice",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Succeeded,
    Blocked,
    Skipped,
}

impl StepOutcome {
    pub fn name(self) -> &'static str {
        match self {
            StepOutcome::Succeeded => "ok",
            StepOutcome::Blocked => "blocked",
            StepOutcome::Skipped => "skipped",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub kind: AttackKind,
    pub geometry: FlashGeometry,
    pub variant: FtlVariant,
    pub read_verify: bool,
    /// Owner reads the whole file before the attack starts.
    pub warm_cache: bool,
    pub owner_key: AccessKey,
    /// Key the attacker presents; `NONE` for a keyless attacker.
    pub attacker_key: AccessKey,
    /// Whether the victim file is written with the owner key at all.
    pub lock_victim: bool,
    pub victim_bytes: u64,
    /// Sector where the victim file starts.
    pub victim_lba: u64,
    /// Size of the raw overwrite.
    pub overwrite_bytes: u64,
    pub lockout_threshold: u64,
    pub guesses: u64,
    /// 1-based guess index at which the owner key is tried.
    pub plant_correct_at: Option<u64>,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Defaults for `kind` on the keyed static FTL.
    pub fn new(kind: AttackKind) -> Self {
        ScenarioConfig {
            kind,
            geometry: FlashGeometry::default(),
            variant: FtlVariant::KeyStatic,
            // The normal-path script models a stock kernel path: no
            // verification on open, and the cache is cold.
            read_verify: kind != AttackKind::NormalPathEncrypt,
            warm_cache: kind == AttackKind::PageCacheExfiltrate,
            owner_key: AccessKey::new(0x000033),
            attacker_key: AccessKey::NONE,
            lock_victim: true,
            victim_bytes: 1 << 20,
            victim_lba: 0x43000,
            overwrite_bytes: 24 * 1024,
            lockout_threshold: 64,
            guesses: 100,
            plant_correct_at: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioVerdict {
    pub kind: AttackKind,
    pub steps: Vec<(Step, StepOutcome)>,
    pub blocked_at: Option<Step>,
    /// Device-side deny and lockout lines produced during the attack.
    pub device_log: Vec<String>,
    /// Sector addresses of refused raw writes.
    pub denied_lbas: Vec<u64>,
    /// The attacker obtained victim bytes.
    pub leaked_plaintext: bool,
    /// The owner can still read the original bytes.
    pub original_intact: bool,
    /// Key guesses made.
    pub attempts: u64,
    /// Guess whose refusal locked the device.
    pub locked_out_at: Option<u64>,
    /// Guesses answered with a lockout refusal.
    pub refused_after_lockout: u64,
}

impl ScenarioVerdict {
    pub fn breached(&self) -> bool {
        self.blocked_at.is_none()
    }

    pub fn outcome(&self, step: Step) -> Option<StepOutcome> {
        self.steps.iter().find(|(s, _)| *s == step).map(|(_, o)| *o)
    }

    /// Line-oriented report.
    pub fn report(&self) -> Vec<String> {
        let mut out = vec![format!("scenario={}", self.kind.name())];
        for (s, o) in &self.steps {
            out.push(format!("step={} outcome={}", s.name(), o.name()));
        }
        out.push(format!(
            "blocked_at={}",
            self.blocked_at.map_or("none", Step::name)
        ));
        out.push(format!(
            "leaked_plaintext={} original_intact={}",
            self.leaked_plaintext, self.original_intact
        ));
        if self.kind == AttackKind::BruteForce {
            out.push(format!(
                "attempts={} locked_out_at={} refused_after_lockout={}",
                self.attempts,
                self.locked_out_at
                    .map_or("none".to_string(), |n| n.to_string()),
                self.refused_after_lockout
            ));
        }
        if !self.denied_lbas.is_empty() {
            let lbas: Vec<String> = self.denied_lbas.iter().map(|l| format!("{l:#x}")).collect();
            out.push(format!("denied_lbas={}", lbas.join(",")));
        }
        out.extend(self.device_log.iter().cloned());
        out
    }
}

/// Seeded, reversible byte mixing standing in for encryption.
pub fn encrypt(data: &[u8], seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let mut ks = vec![0u8; data.len()];
    rng.fill_bytes(&mut ks);
    data.iter()
        .zip(ks)
        .map(|(b, k)| (b ^ k).rotate_left(3))
        .collect()
}

fn victim_plaintext(len: u64, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = vec![0u8; len as usize];
    rng.fill_bytes(&mut v);
    v
}

struct Script {
    steps: Vec<(Step, StepOutcome)>,
    blocked: bool,
}

impl Script {
    fn new() -> Self {
        Script {
            steps: Vec::new(),
            blocked: false,
        }
    }

    /// Runs `f` unless an earlier step was blocked. `f` returns whether
    /// the step went through.
    fn step(&mut self, step: Step, f: impl FnOnce() -> bool) -> bool {
        if self.blocked {
            self.steps.push((step, StepOutcome::Skipped));
            return false;
        }
        let ok = f();
        if !ok {
            self.blocked = true;
        }
        let outcome = if ok {
            StepOutcome::Succeeded
        } else {
            StepOutcome::Blocked
        };
        self.steps.push((step, outcome));
        ok
    }

    fn blocked_at(&self) -> Option<Step> {
        self.steps
            .iter()
            .find(|(_, o)| *o == StepOutcome::Blocked)
            .map(|(s, _)| *s)
    }
}

const VICTIM: &str = "test.db";
const COPY: &str = "infected.db";

fn build(cfg: &ScenarioConfig) -> Result<HostStack, WorkloadError> {
    let mut ftl = FtlConfig::new(cfg.variant).with_geometry(cfg.geometry);
    ftl.lockout_threshold = cfg.lockout_threshold;
    let device = KeyFtl::new(ftl).map_err(|e| WorkloadError::Spec(e.to_string()))?;
    let host = HostStack::with_device(
        HostConfig {
            read_verify: cfg.read_verify,
            close_mode: CloseMode::Close,
            ..HostConfig::default()
        },
        device,
    )?;
    let key = if cfg.lock_victim {
        cfg.owner_key
    } else {
        AccessKey::NONE
    };
    host.create_at(VICTIM, cfg.victim_lba, cfg.victim_bytes)?;
    let f = host.open_key(VICTIM, key, false)?;
    host.file_write(f, 0, &victim_plaintext(cfg.victim_bytes, cfg.seed))?;
    if cfg.warm_cache {
        host.file_read(f, 0, cfg.victim_bytes)?;
    } else {
        host.drop_caches();
    }
    host.close_key(f)?;
    Ok(host)
}

fn owner_sees_original(host: &HostStack, cfg: &ScenarioConfig) -> bool {
    if !host.exists(VICTIM) {
        return false;
    }
    host.drop_caches();
    let key = if cfg.lock_victim {
        cfg.owner_key
    } else {
        AccessKey::NONE
    };
    let Ok(f) = host.open_key(VICTIM, key, false) else {
        return false;
    };
    let ok = host
        .file_read(f, 0, cfg.victim_bytes)
        .is_ok_and(|d| d == victim_plaintext(cfg.victim_bytes, cfg.seed));
    let _ = host.close_key(f);
    ok
}

fn device_lines(host: &HostStack) -> Vec<String> {
    host.log()
        .records()
        .into_iter()
        .filter(|r| {
            r.layer == LogLayer::Ftl && matches!(r.event, LogEvent::Deny | LogEvent::Lockout)
        })
        .map(|r| r.to_string())
        .collect()
}

/// Open, read, encrypt, write a copy, delete the original.
fn file_path_attack(host: &HostStack, cfg: &ScenarioConfig, script: &mut Script) -> bool {
    let plain = victim_plaintext(cfg.victim_bytes, cfg.seed);
    let mut handle = None;
    let mut stolen = Vec::new();
    let mut leaked = false;
    script.step(Step::Open, || {
        handle = host.open_key(VICTIM, cfg.attacker_key, false).ok();
        handle.is_some()
    });
    script.step(Step::Read, || {
        match host.file_read(handle.unwrap(), 0, cfg.victim_bytes) {
            Ok(d) => {
                leaked = d == plain;
                stolen = d;
                true
            }
            Err(_) => false,
        }
    });
    if let Some(h) = handle {
        let _ = host.close_key(h);
    }
    let mut cipher = Vec::new();
    script.step(Step::Encrypt, || {
        cipher = encrypt(&stolen, cfg.seed);
        true
    });
    script.step(Step::WriteCopy, || {
        host.open_key(COPY, cfg.attacker_key, true)
            .and_then(|h| {
                let r = host.file_write(h, 0, &cipher);
                host.close_key(h)?;
                r
            })
            .is_ok()
    });
    script.step(Step::Delete, || {
        host.file_delete(VICTIM, cfg.attacker_key).is_ok()
    });
    leaked
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioVerdict, WorkloadError> {
    let host = build(cfg)?;
    host.log().clear();
    let mut script = Script::new();
    let mut verdict = ScenarioVerdict {
        kind: cfg.kind,
        steps: Vec::new(),
        blocked_at: None,
        device_log: Vec::new(),
        denied_lbas: Vec::new(),
        leaked_plaintext: false,
        original_intact: false,
        attempts: 0,
        locked_out_at: None,
        refused_after_lockout: 0,
    };
    // Infection itself is outside the device's reach.
    script.step(Step::Infection, || true);
    match cfg.kind {
        AttackKind::NormalPathEncrypt | AttackKind::PageCacheExfiltrate => {
            verdict.leaked_plaintext = file_path_attack(&host, cfg, &mut script);
        }
        AttackKind::DirectIoOverwrite => {
            let spp = cfg.geometry.sectors_per_host_page();
            let sectors = cfg.overwrite_bytes / cfg.geometry.sector_bytes;
            let junk = encrypt(&vec![0; cfg.overwrite_bytes as usize], cfg.seed);
            let mut denied = Vec::new();
            script.step(Step::RawWrite, || {
                let done = if cfg.attacker_key.is_none() {
                    host.raw_io(cfg.victim_lba, sectors, RawOp::Write(junk))
                } else {
                    keyed_raw_write(&host, cfg.victim_lba, &junk, cfg.attacker_key, spp)
                };
                match done {
                    Ok(done) => {
                        denied = done
                            .iter()
                            .filter(|c| !c.is_success())
                            .map(|c| c.lba)
                            .collect();
                        denied.is_empty()
                    }
                    Err(_) => false,
                }
            });
            verdict.denied_lbas = denied;
        }
        AttackKind::BruteForce => {
            brute_force(&host, cfg, &mut script, &mut verdict);
        }
    }
    script.step(Step::Notice, || true);
    verdict.device_log = device_lines(&host);
    // The lockout would hide the owner's view; lift it for the check.
    host.transport().with_device(|d| d.admin_reset_lockout());
    verdict.original_intact = owner_sees_original(&host, cfg);
    verdict.blocked_at = script.blocked_at();
    verdict.steps = script.steps;
    Ok(verdict)
}

/// Raw writes that carry a key, for the compromised-owner control.
fn keyed_raw_write(
    host: &HostStack,
    lba: u64,
    data: &[u8],
    key: AccessKey,
    spp: u64,
) -> Result<Vec<crate::transport::Completion>, HostError> {
    let t = host.transport();
    let pb = t.geometry().host_page_bytes as usize;
    let ids = data
        .chunks(pb)
        .enumerate()
        .map(|(i, chunk)| {
            t.submit_command(
                Command::Write,
                lba + i as u64 * spp,
                spp as u32,
                key,
                Some(chunk.to_vec()),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(t.collect(&ids))
}

fn brute_force(
    host: &HostStack,
    cfg: &ScenarioConfig,
    script: &mut Script,
    verdict: &mut ScenarioVerdict,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xB2F7);
    let spp = cfg.geometry.sectors_per_host_page();
    let mut tried = HashSet::new();
    let mut found = None;
    script.step(Step::KeyGuess, || {
        for attempt in 1..=cfg.guesses {
            let guess = if cfg.plant_correct_at == Some(attempt) {
                cfg.owner_key
            } else {
                loop {
                    let k = AccessKey::new(rng.random());
                    if k != cfg.owner_key && k.is_some() && tried.insert(k) {
                        break k;
                    }
                }
            };
            verdict.attempts = attempt;
            let t = host.transport();
            let status = t
                .execute(Command::Read, cfg.victim_lba, spp as u32, guess, None)
                .map(|c| c.status)
                .unwrap_or(CompletionStatus::DeviceError);
            match status {
                CompletionStatus::Success => {
                    found = Some(guess);
                    return true;
                }
                CompletionStatus::DeviceLockedOut => verdict.refused_after_lockout += 1,
                _ => {
                    if verdict.locked_out_at.is_none()
                        && t.with_device(|d| d.lockout().is_locked_out())
                    {
                        verdict.locked_out_at = Some(attempt);
                    }
                }
            }
        }
        false
    });
    script.step(Step::Read, || {
        let Some(key) = found else { return false };
        let Ok(h) = host.open_key(VICTIM, key, false) else {
            return false;
        };
        let data = host.file_read(h, 0, cfg.victim_bytes);
        let _ = host.close_key(h);
        verdict.leaked_plaintext =
            data.is_ok_and(|d| d == victim_plaintext(cfg.victim_bytes, cfg.seed));
        verdict.leaked_plaintext
    });
}
