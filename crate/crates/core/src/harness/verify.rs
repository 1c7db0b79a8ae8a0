//! Built-in property batteries: FTL variants against the flat-map oracle,
//! crash recovery of flushed state, and the FIS codec.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::flash::FlashGeometry;
use crate::ftl::{FtlConfig, FtlVariant, KeyFtl, MultiMode, ReadOutcome, Verdict};
use crate::key::AccessKey;
use crate::oracle::OracleModel;
use crate::transport::{decode_register_fis, Command, RegisterFis, MAX_LBA};

const GOLDEN: &str = include_str!("../../tests/data/golden_fis.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SuiteKind {
    OracleEquivalence,
    CrashRecovery,
    Codec,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 3] = [
        SuiteKind::OracleEquivalence,
        SuiteKind::CrashRecovery,
        SuiteKind::Codec,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SuiteKind::OracleEquivalence => "oracle-equivalence",
            SuiteKind::CrashRecovery => "crash-recovery",
            SuiteKind::Codec => "codec",
        }
    }

    pub fn parse(s: &str) -> Option<SuiteKind> {
        SuiteKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Test hook: inverts the observed result of case `at` in `suite`, so
/// the harness can be shown to catch a wrong answer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FaultHook {
    pub suite: SuiteKind,
    pub at: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub oracle_ops: u64,
    pub lpn_space: u64,
    pub crash_sequences: u64,
    pub codec_frames: u64,
    pub fault: Option<FaultHook>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            oracle_ops: 100_000,
            lpn_space: 256,
            crash_sequences: 1_000,
            codec_frames: 10_000,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuiteResult {
    pub suite: SuiteKind,
    pub seed: u64,
    pub cases: u64,
    pub mismatches: u64,
    pub first_failure: Option<String>,
}

impl SuiteResult {
    fn new(suite: SuiteKind, seed: u64) -> Self {
        SuiteResult {
            suite,
            seed,
            cases: 0,
            mismatches: 0,
            first_failure: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.mismatches == 0
    }

    fn fail(&mut self, detail: impl FnOnce() -> String) {
        self.mismatches += 1;
        if self.first_failure.is_none() {
            self.first_failure = Some(detail());
        }
    }
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "suite={} result={} seed={} cases={} mismatches={}",
            self.suite.name(),
            if self.passed() { "pass" } else { "fail" },
            self.seed,
            self.cases,
            self.mismatches
        )?;
        if let Some(d) = &self.first_failure {
            write!(f, " first_failure=\"{d}\"")?;
        }
        Ok(())
    }
}

fn flips(fault: Option<FaultHook>, suite: SuiteKind, case: u64) -> bool {
    fault.is_some_and(|h| h.suite == suite && h.at == case)
}

/// Config used by the batteries: small flash, lockout out of the way so
/// the oracle (which has none) stays comparable.
fn battery_ftl(variant: FtlVariant) -> KeyFtl {
    let mut cfg = FtlConfig::new(variant).with_geometry(FlashGeometry::small());
    cfg.lockout_threshold = u64::MAX;
    KeyFtl::new(cfg).expect("battery geometry is valid")
}

fn key_pool(n: u32) -> Vec<AccessKey> {
    let mut keys: Vec<AccessKey> = (1..=n).map(|i| AccessKey::new(i * 0x1111)).collect();
    keys.push(AccessKey::NONE);
    keys
}

fn page_of(byte: u8) -> Vec<u8> {
    vec![byte; 4096]
}

/// Random single-page reads and writes against Key-FTL(S), Key-FTL(D) and
/// the oracle; every verdict and every granted read must agree.
pub fn oracle_equivalence(seed: u64, ops: u64, lpns: u64, fault: Option<FaultHook>) -> SuiteResult {
    let mut res = SuiteResult::new(SuiteKind::OracleEquivalence, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = battery_ftl(FtlVariant::KeyStatic);
    let mut d = battery_ftl(FtlVariant::KeyDynamic);
    let mut oracle = OracleModel::new();
    let keys = key_pool(8);
    let lpns = lpns.min(s.host_lpns());
    for i in 0..ops {
        res.cases += 1;
        let lpn = rng.random_range(0..lpns);
        let key = keys[rng.random_range(0..keys.len())];
        if rng.random_bool(0.5) {
            let data = page_of(rng.random());
            let want = if oracle.write(lpn, key, &data) {
                Verdict::Granted
            } else {
                Verdict::Denied
            };
            let mut vs = s.handle_write(lpn, key, &data).unwrap_or(Verdict::Denied);
            let vd = d.handle_write(lpn, key, &data).unwrap_or(Verdict::Denied);
            if flips(fault, SuiteKind::OracleEquivalence, i) {
                vs = if vs == Verdict::Granted {
                    Verdict::Denied
                } else {
                    Verdict::Granted
                };
            }
            if vs != want || vd != want {
                res.fail(|| {
                    format!("op {i}: write lpn={lpn} key={key}: s={vs:?} d={vd:?} oracle={want:?}")
                });
            }
        } else {
            let want = oracle
                .read(lpn, key)
                .map(|o| o.map_or_else(|| vec![0xFF; 4096], <[u8]>::to_vec));
            let get = |o: Result<ReadOutcome, _>| match o {
                Ok(ReadOutcome::Granted(v)) => Some(v),
                _ => None,
            };
            let mut rs = get(s.handle_read(lpn, key));
            let rd = get(d.handle_read(lpn, key));
            if flips(fault, SuiteKind::OracleEquivalence, i) {
                rs = if rs.is_some() { None } else { Some(Vec::new()) };
            }
            if rs != want || rd != want {
                res.fail(|| {
                    format!(
                        "op {i}: read lpn={lpn} key={key}: s={} d={} oracle={}",
                        rs.is_some(),
                        rd.is_some(),
                        want.is_some()
                    )
                });
            }
        }
        if i % 4096 == 4095 {
            let _ = s.flush();
            let _ = d.flush();
        }
    }
    res
}

/// What a probe of every (page, key) pair observes: the verdict, and the
/// data for granted reads.
fn observe(ftl: &mut KeyFtl, lpns: u64, keys: &[AccessKey]) -> Vec<Option<Vec<u8>>> {
    let mut out = Vec::with_capacity((lpns as usize) * keys.len());
    for lpn in 0..lpns {
        for &key in keys {
            let v = ftl
                .authorize_multi(lpn, 1, key, MultiMode::AllLpns)
                .unwrap_or(Verdict::Denied);
            out.push(match v {
                Verdict::Granted => match ftl.handle_read(lpn, key) {
                    Ok(ReadOutcome::Granted(d)) => Some(d),
                    _ => None,
                },
                Verdict::Denied => None,
            });
        }
    }
    out
}

/// Random op sequences cut by power loss right after a FLUSH at a random
/// point; the recovered device must answer every probe as before the cut.
pub fn crash_recovery(seed: u64, sequences: u64, fault: Option<FaultHook>) -> SuiteResult {
    const LPNS: u64 = 48;
    let mut res = SuiteResult::new(SuiteKind::CrashRecovery, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC4A5);
    let keys = key_pool(4);
    for case in 0..sequences {
        res.cases += 1;
        let variant = FtlVariant::ALL[(case % 3) as usize];
        let mut ftl = battery_ftl(variant);
        let len = rng.random_range(1..64);
        let cut = rng.random_range(0..=len);
        for _ in 0..cut {
            let lpn = rng.random_range(0..LPNS);
            let key = keys[rng.random_range(0..keys.len())];
            match rng.random_range(0..8) {
                0..=4 => {
                    let _ = ftl.handle_write(lpn, key, &page_of(rng.random()));
                }
                5 | 6 => {
                    let _ = ftl.handle_read(lpn, key);
                }
                _ => {
                    let n = rng.random_range(1..4).min(LPNS - lpn);
                    let _ = ftl.trim(lpn, n, key);
                }
            }
        }
        if let Err(e) = ftl.flush() {
            res.fail(|| format!("case {case}: flush failed: {e}"));
            continue;
        }
        let before = observe(&mut ftl, LPNS, &keys);
        ftl.power_cycle();
        if let Err(e) = ftl.recover() {
            res.fail(|| format!("case {case} ({}): recovery failed: {e}", variant.name()));
            continue;
        }
        let mut after = observe(&mut ftl, LPNS, &keys);
        if flips(fault, SuiteKind::CrashRecovery, case) {
            after[0] = if after[0].is_some() {
                None
            } else {
                Some(Vec::new())
            };
        }
        if let Some(i) = (0..before.len()).find(|&i| before[i] != after[i]) {
            let lpn = i / keys.len();
            let key = keys[i % keys.len()];
            res.fail(|| {
                format!(
                    "case {case} ({}): lpn={lpn} key={key} granted before={} after={}",
                    variant.name(),
                    before[i].is_some(),
                    after[i].is_some()
                )
            });
        }
    }
    res
}

/// A stored golden frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldenFrame {
    pub command: Command,
    pub lba: u64,
    pub sectors: u32,
    pub key: AccessKey,
    pub frame: Vec<u8>,
}

/// The golden vectors shipped in `tests/data/golden_fis.txt`.
pub fn golden_frames() -> Vec<GoldenFrame> {
    GOLDEN
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            let num = |s: &str| u64::from_str_radix(s.trim_start_matches("0x"), 16).unwrap();
            let command = match f[0] {
                "read" => Command::Read,
                "write" => Command::Write,
                "flush" => Command::Flush,
                "trim" => Command::Trim,
                other => panic!("bad golden command {other}"),
            };
            GoldenFrame {
                command,
                lba: num(f[1]),
                sectors: f[2].parse().unwrap(),
                key: if f[3] == "none" {
                    AccessKey::NONE
                } else {
                    AccessKey::new(num(f[3]) as u32)
                },
                frame: hex::decode(f[4]).unwrap(),
            }
        })
        .collect()
}

/// Random frames round-trip bit-exactly, and the golden vectors encode
/// and decode to their stored bytes.
pub fn codec_round_trip(seed: u64, frames: u64, fault: Option<FaultHook>) -> SuiteResult {
    let mut res = SuiteResult::new(SuiteKind::Codec, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF15);
    let commands = [Command::Read, Command::Write, Command::Flush, Command::Trim];
    for i in 0..frames {
        res.cases += 1;
        let fis = RegisterFis {
            flags: rng.random(),
            command: commands[rng.random_range(0..4)].opcode(),
            features: rng.random(),
            lba: rng.random_range(0..=MAX_LBA),
            device: rng.random(),
            count: rng.random(),
            icc: rng.random(),
            control: rng.random(),
            key: AccessKey::new(rng.random()),
        };
        let mut bytes = fis.encode();
        if flips(fault, SuiteKind::Codec, i) {
            bytes[19] ^= 1;
        }
        match RegisterFis::decode(&bytes) {
            Ok(back) if back == fis && back.encode() == bytes => {}
            other => res.fail(|| format!("frame {i}: {fis:?} decoded as {other:?}")),
        }
    }
    for g in golden_frames() {
        res.cases += 1;
        let enc = RegisterFis::new(g.command, g.lba, g.sectors, g.key).map(|f| f.encode().to_vec());
        let dec = decode_register_fis(&g.frame);
        let dec_ok = dec.is_ok_and(|(cmd, lba, count, key)| {
            cmd == g.command && lba == g.lba && u32::from(count) == g.sectors && key == g.key
        });
        if enc.as_ref() != Ok(&g.frame) || !dec_ok {
            res.fail(|| {
                format!(
                    "golden {} {:#x}: encoded {:?}",
                    g.command.name(),
                    g.lba,
                    enc.map(hex::encode)
                )
            });
        }
    }
    res
}

pub fn run_verify(opts: &VerifyOptions) -> Vec<SuiteResult> {
    vec![
        oracle_equivalence(opts.seed, opts.oracle_ops, opts.lpn_space, opts.fault),
        crash_recovery(opts.seed, opts.crash_sequences, opts.fault),
        codec_round_trip(opts.seed, opts.codec_frames, opts.fault),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_runs_pass() {
        assert!(oracle_equivalence(1, 3_000, 256, None).passed());
        assert!(crash_recovery(1, 60, None).passed());
        assert!(codec_round_trip(1, 2_000, None).passed());
    }

    #[test]
    fn faults_are_caught() {
        for suite in SuiteKind::ALL {
            let fault = Some(FaultHook { suite, at: 3 });
            let r = match suite {
                SuiteKind::OracleEquivalence => oracle_equivalence(2, 50, 256, fault),
                SuiteKind::CrashRecovery => crash_recovery(2, 10, fault),
                SuiteKind::Codec => codec_round_trip(2, 50, fault),
            };
            assert_eq!(r.mismatches, 1, "{r}");
            assert!(r.to_string().contains("result=fail"));
        }
    }

    #[test]
    fn same_seed_same_detail() {
        let a = crash_recovery(
            7,
            20,
            Some(FaultHook {
                suite: SuiteKind::CrashRecovery,
                at: 5,
            }),
        );
        let b = crash_recovery(
            7,
            20,
            Some(FaultHook {
                suite: SuiteKind::CrashRecovery,
                at: 5,
            }),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn golden_file_parses() {
        let g = golden_frames();
        assert!(g.len() >= 5);
        assert_eq!(g[0].lba, 0x43000);
        assert!(g[0].key.is_none());
    }
}
