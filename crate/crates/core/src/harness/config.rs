//! `key = value` experiment configuration.

use std::fmt;

use thiserror::Error;

use crate::flash::FlashGeometry;
use crate::ftl::{FlushMode, FtlVariant};
use crate::host::{CloseMode, HostConfig};
use crate::key::AccessKey;
use crate::transport::QUEUE_CAPACITY;
use crate::workload::{AttackKind, FileProfile, Pattern, ScenarioConfig};

/// Fractions allowed by the locked-fraction sweep preset.
pub const SWEEP_FRACTIONS: [u8; 5] = [0, 25, 50, 75, 100];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line in the config file, if the value came from one.
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.field, self.message),
            None => write!(f, "`{}`: {}", self.field, self.message),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileKind {
    Raw,
    Small,
    Big,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExperimentConfig {
    pub geometry: FlashGeometry,
    pub variants: Vec<FtlVariant>,
    pub flush_modes: Vec<FlushMode>,
    /// Written pages between FLUSH commands; 0 never flushes.
    pub flush_interval: u64,
    pub read_verify: bool,
    pub close_mode: CloseMode,
    pub lockout_threshold: u64,
    pub locked_fractions: Vec<u8>,
    /// Restricts locked fractions to [`SWEEP_FRACTIONS`].
    pub sweep_preset: bool,
    pub pattern: Pattern,
    pub profile: ProfileKind,
    pub files: u64,
    pub file_bytes: u64,
    pub region_lpn: u64,
    pub region_pages: u64,
    pub queue_depths: Vec<usize>,
    pub clients: usize,
    pub random_ops: Option<u64>,
    pub cache_pages: usize,
    pub owner_key: AccessKey,
    pub scenario: Option<AttackKind>,
    pub attacker_key: AccessKey,
    pub guesses: u64,
    pub plant_correct_at: Option<u64>,
    pub warm_cache: Option<bool>,
    pub lock_victim: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            geometry: FlashGeometry::default(),
            variants: vec![FtlVariant::KeyStatic],
            flush_modes: vec![FlushMode::AllFlush, FlushMode::SelectiveFlush],
            flush_interval: 256,
            read_verify: true,
            close_mode: CloseMode::Close,
            lockout_threshold: 64,
            locked_fractions: vec![0],
            sweep_preset: false,
            pattern: Pattern::SeqWrite,
            profile: ProfileKind::Raw,
            files: 64,
            file_bytes: FileProfile::BIG_FILE_BYTES,
            region_lpn: 0,
            region_pages: 4096,
            queue_depths: vec![1, 2, 4, 8, 16, 32],
            clients: 1,
            random_ops: None,
            cache_pages: HostConfig::default().cache_pages,
            owner_key: AccessKey::new(0x000033),
            scenario: None,
            attacker_key: AccessKey::NONE,
            guesses: 100,
            plant_correct_at: None,
            warm_cache: None,
            lock_victim: true,
            seed: 0,
        }
    }
}

pub fn parse_variant(s: &str) -> Option<FtlVariant> {
    match s {
        "baseline" | "b" => Some(FtlVariant::Baseline),
        "static" | "s" | "key-static" => Some(FtlVariant::KeyStatic),
        "dynamic" | "d" | "key-dynamic" => Some(FtlVariant::KeyDynamic),
        _ => None,
    }
}

pub fn parse_flush_mode(s: &str) -> Option<FlushMode> {
    match s {
        "af" | "all" | "all-flush" => Some(FlushMode::AllFlush),
        "sf" | "selective" | "selective-flush" => Some(FlushMode::SelectiveFlush),
        _ => None,
    }
}

fn parse_u64(s: &str) -> Result<u64, String> {
    let s = s.replace('_', "");
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    r.map_err(|_| format!("`{s}` is not an unsigned integer"))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("`{s}` is not on/off")),
    }
}

fn parse_key(s: &str) -> Result<AccessKey, String> {
    if s == "none" {
        return Ok(AccessKey::NONE);
    }
    let v = parse_u64(s)?;
    u32::try_from(v)
        .map(AccessKey::new)
        .map_err(|_| format!("key {s} does not fit 32 bits"))
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let items: Vec<T> = s
        .split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(f)
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

impl ExperimentConfig {
    /// Parses a config file body. Unknown keys and bad values are errors
    /// that name the line and the field.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Applies the assignments in `text` on top of `self`.
    pub fn apply(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError {
                    line: Some(i + 1),
                    field: line.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            self.set(k.trim(), v.trim()).map_err(|mut e| {
                e.line = Some(i + 1);
                e
            })?;
        }
        self.validate()
    }

    /// Sets one field by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let err = |message: String| ConfigError {
            line: None,
            field: key.to_string(),
            message,
        };
        let v = value;
        let r: Result<(), String> = (|| {
            match key {
                "ftl" => {
                    self.variants = parse_list(v, |s| {
                        parse_variant(s).ok_or_else(|| format!("unknown FTL `{s}`"))
                    })?
                }
                "flush_mode" => {
                    self.flush_modes = parse_list(v, |s| {
                        parse_flush_mode(s).ok_or_else(|| format!("unknown flush mode `{s}`"))
                    })?
                }
                "flush_interval" => self.flush_interval = parse_u64(v)?,
                "read_verify" => self.read_verify = parse_bool(v)?,
                "close_mode" => {
                    self.close_mode = match v {
                        "close" => CloseMode::Close,
                        "noclose" | "no-close" => CloseMode::NoClose,
                        _ => return Err(format!("unknown close mode `{v}`")),
                    }
                }
                "lockout_threshold" => self.lockout_threshold = parse_u64(v)?,
                "locked_fraction" => {
                    self.locked_fractions = parse_list(v, |s| {
                        let n = parse_u64(s)?;
                        u8::try_from(n)
                            .ok()
                            .filter(|&n| n <= 100)
                            .ok_or_else(|| format!("{s} is not a percentage"))
                    })?
                }
                "preset" => match v {
                    "locked-fraction-sweep" => {
                        self.sweep_preset = true;
                        self.locked_fractions = SWEEP_FRACTIONS.to_vec();
                        self.pattern = Pattern::RandRead;
                    }
                    "none" => self.sweep_preset = false,
                    _ => return Err(format!("unknown preset `{v}`")),
                },
                "workload" => {
                    self.pattern =
                        Pattern::parse(v).ok_or_else(|| format!("unknown workload `{v}`"))?
                }
                "profile" => {
                    self.profile = match v {
                        "raw" => ProfileKind::Raw,
                        "small" => ProfileKind::Small,
                        "big" => ProfileKind::Big,
                        _ => return Err(format!("unknown profile `{v}`")),
                    }
                }
                "files" => self.files = parse_u64(v)?,
                "file_bytes" => self.file_bytes = parse_u64(v)?,
                "region_lpn" => self.region_lpn = parse_u64(v)?,
                "region_pages" => self.region_pages = parse_u64(v)?,
                "queue_depth" => {
                    self.queue_depths = parse_list(v, |s| parse_u64(s).map(|n| n as usize))?
                }
                "clients" => self.clients = parse_u64(v)? as usize,
                "random_ops" => self.random_ops = Some(parse_u64(v)?),
                "cache_pages" => self.cache_pages = parse_u64(v)? as usize,
                "owner_key" => self.owner_key = parse_key(v)?,
                "scenario" => {
                    self.scenario = Some(
                        AttackKind::parse(v).ok_or_else(|| format!("unknown scenario `{v}`"))?,
                    )
                }
                "attacker_key" => self.attacker_key = parse_key(v)?,
                "guesses" => self.guesses = parse_u64(v)?,
                "plant_correct_at" => self.plant_correct_at = Some(parse_u64(v)?),
                "warm_cache" => self.warm_cache = Some(parse_bool(v)?),
                "lock_victim" => self.lock_victim = parse_bool(v)?,
                "seed" => self.seed = parse_u64(v)?,
                "blocks" => self.geometry.blocks_per_device = parse_u64(v)?,
                "pages_per_block" => self.geometry.pages_per_block = parse_u64(v)?,
                "device_page_bytes" => self.geometry.device_page_bytes = parse_u64(v)?,
                "host_page_bytes" => self.geometry.host_page_bytes = parse_u64(v)?,
                "sector_bytes" => self.geometry.sector_bytes = parse_u64(v)?,
                _ => return Err("unknown key".into()),
            }
            Ok(())
        })();
        r.map_err(err)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, message: String| {
            Err(ConfigError {
                line: None,
                field: field.to_string(),
                message,
            })
        };
        if let Err(e) = self.geometry.validate() {
            return bad("geometry", e.to_string());
        }
        if self.lockout_threshold == 0 {
            return bad("lockout_threshold", "must be at least 1".into());
        }
        if let Some(&q) = self
            .queue_depths
            .iter()
            .find(|&&q| q == 0 || q > QUEUE_CAPACITY)
        {
            return bad("queue_depth", format!("{q} outside 1..={QUEUE_CAPACITY}"));
        }
        if self.sweep_preset {
            if let Some(f) = self
                .locked_fractions
                .iter()
                .find(|f| !SWEEP_FRACTIONS.contains(f))
            {
                return bad(
                    "locked_fraction",
                    format!("{f} is not one of 0,25,50,75,100 under the sweep preset"),
                );
            }
        }
        if self.clients == 0 {
            return bad("clients", "must be at least 1".into());
        }
        if self.variants.is_empty() || self.flush_modes.is_empty() {
            return bad("ftl", "nothing to run".into());
        }
        Ok(())
    }

    pub fn file_profile(&self) -> FileProfile {
        match self.profile {
            ProfileKind::Raw => FileProfile::RawDevice {
                first_lpn: self.region_lpn,
                pages: self.region_pages,
            },
            ProfileKind::Small => FileProfile::SmallFiles { count: self.files },
            ProfileKind::Big => FileProfile::BigFiles {
                count: self.files,
                bytes: self.file_bytes,
            },
        }
    }

    pub fn host_config(&self, queue_depth: usize) -> HostConfig {
        HostConfig {
            read_verify: self.read_verify,
            close_mode: self.close_mode,
            cache_pages: self.cache_pages,
            queue_depth,
        }
    }

    /// Scenario settings; only fields set explicitly override the
    /// scenario's own defaults for read-verify and cache warmth.
    pub fn scenario_config(&self, kind: AttackKind, read_verify_set: bool) -> ScenarioConfig {
        let mut s = ScenarioConfig::new(kind);
        s.geometry = self.geometry;
        s.variant = self.variants[0];
        if read_verify_set {
            s.read_verify = self.read_verify;
        }
        if let Some(w) = self.warm_cache {
            s.warm_cache = w;
        }
        s.owner_key = self.owner_key;
        s.attacker_key = self.attacker_key;
        s.lock_victim = self.lock_victim;
        s.lockout_threshold = self.lockout_threshold;
        s.guesses = self.guesses;
        s.plant_correct_at = self.plant_correct_at;
        s.seed = self.seed;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_file() {
        let cfg = ExperimentConfig::parse(
            "# sweep\nftl = s, d\nflush_mode = af,sf\nqueue_depth = 1,32\n\
             workload = randread   # trailing comment\nread_verify = off\n\
             close_mode = noclose\nseed = 0x10\nlocked_fraction = 0,50\n",
        )
        .unwrap();
        assert_eq!(
            cfg.variants,
            vec![FtlVariant::KeyStatic, FtlVariant::KeyDynamic]
        );
        assert_eq!(cfg.queue_depths, vec![1, 32]);
        assert_eq!(cfg.pattern, Pattern::RandRead);
        assert!(!cfg.read_verify);
        assert_eq!(cfg.close_mode, CloseMode::NoClose);
        assert_eq!(cfg.seed, 16);
        assert_eq!(cfg.locked_fractions, vec![0, 50]);
    }

    #[test]
    fn errors_name_line_and_field() {
        let e = ExperimentConfig::parse("seed = 1\n\nftl = ssd\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert_eq!(e.field, "ftl");
        let e = ExperimentConfig::parse("bogus = 1").unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (Some(1), "bogus"));
        let e = ExperimentConfig::parse("just words").unwrap_err();
        assert_eq!(e.line, Some(1));
        assert!(e.to_string().starts_with("line 1:"));
    }

    #[test]
    fn sweep_preset_restricts_fractions() {
        let cfg = ExperimentConfig::parse("preset = locked-fraction-sweep").unwrap();
        assert_eq!(cfg.locked_fractions, SWEEP_FRACTIONS.to_vec());
        let e = ExperimentConfig::parse("preset = locked-fraction-sweep\nlocked_fraction = 30")
            .unwrap_err();
        assert_eq!(e.field, "locked_fraction");
        assert!(ExperimentConfig::parse("locked_fraction = 30").is_ok());
        assert!(ExperimentConfig::parse("locked_fraction = 130").is_err());
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::parse("queue_depth = 0").is_err());
        assert!(ExperimentConfig::parse("queue_depth = 129").is_err());
        assert!(ExperimentConfig::parse("lockout_threshold = 0").is_err());
        assert!(ExperimentConfig::parse("host_page_bytes = 1000").is_err());
        assert_eq!(
            ExperimentConfig::parse("attacker_key = 0x1ffffffff")
                .unwrap_err()
                .field,
            "attacker_key"
        );
    }
}
