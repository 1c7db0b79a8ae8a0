use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use keyssd_core::flash::FlashDevice;
use keyssd_core::ftl::{FtlConfig, KeyFtl};
use keyssd_core::harness::verify::{codec_round_trip, crash_recovery, oracle_equivalence};
use keyssd_core::harness::{
    run_bench, ConfigError, ExperimentConfig, FaultHook, MetricsRow, SuiteKind, VerifyOptions,
};
use keyssd_core::host::HostStack;
use keyssd_core::key::AccessKey;
use keyssd_core::workload::{prefill, run_scenario, Target, WorkloadSpec};

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "keyssd", version, about = "Key-authenticated SSD simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the workload sweep and write one CSV row per point.
    Bench(ExpArgs),
    /// Run an attack scenario and print its verdict.
    Attack {
        /// normal-path-encrypt, direct-io-overwrite, page-cache-exfiltrate or brute-force.
        #[arg(long)]
        scenario: Option<String>,
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Run the built-in property suites.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Only run suites with these names (comma separated).
        #[arg(long, value_delimiter = ',')]
        suite: Vec<String>,
        #[arg(long)]
        oracle_ops: Option<u64>,
        #[arg(long)]
        sequences: Option<u64>,
        #[arg(long)]
        frames: Option<u64>,
        /// Flip the result of one case, as `<suite>@<case>`.
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Write or read a device image.
    #[command(subcommand)]
    Snapshot(SnapshotCmd),
}

#[derive(Subcommand)]
enum SnapshotCmd {
    /// Populate the configured raw region and save the flash image.
    Dump(ExpArgs),
    /// Mount an image and print what it holds.
    Load {
        /// Image file to mount.
        image: PathBuf,
        #[command(flatten)]
        exp: ExpArgs,
    },
}

#[derive(Args, Clone, Default)]
struct ExpArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// baseline, static or dynamic (comma separated for a sweep).
    #[arg(long)]
    ftl: Option<String>,
    /// af or sf (comma separated for a sweep).
    #[arg(long)]
    flush_mode: Option<String>,
    /// Queue depths, comma separated.
    #[arg(long)]
    queue_depth: Option<String>,
    /// Locked fractions in percent, comma separated.
    #[arg(long)]
    locked_fraction: Option<String>,
    #[arg(long)]
    read_verify: Option<bool>,
    /// close or noclose.
    #[arg(long)]
    close_mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (CSV for bench, verdict record for attack, image for dump).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` assignments applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn run_err(e: impl std::fmt::Display) -> Failure {
    Failure::Run(e.to_string())
}

impl ExpArgs {
    /// Builds the config: defaults, then the file, then `--set`, then flags.
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            cfg.apply(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Failure::Config(format!("--set {kv}: expected KEY=VALUE")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        let flags = [
            ("ftl", self.ftl.clone()),
            ("flush_mode", self.flush_mode.clone()),
            ("queue_depth", self.queue_depth.clone()),
            ("locked_fraction", self.locked_fraction.clone()),
            ("read_verify", self.read_verify.map(|b| b.to_string())),
            ("close_mode", self.close_mode.clone()),
            ("seed", self.seed.map(|s| s.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn read_verify_given(&self) -> bool {
        self.read_verify.is_some()
            || self
                .set
                .iter()
                .any(|kv| kv.trim_start().starts_with("read_verify"))
            || self
                .config
                .as_ref()
                .and_then(|p| fs::read_to_string(p).ok())
                .is_some_and(|t| {
                    t.lines().any(|l| {
                        l.split('#')
                            .next()
                            .unwrap()
                            .trim_start()
                            .starts_with("read_verify")
                    })
                })
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_bench(args: &ExpArgs) -> Result<u8, Failure> {
    let cfg = args.load()?;
    let rows = run_bench(&cfg).map_err(run_err)?;
    let mut out = open_out(args.out.as_deref())?;
    match MetricsRow::write_csv(&rows, &mut out).and_then(|()| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => return Err(run_err(e)),
        _ => {}
    }
    if args.out.is_some() {
        eprintln!("bench: {} rows", rows.len());
    }
    Ok(0)
}

fn cmd_attack(scenario: Option<&str>, args: &ExpArgs) -> Result<u8, Failure> {
    let mut cfg = args.load()?;
    if let Some(s) = scenario {
        cfg.set("scenario", s)?;
    }
    let kind = cfg.scenario.ok_or_else(|| {
        Failure::Config("`scenario`: no scenario given (--scenario or config)".into())
    })?;
    let verdict =
        run_scenario(&cfg.scenario_config(kind, args.read_verify_given())).map_err(run_err)?;
    let mut lines = verdict.report();
    lines.insert(1, format!("ftl={}", cfg.variants[0].name()));
    lines.push(format!(
        "verdict={}",
        if verdict.breached() {
            "breach"
        } else {
            "defended"
        }
    ));
    for l in &lines {
        println!("{l}");
    }
    if let Some(p) = &args.out {
        fs::write(p, lines.join("\n") + "\n").map_err(run_err)?;
    }
    Ok(if verdict.breached() { EXIT_FAIL } else { 0 })
}

fn parse_fault(s: &str) -> Result<FaultHook, Failure> {
    let (suite, at) = s
        .split_once('@')
        .ok_or_else(|| Failure::Config(format!("--inject-fault {s}: expected SUITE@CASE")))?;
    Ok(FaultHook {
        suite: SuiteKind::parse(suite)
            .ok_or_else(|| Failure::Config(format!("unknown suite `{suite}`")))?,
        at: at
            .parse()
            .map_err(|_| Failure::Config(format!("bad case index `{at}`")))?,
    })
}

fn cmd_verify(
    seed: u64,
    suites: &[String],
    sizes: [Option<u64>; 3],
    fault: Option<&str>,
) -> Result<u8, Failure> {
    let mut opts = VerifyOptions {
        seed,
        ..VerifyOptions::default()
    };
    if let Some(n) = sizes[0] {
        opts.oracle_ops = n;
    }
    if let Some(n) = sizes[1] {
        opts.crash_sequences = n;
    }
    if let Some(n) = sizes[2] {
        opts.codec_frames = n;
    }
    opts.fault = fault.map(parse_fault).transpose()?;
    let wanted: Vec<SuiteKind> = suites
        .iter()
        .map(|s| SuiteKind::parse(s).ok_or_else(|| Failure::Config(format!("unknown suite `{s}`"))))
        .collect::<Result<_, _>>()?;
    println!("verify seed={seed}");
    let mut failed = 0;
    for suite in SuiteKind::ALL {
        if !wanted.is_empty() && !wanted.contains(&suite) {
            continue;
        }
        let r = match suite {
            SuiteKind::OracleEquivalence => {
                oracle_equivalence(seed, opts.oracle_ops, opts.lpn_space, opts.fault)
            }
            SuiteKind::CrashRecovery => crash_recovery(seed, opts.crash_sequences, opts.fault),
            SuiteKind::Codec => codec_round_trip(seed, opts.codec_frames, opts.fault),
        };
        println!("{r}");
        failed += usize::from(!r.passed());
    }
    println!("summary={}", if failed == 0 { "pass" } else { "fail" });
    Ok(if failed == 0 { 0 } else { EXIT_FAIL })
}

fn ftl_config(cfg: &ExperimentConfig) -> FtlConfig {
    let mut f = FtlConfig::new(cfg.variants[0]).with_geometry(cfg.geometry);
    f.flush_mode = cfg.flush_modes[0];
    f.lockout_threshold = cfg.lockout_threshold;
    f
}

fn cmd_dump(args: &ExpArgs) -> Result<u8, Failure> {
    let mut cfg = args.load()?;
    cfg.set("profile", "raw")?;
    let out = args
        .out
        .as_ref()
        .ok_or_else(|| Failure::Config("`out`: snapshot dump needs --out".into()))?;
    let host = HostStack::with_device(
        cfg.host_config(cfg.queue_depths[0]),
        KeyFtl::new(ftl_config(&cfg)).map_err(run_err)?,
    )
    .map_err(run_err)?;
    let spec = WorkloadSpec {
        pattern: cfg.pattern,
        queue_depth: cfg.queue_depths[0],
        profile: cfg.file_profile(),
        client_count: 1,
        seed: cfg.seed,
        random_ops: None,
    };
    let fraction = u64::from(cfg.locked_fractions[0]);
    let cut = cfg.region_lpn + cfg.region_pages * fraction / 100;
    let owner = cfg.owner_key;
    prefill(&host, &spec, cfg.seed, |_: Target, lpn| {
        if lpn < cut {
            owner
        } else {
            AccessKey::NONE
        }
    })
    .map_err(run_err)?;
    host.sync().map_err(run_err)?;
    let file = BufWriter::new(File::create(out).map_err(run_err)?);
    host.transport()
        .with_device(|d| d.flash().write_snapshot(file))
        .map_err(run_err)?;
    println!(
        "snapshot={} ftl={} region_lpn={} pages={} locked={}",
        out.display(),
        cfg.variants[0].name(),
        cfg.region_lpn,
        cfg.region_pages,
        cut - cfg.region_lpn
    );
    Ok(0)
}

fn cmd_load(image: &Path, args: &ExpArgs) -> Result<u8, Failure> {
    let cfg = args.load()?;
    let file = File::open(image).map_err(|e| Failure::Run(format!("{}: {e}", image.display())))?;
    let flash = FlashDevice::read_snapshot(BufReader::new(file), cfg.geometry.sector_bytes)
        .map_err(run_err)?;
    let mut fcfg = ftl_config(&cfg);
    fcfg.geometry = *flash.geometry();
    let ftl = KeyFtl::open(fcfg, flash).map_err(run_err)?;
    let locked = (0..ftl.host_lpns())
        .filter(|&l| ftl.stored_key(l).is_some_and(|k| !k.is_none()))
        .count();
    let g = ftl.geometry();
    println!(
        "snapshot={} blocks={} pages_per_block={} device_page_bytes={} host_page_bytes={}",
        image.display(),
        g.blocks_per_device,
        g.pages_per_block,
        g.device_page_bytes,
        g.host_page_bytes
    );
    println!(
        "ftl={} mapped_device_pages={} locked_host_pages={} free_blocks={} key_digest={:#010x}",
        ftl.variant().name(),
        ftl.mapped_pages().len(),
        locked,
        ftl.free_blocks(),
        ftl.key_state_digest()
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Attack { scenario, exp } => cmd_attack(scenario.as_deref(), exp),
        Cmd::Verify {
            seed,
            suite,
            oracle_ops,
            sequences,
            frames,
            inject_fault,
        } => cmd_verify(
            *seed,
            suite,
            [*oracle_ops, *sequences, *frames],
            inject_fault.as_deref(),
        ),
        Cmd::Snapshot(SnapshotCmd::Dump(a)) => cmd_dump(a),
        Cmd::Snapshot(SnapshotCmd::Load { image, exp }) => cmd_load(image, exp),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAIL)
        }
    }
}
