use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swapsim::config::{ExperimentConfig, Mode};
use swapsim::pipeline::analyze;
use swapsim::report::ResultsReport;
use swapsim::sweep::{calibrate_v0, sweep, to_text, SweepGrid};
use swapsim::tagfile::{export_tags, import_tags};
use swapsim::{selftest, Error};

const EXIT_RUNTIME: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "swapsim", version, about = "Entanglement-swapping simulator and tag-stream analyzer")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// local or remote
    #[arg(long)]
    mode: Option<Mode>,
    /// Output file (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra key=value overrides, applied after the file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate and analyze one scenario
    Run {
        #[command(flatten)]
        common: Common,
        /// Directory receiving the recorded tag files
        #[arg(long)]
        tags: Option<PathBuf>,
        /// Store photon truth in the tag files
        #[arg(long)]
        truth: bool,
    },
    /// Visibility grid over path-length difference and 2-fold rate
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.2,0.4")]
        delta_l_mm: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "15000,50000,130000,240000")]
        rates: Vec<f64>,
        /// Expected 4-folds per grid point
        #[arg(long, default_value_t = 2000.0)]
        events: f64,
        /// Calibrate the intrinsic visibility so the lowest rate at zero delay gives this V
        #[arg(long)]
        anchor: Option<f64>,
    },
    /// Analyze recorded tag files
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        local: PathBuf,
        #[arg(long)]
        remote: Option<PathBuf>,
    },
    /// Run the invariant suite
    Selftest,
}

enum Failure {
    Validation(String),
    Runtime(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation(_) | Error::Config { .. } | Error::OutOfRange { .. } => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn load(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    for kv in &c.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Failure::Validation(format!("`{kv}` is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(m) = c.mode {
        cfg.mode = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::Runtime(e.to_string())),
    }
}

fn execute(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Run { common, tags, truth } => {
            let cfg = load(&common)?;
            let (report, sim, _) = swapsim::pipeline::run(&cfg)?;
            if let Some(dir) = tags {
                std::fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(e.to_string()))?;
                export_tags(&sim.local, &dir.join("local.swtg"), truth)?;
                if let Some(r) = &sim.remote {
                    export_tags(r, &dir.join("remote.swtg"), truth)?;
                }
            }
            emit(common.out.as_deref(), &report.to_text())
        }
        Cmd::Sweep { common, delta_l_mm, rates, events, anchor } => {
            let mut cfg = load(&common)?;
            if let Some(v) = anchor {
                let lowest = rates.iter().copied().fold(f64::INFINITY, f64::min);
                let m = calibrate_v0(&cfg, lowest, v, events)?;
                eprintln!("intrinsic visibility calibrated to {m:.6}");
                cfg.sources[0].intrinsic_visibility = m;
                cfg.sources[1].intrinsic_visibility = m;
            }
            let pts = sweep(&cfg, &SweepGrid { delta_l_mm, two_fold_hz: rates }, events)?;
            emit(common.out.as_deref(), &to_text(&pts))
        }
        Cmd::Analyze { common, local, remote } => {
            let cfg = load(&common)?;
            let block = cfg.channel.block_seconds;
            let l = import_tags(&local, block)?;
            let r = remote.map(|p| import_tags(&p, block)).transpose()?;
            if cfg.mode == Mode::Remote && r.is_none() {
                return Err(Failure::Validation("remote mode needs --remote".into()));
            }
            let a = analyze(&l, r.as_ref(), &cfg)?;
            emit(common.out.as_deref(), &ResultsReport::build(&cfg, &a)?.to_text())
        }
        Cmd::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                println!("{}\t{}\t{}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(Failure::Check(format!("{failed} check(s) failed")));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Validation(m) => (EXIT_VALIDATION, m),
                Failure::Runtime(m) => (EXIT_RUNTIME, m),
                Failure::Check(m) => (EXIT_CHECK, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
