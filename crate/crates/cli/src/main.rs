use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ptcollab::config::ScenarioConfig;
use ptcollab::error::{ConfigError, PipelineError};
use ptcollab::evaluation::METRIC_HEADER;
use ptcollab::pipeline::{
    perceive, run, scene_at, sweep, write_run_outputs, write_sweep_outputs, SweepSpec, SWEEP_HEADER,
};
use ptcollab::sir::SirWeights;
use ptcollab::Scene;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_STRICT: u8 = 3;

#[derive(Parser)]
#[command(name = "ptcollab", version, about = "Point-cluster collaborative perception simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario TOML; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics.csv, detections.csv, manifest.txt.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
        /// Exit with code 3 when the run reported degeneracy warnings.
        #[arg(long)]
        strict: bool,
    },
    /// Sweep one config key and write sweep.csv, manifest.txt.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
        /// Key path and values, e.g. channel.latency_s=0,0.1,0.2
        #[arg(long = "sweep", value_name = "PATH=v1,v2,...")]
        sweep: String,
        #[arg(long, value_name = "N", default_value_t = 1)]
        reps: usize,
        #[arg(long)]
        strict: bool,
    },
    /// Parse and validate a config, then print it fully resolved.
    ValidateConfig {
        #[command(flatten)]
        common: Common,
    },
    /// Write ground truth and per-agent point clouds for one frame.
    DumpScene {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
        #[arg(long, value_name = "N", default_value_t = 0)]
        frame: usize,
    },
}

enum Failure {
    Config(ConfigError),
    Runtime(String),
    Strict(usize),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => Failure::Config(c),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(common: &Common) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(ConfigError::new(path.display().to_string(), e.to_string())))?;
            ScenarioConfig::from_toml_str(&text).map_err(Failure::Config)?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn strict_check(strict: bool, warnings: usize) -> Result<(), Failure> {
    if strict && warnings > 0 {
        Err(Failure::Strict(warnings))
    } else {
        Ok(())
    }
}

fn dump_scene(cfg: &ScenarioConfig, out: &Path, frame: usize) -> Result<(), Failure> {
    let scene: Scene = scene_at(cfg, frame)?;
    let weights = SirWeights::seeded(cfg.sir.dim, cfg.sir.layers, cfg.sir.weight_seed);
    let views = perceive(cfg, &scene, &weights, frame as u64)?;
    fs::create_dir_all(out)?;
    let mut w = BufWriter::new(File::create(out.join("objects.csv"))?);
    writeln!(w, "object,x,y,z,h,w,l,yaw,vx,vy")?;
    for o in &scene.objects {
        let b = &o.bbox;
        writeln!(
            w,
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.5},{:.4},{:.4}",
            o.object_id, b.center.x, b.center.y, b.center.z, b.size.h, b.size.w, b.size.l, b.yaw, o.velocity.x, o.velocity.y
        )?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(out.join("agents.csv"))?);
    writeln!(w, "agent,x,y,z,yaw,ego,clusters")?;
    for (a, v) in scene.agents.iter().zip(&views) {
        let p = a.pose;
        writeln!(w, "{},{:.4},{:.4},{:.4},{:.5},{},{}", a.agent_id, p.x, p.y, p.z, p.yaw, a.is_ego, v.clusters.len())?;
    }
    w.flush()?;
    for v in &views {
        let mut w = BufWriter::new(File::create(out.join(format!("cloud_{}.csv", v.agent)))?);
        v.cloud.write_csv(&mut w)?;
        w.flush()?;
    }
    println!("frame {frame}: {} objects, {} agents written to {}", scene.objects.len(), scene.agents.len(), out.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { common, out, strict } => {
            let cfg = load(&common)?;
            let report = run(&cfg)?;
            write_run_outputs(&out, &cfg, &report)?;
            println!("{METRIC_HEADER}\n{}", report.metrics);
            strict_check(strict, report.warnings.len())
        }
        Command::Sweep {
            common,
            out,
            sweep: text,
            reps,
            strict,
        } => {
            let cfg = load(&common)?;
            let spec = SweepSpec::parse(&text, reps).map_err(Failure::Config)?;
            let rows = sweep(&cfg, &spec)?;
            write_sweep_outputs(&out, &cfg, &spec, &rows)?;
            println!("{SWEEP_HEADER}");
            for r in &rows {
                println!("{}", r.csv_line(&spec.path));
            }
            strict_check(strict, rows.iter().map(|r| r.warnings.len()).sum())
        }
        Command::ValidateConfig { common } => {
            let cfg = load(&common)?;
            print!("{}", cfg.to_toml_string());
            Ok(())
        }
        Command::DumpScene { common, out, frame } => {
            let cfg = load(&common)?;
            dump_scene(&cfg, &out, frame)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Strict(n)) => {
            eprintln!("{n} degeneracy warning(s) with --strict");
            ExitCode::from(EXIT_STRICT)
        }
    }
}
