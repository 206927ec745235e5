use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use idanse::harness::{self, RunSpec};

#[derive(Parser)]
#[command(name = "idanse", version, about = "Distributed node-specific signal estimation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the algorithms of a spec and write the per-frame CSV and SNR summary.
    Run(Common),
    /// Tabulate fused channels and cycles needed to approach the centralized MSE.
    CompareBandwidth(Common),
    /// Write the observed, desired and noise signals of the spec's WOLA scene.
    ExportWav(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run specification.
    spec: PathBuf,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Override the number of frames.
    #[arg(long)]
    frames: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunSpec> {
        let mut spec = RunSpec::load(&self.spec).with_context(|| format!("reading {}", self.spec.display()))?;
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(frames) = self.frames {
            spec.frames = frames;
        }
        spec.scene_config()?;
        Ok(spec)
    }
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => {
            let spec = c.load()?;
            let (report, paths) = harness::run_to_dir(&spec, &c.out_dir)?;
            print!("{}", harness::summary_csv(&report));
            report_written(&paths);
        }
        Command::CompareBandwidth(c) => {
            let spec = c.load()?;
            let table = harness::bandwidth_csv(&harness::compare_bandwidth(&spec)?);
            print!("{table}");
            std::fs::create_dir_all(&c.out_dir)?;
            let path = c.out_dir.join(format!("{}_bandwidth.csv", spec.name));
            std::fs::write(&path, table).with_context(|| format!("writing {}", path.display()))?;
            report_written(&[path]);
        }
        Command::ExportWav(c) => {
            let spec = c.load()?;
            report_written(&harness::export_wav(&spec, Path::new(&c.out_dir))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
