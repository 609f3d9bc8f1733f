use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use rlcsim::runner;
use rlcsim::scenario::presets;

#[derive(Parser)]
#[command(name = "rlcsim", version, about = "Downlink RLC buffer / AQM / transport / video simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario file or preset.
    Run {
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Output root; defaults to $RLCSIM_OUT, then ./results.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every value of a sweep file or preset.
    Sweep {
        sweep_file: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Emit long-format CSVs for plotting from a results directory.
    Plotdata { results_dir: PathBuf },
    /// Inspect the built-in presets.
    Presets {
        #[command(subcommand)]
        cmd: PresetCmd,
    },
}

#[derive(Subcommand)]
enum PresetCmd {
    List,
    Show { name: String },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run { scenario, seed, out } => {
            let s = runner::scenario_arg(&scenario, seed)?;
            let (dir, out) = runner::run_to_dir(&s, &runner::output_root(out.as_deref()))?;
            let a = &out.results.aggregate;
            println!(
                "{}: goodput {:.2} Mb/s, mean sRTT {} ms, drops {}/{} (aqm/overflow), marks {}",
                dir.display(),
                a.goodput_bps / 1e6,
                a.srtt_us.map_or("-".into(), |d| format!("{:.2}", d.mean / 1e3)),
                a.drops.aqm,
                a.drops.overflow,
                a.marks
            );
            if !out.results.conservation_ok {
                anyhow::bail!("packet conservation violated; see {}", dir.display());
            }
        }
        Cmd::Sweep { sweep_file, jobs } => {
            let sweep = runner::load_sweep(&sweep_file)?;
            let (dir, rows) = runner::run_sweep(&sweep, &runner::output_root(None), jobs)?;
            for r in &rows {
                let status = if !r.error.is_empty() {
                    format!("FAILED: {}", r.error)
                } else {
                    format!(
                        "goodput {:.2} Mb/s, mean sRTT {} ms{}",
                        r.goodput_bps / 1e6,
                        r.mean_srtt_us.map_or("-".into(), |v| format!("{:.2}", v / 1e3)),
                        if r.best { "  [best]" } else { "" }
                    )
                };
                println!("#{} {} -> {status}", r.index, r.value);
            }
            println!("summary: {}", dir.join("summary.csv").display());
            let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
            if failed > 0 {
                anyhow::bail!("{failed} of {} runs failed", rows.len());
            }
        }
        Cmd::Plotdata { results_dir } => {
            for p in runner::plotdata(&results_dir)? {
                println!("{}", p.display());
            }
        }
        Cmd::Presets { cmd: PresetCmd::List } => runner::list_presets(std::io::stdout().lock())?,
        Cmd::Presets {
            cmd: PresetCmd::Show { name },
        } => {
            let src = presets::source(&name).with_context(|| format!("unknown preset {name:?}"))?;
            print!("{src}");
        }
    }
    Ok(())
}
