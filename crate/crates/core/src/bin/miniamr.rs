use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use miniamr::arena::{self, ArenaHandle, ArenaKind};
use miniamr::tools::bench;
use miniamr::tools::heat::{run_heat_demo, HeatConfig};
use miniamr::tools::InputsTable;

#[derive(Parser)]
#[command(name = "miniamr", version, about = "Block-structured AMR demo and microbenchmarks")]
struct Cli {
    /// Print default arena statistics on exit.
    #[arg(long, global = true)]
    arena_stats: bool,
    /// Print point-to-point message statistics of the heat run.
    #[arg(long, global = true)]
    comm_stats: bool,
    /// Write plotfiles into this directory.
    #[arg(long, global = true, value_name = "DIR")]
    plotfile_dir: Option<PathBuf>,
    /// Emit the report as JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Heat-equation demo on a two-level periodic mesh.
    Heat {
        #[arg(long, value_name = "FILE")]
        inputs: Option<PathBuf>,
        /// `key=value` overrides.
        overrides: Vec<String>,
    },
    /// Microbenchmarks.
    Bench {
        which: Which,
        #[arg(long, value_name = "FILE")]
        inputs: Option<PathBuf>,
        overrides: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Triad,
    Arena,
    Soa,
}

fn configure_arena(t: &InputsTable) -> Result<()> {
    let kind: ArenaKind = match t.get::<String>("arena.kind")? {
        Some(s) => s.parse()?,
        None => ArenaKind::Pooled,
    };
    arena::configure(kind, t.get("arena.init_size")?);
    Ok(())
}

fn load(path: Option<&PathBuf>, overrides: &[String]) -> Result<InputsTable> {
    InputsTable::read(path.map(|p| p.as_path()), overrides)
        .with_context(|| format!("reading inputs {}", path.map(|p| p.display().to_string()).unwrap_or_default()))
}

fn emit<T: serde::Serialize + std::fmt::Display>(json: bool, r: &T) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(r)?);
    } else {
        println!("{r}");
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Heat { inputs, overrides } => {
            let t = load(inputs.as_ref(), overrides)?;
            configure_arena(&t)?;
            let mut cfg = HeatConfig::from_inputs(&t)?;
            if let Some(dir) = &cli.plotfile_dir {
                cfg.plotfile_dir = Some(dir.clone());
                if cfg.plot_int == 0 {
                    cfg.plot_int = usize::MAX;
                }
            }
            let (report, stats) = run_heat_demo(&cfg)?;
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("heat: {} steps of {:.3e} to t = {:.4e}", report.steps, report.dt, report.time);
                for (l, lev) in report.levels.iter().enumerate() {
                    println!(
                        "  level {l}: {} boxes, {} cells, linf {:.3e}, l2 {:.3e}",
                        lev.nboxes, lev.ncells, lev.error.linf, lev.error.l2
                    );
                }
                println!("  composite linf {:.3e}, l2 {:.3e}", report.error.linf, report.error.l2);
                println!("  integral drift {:.3e}", report.conservation_drift());
                for p in &report.plotfiles {
                    println!("  wrote {p}");
                }
            }
            if cli.comm_stats {
                println!("messages: {stats}");
            }
        }
        Command::Bench { which, inputs, overrides } => {
            let t = load(inputs.as_ref(), overrides)?;
            configure_arena(&t)?;
            match which {
                Which::Triad => emit(cli.json, &bench::bench_triad_inputs(&t)?)?,
                Which::Arena => emit(cli.json, &bench::bench_arena_inputs(&t)?)?,
                Which::Soa => emit(cli.json, &bench::bench_soa_inputs(&t)?)?,
            }
        }
    }
    if cli.arena_stats {
        match ArenaHandle::the_arena().stats() {
            Some(s) => println!("arena: {s}"),
            None => println!("arena: system allocator"),
        }
    }
    Ok(())
}
