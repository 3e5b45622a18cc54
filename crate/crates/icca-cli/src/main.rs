//! `icca`: compile models to end-to-end plans, replay them on the chip
//! simulator, compare scheduler baselines and sweep hardware axes.
//!
//! Exit codes: 0 success, 2 infeasible plan, 3 invalid input.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use icca_core::baselines::BaselineKind;
use icca_core::driver::{
    cmd_compare, cmd_compile, cmd_fit_cost, cmd_simulate, cmd_sweep, cmd_validate, CostMode,
    RunManifest, SweepAxes,
};

#[derive(Parser)]
#[command(
    name = "icca",
    version,
    about = "Scheduler and simulator for inter-core connected AI chips"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Model file, or fixture:NAME (gpt-like-N, opt-30b, llama2-70b,
    /// two-layer, random-small, random-order, random-alloc, random-sim)
    #[arg(long)]
    model: String,

    /// Chip config file or preset name; random fixtures bring their own
    /// config, which wins
    #[arg(long, default_value = "ipu-mk2-a2a")]
    config: String,

    /// naive | static | dynamic | full | ideal
    #[arg(long, default_value = "full")]
    scheduler: String,

    /// "analytic" or a calibrated-model file from fit-cost
    #[arg(long, default_value = "analytic")]
    cost: String,

    /// Seed for random fixture generation
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Cap on candidate preload orders per layer group
    #[arg(long, default_value_t = 720)]
    order_limit: usize,

    /// Keep the model's operator order (skip preload reordering)
    #[arg(long)]
    no_reorder: bool,
}

impl RunArgs {
    fn manifest(&self) -> Result<RunManifest, icca_core::Error> {
        let mut m = RunManifest::new(self.model.clone(), self.config.clone());
        m.scheduler = BaselineKind::from_str(&self.scheduler)?;
        m.cost = if self.cost == "analytic" {
            CostMode::Analytic
        } else {
            CostMode::Calibrated(PathBuf::from(&self.cost))
        };
        m.seed = self.seed;
        m.out_dir = self.out.clone();
        m.order_limit = self.order_limit;
        m.no_reorder = self.no_reorder;
        Ok(m)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a model to a schedule file plus compile stats
    Compile(RunArgs),
    /// Replay a schedule file on the event-driven simulator
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Schedule file produced by compile
        #[arg(long)]
        schedule: PathBuf,
    },
    /// Run every scheduler on one model and emit a CSV comparison
    Compare(RunArgs),
    /// Sweep hardware axes x schedulers into a long-format CSV
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// HBM bandwidth values (bytes/s), comma separated
        #[arg(long, value_delimiter = ',')]
        hbm_bandwidth: Vec<f64>,
        /// Per-core link bandwidth values (bytes/s), comma separated
        #[arg(long, value_delimiter = ',')]
        noc_bandwidth: Vec<f64>,
        /// Core counts, comma separated
        #[arg(long, value_delimiter = ',')]
        num_cores: Vec<usize>,
    },
    /// Fit a calibrated cost model from measured samples
    FitCost {
        /// CSV with header kind,op_type,x,seconds
        #[arg(long)]
        samples: PathBuf,
        /// Where to write the calibrated model (TOML)
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate with trace recording and check conservation and causality
    Validate(RunArgs),
}

fn run(cli: Cli) -> Result<(), icca_core::Error> {
    match cli.cmd {
        Cmd::Compile(args) => {
            let m = args.manifest()?;
            let r = cmd_compile(&m)?;
            println!("schedule: {}", m.out_dir.join("schedule.toml").display());
            println!("stats:    {}", m.out_dir.join("compile_stats.toml").display());
            println!(
                "makespan {:.6e} s, {} candidate orders, {} alloc calls, {} repairs, {:.1} ms",
                r.analytic_makespan, r.candidate_orders, r.alloc_calls, r.repairs, r.wall_ms
            );
        }
        Cmd::Simulate { run, schedule } => {
            let m = run.manifest()?;
            let r = cmd_simulate(&m, &schedule)?;
            println!("report: {}", m.out_dir.join("sim_report.toml").display());
            println!(
                "total {:.6e} s (preload {:.3e}, execute {:.3e}, overlapped {:.3e}, stall {:.3e})",
                r.total_time,
                r.breakdown.preload_only,
                r.breakdown.execute_only,
                r.breakdown.overlapped,
                r.breakdown.interconnect_stall
            );
        }
        Cmd::Compare(args) => {
            let m = args.manifest()?;
            print!("{}", cmd_compare(&m)?);
        }
        Cmd::Sweep {
            run,
            hbm_bandwidth,
            noc_bandwidth,
            num_cores,
        } => {
            let mut m = run.manifest()?;
            m.sweep = SweepAxes {
                hbm_bandwidth,
                noc_bandwidth,
                num_cores,
            };
            print!("{}", cmd_sweep(&m)?);
        }
        Cmd::FitCost { samples, out } => {
            let r = cmd_fit_cost(&samples, &out)?;
            println!("model: {}", out.display());
            for (op, err) in &r.compute_errors {
                println!("compute {op}: max rel error {err:.4}");
            }
            if let Some(err) = r.transfer_error {
                println!("transfer: max rel error {err:.4}");
            }
        }
        Cmd::Validate(args) => {
            let m = args.manifest()?;
            let r = cmd_validate(&m)?;
            println!("trace ok: {} events, total {:.6e} s", r.events, r.total_time);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap uses exit code 2 for usage errors; keep 2 for infeasible
            // plans and map bad arguments to 3 instead
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
