//! Command-line interface: `test` runs the two-period change test on CSV
//! data, `simulate` runs a declarative experiment file, and `heatmap` exports
//! per-lag dependence matrices. Results go to stdout (or `-o`), progress and
//! cleaning notes to stderr.

use std::error::Error;
use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use cqchange::commands::{
    emit, result_to_json, run_heatmap_command, run_simulate_command, run_test_command, DataArgs,
    HeatmapArgs, InputFile, PeriodInputs, TestArgs,
};
use cqchange::config::{
    parse_control_spec, parse_lags, parse_tau_grid, ControlSource, ExperimentConfig,
};

#[derive(Parser)]
#[command(
    name = "cqchange",
    version,
    about = "Tests whether directional quantile dependence between two series changed across two periods"
)]
struct Cli {
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the change test on CSV data and emit a JSON result
    Test(TestCli),
    /// Run a simulation study from an experiment config and emit a CSV table
    Simulate(SimulateCli),
    /// Export cross-quantilogram heatmap matrices per period and lag
    Heatmap(HeatmapCli),
}

#[derive(Args)]
struct InputCli {
    /// Target-series CSV covering both periods (requires --breakpoint)
    #[arg(long, value_name = "CSV")]
    target: Option<PathBuf>,
    /// Source-series CSV covering both periods (requires --breakpoint)
    #[arg(long, value_name = "CSV")]
    source: Option<PathBuf>,
    /// Breakpoint date (YYYY-MM-DD); the date itself belongs to neither period
    #[arg(long, value_name = "DATE")]
    breakpoint: Option<NaiveDate>,
    /// Period-b target CSV (two-pair mode)
    #[arg(long, value_name = "CSV")]
    target_b: Option<PathBuf>,
    /// Period-b source CSV (two-pair mode)
    #[arg(long, value_name = "CSV")]
    source_b: Option<PathBuf>,
    /// Period-a target CSV (two-pair mode)
    #[arg(long, value_name = "CSV")]
    target_a: Option<PathBuf>,
    /// Period-a source CSV (two-pair mode)
    #[arg(long, value_name = "CSV")]
    source_a: Option<PathBuf>,
    /// Date column header, shared by every input file
    #[arg(long, default_value = "date")]
    date_column: String,
    /// Value column header of the target files
    #[arg(long, default_value = "value")]
    target_column: String,
    /// Value column header of the source files
    #[arg(long, default_value = "value")]
    source_column: String,
    /// First-difference the target series before alignment
    #[arg(long)]
    difference_target: bool,
    /// First-difference the source series before alignment
    #[arg(long)]
    difference_source: bool,
    /// Controlling variable for the target: y:LAG, x:LAG, or PATH:COLUMN[:LAG]
    #[arg(long = "control-y", value_name = "SPEC")]
    control_y: Vec<String>,
    /// Controlling variable for the source: y:LAG, x:LAG, or PATH:COLUMN[:LAG]
    #[arg(long = "control-x", value_name = "SPEC")]
    control_x: Vec<String>,
    /// Quantile levels: start:end:step or a comma-separated list
    #[arg(long, default_value = "0.05:0.95:0.05")]
    taus: String,
}

impl InputCli {
    fn data_args(&self) -> Result<DataArgs, Box<dyn Error>> {
        let file = |path: &PathBuf, column: &str, diff: bool| InputFile {
            path: path.clone(),
            value_column: column.to_string(),
            difference: diff,
        };
        let inputs = match (
            &self.target,
            &self.source,
            self.breakpoint,
            &self.target_b,
            &self.source_b,
            &self.target_a,
            &self.source_a,
        ) {
            (Some(t), Some(s), Some(bp), None, None, None, None) => PeriodInputs::Breakpoint {
                target: file(t, &self.target_column, self.difference_target),
                source: file(s, &self.source_column, self.difference_source),
                breakpoint: bp,
            },
            (None, None, None, Some(tb), Some(sb), Some(ta), Some(sa)) => {
                PeriodInputs::TwoPairs {
                    target_b: file(tb, &self.target_column, self.difference_target),
                    source_b: file(sb, &self.source_column, self.difference_source),
                    target_a: file(ta, &self.target_column, self.difference_target),
                    source_a: file(sa, &self.source_column, self.difference_source),
                }
            }
            _ => {
                return Err(
                    "supply either --target/--source/--breakpoint or all of \
                     --target-b/--source-b/--target-a/--source-a"
                        .into(),
                )
            }
        };
        let parse_controls = |specs: &[String]| -> Result<Vec<ControlSource>, Box<dyn Error>> {
            specs
                .iter()
                .map(|s| parse_control_spec(s).map_err(Into::into))
                .collect()
        };
        Ok(DataArgs {
            inputs,
            date_column: self.date_column.clone(),
            controls_y: parse_controls(&self.control_y)?,
            controls_x: parse_controls(&self.control_x)?,
        })
    }
}

#[derive(Args)]
struct TestCli {
    #[command(flatten)]
    input: InputCli,
    /// Maximum lag
    #[arg(long, default_value_t = 5)]
    p: usize,
    /// Bootstrap replicates (L)
    #[arg(long, default_value_t = 800)]
    replicates: usize,
    /// Expected bootstrap block length (default: max(2, ceil(T^(1/3))))
    #[arg(long)]
    block_length: Option<f64>,
    /// Seed for the bootstrap streams
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON result here instead of stdout
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateCli {
    /// Experiment config (TOML)
    config: PathBuf,
    /// Override the config's trial count
    #[arg(long)]
    trials: Option<usize>,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Write the CSV table here instead of stdout
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct HeatmapCli {
    #[command(flatten)]
    input: InputCli,
    /// Lags to export, comma-separated
    #[arg(long, default_value = "1,5,22")]
    lags: String,
    /// Directory for the matrix files
    #[arg(long, default_value = ".", value_name = "DIR")]
    out_dir: PathBuf,
    /// Also render each matrix as a PNG
    #[arg(long)]
    png: bool,
}

fn main() {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // results do not depend on the pool size; this only bounds parallelism
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let outcome = match cli.command {
        Command::Test(args) => run_test(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Heatmap(args) => run_heatmap(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run_test(args: TestCli) -> Result<(), Box<dyn Error>> {
    let test_args = TestArgs {
        data: args.input.data_args()?,
        grid: parse_tau_grid(&args.input.taus)?,
        p: args.p,
        replicates: args.replicates,
        block_length: args.block_length,
        seed: args.seed,
    };
    eprintln!("running change test with {} bootstrap replicates", args.replicates);
    let outcome = run_test_command(&test_args)?;
    for note in &outcome.notes {
        eprintln!("{note}");
    }
    emit(args.output.as_deref(), result_to_json(&outcome.result).as_bytes())?;
    Ok(())
}

fn run_simulate(args: SimulateCli) -> Result<(), Box<dyn Error>> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(trials) = args.trials {
        cfg.trials = trials;
        for row in cfg.rows.iter_mut() {
            row.trials = None;
        }
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let rows = run_simulate_command(&cfg, |idx, total| {
        eprintln!("row {}/{}", idx + 1, total);
    })?;
    let mut buf = Vec::new();
    cqchange::commands::write_simulation_csv(&mut buf, &rows)?;
    emit(args.output.as_deref(), &buf)?;
    Ok(())
}

fn run_heatmap(args: HeatmapCli) -> Result<(), Box<dyn Error>> {
    let heatmap_args = HeatmapArgs {
        data: args.input.data_args()?,
        grid: parse_tau_grid(&args.input.taus)?,
        lags: parse_lags(&args.lags)?,
        out_dir: args.out_dir.clone(),
        png: args.png,
    };
    let outcome = run_heatmap_command(&heatmap_args)?;
    for note in &outcome.notes {
        eprintln!("{note}");
    }
    for path in &outcome.written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
