//! Orchestration for the command-line workflows: the change test on files,
//! heatmap export, and the simulation study. The binary is a thin argument
//! layer over these functions, and integration tests drive them directly.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

use crate::bootstrap::BootstrapConfig;
use crate::changetest::{run_change_test, ChangeTestError, ChangeTestResult};
use crate::config::{ConfigError, ControlSource, ExperimentConfig};
use crate::cqgram::{CqError, LevelGrid, ObservedSeries};
use crate::dgpsim::{approx_difference, estimate_power, DgpError, DifferenceAveraging};
use crate::heatmap::{heatmap_matrix, render_png, write_matrix_csv, HeatmapError};
use crate::ingest::{
    align, align_and_split, build_observed, difference, load_csv, ControlOrigin, ControlSpec,
    DatedSeries, IngestError,
};
use crate::stream;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    ChangeTest(#[from] ChangeTestError),
    #[error(transparent)]
    Dgp(#[from] DgpError),
    #[error(transparent)]
    Cq(#[from] CqError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Heatmap(#[from] HeatmapError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv write error: {0}")]
    Csv(#[from] csv::Error),
}

/// One input CSV: path, value column, and whether to difference it.
#[derive(Debug, Clone)]
pub struct InputFile {
    pub path: PathBuf,
    pub value_column: String,
    pub difference: bool,
}

/// The two supported input modes.
#[derive(Debug, Clone)]
pub enum PeriodInputs {
    /// One target/source pair split at a breakpoint date.
    Breakpoint {
        target: InputFile,
        source: InputFile,
        breakpoint: NaiveDate,
    },
    /// Separate pairs for the two periods.
    TwoPairs {
        target_b: InputFile,
        source_b: InputFile,
        target_a: InputFile,
        source_a: InputFile,
    },
}

#[derive(Debug, Clone)]
pub struct DataArgs {
    pub inputs: PeriodInputs,
    pub date_column: String,
    pub controls_y: Vec<ControlSource>,
    pub controls_x: Vec<ControlSource>,
}

#[derive(Debug, Clone)]
pub struct TestArgs {
    pub data: DataArgs,
    pub grid: LevelGrid,
    pub p: usize,
    pub replicates: usize,
    pub block_length: Option<f64>,
    pub seed: u64,
}

#[derive(Debug)]
pub struct TestOutcome {
    pub result: ChangeTestResult,
    /// Cleaning diagnostics for the caller's diagnostic stream.
    pub notes: Vec<String>,
}

struct LoadedData {
    period_b: ObservedSeries,
    period_a: ObservedSeries,
    notes: Vec<String>,
}

fn load_series(
    input: &InputFile,
    date_column: &str,
    notes: &mut Vec<String>,
) -> Result<DatedSeries, CommandError> {
    let load = load_csv(&input.path, date_column, &input.value_column)?;
    if load.dropped_rows > 0 {
        notes.push(format!(
            "{}: dropped {} row(s) with missing values",
            input.path.display(),
            load.dropped_rows
        ));
    }
    let series = if input.difference {
        difference(&load.series)?
    } else {
        load.series
    };
    Ok(series)
}

/// Resolves control specs, loading each external (path, column) once.
fn resolve_controls(
    specs: &[ControlSource],
    date_column: &str,
    externals: &mut Vec<DatedSeries>,
    seen: &mut HashMap<(String, String), usize>,
    notes: &mut Vec<String>,
) -> Result<Vec<ControlSpec>, CommandError> {
    specs
        .iter()
        .map(|spec| {
            Ok(match spec {
                ControlSource::TargetLag(lag) => ControlSpec {
                    origin: ControlOrigin::Target,
                    lag: *lag,
                },
                ControlSource::SourceLag(lag) => ControlSpec {
                    origin: ControlOrigin::Source,
                    lag: *lag,
                },
                ControlSource::External { path, column, lag } => {
                    let key = (path.clone(), column.clone());
                    let idx = match seen.get(&key) {
                        Some(&i) => i,
                        None => {
                            let input = InputFile {
                                path: PathBuf::from(path),
                                value_column: column.clone(),
                                difference: false,
                            };
                            let series = load_series(&input, date_column, notes)?;
                            externals.push(series);
                            let i = externals.len() - 1;
                            seen.insert(key, i);
                            i
                        }
                    };
                    ControlSpec {
                        origin: ControlOrigin::External(idx),
                        lag: *lag,
                    }
                }
            })
        })
        .collect()
}

fn load_periods(data: &DataArgs) -> Result<LoadedData, CommandError> {
    let mut notes = Vec::new();
    let mut externals = Vec::new();
    let mut seen = HashMap::new();
    let controls_y = resolve_controls(
        &data.controls_y,
        &data.date_column,
        &mut externals,
        &mut seen,
        &mut notes,
    )?;
    let controls_x = resolve_controls(
        &data.controls_x,
        &data.date_column,
        &mut externals,
        &mut seen,
        &mut notes,
    )?;

    let (period_b, period_a) = match &data.inputs {
        PeriodInputs::Breakpoint {
            target,
            source,
            breakpoint,
        } => {
            let t = load_series(target, &data.date_column, &mut notes)?;
            let s = load_series(source, &data.date_column, &mut notes)?;
            align_and_split(&t, &s, &externals, &controls_y, &controls_x, *breakpoint)?
        }
        PeriodInputs::TwoPairs {
            target_b,
            source_b,
            target_a,
            source_a,
        } => {
            let build = |t: &InputFile, s: &InputFile, notes: &mut Vec<String>| {
                let t = load_series(t, &data.date_column, notes)?;
                let s = load_series(s, &data.date_column, notes)?;
                let frame = align(&t, &s, &externals)?;
                Ok::<_, CommandError>(build_observed(&frame, &controls_y, &controls_x)?)
            };
            (
                build(target_b, source_b, &mut notes)?,
                build(target_a, source_a, &mut notes)?,
            )
        }
    };
    notes.push(format!(
        "period b: {} rows, period a: {} rows",
        period_b.len(),
        period_a.len()
    ));
    Ok(LoadedData {
        period_b,
        period_a,
        notes,
    })
}

/// The change-test workflow: ingest, split, test.
pub fn run_test_command(args: &TestArgs) -> Result<TestOutcome, CommandError> {
    let data = load_periods(&args.data)?;
    let cfg = BootstrapConfig {
        replicates: args.replicates,
        expected_block_length: args.block_length,
        seed: args.seed,
    };
    let result = run_change_test(&data.period_b, &data.period_a, &args.grid, args.p, &cfg)?;
    Ok(TestOutcome {
        result,
        notes: data.notes,
    })
}

#[derive(Debug, Clone)]
pub struct HeatmapArgs {
    pub data: DataArgs,
    pub grid: LevelGrid,
    pub lags: Vec<usize>,
    pub out_dir: PathBuf,
    pub png: bool,
}

#[derive(Debug)]
pub struct HeatmapOutcome {
    pub written: Vec<PathBuf>,
    pub notes: Vec<String>,
}

/// Writes one matrix CSV per (period, lag), optionally with a PNG rendering.
pub fn run_heatmap_command(args: &HeatmapArgs) -> Result<HeatmapOutcome, CommandError> {
    let data = load_periods(&args.data)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let mut written = Vec::new();
    for (name, series) in [("b", &data.period_b), ("a", &data.period_a)] {
        for &k in &args.lags {
            let matrix = heatmap_matrix(series, &args.grid, k)?;
            let csv_path = args.out_dir.join(format!("heatmap_{name}_lag{k}.csv"));
            let file = std::fs::File::create(&csv_path)?;
            write_matrix_csv(std::io::BufWriter::new(file), &args.grid, &matrix)?;
            written.push(csv_path);
            if args.png {
                let png_path = args.out_dir.join(format!("heatmap_{name}_lag{k}.png"));
                render_png(&matrix, &png_path, 16)?;
                written.push(png_path);
            }
        }
    }
    Ok(HeatmapOutcome {
        written,
        notes: data.notes,
    })
}

/// One emitted row of the simulation table.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRow {
    pub params_b: Vec<f64>,
    pub params_a: Vec<f64>,
    pub length: usize,
    pub difference: Option<f64>,
    pub power: f64,
}

const ROW_TAG: u64 = 0x51;
const DIFF_TAG: u64 = 0xD1;

/// Runs every row of an experiment config. `on_row` fires before each row
/// with `(index, total)` for progress reporting.
pub fn run_simulate_command(
    cfg: &ExperimentConfig,
    mut on_row: impl FnMut(usize, usize),
) -> Result<Vec<SimulatedRow>, CommandError> {
    cfg.validate()?;
    let grid = crate::config::parse_tau_grid(&cfg.taus)?;
    let mut out = Vec::with_capacity(cfg.rows.len());
    for (idx, row) in cfg.rows.iter().enumerate() {
        on_row(idx, cfg.rows.len());
        let (spec_b, spec_a) = cfg.specs_for(row)?;
        let row_seed = stream::derive_seed(cfg.seed, &[ROW_TAG, idx as u64]);
        let boot_cfg = BootstrapConfig {
            replicates: cfg.replicates,
            expected_block_length: cfg.block_length,
            seed: row_seed,
        };
        let trials = row.trials.unwrap_or(cfg.trials);
        let power = estimate_power(
            &spec_b,
            &spec_a,
            trials,
            &grid,
            cfg.p,
            &boot_cfg,
            cfg.nominal_level,
        )?;
        let diff = if cfg.compute_difference {
            Some(approx_difference(
                &spec_b,
                &spec_a,
                cfg.difference_big_t,
                cfg.difference_reps,
                &grid,
                cfg.p,
                stream::derive_seed(row_seed, &[DIFF_TAG]),
                DifferenceAveraging::TablesFirst,
            )?)
        } else {
            None
        };
        out.push(SimulatedRow {
            params_b: row.params_b.clone(),
            params_a: row.params_a.clone(),
            length: row.length.unwrap_or(cfg.length),
            difference: diff,
            power: power.power,
        });
    }
    Ok(out)
}

/// Writes the simulation table: `params_b, params_a, T, difference, power`.
pub fn write_simulation_csv<W: Write>(w: W, rows: &[SimulatedRow]) -> Result<(), CommandError> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(["params_b", "params_a", "T", "difference", "power"])?;
    for row in rows {
        let fmt = |params: &[f64]| {
            params
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        writer.write_record([
            fmt(&row.params_b),
            fmt(&row.params_a),
            row.length.to_string(),
            row.difference.map(|d| d.to_string()).unwrap_or_default(),
            row.power.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Serializes a change-test result as the documented JSON schema (pretty,
/// trailing newline), ready for stdout or a file.
pub fn result_to_json(result: &ChangeTestResult) -> String {
    let mut s = serde_json::to_string_pretty(result).expect("result serializes");
    s.push('\n');
    s
}

/// Writes `content` to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, content: &[u8]) -> Result<(), CommandError> {
    match path {
        Some(p) => std::fs::write(p, content)?,
        None => std::io::stdout().write_all(content)?,
    }
    Ok(())
}
