use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use healsim_core::calibration::CalibrationConfig;
use healsim_core::experiments::{
    self as exp, parse_json, ConsumptionDataset, DataSource, ExperimentConfig, ExperimentError,
    Method, SweepSpec, Table,
};

/// Output directories and files are redirected here when set.
const OUT_ENV: &str = "HEALSIM_OUT_DIR";

#[derive(Parser)]
#[command(name = "healsim", version, about = "Self-healing dilemma simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Profile scenario frequencies and inconsistency costs of one setting.
    Profile {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write one row per monitored pair instead of cost histograms.
        #[arg(long)]
        emit_pairs: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the aggregation application with and without correction.
    Aggregate {
        #[arg(long)]
        config: PathBuf,
        /// A consumption CSV, or `synthetic`.
        #[arg(long, default_value = "synthetic")]
        data: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the profile × scale × threshold grid.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        parallel: Option<usize>,
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a calibrator mapping model cost to application error.
    Calibrate {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        targets: PathBuf,
        /// Per-stream cost sums; required by `none` and `fn-lambda`.
        #[arg(long)]
        costs: Option<PathBuf>,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        train_profiles: Vec<String>,
        /// JSON with lambda, lambda_grid, elastic_alpha, elastic_l1_ratio.
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a fitted model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        costs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic consumption dataset.
    GenData {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| {
        format!("unknown method {s:?}; expected none, fn-lambda, ols or elastic-net")
    })
}

fn out_dir(dir: &Path) -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| dir.to_path_buf())
}

fn out_file(file: &Path) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(dir) => PathBuf::from(dir).join(file.file_name().unwrap_or(file.as_os_str())),
        None => file.to_path_buf(),
    }
}

fn read_text(path: &Path) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path)
        .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))
}

fn load_data(
    arg: Option<&str>,
    source: &DataSource,
    seed: u64,
    n: usize,
) -> Result<ConsumptionDataset, ExperimentError> {
    match (arg, source) {
        (Some("synthetic"), _) | (None, DataSource::Synthetic { .. }) => {
            Ok(exp::gen_synthetic(n, seed))
        }
        (Some(path), _) => exp::read_dataset(Path::new(path)),
        (None, DataSource::Csv { path }) => exp::read_dataset(Path::new(path)),
    }
}

fn report_path(model: &Path) -> PathBuf {
    let stem = model
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    model.with_file_name(format!("{stem}.report.json"))
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Profile {
            config,
            out,
            emit_pairs,
            seed,
        } => {
            let mut cfg: ExperimentConfig = parse_json(&read_text(&config)?)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let result = exp::profile(&cfg, emit_pairs)?;
            let dir = out_dir(&out);
            exp::write_profile(&dir, &result)?;
            log::info!("profile written to {}", dir.display());
        }
        Command::Aggregate {
            config,
            data,
            out,
            seed,
        } => {
            let mut cfg: ExperimentConfig = parse_json(&read_text(&config)?)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let ds = load_data(Some(&data), &cfg.data, cfg.data_seed(), cfg.n_nodes)?;
            let series = ds.take(cfg.n_nodes)?;
            let outcome = exp::aggregate(&cfg, &series)?;
            let dir = out_dir(&out);
            exp::write_aggregate(&dir, &cfg, &outcome)?;
            log::info!("aggregation written to {}", dir.display());
        }
        Command::Sweep {
            spec,
            out,
            parallel,
            data,
            seed,
        } => {
            let mut spec: SweepSpec = parse_json(&read_text(&spec)?)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            spec.validate()?;
            let data_seed = match spec.data {
                DataSource::Synthetic { seed: Some(s) } => s,
                _ => spec.seed,
            };
            let ds = load_data(data.as_deref(), &spec.data, data_seed, spec.n_nodes)?;
            let result = exp::run_sweep(&spec, &ds, parallel)?;
            let dir = out_dir(&out);
            exp::write_sweep(&dir, &result)?;
            for (key, err) in &result.failures {
                log::warn!("setting {key} failed: {err}");
            }
            log::info!(
                "{} settings written to {}",
                result.settings.len(),
                dir.display()
            );
        }
        Command::Calibrate {
            features,
            targets,
            costs,
            method,
            train_profiles,
            calibration,
            out,
        } => {
            let config: CalibrationConfig = match calibration {
                Some(p) => parse_json(&read_text(&p)?)?,
                None => CalibrationConfig::default(),
            };
            let feats = features.as_deref().map(exp::read_features).transpose()?;
            let costs = costs.as_deref().map(exp::read_stream_costs).transpose()?;
            let targets = exp::read_targets(&targets)?;
            let (model, report) = exp::calibrate(
                method,
                feats.as_deref(),
                costs.as_deref(),
                &targets,
                &config,
                &train_profiles,
            )?;
            let path = out_file(&out);
            exp::write_json(&path, &model)?;
            exp::write_json(&report_path(&path), &report)?;
            log::info!("rmse {:.6}, pearson {:?}", report.rmse, report.pearson);
        }
        Command::Predict {
            model,
            features,
            costs,
            out,
        } => {
            let model: exp::CalibrationModel = parse_json(&read_text(&model)?)?;
            let feats = features.as_deref().map(exp::read_features).transpose()?;
            let costs = costs.as_deref().map(exp::read_stream_costs).transpose()?;
            let rows = exp::predict(&model, feats.as_deref(), costs.as_deref())?;
            let mut t = Table::new(&["setting_key", "method", "predicted"]);
            for r in rows {
                t.push(vec![
                    r.setting_key,
                    r.method.as_str().into(),
                    format!("{}", r.predicted),
                ]);
            }
            exp::write_table(&out_file(&out), &t)?;
        }
        Command::GenData { nodes, seed, out } => {
            if nodes == 0 {
                return Err(ExperimentError::Config("nodes: must be at least 1".into()));
            }
            exp::write_dataset(&out_file(&out), &exp::gen_synthetic(nodes, seed))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
