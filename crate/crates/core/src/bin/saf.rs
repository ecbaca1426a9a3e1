use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use saf_core::experiment::{
    load_dataset, parse_lambda, run, write_outputs, DatasetSource, ExperimentConfig, ModelKind, OptimizerKind,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Standard,
    Saf,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Ncg,
    Adam,
}

/// Train tanh and spline-activation networks on a regression dataset.
#[derive(Debug, Parser)]
#[command(name = "saf", version)]
struct Args {
    /// CSV file, or `synthetic` for the built-in benchmark. Relative paths
    /// are also looked up in $SAF_DATA_DIR.
    #[arg(long)]
    dataset: String,
    /// Zero-based index of the target column.
    #[arg(long, default_value_t = 8)]
    target_col: usize,
    #[arg(long, value_enum, default_value_t = ModelArg::Both)]
    model: ModelArg,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    scenario: u8,
    #[arg(long, default_value_t = 15)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    hidden: usize,
    #[arg(long, default_value_t = 0.2)]
    dx: f64,
    #[arg(long, default_value_t = 2.0)]
    knot_range: f64,
    /// A value, a comma-separated list, or `grid` / `reduced` / `decadic`.
    #[arg(long)]
    lambda_w: Option<String>,
    /// As --lambda-w; only used by the SAF model.
    #[arg(long)]
    lambda_q: Option<String>,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Ncg)]
    optimizer: OptimizerArg,
    /// NCG line searches, or ADAM epochs.
    #[arg(long, default_value_t = 1500)]
    max_iter: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Rows generated for `--dataset synthetic`.
    #[arg(long, default_value_t = 500)]
    synthetic_rows: usize,
    /// Fit the normalization on all rows instead of the training split.
    #[arg(long)]
    normalize_all: bool,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    export_splines: bool,
}

fn config(args: &Args) -> saf_core::Result<ExperimentConfig> {
    let dataset = if args.dataset == "synthetic" {
        DatasetSource::Synthetic {
            samples: args.synthetic_rows,
            seed: args.seed,
        }
    } else {
        DatasetSource::Csv {
            path: PathBuf::from(&args.dataset),
            target_columns: vec![args.target_col],
        }
    };
    let mut cfg = match args.scenario {
        1 => ExperimentConfig::scenario1(dataset),
        _ => ExperimentConfig::scenario2(dataset),
    };
    cfg.models = match args.model {
        ModelArg::Standard => vec![ModelKind::Standard],
        ModelArg::Saf => vec![ModelKind::Saf],
        ModelArg::Both => vec![ModelKind::Standard, ModelKind::Saf],
    };
    cfg.runs = args.runs;
    cfg.seed = args.seed;
    cfg.hidden = args.hidden;
    cfg.delta_x = args.dx;
    cfg.knot_range = args.knot_range;
    if let Some(s) = &args.lambda_w {
        cfg.lambda_w = parse_lambda(s)?;
    }
    if let Some(s) = &args.lambda_q {
        cfg.lambda_q = parse_lambda(s)?;
    }
    cfg.optimizer = match args.optimizer {
        OptimizerArg::Ncg => OptimizerKind::Ncg,
        OptimizerArg::Adam => OptimizerKind::Adam,
    };
    cfg.max_iter = args.max_iter;
    cfg.adam_batch = args.batch_size;
    cfg.normalize_on_all_data = args.normalize_all;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let outcome = config(&args).and_then(|cfg| {
        let ds = load_dataset(&cfg.dataset)?;
        log::info!(
            "{}: {} rows, {} inputs, {} targets",
            cfg.dataset.label(),
            ds.len(),
            ds.num_features(),
            ds.num_targets()
        );
        let result = run(&cfg, &ds)?;
        let files = write_outputs(&result, &args.out, args.export_splines)?;
        print!("{}", saf_core::experiment::render_table(&result.aggregates()));
        log::info!("wrote {} files to {}", files.tables.len() + files.traces.len() + files.splines.len(), args.out.display());
        Ok(())
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
