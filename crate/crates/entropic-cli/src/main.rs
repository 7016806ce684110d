//! Command-line front end for the `entropic` pricing crate.
//!
//! The binary is a thin shell: it parses a configuration file, dispatches
//! to the library, and formats the results as plain-text reports and CSV
//! files. Every number in its output comes from a library call.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use entropic::config::{load_config, FileConfig};
use entropic::lattice::LatticeModel;
use entropic::model::{
    BasisSpec, LambdaSchedule, MarketModel, Method, Payoff, RunConfig, TimeGrid,
};
use entropic::paths::european_price;
use entropic::pia::{run_classical_penalization, run_pia_with, PiaOptions, PriceReport};
use entropic::{Error, Result};

#[derive(Parser)]
#[command(
    name = "entropic",
    version,
    about = "American-option pricing via randomized stopping",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration file (INI-style; see the `entropic::config` docs).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory for reports and CSV output.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Override the seed from the configuration file.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads (0 = one per core). When absent, RAYON_NUM_THREADS
    /// picks the default.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Shrink experiment sizes for quick runs (20k paths, 300 iterations
    /// per stage).
    #[arg(long, global = true)]
    reduced: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Price the configured contract with the configured method.
    Price,
    /// Two-asset max-call benchmark grid: spots 90/100/110 at three
    /// temperatures, against the penalty baseline and the tree value.
    Table1,
    /// Temperature-convergence study on the one-asset put tree: gap to
    /// the American value and its decay-rate ratio per temperature.
    LambdaRate,
    /// Policy-iteration error decay on the one-asset put tree.
    PiaRate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::NonFinite { .. } | Error::Numerical(_) => 3u8,
                _ => 2u8,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }

    let file = cli
        .config
        .as_deref()
        .map(load_config)
        .transpose()?
        .map(|mut f| {
            if let Some(seed) = cli.seed {
                f.run.seed = seed;
            }
            f
        });

    fs::create_dir_all(&cli.out)?;
    match cli.command {
        Command::Price => cmd_price(file, &cli.out),
        Command::Table1 => cmd_table1(file, &cli.out, cli.seed, cli.reduced),
        Command::LambdaRate => cmd_lambda_rate(file, &cli.out),
        Command::PiaRate => cmd_pia_rate(file, &cli.out),
    }
}

// -------------------------------------------------------------------
// price
// -------------------------------------------------------------------

fn cmd_price(file: Option<FileConfig>, out: &Path) -> Result<()> {
    let file = file.ok_or_else(|| {
        Error::InvalidInput("`price` needs a configuration file (--config PATH)".into())
    })?;
    let config = &file.run;

    let report = match config.method {
        Method::Pia => {
            let options = PiaOptions {
                antithetic: file.antithetic,
                dual: file.dual,
                out_of_sample: file.out_of_sample,
            };
            run_pia_with(config, &options)?.report
        }
        Method::ClassicalPenalization => {
            let penalty = file
                .penalty
                .unwrap_or_else(|| 1.0 / config.schedule.final_lambda());
            run_classical_penalization(config, penalty)?
        }
        Method::Lattice => {
            let started = std::time::Instant::now();
            let lattice = LatticeModel::new(&config.model, &config.grid)?;
            let price = lattice.american_root(&config.payoff)?;
            PriceReport {
                method: Method::Lattice,
                price,
                std_error: 0.0,
                lambda: None,
                iterations: 0,
                num_paths: 0,
                upper_bound: None,
                lower_bound: None,
                wall_time_secs: started.elapsed().as_secs_f64(),
            }
        }
        Method::European => {
            let started = std::time::Instant::now();
            let estimate = european_price(
                &config.model,
                &config.payoff,
                &config.grid,
                config.num_paths,
                config.seed,
            )?;
            PriceReport {
                method: Method::European,
                price: estimate.value,
                std_error: estimate.std_error,
                lambda: None,
                iterations: 0,
                num_paths: config.num_paths,
                upper_bound: None,
                lower_bound: None,
                wall_time_secs: started.elapsed().as_secs_f64(),
            }
        }
    };

    let mut text = String::new();
    for (key, value) in report.to_lines() {
        text.push_str(&format!("{key} = {value}\n"));
    }
    print!("{text}");
    fs::write(out.join("price.txt"), text)?;
    Ok(())
}

// -------------------------------------------------------------------
// table1
// -------------------------------------------------------------------

const TABLE_SPOTS: [f64; 3] = [90.0, 100.0, 110.0];
const TABLE_LAMBDAS: [f64; 3] = [0.1, 0.01, 0.001];

fn cmd_table1(
    file: Option<FileConfig>,
    out: &Path,
    seed: Option<u64>,
    reduced: bool,
) -> Result<()> {
    let mut base = match file {
        Some(f) => f.run,
        None => benchmark_config(seed.unwrap_or(42)),
    };
    if base.model.dim() != 2 {
        return Err(Error::InvalidInput(
            "the benchmark grid needs a two-asset configuration".into(),
        ));
    }
    if base.model.spot().windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::InvalidInput(
            "the benchmark grid needs symmetric spot levels".into(),
        ));
    }
    if reduced {
        base.num_paths = 20_000;
        base.schedule = LambdaSchedule::ladder(0.001, 300)?;
    }
    let stage_lambdas: Vec<f64> = base.schedule.stages().iter().map(|s| s.lambda).collect();
    for lambda in TABLE_LAMBDAS {
        if !stage_lambdas.iter().any(|l| (l - lambda).abs() < 1e-12) {
            return Err(Error::InvalidInput(format!(
                "the schedule needs a stage at temperature {lambda} for the grid"
            )));
        }
    }

    let mut csv = String::from("s0,lambda,pia,pia_se,classical,classical_se,lattice\n");
    for s0 in TABLE_SPOTS {
        let config = RunConfig {
            model: base.model.with_uniform_spot(s0)?,
            ..base.clone()
        };
        let run = run_pia_with(&config, &PiaOptions::default())?;
        let lattice = LatticeModel::new(&config.model, &config.grid)?;
        let american = lattice.american_root(&config.payoff)?;

        for lambda in TABLE_LAMBDAS {
            let stage = run
                .stage_results
                .iter()
                .find(|s| (s.lambda - lambda).abs() < 1e-12)
                .expect("stage presence checked above");
            let classical = run_classical_penalization(&config, 1.0 / lambda)?;
            csv.push_str(&format!(
                "{s0},{lambda},{:.6},{:.6},{:.6},{:.6},{american:.6}\n",
                stage.price, stage.std_error, classical.price, classical.std_error,
            ));
        }
    }

    print!("{csv}");
    fs::write(out.join("table1.csv"), csv)?;
    Ok(())
}

/// The standard two-asset benchmark: symmetric max-call, K = 100,
/// r = 0.05, delta = 0.10, sigma = 0.2, T = 3, N = 100.
fn benchmark_config(seed: u64) -> RunConfig {
    RunConfig {
        model: MarketModel::new(vec![100.0, 100.0], 0.05, 0.10, 0.2)
            .expect("benchmark market is valid"),
        payoff: Payoff::MaxCall { strike: 100.0 },
        grid: TimeGrid::new(3.0, 100).expect("benchmark grid is valid"),
        num_paths: 100_000,
        seed,
        schedule: LambdaSchedule::ladder(0.001, 500).expect("benchmark ladder is valid"),
        basis: BasisSpec::AndersenBroadie13,
        method: Method::Pia,
    }
}

// -------------------------------------------------------------------
// lambda-rate
// -------------------------------------------------------------------

const RATE_LAMBDAS: [f64; 7] = [1.0, 0.1, 0.05, 0.02, 0.01, 0.005, 0.001];

fn cmd_lambda_rate(file: Option<FileConfig>, out: &Path) -> Result<()> {
    let (model, grid, payoff) = one_asset_setup(file)?;
    let lattice = LatticeModel::new(&model, &grid)?;
    let american = lattice.american_root(&payoff)?;

    let mut csv = String::from("lambda,v_lambda_root,v_root,gap,rate_ratio\n");
    for lambda in RATE_LAMBDAS {
        let regularized = lattice.regularized_root(&payoff, lambda)?;
        let gap = american - regularized;
        let rate = lambda - lambda * lambda.ln();
        csv.push_str(&format!(
            "{lambda},{regularized:.10},{american:.10},{gap:.10},{:.6}\n",
            gap / rate
        ));
    }

    print!("{csv}");
    fs::write(out.join("lambda_rate.csv"), csv)?;
    Ok(())
}

/// One-asset setup for the tree studies: from the config file when given
/// (must be single-asset), otherwise the standard put benchmark
/// (K = 100, s0 = 100, r = 0.05, sigma = 0.2, T = 1, N = 200).
fn one_asset_setup(file: Option<FileConfig>) -> Result<(MarketModel, TimeGrid, Payoff)> {
    match file {
        Some(f) => {
            if f.run.model.dim() != 1 {
                return Err(Error::InvalidInput(
                    "tree studies need a one-asset configuration".into(),
                ));
            }
            Ok((f.run.model, f.run.grid, f.run.payoff))
        }
        None => Ok((
            MarketModel::new(vec![100.0], 0.05, 0.0, 0.2).expect("benchmark market is valid"),
            TimeGrid::new(1.0, 200).expect("benchmark grid is valid"),
            Payoff::Put { strike: 100.0 },
        )),
    }
}

// -------------------------------------------------------------------
// pia-rate
// -------------------------------------------------------------------

fn cmd_pia_rate(file: Option<FileConfig>, out: &Path) -> Result<()> {
    const LAMBDA: f64 = 0.1;
    const SWEEPS: usize = 40;

    let (model, grid, payoff) = one_asset_setup(file)?;
    let mut pia = entropic::pia::LatticePia::new(&model, &grid, &payoff, LAMBDA)?;
    let reference = pia.reference_root()?;

    let mut csv = String::from("iteration,root,error\n");
    for m in 1..=SWEEPS {
        pia.sweep();
        csv.push_str(&format!(
            "{m},{:.12},{:.6e}\n",
            pia.root(),
            (pia.root() - reference).abs()
        ));
    }

    print!("{csv}");
    fs::write(out.join("pia_rate.csv"), csv)?;
    let mut stderr = std::io::stderr();
    let _ = writeln!(
        stderr,
        "reference root {reference:.12} at temperature {LAMBDA}"
    );
    Ok(())
}
