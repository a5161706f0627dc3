use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use satqkd::sweep::{self, Grid, PostSelectionGrid, Scenario, SweepConfig, ThresholdGrid};
use satqkd::{BeamWanderChannel, Error, Estimator, Protocol};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "satqkd",
    version,
    about = "CV-QKD key rates over fading satellite links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Beam-wander parameters and mean loss of one link.
    Channel {
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        w: f64,
        /// Beam-wander standard deviation, units of beta.
        #[arg(long)]
        sigma: f64,
    },
    /// Key rate at a single point.
    Keyrate(KeyrateArgs),
    /// Grid sweep from a TOML config.
    Sweep(SweepArgs),
    /// Threshold sweep from a TOML config with a [post_selection] block.
    Postselect(SweepArgs),
    /// Regenerate one of the frozen figure datasets.
    Reproduce {
        #[arg(value_parser = sweep::FIGURES)]
        figure: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output CSV; defaults to the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct KeyrateArgs {
    #[arg(long)]
    scenario: Scenario,
    #[arg(long)]
    protocol: Protocol,
    #[arg(long)]
    r: f64,
    /// Transmittance, fixed-channel scenario only.
    #[arg(long, conflicts_with_all = ["sigma", "sigma_sb"])]
    tau: Option<f64>,
    /// Uplink (or link-to-A) beam wander, units of beta.
    #[arg(long)]
    sigma: Option<f64>,
    /// Second link beam wander; defaults to k1 * k2 * sigma.
    #[arg(long)]
    sigma_sb: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    chi: f64,
    #[arg(long)]
    zeta_th: Option<f64>,
    #[arg(long, default_value = "quadrature")]
    estimator: String,
    #[arg(long, default_value_t = 10_000_000)]
    mc_samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.4)]
    k1: f64,
    #[arg(long, default_value_t = 0.64)]
    k2: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    w: f64,
}

fn keyrate_config(a: &KeyrateArgs) -> satqkd::Result<SweepConfig> {
    let estimator = match a.estimator.as_str() {
        "quadrature" => Estimator::Quadrature,
        "monte-carlo" | "mc" => Estimator::MonteCarlo,
        other => return Err(Error::Config(format!("unknown estimator '{other}'"))),
    };
    let one = |x: Option<f64>| x.map(|v| Grid::Values(vec![v])).unwrap_or_default();
    let cfg = SweepConfig {
        scenario: a.scenario,
        protocol: a.protocol,
        r: Grid::Values(vec![a.r]),
        sigma: one(a.sigma),
        sigma_sb: a.sigma_sb.map(|v| Grid::Values(vec![v])),
        tau: one(a.tau),
        k1: a.k1,
        k2: a.k2,
        beta: a.beta,
        w: a.w,
        chi: Grid::Values(vec![a.chi]),
        post_selection: a.zeta_th.map(|z| PostSelectionGrid {
            zeta_th: ThresholdGrid::Values(vec![z]),
            estimator,
            mc_samples: a.mc_samples,
            seed: a.seed,
            target_p_s: None,
        }),
        direct_reference: None,
        output: None,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run_sweep_command(a: &SweepArgs, postselect: bool) -> satqkd::Result<()> {
    let mut cfg = SweepConfig::from_path(&a.config)?;
    if let Some(seed) = a.seed {
        cfg = cfg.with_seed(seed);
    }
    let out = a
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| Error::Config("no output path: pass --out or set 'output'".into()))?;
    let result = if postselect {
        sweep::run_postselect_sweep(&cfg)?
    } else {
        sweep::run_sweep(&cfg)?
    };
    result.write_csv(&out)?;
    let failed = result.rows.iter().filter(|r| !r.is_ok()).count();
    println!(
        "{}",
        json!({ "rows": result.rows.len(), "failed_points": failed, "out": out })
    );
    Ok(())
}

fn run(cli: Cli) -> satqkd::Result<()> {
    match cli.command {
        Command::Channel { beta, w, sigma } => {
            let ch = BeamWanderChannel::new(beta, w, sigma * beta)?;
            println!(
                "{}",
                json!({
                    "lambda": ch.lambda(),
                    "L": ch.l_scale(),
                    "eta0": ch.eta0(),
                    "mean_loss_db": ch.mean_loss_db()?,
                })
            );
        }
        Command::Keyrate(a) => {
            let cfg = keyrate_config(&a)?;
            let row = sweep::evaluate_point(&cfg)?;
            println!("{}", serde_json::to_string(&row).expect("row serialises"));
        }
        Command::Sweep(a) => run_sweep_command(&a, false)?,
        Command::Postselect(a) => run_sweep_command(&a, true)?,
        Command::Reproduce { figure, out, seed } => {
            let written = sweep::reproduce(&figure, &out, seed)?;
            println!("{}", json!({ "figure": figure, "written": written }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default();
            eprintln!("{}", json!({ "error": "usage", "message": first }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
