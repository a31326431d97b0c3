use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pobandit_lab::checks::{self, Scale};
use pobandit_lab::recipes::{Figure, STAND_INS};
use pobandit_lab::{csvio, run_experiment, write_outputs, ScenarioSpec};

#[derive(Parser)]
#[command(name = "pobandit", version, about = "Simulations for partially observable linear contextual bandits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Output {
    /// Output directory (default: $POBANDIT_OUT, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write one SVG chart per series.
    #[arg(long)]
    svg: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Regret normalized by log^2 t for growing dimensions.
    Fig1(FigureArgs),
    /// Normalized estimation errors per arm.
    Fig2(FigureArgs),
    /// Thompson sampling against greedy.
    Fig3(FigureArgs),
    /// Classification datasets as bandits.
    Fig4(FigureArgs),
    /// Real-data protocol on a CSV file with a label column.
    Realdata(RealdataArgs),
    /// Run the verification suite.
    Verify {
        /// Smaller sizes for a fast smoke run.
        #[arg(long)]
        quick: bool,
    },
    /// Regenerate the bundled stand-in datasets.
    #[command(hide = true)]
    GenStandin {
        #[arg(long, default_value = "crates/lab/data")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct FigureArgs {
    #[command(flatten)]
    output: Output,
    /// Override the replication count.
    #[arg(long)]
    runs: Option<usize>,
    /// Override the horizon.
    #[arg(long)]
    horizon: Option<u64>,
}

#[derive(Args)]
struct RealdataArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    label: String,
    /// Observation dimension after sensing.
    #[arg(long, default_value_t = 10)]
    d_y: usize,
    #[arg(long, default_value = "logistic")]
    reward_model: String,
    #[arg(long, default_value = "ts,regression_oracle")]
    policies: String,
    #[arg(long, default_value_t = 5000)]
    horizon: u64,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Posterior dispersion; defaults to the hindsight residual scale.
    #[arg(long)]
    dispersion: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    sensing_noise: f64,
    #[arg(long, default_value_t = 0.1)]
    noise_reward: f64,
    #[arg(long, default_value = "realdata")]
    experiment: String,
    #[command(flatten)]
    output: Output,
}

fn execute(mut spec: ScenarioSpec, output: &Output) -> Result<()> {
    if let Some(out) = &output.out {
        spec.out_dir = Some(out.clone());
    }
    if let Some(w) = output.workers {
        spec.workers = w;
    }
    let report = run_experiment(&spec).with_context(|| format!("experiment {}", spec.experiment))?;
    let dir = spec.resolved_out_dir();
    let paths = write_outputs(&report, &dir, output.svg).with_context(|| format!("writing to {}", dir.display()))?;
    println!(
        "{}: {} runs x {} steps in {:.1}s",
        spec.experiment,
        spec.runs,
        spec.horizon,
        report.elapsed.as_secs_f64()
    );
    for p in paths {
        println!("  wrote {}", p.display());
    }
    Ok(())
}

fn figure(fig: Figure, args: &FigureArgs) -> Result<()> {
    for mut spec in fig.specs()? {
        if let Some(k) = args.runs {
            spec.runs = k;
        }
        if let Some(t) = args.horizon {
            spec.horizon = t;
        }
        spec.validate()?;
        execute(spec, &args.output)?;
    }
    Ok(())
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, output } => {
            let spec = ScenarioSpec::from_path(&config)?;
            execute(spec, &output)?;
        }
        Command::Fig1(a) => figure(Figure::Fig1, &a)?,
        Command::Fig2(a) => figure(Figure::Fig2, &a)?,
        Command::Fig3(a) => figure(Figure::Fig3, &a)?,
        Command::Fig4(a) => figure(Figure::Fig4, &a)?,
        Command::Realdata(a) => {
            let spec = ScenarioSpec {
                experiment: a.experiment,
                dataset: Some(a.csv),
                label: a.label,
                d_y: a.d_y,
                reward_model: a.reward_model,
                policies: a.policies,
                horizon: a.horizon,
                runs: a.runs,
                seed: a.seed,
                dispersion: a.dispersion,
                sensing_noise: a.sensing_noise,
                noise_reward: a.noise_reward,
                checkpoints: "geometric+linear:20".into(),
                scenario_per_run: false,
                ..Default::default()
            };
            spec.validate()?;
            execute(spec, &a.output)?;
        }
        Command::Verify { quick } => {
            let scale = if quick { Scale::Quick } else { Scale::Full };
            let results = checks::verify(scale);
            for r in &results {
                println!("{r}");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} of {} checks passed", results.len() - failed, results.len());
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::GenStandin { out } => {
            std::fs::create_dir_all(&out)?;
            for s in STAND_INS {
                let (features, labels) = s.generate();
                let path = out.join(format!("{}.csv", s.name));
                csvio::write_labeled_csv(&path, &features, &labels, "label")?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
