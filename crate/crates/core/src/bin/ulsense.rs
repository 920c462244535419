use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ulsense::container::{self, CalibratedTrial, SupportReport, TrialData};
use ulsense::experiment::pipeline::{estimate_from_support, recover_supports, StageConfig};
use ulsense::experiment::{
    calibrate_trial, format_table, preset, read_rows, run_sweep, summarize, synthesize_trial, ExperimentSpec, Method,
    RunOptions,
};
use ulsense::refine::EstimateSet;
use ulsense::Result;

#[derive(Parser)]
#[command(name = "ulsense", version, about = "Uplink OFDMA sensing sweeps and pipeline stages")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a preset sweep and write the result CSV.
    Run(RunArgs),
    /// Print the summary table of a result CSV.
    Inspect { csv: PathBuf },
    /// Print a preset as TOML (a starting point for --config).
    Preset { name: String },
    /// Synthesize one trial into a container.
    Generate(GenerateArgs),
    /// Calibrate a trial container.
    Calibrate { input: PathBuf, output: PathBuf },
    /// Recover delay supports from a calibrated container.
    Support {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value = "cluster_sbl")]
        method: Method,
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Refine delays and estimate Doppler/AoA/gain from a support report.
    Estimate {
        calibrated: PathBuf,
        support: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        spec: SpecArgs,
    },
}

#[derive(Args)]
struct SpecArgs {
    #[arg(long, default_value = "fig2")]
    preset: String,
    /// TOML file merged into the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of cluster_sbl,individual_sbl.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Select the true number of paths per UE.
    #[arg(long, conflicts_with = "threshold")]
    oracle_count: bool,
    /// Select peaks by relative threshold.
    #[arg(long)]
    threshold: bool,
    #[arg(long)]
    no_offsets: bool,
    #[arg(long)]
    no_noise: bool,
    /// Snap true delays onto the coarse grid.
    #[arg(long)]
    on_grid: bool,
    /// Keep one scenario across trials.
    #[arg(long)]
    fixed_scenario: bool,
}

impl SpecArgs {
    fn build(&self) -> Result<ExperimentSpec> {
        let mut spec = preset(&self.preset)?;
        if let Some(path) = &self.config {
            spec = spec.with_override(&std::fs::read_to_string(path)?)?;
        }
        if let Some(t) = self.trials {
            spec.trials = t;
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(m) = &self.methods {
            spec.methods = m.clone();
        }
        if self.oracle_count {
            spec.options.oracle_count = true;
        }
        if self.threshold {
            spec.options.oracle_count = false;
        }
        spec.options.offsets &= !self.no_offsets;
        spec.options.noise &= !self.no_noise;
        spec.options.fixed_scenario |= self.fixed_scenario;
        spec.sparsity.on_grid |= self.on_grid;
        spec.validate()?;
        Ok(spec)
    }

    fn stage(&self) -> Result<StageConfig> {
        let spec = self.build()?;
        Ok(StageConfig {
            vi: spec.vi,
            refine: spec.refine,
            options: spec.options,
        })
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// Skip points already completed by an earlier run of the same spec.
    #[arg(long)]
    resume: bool,
    /// Exit 0 even if some trials failed.
    #[arg(long)]
    keep_going: bool,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Index into the preset's sweep points.
    #[arg(long, default_value_t = 0)]
    point: usize,
    #[arg(long, default_value_t = 0)]
    trial: u64,
    output: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Run(a) => {
            let spec = a.spec.build()?;
            let outcome = run_sweep(
                &spec,
                &a.out,
                RunOptions {
                    resume: a.resume,
                    progress: !a.quiet,
                },
            )?;
            print!("{}", format_table(&summarize(&outcome.rows)));
            if outcome.failed_trials > 0 {
                eprintln!("{} trial(s) failed", outcome.failed_trials);
                if !a.keep_going {
                    return Ok(ExitCode::FAILURE);
                }
            }
        }
        Cmd::Inspect { csv } => print!("{}", format_table(&summarize(&read_rows(&csv)?))),
        Cmd::Preset { name } => {
            let spec = preset(&name)?;
            print!(
                "{}",
                toml::to_string(&spec).map_err(|e| ulsense::Error::Config(e.to_string()))?
            );
        }
        Cmd::Generate(a) => {
            let spec = a.spec.build()?;
            let points = spec.points();
            let p = points.get(a.point).ok_or_else(|| {
                ulsense::Error::Config(format!("point {} out of range (0..{})", a.point, points.len()))
            })?;
            let data = synthesize_trial(&p.system, &p.sparsity, &spec.options, spec.seed, a.trial)?;
            container::save(&data, &a.output)?;
        }
        Cmd::Calibrate { input, output } => {
            let data: TrialData = container::load(&input)?;
            let cal = calibrate_trial(data, &ulsense::calibration::CalibrationConfig::default())?;
            eprintln!("{} boundary peak(s)", cal.report.boundary_count());
            container::save(&cal, &output)?;
        }
        Cmd::Support {
            input,
            output,
            method,
            spec,
        } => {
            let cal: CalibratedTrial = container::load(&input)?;
            let (rep, _) = recover_supports(&cal, &[method], &spec.stage()?)?.remove(0);
            container::save(&rep, &output)?;
        }
        Cmd::Estimate {
            calibrated,
            support,
            output,
            spec,
        } => {
            let cal: CalibratedTrial = container::load(&calibrated)?;
            let rep: SupportReport = container::load(&support)?;
            let est: EstimateSet = estimate_from_support(&cal, &rep, &spec.stage()?.refine)?;
            container::save(&est, &output)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
