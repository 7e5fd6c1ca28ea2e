use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wms_core::cli::{cmd_calibrate, cmd_demo, cmd_run, load_config, CliError};
use wms_core::config::RunConfig;

#[derive(Parser)]
#[command(name = "wms", version, about = "Dynamic watermarking experiments for LTI systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate seeded runs and write traces, reports and a summary.
    Run(Overrides),
    /// Calibrate the NLL threshold and cache it in tau.csv.
    Calibrate(Overrides),
    /// Run the four-case vehicle experiment.
    Demo {
        /// Demo name (only `vehicle`).
        name: String,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// double-integrator | vehicle | vehicle-wind | custom
    #[arg(long)]
    scenario: Option<String>,
    /// none | replay | vehicle-preset | custom
    #[arg(long)]
    attack: Option<String>,
    /// Use the wind-augmented detector model (implies a windy world).
    #[arg(long)]
    detector_wind: bool,
    #[arg(long)]
    horizon: Option<usize>,
    /// Comma-separated list of seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Window length (0 = 20 (m+q)).
    #[arg(long)]
    ell: Option<usize>,
    #[arg(long)]
    alpha_fa: Option<f64>,
    #[arg(long)]
    calibration_runs: Option<usize>,
    #[arg(long)]
    calibration_seed: Option<u64>,
    /// Scalar watermark variance.
    #[arg(long)]
    watermark_var: Option<f64>,
    /// Skip writing trace_<seed>.csv files.
    #[arg(long)]
    no_traces: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self) -> Result<RunConfig, CliError> {
        let mut c = load_config(self.config.as_ref())?;
        if let Some(s) = &self.scenario {
            c.scenario.name = s.clone();
        }
        if let Some(a) = &self.attack {
            c.attack.preset = a.clone();
        }
        if self.detector_wind {
            c.detector.wind = true;
        }
        if let Some(h) = self.horizon {
            c.sim.horizon = h;
        }
        if let Some(s) = &self.seeds {
            c.sim.seeds = s.clone();
        }
        if let Some(l) = self.ell {
            c.detector.ell = l;
        }
        if let Some(a) = self.alpha_fa {
            c.detector.alpha_fa = a;
        }
        if let Some(r) = self.calibration_runs {
            c.detector.calibration_runs = r;
        }
        if let Some(s) = self.calibration_seed {
            c.detector.calibration_seed = s;
        }
        if let Some(v) = self.watermark_var {
            c.watermark.variance = Some(wms_core::config::CovarianceSpec::Scalar(v));
        }
        if self.no_traces {
            c.sim.write_traces = false;
        }
        if let Some(o) = &self.out {
            c.sim.output_dir = o.clone();
        }
        Ok(c)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(o) => o.apply().and_then(|c| cmd_run(&c)).map(|rows| {
            println!("seed,final_d1,final_d2,reject_rate,tau");
            for r in rows {
                println!(
                    "{},{:e},{:e},{:.4},{:e}",
                    r.seed,
                    r.report.final_d1(),
                    r.report.final_d2(),
                    r.report.reject_rate(),
                    r.report.tau
                );
            }
        }),
        Command::Calibrate(o) => o.apply().and_then(|c| cmd_calibrate(&c)).map(|r| {
            println!("tau = {:e} (ell {}, alpha_fa {}, runs {})", r.tau, r.ell, r.alpha_fa, r.runs);
        }),
        Command::Demo { name, overrides } => overrides
            .apply()
            .and_then(|c| cmd_demo(name, &c))
            .map(|rows| {
                println!("case,seed,reject_rate,final_d1,final_d2");
                for r in rows {
                    println!(
                        "{},{},{:.4},{:e},{:e}",
                        r.case,
                        r.seed,
                        r.report.reject_rate(),
                        r.report.final_d1(),
                        r.report.final_d2()
                    );
                }
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
