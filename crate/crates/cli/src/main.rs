use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use iampc_core::harness::{output_stem, run_method, Benchmark, Method, RunOutput, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "iampc",
    version,
    about = "Closed-loop IA-MPC / SL-MPC benchmark runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on one benchmark.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_method)]
        method: Method,
    },
    /// Run both methods on identical settings and print a table.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Print the built-in benchmarks and their settings.
    List,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_parser = parse_plant)]
    plant: Benchmark,
    /// Inject process noise at the benchmark's amplitude.
    #[arg(long)]
    noise: bool,
    /// Seed for the noise and any random reference.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "IAMPC_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// File of `key=value` settings applied after the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` setting, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Add a solve_seconds column to the CSV.
    #[arg(long)]
    timing: bool,
}

fn parse_plant(s: &str) -> Result<Benchmark, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Benchmark::ALL.iter().map(|b| b.name()).collect();
        format!("unknown plant `{s}` (expected one of {})", names.join(", "))
    })
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
        .map_err(|_| format!("unknown method `{s}` (expected ia-mpc or sl-mpc)"))
}

enum Failure {
    Usage(String),
    Run(String),
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig, Failure> {
        let mut s = ScenarioConfig::default_for(self.plant)
            .with_seed(self.seed)
            .with_noise(self.noise);
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            s.apply_text(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        }
        s.apply_overrides(&self.overrides)
            .map_err(|e| Failure::Usage(e.to_string()))?;
        if self.timing {
            s.log_timing = true;
        }
        s.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(s)
    }
}

fn execute(
    scenario: &ScenarioConfig,
    method: Method,
    out_dir: &Path,
) -> Result<RunOutput, Failure> {
    let out = run_method(scenario, method).map_err(|e| Failure::Run(format!("{method}: {e}")))?;
    fs::create_dir_all(out_dir)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", out_dir.display())))?;
    let stem = output_stem(scenario, method);
    let csv = out_dir.join(format!("{stem}.csv"));
    let metrics = out_dir.join(format!("{stem}_metrics.txt"));
    out.log
        .write_csv(&csv)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    out.metrics
        .write(
            &metrics,
            scenario.plant.name(),
            method,
            scenario.noise.enabled,
            scenario.noise.seed,
        )
        .map_err(|e| Failure::Usage(e.to_string()))?;
    println!("wrote {} and {}", csv.display(), metrics.display());
    Ok(out)
}

fn cmd_run(common: &Common, method: Method) -> Result<(), Failure> {
    let scenario = common.scenario()?;
    let out = execute(&scenario, method, &common.out_dir)?;
    print!(
        "{}",
        out.metrics.to_key_value(
            scenario.plant.name(),
            method,
            scenario.noise.enabled,
            scenario.noise.seed
        )
    );
    Ok(())
}

fn cmd_compare(common: &Common) -> Result<(), Failure> {
    let scenario = common.scenario()?;
    let mut rows = Vec::new();
    for method in Method::ALL {
        rows.push((method, execute(&scenario, method, &common.out_dir)?));
    }
    println!(
        "{:<8} {:>14} {:>14} {:>11} {:>16} {:>12}",
        "method", "rms_error", "max_violation", "violations", "mean_solve_s", "iter_limits"
    );
    for (method, out) in rows {
        let m = &out.metrics;
        println!(
            "{:<8} {:>14.6e} {:>14.3e} {:>11} {:>16.3e} {:>12}",
            method.name(),
            m.rms_tracking_error,
            m.max_constraint_violation,
            m.violation_count,
            m.mean_solve_seconds,
            m.iteration_limit_count
        );
    }
    Ok(())
}

fn cmd_list() {
    for plant in Benchmark::ALL {
        println!(
            "{:<15} {}",
            plant.name(),
            ScenarioConfig::default_for(plant).summary()
        );
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Run { common, method } => cmd_run(common, *method),
        Command::Compare { common } => cmd_compare(common),
        Command::List => {
            cmd_list();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
