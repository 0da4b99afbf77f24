use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rdmest::harness::{self, channel_diagnostics, run_campaign, simulate_run, ScenarioConfig};
use rdmest::Error;

#[derive(Parser)]
#[command(name = "rdmest", version, about = "Filtering with randomly delayed and dropped measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo campaign and write RMSE tables and a summary.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the simulated channel against its closed-form delay law.
    ChannelStats {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// Variance of the scalar noise used for the whiteness check.
        #[arg(long, default_value_t = 1.0)]
        noise_var: f64,
    },
    /// Run a few Monte Carlo runs, optionally exporting per-step traces.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Divergence { .. } => 3,
        _ => 1,
    }
}

fn output_dir(flag: Option<PathBuf>, config: &ScenarioConfig, fallback: &str) -> PathBuf {
    flag.or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from(fallback))
}

fn benchmark(config_path: &Path, out: Option<PathBuf>) -> rdmest::Result<()> {
    let config = ScenarioConfig::from_path(config_path)?;
    let dir = output_dir(out, &config, "out");
    let result = run_campaign(&config)?;
    let run0 = simulate_run(&config, 0)?;
    harness::write_campaign(&dir, &result, Some(&run0))?;
    println!("{:<12} {:>6} {:>14} {:>10}", "filter", "runs", "component", "rmse");
    for f in &result.filters {
        for c in &f.rmse {
            println!("{:<12} {:>6} {:>14} {:>10.4}", f.filter.name(), f.successful_runs, c.component, c.time_averaged);
        }
        if let Some(t) = f.relative_time {
            println!("{:<12} relative time {t:.3}", f.filter.name());
        }
        for fail in &f.failures {
            eprintln!("{}: run {} diverged: {}", f.filter.name(), fail.run, fail.error);
        }
    }
    for p in &result.gaf_dropout_policies {
        let parts: Vec<String> = p.rmse.iter().map(|(c, v)| format!("{c} {v:.4}")).collect();
        println!("gaf with dropout policy {:?}: {}", p.policy, parts.join(", "));
    }
    if let Some(d) = &result.delay_rmse {
        if let (Some(map), Some(mean)) = (d.time_averaged_map, d.time_averaged_mean) {
            println!("smc delay rmse: map {map:.4}, mean {mean:.4}");
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn channel_stats(config_path: &Path, samples: usize, noise_var: f64) -> rdmest::Result<()> {
    let config = ScenarioConfig::from_path(config_path)?;
    if samples < 10_000 {
        return Err(Error::Config("--samples must be at least 10000".into()));
    }
    let report = channel_diagnostics(&config.profile()?, samples, noise_var, config.seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    let verdict = |ok: bool| if ok { "pass" } else { "FAIL" };
    eprintln!("delay histogram: p = {:.4} ({})", report.p_value, verdict(report.histogram_pass));
    eprintln!("dropout rate: z = {:.3} ({})", report.dropout_z, verdict(report.dropout_pass));
    eprintln!("whiteness: {}", verdict(report.whiteness_pass));
    Ok(())
}

fn simulate(config_path: &Path, runs: usize, trace: bool, out: Option<PathBuf>) -> rdmest::Result<()> {
    let config = ScenarioConfig::from_path(config_path)?;
    if runs == 0 {
        return Err(Error::Config("--runs must be at least 1".into()));
    }
    let dir = output_dir(out, &config, "trace");
    let model = config.build_model()?;
    let components = model.error_components();
    for r in 0..runs {
        let run = simulate_run(&config, r)?;
        let truth = vec![run.truth.states[1..].to_vec()];
        for (kind, out) in &run.filters {
            match out {
                Ok(o) => {
                    let est = vec![o.trace.estimates()];
                    let parts: Vec<String> = components
                        .iter()
                        .map(|c| {
                            let e = harness::rmse(&truth, &est, c).expect("shapes match");
                            format!("{} {:.4}", c.name, harness::time_average(&e, 0..e.len()))
                        })
                        .collect();
                    println!("run {r} {kind}: {}", parts.join(", "));
                }
                Err(e) => println!("run {r} {kind}: diverged ({e})"),
            }
        }
        if trace {
            for f in harness::write_run_traces(&dir, &run, config.channel.max_delay)? {
                println!("wrote {}", dir.join(f).display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Benchmark { config, out } => benchmark(&config, out),
        Command::ChannelStats { config, samples, noise_var } => channel_stats(&config, samples, noise_var),
        Command::Simulate { config, runs, trace, out } => simulate(&config, runs, trace, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
