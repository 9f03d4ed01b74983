//! Monte Carlo benchmark runner.
//!
//! ```text
//! bench --example ungm --noise-case impulsive-measurement \
//!       --filters ukf,mcuf --sigma-list 2,5 --steps 500 --runs 100 --out results
//! ```

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mcuf_core::harness::{emit_report, format_display, run_experiment, ConfigFile, FilterList, Overrides};
use mcuf_core::parallel::Execution;
use mcuf_core::Error;

#[derive(Debug, Parser)]
#[command(name = "bench", about = "Run a Monte Carlo filter comparison")]
struct Cli {
    /// Benchmark system: `ungm` or `falling-body`.
    #[arg(long)]
    example: Option<String>,
    /// Noise case, e.g. `gaussian`, `impulsive-measurement`, `impulsive-both`, `impulsive`.
    #[arg(long)]
    noise_case: Option<String>,
    /// Filters, e.g. `ukf,ekf,hukf:gamma=1.345,mcuf:sigma=2,eps=1e-6`.
    #[arg(long)]
    filters: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Default convergence threshold for iterated filters.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Kernel bandwidths used to expand a bare `mcuf` entry.
    #[arg(long, value_delimiter = ',')]
    sigma_list: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML file with the same settings; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    /// Filter-side process noise variance.
    #[arg(long)]
    filter_q: Option<f64>,
    /// Filter-side measurement noise variance.
    #[arg(long)]
    filter_r: Option<f64>,
    /// Run Monte Carlo runs on one thread.
    #[arg(long)]
    sequential: bool,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            example: self.example.clone(),
            noise_case: self.noise_case.clone(),
            filters: self.filters.clone().map(FilterList::One),
            steps: self.steps,
            runs: self.runs,
            seed: self.seed,
            epsilon: self.epsilon,
            sigma_list: self.sigma_list.clone(),
            out: self.out.clone(),
            alpha: self.alpha,
            beta: self.beta,
            phi: self.phi,
            filter_q: self.filter_q,
            filter_r: self.filter_r,
            execution: self.sequential.then_some(Execution::Sequential),
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let cfg = file.overlay(cli.overrides()).build()?;
    let out = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("missing required setting `out`".into()))?;
    let report = run_experiment(&cfg)?;
    let written = emit_report(&report, &cfg, &out)?;

    let names = cfg.example.component_names();
    println!(
        "{} / {}: {} steps x {} runs, seed {}",
        cfg.example, cfg.noise_case, cfg.steps, cfg.runs, cfg.seed
    );
    for f in &report.filters {
        let mse: Vec<String> = names
            .iter()
            .zip(&f.mse.overall)
            .map(|(n, v)| format!("{n}={}", format_display(*v)))
            .collect();
        let iters = f
            .avg_iterations
            .map(|v| format!("  iters={v:.2}"))
            .unwrap_or_default();
        println!("  {:<40} {}{}", f.spec.label(), mse.join(" "), iters);
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                Error::Io(_) => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
