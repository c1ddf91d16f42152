use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pseig::pipeline::{run_experiment, ConfigOverrides, ExperimentConfig, ExperimentId};
use pseig::Error;

/// Shift-and-invert eigensolver experiments on expanding domains.
#[derive(Debug, Parser)]
#[command(name = "pseig", version)]
struct Cli {
    /// laplace-gap | precond-compare | homog-study | chain | kronig-penney | factorization-check
    experiment: String,
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Lengths (periods) to sweep, comma separated.
    #[arg(long = "L", value_delimiter = ',')]
    lengths: Option<Vec<usize>>,
    /// Intervals per period.
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long, value_parser = ["none", "good", "optimal", "manual"])]
    shift_mode: Option<String>,
    /// Shift for `--shift-mode manual`.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "kmax")]
    k_max: Option<usize>,
    #[arg(long, value_parser = ["ip", "lopcg"])]
    solver: Option<String>,
    /// Number of eigenpairs.
    #[arg(long)]
    m: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Cli {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            lengths: self.lengths.clone(),
            cells: self.cells,
            shift_mode: self.shift_mode.clone(),
            sigma: self.sigma,
            tol: self.tol,
            k_max: self.k_max,
            solver: self.solver.clone(),
            m: self.m,
            out: self.out.clone(),
            ..ConfigOverrides::default()
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let id: ExperimentId = cli.experiment.parse()?;
    let file = ConfigOverrides::from_file(&cli.config, id).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("cannot read {}: {io}", cli.config.display())),
        other => other,
    })?;
    let cfg = ExperimentConfig::resolve(id, file.merge(cli.overrides()))?;
    let outcome = run_experiment(&cfg)?;
    if let Some(s) = &outcome.shift {
        println!("sigma = {:.10} (cell: {} nodes, {} iterations)", s.sigma, s.cell_nodes, s.cell_iterations);
    }
    for r in &outcome.runs {
        let g = r.ground();
        println!(
            "L = {:>3}  lambda1 = {:.10}  k_it = {:>3}  t = {:.3}s",
            r.length,
            g.lambda,
            g.iterations,
            r.t_eig.as_secs_f64()
        );
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
