use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use lgfem::advect::{decompose, CharMap};
use lgfem::fe_space::{interpolate_velocity_p1, FeSpace};
use lgfem::harness::{
    gaussian_hill_residual, run_single, run_sweep, verify_forcing, DtChoice, DtRule, Example, SweepPlan,
    SweepRow, CSV_HEADER,
};
use lgfem::schemes::{number_of_steps, SchemeConfig, SchemeRegistry};
use lgfem::Error;

/// Lagrange-Galerkin convection-diffusion solver.
#[derive(Parser)]
#[command(name = "lgfem", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and print a CSV row.
    Run(RunArgs),
    /// Run a convergence sweep over doubling N and print one row per N.
    Sweep(SweepArgs),
    /// Check the analytic data of the built-in examples by finite differences.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_parser = parse_example)]
    example: Example,
    #[arg(long, default_value = "gslg")]
    scheme: String,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    degree: u8,
    /// Fixed time increment.
    #[arg(long, conflicts_with = "dt_rule", required_unless_present = "dt_rule")]
    dt: Option<f64>,
    /// Time increment `c h^p` with the example's constant.
    #[arg(long, value_parser = parse_dt_rule)]
    dt_rule: Option<DtRule>,
    /// Diffusion coefficient; defaults to the example's value.
    #[arg(long)]
    nu: Option<f64>,
    /// Bound on dt * |u_h|_{1,inf}.
    #[arg(long, default_value_t = lgfem::advect::DEFAULT_D1)]
    d1: f64,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn dt_choice(&self) -> DtChoice {
        match (self.dt, self.dt_rule) {
            (Some(dt), _) => DtChoice::Fixed(dt),
            (None, Some(rule)) => DtChoice::Rule(rule),
            (None, None) => unreachable!("clap requires one of --dt/--dt-rule"),
        }
    }

    fn nu(&self) -> f64 {
        self.nu.unwrap_or(self.example.default_nu())
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: usize,
    /// Write the mesh in text form.
    #[arg(long)]
    dump_mesh: Option<PathBuf>,
    /// Write the first step's clipped pieces, one line per piece.
    #[arg(long)]
    dump_decomp: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    /// Number of resolutions run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1e-2)]
    nu: f64,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn parse_example(s: &str) -> Result<Example, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_dt_rule(s: &str) -> Result<DtRule, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn write_rows(out: Option<&PathBuf>, rows: &[SweepRow]) -> anyhow::Result<()> {
    let mut w: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv())?;
    }
    w.flush()?;
    Ok(())
}

fn config_for(common: &Common, n: usize) -> SchemeConfig {
    let mut c = SchemeConfig::new(
        &common.scheme,
        common.degree as usize,
        n,
        common.dt_choice().dt(common.example, n),
    );
    c.d1 = common.d1;
    c
}

fn check_scheme(name: &str) -> lgfem::Result<()> {
    SchemeRegistry::with_builtins().create(name).map(|_| ())
}

fn dump_decomposition(args: &RunArgs, path: &PathBuf) -> anyhow::Result<()> {
    let c = &args.common;
    let problem = c.example.problem(c.nu());
    let mesh = Arc::new(problem.domain.mesh(args.n)?);
    let p1 = FeSpace::build(mesh, 1)?;
    let dt = c.dt_choice().dt(c.example, args.n);
    let velocity = &problem.velocity;
    let u_h = interpolate_velocity_p1(&p1, |p| velocity(p, dt))?;
    let map = CharMap::new(u_h, dt, c.d1)?;
    let d = decompose(&p1.mesh, &map)?;
    d.write_text(BufWriter::new(File::create(path)?))?;
    Ok(())
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let c = &args.common;
    check_scheme(&c.scheme)?;
    let config = config_for(c, args.n);
    let t_final = c.example.t_final();
    if !(config.dt > 0.0 && number_of_steps(t_final, config.dt) >= 1) {
        return Err(Error::InvalidArgument(format!("dt = {} must lie in (0, {t_final}]", config.dt)).into());
    }
    if let Some(path) = &args.dump_mesh {
        let mesh = c.example.domain().mesh(args.n)?;
        mesh.write_text(BufWriter::new(File::create(path)?))?;
    }
    if let Some(path) = &args.dump_decomp {
        dump_decomposition(args, path)?;
    }
    let row = run_single(c.example, &config, c.nu())?;
    write_rows(c.out.as_ref(), &[row])
}

fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let c = &args.common;
    check_scheme(&c.scheme)?;
    let mut plan = SweepPlan::new(c.example, &c.scheme, c.degree as usize, &args.n_list, c.dt_choice())
        .with_nu(c.nu());
    plan.d1 = c.d1;
    let rows = run_sweep(&plan, args.jobs.max(1))?;
    write_rows(c.out.as_ref(), &rows)
}

fn cmd_verify(args: &VerifyArgs) -> anyhow::Result<bool> {
    let forcing = verify_forcing(args.nu, args.samples, args.seed);
    let hill = gaussian_hill_residual(1e-5, args.samples, args.seed);
    println!("sinsin forcing, nu = {:e}: max discrepancy {forcing:.3e}", args.nu);
    println!("gauss-hill residual, nu = 1e-5: max {hill:.3e}");
    Ok(forcing < 1e-5 && hill < 1e-4)
}

/// Configuration mistakes exit with 2, like usage errors.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::InvalidArgument(_)) | Some(Error::TimestepViolation { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => match cmd_verify(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
