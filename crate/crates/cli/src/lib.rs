//! Subcommands of the `tumorcal` binary.
//!
//! Each command loads a [`RunConfig`], does one job and leaves its artifacts
//! in the output directory. Summaries go to stdout as `key=value` lines.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use tumorcal::io::{
    write_field, write_history_csv, write_mask, write_observations, write_trajectory, BundleInfo,
};
use tumorcal::{
    fd_gradient_check, fd_hessian_check, hessian_symmetry_check, newton_cg, HessianOptions,
    ReducedObjective, RunConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "tumorcal",
    version,
    about = "Calibrate a reaction-diffusion tumor growth model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the forward model at the true parameters and dump the trajectory.
    Forward(CommonArgs),
    /// Generate a synthetic observation bundle.
    Synth(CommonArgs),
    /// Calibrate D and G with inexact Newton-CG.
    Calibrate(CommonArgs),
    /// Finite-difference check of the gradient.
    VerifyGrad(CommonArgs),
    /// Finite-difference and symmetry checks of the Hessian action.
    VerifyHess(CommonArgs),
}

impl Command {
    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Forward(a)
            | Command::Synth(a)
            | Command::Calibrate(a)
            | Command::VerifyGrad(a)
            | Command::VerifyHess(a) => a,
        }
    }
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for noise and check directions; overrides `seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Raised when calibration stops without meeting the gradient tolerance.
#[derive(Debug, thiserror::Error)]
#[error("calibration stopped without converging: {0}")]
pub struct NotConverged(pub String);

struct Job {
    cfg: RunConfig,
    out: PathBuf,
    seed: u64,
}

impl Job {
    fn new(args: &CommonArgs) -> Result<Self> {
        let cfg = RunConfig::load(&args.config)
            .with_context(|| format!("loading {}", args.config.display()))?;
        let out = args.out.clone().unwrap_or_else(|| cfg.output_path());
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let seed = args.seed.unwrap_or(cfg.seed);
        // record what actually ran
        cfg.write(&out.join("effective.cfg"))?;
        Ok(Job { cfg, out, seed })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out.join(name);
        Ok(BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        ))
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Forward(a) => cmd_forward(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::VerifyGrad(a) => cmd_verify_grad(a),
        Command::VerifyHess(a) => cmd_verify_hess(a),
    }
}

pub fn cmd_forward(args: &CommonArgs) -> Result<()> {
    let job = Job::new(args)?;
    let ex = job.cfg.build()?;
    let traj = tumorcal::solve_forward(&ex.truth, &ex.u0, &ex.time_grid)?;
    let dir = job.out.join("forward");
    let steps: Vec<usize> = (0..=ex.time_grid.steps()).collect();
    let manifest = write_trajectory(&dir, "u", &traj, &steps)?;
    write_mask(&job.out.join("mask.txt"), &ex.grid)?;
    write_field(&job.out.join("d_true.txt"), &ex.truth.d)?;
    write_field(&job.out.join("g_true.txt"), &ex.truth.g)?;
    let fin = traj.final_state();
    println!("manifest={}", manifest.display());
    println!("snapshots={}", steps.len());
    println!("final_mass={:e}", fin.integral());
    println!("final_max={:e}", fin.max());
    Ok(())
}

pub fn cmd_synth(args: &CommonArgs) -> Result<()> {
    let job = Job::new(args)?;
    let ex = job.cfg.build()?;
    let obs = ex.synthesize(&job.cfg, job.seed)?;
    let dir = job.out.join("observations");
    let info = BundleInfo {
        noise_std: job.cfg.noise_std,
        seed: job.seed,
    };
    let manifest = write_observations(&dir, &obs, info)?;
    write_field(&job.out.join("d_true.txt"), &ex.truth.d)?;
    write_field(&job.out.join("g_true.txt"), &ex.truth.g)?;
    println!("manifest={}", manifest.display());
    println!("observations={}", obs.observations().len());
    Ok(())
}

pub fn cmd_calibrate(args: &CommonArgs) -> Result<()> {
    let job = Job::new(args)?;
    let ex = job.cfg.build()?;
    let problem = ex.problem(ex.observations(&job.cfg, job.seed)?)?;
    let result = newton_cg(&problem, &ex.initial, &job.cfg.optimizer)?;

    let mut hist = job.create("history.csv")?;
    write_history_csv(&mut hist, &result.history)?;
    hist.flush()?;
    write_field(&job.out.join("d_final.txt"), &result.params_final.d)?;
    write_field(&job.out.join("g_final.txt"), &result.params_final.g)?;
    let summary = format!(
        "converged = {}\nreason = {}\niterations = {}\ninitial_grad_norm = {:e}\nfinal_grad_norm = {:e}\nfinal_cost = {:e}\n",
        result.converged,
        result.reason,
        result.iterations,
        result.initial_grad_norm,
        result.final_grad_norm,
        result.history.last().map_or(f64::NAN, |h| h.cost),
    );
    fs::write(job.out.join("summary.txt"), &summary)?;
    print!("{}", summary.replace(" = ", "="));
    if !result.converged {
        return Err(NotConverged(result.reason.to_string()).into());
    }
    Ok(())
}

/// Problem and base point shared by the verification commands.
fn verification_job(args: &CommonArgs) -> Result<(Job, tumorcal::Problem, tumorcal::FieldPair)> {
    let job = Job::new(args)?;
    let ex = job.cfg.build()?;
    let problem = ex.problem(ex.observations(&job.cfg, job.seed)?)?;
    let x0 = job.cfg.optimizer.mode.from_params(&ex.initial)?;
    Ok((job, problem, x0))
}

fn objective<'a>(job: &Job, problem: &'a tumorcal::Problem) -> ReducedObjective<'a> {
    ReducedObjective::new(problem, job.cfg.optimizer.mode).with_hessian(HessianOptions {
        gauss_newton: job.cfg.optimizer.gauss_newton,
        ..Default::default()
    })
}

fn write_report(path: &Path, rep: &tumorcal::FdCheckReport) -> Result<()> {
    let mut f =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    rep.write_csv(&mut f)?;
    f.flush()?;
    Ok(())
}

pub fn cmd_verify_grad(args: &CommonArgs) -> Result<()> {
    let (job, problem, x0) = verification_job(args)?;
    let rep = fd_gradient_check(
        &objective(&job, &problem),
        &x0,
        &job.cfg.fd_epsilons,
        job.seed,
    )?;
    let path = job.out.join("verify_grad.csv");
    write_report(&path, &rep)?;
    println!("csv={}", path.display());
    println!("slope={:e}", rep.slope);
    Ok(())
}

pub fn cmd_verify_hess(args: &CommonArgs) -> Result<()> {
    let (job, problem, x0) = verification_job(args)?;
    let obj = objective(&job, &problem);
    let rep = fd_hessian_check(&obj, &x0, &job.cfg.fd_epsilons, job.seed)?;
    let path = job.out.join("verify_hess.csv");
    write_report(&path, &rep)?;
    let asym = hessian_symmetry_check(&obj, &x0, job.cfg.symmetry_pairs, job.seed)?;
    let sym_path = job.out.join("symmetry.csv");
    fs::write(
        &sym_path,
        format!("pairs,asymmetry\n{},{asym:e}\n", job.cfg.symmetry_pairs),
    )?;
    println!("csv={}", path.display());
    println!("slope={:e}", rep.slope);
    println!("symmetry_csv={}", sym_path.display());
    println!("asymmetry={asym:e}");
    Ok(())
}

/// Machine-readable tag for a failure: the library error kind when there is
/// one in the chain.
pub fn failure_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<tumorcal::Error>() {
            return e.code();
        }
        if cause.is::<NotConverged>() {
            return "not_converged";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "other"
}

/// One-line failure report for stderr.
pub fn failure_line(err: &anyhow::Error) -> String {
    let chain: Vec<String> = err.chain().map(|c| c.to_string()).collect();
    format!(
        "tumorcal: failure kind={} detail={:?}",
        failure_kind(err),
        chain.join(": ")
    )
}
