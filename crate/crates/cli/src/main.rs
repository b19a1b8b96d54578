//! `vibnet`: batch front end for the vibrational-control pipeline.
//!
//! ```text
//! vibnet analyze    net.json                 -> report.json
//! vibnet plan       net.json delta.json      -> plan.json
//! vibnet stabilize  net.json                 -> plan.json
//! vibnet synthesize net.json plan.json       -> vib.json
//! vibnet average    net.json vib.json        -> avg.json
//! vibnet simulate   net.json vib.json        -> traj.csv, traj_avg.csv, plot.gp
//! vibnet verify     net.json vib.json        -> verdict.json
//! vibnet sweep      net.json vib.json --epsilon 0.1 0.05 0.025
//!                                            -> traj_eps*.csv, error_curve.csv, plot.gp
//! ```
//!
//! Exit codes: 0 success, 2 bad input, 3 unrealizable or nothing found,
//! 4 numerical failure, 5 verification failed, 1 anything else.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vibnet::avg::{self, NumericOptions};
use vibnet::nalgebra::DVector;
use vibnet::perturb::{self, SearchOptions};
use vibnet::sim::{self, ApproxErrorCurve, SimOptions, Trajectory, VerdictOptions};
use vibnet::{modanalysis, Error, NetworkSystem, PerturbationMatrix, StabilizationPlan, VibrationPlan};

#[derive(Parser, Debug)]
#[command(name = "vibnet", version, about = "Vibrational edge modification and stabilization of linear networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify every edge and pair by how it can be modified.
    Analyze {
        net: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Split a requested perturbation into realizable clusters.
    Plan {
        net: PathBuf,
        delta: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Search for a realizable perturbation that makes the averaged network Hurwitz.
    Stabilize {
        net: PathBuf,
        /// Maximum number of spectral evaluations.
        #[arg(long, default_value_t = 20_000)]
        budget: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Turn a plan into vibrations.
    Synthesize {
        net: PathBuf,
        plan: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Averaged network and its difference from the original.
    Average {
        net: PathBuf,
        vib: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Simulate the vibrated and the averaged system.
    Simulate {
        net: PathBuf,
        vib: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Stability verdict; exits 5 unless the averaged network is Hurwitz and the simulation decays.
    Verify {
        net: PathBuf,
        vib: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Approximation error of the averaged system against `ε`.
    Sweep {
        net: PathBuf,
        vib: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Options shared by all subcommands (not all of them use every one).
#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Timescale ratio; several values only for `sweep`.
    #[arg(long, num_args = 1.., value_parser = positive)]
    epsilon: Vec<f64>,
    /// Simulated slow time.
    #[arg(long, value_parser = positive, default_value_t = 10.0)]
    horizon: f64,
    /// Convergence tolerance of the numeric average.
    #[arg(long, value_parser = positive, default_value_t = 1e-8)]
    tol: f64,
    /// Longest averaging window of the numeric average.
    #[arg(long, value_parser = positive, default_value_t = 1e5)]
    tmax: f64,
    /// Worker threads for sweeps.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 1)]
    jobs: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s} is not a positive number"))
    }
}

const DEFAULT_EPSILON: f64 = 0.04;

#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse(_) | Error::Validation(_) | Error::InvalidPermutation(_) | Error::EdgeNotFound(_) | Error::Io(_) => {
                2
            }
            Error::NotADag
            | Error::NotModifiable { .. }
            | Error::NotSingleEdge(_)
            | Error::Unrealizable(_)
            | Error::DriverConflict(_)
            | Error::WrongDirection { .. }
            | Error::NotDirect(_)
            | Error::NotDirectlyRemovable(_)
            | Error::NoRealSolution(_)
            | Error::InvalidWitness(_)
            | Error::EdgeAlreadyExists(_)
            | Error::NegativeRadicand(_)
            | Error::ZeroAnchorDelta(_)
            | Error::AssumptionViolated { .. }
            | Error::NotFound(_) => 3,
            Error::NotNilpotent
            | Error::NonConvergent { .. }
            | Error::SingularFundamental { .. }
            | Error::NoConvergence
            | Error::NonFinite { .. } => 4,
            _ => 1,
        };
        Failure { code, msg: e.to_string() }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Analyze { net, run } => {
            let sys = load_net(&net)?;
            let report = modanalysis::build_report(&sys);
            write(&run.out, "report.json", &report.to_json_string())
        }
        Command::Plan { net, delta, run } => {
            let sys = load_net(&net)?;
            let delta = PerturbationMatrix::load(&delta, sys.n())?;
            let plan = perturb::plan_for(&sys, &delta)?;
            println!("{} cluster(s), certificate {:.6}", plan.clusters.len(), plan.certificate);
            write(&run.out, "plan.json", &plan.to_json_string())
        }
        Command::Stabilize { net, budget, run } => {
            let sys = load_net(&net)?;
            let plan = perturb::search_stabilizing_delta(&sys, &SearchOptions { budget, ..SearchOptions::default() })?;
            println!("{:?}: {} cluster(s), certificate {:.6}", plan.method, plan.clusters.len(), plan.certificate);
            write(&run.out, "plan.json", &plan.to_json_string())
        }
        Command::Synthesize { net, plan, run } => {
            let sys = load_net(&net)?;
            let plan = StabilizationPlan::load(&plan)?;
            if plan.n != sys.n() {
                return Err(Error::Validation(format!("plan is for {} nodes, network has {}", plan.n, sys.n())).into());
            }
            let vib = plan.vibrations(&sys, single_epsilon(&run)?.unwrap_or(DEFAULT_EPSILON))?;
            write(&run.out, "vib.json", &vib.to_json_string())
        }
        Command::Average { net, vib, run } => {
            let (sys, vib) = load_pair(&net, &vib, &run)?;
            let res = avg::averaged(&sys, &vib, &numeric(&run))?;
            for d in res.side_effects() {
                println!("side effect on {}: {} -> {}", d.edge, d.before, d.after);
            }
            write(&run.out, "avg.json", &res.to_json_string())
        }
        Command::Simulate { net, vib, run } => {
            let (sys, vib) = load_pair(&net, &vib, &run)?;
            let a_bar = avg::averaged(&sys, &vib, &numeric(&run))?.a_bar;
            let x0 = DVector::from_element(sys.n(), 1.0);
            let opts = SimOptions::default();
            let full = sim::simulate_full(&sys, &vib, &x0, run.horizon, &opts)?;
            let averaged = sim::simulate_averaged(&a_bar, &x0, run.horizon, &opts)?;
            if let Some(t) = full.blow_up {
                println!("state blew up at t = {t}");
            }
            write(&run.out, "traj.csv", &full.to_csv())?;
            write(&run.out, "traj_avg.csv", &averaged.to_csv())?;
            write(&run.out, "plot.gp", &trajectory_script(&full, "traj.csv", "traj_avg.csv"))
        }
        Command::Verify { net, vib, run } => {
            let (sys, vib) = load_pair(&net, &vib, &run)?;
            let opts = VerdictOptions { horizon: run.horizon, numeric: numeric(&run), ..VerdictOptions::default() };
            let v = sim::verdict(&sys, &vib, &opts)?;
            write(&run.out, "verdict.json", &v.to_json_string())?;
            println!(
                "abscissa {:.6}, |x(T)|/|x(0)| = {:.6}: {}",
                v.abscissa_a_bar,
                v.final_over_initial_norm,
                if v.passed() { "pass" } else { "fail" }
            );
            if v.passed() {
                Ok(())
            } else {
                Err(Failure { code: 5, msg: "verification failed".into() })
            }
        }
        Command::Sweep { net, vib, run } => sweep(&net, &vib, &run),
    }
}

fn sweep(net: &Path, vib: &Path, run: &RunArgs) -> Outcome {
    let sys = load_net(net)?;
    let plan = VibrationPlan::load(vib)?;
    plan.validate_for(&sys)?;
    if run.epsilon.is_empty() {
        return Err(Error::Validation("sweep needs at least one --epsilon".into()).into());
    }
    let a_bar = avg::averaged(&sys, &plan, &numeric(run))?.a_bar;
    let x0 = DVector::from_element(sys.n(), 1.0);
    let opts = SimOptions::default();

    let one = |eps: f64| -> Result<(f64, Trajectory), Error> {
        let p = VibrationPlan { epsilon: eps, ..plan.clone() };
        let err = sim::approximation_error(&sys, &p, &a_bar, &x0, run.horizon, &opts)?;
        let traj = sim::simulate_full(&sys, &p, &x0, run.horizon, &opts)?;
        Ok((err, traj))
    };

    // Static partition over at most `jobs` workers; results go back in input order.
    let jobs = (run.jobs as usize).min(run.epsilon.len());
    let mut results: Vec<Option<Result<(f64, Trajectory), Error>>> = (0..run.epsilon.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunk = run.epsilon.len().div_ceil(jobs);
        let handles: Vec<_> = run
            .epsilon
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(|&e| one(e)).collect::<Vec<_>>()))
            .collect();
        let mut k = 0;
        for h in handles {
            for r in h.join().expect("sweep worker panicked") {
                results[k] = Some(r);
                k += 1;
            }
        }
    });

    let mut points = Vec::new();
    let mut files = Vec::new();
    for (eps, r) in run.epsilon.iter().zip(results) {
        let (err, traj) = r.expect("every epsilon ran")?;
        let name = format!("traj_eps{eps}.csv");
        write(&run.out, &name, &traj.to_csv())?;
        files.push(name);
        points.push((*eps, err));
    }
    let curve = ApproxErrorCurve { horizon: run.horizon, points };
    write(&run.out, "error_curve.csv", &curve.to_csv())?;
    write(&run.out, "plot.gp", &sweep_script(&files))?;
    if !curve.is_strictly_decreasing() {
        println!("note: error does not decrease strictly with epsilon");
    }
    Ok(())
}

fn load_net(path: &Path) -> Result<NetworkSystem, Failure> {
    NetworkSystem::load(path).map_err(|e| with_path(e, path))
}

fn load_pair(net: &Path, vib: &Path, run: &RunArgs) -> Result<(NetworkSystem, VibrationPlan), Failure> {
    let sys = load_net(net)?;
    let mut plan = VibrationPlan::load(vib).map_err(|e| with_path(e, vib))?;
    if let Some(eps) = single_epsilon(run)? {
        plan.epsilon = eps;
    }
    plan.validate_for(&sys)?;
    Ok((sys, plan))
}

fn with_path(e: Error, path: &Path) -> Failure {
    let f = Failure::from(e);
    Failure { msg: format!("{}: {}", path.display(), f.msg), ..f }
}

fn single_epsilon(run: &RunArgs) -> Result<Option<f64>, Failure> {
    match run.epsilon.as_slice() {
        [] => Ok(None),
        [e] => Ok(Some(*e)),
        _ => Err(Error::Validation("several --epsilon values are only accepted by sweep".into()).into()),
    }
}

fn numeric(run: &RunArgs) -> NumericOptions {
    NumericOptions { tol: run.tol, t_max: run.tmax, ..NumericOptions::default() }
}

fn write(dir: &Path, name: &str, contents: &str) -> Outcome {
    std::fs::create_dir_all(dir).map_err(|e| Failure { code: 1, msg: format!("{}: {e}", dir.display()) })?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Failure { code: 1, msg: format!("{}: {e}", path.display()) })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn trajectory_script(full: &Trajectory, full_csv: &str, avg_csv: &str) -> String {
    let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\nset xlabel 't'\nplot \\\n");
    let n = full.dim();
    for k in 0..n {
        let _ = writeln!(s, "  '{full_csv}' using 1:{c} with lines lw 1, \\", c = k + 2);
    }
    for k in 0..n {
        let sep = if k + 1 < n { ", \\" } else { "" };
        let _ = writeln!(s, "  '{avg_csv}' using 1:{c} with lines dt 2 title 'avg x{k1}'{sep}", c = k + 2, k1 = k + 1);
    }
    s.push_str("pause -1\n");
    s
}

fn sweep_script(files: &[String]) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset key autotitle columnhead\nset logscale xy\nset xlabel 'epsilon'\nset ylabel 'sup error'\n\
         plot 'error_curve.csv' using 1:2 with linespoints\npause -1\n\nunset logscale\nset xlabel 't'\nset ylabel 'x1'\nplot \\\n",
    );
    for (k, f) in files.iter().enumerate() {
        let sep = if k + 1 < files.len() { ", \\" } else { "" };
        let _ = writeln!(s, "  '{f}' using 1:2 with lines title '{f}'{sep}");
    }
    s.push_str("pause -1\n");
    s
}
