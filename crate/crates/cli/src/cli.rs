//! Argument parsing and subcommand dispatch.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use sector_dmrg::dmrg::{load_checkpoint, Dmrg, Phase};
use sector_dmrg::model::build_model;
use sector_dmrg::DmrgError;

use crate::bench::{bench_kernel, bench_sweep, DEFAULT_REPETITIONS};
use crate::check::run_all;
use crate::config::{resolve, RunArgs, DEFAULT_SEED, WORKERS_ENV};
use crate::fit::fit_power_law;
use crate::records::{phase_label, read_csv, write_csv, write_sweep_csv};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sector-dmrg", version, about = "Sector-sparse two-site DMRG")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ground state of a model; prints the final energy.
    Solve(RunArgs),
    /// Times fused and one-product-per-member accumulation kernels.
    BenchKernel {
        /// Square operand sizes.
        #[arg(long, value_delimiter = ',', default_values_t = [8usize, 16, 32, 64])]
        sizes: Vec<usize>,
        /// Members per accumulation.
        #[arg(long, default_value_t = 8)]
        p: usize,
        #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
        reps: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Times one sweep per bond dimension.
    BenchSweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [32usize, 64, 128, 256])]
        dims: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
        reps: usize,
    },
    /// Power-law exponents per label of a benchmark CSV.
    Fit {
        input: PathBuf,
        /// Only fit this label.
        #[arg(long)]
        label: Option<String>,
    },
    /// Runs the oracle suites on small instances.
    Check {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

/// Config and input problems exit with 2, numerical failures with 3.
fn exit_code(e: &DmrgError) -> i32 {
    match e {
        DmrgError::Model(_) | DmrgError::Checkpoint(_) | DmrgError::Schedule(_) | DmrgError::EmptyTarget(_) => {
            EXIT_CONFIG
        }
        _ => EXIT_NUMERICAL,
    }
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn fail(&mut self, code: i32, msg: impl std::fmt::Display) -> i32 {
        let _ = writeln!(self.err, "error: {msg}");
        code
    }
}

/// Runs the program on `args` (including the program name) and returns the
/// process exit code.
pub fn cli_run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut io = Io { out, err };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(io.err, "{text}") } else { write!(io.out, "{text}") };
            return code;
        }
    };
    let env_workers = std::env::var(WORKERS_ENV).ok();
    match cli.command {
        Command::Solve(args) => solve(&args, env_workers.as_deref(), &mut io),
        Command::BenchKernel { sizes, p, reps, seed, out } => {
            if sizes.contains(&0) || p == 0 {
                return io.fail(EXIT_CONFIG, "sizes and p must be positive");
            }
            let recs = bench_kernel(&sizes, p, reps, seed);
            emit_bench(&recs, out, &mut io)
        }
        Command::BenchSweep { run, dims, reps } => {
            let cfg = match resolve(&run, env_workers.as_deref()) {
                Ok(c) => c,
                Err(e) => return io.fail(EXIT_CONFIG, e),
            };
            if dims.is_empty() || dims.contains(&0) {
                return io.fail(EXIT_CONFIG, "bond dimensions must be positive");
            }
            let model = match build_model(&cfg.model) {
                Ok(m) => m,
                Err(e) => return io.fail(EXIT_CONFIG, e),
            };
            match bench_sweep(&model, &dims, reps, &cfg.dmrg_config()) {
                Ok(recs) => emit_bench(&recs, cfg.out, &mut io),
                Err(e) => io.fail(exit_code(&e), e),
            }
        }
        Command::Fit { input, label } => fit(&input, label.as_deref(), &mut io),
        Command::Check { seed } => {
            let reports = run_all(seed);
            for r in &reports {
                let _ = writeln!(io.out, "{}", r.summary());
                for f in r.failures.iter().take(5) {
                    let _ = writeln!(io.err, "  {}: {f}", r.name);
                }
            }
            if reports.iter().all(|r| r.passed()) { EXIT_OK } else { EXIT_NUMERICAL }
        }
    }
}

fn emit_bench(recs: &[crate::records::BenchRecord], out: Option<PathBuf>, io: &mut Io<'_>) -> i32 {
    for r in recs {
        let _ = writeln!(io.out, "{} {} {:.6e} s {:.3} GFLOPS", r.label, r.size, r.seconds, r.gflops());
    }
    if let Some(path) = out {
        if let Err(e) = write_csv(recs, &path) {
            return io.fail(EXIT_CONFIG, e);
        }
    }
    EXIT_OK
}

fn solve(args: &RunArgs, env_workers: Option<&str>, io: &mut Io<'_>) -> i32 {
    let cfg = match resolve(args, env_workers) {
        Ok(c) => c,
        Err(e) => return io.fail(EXIT_CONFIG, e),
    };
    let model = match build_model(&cfg.model) {
        Ok(m) => m,
        Err(e) => return io.fail(EXIT_CONFIG, e),
    };
    let dmrg = match Dmrg::new(model, cfg.dmrg_config()) {
        Ok(d) => d,
        Err(e) => return io.fail(exit_code(&e), e),
    };
    let resume = match (&cfg.checkpoint, cfg.resume) {
        (Some(path), true) => match load_checkpoint(path) {
            Ok(s) => Some(s),
            Err(e) => return io.fail(EXIT_CONFIG, e),
        },
        _ => None,
    };
    let result = match dmrg.run(&cfg.schedule, resume) {
        Ok(r) => r,
        Err(e) => return io.fail(exit_code(&e), e),
    };
    let mut phases: Vec<(Phase, f64, f64)> = Vec::new();
    for r in &result.records {
        match phases.last_mut() {
            Some((p, e, tr)) if *p == r.phase => {
                *e = r.energy;
                *tr = tr.max(r.truncation_error);
            }
            _ => phases.push((r.phase, r.energy, r.truncation_error)),
        }
    }
    for (p, e, tr) in phases {
        let _ = writeln!(io.err, "{}: energy {e} max truncation {tr:.3e}", phase_label(p));
    }
    if let Some(path) = &cfg.out {
        if let Err(e) = write_sweep_csv(&result.records, path) {
            return io.fail(EXIT_CONFIG, e);
        }
    }
    let Some(energy) = result.final_energy() else {
        let _ = writeln!(io.out, "no sweeps requested");
        return EXIT_OK;
    };
    let _ = writeln!(io.out, "final_energy {energy}");
    let final_phase = Phase::Sweep(result.state.sweeps_done.saturating_sub(1));
    let unconverged = result.records.iter().filter(|r| r.phase == final_phase && !r.converged).count();
    if !energy.is_finite() || unconverged > 0 {
        return io.fail(EXIT_NUMERICAL, format!("{unconverged} eigensolver calls of the final sweep did not converge"));
    }
    EXIT_OK
}

fn fit(input: &std::path::Path, label: Option<&str>, io: &mut Io<'_>) -> i32 {
    let recs = match read_csv(input) {
        Ok(r) => r,
        Err(e) => return io.fail(EXIT_CONFIG, e),
    };
    let mut groups: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in recs.iter().filter(|r| label.is_none_or(|l| l == r.label)) {
        groups.entry(&r.label).or_default().push((r.size as f64, r.seconds));
    }
    if groups.is_empty() {
        return io.fail(EXIT_CONFIG, "no matching records");
    }
    for (name, points) in groups {
        match fit_power_law(&points) {
            Ok(f) => {
                let _ = writeln!(
                    io.out,
                    "{name} exponent {:.6} prefactor {:.6e} r2 {:.6}",
                    f.exponent, f.prefactor, f.r_squared
                );
            }
            Err(e) => return io.fail(EXIT_CONFIG, format!("{name}: {e}")),
        }
    }
    EXIT_OK
}
