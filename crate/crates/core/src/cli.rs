//! Command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bench::io::{read_matrix, report_text};
use crate::bench::{
    ablate, e3d, export_ply, load_dataset, noise_sweep, save_dataset, save_solution,
    synth_generate, timed_solve, AlignOptions, EvalReport, SynthConfig, DEFAULT_NOISE_RATIOS,
};
use crate::error::{Error, Result};
use crate::model::ShapeMatrix;
use crate::rotation::estimate_rigid;
use crate::solver::{CUpdateForm, Mode, SolverParams};

#[derive(Debug, Parser)]
#[command(name = "grassfm", version, about = "Dense non-rigid structure from motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reconstruct a dataset directory and write a solution directory.
    Solve {
        /// Dataset directory holding `tracks` (and optionally `rotations`, `shape_gt`, `meta`).
        dataset: PathBuf,
        /// Solution directory to create.
        #[arg(long, short)]
        out: PathBuf,
        /// Estimate rotations by rigid factorization when the dataset has none.
        #[arg(long)]
        estimate_rotations: bool,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Write a synthetic union-of-subspaces dataset.
    Synth {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, default_value_t = 600)]
        points: usize,
        #[arg(long, default_value_t = 3)]
        subspaces: usize,
        #[arg(long, default_value_t = 2)]
        rank: usize,
        #[arg(long, default_value_t = 0.5)]
        deform_scale: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Repeated noisy solves over a list of noise ratios.
    NoiseSweep {
        dataset: PathBuf,
        /// Noise ratios (comma separated); noise std is ratio · max|W|.
        #[arg(long = "r", value_delimiter = ',', num_args = 1..)]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Base seed of the noise draws.
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
        /// Also write the table to this file.
        #[arg(long)]
        table: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Run the four constraint modes and tabulate e3D.
    Ablate {
        dataset: PathBuf,
        #[arg(long)]
        table: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Write one ASCII PLY per frame from a solution directory or shape file.
    ExportPly {
        /// Solution directory (its `shape` is used) or a shape matrix file.
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Print the effective solver parameters as key=value lines.
    Params {
        #[command(flatten)]
        solver: SolverFlags,
    },
}

#[derive(Debug, Args)]
struct SolverFlags {
    /// key=value parameter file; flags override it.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    ks: Option<usize>,
    #[arg(long)]
    kt: Option<usize>,
    #[arg(long)]
    ns: Option<usize>,
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda3: Option<f64>,
    #[arg(long)]
    lambda4: Option<f64>,
    /// Nuclear weight on the rearranged shape (default: automatic).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    sigma_eps: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    beta_max: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// nc, sp, tp or both.
    #[arg(long)]
    mode: Option<Mode>,
    /// left or right.
    #[arg(long)]
    c_update: Option<CUpdateForm>,
}

impl SolverFlags {
    fn resolve(&self) -> Result<SolverParams> {
        let mut p = SolverParams::default();
        if let Some(path) = &self.params {
            if !path.is_file() {
                return Err(Error::MissingFile(path.clone()));
            }
            p.apply_text(&fs::read_to_string(path)?)?;
        }
        macro_rules! take {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { p.$field = v; })*
            };
        }
        take!(ks => k_s, kt => k_t, ns => n_s, nt => n_t, lambda1 => lambda1,
              lambda2 => lambda2, lambda3 => lambda3, lambda4 => lambda4,
              sigma_eps => sigma_eps, max_iters => max_iters, seed => seed, rho => rho,
              beta0 => beta0, beta_max => beta_max, eps => eps, mode => mode,
              c_update => c_update);
        if self.gamma.is_some() {
            p.gamma = self.gamma;
        }
        p.validate()?;
        Ok(p)
    }
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Solve {
            dataset,
            out: dir,
            estimate_rotations,
            solver,
        } => {
            let params = solver.resolve()?;
            let mut ds = load_dataset(&dataset)?;
            if ds.r.is_none() {
                if !estimate_rotations {
                    return Err(Error::MissingFile(dataset.join(crate::bench::io::ROTATIONS)));
                }
                ds.r = Some(estimate_rigid(&ds.w)?);
            }
            let r = ds.r.as_ref().expect("set above");
            let (solution, runtime) = timed_solve(&ds.w, r, &params)?;
            let eval = match &ds.s_gt {
                Some(gt) => {
                    let err = e3d(&solution.s_s, gt, AlignOptions::default())?;
                    Some(EvalReport {
                        e3d: err.e3d,
                        per_frame_errors: err.per_frame,
                        runtime_seconds: runtime,
                        params_used: params.clone(),
                        noise_ratio: None,
                    })
                }
                None => None,
            };
            save_solution(&solution, eval.as_ref(), runtime, &dir)?;
            out.write_all(report_text(&solution, eval.as_ref(), runtime).as_bytes())?;
        }
        Command::Synth {
            out: dir,
            frames,
            points,
            subspaces,
            rank,
            deform_scale,
            seed,
        } => {
            let ds = synth_generate(&SynthConfig {
                frames,
                points,
                subspaces,
                rank,
                deform_scale,
                seed,
            })?;
            save_dataset(&ds, &dir)?;
            writeln!(out, "wrote {} ({frames} frames, {points} points) to {}", ds.name, dir.display())?;
        }
        Command::NoiseSweep {
            dataset,
            ratios,
            trials,
            noise_seed,
            table,
            solver,
        } => {
            let params = solver.resolve()?;
            let ds = load_dataset(&dataset)?;
            let ratios = if ratios.is_empty() {
                DEFAULT_NOISE_RATIOS.to_vec()
            } else {
                ratios
            };
            let rows = noise_sweep(&ds, &params, &ratios, trials, noise_seed)?;
            let mut text = String::from("ratio,mean_e3d,std_e3d,trials\n");
            for row in &rows {
                let per: Vec<String> = row.trials.iter().map(|e| format!("{e:e}")).collect();
                let _ = writeln!(text, "{},{:e},{:e},{}", row.ratio, row.mean, row.std, per.join(";"));
            }
            if let Some(path) = table {
                fs::write(path, &text)?;
            }
            out.write_all(text.as_bytes())?;
        }
        Command::Ablate {
            dataset,
            table,
            solver,
        } => {
            let params = solver.resolve()?;
            let ds = load_dataset(&dataset)?;
            let mut text = String::from("mode,e3d,runtime_seconds\n");
            for (mode, report) in ablate(&ds, &params)? {
                let _ = writeln!(text, "{mode},{:e},{:.3}", report.e3d, report.runtime_seconds);
            }
            if let Some(path) = table {
                fs::write(path, &text)?;
            }
            out.write_all(text.as_bytes())?;
        }
        Command::ExportPly { input, out: dir } => {
            let file = if input.is_dir() { input.join("shape") } else { input };
            let shape = ShapeMatrix::new(read_matrix(&file)?)?;
            let written = export_ply(&shape, &dir)?;
            writeln!(out, "wrote {} PLY files to {}", written.len(), dir.display())?;
        }
        Command::Params { solver } => {
            let params = solver.resolve()?;
            for (k, v) in params.to_pairs() {
                writeln!(out, "{k}={v}")?;
            }
        }
    }
    Ok(())
}

/// Exit code of a failed command: 2 for usage problems and missing inputs, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::MissingFile(_) | Error::InvalidConfig(_) => 2,
        _ => 1,
    }
}

/// Runs the CLI on `argv` (program name first), writing results to `out` and
/// diagnostics to `err`. Returns the process exit code.
pub fn run_cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// [`run_cli_with`] on the process's stdout and stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_cli_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}
