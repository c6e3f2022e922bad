//! Experiment runner for the hmm-limits library.
//!
//! Every run writes a JSON report, plot-ready CSV series, and a manifest
//! into an output directory named by the content hash of the run's inputs;
//! re-running the same configuration reproduces the numeric outputs bit for
//! bit.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hmm_limits::exec::{stream_rng, StreamKind};
use hmm_limits::family::ParamFamily;
use hmm_limits::hmm::{simulate_hmm, EmissionChannel, HmmSpec};
use hmm_limits::lab::{
    psi_mixing_profile, run_chernoff, run_clt, run_lil, run_lln, variance_dichotomy,
    ExperimentConfig, FamilySpec, IncrementSource,
};
use hmm_limits::markov::{check_primitive, stationary, StochasticMatrix};
use hmm_limits::mle::{fit_mle, run_rate_experiment};
use hmm_limits::stats::{autocov, variance_curve};

use config::{canonical_json, constant_family, load_config, CliError, ModelFile};
use output::{fmt_f64, RunWriter};

#[derive(Parser)]
#[command(name = "hmml", version, about = "Hidden Markov chain limit-behavior experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Parent directory for run outputs.
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    /// Cap the worker-thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected \"lo,hi\"".into());
    }
    let lo = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
    let hi = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

/// Model and family selection shared by the experiment subcommands.
#[derive(Args, Clone)]
struct ModelArgs {
    /// Model JSON file: {"delta": [[...]], "emit": [[...]]}.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Kernel family: flip | tilted | logistic3 | affine. Without this, the
    /// model file's "delta" is used as a fixed kernel.
    #[arg(long)]
    family: Option<String>,
    /// Affine family JSON file (with --family affine).
    #[arg(long)]
    family_file: Option<PathBuf>,
    /// True parameter of the family.
    #[arg(long)]
    theta0: Option<f64>,
    /// Admissible open interval "lo,hi" for the parameter.
    #[arg(long, value_parser = parse_pair)]
    omega: Option<(f64, f64)>,
    /// Fixed second-row flip probability of the tilted family.
    #[arg(long, default_value_t = 0.2)]
    tilt_c: f64,
    /// Evaluation parameter (defaults to theta0).
    #[arg(long)]
    theta: Option<f64>,
    /// Log-likelihood derivative order: 0, 1, or 2.
    #[arg(long, default_value_t = 0)]
    order: usize,
}

impl ModelArgs {
    fn model_file(&self) -> Result<Option<ModelFile>, CliError> {
        self.model.as_deref().map(ModelFile::load).transpose()
    }

    fn family_spec(&self, model: Option<&ModelFile>) -> Result<FamilySpec, CliError> {
        match self.family.as_deref() {
            None => {
                let model = model
                    .ok_or_else(|| CliError::Config("need --family or --model with a \"delta\"".into()))?;
                Ok(constant_family(model.require_delta()?))
            }
            Some("flip") => Ok(FamilySpec::Flip {
                theta0: self.theta0.ok_or_else(|| CliError::Config("--theta0 required".into()))?,
                omega: self.omega.unwrap_or((0.05, 0.45)),
            }),
            Some("tilted") => Ok(FamilySpec::Tilted {
                c: self.tilt_c,
                theta0: self.theta0.ok_or_else(|| CliError::Config("--theta0 required".into()))?,
                omega: self.omega.unwrap_or((0.02, 0.6)),
            }),
            Some("logistic3") => Ok(FamilySpec::Logistic3 {
                theta0: self.theta0.ok_or_else(|| CliError::Config("--theta0 required".into()))?,
                omega: self.omega.unwrap_or((-1.5, 1.5)),
            }),
            Some("affine") => {
                let path = self
                    .family_file
                    .as_ref()
                    .ok_or_else(|| CliError::Config("--family affine needs --family-file".into()))?;
                let text = std::fs::read_to_string(path)?;
                let spec: hmm_limits::family::AffineFamilySpec = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                Ok(FamilySpec::Affine(spec))
            }
            Some(other) => Err(CliError::Config(format!("unknown family \"{other}\""))),
        }
    }

    fn channel_rows(&self, model: Option<&ModelFile>) -> Result<Vec<Vec<f64>>, CliError> {
        let model = model.ok_or_else(|| CliError::Config("--model with an \"emit\" field required".into()))?;
        Ok(model.require_emit()?.clone())
    }

    fn input_files(&self) -> Vec<PathBuf> {
        self.model.iter().chain(self.family_file.iter()).cloned().collect()
    }
}

/// Grid/replica/seed arguments shared by the statistical experiments.
#[derive(Args, Clone)]
struct ExpArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Full experiment config JSON; overrides the model/grid flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated sequence lengths.
    #[arg(long, value_delimiter = ',')]
    ngrid: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Autocovariance truncation lag.
    #[arg(long)]
    jmax: Option<usize>,
}

impl ExpArgs {
    fn build(&self) -> Result<ExperimentConfig, CliError> {
        if let Some(path) = &self.config {
            return load_config(path);
        }
        let model = self.model.model_file()?;
        let family = self.model.family_spec(model.as_ref())?;
        let channel = self.model.channel_rows(model.as_ref())?;
        if self.ngrid.is_empty() {
            return Err(CliError::Config("--ngrid is required (or use --config)".into()));
        }
        let mut cfg = ExperimentConfig::new(family, channel, self.ngrid.clone(), self.reps, self.seed);
        cfg.theta = self.model.theta;
        cfg.order = self.model.order;
        if let Some(j) = self.jmax {
            cfg.j_max = j;
        }
        cfg.validate().map_err(classify_build_err)?;
        Ok(cfg)
    }

    fn input_files(&self) -> Vec<PathBuf> {
        let mut files = self.model.input_files();
        files.extend(self.config.iter().cloned());
        files
    }
}

fn classify_build_err(e: hmm_limits::Error) -> CliError {
    use hmm_limits::Error::*;
    match e {
        ParamOutOfRange { .. } | InvalidArgument(_) => CliError::Config(e.to_string()),
        other => CliError::Model(other),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a model file: kernel rows, primitivity, channel positivity.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Simulate a trajectory and persist the symbol path as CSV.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the hidden state path.
        #[arg(long)]
        states: bool,
    },
    /// Monte Carlo entropy-rate estimate from -log p(Z_1^n)/n.
    Entropy {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Law-of-large-numbers deviation quantiles along the length grid.
    Lln {
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Kolmogorov-Smirnov distance to the normal along the length grid.
    Clt {
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Running-max envelope of the iterated-logarithm statistic.
    Lil {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, default_value_t = 32)]
        trajectories: usize,
    },
    /// Empirical tail probabilities P(S_n/n >= x).
    Chernoff {
        #[command(flatten)]
        exp: ExpArgs,
        /// Comma-separated tail thresholds.
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
    },
    /// Exact cylinder mixing profile of the observed process.
    Mixing {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',')]
        ngrid: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        cylinder_len: usize,
    },
    /// Conditional and derivative forgetting gaps per history window.
    Forgetting {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 20)]
        max_window: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Long-run variance: autocovariance assembly vs partial-sum ratios.
    Variance {
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Variance-growth dichotomy: bounded vs linear E[S_n^2].
    Dichotomy {
        #[command(flatten)]
        exp: ExpArgs,
        /// Increment source: model | coboundary.
        #[arg(long, default_value = "model")]
        construction: String,
        /// Per-symbol values of g for the coboundary construction.
        #[arg(long, value_delimiter = ',')]
        g: Vec<f64>,
    },
    /// Single maximum-likelihood fit.
    MleFit {
        #[command(flatten)]
        model: ModelArgs,
        /// Symbol CSV (one integer per line); simulated when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        simulate_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Compact search interval "lo,hi" (default: omega shrunk by 5%).
        #[arg(long, value_parser = parse_pair)]
        omega0: Option<(f64, f64)>,
    },
    /// Convergence-rate experiment for the maximum-likelihood estimator.
    MleRate {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
        #[arg(long, value_parser = parse_pair)]
        omega0: Option<(f64, f64)>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        hmm_limits::exec::configure_threads(threads);
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn default_omega0(fam: &ParamFamily) -> (f64, f64) {
    let (lo, hi) = fam.omega();
    let margin = 0.05 * (hi - lo);
    (lo + margin, hi - margin)
}

fn paths_of(files: &[PathBuf]) -> Vec<&Path> {
    files.iter().map(|p| p.as_path()).collect()
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { model } => cmd_validate(&cli.out_dir, &model),
        Command::Simulate { model, n, seed, states } => cmd_simulate(&cli.out_dir, &model, n, seed, states),
        Command::Entropy { model, n, reps, seed } => cmd_entropy(&cli.out_dir, &model, n, reps, seed),
        Command::Lln { exp } => cmd_lln(&cli.out_dir, &exp),
        Command::Clt { exp } => cmd_clt(&cli.out_dir, &exp),
        Command::Lil { exp, trajectories } => cmd_lil(&cli.out_dir, &exp, trajectories),
        Command::Chernoff { exp, x } => cmd_chernoff(&cli.out_dir, &exp, x),
        Command::Mixing { model, ngrid, cylinder_len } => cmd_mixing(&cli.out_dir, &model, &ngrid, cylinder_len),
        Command::Forgetting { model, max_window, samples, seed } => {
            cmd_forgetting(&cli.out_dir, &model, max_window, samples, seed)
        }
        Command::Variance { exp } => cmd_variance(&cli.out_dir, &exp),
        Command::Dichotomy { exp, construction, g } => cmd_dichotomy(&cli.out_dir, &exp, &construction, g),
        Command::MleFit { model, data, simulate_n, seed, omega0 } => {
            cmd_mle_fit(&cli.out_dir, &model, data, simulate_n, seed, omega0)
        }
        Command::MleRate { exp, x, omega0 } => cmd_mle_rate(&cli.out_dir, &exp, x, omega0),
    }
}

fn build_hmm_from_file(model: &ModelFile) -> Result<HmmSpec, CliError> {
    let kernel = StochasticMatrix::new(model.require_delta()?).map_err(CliError::Model)?;
    let channel = EmissionChannel::new(model.require_emit()?).map_err(CliError::Model)?;
    HmmSpec::build(kernel, channel).map_err(CliError::Model)
}

fn cmd_validate(out_dir: &Path, model_path: &Path) -> Result<(), CliError> {
    let model = ModelFile::load(model_path)?;
    let kernel = StochasticMatrix::new(model.require_delta()?).map_err(CliError::Model)?;
    let spectral = check_primitive(&kernel).map_err(CliError::Model)?;
    let pi = stationary(&kernel).map_err(CliError::Model)?;
    let channel_state = match &model.emit {
        Some(rows) => {
            let channel = EmissionChannel::new(rows).map_err(CliError::Model)?;
            HmmSpec::build(kernel.clone(), channel).map_err(CliError::Model)?;
            "valid"
        }
        None => "absent",
    };

    #[derive(serde::Serialize)]
    struct ValidationReport<'a> {
        n_states: usize,
        primitivity_exponent: usize,
        lambda2_modulus: f64,
        stationary: &'a [f64],
        stationarity_residual: f64,
        channel: &'a str,
    }
    let report = ValidationReport {
        n_states: kernel.n_states(),
        primitivity_exponent: spectral.primitivity_exponent,
        lambda2_modulus: spectral.lambda2_modulus,
        stationary: pi.probs(),
        stationarity_residual: pi.stationarity_residual(&kernel),
        channel: channel_state,
    };
    let config = canonical_json(&model);
    let mut w = RunWriter::create(out_dir, "validate", config, 0, &[model_path])?;
    w.write_report(&report)?;
    w.summarize("n_states", report.n_states.to_string());
    w.summarize("primitivity_exponent", report.primitivity_exponent.to_string());
    w.summarize_f64("lambda2_modulus", report.lambda2_modulus);
    w.summarize_f64("stationarity_residual", report.stationarity_residual);
    w.summarize("channel", report.channel.to_string());
    w.finish()?;
    Ok(())
}

fn cmd_simulate(out_dir: &Path, args: &ModelArgs, n: usize, seed: u64, states: bool) -> Result<(), CliError> {
    let model = args
        .model_file()?
        .ok_or_else(|| CliError::Config("--model is required".into()))?;
    let h = build_hmm_from_file(&model)?;
    let mut rng = stream_rng(seed, StreamKind::Trajectory, 0);
    let (state_path, symbol_path) = simulate_hmm(&h, n, &mut rng);

    #[derive(serde::Serialize)]
    struct SimConfig<'a> {
        model: &'a ModelFile,
        n: usize,
        seed: u64,
        states: bool,
    }
    let config = canonical_json(&SimConfig { model: &model, n, seed, states });
    let mut w = RunWriter::create(out_dir, "simulate", config, seed, &paths_of(&args.input_files()))?;

    let rows: Vec<Vec<String>> = symbol_path.iter().map(|z| vec![z.to_string()]).collect();
    w.write_csv("path.csv", &[], &rows)?;
    if states {
        let rows: Vec<Vec<String>> = state_path.iter().map(|s| vec![s.to_string()]).collect();
        w.write_csv("states.csv", &[], &rows)?;
    }
    let mut counts = vec![0usize; h.n_symbols()];
    for &z in &symbol_path {
        counts[z] += 1;
    }
    #[derive(serde::Serialize)]
    struct SimReport {
        n: usize,
        symbol_counts: Vec<usize>,
    }
    w.write_report(&SimReport { n, symbol_counts: counts.clone() })?;
    w.summarize("n", n.to_string());
    w.summarize("symbol_counts", format!("{counts:?}"));
    w.finish()?;
    Ok(())
}

fn cmd_entropy(out_dir: &Path, args: &ModelArgs, n: usize, reps: usize, seed: u64) -> Result<(), CliError> {
    let model = args
        .model_file()?
        .ok_or_else(|| CliError::Config("--model is required".into()))?;
    let family = args.family_spec(Some(&model))?;
    let channel_rows = args.channel_rows(Some(&model))?;
    let fam = family.build().map_err(CliError::Model)?;
    let channel = EmissionChannel::new(&channel_rows).map_err(CliError::Model)?;
    let est = hmm_limits::deriv::estimate_l(&fam, &channel, fam.theta0(), 0, n, reps, seed)
        .map_err(config::experiment_err)?;

    // closed-form entropy rate of the kernel itself, as a reference point
    let kernel = fam.kernel_at(fam.theta0()).map_err(CliError::Model)?;
    let pi = stationary(&kernel).map_err(CliError::Model)?;
    let markov_rate = kernel.entropy_rate(&pi);

    #[derive(serde::Serialize)]
    struct EntropyReport {
        estimate: f64,
        stderr: f64,
        ci3_lo: f64,
        ci3_hi: f64,
        n: usize,
        reps: usize,
        kernel_entropy_rate: f64,
    }
    let report = EntropyReport {
        estimate: -est.value,
        stderr: est.stderr,
        ci3_lo: -est.value - 3.0 * est.stderr,
        ci3_hi: -est.value + 3.0 * est.stderr,
        n,
        reps,
        kernel_entropy_rate: markov_rate,
    };
    #[derive(serde::Serialize)]
    struct EntropyConfig<'a> {
        family: &'a FamilySpec,
        channel: &'a [Vec<f64>],
        n: usize,
        reps: usize,
        seed: u64,
    }
    let config = canonical_json(&EntropyConfig { family: &family, channel: &channel_rows, n, reps, seed });
    let mut w = RunWriter::create(out_dir, "entropy", config, seed, &paths_of(&args.input_files()))?;
    w.write_report(&report)?;
    w.summarize_f64("entropy_estimate", report.estimate);
    w.summarize_f64("stderr", report.stderr);
    w.summarize_f64("ci3_lo", report.ci3_lo);
    w.summarize_f64("ci3_hi", report.ci3_hi);
    w.summarize_f64("kernel_entropy_rate", report.kernel_entropy_rate);
    w.finish()?;
    Ok(())
}

fn cmd_lln(out_dir: &Path, exp: &ExpArgs) -> Result<(), CliError> {
    let cfg = exp.build()?;
    let report = run_lln(&cfg).map_err(config::experiment_err)?;
    let mut w = RunWriter::create(out_dir, "lln", canonical_json(&cfg), cfg.seed, &paths_of(&exp.input_files()))?;
    w.write_report(&report)?;
    let rows: Vec<Vec<String>> = report
        .per_n
        .iter()
        .map(|p| vec![p.n.to_string(), fmt_f64(p.median_dev), fmt_f64(p.p95_dev)])
        .collect();
    w.write_csv("deviations.csv", &["n", "median_dev", "p95_dev"], &rows)?;
    w.summarize_f64("l_hat", report.l_hat.value);
    w.summarize("monotone_decrease", report.monotone_decrease.to_string());
    w.summarize_f64("median_slope", report.fit_exponent.estimate);
    w.finish()?;
    Ok(())
}

fn cmd_clt(out_dir: &Path, exp: &ExpArgs) -> Result<(), CliError> {
    let cfg = exp.build()?;
    let report = run_clt(&cfg).map_err(config::experiment_err)?;
    let mut w = RunWriter::create(out_dir, "clt", canonical_json(&cfg), cfg.seed, &paths_of(&exp.input_files()))?;
    w.write_report(&report)?;
    let rows: Vec<Vec<String>> = report
        .per_n
        .iter()
        .map(|p| vec![p.n.to_string(), fmt_f64(p.ks), p.samples.to_string()])
        .collect();
    w.write_csv("ks.csv", &["n", "ks", "samples"], &rows)?;
    w.summarize_f64("sigma", report.sigma);
    for p in &report.per_n {
        w.summarize(&format!("ks@{}", p.n), fmt_f64(p.ks));
    }
    w.summarize_f64("exponent", report.exponent.estimate);
    w.summarize(
        "exponent_band",
        format!("[{}, {}]", fmt_f64(report.exponent.lo), fmt_f64(report.exponent.hi)),
    );
    w.summarize("rate_consistent", report.rate_consistent.to_string());
    w.finish()?;
    Ok(())
}

fn cmd_lil(out_dir: &Path, exp: &ExpArgs, trajectories: usize) -> Result<(), CliError> {
    let mut cfg = exp.build()?;
    cfg.trajectories = trajectories;
    let report = run_lil(&cfg).map_err(config::experiment_err)?;
    let mut w = RunWriter::create(out_dir, "lil", canonical_json(&cfg), cfg.seed, &paths_of(&exp.input_files()))?;
    w.write_report(&report)?;
    let mut rows = Vec::new();
    for (t, traj) in report.trajectories.iter().enumerate() {
        for (&n, &r) in report.checkpoints.iter().zip(&traj.r_path) {
            rows.push(vec![t.to_string(), n.to_string(), fmt_f64(r)]);
        }
    }
    w.write_csv("lil.csv", &["trajectory", "n", "r"], &rows)?;
    w.summarize_f64("sigma2", report.sigma2);
    w.summarize("in_band", format!("{}/{}", report.in_band, report.trajectories.len()));
    w.summarize("within_envelope", report.within_envelope.to_string());
    w.finish()?;
    Ok(())
}

fn cmd_chernoff(out_dir: &Path, exp: &ExpArgs, x: Vec<f64>) -> Result<(), CliError> {
    let mut cfg = exp.build()?;
    cfg.x_list = x;
    let report = run_chernoff(&cfg).map_err(config::experiment_err)?;
    let mut w =
        RunWriter::create(out_dir, "chernoff", canonical_json(&cfg), cfg.seed, &paths_of(&exp.input_files()))?;
    w.write_report(&report)?;
    let rows: Vec<Vec<String>> = report
        .points
        .iter()
        .map(|p| {
            vec![
                p.n.to_string(),
                fmt_f64(p.x),
                fmt_f64(p.p_hat),
                fmt_f64(p.stderr),
                fmt_f64(p.upper95),
                p.reps.to_string(),
            ]
        })
        .collect();
    w.write_csv("tails.csv", &["n", "x", "p_hat", "stderr", "upper95", "reps"], &rows)?;
    for (i, &xv) in cfg.x_list.iter().enumerate() {
        w.summarize(&format!("decreasing@x={}", fmt_f64(xv)), report.decreasing[i].to_string());
        if let Some(fit) = &report.fits[i] {
            w.summarize(&format!("gamma@x={}", fmt_f64(xv)), fmt_f64(fit.gamma));
        }
    }
    w.finish()?;
    Ok(())
}

fn cmd_mixing(out_dir: &Path, model_path: &Path, ngrid: &[usize], cylinder_len: usize) -> Result<(), CliError> {
    let model = ModelFile::load(model_path)?;
    let h = build_hmm_from_file(&model)?;
    let grid: Vec<usize> = if ngrid.is_empty() { (1..=8).collect() } else { ngrid.to_vec() };
    let report = psi_mixing_profile(&h, &grid, cylinder_len).map_err(config::experiment_err)?;

    #[derive(serde::Serialize)]
    struct MixingConfig<'a> {
        model: &'a ModelFile,
        n_grid: &'a [usize],
        cylinder_len: usize,
    }
    let config = canonical_json(&MixingConfig { model: &model, n_grid: &grid, cylinder_len });
    let mut w = RunWriter::create(out_dir, "mixing", config, 0, &[model_path])?;
    w.write_report(&report)?;
    let rows: Vec<Vec<String>> = report
        .n_grid
        .iter()
        .zip(&report.psi)
        .map(|(&n, &p)| vec![n.to_string(), fmt_f64(p)])
        .collect();
    w.write_csv("psi.csv", &["n", "psi"], &rows)?;
    w.summarize("strictly_decreasing", report.strictly_decreasing.to_string());
    w.summarize_f64("rate", report.rate);
    w.summarize_f64("lambda2", report.lambda2);
    w.finish()?;
    Ok(())
}

fn cmd_forgetting(
    out_dir: &Path,
    args: &ModelArgs,
    max_window: usize,
    samples: usize,
    seed: u64,
) -> Result<(), CliError> {
    let model = args.model_file()?;
    let family = args.family_spec(model.as_ref())?;
    let channel_rows = args.channel_rows(model.as_ref())?;
    let fam = family.build().map_err(CliError::Model)?;
    let channel = EmissionChannel::new(&channel_rows).map_err(CliError::Model)?;
    let theta = args.theta.unwrap_or(fam.theta0());
    let fit = hmm_limits::deriv::deriv_forgetting_gap(&fam, &channel, theta, args.order, max_window, samples, seed)
        .map_err(config::experiment_err)?;

    #[derive(serde::Serialize)]
    struct ForgettingConfig<'a> {
        family: &'a FamilySpec,
        channel: &'a [Vec<f64>],
        theta: f64,
        order: usize,
        max_window: usize,
        samples: usize,
        seed: u64,
    }
    let config = canonical_json(&ForgettingConfig {
        family: &family,
        channel: &channel_rows,
        theta,
        order: args.order,
        max_window,
        samples,
        seed,
    });
    let mut w = RunWriter::create(out_dir, "forgetting", config, seed, &paths_of(&args.input_files()))?;
    w.write_report(&fit)?;
    let rows: Vec<Vec<String>> = fit
        .windows
        .iter()
        .zip(&fit.gaps)
        .map(|(&win, &g)| vec![win.to_string(), fmt_f64(g)])
        .collect();
    w.write_csv("gaps.csv", &["window", "gap"], &rows)?;
    w.summarize("degenerate", fit.degenerate.to_string());
    w.summarize_f64("rho", fit.rho);
    w.finish()?;
    Ok(())
}

fn cmd_variance(out_dir: &Path, exp: &ExpArgs) -> Result<(), CliError> {
    let cfg = exp.build()?;
    let ctx = cfg.ctx().map_err(classify_build_err)?;
    let n_ac = 20 * cfg.j_max.max(100);
    let ac = autocov(&ctx, cfg.j_max, n_ac, cfg.reps, cfg.seed).map_err(config::experiment_err)?;
    let curve = variance_curve(&ctx, &cfg.n_grid, cfg.reps, cfg.seed).map_err(config::experiment_err)?;

    #[derive(serde::Serialize)]
    struct VarianceReport<'a> {
        autocov: &'a hmm_limits::stats::AutocovSeries,
        curve: &'a hmm_limits::stats::VarianceCurve,
        agreement: f64,
    }
    let last_ratio = curve.points.last().map(|p| p.ratio).unwrap_or(f64::NAN);
    let agreement = (ac.sigma2 - last_ratio).abs() / last_ratio.abs().max(1e-12);
    let report = VarianceReport { autocov: &ac, curve: &curve, agreement };
    let mut w =
        RunWriter::create(out_dir, "variance", canonical_json(&cfg), cfg.seed, &paths_of(&exp.input_files()))?;
    w.write_report(&report)?;
    let rows: Vec<Vec<String>> = ac
        .a
        .iter()
        .zip(&ac.a_stderr)
        .enumerate()
        .map(|(j, (&a, &se))| vec![j.to_string(), fmt_f64(a), fmt_f64(se)])
        .collect();
    w.write_csv("autocov.csv", &["j", "estimate", "stderr"], &rows)?;
    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .map(|p| vec![p.n.to_string(), fmt_f64(p.ratio), fmt_f64(p.stderr)])
        .collect();
    w.write_csv("variance_curve.csv", &["n", "estimate", "stderr"], &rows)?;
    w.summarize_f64("sigma2_autocov", ac.sigma2);
    w.summarize_f64("var_ratio_last", last_ratio);
    w.summarize_f64("relative_gap", agreement);
    w.finish()?;
    Ok(())
}

fn cmd_dichotomy(out_dir: &Path, exp: &ExpArgs, construction: &str, g: Vec<f64>) -> Result<(), CliError> {
    let cfg = exp.build()?;
    let source = match construction {
        "model" => IncrementSource::Model,
        "coboundary" => {
            let g = if g.is_empty() { vec![0.0, 1.0] } else { g };
            IncrementSource::Coboundary { g }
        }
        other => return Err(CliError::Config(format!("unknown construction \"{other}\""))),
    };
    let report = variance_dichotomy(&cfg, &source).map_err(config::experiment_err)?;

    #[derive(serde::Serialize)]
    struct DichotomyConfig<'a> {
        experiment: &'a ExperimentConfig,
        source: &'a IncrementSource,
    }
    let config = canonical_json(&DichotomyConfig { experiment: &cfg, source: &source });
    let mut w = RunWriter::create(out_dir, "dichotomy", config, cfg.seed, &paths_of(&exp.input_files()))?;
    w.write_report(&report)?;
    let rows: Vec<Vec<String>> = report
        .points
        .iter()
        .map(|(n, m, se)| vec![n.to_string(), fmt_f64(*m), fmt_f64(*se)])
        .collect();
    w.write_csv("es2.csv", &["n", "es2", "stderr"], &rows)?;
    w.summarize("verdict", format!("{:?}", report.verdict));
    w.summarize_f64("loglog_slope", report.loglog_slope);
    w.summarize_f64("level", report.level);
    w.finish()?;
    Ok(())
}

fn read_symbol_csv(path: &Path) -> Result<Vec<usize>, CliError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<usize>()
                .map_err(|e| CliError::Config(format!("{}: bad symbol \"{l}\": {e}", path.display())))
        })
        .collect()
}

fn cmd_mle_fit(
    out_dir: &Path,
    args: &ModelArgs,
    data: Option<PathBuf>,
    simulate_n: usize,
    seed: u64,
    omega0: Option<(f64, f64)>,
) -> Result<(), CliError> {
    let model = args.model_file()?;
    let family = args.family_spec(model.as_ref())?;
    let channel_rows = args.channel_rows(model.as_ref())?;
    let fam = family.build().map_err(CliError::Model)?;
    let channel = EmissionChannel::new(&channel_rows).map_err(CliError::Model)?;
    let omega0 = omega0.unwrap_or_else(|| default_omega0(&fam));

    let symbols = match &data {
        Some(path) => read_symbol_csv(path)?,
        None => {
            let h = hmm_limits::deriv::model_at_theta0(&fam, &channel).map_err(CliError::Model)?;
            let mut rng = stream_rng(seed, StreamKind::Trajectory, 0);
            simulate_hmm(&h, simulate_n, &mut rng).1
        }
    };
    let result = fit_mle(&fam, &channel, &symbols, omega0).map_err(config::experiment_err)?;

    #[derive(serde::Serialize)]
    struct FitConfig<'a> {
        family: &'a FamilySpec,
        channel: &'a [Vec<f64>],
        omega0: (f64, f64),
        data: Option<String>,
        simulate_n: usize,
        seed: u64,
    }
    let config = canonical_json(&FitConfig {
        family: &family,
        channel: &channel_rows,
        omega0,
        data: data.as_ref().map(|p| p.display().to_string()),
        simulate_n,
        seed,
    });
    let mut files = args.input_files();
    files.extend(data.iter().cloned());
    let mut w = RunWriter::create(out_dir, "mle-fit", config, seed, &paths_of(&files))?;
    w.write_report(&result)?;
    w.summarize_f64("theta_hat", result.theta_hat);
    w.summarize_f64("loglik", result.loglik_at_hat);
    w.summarize("converged", result.converged.to_string());
    w.summarize("boundary", result.boundary.to_string());
    w.finish()?;
    Ok(())
}

fn cmd_mle_rate(out_dir: &Path, exp: &ExpArgs, x: Vec<f64>, omega0: Option<(f64, f64)>) -> Result<(), CliError> {
    let cfg = exp.build()?;
    let fam = cfg.family.build().map_err(CliError::Model)?;
    let omega0 = omega0.unwrap_or_else(|| default_omega0(&fam));
    let report = run_rate_experiment(&cfg, &x, omega0).map_err(config::experiment_err)?;

    #[derive(serde::Serialize)]
    struct RateConfig<'a> {
        experiment: &'a ExperimentConfig,
        x_list: &'a [f64],
        omega0: (f64, f64),
    }
    let config = canonical_json(&RateConfig { experiment: &cfg, x_list: &x, omega0 });
    let mut w = RunWriter::create(out_dir, "mle-rate", config, cfg.seed, &paths_of(&exp.input_files()))?;
    w.write_report(&report)?;
    let rows: Vec<Vec<String>> = report
        .points
        .iter()
        .map(|p| {
            vec![
                p.n.to_string(),
                fmt_f64(p.x),
                fmt_f64(p.p_hat),
                fmt_f64(p.stderr),
                p.reps.to_string(),
                fmt_f64(p.excluded_fraction),
            ]
        })
        .collect();
    w.write_csv(
        "rate.csv",
        &["n", "x", "p_hat", "stderr", "reps", "excluded_fraction"],
        &rows,
    )?;
    w.summarize_f64("l2_hat", report.l2_hat.value);
    w.summarize_f64("median_slope", report.median_slope.estimate);
    for (i, &xv) in x.iter().enumerate() {
        w.summarize(&format!("decreasing@x={}", fmt_f64(xv)), report.decreasing[i].to_string());
    }
    w.finish()?;
    Ok(())
}
