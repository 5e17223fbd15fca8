use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use ndarray::Array1;

use drk_core::datagen::{CopulaFamily, CopulaSpec, GaussianMixtureSpec, Marginal};
use drk_core::diagnostics::swap_property_suite;
use drk_core::drp::{apply_drp, DrpConfig};
use drk_core::experiment::{
    default_alpha_grid, run_ablation, run_experiment, sweep_alpha, sweep_beta_scale, sweep_rho, synthesize_dataset,
    DatasetSpec, ExperimentSpec, KnockoffSource, ResponseSpec, SweepPoint, BETA_SCALE_GRID, RHO_GRID,
};
use drk_core::filter::{run_filter, RidgeConfig};
use drk_core::model::{KnockoffNet, KnockoffNetConfig};
use drk_core::report::{emit_comparison, emit_report, sweep_entries, text_summary, ReportFormat, ALL_FORMATS};
use drk_core::rng::{self, stream};
use drk_core::{io, trainer};

#[derive(Parser)]
#[command(name = "drk", version, about = "Deep knockoffs with dependency regularization")]
struct Cli {
    /// TOML experiment configuration. Flags override individual keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetKind {
    Mixture,
    Gaussian,
    Clayton,
    Joe,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResponseKind {
    Linear,
    Tanh,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceKind {
    Trained,
    Oracle,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    name: Option<String>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    p: Option<usize>,
    #[arg(long, global = true, value_enum)]
    dataset: Option<DatasetKind>,
    /// Mixture weight preset 1..=10.
    #[arg(long, global = true)]
    mixture_preset: Option<usize>,
    #[arg(long, global = true)]
    rho_base: Option<f64>,
    /// Exponential marginals for copula data (default uniform).
    #[arg(long, global = true)]
    exponential_marginal: bool,
    #[arg(long, global = true)]
    scale_divisor: Option<f64>,
    #[arg(long, global = true)]
    num_nonnull: Option<usize>,
    #[arg(long, global = true, value_enum)]
    response: Option<ResponseKind>,
    #[arg(long, global = true)]
    tanh_covariates: Option<usize>,
    #[arg(long, global = true)]
    no_standardize: bool,
    #[arg(long, global = true)]
    net_preset: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    lr_generator: Option<f64>,
    #[arg(long, global = true)]
    lr_swapper: Option<f64>,
    #[arg(long, global = true)]
    num_swappers: Option<usize>,
    #[arg(long, global = true)]
    lambda_rex: Option<f64>,
    #[arg(long, global = true)]
    lambda_decor: Option<f64>,
    #[arg(long, global = true)]
    lambda_dep: Option<f64>,
    #[arg(long, global = true)]
    patience: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Use the vanishing schedule alpha = c / sqrt(n).
    #[arg(long, global = true)]
    alpha_c: Option<f64>,
    #[arg(long, global = true)]
    no_drp: bool,
    #[arg(long, global = true)]
    disable_rex: bool,
    #[arg(long, global = true)]
    disable_swapper_decor: bool,
    #[arg(long, global = true)]
    q: Option<f64>,
    #[arg(long, global = true)]
    repeats: Option<usize>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    knockoff_source: Option<SourceKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Write one synthetic dataset (design, response, ground truth).
    GenerateData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        repeat: usize,
    },
    /// Train a knockoff generator on a design matrix.
    Train {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the training log (JSON).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate knockoffs from a trained checkpoint.
    Knockoff {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the knockoff filter on a design, its knockoff and a response.
    Select {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        knockoff: PathBuf,
        #[arg(long)]
        y: PathBuf,
        /// One 0/1 flag per column; enables FDP and power scoring.
        #[arg(long)]
        nonnull: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Swap-property metrics of a knockoff.
    Diagnose {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        knockoff: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Repeated-seed experiment with a report.
    Experiment {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        formats: Option<Vec<String>>,
    },
    /// Remove one component at a time and compare.
    Ablation {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// FDR and power over the perturbation weight.
    SweepAlpha {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// FDR and power over the coefficient scale divisor.
    SweepBetaScale {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// FDR and power over the mixture correlation base.
    SweepRho {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
}

fn apply_overrides(mut s: ExperimentSpec, o: &Overrides) -> Result<ExperimentSpec> {
    macro_rules! set {
        ($field:expr, $opt:expr) => {
            if let Some(v) = $opt.clone() {
                $field = v;
            }
        };
    }
    set!(s.name, o.name);
    set!(s.n, o.n);
    set!(s.p, o.p);
    let marginal = if o.exponential_marginal { Marginal::Exponential } else { Marginal::Uniform };
    match o.dataset {
        Some(DatasetKind::Mixture) => s.dataset = DatasetSpec::Mixture(GaussianMixtureSpec::default()),
        Some(DatasetKind::Gaussian) => s.dataset = DatasetSpec::Gaussian,
        Some(DatasetKind::Clayton) => s.dataset = DatasetSpec::Copula(CopulaSpec::new(CopulaFamily::Clayton, marginal)),
        Some(DatasetKind::Joe) => s.dataset = DatasetSpec::Copula(CopulaSpec::new(CopulaFamily::Joe, marginal)),
        None => {
            if let DatasetSpec::Copula(c) = &mut s.dataset {
                if o.exponential_marginal {
                    c.marginal = marginal;
                }
            }
        }
    }
    if o.mixture_preset.is_some() || o.rho_base.is_some() {
        let DatasetSpec::Mixture(m) = &mut s.dataset else {
            bail!("--mixture-preset and --rho-base need the mixture dataset");
        };
        if let Some(i) = o.mixture_preset {
            m.weights = GaussianMixtureSpec::preset(i)?.weights;
        }
        set!(m.rho_base, o.rho_base);
    }
    set!(s.coefficients.scale_divisor, o.scale_divisor);
    set!(s.coefficients.num_nonnull, o.num_nonnull);
    match o.response {
        Some(ResponseKind::Linear) => s.response = ResponseSpec::Linear,
        Some(ResponseKind::Tanh) => {
            s.response = ResponseSpec::Tanh {
                num_covariates: o.tanh_covariates.unwrap_or(20),
            }
        }
        None => {
            if let (ResponseSpec::Tanh { num_covariates }, Some(m)) = (&mut s.response, o.tanh_covariates) {
                *num_covariates = m;
            }
        }
    }
    if o.no_standardize {
        s.standardize = false;
    }
    set!(s.net_preset, o.net_preset);
    set!(s.train.epochs, o.epochs);
    set!(s.train.batch_size, o.batch_size);
    set!(s.train.lr_generator, o.lr_generator);
    set!(s.train.lr_swapper, o.lr_swapper);
    set!(s.train.num_swappers, o.num_swappers);
    set!(s.train.lambda_rex, o.lambda_rex);
    set!(s.train.lambda_decor, o.lambda_decor);
    set!(s.train.lambda_dep, o.lambda_dep);
    set!(s.train.early_stop_patience, o.patience);
    set!(s.drp.alpha, o.alpha);
    if o.alpha_c.is_some() {
        s.drp.schedule_c = o.alpha_c;
    }
    s.ablation.disable_drp |= o.no_drp;
    s.ablation.disable_rex |= o.disable_rex;
    s.ablation.disable_swapper_decor |= o.disable_swapper_decor;
    set!(s.q, o.q);
    set!(s.num_repeats, o.repeats);
    set!(s.workers, o.workers);
    match o.knockoff_source {
        Some(SourceKind::Trained) => s.knockoff = KnockoffSource::Trained,
        Some(SourceKind::Oracle) => s.knockoff = KnockoffSource::Oracle,
        None => {}
    }
    s.validate()?;
    Ok(s)
}

fn load_spec(cli: &Cli) -> Result<ExperimentSpec> {
    let base = match &cli.config {
        Some(path) => ExperimentSpec::load(path).with_context(|| format!("reading config {}", path.display()))?,
        None => ExperimentSpec::desk(),
    };
    apply_overrides(base, &cli.overrides)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn read_x(path: &Path) -> Result<ndarray::Array2<f64>> {
    Ok(io::read_matrix(path).with_context(|| format!("reading {}", path.display()))?.0)
}

fn print_points(title: &str, points: &[SweepPoint], out: &Path) -> Result<()> {
    let entries = sweep_entries(points);
    for (_, r) in &entries {
        print!("{}", text_summary(r));
    }
    emit_comparison(title, &entries, out, &ALL_FORMATS)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut spec = load_spec(&cli)?;
    match cli.command {
        Command::GenerateData { out, seed, repeat } => {
            if let Some(seed) = seed {
                spec.base_seed = seed;
            }
            create_dir(&out)?;
            let (ds, raw) = synthesize_dataset(&spec, repeat)?;
            io::write_matrix(out.join("x.csv"), &ds.x, None)?;
            io::write_matrix(out.join("x_raw.csv"), &raw, None)?;
            io::write_vector(out.join("y.csv"), &ds.y, "y")?;
            let mask = Array1::from_iter(ds.nonnull_mask.iter().map(|&m| if m { 1.0 } else { 0.0 }));
            io::write_vector(out.join("nonnull.csv"), &mask, "nonnull")?;
            io::write_json(out.join("dataset.json"), &ds)?;
            std::fs::write(out.join("config.toml"), spec.to_toml()?)?;
            println!("wrote {}x{} dataset (seed {}) to {}", ds.x.nrows(), ds.x.ncols(), ds.seed, out.display());
        }
        Command::Train { x, out, log, seed } => {
            let x = read_x(&x)?;
            let cfg = spec.effective_train_config(seed);
            let net_cfg = KnockoffNetConfig::preset(&spec.net_preset)?;
            let trained = trainer::train(x.view(), &cfg, net_cfg)?;
            trained.net.save(&out)?;
            if let Some(log_path) = log {
                io::write_json(&log_path, &trained.log)?;
            }
            print!("{}", trained.log.epoch_table());
            println!("saved checkpoint to {}", out.display());
        }
        Command::Knockoff { checkpoint, x, out, seed } => {
            let net = KnockoffNet::load(&checkpoint)?;
            let x = read_x(&x)?;
            let xk = net.generate(x.view(), rng::derive(seed, &[stream::KNOCKOFF_Z]))?;
            io::write_matrix(&out, &xk, None)?;
            println!("wrote {}x{} knockoff to {}", xk.nrows(), xk.ncols(), out.display());
        }
        Command::Select { x, knockoff, y, nonnull, out, seed } => {
            let x = read_x(&x)?;
            let mut xk = read_x(&knockoff)?;
            let y = io::read_vector(&y)?;
            let mask: Vec<bool> = match &nonnull {
                Some(path) => io::read_vector(path)?.iter().map(|&v| v != 0.0).collect(),
                None => {
                    log::warn!("no --nonnull given; FDP and power are reported against an empty truth");
                    vec![false; x.ncols()]
                }
            };
            let mut drp_meta = None;
            if !spec.ablation.disable_drp {
                let cfg = DrpConfig {
                    seed: rng::derive(seed, &[stream::DRP]),
                    ..spec.drp
                };
                let d = apply_drp(xk.view(), x.view(), &cfg)?;
                drp_meta = Some((d.alpha, d.seed, d.permutation_digest));
                xk = d.knockoff;
            }
            let ridge = RidgeConfig {
                seed: rng::derive(seed, &[stream::FILTER]),
                ..RidgeConfig::default()
            };
            let mut result = run_filter(x.view(), xk.view(), y.view(), &mask, spec.q, &ridge)?;
            if let Some((alpha, s, digest)) = drp_meta {
                result.meta.drp_alpha = Some(alpha);
                result.meta.drp_seed = Some(s);
                result.meta.permutation_digest = Some(digest);
            }
            result.meta.config_digest = Some(spec.digest());
            io::write_json(&out, &result)?;
            println!("selected {:?} (tau = {})", result.selected, result.tau);
            if nonnull.is_some() {
                println!("fdp = {:.4}, power = {:.4}", result.fdp, result.power);
            }
        }
        Command::Diagnose { x, knockoff, out, seed } => {
            let x = read_x(&x)?;
            let xk = read_x(&knockoff)?;
            let report = swap_property_suite(x.view(), xk.view(), seed)?;
            io::write_json(&out, &report)?;
            println!("ratio  |B|  mmd_linear  swd1  swd2");
            for m in &report.per_ratio {
                println!("{:.1}  {:>3}  {:.5}  {:.5}  {:.5}", m.ratio, m.swap_size, m.mmd_linear, m.swd1, m.swd2);
            }
            println!(
                "mean       {:.5}  {:.5}  {:.5}",
                report.mean_mmd_linear, report.mean_swd1, report.mean_swd2
            );
        }
        Command::Experiment { seed, out, formats } => {
            spec.base_seed = seed;
            let formats: Vec<ReportFormat> = match formats {
                Some(f) => f.iter().map(|s| s.parse()).collect::<drk_core::Result<_>>()?,
                None => ALL_FORMATS.to_vec(),
            };
            let report = run_experiment(&spec)?;
            let files = emit_report(&report, &out, &formats)?;
            print!("{}", text_summary(&report));
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Ablation { seed, out } => {
            if let Some(seed) = seed {
                spec.base_seed = seed;
            }
            let reports = run_ablation(&spec)?;
            let entries: Vec<_> = reports.iter().map(|(k, r)| (k.clone(), r)).collect();
            for (_, r) in &entries {
                print!("{}", text_summary(r));
            }
            emit_comparison(&format!("{}-ablation", spec.name), &entries, &out, &ALL_FORMATS)?;
            println!("wrote {}", out.display());
        }
        Command::SweepAlpha { seed, out, values } => {
            if let Some(seed) = seed {
                spec.base_seed = seed;
            }
            let values = values.unwrap_or_else(default_alpha_grid);
            print_points(&format!("{}-alpha", spec.name), &sweep_alpha(&spec, &values)?, &out)?;
        }
        Command::SweepBetaScale { seed, out, values } => {
            if let Some(seed) = seed {
                spec.base_seed = seed;
            }
            let values = values.unwrap_or_else(|| BETA_SCALE_GRID.to_vec());
            print_points(&format!("{}-beta-scale", spec.name), &sweep_beta_scale(&spec, &values)?, &out)?;
        }
        Command::SweepRho { seed, out, values } => {
            if let Some(seed) = seed {
                spec.base_seed = seed;
            }
            let values = values.unwrap_or_else(|| RHO_GRID.to_vec());
            print_points(&format!("{}-rho", spec.name), &sweep_rho(&spec, &values)?, &out)?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
