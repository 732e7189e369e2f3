//! `debtav`: batch front end for simulation, estimation and comparison.

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use debtaversion::analysis::borrowing_premium;
use debtaversion::data::{
    load_catalog, read_choices, read_prospects_jsonl, simulate, write_catalog, write_choices, write_prospects_jsonl,
    Population,
};
use debtaversion::dataset::Dataset;
use debtaversion::estimation::{compare, fit, CovariateSpec, FitConfig};
use debtaversion::mixed::{fit_distribution, share_above};
use debtaversion::model::{ParamId, ParamVector};
use debtaversion::report::{
    read_fit_report, render_fit_text, render_mixed_text, write_fit_report, write_fit_text, write_mixed_tables,
    write_premium, write_ranking,
};

use config::{
    distribution, param_map, parse_assignment, parse_horizon, theta_from, DebtCostKind, LinkKind, MethodKind,
    RunConfig, SchemeKind, SignDependent, UtilityKind,
};

#[derive(Parser)]
#[command(
    name = "debtav",
    version,
    about = "Structural estimation of debt aversion from price-list choices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export the MPL catalog as CSV.
    Catalog(CatalogArgs),
    /// Simulate choices from a parameter vector or a population law.
    Simulate(SimulateArgs),
    /// Maximum-likelihood fit (aggregate, covariate or constrained).
    Fit(FitArgs),
    /// Simulated maximum likelihood for the joint normal parameter law.
    FitMixed(MixedArgs),
    /// Indifference principals and borrowing premia.
    Premium(PremiumArgs),
    /// Rank fitted models by BIC.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(value_name = "CONFIG")]
    config_path: Option<PathBuf>,
    #[arg(long, conflicts_with = "config_path")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for likelihood evaluation.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum)]
    utility: Option<UtilityKind>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    debt_cost: Option<DebtCostKind>,
    #[arg(long)]
    present_bias: bool,
    #[arg(long, value_enum, value_delimiter = ',')]
    sign_dependent: Vec<SignDependent>,
    #[arg(long, value_enum)]
    link: Option<LinkKind>,
    #[arg(long)]
    tremble: bool,
    #[arg(long)]
    per_mpl_mu: bool,
}

#[derive(Args)]
struct CatalogArgs {
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the SHA-256 fingerprint of the export.
    #[arg(long)]
    fingerprint: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Choice CSV, or JSON lines when the extension is `.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    mpls: Vec<u8>,
    #[arg(long, value_parser = parse_assignment)]
    theta: Vec<(String, f64)>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory for report files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long, value_parser = parse_assignment)]
    fix: Vec<(String, f64)>,
    #[arg(long, value_parser = parse_assignment)]
    init: Vec<(String, f64)>,
    /// Parameters linear in the dataset covariates.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    #[arg(long, value_enum)]
    method: Option<MethodKind>,
    #[arg(long)]
    starts: Option<usize>,
}

#[derive(Args)]
struct MixedArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeKind>,
}

#[derive(Args)]
struct PremiumArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_assignment)]
    theta: Vec<(String, f64)>,
    #[arg(long)]
    repayment: Option<f64>,
    /// `t,T`; repeatable.
    #[arg(long, value_parser = parse_horizon)]
    horizon: Vec<[u32; 2]>,
}

#[derive(Args)]
struct CompareArgs {
    /// Fit report CSVs.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Status {
    Done,
    NotConverged,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("error: the optimizer did not converge; results were written but are not reliable");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<Status> {
    match command {
        Command::Catalog(a) => cmd_catalog(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::FitMixed(a) => cmd_fit_mixed(a),
        Command::Premium(a) => cmd_premium(a),
        Command::Compare(a) => cmd_compare(a),
    }
}

fn resolve(run: &RunArgs, model: &ModelArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(run.config_path.as_deref().or(run.config.as_deref()))?;
    if let Some(s) = run.seed {
        cfg.seed = s;
    }
    if run.threads.is_some() {
        cfg.threads = run.threads;
    }
    let m = &mut cfg.model;
    if let Some(u) = model.utility {
        m.utility = u;
    }
    if let Some(e) = model.epsilon {
        m.epsilon = e;
    }
    if let Some(d) = model.debt_cost {
        m.debt_cost = d;
    }
    m.present_bias |= model.present_bias;
    if !model.sign_dependent.is_empty() {
        m.sign_dependent = model.sign_dependent.clone();
    }
    m.sign_dependent.sort();
    m.sign_dependent.dedup();
    if let Some(l) = model.link {
        cfg.error.link = l;
    }
    cfg.error.tremble |= model.tremble;
    cfg.error.per_mpl_mu |= model.per_mpl_mu;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(cfg)
}

fn output<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .with_context(|| format!("no {what} given (flag or config)"))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn sibling_config(path: &Path) -> PathBuf {
    let mut name = path.file_stem().unwrap_or_default().to_os_string();
    name.push(".config.toml");
    path.with_file_name(name)
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

fn load_data(path: &Path) -> Result<Dataset> {
    let data = if is_jsonl(path) {
        read_prospects_jsonl(path)
    } else {
        read_choices(path)
    };
    data.with_context(|| format!("loading {}", path.display()))
}

fn cmd_catalog(a: CatalogArgs) -> Result<Status> {
    let catalog = load_catalog();
    match &a.out {
        Some(path) => write_catalog(path, &catalog).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().write_all(catalog.to_csv_string().as_bytes())?,
    }
    if a.fingerprint {
        eprintln!("sha256 {}", catalog.fingerprint());
    }
    Ok(Status::Done)
}

fn cmd_simulate(a: SimulateArgs) -> Result<Status> {
    let mut cfg = resolve(&a.run, &a.model)?;
    let s = &mut cfg.simulate;
    if a.out.is_some() {
        s.output = a.out.clone();
    }
    if let Some(n) = a.subjects {
        s.subjects = n;
    }
    if !a.mpls.is_empty() {
        s.mpls = a.mpls.clone();
    }
    s.theta.extend(a.theta.iter().cloned());
    let spec = cfg.model_spec()?;
    let error = cfg.error_spec();
    let s = &cfg.simulate;
    let out = output(&s.output, "output path")?;
    let base = theta_from(&spec, &s.theta)?;
    let population = match &s.distribution {
        Some(d) => Population::Distribution {
            base,
            law: distribution(d)?,
        },
        None => Population::Fixed(base),
    };
    let data = simulate(&spec, &error, &population, s.subjects, &s.mpls, cfg.seed)?;
    if is_jsonl(out) {
        write_prospects_jsonl(out, &data)?;
    } else {
        write_choices(out, &data)?;
    }
    cfg.write(&sibling_config(out))?;
    eprintln!(
        "wrote {} choices of {} subjects to {}",
        data.n_records(),
        data.n_subjects(),
        out.display()
    );
    Ok(Status::Done)
}

fn cmd_fit(a: FitArgs) -> Result<Status> {
    let mut cfg = resolve(&a.run, &a.model)?;
    let f = &mut cfg.fit;
    if a.data.is_some() {
        f.data = a.data.clone();
    }
    if a.out_dir.is_some() {
        f.output = a.out_dir.clone();
    }
    if let Some(n) = &a.name {
        f.name = n.clone();
    }
    f.fixed.extend(a.fix.iter().cloned());
    f.init.extend(a.init.iter().cloned());
    if !a.covariates.is_empty() {
        f.covariates = a.covariates.clone();
    }
    if let Some(m) = a.method {
        f.method = m;
    }
    if let Some(s) = a.starts {
        f.starts = s;
    }
    let spec = cfg.model_spec()?;
    let error = cfg.error_spec();
    let data = load_data(output(&cfg.fit.data, "data path")?)?;
    let dir = output(&cfg.fit.output, "output directory")?;
    let mut fc = FitConfig::new(spec, error);
    fc.init = theta_from(&spec, &cfg.fit.init)?;
    fc.fixed = param_map(&cfg.fit.fixed)?.into_iter().collect();
    fc.optimizer = cfg.optimizer()?;
    fc.starts = cfg.fit.starts.max(1);
    fc.seed = cfg.seed;
    if !cfg.fit.covariates.is_empty() {
        let params = cfg
            .fit
            .covariates
            .iter()
            .map(|p| p.parse::<ParamId>())
            .collect::<debtaversion::Result<Vec<_>>>()?;
        fc.covariates = Some(CovariateSpec {
            params,
            fixed: Vec::new(),
        });
    }
    let result = fit(&fc, &data)?;
    create_dir(dir)?;
    let fits = [(cfg.fit.name.clone(), &result)];
    write_fit_report(dir.join("report.csv"), &fits)?;
    write_fit_text(dir.join("report.txt"), &fits)?;
    cfg.write(&dir.join("config.toml"))?;
    print!("{}", render_fit_text(&fits));
    Ok(if result.converged {
        Status::Done
    } else {
        Status::NotConverged
    })
}

fn cmd_fit_mixed(a: MixedArgs) -> Result<Status> {
    let mut cfg = resolve(&a.run, &a.model)?;
    if a.data.is_some() {
        cfg.fit.data = a.data.clone();
    }
    if a.out_dir.is_some() {
        cfg.fit.output = a.out_dir.clone();
    }
    if let Some(r) = a.draws {
        cfg.mixed.draws = r;
    }
    if let Some(s) = a.scheme {
        cfg.mixed.scheme = s;
    }
    let spec = cfg.model_spec()?;
    let error = cfg.error_spec();
    let data = load_data(output(&cfg.fit.data, "data path")?)?;
    let dir = output(&cfg.fit.output, "output directory")?;
    let result = fit_distribution(&spec, &error, &data, &cfg.draw_plan(), None, &cfg.optimizer()?)?;
    create_dir(dir)?;
    write_mixed_tables(dir, "mixed_", &result)?;
    let mut w = csv::Writer::from_path(dir.join("mixed_share.csv"))?;
    w.write_record(["parameter", "threshold", "share_above"])?;
    for (p, threshold) in [(ParamId::Gamma, 1.0), (ParamId::Lambda, 1.0)] {
        let share = share_above(&result.law, p, threshold)?;
        w.write_record([p.name(), threshold.to_string(), share.to_string()])?;
    }
    w.flush()?;
    let text = render_mixed_text(&result);
    std::fs::write(dir.join("mixed_report.txt"), &text)?;
    cfg.write(&dir.join("config.toml"))?;
    print!("{text}");
    Ok(if result.converged {
        Status::Done
    } else {
        Status::NotConverged
    })
}

fn cmd_premium(a: PremiumArgs) -> Result<Status> {
    let mut cfg = resolve(&a.run, &a.model)?;
    let p = &mut cfg.premium;
    if a.out.is_some() {
        p.output = a.out.clone();
    }
    p.theta.extend(a.theta.iter().cloned());
    if let Some(r) = a.repayment {
        p.repayment = r;
    }
    if !a.horizon.is_empty() {
        p.horizons = a.horizon.clone();
    }
    let spec = cfg.model_spec()?;
    let p = &cfg.premium;
    let theta: ParamVector = theta_from(&spec, &p.theta)?;
    theta.check(&spec.active_params())?;
    if p.horizons.is_empty() {
        bail!("no horizons requested");
    }
    let reports = p
        .horizons
        .iter()
        .map(|&[t, big_t]| borrowing_premium(&spec, &theta, p.repayment, t, big_t))
        .collect::<debtaversion::Result<Vec<_>>>()?;
    match &p.output {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_premium(BufWriter::new(file), &reports)?;
            cfg.write(&sibling_config(path))?;
        }
        None => write_premium(io::stdout(), &reports)?,
    }
    Ok(Status::Done)
}

fn cmd_compare(a: CompareArgs) -> Result<Status> {
    let mut summaries = Vec::new();
    for path in &a.reports {
        let models = read_fit_report(path).with_context(|| format!("reading {}", path.display()))?;
        summaries.extend(models.into_iter().map(|m| m.summary));
    }
    let ranking = compare(&summaries)?;
    match &a.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_ranking(BufWriter::new(file), &ranking)?;
        }
        None => write_ranking(io::stdout(), &ranking)?,
    }
    Ok(Status::Done)
}
