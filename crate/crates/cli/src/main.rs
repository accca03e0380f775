//! `statgames`: run verification suites, evaluate losses on JSON models,
//! and run the free-energy demo.
//!
//! Exit status: 0 on success, 1 when a suite fails, an observation is
//! unsupported or the demo diverges, 2 on usage and parse errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use statgames::demo::{run_demo, DemoConfig};
use statgames::games::SectionTolerances;
use statgames::harness::{
    classify_models, default_tolerance, default_trials, run_suite, supported_instances, SuiteConfig, SuiteReport, SUITES,
};
use statgames::io::{read_model, BackwardSpec, Model};
use statgames::lens::{Channel, Instance, Obs, SpaceSig, State};
use statgames::loss::{energy_entropy_decomp, gaussian_energy, model_loss, LossModelTag};
use statgames::{Error, Result};

/// Directory that relative `--report` paths resolve against.
const REPORT_DIR_ENV: &str = "STATGAMES_REPORT_DIR";

#[derive(Parser)]
#[command(name = "statgames", version, about = "Compositional loss models for Bayesian lenses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run verification suites against their oracles.
    Verify(VerifyArgs),
    /// Evaluate a loss on a model, prior and observation.
    EvalLoss(EvalArgs),
    /// Minimize free energy over a Gaussian backward family.
    Demo(DemoArgs),
    /// Print the structure of a model file.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite name, or `all`; repeatable.
    #[arg(long, default_value = "all")]
    suite: Vec<String>,
    /// Trials per suite [default: per suite].
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest space size (discrete) or dimension (Gaussian) [default: 5 / 3].
    #[arg(long)]
    max_dim: Option<usize>,
    /// Comparison tolerance [default: per suite].
    #[arg(long)]
    tol: Option<f64>,
    /// `discrete`, `gaussian` or `all`.
    #[arg(long, default_value = "all")]
    instance: String,
    /// Draw priors on tensor products as products of marginals.
    #[arg(long)]
    product_priors: bool,
    /// Allow zero entries in generated kernels and priors.
    #[arg(long)]
    degenerate: bool,
    /// Also classify each loss model as a strict or lax section.
    #[arg(long)]
    sections: bool,
    /// Strict-classification tolerance for `--sections`.
    #[arg(long, default_value_t = SectionTolerances::default().strict)]
    section_tol: f64,
    /// Nonnegativity floor for `--sections`.
    #[arg(long, default_value_t = SectionTolerances::default().floor)]
    section_floor: f64,
    /// JSON report path; a CSV summary is written next to it.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Lens bundle or channel file (channels are taken as exact lenses).
    #[arg(long)]
    model: PathBuf,
    /// KL, MLE, FE or LFE.
    #[arg(long)]
    loss: String,
    /// Prior file [default: uniform / standard normal].
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Observation: a label or index, or comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    obs: String,
    /// Also print the energy and entropy terms.
    #[arg(long)]
    decompose: bool,
    /// Print a JSON object instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, default_value_t = DemoConfig::default().steps)]
    steps: usize,
    #[arg(long, default_value_t = DemoConfig::default().lr)]
    lr: f64,
    #[arg(long, default_value_t = DemoConfig::default().seed)]
    seed: u64,
    /// CSV trajectory path [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_) | Error::Usage(_) | Error::Instance(_) | Error::Shape(_) | Error::NotSimple(_) => 2,
        Error::NotStochastic(_) | Error::NotPsd(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify(a) => verify(a),
        Command::EvalLoss(a) => eval_loss(a),
        Command::Demo(a) => demo(a),
        Command::Inspect(a) => inspect(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn parse_instances(s: &str) -> Result<Vec<Instance>> {
    match s {
        "all" => Ok(vec![Instance::Discrete, Instance::Gaussian]),
        other => Ok(vec![other.parse()?]),
    }
}

fn suite_configs(a: &VerifyArgs) -> Result<Vec<SuiteConfig>> {
    let instances = parse_instances(&a.instance)?;
    let mut names: Vec<&str> = Vec::new();
    for s in &a.suite {
        let picked: Vec<&str> = match SUITES.iter().find(|k| **k == s.as_str()) {
            _ if s == "all" => SUITES.to_vec(),
            Some(known) => vec![known],
            None => {
                return Err(Error::Usage(format!("unknown suite {s:?}; known suites: all, {}", SUITES.join(", "))))
            }
        };
        for name in picked {
            if !names.contains(&name) {
                names.push(name);
            }
        }
    }
    let mut cfgs = Vec::new();
    for name in names {
        let runnable: Vec<Instance> =
            supported_instances(name).iter().copied().filter(|i| instances.contains(i)).collect();
        if runnable.is_empty() && a.suite.iter().any(|s| s == name) {
            return Err(Error::Usage(format!("suite {name} does not run on the {} instance", a.instance)));
        }
        for instance in runnable {
            let mut cfg = SuiteConfig::new(name, instance)?;
            cfg.trials = a.trials.unwrap_or(default_trials(name));
            cfg.seed = a.seed;
            if let Some(d) = a.max_dim {
                cfg.max_dim = d;
            }
            cfg.tolerance = a.tol.unwrap_or(default_tolerance(name, instance));
            cfg.product_priors = a.product_priors;
            cfg.degenerate = a.degenerate;
            cfg.validate()?;
            cfgs.push(cfg);
        }
    }
    Ok(cfgs)
}

fn report_path(p: &Path) -> PathBuf {
    match std::env::var_os(REPORT_DIR_ENV) {
        Some(dir) if p.is_relative() => Path::new(&dir).join(p),
        _ => p.to_path_buf(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Usage(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
}

fn verify(a: VerifyArgs) -> Result<u8> {
    let cfgs = suite_configs(&a)?;
    let tol = SectionTolerances { strict: a.section_tol, floor: a.section_floor };
    if a.sections && !(tol.strict > 0.0 && tol.floor >= 0.0) {
        return Err(Error::Usage("section tolerances must be positive".into()));
    }
    let mut reports: Vec<SuiteReport> = Vec::with_capacity(cfgs.len());
    for cfg in &cfgs {
        let r = run_suite(cfg)?;
        println!("{}", r.summary_line());
        reports.push(r);
    }
    let mut sections = Vec::new();
    if a.sections {
        for instance in parse_instances(&a.instance)? {
            for r in classify_models(instance, a.seed, 50, 20, tol)? {
                let class = serde_json::to_value(r.classification).expect("json");
                println!(
                    "SECTION {}/{}: {}, worst K {:.3e}, worst |K| {:.3e} over {} probes",
                    r.model,
                    instance,
                    class.as_str().unwrap_or_default(),
                    r.worst_k,
                    r.worst_abs_k,
                    r.n_probes
                );
                sections.push(json!({ "instance": instance, "report": r }));
            }
        }
    }
    if let Some(p) = &a.report {
        let path = report_path(p);
        let body = json!({ "suites": reports, "sections": sections });
        write_file(&path, &serde_json::to_string_pretty(&body).expect("reports serialize"))?;
        let mut csv = format!("{}\n", SuiteReport::CSV_HEADER);
        for r in &reports {
            csv.push_str(&r.csv_row());
            csv.push('\n');
        }
        write_file(&path.with_extension("csv"), &csv)?;
    }
    Ok(if reports.iter().all(SuiteReport::ok) { 0 } else { 1 })
}

fn eval_loss(a: EvalArgs) -> Result<u8> {
    let model: LossModelTag = a.loss.parse()?;
    let lens = read_model(&a.model)?.into_lens()?;
    let prior = match &a.prior {
        Some(p) => read_model(p)?.into_state()?,
        None => lens.dom().reference_state(),
    };
    if !prior.space().matches(&lens.dom()) {
        return Err(Error::Usage(format!("prior on {} does not match the lens domain {}", prior.space(), lens.dom())));
    }
    let y = statgames::io::parse_obs(&a.obs, &lens.obs())?;
    let value = model_loss(model, &lens)?.eval(&prior, &y)?;
    let decomposition = if a.decompose { Some(decompose(model, &lens, &prior, &y)?) } else { None };
    if a.json {
        let mut out = json!({ "loss": model, "obs": y.to_string(), "value": value });
        if let Some((energy, entropy)) = decomposition {
            out["energy"] = json!(energy);
            out["entropy"] = json!(entropy);
        }
        println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    } else {
        println!("{model} = {value}");
        if let Some((energy, entropy)) = decomposition {
            println!("energy = {energy}");
            println!("entropy = {entropy}");
        }
    }
    Ok(0)
}

/// Energy and entropy terms whose difference is the loss: the expected energy
/// for FE, the energy at the posterior mean for LFE.
fn decompose(model: LossModelTag, lens: &statgames::lens::BayesLens, prior: &State, y: &Obs) -> Result<(f64, f64)> {
    match model {
        LossModelTag::Fe => energy_entropy_decomp(lens, prior, y),
        LossModelTag::Lfe => {
            let (_, entropy) = energy_entropy_decomp(lens, prior, y)?;
            let (Channel::Gaussian(fwd), State::Gaussian(pi), Obs::Gaussian(v)) = (lens.fwd(), prior, y) else {
                return Err(Error::Instance("LFE needs a Gaussian lens".into()));
            };
            let Channel::Gaussian(back) = lens.backward(prior)? else { unreachable!("instances agree") };
            let mean = back.at(v)?.mean().clone();
            Ok((gaussian_energy(fwd, pi, v, &mean)?, entropy))
        }
        other => Err(Error::Usage(format!("--decompose applies to FE and LFE, not {other}"))),
    }
}

fn demo(a: DemoArgs) -> Result<u8> {
    let run = run_demo(&DemoConfig { steps: a.steps, lr: a.lr, seed: a.seed })?;
    let csv = run.to_csv();
    match &a.out {
        Some(path) => {
            write_file(path, &csv)?;
            let last = run.last();
            println!(
                "{} steps ({} accepted, {} rejected): FE = {}, KL = {}, MLE = {}",
                a.steps, run.accepted, run.rejected, last.fe, last.kl, last.mle
            );
        }
        None => print!("{csv}"),
    }
    Ok(0)
}

fn describe_channel(c: &Channel) -> Vec<String> {
    match c {
        Channel::Discrete(k) => {
            let mut lines = vec![
                format!("discrete channel {} -> {} ({:?}-handed)", k.dom(), k.out(), k.hand()),
                format!("  domain: {} outcomes, factors {:?}", k.dom().size(), k.dom().factor_sizes()),
                format!("  output: {} outcomes, factors {:?}", k.out().size(), k.out().factor_sizes()),
            ];
            if k.copar().is_unit() {
                lines.push("  coparameter: none".into());
            } else {
                lines.push(format!("  coparameter: {} ({} outcomes, factors {:?})", k.copar(), k.copar().size(), k.copar().factor_sizes()));
            }
            lines.push(format!("  stochasticity: max |row sum - 1| = {:.3e} over {} rows", k.joint().max_row_defect(), k.dom().size()));
            lines
        }
        Channel::Gaussian(g) => {
            let min_eig = g.noise().clone().symmetric_eigen().eigenvalues.min();
            vec![
                format!("gaussian channel R^{} -> R^{} ({:?}-handed)", g.dom_dim(), g.out_dim(), g.hand()),
                format!("  coparameter block: {} of {} codomain coordinates", g.copar_dim(), g.cod_dim()),
                format!("  noise: min eigenvalue {min_eig:.3e}"),
            ]
        }
    }
}

fn inspect(a: InspectArgs) -> Result<u8> {
    let model = read_model(&a.model)?;
    match model {
        Model::Kernel(k) => describe_channel(&Channel::Discrete(k)).iter().for_each(|l| println!("{l}")),
        Model::GaussChannel(g) => describe_channel(&Channel::Gaussian(g)).iter().for_each(|l| println!("{l}")),
        Model::Dist(d) => {
            println!("distribution on {} ({} outcomes)", d.space(), d.space().size());
            let total: f64 = d.mass().iter().sum();
            println!("  stochasticity: |mass - 1| = {:.3e}", (total - 1.0).abs());
        }
        Model::GaussState(s) => {
            let min_eig = s.cov().clone().symmetric_eigen().eigenvalues.min();
            println!("gaussian state on R^{}", s.dim());
            println!("  covariance: min eigenvalue {min_eig:.3e}");
        }
        Model::Lens { lens, backward } => {
            println!("lens {} -> {}", lens.dom(), lens.obs());
            println!("forward:");
            describe_channel(lens.fwd()).iter().for_each(|l| println!("  {l}"));
            match backward {
                BackwardSpec::Exact => println!("backward: exact inversion at each prior"),
                BackwardSpec::Table(entries) => {
                    println!("backward: table of {} named priors", entries.len());
                    for (name, _, c) in &entries {
                        println!("  {name}:");
                        describe_channel(c).iter().for_each(|l| println!("    {l}"));
                    }
                }
            }
            if let SpaceSig::Discrete(_) = lens.dom() {
                println!("reference prior: uniform");
            } else {
                println!("reference prior: standard normal");
            }
        }
    }
    Ok(0)
}
