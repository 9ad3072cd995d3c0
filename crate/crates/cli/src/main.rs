//! `ddfo`: design, verify and simulate disturbance-decoupled functional
//! observers, and build fault isolation banks.
//!
//! Exit status: 0 success, 1 infeasible design or failed verification,
//! 2 usage, parse or I/O errors.

mod plot;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ddfo::design::{
    design_end_to_end, parse_eigenvalues, verify_conditions, DesignError, DesignSpec, ObserverDocument,
    ObserverRealization, Problem, Provenance, Target,
};
use ddfo::diagnose::{calibrate, design_bank, detect, events_report, run_bank, DetectionPolicy, FaultBank, MemberSpec};
use ddfo::model::{ExoKind, ExoSystem, PlantModel, SteadyStateOptions};
use ddfo::sim::{default_step, predict_error, simulate, observer_point, ObserverInit, Scenario, Trajectory};
use plot::{line_plot, Series};

/// Environment variable naming the directory for artifacts written without
/// an explicit path.
const OUT_DIR_VAR: &str = "DDFO_OUT_DIR";

#[derive(Parser)]
#[command(name = "ddfo", version, about = "Disturbance-decoupled functional observers for nonlinear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the existence conditions and write an observer document.
    Design(DesignArgs),
    /// Re-check a stored observer against a model.
    Verify(VerifyArgs),
    /// Co-simulate plant and observer and write a trajectory CSV.
    Simulate(SimulateArgs),
    /// Design one fault observer per declared fault.
    FaultbankDesign(BankDesignArgs),
    /// Run a stored fault bank on a scenario and report detections.
    FaultbankRun(BankRunArgs),
    /// Find an operating point and optionally write the deviation model.
    SteadyState(SteadyArgs),
}

#[derive(Args)]
struct SolverArgs {
    /// Number of training samples (default 20 (v + 1) p).
    #[arg(long)]
    samples: Option<usize>,
    /// Feasibility tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct DesignArgs {
    model: PathBuf,
    /// Observer eigenvalues, e.g. `-0.02` or `-1, -2+0.5i, -2-0.5i`.
    #[arg(long, allow_hyphen_values = true)]
    eigenvalues: String,
    /// Observer order; must equal the number of eigenvalues when given.
    #[arg(long)]
    order: Option<usize>,
    /// Largest order to try when the requested one is infeasible.
    #[arg(long)]
    v_max: Option<usize>,
    /// Decouple the estimate from every declared disturbance.
    #[arg(long)]
    decouple: bool,
    /// Estimate this fault instead of the functional.
    #[arg(long)]
    fault: Option<String>,
    /// Exo-system for `--fault`: step, ramp or sine(<omega>).
    #[arg(long, default_value = "step")]
    exo: String,
    #[command(flatten)]
    solver: SolverArgs,
    /// Observer document path (default observer.toml in the output dir).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    model: PathBuf,
    observer: PathBuf,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    model: PathBuf,
    observer: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario's step size.
    #[arg(long)]
    h: Option<f64>,
    /// Keep every n-th grid point in the CSV and plot.
    #[arg(long, default_value_t = 1)]
    every: usize,
    /// Trajectory CSV path (default trajectory.csv in the output dir).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write an SVG plot of z and zhat.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct BankDesignArgs {
    model: PathBuf,
    /// `fault=kind:eigenvalues`, e.g. `f1=ramp:-0.02`; repeat per fault.
    #[arg(long = "member", required = true, allow_hyphen_values = true)]
    members: Vec<String>,
    #[arg(long)]
    v_max: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Bank directory (default bank/ in the output dir).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BankRunArgs {
    model: PathBuf,
    bank: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    /// `fault=delta`; faults without one get a calibrated threshold.
    #[arg(long = "threshold")]
    thresholds: Vec<String>,
    /// Hold time in seconds (default 10 h).
    #[arg(long)]
    hold: Option<f64>,
    /// Flag a fault as soon as the hold is met, even during the initial
    /// observer transient.
    #[arg(long)]
    no_arm: bool,
    #[arg(long, default_value_t = 1)]
    every: usize,
    /// Run directory (default bank_run/ in the output dir).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write an SVG plot of the estimates.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct SteadyArgs {
    model: PathBuf,
    /// Comma-separated initial guess (default: centre of the sampling box).
    #[arg(long, allow_hyphen_values = true)]
    guess: Option<String>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Comma-separated reference point to compare against.
    #[arg(long, allow_hyphen_values = true)]
    reference: Option<String>,
    /// Write the model translated to the operating point here.
    #[arg(long)]
    deviation_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

// Error chain without the repetition that arises when a message already
// embeds its source.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Design(a) => cmd_design(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::FaultbankDesign(a) => cmd_bank_design(a),
        Command::FaultbankRun(a) => cmd_bank_run(a),
        Command::SteadyState(a) => cmd_steady(a),
    }
}

fn out_path(explicit: Option<PathBuf>, default_name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| {
        std::env::var_os(OUT_DIR_VAR)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."))
            .join(default_name)
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> Result<PlantModel> {
    PlantModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_observer(path: &Path) -> Result<ObserverRealization> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ObserverDocument::from_toml(&text)
        .and_then(|d| d.to_realization())
        .with_context(|| format!("observer document {}", path.display()))
}

fn load_scenario(path: &Path, h: Option<f64>) -> Result<Scenario> {
    let mut sc = Scenario::load(path).with_context(|| format!("scenario {}", path.display()))?;
    if h.is_some() {
        sc.h = h;
    }
    Ok(sc)
}

fn numbers(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| anyhow!("{what}: `{}` is not a number", s.trim())))
        .collect()
}

fn design_spec(eigs: &str, order: Option<usize>, s: &SolverArgs) -> Result<DesignSpec> {
    let eigenvalues = parse_eigenvalues(eigs).with_context(|| format!("--eigenvalues `{eigs}`"))?;
    if let Some(v) = order {
        if v != eigenvalues.len() {
            bail!("--order {v} but {} eigenvalues given", eigenvalues.len());
        }
    }
    let mut spec = DesignSpec::new(eigenvalues);
    spec.samples = s.samples;
    spec.tol = s.tol;
    spec.seed = s.seed;
    Ok(spec)
}

fn exo_kind(text: &str) -> Result<ExoKind> {
    ExoKind::parse(text).ok_or_else(|| anyhow!("unknown exo-system `{text}` (expected step, ramp or sine(<omega>))"))
}

fn cmd_design(a: DesignArgs) -> Result<ExitCode> {
    let model = load_model(&a.model)?;
    let spec = design_spec(&a.eigenvalues, a.order, &a.solver)?;
    let target = match &a.fault {
        Some(f) => Target::Fault {
            fault: f.clone(),
            exo: ExoSystem::new(exo_kind(&a.exo)?),
        },
        None => Target::Functional { decouple: a.decouple },
    };
    println!("model {}", a.model.display());
    match &target {
        Target::Fault { fault, exo } => println!(
            "target: fault {fault} ({} exo-system), decoupled from {}",
            exo.kind,
            list_or_none(model.disturbances.iter().chain(model.faults.iter().filter(|g| *g != fault)))
        ),
        Target::Functional { decouple } => println!(
            "target: z = {}{}",
            model.functional.as_ref().map(|q| q.to_string()).unwrap_or_else(|| "?".into()),
            if *decouple {
                format!(", decoupled from {}", list_or_none(model.disturbances.iter()))
            } else {
                String::new()
            }
        ),
    }
    let v_max = a.v_max.unwrap_or(spec.order());
    match design_end_to_end(&model, &target, &spec, v_max) {
        Ok(d) => {
            print!("{}", report::design(&d));
            let path = out_path(a.output, "observer.toml");
            let doc = ObserverDocument::from_realization(&d.observer, Some(&a.model.display().to_string()));
            write(&path, &doc.to_toml()?)?;
            println!("observer document {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Err(DesignError::Infeasible { attempts }) => {
            println!("infeasible: no order up to {v_max} satisfies the existence conditions");
            print!("{}", report::attempts(&attempts));
            Ok(ExitCode::from(1))
        }
        Err(e) => Err(e.into()),
    }
}

fn list_or_none<'a>(names: impl Iterator<Item = &'a String>) -> String {
    let v: Vec<&str> = names.map(String::as_str).collect();
    if v.is_empty() {
        "nothing".into()
    } else {
        v.join(", ")
    }
}

fn target_of(obs: &ObserverRealization) -> Target {
    match &obs.provenance {
        Provenance::Plain => Target::Functional { decouple: false },
        Provenance::Decoupled => Target::Functional { decouple: true },
        Provenance::Fault { fault, exo, .. } => Target::Fault {
            fault: fault.clone(),
            exo: exo.clone(),
        },
    }
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode> {
    let model = load_model(&a.model)?;
    let obs = load_observer(&a.observer)?;
    let problem = Problem::new(&model, &target_of(&obs))?;
    let r = verify_conditions(&problem, &obs, a.samples, a.seed, a.tol)?;
    println!("model {}, observer {} ({})", a.model.display(), a.observer.display(), obs.provenance.name());
    print!("{}", report::conditions(&r));
    if r.passed() {
        println!("verified: max residual {:.4e}", r.max_residual());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("NOT verified: max residual {:.4e}", r.max_residual());
        Ok(ExitCode::from(1))
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<ExitCode> {
    let model = load_model(&a.model)?;
    let obs = load_observer(&a.observer)?;
    let mut sc = load_scenario(&a.scenario, a.h)?;
    if sc.h.is_none() {
        let x0 = sc.initial_state(&model.states)?;
        sc.h = Some(default_step(&model, &[&obs], &x0, sc.t_end)?);
    }
    let tr = simulate(&model, &obs, &sc)?;
    println!(
        "simulated {} steps of h = {} to t = {}",
        tr.len() - 1,
        report::sig6(sc.h.unwrap_or_default()),
        report::sig6(sc.t_end)
    );
    let t0 = obs.eval_t(&observer_point(&obs, &tr.x[0], 0.0, &sc))?;
    let e0: Vec<f64> = tr.xi[0].iter().zip(t0.iter()).map(|(a, b)| a - b).collect();
    println!("initialization error xi(0) - T(x(0)) = {}", report::row(e0.iter().copied()));
    let pred = predict_error(&obs, &e0, &tr.t)?;
    let dev = tr.err.iter().zip(&pred).map(|(e, p)| (e - p).abs()).fold(0.0, f64::max);
    println!("max |(zhat - z) - C e^(At) e0| = {dev:.4e}");
    println!(
        "zhat - z: {} at t = 0, {} at t = {}",
        report::sig6(tr.err[0]),
        report::sig6(*tr.err.last().unwrap_or(&f64::NAN)),
        report::sig6(sc.t_end)
    );
    if matches!(sc.observer, ObserverInit::Explicit(_)) {
        println!("(observer state given explicitly in the scenario)");
    }
    let out = tr.decimate(a.every);
    let path = out_path(a.output, "trajectory.csv");
    write(&path, &out.to_csv())?;
    println!("trajectory {}", path.display());
    if let Some(p) = a.plot {
        let svg = line_plot(
            "functional estimate",
            "t",
            &out.t,
            &[
                Series { label: "z", y: &out.z, dashed: false },
                Series { label: "zhat", y: &out.zhat, dashed: true },
                Series { label: "zhat - z", y: &out.err, dashed: false },
            ],
        );
        write(&p, &svg)?;
        println!("plot {}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_member(text: &str, s: &SolverArgs) -> Result<MemberSpec> {
    let (fault, rest) = text
        .split_once('=')
        .ok_or_else(|| anyhow!("--member `{text}`: expected fault=kind:eigenvalues"))?;
    let (kind, eigs) = rest
        .split_once(':')
        .ok_or_else(|| anyhow!("--member `{text}`: expected fault=kind:eigenvalues"))?;
    let mut spec = design_spec(eigs, None, s)?;
    spec.samples = s.samples;
    Ok(MemberSpec {
        fault: fault.trim().to_string(),
        exo: ExoSystem::new(exo_kind(kind)?),
        spec,
    })
}

fn cmd_bank_design(a: BankDesignArgs) -> Result<ExitCode> {
    let model = load_model(&a.model)?;
    let reqs: Vec<MemberSpec> = a.members.iter().map(|m| parse_member(m, &a.solver)).collect::<Result<_>>()?;
    let v_max = a.v_max.unwrap_or_else(|| reqs.iter().map(|r| r.spec.order()).max().unwrap_or(1));
    let bank = match design_bank(&model, &reqs, v_max) {
        Ok(b) => b,
        Err(ddfo::diagnose::BankError::Member {
            fault,
            source: DesignError::Infeasible { attempts },
        }) => {
            println!("infeasible: no observer for fault {fault} up to order {v_max}");
            print!("{}", report::attempts(&attempts));
            return Ok(ExitCode::from(1));
        }
        Err(e) => return Err(e.into()),
    };
    for m in &bank.members {
        println!("== fault {} ({} exo-system)", m.fault, m.kind);
        print!("{}", report::observer(&m.observer));
        print!("{}", report::conditions(&m.report));
    }
    let dir = out_path(a.output, "bank");
    let manifest = bank.save(&dir, Some(&a.model.display().to_string()))?;
    for e in &manifest.observers {
        println!("{} -> {}", e.fault, dir.join(&e.file).display());
    }
    println!("manifest {}", dir.join(ddfo::diagnose::MANIFEST).display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_bank_run(a: BankRunArgs) -> Result<ExitCode> {
    let model = load_model(&a.model)?;
    let bank = match FaultBank::load(&a.bank, &model, 1, 1e-6) {
        Ok(b) => b,
        Err(e @ ddfo::diagnose::BankError::Unverified { .. }) => {
            println!("{e}");
            return Ok(ExitCode::from(1));
        }
        Err(e) => return Err(e.into()),
    };
    let mut sc = load_scenario(&a.scenario, None)?;
    let h = match sc.h {
        Some(h) => h,
        None => {
            let x0 = sc.initial_state(&model.states)?;
            let obs: Vec<&ObserverRealization> = bank.members.iter().map(|m| &m.observer).collect();
            default_step(&model, &obs, &x0, sc.t_end)?
        }
    };
    sc.h = Some(h);
    let mut policy = if a.thresholds.len() < bank.members.len() {
        calibrate(&bank, &model, &sc, h)?
    } else {
        DetectionPolicy::new(&[], 10.0 * h)
    };
    for t in &a.thresholds {
        let (f, d) = t.split_once('=').ok_or_else(|| anyhow!("--threshold `{t}`: expected fault=delta"))?;
        if bank.member(f.trim()).is_none() {
            bail!("--threshold `{t}`: bank has no observer for `{}`", f.trim());
        }
        policy.thresholds.insert(f.trim().to_string(), numbers(d, "--threshold")?[0]);
    }
    if let Some(hold) = a.hold {
        policy.hold = hold;
    }
    policy.arm_on_settle = !a.no_arm;
    let run = run_bank(&bank, &model, &sc)?;
    let events = detect(&run.estimates(), &policy);
    println!("ran {} steps of h = {} to t = {}", run.traces[0].len() - 1, report::sig6(h), report::sig6(sc.t_end));
    println!("hold {} s", report::sig6(policy.hold));
    for f in &run.faults {
        println!("threshold {f}: {}", report::sig6(policy.thresholds[f]));
    }
    if events.is_empty() {
        println!("no faults detected");
    }
    for e in &events {
        println!("detected {} at t = {} (peak |estimate| {})", e.fault, report::sig6(e.time), report::sig6(e.peak));
    }
    let dir = out_path(a.output, "bank_run");
    for (f, tr) in run.faults.iter().zip(&run.traces) {
        let path = dir.join(format!("fault_{f}.csv"));
        write(&path, &tr.decimate(a.every).to_csv())?;
        println!("{f} estimate {}", path.display());
    }
    let path = dir.join("events.csv");
    write(&path, &events_report(&run, &events))?;
    println!("events {}", path.display());
    if a.plot {
        let thin: Vec<Trajectory> = run.traces.iter().map(|t| t.decimate(a.every)).collect();
        let labels: Vec<(String, String)> = run.faults.iter().map(|f| (f.clone(), format!("{f} estimate"))).collect();
        let mut series = Vec::new();
        for (tr, (truth, est)) in thin.iter().zip(&labels) {
            series.push(Series { label: truth, y: &tr.z, dashed: false });
            series.push(Series { label: est, y: &tr.zhat, dashed: true });
        }
        let path = dir.join("estimates.svg");
        write(&path, &line_plot("fault estimates", "t", &thin[0].t, &series))?;
        println!("plot {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_steady(a: SteadyArgs) -> Result<ExitCode> {
    let model = load_model(&a.model)?;
    let guess = match &a.guess {
        Some(g) => numbers(g, "--guess")?,
        None => model.sampling_box(1.0).iter().map(|b| 0.5 * (b.lo + b.hi)).collect(),
    };
    if guess.len() != model.n() {
        bail!("--guess has {} entries, model has {} states", guess.len(), model.n());
    }
    let opts = SteadyStateOptions {
        tol: a.tol,
        max_iter: a.max_iter,
    };
    let op = model.find_steady_state(&guess, &opts)?;
    println!("operating point after {} iterations, max |F(x_s)| = {:.4e}", op.iterations, op.residual);
    for (s, v) in model.states.iter().zip(&op.state) {
        println!("  {s} = {v:?}");
    }
    if let Some(r) = &a.reference {
        let r = numbers(r, "--reference")?;
        if r.len() != model.n() {
            bail!("--reference has {} entries, model has {} states", r.len(), model.n());
        }
        println!("relative deviation from reference:");
        for ((s, v), rv) in model.states.iter().zip(&op.state).zip(&r) {
            println!("  {s}: {} vs {} ({:+.3e})", report::sig6(*v), report::sig6(*rv), (v - rv) / rv.abs().max(f64::MIN_POSITIVE));
        }
    }
    if let Some(path) = a.deviation_out {
        let dev = model.to_deviation_form(&op);
        let point: Vec<String> = model.states.iter().zip(&op.state).map(|(s, v)| format!("{s} = {v:?}")).collect();
        let text = format!(
            "# Deviation form of {} about the operating point\n# {}\n\n{}",
            a.model.display(),
            point.join(", "),
            dev.to_text()
        );
        write(&path, &text)?;
        println!("deviation model {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}
