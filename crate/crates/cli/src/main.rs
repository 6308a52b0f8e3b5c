use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use slobatch::io::{self, ProvisionReport, RunConfig, WorkloadFile, FORMAT_VERSION};
use slobatch::perfmodel::{predict, FunctionConfig};
use slobatch::profile::{
    estimate_tau, fit_cpu_coeffs, fit_gpu_coeffs, ModelProfile, PlatformEntry, PricingConfig, ProfileDocument,
    DEFAULT_TAU_RANGE,
};
use slobatch::provisioner::{verify, KneeMode, ProvisionOptions, ProvisionResult, Provisioner, Strategy};
use slobatch::simulator::{self, LatencyMode, SimConfig};
use slobatch::AppSpec;

#[derive(Parser)]
#[command(name = "slobatch", version, about = "Cost-minimal CPU/GPU serverless provisioning for multi-SLO inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit latency coefficients from profiling samples into a profile file.
    Fit(FitArgs),
    /// Compute a provisioning plan for a workload.
    Provision(ProvisionArgs),
    /// Simulate a plan under Poisson load or a replayed trace.
    Simulate(SimulateArgs),
    /// Locate the CPU/GPU crossover rate and dump cost curves.
    Knee(KneeArgs),
    /// Run all strategies on one workload and simulate each.
    Compare(CompareArgs),
    /// Evaluate the latency model for one configuration.
    Predict(PredictArgs),
    /// Write a synthetic Poisson trace for a workload.
    GenTrace(GenTraceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    CpuAvg,
    CpuMax,
    Gpu,
    Tau,
}

#[derive(Clone, Copy, ValueEnum)]
enum KneeModeArg {
    Global,
    PerWindow,
}

impl From<KneeModeArg> for KneeMode {
    fn from(k: KneeModeArg) -> Self {
        match k {
            KneeModeArg::Global => KneeMode::Global,
            KneeModeArg::PerWindow => KneeMode::PerWindow,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    AnalyticSampled,
    SliceExact,
}

impl From<ModeArg> for LatencyMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::AnalyticSampled => LatencyMode::AnalyticSampled,
            ModeArg::SliceExact => LatencyMode::SliceExact,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// CSV samples: `batch,cores,latency_seconds` (CPU), `batch,latency_seconds`
    /// (GPU) or `mem,l0_seconds,max_seconds` (tau).
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, value_enum)]
    which: Which,
    /// Existing profile to update; a new document is started otherwise.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Where to write the profile (defaults to --profile).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    workload: PathBuf,
    /// Overrides the workload's profile_path.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Overrides the workload's pricing.
    #[arg(long)]
    pricing: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    /// Shard count for mbs+ (all counts tried when omitted).
    #[arg(long)]
    shards: Option<usize>,
    #[arg(long, value_enum, default_value = "per-window")]
    knee_mode: KneeModeArg,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 3600.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    replications: u32,
    #[arg(long, value_enum, default_value = "analytic-sampled")]
    latency_mode: ModeArg,
}

#[derive(Args)]
struct ProvisionArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value = "harmony")]
    strategy: Strategy,
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Report written by `provision`.
    #[arg(long)]
    plan: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
    /// Replay `timestamp_seconds,app_id` records instead of Poisson arrivals.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Per-request CSV log.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KneeArgs {
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    pricing: Option<PathBuf>,
    /// SLO for the rate sweep and the knee search.
    #[arg(long)]
    slo: f64,
    /// Rate for the SLO sweep.
    #[arg(long, default_value_t = 20.0)]
    rate: f64,
    /// SLO sweep range and step, seconds.
    #[arg(long, num_args = 3, value_names = ["MIN", "MAX", "STEP"], default_values_t = [0.1, 2.0, 0.02])]
    slo_range: Vec<f64>,
    /// JSON summary; `<stem>_rate.csv` and `<stem>_slo.csv` are written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    plan: PlanArgs,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Cpu,
    Gpu,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    cores: Option<f64>,
    #[arg(long)]
    mem: Option<u32>,
    #[arg(long)]
    batch: u32,
    #[arg(long)]
    pricing: Option<PathBuf>,
}

#[derive(Args)]
struct GenTraceArgs {
    #[arg(long)]
    workload: PathBuf,
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes, mapped to exit codes.
enum Failure {
    Infeasible(String),
    Input(String),
    Invariant(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Infeasible(_) => 2,
            Failure::Input(_) => 3,
            Failure::Invariant(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Infeasible(m) | Failure::Input(m) | Failure::Invariant(m) => m,
        }
    }
}

impl From<slobatch::Error> for Failure {
    fn from(e: slobatch::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<slobatch::provisioner::Infeasible> for Failure {
    fn from(e: slobatch::provisioner::Infeasible) -> Self {
        Failure::Infeasible(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn input_err(context: &str, e: impl std::fmt::Display) -> Failure {
    Failure::Input(format!("{context}: {e}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Provision(a) => cmd_provision(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Knee(a) => cmd_knee(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Predict(a) => cmd_predict(a),
        Command::GenTrace(a) => cmd_gen_trace(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| input_err(&format!("writing {}", p.display()), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Outcome {
    emit(out, &io::to_json(value)?)
}

/// Profile, pricing, applications and digests resolved from the flags.
struct Loaded {
    profile: ModelProfile,
    pricing: PricingConfig,
    apps: Vec<AppSpec>,
    config: RunConfig,
}

fn load_inputs(inputs: &Inputs, command: &str) -> Result<Loaded, Failure> {
    let text = std::fs::read_to_string(&inputs.workload)
        .map_err(|e| input_err(&format!("reading {}", inputs.workload.display()), e))?;
    let workload = WorkloadFile::from_json(&text).map_err(|e| input_err("workload", e))?;
    let base = inputs.workload.parent().unwrap_or(Path::new("."));
    let profile_path = inputs
        .profile
        .clone()
        .or_else(|| workload.profile_path_from(base))
        .ok_or_else(|| Failure::Input("no profile: pass --profile or set profile_path in the workload".into()))?;
    let profile = ModelProfile::load(&profile_path).map_err(|e| input_err(&format!("profile {}", profile_path.display()), e))?;
    let pricing = match &inputs.pricing {
        Some(p) => io::load_pricing(p).map_err(|e| input_err("pricing", e))?,
        None => workload.pricing,
    };
    let config = RunConfig {
        command: command.into(),
        profile_sha256: Some(io::sha256_file(&profile_path)?),
        workload_sha256: Some(io::sha256_hex(text.as_bytes())),
        pricing: Some(pricing),
        flags: Default::default(),
    };
    Ok(Loaded { profile, pricing, apps: workload.apps()?, config })
}

fn options(plan: &PlanArgs) -> ProvisionOptions {
    ProvisionOptions { knee_mode: plan.knee_mode.into(), ..Default::default() }
}

fn plan_flags(config: &mut RunConfig, plan: &PlanArgs) {
    config.flags.insert("shards".into(), json!(plan.shards));
    let mode: KneeMode = plan.knee_mode.into();
    config.flags.insert("knee_mode".into(), serde_json::to_value(mode).unwrap_or(Value::Null));
}

fn sim_config(sim: &SimArgs) -> SimConfig {
    SimConfig {
        duration: sim.duration,
        seed: sim.seed,
        latency_mode: sim.latency_mode.into(),
        replications: sim.replications,
        keep_log: false,
    }
}

/// Re-checks every plan; any violation is an internal error.
fn audit(profile: &ModelProfile, result: &ProvisionResult) -> Outcome {
    for plan in &result.plans {
        // baselines that size on average latency are allowed to be unsafe; they carry a flag instead
        if plan.slo_risk {
            continue;
        }
        let v = verify::check_plan(profile, plan);
        if !v.is_empty() {
            let msgs: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            return Err(Failure::Invariant(format!("plan {} fails re-verification: {}", plan.notation(), msgs.join("; "))));
        }
    }
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Outcome {
    let mut doc = match &a.profile {
        Some(p) if p.exists() => {
            let text = std::fs::read_to_string(p).map_err(|e| input_err(&format!("reading {}", p.display()), e))?;
            serde_json::from_str::<ProfileDocument>(&text).map_err(|e| input_err("profile", e))?
        }
        _ => ProfileDocument::default(),
    };
    let out = a
        .out
        .clone()
        .or_else(|| a.profile.clone())
        .ok_or_else(|| Failure::Input("pass --out or --profile".into()))?;

    let summary = match a.which {
        Which::CpuAvg | Which::CpuMax => {
            let max_variant = matches!(a.which, Which::CpuMax);
            let by_batch = io::read_cpu_samples(&a.samples)?;
            let mut fits = Vec::new();
            for (b, samples) in by_batch {
                let fit = fit_cpu_coeffs(&samples).map_err(|e| input_err(&format!("batch {b}"), e))?;
                if fit.degenerate {
                    log::warn!("batch {b}: samples show no decay in cores; flat fit used");
                }
                doc.set_cpu(max_variant, b, fit.coeffs);
                fits.push(json!({
                    "batch": b, "alpha": fit.coeffs.alpha, "beta": fit.coeffs.beta,
                    "gamma": fit.coeffs.gamma, "rms": fit.rms, "degenerate": fit.degenerate,
                }));
            }
            json!({ "which": if max_variant { "cpu-max" } else { "cpu-avg" }, "fits": fits })
        }
        Which::Gpu => {
            let samples = io::read_gpu_samples(&a.samples)?;
            let fit = fit_gpu_coeffs(&samples)?;
            if let Some(w) = &fit.warning {
                eprintln!("warning: {w}");
            }
            doc.gpu = Some(fit.coeffs);
            json!({ "which": "gpu", "xi1": fit.coeffs.xi1, "xi2": fit.coeffs.xi2, "rms": fit.rms, "warning": fit.warning })
        }
        Which::Tau => {
            let rows = io::read_tau_samples(&a.samples)?;
            let mut platform = doc.platform.unwrap_or(PlatformEntry { m_max: 24, tau: 0.0, mem_step: 1 });
            let estimates = rows
                .iter()
                .map(|&(m, l0, max)| estimate_tau(l0, max, m, platform.m_max, DEFAULT_TAU_RANGE))
                .collect::<Result<Vec<_>, _>>()?;
            // a slice length every observation admits, preferring the largest
            let agree = |t: f64| estimates.iter().all(|e| e.aliases.iter().any(|&x| ((x - t) / t).abs() < 1e-6));
            let tau = estimates[0].aliases.iter().copied().find(|&t| agree(t)).unwrap_or(estimates[0].tau);
            platform.tau = tau;
            doc.platform = Some(platform);
            let aliases: Vec<&Vec<f64>> = estimates.iter().map(|e| &e.aliases).collect();
            json!({ "which": "tau", "tau": tau, "aliases": aliases })
        }
    };
    std::fs::write(&out, doc.to_json_pretty()).map_err(|e| input_err(&format!("writing {}", out.display()), e))?;
    emit_json(None, &summary)
}

fn cmd_provision(a: ProvisionArgs) -> Outcome {
    let mut l = load_inputs(&a.inputs, "provision")?;
    l.config.flags.insert("strategy".into(), json!(a.strategy.name()));
    plan_flags(&mut l.config, &a.plan);
    let prov = Provisioner::with_options(&l.profile, l.pricing, options(&a.plan));
    let result = prov.provision(a.strategy, &l.apps, a.plan.shards)?;
    audit(&l.profile, &result)?;
    emit_json(a.out.as_deref(), &ProvisionReport::new(l.config, result))
}

fn cmd_simulate(a: SimulateArgs) -> Outcome {
    let mut l = load_inputs(&a.inputs, "simulate")?;
    let plan = ProvisionReport::load(&a.plan).map_err(|e| input_err(&format!("plan {}", a.plan.display()), e))?;
    let mut cfg = sim_config(&a.sim);
    cfg.keep_log = a.log.is_some();
    l.config.flags.insert("plan_sha256".into(), json!(io::sha256_file(&a.plan)?));

    let known: std::collections::BTreeSet<&str> = l.apps.iter().map(|x| x.id.as_str()).collect();
    for p in &plan.result.plans {
        for app in p.group.apps() {
            if !known.contains(app.id.as_str()) {
                return Err(Failure::Input(format!("plan serves `{}`, which the workload does not list", app.id)));
            }
        }
    }
    audit(&l.profile, &plan.result)?;

    let output = match &a.trace {
        Some(path) => {
            let file = std::fs::File::open(path).map_err(|e| input_err(&format!("trace {}", path.display()), e))?;
            let trace = simulator::read_trace(std::io::BufReader::new(file))?;
            l.config.flags.insert("trace_sha256".into(), json!(io::sha256_file(path)?));
            simulator::simulate_trace(&plan.result, &l.profile, &l.pricing, &cfg, &trace)?
        }
        None => simulator::simulate(&plan.result, &l.profile, &l.pricing, &cfg)?,
    };
    if let Some(path) = &a.log {
        let f = std::fs::File::create(path).map_err(|e| input_err(&format!("writing {}", path.display()), e))?;
        output.write_log_csv(std::io::BufWriter::new(f))?;
    }
    let report = json!({ "format_version": FORMAT_VERSION, "config": l.config, "report": output.report });
    emit_json(a.out.as_deref(), &report)
}

fn curve_csv(x_name: &str, points: &[slobatch::provisioner::CurvePoint]) -> String {
    let mut s = format!("{x_name},cpu_cost,gpu_cost,optimal\n");
    let cell = |c: Option<f64>| c.map_or(String::new(), |v| format!("{v:.6e}"));
    for p in points {
        let kind = match p.optimal {
            Some(slobatch::FunctionKind::Cpu) => "cpu",
            Some(slobatch::FunctionKind::Gpu) => "gpu",
            None => "none",
        };
        s.push_str(&format!("{},{},{},{}\n", p.x, cell(p.cpu_cost), cell(p.gpu_cost), kind));
    }
    s
}

/// Consecutive runs of the optimal kind along a curve.
fn kind_runs(points: &[slobatch::provisioner::CurvePoint]) -> Vec<Value> {
    let mut runs: Vec<(Option<slobatch::FunctionKind>, f64, f64)> = Vec::new();
    for p in points {
        match runs.last_mut() {
            Some(r) if r.0 == p.optimal => r.2 = p.x,
            _ => runs.push((p.optimal, p.x, p.x)),
        }
    }
    runs.into_iter().map(|(k, from, to)| json!({ "kind": k, "from": from, "to": to })).collect()
}

fn cmd_knee(a: KneeArgs) -> Outcome {
    let profile = ModelProfile::load(&a.profile).map_err(|e| input_err("profile", e))?;
    let pricing = match &a.pricing {
        Some(p) => io::load_pricing(p)?,
        None => PricingConfig::alibaba_2023(),
    };
    if !(a.slo > 0.0 && a.rate > 0.0) {
        return Err(Failure::Input("--slo and --rate must be positive".into()));
    }
    let [lo, hi, step] = a.slo_range[..] else {
        return Err(Failure::Input("--slo-range takes MIN MAX STEP".into()));
    };
    if !(lo > 0.0 && hi >= lo && step > 0.0) {
        return Err(Failure::Input("--slo-range needs 0 < MIN <= MAX and STEP > 0".into()));
    }
    let prov = Provisioner::new(&profile, pricing);
    let knee = prov.knee_rate(a.slo);
    let rate_curve = prov.rate_curve(a.slo, &prov.options().knee_grid.rates());
    let n = ((hi - lo) / step).round() as usize;
    let slos: Vec<f64> = (0..=n).map(|k| ((lo + k as f64 * step) * 1e9).round() / 1e9).collect();
    let slo_curve = prov.slo_curve(a.rate, &slos);

    let config = RunConfig {
        command: "knee".into(),
        profile_sha256: Some(io::sha256_file(&a.profile)?),
        workload_sha256: None,
        pricing: Some(pricing),
        flags: [("slo", json!(a.slo)), ("rate", json!(a.rate)), ("slo_range", json!(a.slo_range))]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
    };
    let summary = json!({
        "format_version": FORMAT_VERSION,
        "config": config,
        "knee_rate": if knee.is_finite() { json!(knee) } else { Value::Null },
        "rate_curve_runs": kind_runs(&rate_curve),
        "slo_curve_runs": kind_runs(&slo_curve),
    });
    if let Some(out) = &a.out {
        let stem = out.with_extension("");
        let side = |suffix: &str| PathBuf::from(format!("{}_{suffix}.csv", stem.display()));
        emit(Some(&side("rate")), &curve_csv("rate", &rate_curve))?;
        emit(Some(&side("slo")), &curve_csv("slo", &slo_curve))?;
    }
    emit_json(a.out.as_deref(), &summary)
}

fn cmd_compare(a: CompareArgs) -> Outcome {
    let mut l = load_inputs(&a.inputs, "compare")?;
    plan_flags(&mut l.config, &a.plan);
    let cfg = sim_config(&a.sim);
    l.config.flags.insert("sim".into(), serde_json::to_value(&cfg).unwrap_or(Value::Null));
    let prov = Provisioner::with_options(&l.profile, l.pricing, options(&a.plan));

    let mut rows = Vec::new();
    let mut table = String::from("strategy  groups  predicted_cost  normalized  realized_cost  max_violation  slo_risk\n");
    let batch_cost = prov.batch_baseline(&l.apps).ok().map(|r| r.total_cost);
    for strategy in [Strategy::Batch, Strategy::MbsPlus, Strategy::Harmony] {
        match prov.provision(strategy, &l.apps, a.plan.shards) {
            Ok(result) => {
                audit(&l.profile, &result)?;
                let sim = simulator::simulate(&result, &l.profile, &l.pricing, &cfg)?.report;
                let max_violation = sim.apps.iter().map(|x| x.violation_rate).fold(0.0, f64::max);
                let risky = result.plans.iter().filter(|p| p.slo_risk).count();
                let normalized = batch_cost.map(|b| result.total_cost / b);
                table.push_str(&format!(
                    "{:<8}  {:>6}  {:>14.4e}  {:>10}  {:>13.4e}  {:>13.4}  {:>8}\n",
                    strategy.name(),
                    result.plans.len(),
                    result.total_cost,
                    normalized.map_or("-".into(), |n| format!("{n:.3}")),
                    sim.totals.realized_cost,
                    max_violation,
                    risky
                ));
                rows.push(json!({
                    "strategy": strategy.name(),
                    "feasible": true,
                    "predicted_cost": result.total_cost,
                    "normalized_cost": normalized,
                    "realized_cost": sim.totals.realized_cost,
                    "violation_rate": sim.totals.violation_rate,
                    "max_app_violation_rate": max_violation,
                    "slo_risk_groups": risky,
                    "plans": result.plans.iter().map(|p| p.notation()).collect::<Vec<_>>(),
                }));
            }
            Err(e) => {
                table.push_str(&format!("{:<8}  infeasible ({})\n", strategy.name(), e.apps.join(", ")));
                rows.push(json!({ "strategy": strategy.name(), "feasible": false, "infeasible_apps": e.apps }));
            }
        }
    }
    let report = json!({ "format_version": FORMAT_VERSION, "config": l.config, "strategies": rows });
    if a.out.is_some() {
        print!("{table}");
    }
    emit_json(a.out.as_deref(), &report)
}

fn cmd_predict(a: PredictArgs) -> Outcome {
    let profile = ModelProfile::load(&a.profile).map_err(|e| input_err("profile", e))?;
    let config = match a.kind {
        KindArg::Cpu => FunctionConfig::cpu(a.cores.ok_or_else(|| Failure::Input("--cores is required for cpu".into()))?),
        KindArg::Gpu => FunctionConfig::gpu(a.mem.ok_or_else(|| Failure::Input("--mem is required for gpu".into()))?),
    };
    config.validate(&profile)?;
    let e = predict(&profile, &config, a.batch)?;
    let pricing = match &a.pricing {
        Some(p) => io::load_pricing(p)?,
        None => PricingConfig::alibaba_2023(),
    };
    let cost = slobatch::batching::cost_per_request(&profile, &pricing, &config, a.batch)?;
    emit_json(None, &json!({ "config": config, "batch": a.batch, "avg": e.avg, "max": e.max, "cost_per_request": cost }))
}

fn cmd_gen_trace(a: GenTraceArgs) -> Outcome {
    let text = std::fs::read_to_string(&a.workload).map_err(|e| input_err(&format!("reading {}", a.workload.display()), e))?;
    let apps = WorkloadFile::from_json(&text)?.apps()?;
    if !(a.duration > 0.0) {
        return Err(Failure::Input("--duration must be positive".into()));
    }
    let rates: Vec<f64> = apps.iter().map(|x| x.rate).collect();
    let streams = simulator::generate_arrivals(&rates, a.duration, a.seed);
    let mut s = String::from("timestamp_seconds,app_id\n");
    for (t, i) in simulator::merge_streams(&streams) {
        s.push_str(&format!("{t:.6},{}\n", apps[i].id));
    }
    emit(a.out.as_deref(), &s)
}
