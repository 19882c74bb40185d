use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rhotraj_core::bench::{run_bench, write_bench_csv, BenchPlan};
use rhotraj_core::comms::{monte_carlo_throughput, throughput, ScheduleViolation};
use rhotraj_core::io::{read_schedule, read_trajectory, write_schedule, write_trajectory};
use rhotraj_core::kinematics::{check_feasibility, ViolationKind};
use rhotraj_core::scenario::{load_scenario, random_layout, reference_scenario, save_scenario};
use rhotraj_core::{
    solve_conventional, solve_rho, Error, Fading, Method, PlannerSettings, RhoConfig, ScenarioFile,
};

#[derive(Parser)]
#[command(name = "rhotraj", version, about = "Energy-efficient fixed-wing UAV trajectory planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize trajectory and schedule; writes trajectory.csv, schedule.csv and report.json.
    Solve(SolveArgs),
    /// Check a trajectory and schedule against the scenario limits.
    Validate(ValidateArgs),
    /// Time both methods over a list of periods.
    Bench(BenchArgs),
    /// Compare fading Monte-Carlo throughput with the model bound.
    Montecarlo(MonteCarloArgs),
    /// Write a scenario with randomly placed nodes.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Conventional,
    Rho,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Conventional => Method::Conventional,
            MethodArg::Rho => Method::Rho,
        }
    }
}

#[derive(Args, Clone)]
struct Horizon {
    /// Fine segment length Δ1 in meters.
    #[arg(long)]
    delta1: Option<f64>,
    /// Coarse segment length Δ2 in meters.
    #[arg(long)]
    delta2: Option<f64>,
    /// Executed part of each window, seconds.
    #[arg(long)]
    te: Option<f64>,
    /// Window length, seconds.
    #[arg(long)]
    window: Option<f64>,
}

#[derive(Args, Clone)]
struct Tolerances {
    #[arg(long)]
    tol_feas: Option<f64>,
    #[arg(long)]
    tol_opt: Option<f64>,
}

impl Tolerances {
    fn settings(&self) -> PlannerSettings {
        let mut s = PlannerSettings::default();
        if let Some(t) = self.tol_feas {
            s.solver.feas_tol = t;
        }
        if let Some(t) = self.tol_opt {
            s.solver.opt_tol = t;
        }
        s
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    horizon: Horizon,
    #[command(flatten)]
    tol: Tolerances,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    /// Relative tolerance on speed and acceleration limits.
    #[arg(long, default_value_t = 1e-6)]
    tol_feas: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated periods in seconds.
    #[arg(long, value_delimiter = ',', required = true)]
    t_list: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["conventional", "rho"])]
    methods: Vec<MethodArg>,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    horizon: Horizon,
    #[command(flatten)]
    tol: Tolerances,
}

#[derive(Args)]
struct MonteCarloArgs {
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `none`, `rayleigh` or `rician:K`.
    #[arg(long, default_value = "rayleigh", value_parser = parse_fading)]
    fading: Fading,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 3)]
    nodes: usize,
    /// Side of the square area, meters.
    #[arg(long, default_value_t = 800.0)]
    side: f64,
    #[arg(long, default_value_t = 120.0)]
    period: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    horizon: Horizon,
}

fn parse_fading(s: &str) -> Result<Fading, String> {
    match s {
        "none" => Ok(Fading::None),
        "rayleigh" => Ok(Fading::Rayleigh),
        _ => match s.strip_prefix("rician:") {
            Some(k) => k
                .parse::<f64>()
                .ok()
                .filter(|k| *k >= 0.0)
                .map(|k| Fading::Rician { k })
                .ok_or_else(|| format!("bad Rician K factor: {k}")),
            None => Err(format!("unknown fading `{s}`")),
        },
    }
}

const DEFAULT_DELTA1: f64 = 30.0;

fn delta1(h: &Horizon, file: &ScenarioFile) -> f64 {
    h.delta1
        .or(file.rho.map(|r| r.delta1_m))
        .unwrap_or(DEFAULT_DELTA1)
}

/// Flags override the scenario file's `rho` section field by field.
fn rho_config(h: &Horizon, file: &ScenarioFile) -> Result<RhoConfig, Error> {
    let base = file.rho;
    let pick = |flag: Option<f64>, from_file: Option<f64>, name: &str| {
        flag.or(from_file).ok_or_else(|| Error::Invalid {
            field: name.into(),
            reason: format!("needed for the rho method; pass --{name} or add a `rho` section"),
        })
    };
    Ok(RhoConfig {
        delta1_m: delta1(h, file),
        delta2_m: pick(h.delta2, base.map(|r| r.delta2_m), "delta2")?,
        window_s: pick(h.window, base.map(|r| r.window_s), "window")?,
        execute_s: pick(h.te, base.map(|r| r.execute_s), "te")?,
    })
}

fn fail(err: &Error) -> ExitCode {
    #[derive(Serialize)]
    struct ErrorDoc<'a> {
        error: &'a str,
        message: String,
    }
    let doc = ErrorDoc {
        error: err.code(),
        message: err.to_string(),
    };
    println!("{}", serde_json::to_string(&doc).expect("error serializes"));
    ExitCode::from(2)
}

fn write_json(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, format!("{text}\n"))?;
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<ExitCode, Error> {
    let file = load_scenario(&args.scenario)?;
    let settings = args.tol.settings();
    let method: Method = args.method.into();
    let sol = match method {
        Method::Conventional => solve_conventional(&file.scenario, delta1(&args.horizon, &file), &settings)?,
        Method::Rho => solve_rho(&file.scenario, &rho_config(&args.horizon, &file)?, &settings)?,
    };
    fs::create_dir_all(&args.out)?;
    write_trajectory(args.out.join("trajectory.csv"), &sol.plan)?;
    write_schedule(args.out.join("schedule.csv"), &sol.schedule)?;
    write_json(&args.out.join("report.json"), &sol.report.to_json())?;
    let r = &sol.report;
    println!(
        "method={} ee_bpj={:.6} min_bits={:.6e} energy_j={:.3} windows={} wall_s={:.3}",
        r.method,
        r.ee_bpj,
        r.min_bits,
        r.energy.total_j,
        r.windows.len(),
        r.timing.total_s
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(args: &ValidateArgs) -> Result<ExitCode, Error> {
    let file = load_scenario(&args.scenario)?;
    let s = &file.scenario;
    let plan = read_trajectory(&args.trajectory)?;
    let sched = read_schedule(&args.schedule)?;
    let feas = check_feasibility(&plan, &s.uav, args.tol_feas);

    let mut checks: Vec<(&str, bool, String)> = Vec::new();
    let kind_check = |kind: ViolationKind, name: &'static str| {
        let v = feas.first(kind);
        let detail = match v {
            Some(v) => format!("slot {} value {:.6} limit {:.6}", v.index, v.value, v.limit),
            None => String::new(),
        };
        (name, v.is_none(), detail)
    };
    checks.push(kind_check(ViolationKind::SpeedAboveMax, "speed_max"));
    checks.push(kind_check(ViolationKind::SpeedBelowMin, "speed_min"));
    checks.push(kind_check(ViolationKind::AccelAboveMax, "accel_max"));
    checks.push(kind_check(ViolationKind::Dynamics, "dynamics"));

    let shape_ok = sched.slots() == plan.len() && sched.nodes() == s.num_nodes();
    checks.push((
        "schedule_shape",
        shape_ok,
        format!("{} x {} for {} slots, {} nodes", sched.slots(), sched.nodes(), plan.len(), s.num_nodes()),
    ));
    let sv = sched.violations(1e-9);
    let neg = sv.iter().find(|v| matches!(v, ScheduleViolation::Negative { .. }));
    let full = sv.iter().find(|v| matches!(v, ScheduleViolation::OverFull { .. }));
    checks.push(("schedule_nonneg", neg.is_none(), neg.map(|v| format!("{v:?}")).unwrap_or_default()));
    checks.push(("schedule_simplex", full.is_none(), full.map(|v| format!("{v:?}")).unwrap_or_default()));

    let (q0, v0) = plan.start();
    let (q1, v1) = plan.end();
    let d1 = plan.grid.fine_duration() * s.uav.v_max;
    let (dq, dv) = ((q1 - q0).norm(), (v1 - v0).norm());
    let closed = dq <= d1 && dv <= args.tol_feas * s.uav.v_max;
    checks.push(("periodic_closure", closed, format!("|dq| {dq:.3e} m, |dv| {dv:.3e} m/s")));

    for (name, ok, detail) in &checks {
        let tag = if *ok { "PASS" } else { "FAIL" };
        if detail.is_empty() || *ok && *name != "periodic_closure" {
            println!("{tag} {name}");
        } else {
            println!("{tag} {name}: {detail}");
        }
    }
    if shape_ok {
        if let Ok(tp) = throughput(&plan, &sched, s, &vec![0.0; s.num_nodes()]) {
            if let Ok(e) = rhotraj_core::energy::plan_energy(&plan, &s.uav, 0.0) {
                println!("ee_bpj={:.6} min_bits={:.6e}", tp.min_bits / e.total_j, tp.min_bits);
            }
        }
    }
    let all = checks.iter().all(|c| c.1);
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_bench(args: &BenchArgs) -> Result<ExitCode, Error> {
    let file = load_scenario(&args.scenario)?;
    let plan = BenchPlan {
        periods: args.t_list.clone(),
        methods: args.methods.iter().map(|&m| m.into()).collect(),
        rho: rho_config(&args.horizon, &file)?,
        reps: args.reps,
        settings: args.tol.settings(),
    };
    let rows = run_bench(&file.scenario, &plan);
    write_bench_csv(&args.out, &rows)?;
    for r in &rows {
        println!(
            "t_s={} method={} wall_s={:.3} ee_bpj={:.6} status={}",
            r.t_s, r.method, r.wall_s, r.ee_bpj, r.status
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct NodeBound {
    node: usize,
    mean_bits: f64,
    stderr_bits: f64,
    bound_bits: f64,
    pass: bool,
}

#[derive(Serialize)]
struct BoundReport {
    fading: Fading,
    samples: usize,
    seed: u64,
    nodes: Vec<NodeBound>,
    pass: bool,
}

fn cmd_montecarlo(args: &MonteCarloArgs) -> Result<ExitCode, Error> {
    let file = load_scenario(&args.scenario)?;
    let s = &file.scenario;
    let plan = read_trajectory(&args.trajectory)?;
    let sched = read_schedule(&args.schedule)?;
    let bound = throughput(&plan, &sched, s, &vec![0.0; s.num_nodes()])?;
    let mc = monte_carlo_throughput(&plan, &sched, s, args.fading, args.samples, args.seed)?;
    let nodes: Vec<NodeBound> = (0..s.num_nodes())
        .map(|l| {
            let (m, se, b) = (mc.mean_bits[l], mc.stderr_bits[l], bound.per_node_bits[l]);
            NodeBound {
                node: l,
                mean_bits: m,
                stderr_bits: se,
                bound_bits: b,
                pass: m <= b + 3.0 * se,
            }
        })
        .collect();
    let report = BoundReport {
        fading: mc.fading,
        samples: mc.samples,
        seed: mc.seed,
        pass: nodes.iter().all(|n| n.pass),
        nodes,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(out) = &args.out {
        write_json(out, &text)?;
    }
    println!("{text}");
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_generate(args: &GenerateArgs) -> Result<ExitCode, Error> {
    let nodes = random_layout(args.nodes, args.side, args.seed);
    let scenario = reference_scenario(nodes, args.period);
    let h = &args.horizon;
    let rho = match (h.delta2, h.window, h.te) {
        (Some(d2), Some(w), Some(te)) => Some(RhoConfig {
            delta1_m: h.delta1.unwrap_or(DEFAULT_DELTA1),
            delta2_m: d2,
            window_s: w,
            execute_s: te,
        }),
        _ => None,
    };
    let file = ScenarioFile { scenario, rho };
    file.validate()?;
    save_scenario(&args.out, &file)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RHO_TRAJ_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Montecarlo(a) => cmd_montecarlo(a),
        Command::Generate(a) => cmd_generate(a),
    };
    result.unwrap_or_else(|e| fail(&e))
}
