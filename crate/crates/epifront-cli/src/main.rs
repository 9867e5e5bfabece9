//! Command-line driver: runs scenarios to CSV/JSON, executes the named
//! validation suites at full scale, integrates the deterministic benchmark,
//! and exposes the sweep, rescaling, and barrier tools.

use clap::{Parser, Subcommand};
use epifront::analysis::{
    compute_v, l2_decay, martingale_test_scaled, sir_integrate, tau_law_check, tie_stats,
};
use epifront::coefficients::{
    CoefficientSet, Diffusion, Drift, InitialFamily, InitialLaw, KernelFamily, KernelSpec, Rate,
};
use epifront::epidemic::{run, Mode, RunConfig, SystemTrace};
use epifront::lamperti::{
    distribution_check, local_time_rescaling_check, pathwise_gap_constant_sigma, TransformContext,
};
use epifront::scenario::parse_scenario;
use epifront::{Error, Result};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "epifront", version, about = "Epidemic front particle-system simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trace.csv, infections.csv, summary.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides the scenario's [output] section.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named validation suite at full scale and print a JSON report.
    Validate {
        /// One of: invariants, martingale, decay, tau-law, lamperti, ties, barnes.
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 12345)]
        seed: u64,
        /// Debug control: double the compensator so the martingale suite must fail.
        #[arg(long)]
        corrupt_v: bool,
    },
    /// Integrate the deterministic epidemic benchmark and print or write CSV.
    Sir {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        dbar: f64,
        #[arg(long)]
        i0: f64,
        #[arg(long)]
        c0: f64,
        #[arg(long, value_name = "T")]
        horizon: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Population-size sweep of the squared-supremum statistic.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [64usize, 128, 256, 512])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        replications: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Report the local-time rescaling identity along a step/band ladder.
    LampertiCheck {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1500)]
        paths: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a Newtonian-barrier scenario; also writes velocity.csv.
    Barnes {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { scenario, seed, out } => cmd_run(&scenario, seed, out, false),
        Command::Validate { suite, seed, corrupt_v } => cmd_validate(&suite, seed, corrupt_v),
        Command::Sir { beta, dbar, i0, c0, horizon, dt, out } => {
            cmd_sir(beta, dbar, i0, c0, horizon, dt, out)
        }
        Command::Sweep { scenario, sizes, replications, seed } => {
            cmd_sweep(&scenario, &sizes, replications, seed)
        }
        Command::LampertiCheck { scenario, paths, seed } => {
            cmd_lamperti_check(&scenario, paths, seed)
        }
        Command::Barnes { scenario, seed, out } => cmd_run(&scenario, seed, out, true),
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(context: &str, e: std::io::Error) -> Error {
    Error::Config(format!("{context}: {e}"))
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<(RunConfig, Option<PathBuf>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| io_err(&format!("cannot read {}", path.display()), e))?;
    let file = parse_scenario(&text)?;
    let mut config = file.to_run_config()?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let out_dir = file.output.as_ref().map(|o| PathBuf::from(&o.dir));
    if let Some(format) = file.output.as_ref().and_then(|o| o.format.as_deref()) {
        if format != "csv" {
            return Err(Error::Config(format!("unsupported output format '{format}'")));
        }
    }
    Ok((config, out_dir))
}

fn cmd_run(
    scenario: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    barrier_only: bool,
) -> Result<ExitCode> {
    let (config, scenario_out) = load_config(scenario, seed)?;
    if barrier_only
        && !matches!(config.mode, Mode::BarnesTilde { .. } | Mode::BarnesBar { .. })
    {
        return Err(Error::Config("this subcommand needs a Newtonian-barrier mode".into()));
    }
    let dir = out.or(scenario_out).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| io_err("cannot create output directory", e))?;

    let started = Instant::now();
    let trace = run(&config)?;
    let runtime = started.elapsed().as_secs_f64();

    write_trace(&trace, &dir)?;
    write_infections(&trace, &dir)?;
    if let Some(velocity) = &trace.velocity {
        let mut s = String::from("t,u\n");
        for (t, u) in trace.times.iter().zip(velocity) {
            s.push_str(&format!("{},{}\n", fmt(*t), fmt(*u)));
        }
        std::fs::write(dir.join("velocity.csv"), s)
            .map_err(|e| io_err("cannot write velocity.csv", e))?;
    }
    let max_m = trace
        .martingale()
        .iter()
        .fold(0.0f64, |acc, m| acc.max(m.abs()));
    let summary = json!({
        "final_i": trace.final_infected(),
        "max_m": max_m,
        "runtime_seconds": runtime,
        "seed": config.seed,
    });
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("serializable summary"),
    )
    .map_err(|e| io_err("cannot write summary.json", e))?;
    println!(
        "wrote {} (final I = {:.4}, max |M| = {:.4}, {:.2}s)",
        dir.display(),
        trace.final_infected(),
        max_m,
        runtime
    );
    Ok(ExitCode::SUCCESS)
}

fn write_trace(trace: &SystemTrace, dir: &Path) -> Result<()> {
    let mut s = String::from("t,A,I,C,V,M\n");
    for k in 0..trace.times.len() {
        let m = trace.infected[k] - trace.compensator[k];
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt(trace.times[k]),
            fmt(trace.front[k]),
            fmt(trace.infected[k]),
            fmt(trace.contagion[k]),
            fmt(trace.compensator[k]),
            fmt(m)
        ));
    }
    std::fs::write(dir.join("trace.csv"), s).map_err(|e| io_err("cannot write trace.csv", e))
}

fn write_infections(trace: &SystemTrace, dir: &Path) -> Result<()> {
    let mut s = String::from("particle,tau\n");
    for inf in &trace.infections {
        s.push_str(&format!("{},{}\n", inf.particle, fmt(inf.tau)));
    }
    std::fs::write(dir.join("infections.csv"), s)
        .map_err(|e| io_err("cannot write infections.csv", e))
}

fn cmd_sir(
    beta: f64,
    dbar: f64,
    i0: f64,
    c0: f64,
    horizon: f64,
    dt: f64,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let series = sir_integrate(beta, dbar, i0, c0, horizon, dt)?;
    let mut s = String::from("t,I,C,S,R0,Rt\n");
    for st in &series {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt(st.t),
            fmt(st.i),
            fmt(st.c),
            fmt(st.s),
            fmt(st.r0),
            fmt(st.r_t)
        ));
    }
    match out {
        Some(path) => {
            std::fs::write(&path, s).map_err(|e| io_err("cannot write output", e))?;
            println!("wrote {}", path.display());
        }
        None => print!("{s}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(
    scenario: &Path,
    sizes: &[usize],
    replications: usize,
    seed: Option<u64>,
) -> Result<ExitCode> {
    let (config, _) = load_config(scenario, seed)?;
    let fit = l2_decay(&config, sizes, replications)?;
    let report = json!({
        "sizes": fit.sizes,
        "estimates": fit.estimates,
        "slope": fit.slope,
        "slope_ci": [fit.slope_lo, fit.slope_hi],
        "degenerate": fit.degenerate,
        "replications": replications,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable report"));
    Ok(ExitCode::SUCCESS)
}

fn cmd_lamperti_check(scenario: &Path, paths: usize, seed: Option<u64>) -> Result<ExitCode> {
    let (config, _) = load_config(scenario, seed)?;
    let trace = run(&config)?;
    let ctx = TransformContext::from_trace(config.coeffs.clone(), &trace, 1e-10)?;
    let x0 = config.initial.sample(0.5);
    let ladder = [(4e-3, 0.4), (2e-3, 0.3), (1e-3, 0.2)];
    let report = local_time_rescaling_check(&ctx, paths, &ladder, x0, config.seed)?;
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "dt": r.dt,
                "eps": r.eps,
                "mean_rel_err": r.mean_rel_err,
                "occupation_ratio": r.occupation_ratio,
            })
        })
        .collect();
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({ "paths": paths, "rows": rows }))
            .expect("serializable report")
    );
    Ok(ExitCode::SUCCESS)
}

fn default_config(seed: u64) -> RunConfig {
    RunConfig {
        n: 128,
        t_horizon: 1.0,
        dt: 1e-3,
        mode: Mode::True,
        seed,
        coeffs: CoefficientSet::new(
            Drift::Constant { mu: 0.0 },
            Diffusion::Constant { c: 1.0 },
            Rate::AffineInContagion { g0: 5.0, g1: 20.0 },
        )
        .expect("valid default coefficients"),
        kernel: KernelSpec::new(KernelFamily::TaperedUniform { taper: 0.05 }, 0.5)
            .expect("valid default kernel"),
        initial: InitialLaw::new(InitialFamily::Point { x0: 0.3 }, 0.0)
            .expect("valid default initial law"),
        a0: 0.0,
        alpha: 0.5,
        record_particles: false,
    }
}

struct CheckList {
    checks: Vec<Value>,
    pass: bool,
}

impl CheckList {
    fn new() -> Self {
        CheckList { checks: Vec::new(), pass: true }
    }

    fn add(&mut self, name: &str, pass: bool, detail: String) {
        self.pass &= pass;
        self.checks.push(json!({ "name": name, "pass": pass, "detail": detail }));
    }

    fn report(self, suite: &str) -> (bool, Value) {
        (self.pass, json!({ "suite": suite, "pass": self.pass, "checks": self.checks }))
    }
}

fn cmd_validate(suite: &str, seed: u64, corrupt_v: bool) -> Result<ExitCode> {
    let (pass, report) = match suite {
        "invariants" => suite_invariants(seed)?,
        "martingale" => suite_martingale(seed, corrupt_v)?,
        "decay" => suite_decay(seed)?,
        "tau-law" => suite_tau_law(seed)?,
        "lamperti" => suite_lamperti(seed)?,
        "ties" => suite_ties(seed)?,
        "barnes" => suite_barnes(seed)?,
        other => return Err(Error::Config(format!("unknown suite '{other}'"))),
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable report"));
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn suite_invariants(seed: u64) -> Result<(bool, Value)> {
    let mut config = default_config(seed);
    config.record_particles = true;
    let trace = run(&config)?;
    let mut list = CheckList::new();

    let front_ok = trace.front.windows(2).all(|w| w[1] >= w[0]);
    list.add("front nondecreasing", front_ok, String::new());

    let bound_ok = trace
        .front
        .iter()
        .zip(&trace.infected)
        .all(|(a, i)| *a <= config.a0 + config.alpha * i + 1e-12);
    list.add("front bounded by infection mass", bound_ok, String::new());

    let n = config.n as f64;
    let jumps_ok = trace.infected.windows(2).all(|w| {
        let d = w[1] - w[0];
        d >= 0.0 && (d * n - (d * n).round()).abs() < 1e-9
    });
    list.add("infected proportion steps by 1/n", jumps_ok, String::new());

    let series = trace.particles.as_ref().expect("recorded run");
    let mut taus = vec![f64::INFINITY; config.n];
    for inf in &trace.infections {
        taus[inf.particle] = inf.tau;
    }
    let mut positions_ok = true;
    for (i, path) in series.positions.iter().enumerate() {
        for (k, x) in path.iter().enumerate() {
            if trace.times[k] <= taus[i] && *x < trace.front[k] - 1e-12 {
                positions_ok = false;
            }
        }
    }
    list.add("susceptible positions above the front", positions_ok, String::new());

    let v_ok = trace.compensator[0] == 0.0
        && trace.compensator.windows(2).all(|w| w[1] >= w[0]);
    list.add("compensator nondecreasing from zero", v_ok, String::new());

    let v = compute_v(&trace, &config.coeffs.rate)?;
    let max_gap = v
        .iter()
        .zip(&trace.compensator)
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    list.add(
        "compensator reconstruction",
        max_gap < 1e-12,
        format!("max gap {max_gap:.3e}"),
    );

    Ok(list.report("invariants"))
}

fn suite_martingale(seed: u64, corrupt_v: bool) -> Result<(bool, Value)> {
    let config = default_config(seed);
    let probes = [(0.25, 0.5), (0.25, 0.75), (0.5, 1.0)];
    let v_scale = if corrupt_v { 2.0 } else { 1.0 };
    let report = martingale_test_scaled(&config, 200, &probes, v_scale)?;
    let mut list = CheckList::new();
    for p in &report.probes {
        list.add(
            &format!("probe ({}, {})", p.s, p.t),
            p.mean_increment.abs() <= 3.0 * p.std_error && p.slope_p > 0.01,
            format!(
                "mean {:.4e}, se {:.4e}, slope {:.4e} (p = {:.3})",
                p.mean_increment, p.std_error, p.slope, p.slope_p
            ),
        );
    }
    Ok(list.report("martingale"))
}

fn suite_decay(seed: u64) -> Result<(bool, Value)> {
    let config = default_config(seed);
    let fit = l2_decay(&config, &[64, 128, 256, 512], 200)?;
    let mut list = CheckList::new();
    list.add("fit defined", !fit.degenerate, String::new());
    list.add(
        "slope in [-1.3, -0.7]",
        !fit.degenerate && (-1.3..=-0.7).contains(&fit.slope),
        format!("slope {:.3}, ci [{:.3}, {:.3}], estimates {:?}", fit.slope, fit.slope_lo, fit.slope_hi, fit.estimates),
    );
    Ok(list.report("decay"))
}

fn suite_tau_law(seed: u64) -> Result<(bool, Value)> {
    let mut config = default_config(seed);
    config.n = 4;
    let report = tau_law_check(&config, 10_000, &[0.25, 0.5, 1.0], 0)?;
    let mut list = CheckList::new();
    for row in &report.rows {
        list.add(
            &format!("probe t = {}", row.t),
            row.diff.abs() <= 3.0 * row.std_error,
            format!(
                "empirical {:.4}, surrogate {:.4}, diff {:.2e}, se {:.2e}",
                row.empirical, row.surrogate, row.diff, row.std_error
            ),
        );
    }
    Ok(list.report("tau-law"))
}

fn suite_lamperti(seed: u64) -> Result<(bool, Value)> {
    let mut env_cfg = default_config(seed);
    env_cfg.mode = Mode::GloballyReflected;
    let env = run(&env_cfg)?;
    let mut list = CheckList::new();

    let const_coeffs = CoefficientSet::new(
        Drift::Constant { mu: 0.0 },
        Diffusion::Constant { c: 2.0 },
        Rate::AffineInContagion { g0: 5.0, g1: 20.0 },
    )
    .expect("valid coefficients");
    let ctx_const = TransformContext::from_trace(const_coeffs, &env, 1e-10)?;
    let gap = pathwise_gap_constant_sigma(&ctx_const, 0.3, 1e-3, seed ^ 0x51)?;
    list.add("constant-sigma pathwise agreement", gap < 1e-12, format!("max gap {gap:.3e}"));

    let tm_coeffs = CoefficientSet::new(
        Drift::Constant { mu: 0.0 },
        Diffusion::TimeModulated { c0: 1.0, amplitude: 0.6, frequency: 5.0 },
        Rate::AffineInContagion { g0: 5.0, g1: 20.0 },
    )
    .expect("valid coefficients");
    let ctx_tm = TransformContext::from_trace(tm_coeffs, &env, 1e-10)?;
    let check = distribution_check(
        &ctx_tm,
        &env.contagion,
        0.3,
        1e-3,
        10_000,
        &[0.25, 0.5, 1.0],
        seed ^ 0x52,
    )?;
    for ((t, p), (sx, sz)) in check.probes.iter().zip(&check.p_values).zip(&check.survivors) {
        list.add(
            &format!("distribution match at t = {t}"),
            *p > 0.01,
            format!("p = {p:.4} ({sx} vs {sz} survivors)"),
        );
    }

    let ladder = [(4e-3, 0.4), (2e-3, 0.3), (1e-3, 0.2)];
    let report = local_time_rescaling_check(&ctx_tm, 1500, &ladder, 0.3, seed ^ 0x53)?;
    let errs: Vec<f64> = report.rows.iter().map(|r| r.mean_rel_err).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    list.add(
        "rescaling error decreasing in the step",
        decreasing,
        format!("errors {errs:?}"),
    );
    Ok(list.report("lamperti"))
}

fn suite_ties(seed: u64) -> Result<(bool, Value)> {
    let config = default_config(seed);
    let stats = tie_stats(&config, &[4e-3, 2e-3, 1e-3], 40)?;
    let mut list = CheckList::new();
    list.add(
        "tie fraction strictly decreasing",
        stats.decreasing,
        format!("fractions {:?}", stats.fractions),
    );
    Ok(list.report("ties"))
}

fn suite_barnes(seed: u64) -> Result<(bool, Value)> {
    let mut list = CheckList::new();

    let mut tilde = default_config(seed);
    tilde.n = 64;
    tilde.mode = Mode::BarnesTilde { u: 1.2, kappa: 1.0 };
    let trace = run(&tilde)?;
    let velocity = trace.velocity.as_ref().expect("velocity series");
    list.add(
        "barrier velocity nonincreasing under collisions",
        velocity.windows(2).all(|w| w[1] <= w[0]),
        String::new(),
    );
    let mut barrier_ok = true;
    for k in 0..trace.times.len() - 1 {
        if (trace.front[k + 1] - (trace.front[k] + velocity[k] * tilde.dt)).abs() > 1e-12 {
            barrier_ok = false;
        }
    }
    list.add("barrier level integrates its velocity", barrier_ok, String::new());
    let mut decrement_ok = true;
    for k in 0..trace.times.len() - 1 {
        let dv = trace.compensator[k + 1] - trace.compensator[k];
        if (velocity[k + 1] - (velocity[k] - dv)).abs() > 1e-9 {
            decrement_ok = false;
        }
    }
    list.add(
        "collision decrement matches the hazard mass",
        decrement_ok,
        String::new(),
    );

    let mut bar = default_config(seed ^ 1);
    bar.n = 64;
    bar.mode = Mode::BarnesBar { u: 1.2 };
    let trace = run(&bar)?;
    let velocity = trace.velocity.as_ref().expect("velocity series");
    let mut counts = vec![0usize; trace.times.len()];
    for inf in &trace.infections {
        let idx = (inf.tau / bar.dt).round() as usize;
        counts[idx] += 1;
    }
    let mut bar_ok = true;
    for k in 0..trace.times.len() - 1 {
        let expect = velocity[k] - counts[k + 1] as f64 / bar.n as f64;
        if (velocity[k + 1] - expect).abs() > 1e-12 {
            bar_ok = false;
        }
    }
    list.add("infection decrement matches the counts", bar_ok, String::new());

    let mut bad = default_config(seed);
    bad.mode = Mode::BarnesTilde { u: 1.0, kappa: 1.0 };
    bad.coeffs = CoefficientSet::new(
        Drift::Constant { mu: 0.0 },
        Diffusion::Constant { c: 2.0 },
        Rate::Constant { g: 1.0 },
    )
    .expect("valid coefficients");
    list.add(
        "non-unit diffusion rejected",
        run(&bad).is_err(),
        String::new(),
    );

    Ok(list.report("barnes"))
}
