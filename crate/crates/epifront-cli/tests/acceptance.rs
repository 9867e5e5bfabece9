//! Full-scale statistical acceptance suite. Each test prints one summary
//! line (`ACCEPTANCE <k> (<name>): PASS/FAIL ...`) before asserting at its
//! stated tolerance. Run `cargo test --test acceptance -- --nocapture` to
//! see the lines as they complete.

use epifront::analysis::{
    l2_decay, martingale_test_scaled, sir_integrate, tau_law_check, tie_stats,
};
use epifront::coefficients::{
    CoefficientSet, Diffusion, Drift, InitialFamily, InitialLaw, KernelFamily, KernelSpec, Rate,
};
use epifront::epidemic::{run, Infection, Mode, RunConfig, SystemTrace};
use epifront::lamperti::{
    distribution_check, local_time_rescaling_check, pathwise_gap_constant_sigma, TransformContext,
};
use epifront::sde::{reflected_euler_step, NoiseStream, LANE_FRESH};

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

fn unit_coeffs() -> CoefficientSet {
    CoefficientSet::new(
        Drift::Constant { mu: 0.0 },
        Diffusion::Constant { c: 1.0 },
        Rate::Constant { g: 0.0 },
    )
    .expect("valid unit coefficients")
}

fn report(k: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {k} ({name}): {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

#[test]
fn acceptance_1_l2_decay() {
    let config = default_config(12345);
    let fit = l2_decay(&config, &[64, 128, 256, 512], 200).expect("decay fit");
    let pass = !fit.degenerate && (-1.3..=-0.7).contains(&fit.slope);
    report(
        1,
        "l2-decay",
        pass,
        &format!(
            "slope={:.3} ci=[{:.3},{:.3}] estimates={:?}",
            fit.slope, fit.slope_lo, fit.slope_hi, fit.estimates
        ),
    );
    assert!(pass, "log-log slope {} outside [-1.3, -0.7]", fit.slope);
}

#[test]
fn acceptance_2_martingale() {
    let config = default_config(12345);
    let probes = [(0.25, 0.5), (0.25, 0.75), (0.5, 1.0)];
    let honest = martingale_test_scaled(&config, 200, &probes, 1.0).expect("martingale test");
    let corrupted = martingale_test_scaled(&config, 200, &probes, 2.0).expect("corrupted test");
    let pass = honest.consistent && !corrupted.consistent;
    let detail: Vec<String> = honest
        .probes
        .iter()
        .map(|p| {
            format!(
                "({},{}): mean={:.2e} se={:.2e} slope_p={:.3}",
                p.s, p.t, p.mean_increment, p.std_error, p.slope_p
            )
        })
        .collect();
    report(
        2,
        "martingale",
        pass,
        &format!("{} corrupted_fails={}", detail.join(" "), !corrupted.consistent),
    );
    assert!(honest.consistent, "martingale increments inconsistent: {:?}", honest.probes);
    assert!(!corrupted.consistent, "doubled compensator still passed the test");
}

#[test]
fn acceptance_3_infection_law() {
    let mut config = default_config(12345);
    config.n = 4;
    let check = tau_law_check(&config, 10_000, &[0.25, 0.5, 1.0], 0).expect("law check");
    let detail: Vec<String> = check
        .rows
        .iter()
        .map(|r| {
            format!(
                "t={}: emp={:.4} sur={:.4} diff={:.2e} se={:.2e}",
                r.t, r.empirical, r.surrogate, r.diff, r.std_error
            )
        })
        .collect();
    report(3, "infection-law", check.consistent, &detail.join(" "));
    assert!(check.consistent, "conditional infection law violated: {:?}", check.rows);
}

#[test]
fn acceptance_4_local_time() {
    let coeffs = unit_coeffs();
    let paths = 10_000;
    let steps = 10_000;
    let dt = 1e-4;
    let mut total = 0.0;
    for p in 0..paths {
        let mut stream = NoiseStream::with_lane(12345, LANE_FRESH, 7_000_000 + p as u64);
        let mut x = 0.0;
        let mut ell = 0.0;
        for k in 0..steps {
            let r = reflected_euler_step(x, k as f64 * dt, dt, 0.0, &coeffs, stream.next_normal())
                .expect("step");
            x = r.position;
            ell += r.local_time;
        }
        total += ell;
    }
    let mean = total / paths as f64;
    let target = (2.0 / std::f64::consts::PI).sqrt();
    let rel = (mean - target).abs() / target;

    let ctx = TransformContext::new(
        unit_coeffs(),
        vec![0.0, 0.5, 1.0],
        vec![0.0, 0.0, 0.0],
        1e-10,
    )
    .expect("flat context");
    let ladder = [(4e-3, 0.4), (1e-3, 0.2), (2.5e-4, 0.1)];
    let ratios: Vec<f64> = local_time_rescaling_check(&ctx, 800, &ladder, 0.0, 99)
        .expect("rescaling report")
        .rows
        .iter()
        .map(|r| r.occupation_ratio)
        .collect();
    let first = ratios[0];
    let last = *ratios.last().expect("ladder rows");
    let converging = (last - 2.0).abs() < (first - 2.0).abs() && (1.8..=2.2).contains(&last);

    let pass = rel <= 0.02 && converging;
    report(
        4,
        "local-time",
        pass,
        &format!("mean={mean:.5} target={target:.5} rel={rel:.4} ratios={ratios:?}"),
    );
    assert!(rel <= 0.02, "mean unit-time local time {mean} off {target} by {rel}");
    assert!(converging, "occupation/regulator ratios {ratios:?} not settling near 2");
}

#[test]
fn acceptance_5_lamperti() {
    let mut env_cfg = default_config(12345);
    env_cfg.mode = Mode::GloballyReflected;
    let env = run(&env_cfg).expect("environment run");

    let const_coeffs = CoefficientSet::new(
        Drift::Constant { mu: 0.0 },
        Diffusion::Constant { c: 2.0 },
        Rate::AffineInContagion { g0: 5.0, g1: 20.0 },
    )
    .expect("valid coefficients");
    let ctx_const = TransformContext::from_trace(const_coeffs, &env, 1e-10).expect("context");
    let gap = pathwise_gap_constant_sigma(&ctx_const, 0.3, 1e-3, 4242).expect("pathwise gap");

    let tm_coeffs = CoefficientSet::new(
        Drift::Constant { mu: 0.0 },
        Diffusion::TimeModulated { c0: 1.0, amplitude: 0.6, frequency: 5.0 },
        Rate::AffineInContagion { g0: 5.0, g1: 20.0 },
    )
    .expect("valid coefficients");
    let ctx_tm = TransformContext::from_trace(tm_coeffs, &env, 1e-10).expect("context");
    let check = distribution_check(
        &ctx_tm,
        &env.contagion,
        0.3,
        1e-3,
        10_000,
        &[0.25, 0.5, 1.0],
        4243,
    )
    .expect("distribution check");
    let ks_pass = check.p_values.iter().all(|p| *p > 0.01);

    let ladder = [(4e-3, 0.4), (2e-3, 0.3), (1e-3, 0.2)];
    let errs: Vec<f64> = local_time_rescaling_check(&ctx_tm, 1500, &ladder, 0.3, 4244)
        .expect("rescaling report")
        .rows
        .iter()
        .map(|r| r.mean_rel_err)
        .collect();
    let err_decreasing = errs.windows(2).all(|w| w[1] < w[0]);

    let pass = gap < 1e-12 && ks_pass && err_decreasing;
    report(
        5,
        "lamperti",
        pass,
        &format!(
            "gap={gap:.2e} p={:?} survivors={:?} rescaling_err={errs:?}",
            check.p_values, check.survivors
        ),
    );
    assert!(gap < 1e-12, "constant-sigma frame change not pathwise exact: {gap}");
    assert!(ks_pass, "distribution mismatch: p-values {:?}", check.p_values);
    assert!(err_decreasing, "rescaling error not decreasing: {errs:?}");
}

#[test]
fn acceptance_6_distinct_infections() {
    let config = default_config(12345);
    let stats = tie_stats(&config, &[4e-3, 2e-3, 1e-3], 40).expect("tie stats");
    report(
        6,
        "distinct-infections",
        stats.decreasing,
        &format!("fractions={:?}", stats.fractions),
    );
    assert!(
        stats.decreasing,
        "multi-infection step fraction not strictly decreasing: {:?}",
        stats.fractions
    );
}

fn sorted_infections(trace: &SystemTrace) -> Vec<(usize, u64)> {
    let mut v: Vec<(usize, u64)> = trace
        .infections
        .iter()
        .map(|i| (i.particle, i.tau.to_bits()))
        .collect();
    v.sort_unstable();
    v
}

#[test]
fn acceptance_7_coupling() {
    let mut finite_taus = 0;
    for seed in 0..20u64 {
        let mut cfg = default_config(1000 + seed);
        cfg.record_particles = true;
        let true_trace = run(&cfg).expect("true run");

        let mut ami_cfg = cfg.clone();
        ami_cfg.mode = Mode::ArtificialMinusI { excluded: 0 };
        let ami_trace = run(&ami_cfg).expect("artificial run");

        let tau0 = true_trace
            .infections
            .iter()
            .find(|i| i.particle == 0)
            .map(|i| i.tau)
            .unwrap_or(f64::INFINITY);
        if tau0.is_finite() {
            finite_taus += 1;
        }

        let tp = true_trace.particles.as_ref().expect("recorded particles");
        let ap = ami_trace.particles.as_ref().expect("recorded particles");
        for j in 0..cfg.n {
            for (k, t) in true_trace.times.iter().enumerate() {
                if *t >= tau0 {
                    break;
                }
                assert_eq!(
                    tp.positions[j][k].to_bits(),
                    ap.positions[j][k].to_bits(),
                    "seed {seed}: particle {j} diverges at t={t} before the tagged infection"
                );
            }
        }
        let taus_before = |infections: &[Infection]| {
            let mut v: Vec<(usize, u64)> = infections
                .iter()
                .filter(|i| i.particle != 0 && i.tau < tau0)
                .map(|i| (i.particle, i.tau.to_bits()))
                .collect();
            v.sort_unstable();
            v
        };
        assert_eq!(
            taus_before(&true_trace.infections),
            taus_before(&ami_trace.infections),
            "seed {seed}: infection times before the tagged infection differ"
        );

        let mut gr_cfg = default_config(1000 + seed);
        gr_cfg.mode = Mode::GloballyReflected;
        let gr_trace = run(&gr_cfg).expect("reflected run");
        let true_plain = run(&default_config(1000 + seed)).expect("true run");
        assert_eq!(
            sorted_infections(&true_plain),
            sorted_infections(&gr_trace),
            "seed {seed}: reflected variant changed the infection times"
        );
    }
    report(
        7,
        "coupling",
        true,
        &format!("20 seeds exact, tagged infection finite in {finite_taus}/20"),
    );
}

#[test]
fn acceptance_8_sir() {
    let fine = sir_integrate(0.3, 15.0, 0.2, 0.1, 100.0, 0.002).expect("fine grid");
    let coarse = sir_integrate(0.3, 15.0, 0.2, 0.1, 100.0, 0.02).expect("coarse grid");
    let max_closure = fine
        .iter()
        .fold(0.0f64, |acc, st| acc.max((st.s + st.i - 1.0).abs()));
    let endpoint_gap = {
        let f = fine.last().expect("states");
        let c = coarse.last().expect("states");
        (f.i - c.i).abs().max((f.c - c.c).abs())
    };

    let decay = sir_integrate(0.0, 10.0, 0.2, 0.1, 5.0, 0.01).expect("decay grid");
    let max_decay_err = decay.iter().fold(0.0f64, |acc, st| {
        let exact = 0.1 * (-st.t / 10.0).exp();
        acc.max((st.c - exact).abs())
    });

    let pass = max_closure <= 1e-15 && max_decay_err < 1e-12 && endpoint_gap < 1e-6;
    report(
        8,
        "sir",
        pass,
        &format!(
            "closure={max_closure:.2e} decay_err={max_decay_err:.2e} endpoint_gap={endpoint_gap:.2e}"
        ),
    );
    assert!(max_closure <= 1e-15, "susceptible share drifted: {max_closure}");
    assert!(max_decay_err < 1e-12, "transmission-free decay inexact: {max_decay_err}");
    assert!(endpoint_gap < 1e-6, "grid refinement moved the endpoint by {endpoint_gap}");
}

#[test]
fn acceptance_9_determinism() {
    let dir = std::env::temp_dir().join(format!("epifront-acceptance-{}", std::process::id()));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).expect("clear scratch dir");
    }
    std::fs::create_dir_all(&dir).expect("create scratch dir");
    let scenario = dir.join("default.toml");
    std::fs::write(
        &scenario,
        r#"
[kernel]
family = "tapered_uniform"
dbar = 0.5
taper = 0.05

[drift]
family = "constant"
mu = 0.0

[diffusion]
family = "constant"
c = 1.0

[rate]
family = "affine_in_contagion"
g0 = 5.0
g1 = 20.0

[initial]
family = "point"
x0 = 0.3

[run]
n = 128
T = 1.0
dt = 1e-3
mode = "true"
seed = 12345
a0 = 0.0
alpha = 0.5
"#,
    )
    .expect("write scenario");

    let mut traces = Vec::new();
    for threads in ["1", "4", "8"] {
        let out_dir = dir.join(format!("threads-{threads}"));
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_epifront"))
            .args(["run", "--scenario"])
            .arg(&scenario)
            .arg("--out")
            .arg(&out_dir)
            .env("RAYON_NUM_THREADS", threads)
            .status()
            .expect("spawn binary");
        assert!(status.success(), "run failed with {threads} threads");
        traces.push(std::fs::read(out_dir.join("trace.csv")).expect("trace.csv"));
    }
    let pass = traces[0] == traces[1] && traces[1] == traces[2];
    report(
        9,
        "determinism",
        pass,
        &format!("{} bytes per trace", traces[0].len()),
    );
    assert!(pass, "trace.csv differs across worker-thread counts");
}
