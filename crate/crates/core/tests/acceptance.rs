//! Acceptance suite. One line per criterion:
//!
//! ```text
//! PASS  7 convergence-bound  T=100: mean dist 1.2e-3 <= mean bound 4.1e-1 ...  [3.10s / 120s]
//! ```
//!
//! Exits non-zero when any criterion fails or exceeds its time budget.

use std::f64::consts::LN_2;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use acfl::analysis::{comm_overhead, u_of, u_tilde, BoundInputs};
use acfl::coding::{encode_dataset, NoiseParams};
use acfl::dataset::{generate, optimum, FederatedDataset};
use acfl::harness::{
    calibrate_oracle_bounds, run_experiment, simulate, simulate_comparison, tradeoff_curves, ExperimentConfig,
    NoiseSpec, PolicySpec, ScheduleSpec, TradeoffConfig,
};
use acfl::numerics::{uniform_matrix, Matrix, RngStream};
use acfl::privacy::{epsilon_of, sigma_for_epsilon, PrivacyLevel};
use acfl::training::{
    aggregate, alpha_oracle, coded_gradient, local_gradient, sample_stragglers, StragglerModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;

struct Suite {
    failed: usize,
}

impl Suite {
    fn run(&mut self, id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Check) {
        let start = Instant::now();
        let result = f();
        let took = start.elapsed();
        let (ok, detail) = match result {
            Ok((ok, d)) => (ok && took <= budget, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            self.failed += 1;
        }
        println!(
            "{} {id:>2} {name}  {detail}  [{:.2}s / {}s]",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn e<T>(r: acfl::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let mut s = Suite { failed: 0 };
    s.run(1, "gradient-finite-differences", secs(1), gradient_fd);
    s.run(2, "closed-form-optimum", secs(1), closed_form_optimum);
    s.run(3, "privacy-accountant", secs(1), privacy_accountant);
    s.run(4, "aggregate-unbiased", secs(30), unbiased_aggregate);
    s.run(5, "second-moment-bound", secs(30), second_moment);
    s.run(6, "optimal-weight", secs(5), optimal_weight);
    s.run(7, "convergence-bound", secs(120), convergence_bound);
    s.run(8, "adaptive-dominates-fixed", secs(5), adaptive_dominates);
    s.run(9, "acfl-vs-na-benchmark", secs(300), acfl_vs_na);
    s.run(10, "communication-overhead", secs(1), overhead);
    s.run(11, "determinism", secs(60), determinism);
    if s.failed == 0 {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", s.failed);
        ExitCode::FAILURE
    }
}

const FD_STEP: f64 = 1e-6;
const FD_TOL: f64 = 1e-4;

fn gradient_fd() -> Check {
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let ds = e(generate(1, 12, 5, 3, &RngStream::new(k, "fd", &[])))?;
        let dev = &ds.devices()[0];
        let w = e(uniform_matrix(&mut RngStream::new(k, "fd-w", &[]).rng(), 5, 3, -1.0, 1.0))?;
        let g = e(local_gradient(dev, &w))?;
        let fd = Matrix::from_fn(5, 3, |i, j| {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[(i, j)] += FD_STEP;
            down[(i, j)] -= FD_STEP;
            (dev.loss(&up).unwrap() - dev.loss(&down).unwrap()) / (2.0 * FD_STEP)
        });
        worst = worst.max(e(fd.sub(&g))?.frobenius_norm() / g.frobenius_norm());
    }
    Ok((worst < FD_TOL, format!("max ‖fd − G‖/‖G‖ = {worst:.2e} over 20 instances (tol {FD_TOL:e})")))
}

fn closed_form_optimum() -> Check {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let ds = e(generate(100, 100, 10, 10, &RngStream::new(seed, "dataset", &[])))?;
        let facts = e(optimum(&ds))?;
        let err = e(facts.w_star.sub(ds.w_true().expect("generated data keeps W_true")))?.frobenius_norm();
        worst = worst.max(err);
    }
    Ok((worst < 1e-8, format!("max ‖W* − W_true‖ = {worst:.2e} over 10 seeds (tol 1e-8)")))
}

fn privacy_accountant() -> Check {
    let eq = |s: f64| NoiseParams::equal(s).unwrap();
    let unit = e(epsilon_of(eq(1.0), 10, 10))?.epsilon;
    let unit_err = (unit - 14.5 * LN_2).abs();

    let mut worst_rt = 0.0f64;
    for k in 0..=60 {
        let eps = 10f64.powf(-3.0 + 6.0 * k as f64 / 60.0);
        let noise = e(sigma_for_epsilon(e(PrivacyLevel::new(eps))?, 10, 10))?;
        let back = e(epsilon_of(noise, 10, 10))?.epsilon;
        worst_rt = worst_rt.max(((back - eps) / eps).abs());
    }

    let grid: Vec<f64> = (0..50).map(|k| 10f64.powf(-3.0 + 9.0 * k as f64 / 49.0)).collect();
    let eps: Vec<f64> = grid.iter().map(|&s| epsilon_of(eq(s), 10, 10).unwrap().epsilon).collect();
    let decreasing = eps.windows(2).all(|w| w[1] < w[0]);

    // the limit clause carries no dimensions; d = o = 1 is the smallest upload
    let limit_1 = e(epsilon_of(eq(1e9), 1, 1))?.epsilon;
    let limit_10 = e(epsilon_of(eq(1e9), 10, 10))?.epsilon;

    let ok = unit_err < 1e-9 && worst_rt < 1e-9 && decreasing && limit_1 < 1e-8;
    Ok((
        ok,
        format!(
            "|ε(1) − 14.5 ln 2| = {unit_err:.1e} (tol 1e-9); round-trip rel err {worst_rt:.1e} (tol 1e-9); \
             decreasing on 50 points: {decreasing}; ε(σ²=1e9, d=o=1) = {limit_1:.2e} < 1e-8 \
             (d=o=10 gives {limit_10:.3e})"
        ),
    ))
}

/// Fixed instance for the Monte-Carlo lemmas: N=5, d=4, o=2, m=8.
struct Instance {
    ds: FederatedDataset,
    w: Matrix,
    grads: Vec<Matrix>,
    noise: NoiseParams,
    model: StragglerModel,
}

const P_MC: f64 = 0.3;
const ALPHA_MC: f64 = 0.5;
const REDRAWS: u64 = 200_000;

fn instance() -> Result<Instance, String> {
    let ds = e(generate(5, 8, 4, 2, &RngStream::new(11, "mc", &[])))?;
    let w = e(uniform_matrix(&mut RngStream::new(11, "mc-w", &[]).rng(), 4, 2, -1.0, 1.0))?;
    let grads = ds.devices().iter().map(|d| local_gradient(d, &w)).collect::<acfl::Result<Vec<_>>>();
    Ok(Instance {
        grads: e(grads)?,
        ds,
        w,
        noise: e(NoiseParams::equal(1.0))?,
        model: e(StragglerModel::new(P_MC))?,
    })
}

/// Calls `f` with `G_All` for each joint redraw of coding noise and stragglers.
fn redraw(inst: &Instance, mut f: impl FnMut(&Matrix)) -> Result<(), String> {
    let coding = RngStream::new(12, "mc-coding", &[]);
    let strag = RngStream::new(12, "mc-stragglers", &[]);
    for k in 0..REDRAWS {
        let gc = e(encode_dataset(&inst.ds, inst.noise, &coding.child(k)))?;
        let mask = e(sample_stragglers(inst.model, 5, &strag.child(k)))?;
        let g_s = e(coded_gradient(&gc, &inst.w))?;
        let g = e(aggregate(&g_s, &inst.grads, &mask, ALPHA_MC, P_MC))?;
        f(&g);
    }
    Ok(())
}

fn unbiased_aggregate() -> Check {
    let inst = instance()?;
    let mut g_true = Matrix::zeros(4, 2);
    for g in &inst.grads {
        e(g_true.add_scaled_assign(1.0, g))?;
    }
    let (mut sum, mut sum_sq) = (vec![0.0; 8], vec![0.0; 8]);
    redraw(&inst, |g| {
        for (k, v) in g.as_slice().iter().enumerate() {
            sum[k] += v;
            sum_sq[k] += v * v;
        }
    })?;
    let n = REDRAWS as f64;
    let mut worst = 0.0f64;
    for k in 0..8 {
        let mean = sum[k] / n;
        let var = (sum_sq[k] - n * mean * mean) / (n - 1.0);
        let se = (var / n).sqrt();
        worst = worst.max((mean - g_true.as_slice()[k]).abs() / se);
    }
    Ok((worst <= 4.0, format!("max |mean − G_true|/SE = {worst:.2} over 8 entries, 2e5 redraws (tol 4)")))
}

fn second_moment() -> Check {
    let inst = instance()?;
    let mut total = 0.0;
    redraw(&inst, |g| total += g.frobenius_norm_sq())?;
    let mean = total / REDRAWS as f64;
    let inputs = BoundInputs {
        p: P_MC,
        n_devices: 5,
        beta_sq: inst.grads.iter().map(Matrix::frobenius_norm_sq).fold(0.0, f64::max),
        c_sq: inst.w.frobenius_norm_sq(),
        d: 4,
        o: 2,
        sigma1_sq: 1.0,
        sigma2_sq: 1.0,
        lambda: 1.0,
        steps: 1,
    };
    let rhs = u_of(&inputs, ALPHA_MC);
    Ok((mean <= rhs, format!("mean ‖G_All‖² = {mean:.4} <= u(0.5) = {rhs:.4}")))
}

fn optimal_weight() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_rel = 0.0f64;
    for _ in 0..200 {
        let inputs = BoundInputs {
            p: rng.random_range(0.01..0.95),
            n_devices: rng.random_range(1..=200),
            beta_sq: 10f64.powf(rng.random_range(-2.0..3.0)),
            c_sq: 10f64.powf(rng.random_range(-2.0..2.0)),
            d: rng.random_range(1..=100),
            o: rng.random_range(1..=20),
            sigma1_sq: 10f64.powf(rng.random_range(-3.0..3.0)),
            sigma2_sq: 10f64.powf(rng.random_range(-3.0..3.0)),
            lambda: 1.0,
            steps: 1000,
        };
        let a = alpha_oracle(
            inputs.p,
            inputs.n_devices,
            inputs.beta_sq,
            inputs.c_sq,
            inputs.d,
            inputs.o,
            inputs.noise(),
        );
        let u_star = u_of(&inputs, a);
        for k in 0..=1000 {
            let u = u_of(&inputs, k as f64 / 1000.0);
            worst_gap = worst_gap.max(u_star - u);
        }
        worst_rel = worst_rel.max(((u_star - u_tilde(&inputs)) / u_star).abs());
    }
    let r = BoundInputs::reference();
    let a_ref = alpha_oracle(r.p, r.n_devices, r.beta_sq, r.c_sq, r.d, r.o, r.noise());
    let u_ref = u_tilde(&r);
    let spot = (a_ref - 0.01).abs() < 1e-12 && (u_ref - 2555.0).abs() < 1e-9;
    Ok((
        worst_gap <= 1e-12 && worst_rel < 1e-9 && spot,
        format!(
            "max u(α*) − u(α_grid) = {worst_gap:.2e} (tol 1e-12); max |u(α*) − ũ|/u = {worst_rel:.1e} (tol 1e-9); \
             reference α* = {a_ref}, ũ = {u_ref}"
        ),
    ))
}

fn bound_config(steps: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::benchmark();
    cfg.dataset.n_devices = 5;
    cfg.dataset.samples_per_device = 8;
    cfg.dataset.d = 4;
    cfg.dataset.o = 2;
    cfg.stragglers.p = 0.2;
    cfg.noise = NoiseSpec {
        sigma1_sq: Some(0.1),
        sigma2_sq: Some(0.1),
        epsilon: None,
    };
    cfg.policy = PolicySpec::AdaptiveOracle {
        beta_sq: None,
        c_sq: None,
    };
    cfg.schedule = ScheduleSpec::StrongConvexity;
    cfg.run.steps = steps;
    cfg.run.replicates = 50;
    cfg.run.master_seed = 7;
    cfg
}

fn convergence_bound() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for steps in [100, 1000] {
        let mut cfg = bound_config(steps);
        let bounds = e(calibrate_oracle_bounds(&cfg))?;
        cfg.policy = PolicySpec::AdaptiveOracle {
            beta_sq: Some(bounds.beta_sq),
            c_sq: Some(bounds.c_sq),
        };
        let result = e(simulate(&cfg))?;
        // post-hoc validity of the bounds on the very runs being scored
        let observed_beta = result.replicates.iter().map(|r| r.trace.max_device_grad_sq()).fold(0.0, f64::max);
        let observed_c = result.replicates.iter().map(|r| r.trace.max_w_norm_sq()).fold(0.0, f64::max);
        let valid = observed_beta <= bounds.beta_sq && observed_c <= bounds.c_sq;

        let mut dist = 0.0;
        let mut bound = 0.0;
        for r in &result.replicates {
            let inputs = BoundInputs {
                p: 0.2,
                n_devices: 5,
                beta_sq: bounds.beta_sq,
                c_sq: bounds.c_sq,
                d: 4,
                o: 2,
                sigma1_sq: 0.1,
                sigma2_sq: 0.1,
                lambda: r.facts_lambda,
                steps,
            };
            let u_sup = r.trace.records.iter().map(|rec| u_of(&inputs, rec.alpha_t)).fold(0.0, f64::max);
            bound += 4.0 * u_sup / (r.facts_lambda * r.facts_lambda * steps as f64);
            dist += r.trace.final_dist_sq;
        }
        let n = result.replicates.len() as f64;
        let (dist, bound) = (dist / n, bound / n);
        ok &= valid && dist <= bound;
        parts.push(format!(
            "T={steps}: mean ‖W_T − W*‖² = {dist:.3e} <= mean bound {bound:.3e} (β² = {:.3e}, C² = {:.3e}, valid: {valid})",
            bounds.beta_sq, bounds.c_sq
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn adaptive_dominates() -> Check {
    // tradeoff defaults: d=100, o=10, p=0.1, N=5, β=10, C=1, T=1000, λ=1
    let cfg = TradeoffConfig::default();
    let curves = e(tradeoff_curves(&cfg))?;
    let mut violations = 0;
    let mut min_margin = f64::INFINITY;
    for (_, fixed) in &curves.fixed {
        for (a, f) in curves.adaptive.iter().zip(fixed) {
            if a.bound > f.bound {
                violations += 1;
            }
            min_margin = min_margin.min(f.bound - a.bound);
        }
    }
    Ok((
        violations == 0,
        format!(
            "{violations} violations over {} fixed weights × {} σ² points (min margin {min_margin:.2e})",
            curves.fixed.len(),
            curves.adaptive.len()
        ),
    ))
}

fn acfl_vs_na() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [0.2, 0.4] {
        let mut cfg = ExperimentConfig::benchmark();
        cfg.stragglers.p = p;
        let (low, high) = (0.1, 10.0);
        let levels = e(simulate_comparison(&cfg, &[low, high]))?;

        let mut trend = true;
        for l in &levels {
            for m in &l.methods {
                let curve = &m.mean_curve;
                let first = curve.first().map(|r| r.mean_loss).unwrap_or(f64::NAN);
                trend &= m.mean_final_loss() < first;
            }
        }
        let win = levels[1].win_rate(1);
        let final_of = |lvl: usize, name: &str| levels[lvl].method(name).unwrap().mean_final_loss();
        let acfl_ratio = final_of(1, "acfl") / final_of(0, "acfl");
        let na_ratio = final_of(1, "na") / final_of(0, "na");
        ok &= trend && win >= 0.9 && acfl_ratio < na_ratio;
        parts.push(format!(
            "p={p}: (a) downward {trend}; (b) win rate {win:.2} (min 0.90); (c) high/low ratio acfl {acfl_ratio:.3} < na {na_ratio:.3}"
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn overhead() -> Check {
    let c = e(comm_overhead(32, 10, 10, 100, 1000))?;
    Ok((
        c.psi1 == 640_000 && c.psi2 == 320_000_000,
        format!("ψ₁ = {}, ψ₂ = {} (expected 640000, 320000000)", c.psi1, c.psi2),
    ))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = ExperimentConfig::benchmark();
    cfg.dataset.n_devices = 20;
    cfg.dataset.samples_per_device = 30;
    cfg.dataset.d = 5;
    cfg.dataset.o = 3;
    cfg.run.steps = 300;
    cfg.run.replicates = 6;
    let mut read = |name: &str, parallel: bool| -> Result<Vec<u8>, String> {
        cfg.run.output_dir = dir.path().join(name);
        cfg.run.parallel = parallel;
        e(run_experiment(&cfg))?;
        fs::read(cfg.run.output_dir.join("trace.csv")).map_err(|e| e.to_string())
    };
    let a = read("a", true)?;
    let b = read("b", true)?;
    let serial = read("serial", false)?;
    let rows = a.iter().filter(|&&c| c == b'\n').count() - 1;
    Ok((
        a == b && a == serial && rows == 6 * 300,
        format!(
            "trace.csv ({} bytes, {rows} rows): repeat identical {}, serial vs parallel identical {}",
            a.len(),
            a == b,
            a == serial
        ),
    ))
}

