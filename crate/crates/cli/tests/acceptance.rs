//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{m2, m2_theta, m3, merton, no_jump_two_state, random_no_jump, rel_err};
use rs_regime::hjb::{closed_form_no_jump, g_star, g_value, solve_hjb, AObjective, OperatorKind, SolverConfig};
use rs_regime::jumps::{Atom, JumpLaw};
use rs_regime::linalg::Matrix;
use rs_regime::market::ValidModel;
use rs_regime::optim::{NewtonOptions, Objective};
use rs_regime::policy::{ConstantStrategy, GridStrategy};
use rs_regime::simulate::{
    estimate_criterion, verify_entropy_bound, verify_generator_change, verify_martingale, verify_mean_variance,
    McConfig,
};
use rs_regime::strategies::{allocation_reports, KellyObjective};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn test_models() -> Vec<(String, ValidModel<f64>)> {
    let density = rs_regime::io::load_model::<f64>(&workspace().join("models/m3_density.json"))
        .expect("models/m3_density.json")
        .validate()
        .expect("valid model");
    vec![
        ("merton".into(), merton()),
        ("m2".into(), m2()),
        ("m3".into(), m3()),
        ("m3-density".into(), density),
        ("no-jump".into(), no_jump_two_state()),
        ("random-17".into(), random_no_jump(17)),
        ("random-18".into(), random_no_jump(18)),
    ]
}

fn closed_form_agreement() -> Outcome {
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for seed in 1000..1005 {
        let m = random_no_jump(seed);
        let start = Instant::now();
        let s = solve_hjb(&m, &SolverConfig::default()).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed().as_secs_f64());
        for (k, &t) in s.time_grid.iter().enumerate() {
            let exact = closed_form_no_jump(&m, t).map_err(|e| e.to_string())?;
            for i in 0..m.n_states() {
                worst = worst.max(rel_err(s.u[k][i], exact.u[i]));
            }
        }
    }
    ensure(worst <= 1e-6, format!("max relative error {worst:.2e}"))?;
    ensure(slowest < 5.0, format!("slowest solve {slowest:.2} s"))?;
    Ok(format!("max relative error {worst:.2e}, slowest solve {slowest:.3} s"))
}

fn merton_reduction() -> Outcome {
    let m = merton();
    let s = solve_hjb(&m, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let h = s.h_star[0][0][0];
    let g = g_star(m.coeffs_at(0, 0.0), 1.0);
    let g_at_h = g_value(&m, 0.0, 0, &[0.75]).map_err(|e| e.to_string())?;
    let u = s.u[0][0];
    ensure((h - 0.75).abs() <= 1e-8, format!("h* = {h}"))?;
    ensure((g + 0.0425).abs() <= 1e-12, format!("g* = {g}"))?;
    ensure((g_at_h + 0.0425).abs() <= 1e-12, format!("g(0.75) = {g_at_h}"))?;
    ensure((u - (-0.0425f64).exp()).abs() <= 1e-8, format!("u(0) = {u}"))?;
    Ok(format!("h* = {h:.10}, g* = {g:.12}, u(0) = {u:.10}"))
}

fn mc_ode_consistency() -> Outcome {
    let start = Instant::now();
    let m = m2();
    let s = solve_hjb(&m, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let strat = GridStrategy::from_surface(&s);
    let mut parts = Vec::new();
    for i in 0..2 {
        let cfg = McConfig::new(100_000, 31 + i as u64).from_state(i);
        let rep = estimate_criterion(&m, &strat, &cfg, Some(s.u[0][i])).map_err(|e| e.to_string())?.report;
        let z = rep.z_score().unwrap_or(f64::NAN);
        ensure(rep.passed(), format!("state {i}: {} vs {} (z = {z:.2})", rep.estimate, s.u[0][i]))?;
        parts.push(format!("state {i} z = {z:+.2}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, format!("took {secs:.1} s"))?;
    Ok(parts.join(", "))
}

fn martingale_identity() -> Outcome {
    let m = m2();
    let s = solve_hjb(&m, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let zero = ConstantStrategy::zero(2, 1);
    let half = ConstantStrategy::uniform(2, vec![0.5]);
    let star = GridStrategy::from_surface(&s);
    let mut parts = Vec::new();
    for i in 0..2 {
        let cfg = McConfig::new(1_000_000, 41 + i as u64).from_state(i);
        let rep = verify_martingale(&m, &zero, &cfg).map_err(|e| e.to_string())?;
        ensure(rep.estimate == 1.0 && rep.std_error == 0.0, format!("h = 0, state {i}: {}", rep.estimate))?;
        for (label, rep) in [("0.5", verify_martingale(&m, &half, &cfg)), ("h*", verify_martingale(&m, &star, &cfg))] {
            let rep = rep.map_err(|e| e.to_string())?;
            let z = rep.z_score().unwrap_or(f64::NAN);
            ensure(rep.passed(), format!("h = {label}, state {i}: {} (z = {z:.2})", rep.estimate))?;
            parts.push(format!("{label}/{i} z = {z:+.2}"));
        }
    }
    Ok(format!("h = 0 exact, {}", parts.join(", ")))
}

fn generator_tilt() -> Outcome {
    let m = m2();
    let strat = ConstantStrategy::uniform(2, vec![0.5]);
    let mut parts = Vec::new();
    for i in 0..2 {
        let tilts = verify_generator_change(&m, &strat, &McConfig::new(200_000, 51 + i as u64).from_state(i))
            .map_err(|e| e.to_string())?;
        for t in &tilts {
            ensure(t.passed(), format!("state {} from {i}: {t:?}", t.state))?;
            for (j, rate, _) in &t.transitions {
                parts.push(format!(
                    "Q^h({},{j}) {:.4} vs {:.4}",
                    t.state,
                    rate.estimate,
                    rate.target.unwrap_or(f64::NAN)
                ));
            }
        }
    }
    Ok(parts.join(", "))
}

fn fixed_points() -> Outcome {
    let opts = NewtonOptions::default();
    let (mut star, mut kelly, mut recon, mut hedge) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (name, m) in test_models() {
        let s = solve_hjb(&m, &SolverConfig::default()).map_err(|e| format!("{name}: {e}"))?;
        let theta = m.theta();
        for a in allocation_reports(&m, &s, &opts).map_err(|e| format!("{name}: {e}"))? {
            star = star.max(a.star_residual);
            kelly = kelly.max(a.kelly_residual);
            for k in 0..a.h_star.len() {
                let back = a.h_kelly[k] / (1.0 + theta) + theta / (1.0 + theta) * a.h_hedge[k];
                recon = recon.max((back - a.h_star[k]).abs() / a.h_star[k].abs().max(1.0));
                if !m.has_jumps() {
                    hedge = hedge.max(a.h_hedge[k].abs());
                }
            }
        }
    }
    ensure(star <= 1e-6, format!("h* residual {star:.2e}"))?;
    ensure(kelly <= 1e-8, format!("Kelly residual {kelly:.2e}"))?;
    ensure(recon <= 1e-12, format!("mutual-fund reconstruction {recon:.2e}"))?;
    ensure(hedge <= 1e-10, format!("no-jump hedge {hedge:.2e}"))?;
    Ok(format!("h* {star:.1e}, Kelly {kelly:.1e}, reconstruction {recon:.1e}, no-jump hedge {hedge:.1e}"))
}

fn value_invariants() -> Outcome {
    let cfg = SolverConfig::default();
    let mut nodes = 0;
    for (name, m) in test_models() {
        let s = solve_hjb(&m, &cfg).map_err(|e| format!("{name}: {e}"))?;
        let rep = s.check_invariants(&m, 10.0 * cfg.tol_ode);
        ensure(rep.passed(), format!("{name}: {rep}"))?;
        nodes += s.n_nodes() * m.n_states();
    }
    Ok(format!("{nodes} (node, state) pairs checked"))
}

fn random_h(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(-4.0..4.0)).collect()
}

/// Shrinks `h` towards zero until `1 + h'z >= 0.05` on every constraint of state `i`.
fn into_domain(model: &ValidModel<f64>, i: usize, h: Vec<f64>) -> Vec<f64> {
    let worst = model
        .admissible_set(i)
        .constraints
        .iter()
        .map(|z| -h.iter().zip(z).map(|(a, b)| a * b).sum::<f64>())
        .fold(0.0, f64::max);
    let scale = if worst > 0.95 { 0.95 / worst } else { 1.0 };
    h.into_iter().map(|x| x * scale).collect()
}

fn convexity() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for (name, m) in test_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (n, dim) = (m.n_states(), m.m_assets());
        for _ in 0..1000 {
            let i = rng.random_range(0..n);
            let t = rng.random_range(0.0..m.horizon());
            let a = into_domain(&m, i, random_h(&mut rng, dim));
            let b = into_domain(&m, i, random_h(&mut rng, dim));
            let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.5)).collect();
            let piece = m.coeffs_at(i, t);
            let mut objs: Vec<Box<dyn Objective<f64> + '_>> = vec![Box::new(KellyObjective::new(&m, piece, i))];
            for kind in [OperatorKind::Coinciding, OperatorKind::Independent] {
                objs.push(Box::new(AObjective::new(&m, piece, i, &u, m.theta(), kind)));
            }
            for obj in &objs {
                let f = |h: &[f64]| obj.value(h).map_err(|e| format!("{name}: {e}"));
                let gap = f(&c)? - (f(&a)? + f(&b)?) / 2.0;
                worst = worst.max(gap);
            }
        }
    }
    ensure(worst <= 1e-10, format!("midpoint violation {worst:.2e}"))?;
    Ok(format!("largest midpoint gap {worst:.2e}"))
}

fn central_difference(f: impl Fn(&[f64]) -> f64, h: &[f64]) -> Vec<f64> {
    (0..h.len())
        .map(|r| {
            let step = 1e-5 * h[r].abs().max(1.0);
            let mut hp = h.to_vec();
            let mut hm = h.to_vec();
            hp[r] += step;
            hm[r] -= step;
            (f(&hp) - f(&hm)) / (2.0 * step)
        })
        .collect()
}

fn gradient_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0)).fold(0.0, f64::max)
}

fn gradient_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_law = 0.0f64;
    for _ in 0..100 {
        let m = rng.random_range(1..=3usize);
        let k = rng.random_range(1..=4usize);
        let raw: Vec<(Vec<f64>, f64)> = (0..k)
            .map(|_| (random_h(&mut rng, m).iter().map(|x| x / 8.0).collect(), rng.random_range(0.1..1.0)))
            .collect();
        let total: f64 = raw.iter().map(|r| r.1).sum();
        let law = JumpLaw::new(raw.into_iter().map(|(z, p)| Atom { z, p: p / total }).collect())
            .map_err(|e| e.to_string())?;
        let h = random_h(&mut rng, m);
        let worst =
            law.atoms().iter().map(|a| -a.z.iter().zip(&h).map(|(x, y)| x * y).sum::<f64>()).fold(0.0, f64::max);
        let h: Vec<f64> = h.iter().map(|x| if worst > 0.9 { x * 0.9 / worst } else { *x }).collect();
        let theta = rng.random_range(0.05..4.0);
        let g = law.power_integral_grad(&h, theta).map_err(|e| e.to_string())?;
        let fd = central_difference(|x| law.power_integral(x, theta).unwrap(), &h);
        worst_law = worst_law.max(gradient_error(&g, &fd));
    }
    let mut worst_obj = 0.0f64;
    for (name, m) in test_models() {
        let (n, dim) = (m.n_states(), m.m_assets());
        for _ in 0..100 {
            let i = rng.random_range(0..n);
            let t = rng.random_range(0.0..m.horizon());
            let h = into_domain(&m, i, random_h(&mut rng, dim));
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.5)).collect();
            let piece = m.coeffs_at(i, t);
            let mut objs: Vec<Box<dyn Objective<f64> + '_>> = vec![Box::new(KellyObjective::new(&m, piece, i))];
            for kind in [OperatorKind::Coinciding, OperatorKind::Independent] {
                objs.push(Box::new(AObjective::new(&m, piece, i, &u, m.theta(), kind)));
            }
            let mut grad = vec![0.0; dim];
            let mut hess = Matrix::zeros(dim, dim);
            for obj in &objs {
                obj.eval(&h, &mut grad, &mut hess).map_err(|e| format!("{name}: {e}"))?;
                let fd = central_difference(|x| obj.value(x).unwrap(), &h);
                worst_obj = worst_obj.max(gradient_error(&grad, &fd));
            }
        }
    }
    ensure(worst_law <= 1e-6, format!("power integral gradient error {worst_law:.2e}"))?;
    ensure(worst_obj <= 1e-6, format!("objective gradient error {worst_obj:.2e}"))?;
    Ok(format!("power integral {worst_law:.1e}, objectives {worst_obj:.1e}"))
}

fn klebaner() -> Outcome {
    let m = m2();
    let strat = ConstantStrategy::uniform(2, vec![0.5]);
    let mut parts = Vec::new();
    for i in 0..2 {
        let rep = verify_entropy_bound(&m, &strat, &McConfig::new(200_000, 61 + i as u64).from_state(i))
            .map_err(|e| e.to_string())?;
        let bound = rep.target.unwrap_or(f64::NAN);
        ensure(rep.passed(), format!("state {i}: {} > {bound} + 3 SE", rep.estimate))?;
        parts.push(format!("state {i}: {:.5} <= {bound:.5}", rep.estimate));
    }
    Ok(parts.join(", "))
}

fn mean_variance() -> Outcome {
    let m = m2_theta(0.05);
    let s = solve_hjb(&m, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let strat = GridStrategy::from_surface(&s);
    let mut parts = Vec::new();
    for i in 0..2 {
        let rep = verify_mean_variance(&m, &strat, &McConfig::new(200_000, 71 + i as u64).from_state(i), 0.01)
            .map_err(|e| e.to_string())?;
        ensure(rep.passed(), format!("state {i}: gap {} (SE {})", rep.estimate, rep.std_error))?;
        parts.push(format!("state {i} gap {:.2e}", rep.estimate));
    }
    Ok(parts.join(", "))
}

fn run_cli(config: &Path, command: &str, threads: usize) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_rs-regime"))
        .args([command, "--config"])
        .arg(config)
        .args(["--force", "--threads", &threads.to_string()])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        out.status.success(),
        format!("{command} with {threads} threads: {}", String::from_utf8_lossy(&out.stderr).trim()),
    )
}

fn snapshot(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let p = e.map_err(|e| e.to_string())?.path();
            let bytes = std::fs::read(&p).map_err(|e| e.to_string())?;
            Ok((p.file_name().unwrap_or_default().to_string_lossy().into_owned(), bytes))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model = workspace().join("models/m2.json");
    let mut reference: Option<Vec<(String, Vec<u8>)>> = None;
    for threads in [1, 2, 8] {
        let dir = tmp.path().join(format!("t{threads}"));
        let config = tmp.path().join(format!("t{threads}.json"));
        let text = serde_json::json!({
            "model_path": model,
            "output_path": dir,
            "mc": {"n_paths": 20_000, "seed": 5, "dump_paths": true},
        });
        std::fs::write(&config, text.to_string()).map_err(|e| e.to_string())?;
        for command in ["solve", "simulate", "verify-martingale", "compare-independent"] {
            run_cli(&config, command, threads)?;
        }
        let files = snapshot(&dir)?;
        match &reference {
            None => reference = Some(files),
            Some(r) => {
                ensure(r.len() == files.len(), format!("{threads} threads wrote {} files", files.len()))?;
                for ((name, a), (_, b)) in r.iter().zip(&files) {
                    ensure(a == b, format!("{name} differs with {threads} threads"))?;
                }
            }
        }
    }
    let n = reference.map_or(0, |r| r.len());
    Ok(format!("{n} output files identical across 1, 2 and 8 threads"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("closed-form agreement", closed_form_agreement),
        ("Merton reduction", merton_reduction),
        ("Monte Carlo vs ODE", mc_ode_consistency),
        ("martingale identity", martingale_identity),
        ("generator tilt", generator_tilt),
        ("fixed points", fixed_points),
        ("value-function invariants", value_invariants),
        ("convexity and concavity", convexity),
        ("gradient oracles", gradient_oracles),
        ("entropy bound", klebaner),
        ("small-theta mean-variance", mean_variance),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1} s): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1} s): {detail}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
