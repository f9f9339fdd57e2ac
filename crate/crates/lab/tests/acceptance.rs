//! Acceptance suite: one PASS/FAIL line per criterion, written straight to
//! stderr so it shows without `--nocapture`. Experiments run at the default
//! configs of their commands.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use snot_core::schedule::{epsilon_stat, NoiseSchedule};
use snot_lab::config::{ConditioningCommand, SlopeCommand, TerminalNoiseCommand, TrainCommand};
use snot_lab::experiments::conditioning::{self, ConditioningSummary};
use snot_lab::experiments::slope::{self, SlopeSummary};
use snot_lab::experiments::{terminal, train};
use snot_lab::io;
use snot_lab::selftest::{self, closed_form_eps, Mutation, SuiteReport};

const SEED: u64 = 0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn line(text: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{text}");
    let _ = err.flush();
}

fn criterion(id: u32, name: &str, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
    });
    let status = if v.pass { "PASS" } else { "FAIL" };
    line(&format!("[{status}] {id:>2}. {name}: {} ({:.1}s)", v.detail, start.elapsed().as_secs_f64()));
    v.pass
}

fn suite_verdict(r: &SuiteReport, min_checks: usize) -> Verdict {
    let detail = format!("{} checks, {} failed{}", r.checked, r.failures.len(), r.failures.first().map(|f| format!("; first: {f}")).unwrap_or_default());
    verdict(r.passed() && r.checked >= min_checks, detail)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn slope_rate(s: &SlopeSummary, took: Duration) -> Verdict {
    let Some(f) = s.fit(1e-3) else { return verdict(false, "no fit at eps=1e-3") };
    let pass = (-0.40..=-0.26).contains(&f.slope) && f.r2 >= 0.95 && took <= Duration::from_secs(15 * 60) && s.warnings.is_empty();
    verdict(pass, format!("slope {:.4}, r2 {:.4}, {} sizes, {:.0}s single-threaded", f.slope, f.r2, f.n_points, took.as_secs_f64()))
}

fn slope_degradation(s: &SlopeSummary) -> Verdict {
    match (s.fit(0.5), s.fit(1e-3)) {
        (Some(big), Some(small)) => verdict(
            big.slope.abs() < small.slope.abs(),
            format!("|slope| {:.4} at eps=0.5 vs {:.4} at eps=1e-3", big.slope.abs(), small.slope.abs()),
        ),
        _ => verdict(false, "missing fit"),
    }
}

fn jacobian_growth(s: &ConditioningSummary) -> Verdict {
    let levels = [0.5, 0.25, 0.1];
    let med: Vec<f64> = levels
        .iter()
        .map(|&e| median(s.runs_at(e).iter().filter(|r| r.seed < 5).map(|r| r.sup_jacobian).collect()))
        .collect();
    let increasing = med.windows(2).all(|w| w[1] > w[0]);
    let floor = 0.5 / 0.1;
    verdict(
        increasing && med[2] > floor,
        format!("median sup |DT| over seeds 0-4: {:.3} / {:.3} / {:.3} at eps 0.5 / 0.25 / 0.1 (floor {floor})", med[0], med[1], med[2]),
    )
}

fn conditioning_order(s: &ConditioningSummary) -> Verdict {
    let grid = [0.5, 0.25, 0.1, 0.05];
    let Some(levels) = grid.iter().map(|&e| s.level(e)).collect::<Option<Vec<_>>>() else {
        return verdict(false, "missing level");
    };
    let iters: Vec<f64> = levels.iter().map(|l| l.median_iters).collect();
    let monotone = iters.windows(2).all(|w| w[1] >= w[0]);
    let (v_small, v_large) = (levels[3].error_variance, levels[0].error_variance);
    let reached: Vec<usize> = levels.iter().map(|l| l.reached).collect();
    verdict(
        monotone && v_small > v_large,
        format!(
            "median iterations {iters:?} (reached {reached:?} of 10, threshold {:.4}); final-error variance {v_small:.3e} at 0.05 vs {v_large:.3e} at 0.5",
            s.threshold
        ),
    )
}

fn terminal_floor() -> Verdict {
    let s = terminal::run(&TerminalNoiseCommand::default(), None, None).expect("terminal-noise sweep");
    let near = s.paired(0.1, 0.5).expect("paired levels");
    let over_small = s.paired(10.0, 0.1).expect("paired levels");
    let over_half = s.paired(10.0, 0.5).expect("paired levels");
    let pass = near.z().abs() <= 2.0 && over_small.z() > 2.0 && over_half.z() > 2.0;
    let means: Vec<String> = s.levels.iter().map(|l| format!("x{}: {:.4}", l.multiplier, l.mean)).collect();
    verdict(
        pass,
        format!(
            "eps_stat {:.4}; errors {}; paired z: (0.1 vs 0.5) {:.2}, (10 vs 0.1) {:.2}, (10 vs 0.5) {:.2}",
            s.eps_stat,
            means.join(", "),
            near.z(),
            over_small.z(),
            over_half.z()
        ),
    )
}

fn spurious_solutions() -> Verdict {
    let s = train::run(&TrainCommand::default(), None, None).expect("train sweep");
    if s.faults() > 0 {
        return verdict(false, format!("{} training faults", s.faults()));
    }
    let worst_tangential = s.runs.iter().filter_map(|r| r.tangential_error).fold(0.0, f64::max);
    let normal = |v: &str| -> Vec<f64> { s.variant_runs(v).iter().map(|r| r.normal_error.expect("perpendicular target")).collect() };
    let (ours, plain) = (normal("rate_optimal"), normal("unsmoothed"));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let wins = ours.iter().zip(&plain).filter(|(a, b)| a < b).count();
    let pass = worst_tangential < 1e-2 && ours.len() == 5 && mean(&ours) < mean(&plain);
    verdict(
        pass,
        format!(
            "max tangential {worst_tangential:.2e}; mean normal error rate_optimal {:.3e} vs unsmoothed {:.3e}, lower on {wins}/5 paired seeds",
            mean(&ours),
            mean(&plain)
        ),
    )
}

fn schedule_trace() -> Verdict {
    let tmp = tempfile::tempdir().expect("tempdir");
    let batch = 128;
    let mut mismatches = 0;
    let mut rows = 0;
    let mut schedules: Vec<NoiseSchedule> = selftest::reference_schedules().to_vec();
    schedules.push(TrainCommand::default().variants[1].schedule);
    for (k, schedule) in schedules.iter().enumerate() {
        let cfg = tmp.path().join(format!("s{k}.json"));
        let body = serde_json::json!({ "schedule": schedule, "iterations": 2000, "batch_size": batch });
        std::fs::write(&cfg, body.to_string()).expect("write config");
        let out = Command::new(env!("CARGO_BIN_EXE_snot-lab"))
            .args(["schedule-trace", "--config", cfg.to_str().unwrap()])
            .output()
            .expect("binary runs");
        if !out.status.success() {
            return verdict(false, format!("schedule-trace exited {:?}", out.status.code()));
        }
        let points = io::read_trace(&out.stdout[..]).expect("trace parses");
        rows += points.len();
        mismatches += points.iter().filter(|p| p.eps != closed_form_eps(schedule, p.iteration, batch)).count();
    }
    let stat = epsilon_stat(1_000_000, 3, 1.0, 1.0).expect("valid arguments");
    verdict(
        mismatches == 0 && rows == 2000 * schedules.len() && stat == 1e-2,
        format!("{rows} trace rows over {} schedules, {mismatches} mismatches; eps_stat(1e6, m=3) = {stat:e}", schedules.len()),
    )
}

fn gradient_suite_and_selftest() -> Verdict {
    let grads = selftest::gradient_suite(SEED, 200, Mutation::None);
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_snot-lab")).arg("selftest").output().expect("binary runs");
    let took = start.elapsed();
    let pass = grads.passed() && out.status.success() && took < Duration::from_secs(300);
    verdict(
        pass,
        format!(
            "{} gradient checks, {} failed; selftest exit {:?} in {:.1}s",
            grads.checked,
            grads.failures.len(),
            out.status.code(),
            took.as_secs_f64()
        ),
    )
}

#[test]
fn acceptance() {
    line("acceptance criteria");
    let mut results = Vec::new();

    let start = Instant::now();
    let slope = catch_unwind(|| slope::run(&SlopeCommand::default(), None, Some(1)).expect("slope sweep")).ok();
    let slope_time = start.elapsed();
    results.push(criterion(1, "intrinsic-dimension rate", || match &slope {
        Some(s) => slope_rate(s, slope_time),
        None => verdict(false, "slope sweep failed"),
    }));
    results.push(criterion(2, "rate degradation at large noise", || match &slope {
        Some(s) => slope_degradation(s),
        None => verdict(false, "slope sweep failed"),
    }));
    results.push(criterion(3, "smoothing coupling bound", || suite_verdict(&selftest::smoothing_suite(SEED, 200), 200)));
    results.push(criterion(4, "plan-projection lower bound", || suite_verdict(&selftest::projection_suite(SEED, 200), 200)));
    results.push(criterion(5, "c-transform suite", || suite_verdict(&selftest::c_transform_suite(SEED, 200), 5 * 100)));
    results.push(criterion(6, "discrete-OT oracle equivalence", || suite_verdict(&selftest::ot_oracle_suite(SEED, 200), 400)));
    results.push(criterion(7, "analytic-map agreement", || suite_verdict(&selftest::analytic_suite(), 6)));

    let cond = catch_unwind(|| conditioning::run(&ConditioningCommand::default(), None, None).expect("conditioning sweep")).ok();
    results.push(criterion(8, "gradient blow-up", || match &cond {
        Some(s) => jacobian_growth(s),
        None => verdict(false, "conditioning sweep failed"),
    }));
    results.push(criterion(9, "conditioning ordering", || match &cond {
        Some(s) => conditioning_order(s),
        None => verdict(false, "conditioning sweep failed"),
    }));
    results.push(criterion(10, "terminal-noise floor", terminal_floor));
    results.push(criterion(11, "spurious-solution ordering", spurious_solutions));
    results.push(criterion(12, "reduced-objective derivatives", || suite_verdict(&selftest::hessian_suite(SEED, 20), 40)));
    results.push(criterion(13, "schedule correctness", schedule_trace));
    results.push(criterion(14, "nn gradient suite and selftest", gradient_suite_and_selftest));

    let passed = results.iter().filter(|&&p| p).count();
    line(&format!("{passed}/{} criteria passed", results.len()));
    assert_eq!(passed, results.len(), "some acceptance criteria failed");
}
