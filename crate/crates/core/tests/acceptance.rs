//! Acceptance criteria, one line each. Criteria listed in KNOWN_RED are
//! expected to fail for a documented reason; any other failure, or a known red
//! that starts passing, makes the run fail.

use orbindex::indices::{rs_maslov, shear_path};
use orbindex::magnetic_profile::{validate_profile, GRID_MAX};
use orbindex::model::Model;
use orbindex::morse_index::verify_index_theorem;
use orbindex::orbits::find_circular_orbit;
use orbindex::scenario::{run_orbit, OrbitRun, ScenarioConfig, F2_CLAIM, FSTAR_CLAIM};
use orbindex::spectral_flow::randomized_suite;
use orbindex::HalfInt;
use std::f64::consts::{PI, SQRT_2};
use std::time::{Duration, Instant};

/// T′(1/2) = 4√2π is not attainable: with T = 2πρ/√(2k) and f′(ρ) = √(2k),
/// T′ = 2πρ′(1 − 2f″(2)) = 2π·4·½ = 4π for ρ′ = 4.
const KNOWN_RED: &[u32] = &[1];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(t: Duration, limit: f64) -> bool {
    t.as_secs_f64() <= limit
}

struct Ctx {
    cfg: ScenarioConfig,
    fstar: OrbitRun,
    f2: OrbitRun,
    fstar_time: Duration,
    f2_time: Duration,
}

fn check(run: &OrbitRun, name: &str) -> bool {
    run.report.checks.iter().find(|c| c.name == name).map(|c| c.pass).unwrap_or(false)
}

fn criterion_1(c: &Ctx) -> Outcome {
    let r = &c.fstar.report;
    let rho_ok = (r.rho - 2.0).abs() <= 1e-10;
    let t_ok = (r.period - 4.0 * PI).abs() <= 1e-10;
    let stated = 4.0 * SQRT_2 * PI;
    let tprime_ok = (r.tprime_analytic - stated).abs() <= 1e-10;
    let fd_ok = (r.tprime_fd - r.tprime_analytic).abs() <= 1e-4 * r.tprime_analytic.abs();
    let pass = rho_ok && t_ok && tprime_ok && fd_ok && r.chi == -1 && r.nullity == 1 && within(c.fstar_time, 10.0);
    outcome(
        pass,
        format!(
            "rho={} T={:.12} T'={:.10} (stated 4*sqrt2*pi={:.10}) T'_fd={:.8} chi={} nu={} {:.2}s",
            r.rho,
            r.period,
            r.tprime_analytic,
            stated,
            r.tprime_fd,
            r.chi,
            r.nullity,
            c.fstar_time.as_secs_f64()
        ),
    )
}

fn criterion_2(c: &Ctx) -> Outcome {
    let r = &c.f2.report;
    let pass = (r.rho - 2.5).abs() <= 1e-10 && r.chi == 1 && r.nullity == 1 && check(&c.f2, "T' by differences") && within(c.f2_time, 10.0);
    outcome(
        pass,
        format!(
            "rho={} T'={:.10} T'_fd={:.8} chi={} nu={} {:.2}s",
            r.rho,
            r.tprime_analytic,
            r.tprime_fd,
            r.chi,
            r.nullity,
            c.f2_time.as_secs_f64()
        ),
    )
}

fn criterion_3(c: &Ctx) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, pc) in [("fstar", &c.cfg.fstar), ("f2", &c.cfg.f2)] {
        let p = orbindex::magnetic_profile::build_named(name, &pc.spec()).unwrap();
        let rep = validate_profile(&p);
        // independent 10⁴-point grid on (0, GRID_MAX]
        let n = 10_000;
        let sup = (1..=n).map(|i| GRID_MAX * i as f64 / n as f64).map(|r| (p.f(r) / r).abs()).fold(0.0, f64::max);
        let bound = 0.5 * sup * sup;
        pass &= rep.pass && bound < 0.5 && rep.mane_upper_bound < 0.5 && rep.grid_points >= n;
        detail.push(format!("{name}: {bound:.5} (report {:.5}, {} pts)", rep.mane_upper_bound, rep.grid_points));
    }
    outcome(pass, detail.join("; "))
}

fn criterion_4(c: &Ctx) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    let mut slow = Duration::ZERO;
    for (name, pc, jump) in [("fstar", &c.cfg.fstar, 1usize), ("f2", &c.cfg.f2, 0)] {
        let p = orbindex::magnetic_profile::build_named(name, &pc.spec()).unwrap();
        let m = Model::new(p);
        let orbit = find_circular_orbit(&m, c.cfg.k, pc.seed_radius).unwrap();
        let mut seen = Vec::new();
        for n in [256, 512, 1024] {
            let t = Instant::now();
            match verify_index_theorem(&m, &orbit, n) {
                Ok(r) => {
                    pass &= r.holds && r.i_free == r.i_t + jump;
                    seen.push((r.i_t, r.i_free));
                }
                Err(e) => {
                    pass = false;
                    detail.push(format!("{name} N={n}: {e}"));
                }
            }
            if n == 1024 {
                slow = slow.max(t.elapsed());
            }
        }
        pass &= seen.windows(2).all(|w| w[0] == w[1]);
        detail.push(format!("{name}: (i_T, i) = {seen:?}"));
    }
    pass &= within(slow, 120.0);
    detail.push(format!("N=1024 {:.1}s", slow.as_secs_f64()));
    outcome(pass, detail.join("; "))
}

fn criterion_5(c: &Ctx) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for run in [&c.fstar, &c.f2] {
        let r = &run.report;
        pass &= !r.mu_cz.is_integer() && HalfInt::from_int(r.i_t as i64) == r.mu_cz - HalfInt::HALF;
        detail.push(format!("{}: i_T={} mu_cz={}", r.name, r.i_t, r.mu_cz));
    }
    outcome(pass, detail.join("; "))
}

fn criterion_6(c: &Ctx) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for run in [&c.fstar, &c.f2] {
        let r = &run.report;
        let rab = r.mu_cz - HalfInt::from_twice(r.chi as i64);
        pass &= r.mu_rab == rab && rab == r.mu_cz_transverse && HalfInt::from_int(r.i_free as i64) == r.mu_rab;
        detail.push(format!("{}: mu_rab={} mu_cz^tau={} i={}", r.name, r.mu_rab, r.mu_cz_transverse, r.i_free));
    }
    outcome(pass, detail.join("; "))
}

fn criterion_7(c: &Ctx) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for run in [&c.fstar, &c.f2] {
        let r = &run.report;
        let s = &run.indices.split;
        let c12 = (s.cylinder_block[(0, 1)] + r.tprime_analytic).abs() / r.tprime_analytic.abs();
        let diag = (s.cylinder_block[(0, 0)] - 1.0).abs().max((s.cylinder_block[(1, 1)] - 1.0).abs()).max(s.cylinder_block[(1, 0)].abs());
        let tr = (r.transverse_trace - r.transverse_trace_expected).abs();
        pass &= c12 <= 1e-3 && diag <= 1e-3 && tr <= 1e-5 && s.offdiag_norm <= 1e-5;
        detail.push(format!("{}: rel(1,2)={c12:.1e} diag={diag:.1e} trace err={tr:.1e}", r.name));
    }
    outcome(pass, detail.join("; "))
}

fn criterion_8() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (tp, want) in [(-1.0, HalfInt::HALF), (0.0, HalfInt::ZERO), (1.0, -HalfInt::HALF)] {
        let got = shear_path(tp, 1.0, 64).and_then(|p| rs_maslov(&p));
        pass &= got.as_ref().ok() == Some(&want);
        detail.push(format!("T'={tp}: {}", got.map(|h| h.to_string()).unwrap_or_else(|e| e.to_string())));
    }
    outcome(pass, detail.join("; "))
}

fn criterion_9(c: &Ctx) -> Outcome {
    let t = Instant::now();
    let rep = randomized_suite(500, c.cfg.seed);
    let el = t.elapsed();
    outcome(
        rep.pass && within(el, 30.0),
        format!(
            "{} trials, {} failures, {} with degenerate endpoints, {} crossings, {:.1}s",
            rep.trials,
            rep.failures.len(),
            rep.degenerate_endpoint_trials,
            rep.interior_crossings,
            el.as_secs_f64()
        ),
    )
}

fn criterion_10(c: &Ctx) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for run in [&c.fstar, &c.f2] {
        let r = &run.report;
        let h = &r.hessian_cylinder;
        let ok = (h.period_slot + 1.0).abs() <= 1e-3 && h.q_slots_max <= 1e-3 && (h.diagonal + h.tprime).abs() <= 1e-3 * h.tprime.abs();
        pass &= ok && r.n == 512;
        detail.push(format!(
            "{}: period slot {:.6} others {:.1e} value {:.6} vs -T' {:.6}",
            r.name, h.period_slot, h.q_slots_max, h.diagonal, -h.tprime
        ));
    }
    outcome(pass, detail.join("; "))
}

fn main() {
    let cfg = ScenarioConfig::default();
    let t = Instant::now();
    let fstar = run_orbit("fstar", &cfg.fstar, &FSTAR_CLAIM, &cfg).expect("fstar pipeline");
    let fstar_time = t.elapsed();
    let t = Instant::now();
    let f2 = run_orbit("f2", &cfg.f2, &F2_CLAIM, &cfg).expect("f2 pipeline");
    let f2_time = t.elapsed();
    let ctx = Ctx { cfg, fstar, f2, fstar_time, f2_time };

    let criteria: Vec<(u32, &str, Box<dyn Fn(&Ctx) -> Outcome>)> = vec![
        (1, "first orbit: rho, T, T', chi, nullity", Box::new(criterion_1)),
        (2, "second orbit: chi = +1", Box::new(criterion_2)),
        (3, "Mane bound below 1/2", Box::new(criterion_3)),
        (4, "free vs fixed Morse index across N", Box::new(criterion_4)),
        (5, "i_T = mu_cz - 1/2", Box::new(criterion_5)),
        (6, "mu_rab = mu_cz - chi/2 = mu_cz^tau = i", Box::new(criterion_6)),
        (7, "split monodromy blocks", Box::new(criterion_7)),
        (8, "shear calibration", Box::new(|_: &Ctx| criterion_8())),
        (9, "spectral flow suite", Box::new(criterion_9)),
        (10, "Hessian on the cylinder vector", Box::new(criterion_10)),
    ];
    let mut unexpected = Vec::new();
    for (id, name, f) in &criteria {
        let o = f(&ctx);
        let red = KNOWN_RED.contains(id);
        let tag = match (o.pass, red) {
            (true, false) => "PASS",
            (false, true) => "FAIL (known red)",
            (false, false) => "FAIL",
            (true, true) => "PASS (known red now passes)",
        };
        if o.pass == red {
            unexpected.push(*id);
        }
        println!("criterion {id:>2} {tag}: {name} | {}", o.detail);
    }
    if unexpected.is_empty() {
        println!("acceptance: all criteria as expected (known red: {KNOWN_RED:?})");
    } else {
        println!("acceptance: unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
