//! Benchmark criteria. Each test prints one PASS/FAIL line; run with
//! `cargo test --test acceptance -- --nocapture` to see them.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64 as C;
use spectral_ends::pipeline::{default_window, prepare, run_eigen, run_resonance, ProblemConfig, ResonanceOutcome};
use spectral_ends::resonance::{Axis, GridSpec, ResonanceEstimate};
use spectral_ends::solver::DEFAULT_TOL;
use spectral_ends::validate::{self, FaultInjection, RECT_LAMBDAS};

fn report(id: &str, ok: bool, detail: String) {
    println!("{} criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}

fn params(p: &[(&str, f64)]) -> BTreeMap<String, f64> {
    p.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Findings of an eigen run: (lambdas, K, seconds).
fn eigen(geometry: &str, p: &[(&str, f64)], refine: usize, lambda_max: f64) -> (Vec<f64>, usize, f64) {
    let t = Instant::now();
    let cfg = ProblemConfig::new(geometry, params(p), refine, lambda_max).unwrap();
    let j = default_window(geometry);
    let mut prep = prepare(&cfg, j).unwrap();
    let out = run_eigen(&mut prep, j, None, DEFAULT_TOL).unwrap();
    assert!(out.findings.len() <= out.k_bound, "findings exceed the counting bound");
    assert!(out.findings.iter().all(|f| f.certified));
    (out.findings.iter().map(|f| f.lambda).collect(), out.k_bound, t.elapsed().as_secs_f64())
}

fn scan(geometry: &str, p: &[(&str, f64)], refine: usize, lambda_max: f64, re: &str, im: &str) -> ResonanceOutcome {
    let cfg = ProblemConfig::new(geometry, params(p), refine, lambda_max).unwrap();
    let mut prep = prepare(&cfg, 0).unwrap();
    let grid = GridSpec::new(re.parse::<Axis>().unwrap(), im.parse::<Axis>().unwrap()).unwrap();
    run_resonance(&mut prep, grid, 3, 1).unwrap()
}

fn describe(e: &ResonanceEstimate) -> String {
    format!(
        "lambda = {:.6}{:+.6}i (k = {:.6}{:+.6}i, {})",
        e.lambda.re, e.lambda.im, e.wavenumber.re, e.wavenumber.im, e.label
    )
}

#[test]
fn criterion_1_bent_waveguide() {
    let kappa1 = std::f64::consts::PI.powi(2) / 4.0;
    let (a, ka, ta) = eigen("bent-waveguide", &[], 3, 50.0);
    let (b, kb, tb) = eigen("bent-waveguide", &[], 4, 100.0);
    let one = |v: &[f64]| v.len() == 1 && v[0] < kappa1 && (v[0] - 2.346).abs() <= 0.01;
    let ok = one(&a) && one(&b) && (a[0] - b[0]).abs() <= 0.002 && ta <= 300.0 && tb <= 300.0;
    report(
        "1",
        ok,
        format!("refine 3: {a:?} (K = {ka}, {ta:.1}s); refine 4: {b:?} (K = {kb}, {tb:.1}s)"),
    );
}

#[test]
fn criterion_2_obstructed_strip_embedded() {
    // Reported values are wavenumbers sqrt(lambda).
    let mut lines = Vec::new();
    let mut ok = true;
    for (radius, want, reference) in [(0.3, 1.5049, 1.5048), (0.5, 1.3914, 1.3913)] {
        let (f, k, _) = eigen("obstructed-strip", &[("delta", 0.0), ("radius", radius)], 4, 100.0);
        let hit = f.iter().map(|l| l.sqrt()).find(|s| (s - want).abs() <= 0.003);
        ok &= hit.is_some_and(|s| (s - reference).abs() <= 0.004);
        lines.push(format!("R = {radius}: sqrt(lambda) = {hit:?} (K = {k})"));
    }
    report("2", ok, lines.join("; "));
}

#[test]
fn criterion_3_obstructed_strip_resonances() {
    let mut lines = Vec::new();
    let mut ok = true;
    for (delta, radius, re_box, want, tol, im_lo, im_hi) in [
        (0.1, 0.3, "2.2:2.35:61", 1.508, 0.005, 0.5e-4, 2e-4),
        (0.2, 0.5, "1.9:2.15:61", 1.418, 0.006, 3e-3, 5e-3),
    ] {
        let out = scan("obstructed-strip", &[("delta", delta), ("radius", radius)], 4, 100.0, re_box, "-0.03:0:31");
        let hit = out.estimates.iter().find(|e| {
            let k = e.wavenumber;
            e.label == "resonance" && (k.re - want).abs() <= tol && (im_lo..=im_hi).contains(&k.im.abs())
        });
        ok &= hit.is_some();
        lines.push(format!(
            "delta = {delta}, R = {radius}: {}",
            hit.map(describe).unwrap_or_else(|| format!("none among {} estimates", out.estimates.len()))
        ));
    }
    report("3", ok, lines.join("; "));
}

#[test]
fn criterion_4_cshape_cavity() {
    let out = scan("cshape-cavity", &[("eps", 0.3), ("rart", 1.5)], 4, 50.0, "5.1:5.3:41", "-0.02:0:11");
    let res = out.estimates.iter().find(|e| {
        e.label == "resonance" && (e.lambda.re - 5.199).abs() <= 0.01 && (3e-3..=8e-3).contains(&e.lambda.im.abs())
    });
    let pole = out
        .estimates
        .iter()
        .find(|e| e.nearby_neumann_pole.is_some_and(|mu| (mu - 5.187).abs() <= 0.01));
    report(
        "4",
        res.is_some() && pole.is_some(),
        format!(
            "resonance: {}; hazard: {}",
            res.map(describe).unwrap_or_else(|| "none".into()),
            pole.map(|e| format!("{} at Neumann eigenvalue {:.5}", describe(e), e.nearby_neumann_pole.unwrap()))
                .unwrap_or_else(|| "none".into())
        ),
    );
}

#[test]
fn criterion_5_gaussian_potential() {
    // Wavenumber window 4.1 <= Re k <= 4.2 inside the stated [4.0, 4.5].
    let out = scan(
        "gaussian-potential",
        &[("rart", 4.0)],
        3,
        50.0,
        &format!("{}:{}:51", 4.1f64.powi(2), 4.2f64.powi(2)),
        "-0.02:0:11",
    );
    let hit = out.estimates.iter().find(|e| {
        let k: C = e.wavenumber;
        (4.0..=4.5).contains(&k.re) && k.im.abs() <= 2e-3 && e.instability_warning.is_some()
    });
    report(
        "5",
        hit.is_some(),
        format!(
            "{} (of {} estimates){}",
            hit.map(describe).unwrap_or_else(|| "none".into()),
            out.estimates.len(),
            hit.and_then(|e| e.nearby_neumann_pole).map(|mu| format!(", Neumann eigenvalue {mu:.5} in window")).unwrap_or_default()
        ),
    );
}

#[test]
fn criterion_6_rectangle_oracle() {
    let acc = validate::rect_oracle_error(4, 200.0, true, &RECT_LAMBDAS, 3).unwrap();
    let acc50 = validate::rect_oracle_error(4, 50.0, true, &RECT_LAMBDAS, 3).unwrap();
    let direct50 = validate::rect_oracle_error(4, 50.0, false, &RECT_LAMBDAS, 3).unwrap();
    report(
        "6",
        acc <= 1e-2 && direct50 >= 5.0 * acc50 && direct50 >= 5.0 * acc,
        format!("accelerated (200) {acc:.2e}, accelerated (50) {acc50:.2e}, direct (50) {direct50:.2e}"),
    );
}

#[test]
fn criterion_7_property_suites() {
    let r = validate::run_all(&FaultInjection::default());
    let failed: Vec<&str> = r.suites.iter().filter(|s| !s.passed).map(|s| s.name.as_str()).collect();
    report(
        "7",
        r.passed && r.seconds <= 120.0,
        format!(
            "{} suites, failed {:?}, rect oracle {:.2e}, {:.1}s",
            r.suites.len(),
            failed,
            r.rect_oracle_max_rel_error,
            r.seconds
        ),
    );
    let faulty = validate::run_all(&FaultInjection { flip_branch_sign: true });
    assert!(!faulty.passed, "fault injection went unnoticed");
}
