//! End-to-end acceptance suite. Runs every criterion, prints one PASS/FAIL
//! line each, and exits non-zero if any failed. Tolerances are fixed here.
//!
//! Run alone with `cargo test --release -p frontlab-cli --test acceptance`.

use std::collections::HashMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use frontlab::cv::{cv_rhs, cv_solver_config, heaviside_source_1, heaviside_source_2, integrate_cv, profile, source_r, source_r2, CvModelKind};
use frontlab::inverse::{reconstruct, residual};
use frontlab::pde::{homogeneous_speed, homogeneous_width, reaction};
use frontlab::pinning::analyze;
use frontlab::quad;
use frontlab::{DefectSpec, FrontTrajectory, KinkState, TrajectorySample};
use frontlab_cli::runner::{run_set, Outcome, Report};
use frontlab_cli::{catalog, ConfigSet, Overrides, RawConfig};

const A: f64 = 0.3;

struct Verdicts {
    rows: Vec<(String, bool)>,
}

impl Verdicts {
    fn record(&mut self, id: &str, title: &str, pass: bool, detail: &str) {
        let tag = if pass { "PASS" } else { "FAIL" };
        let line = format!("{tag} [{id}] {title}: {detail}");
        // straight to the fd so the line shows even under output capture
        let mut err = std::io::stderr();
        let _ = writeln!(err, "{line}");
        let _ = err.flush();
        self.rows.push((id.to_string(), pass));
    }

    fn info(&self, id: &str, detail: &str) {
        let _ = writeln!(std::io::stderr(), "     [{id}] info: {detail}");
    }
}

fn load(name: &str, overrides: &Overrides) -> ConfigSet {
    let mut raw = RawConfig::parse(catalog::text(name).expect("catalog entry")).unwrap();
    overrides.apply(&mut raw);
    ConfigSet::from_raw(raw).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn run_catalog(name: &str, overrides: &Overrides, out: &Path) -> (Vec<Report>, Duration) {
    let started = Instant::now();
    let reports = run_set(&load(name, overrides), &out.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    (reports, started.elapsed())
}

fn trajectories(r: &Report) -> Vec<&FrontTrajectory> {
    match &r.outcome {
        Outcome::Trajectory { traj, .. } => vec![traj],
        Outcome::Compare { pde, .. } => vec![pde],
        _ => Vec::new(),
    }
}

fn rel(x: f64, target: f64) -> f64 {
    ((x - target) / target).abs()
}

// ---------------------------------------------------------------------------

fn c1_homogeneous(v: &mut Verdicts, out: &Path) {
    let text = "name=homogeneous\nmode=pde\ndefect.kind=constant\ndefect.s=0.3\ngrid.n=4000\nsolver.t_max=150\n";
    let set = ConfigSet::from_text(text).unwrap();
    let started = Instant::now();
    let reports = run_set(&set, &out.join("c1")).unwrap();
    let elapsed = started.elapsed();
    let traj = trajectories(&reports[0])[0];
    let c = homogeneous_speed(0.3, A).unwrap();
    let w = homogeneous_width(0.3).unwrap();
    // after transients: t >= 50
    let (mut speed_err, mut width_err) = (0.0f64, 0.0f64);
    for (i, s) in traj.samples().iter().enumerate() {
        if s.t < 50.0 {
            continue;
        }
        width_err = width_err.max(rel(s.w, w));
        if let Some(sp) = traj.speed_at(i) {
            speed_err = speed_err.max(rel(sp, c));
        }
    }
    let pass = speed_err <= 0.01 && width_err <= 0.01 && elapsed.as_secs_f64() < 30.0;
    v.record(
        "C1",
        "homogeneous front speed/width",
        pass,
        &format!(
            "max rel speed err {speed_err:.2e}, max rel width err {width_err:.2e} (tol 1e-2; c = {c:.6}, w = {w:.6}); runtime {:.1} s (< 30 s)",
            elapsed.as_secs_f64()
        ),
    );
}

fn c2_fit_quality(v: &mut Verdicts, reports: &HashMap<String, Vec<Report>>) {
    let mut worst = Vec::new();
    let mut all_ok = true;
    let mut names: Vec<&String> = reports.keys().collect();
    names.sort();
    for name in names {
        for r in &reports[name] {
            for traj in trajectories(r) {
                let e = traj.max_fit_error();
                let label = match &r.panel {
                    Some(p) => format!("{name}[{p}]"),
                    None => name.clone(),
                };
                if e > 1e-4 {
                    all_ok = false;
                }
                worst.push(format!("{label} {e:.1e}"));
            }
        }
    }
    v.record("C2", "every catalog fit has E <= 1e-4", all_ok, &format!("max E per PDE run: {}", worst.join(", ")));
}

fn c3_pinning(v: &mut Verdicts, reports: &HashMap<String, Vec<Report>>, t_default: Duration, out: &Path) {
    let pinned_state = |r: &Report| match &r.outcome {
        Outcome::Trajectory { verdict: Some(vd), .. } if vd.pinned => Some((vd.x0_final, vd.w_final)),
        _ => None,
    };
    let default = pinned_state(&reports["fig3"][0]);
    let (coarse, t_coarse) = run_catalog("fig3", &Overrides { n: Some(800), t_max: None }, &out.join("n800"));
    let (fine, t_fine) = run_catalog("fig3", &Overrides { n: Some(12000), t_max: None }, &out.join("n12000"));
    let runtime = t_default + t_coarse + t_fine;
    let (coarse, fine) = (pinned_state(&coarse[0]), pinned_state(&fine[0]));
    let detail;
    let pass = match (default, coarse, fine) {
        (Some((x0, w)), Some((x_c, _)), Some((x_f, _))) => {
            let spread = rel(x_c, x_f);
            let ok_pos = rel(x0, -2.73) <= 0.05;
            let ok_w = rel(w, 1.80) <= 0.05;
            let ok_res = spread < 0.01;
            let ok_time = runtime.as_secs_f64() < 300.0;
            detail = format!(
                "pinned at x0 = {x0:.4} (target -2.73 ± 5%: {}), w = {w:.4} (target 1.80 ± 5%: {}); n=800 x0 = {x_c:.4}, n=12000 x0 = {x_f:.4}, spread {spread:.2e} (< 1e-2: {}); fig3 runs at n=4000/800/12000 took {:.0} s in total (< 300 s: {})",
                ok(ok_pos),
                ok(ok_w),
                ok(ok_res),
                runtime.as_secs_f64(),
                ok(ok_time)
            );
            ok_pos && ok_w && ok_res && ok_time
        }
        _ => {
            detail = format!("not pinned in every run: n=4000 {default:?}, n=800 {coarse:?}, n=12000 {fine:?}");
            false
        }
    };
    v.record("C3", "fig3 pinning reproduction", pass, &detail);
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "MISS"
    }
}

fn c4_analytic(v: &mut Verdicts) {
    let p = analyze(A, 0.3).unwrap();
    let pass = (p.beta_c - 5.88).abs() <= 0.01 && (p.x0_pin + 3.47).abs() <= 0.01 && (p.w_pin - 1.89).abs() <= 0.01;
    v.record(
        "C4",
        "closed-form pinning threshold",
        pass,
        &format!("beta_c = {:.5} (5.88 ± 0.01), x0 = {:.5} (-3.47 ± 0.01), w = {:.5} (1.89 ± 0.01)", p.beta_c, p.x0_pin, p.w_pin),
    );
}

fn c5_threshold(v: &mut Verdicts, out: &Path) {
    let (reports, elapsed) = run_catalog("threshold-gaussian", &Overrides::default(), out);
    let Outcome::Threshold { search, beta } = &reports[0].outcome else { panic!("threshold outcome expected") };
    let beta = beta.expect("gaussian amplitude has a mass equivalent");
    let pass = rel(beta, 6.18) <= 0.10 && elapsed.as_secs_f64() < 900.0;
    v.record(
        "C5",
        "PDE pinning threshold at d = 0.1",
        pass,
        &format!(
            "s1_c = {:.4} in [{:.4}, {:.4}], beta_c = {beta:.4} (6.18 ± 10%), {} probes, {:.0} s (< 900 s)",
            search.threshold,
            search.lo,
            search.hi,
            search.probes.len(),
            elapsed.as_secs_f64()
        ),
    );
    if let Some((s1, vd)) = search.probes.iter().filter(|(_, vd)| vd.pinned).min_by(|a, b| a.0.total_cmp(&b.0)) {
        v.info("C5", &format!("weakest pinning probe s1 = {s1:.4}: front held at x0 = {:.4}, w = {:.4}", vd.x0_final, vd.w_final));
    }
}

fn c6_moments(v: &mut Verdicts) {
    let up = |z: f64| {
        let u = profile(z);
        -u * (1.0 - u)
    };
    let q = |f: &dyn Fn(f64) -> f64| quad::integrate(f, -60.0, 60.0, 1e-14, 1e-14).value;
    let got = [
        q(&|z| up(z)),
        q(&|z| z * up(z)),
        q(&|z| profile(z) * up(z)),
        q(&|z| z * profile(z) * up(z)),
        q(&|z| up(z) * up(z)),
    ];
    let want = [-1.0, 0.0, -0.5, 0.5, 1.0 / 6.0];
    let err = got.iter().zip(&want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    v.record("C6", "kink moment constants by quadrature", err <= 1e-10, &format!("{got:?}, max abs err {err:.1e} (<= 1e-10)"));
}

fn c7_sources(v: &mut Verdicts) {
    let mut err = 0.0f64;
    for i in 0..=80 {
        let y = -20.0 + 0.5 * i as f64;
        let q1 = quad::integrate(|z| source_r(z, A), y, 60.0, 1e-13, 1e-13).value;
        let q2 = quad::integrate(|z| source_r2(z, A), y, 60.0, 1e-13, 1e-13).value;
        err = err.max((q1 - heaviside_source_1(y, A)).abs()).max((q2 - heaviside_source_2(y, A)).abs());
    }
    // stationary point of R(U(z)): root of R'(U(z)) by bisection, independent of the closed forms
    let mut min_err = 0.0f64;
    for &a in &[0.1, 0.2, 0.3, 0.4, 0.45] {
        let dr = |z: f64| {
            let u = profile(z);
            -3.0 * u * u + 2.0 * (1.0 + a) * u - a
        };
        let (mut lo, mut hi) = (0.0, 20.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if dr(mid).signum() == dr(lo).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z = 0.5 * (lo + hi);
        let p = analyze(a, 0.3).unwrap();
        min_err = min_err.max((z - p.z_min).abs()).max((reaction(profile(z), a) - p.min_r).abs());
    }
    let pass = err <= 1e-9 && min_err <= 1e-10;
    v.record(
        "C7",
        "closed-form source terms and minimum",
        pass,
        &format!("heaviside sources vs quadrature over y in [-20, 20]: {err:.1e} (<= 1e-9); z_min/min_R vs bisection for 5 values of a: {min_err:.1e} (<= 1e-10)"),
    );
}

fn c8_ladder(v: &mut Verdicts) {
    // General vs Adiabatic at d = 100, fronts at their local equilibrium width
    let gap = |d: f64| {
        let g = DefectSpec::Gaussian { s0: 0.3, s1: 0.6, d };
        let mut worst = 0.0f64;
        for &x0 in &[-30.0, -15.0, 0.0, 15.0, 30.0] {
            let st = KinkState { x0, w: homogeneous_width(g.eval(x0).unwrap()).unwrap() };
            let gen = cv_rhs(&CvModelKind::General(g), &st, A).unwrap();
            let ad = cv_rhs(&CvModelKind::Adiabatic(g), &st, A).unwrap();
            let diff = ((gen.0 - ad.0).powi(2) + (gen.1 - ad.1).powi(2)).sqrt();
            worst = worst.max(diff / (ad.0.powi(2) + ad.1.powi(2)).sqrt());
        }
        worst
    };
    let g100 = gap(100.0);

    // narrow Gaussian vs point mass, w > 10 d
    let mut traj_dev = 0.0f64;
    for &d in &[0.1, 0.05] {
        let g = DefectSpec::Gaussian { s0: 0.3, s1: 0.6, d };
        let init = KinkState { x0: -20.0, w: homogeneous_width(0.3).unwrap() };
        let cfg = cv_solver_config(250.0, 1.0);
        let general = integrate_cv(&CvModelKind::General(g), init, A, &cfg).unwrap();
        let dirac = integrate_cv(&CvModelKind::for_defect("dirac", &g).unwrap(), init, A, &cfg).unwrap();
        for (p, q) in general.samples().iter().zip(dirac.samples()) {
            assert!(p.w > 10.0 * d);
            traj_dev = traj_dev.max(rel(q.w, p.w)).max((q.x0 - p.x0).abs() / p.w);
        }
    }
    let pass = g100 < 1e-3 && traj_dev <= 0.02;
    v.record(
        "C8",
        "model-consistency ladder",
        pass,
        &format!(
            "General vs Adiabatic relative RHS gap at d = 100: {g100:.2e} (< 1e-3: {}); narrow Gaussian vs Dirac trajectories (d = 0.1, 0.05): max deviation {traj_dev:.2e} (<= 2e-2: {})",
            ok(g100 < 1e-3),
            ok(traj_dev <= 0.02)
        ),
    );
    v.info(
        "C8",
        &format!("General/Adiabatic gap by defect scale: d=1e2 {:.1e}, d=1e3 {:.1e}, d=1e4 {:.1e}, d=1e5 {:.1e}", g100, gap(1e3), gap(1e4), gap(1e5)),
    );
}

fn c9_compare(v: &mut Verdicts, reports: &HashMap<String, Vec<Report>>) {
    let dev = |r: &Report| match &r.outcome {
        Outcome::Compare { max_width_deviation, rows, .. } => (*max_width_deviation, rows.len()),
        _ => panic!("compare outcome expected"),
    };
    let mut parts = Vec::new();
    let mut pass = true;
    for r in &reports["fig8"] {
        let (d, n) = dev(r);
        pass &= d <= 0.05 && n > 10;
        parts.push(format!("fig8[{}] adiabatic {d:.2e} over {n} rows (<= 5e-2: {})", r.panel.as_deref().unwrap_or(""), ok(d <= 0.05)));
    }
    let (d, n) = dev(&reports["fig9"][0]);
    pass &= d <= 0.02 && n > 10;
    parts.push(format!("fig9 general {d:.2e} over {n} rows (<= 2e-2: {})", ok(d <= 0.02)));
    v.record("C9", "PDE vs reduced-model width curves", pass, &parts.join("; "));
}

fn c10_inverse(v: &mut Verdicts, reports: &HashMap<String, Vec<Report>>) {
    let Outcome::Invert { residual: (sup, l2), estimate } = &reports["inverse"][0].outcome else { panic!("invert outcome expected") };

    let c = homogeneous_speed(0.3, A).unwrap();
    let w = homogeneous_width(0.3).unwrap();
    let line = FrontTrajectory::from_samples(
        (0..100).map(|i| TrajectorySample { t: i as f64, x0: -20.0 + c * i as f64, w, fit_error: 0.0 }).collect(),
    )
    .unwrap();
    let (h_sup, h_l2) = residual(&reconstruct(&line, A).unwrap(), &DefectSpec::Constant { s: 0.3 }).unwrap();
    let pass = *sup <= 0.03 && h_sup <= 1e-10 && h_l2 <= 1e-10;
    v.record(
        "C10",
        "defect topography inversion",
        pass,
        &format!(
            "Gaussian(0.6, 0.3, 10) PDE run: sup rel err {sup:.3e} (<= 3e-2: {}), L2 {l2:.3e}, {} points; homogeneous round trip {h_sup:.1e} (<= 1e-10: {})",
            ok(*sup <= 0.03),
            estimate.points.len(),
            ok(h_sup <= 1e-10)
        ),
    );
}

fn c11_determinism_and_order(v: &mut Verdicts, out: &Path) {
    let over = Overrides { n: Some(800), t_max: Some(60.0) };
    let a = run_catalog("fig2", &over, &out.join("a")).0;
    let b = run_catalog("fig2", &over, &out.join("b")).0;
    let csvs = |r: &Report| -> Vec<Vec<u8>> {
        r.files.iter().filter(|p| p.extension().is_some_and(|e| e == "csv")).map(|p| std::fs::read(p).unwrap()).collect()
    };
    let identical = csvs(&a[0]) == csvs(&b[0]) && !csvs(&a[0]).is_empty();

    // speed error against the analytic value over three refinements
    let c = homogeneous_speed(0.3, A).unwrap();
    let mut errs = Vec::new();
    for &n in &[800usize, 1600, 3200] {
        let text = format!("name=conv\nmode=pde\ndefect.kind=constant\ndefect.s=0.3\ngrid.n={n}\nsolver.t_max=160\nsolver.rtol=1e-10\nsolver.atol=1e-10\n");
        let r = run_set(&ConfigSet::from_text(&text).unwrap(), &out.join(format!("conv{n}"))).unwrap();
        let traj = trajectories(&r[0])[0];
        let s = traj.samples();
        let (p, q) = (s.iter().find(|x| x.t >= 60.0).unwrap(), s.last().unwrap());
        errs.push(((q.x0 - p.x0) / (q.t - p.t) - c).abs());
    }
    let orders: Vec<f64> = errs.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
    let second_order = orders.iter().all(|&o| (o - 2.0).abs() < 0.25);
    v.record(
        "C11",
        "determinism and O(h^2) speed convergence",
        identical && second_order,
        &format!(
            "repeated fig2 CSVs byte-identical: {}; speed errors n=800/1600/3200: {:.2e}, {:.2e}, {:.2e}, observed orders {:.3}, {:.3} (2 ± 0.25)",
            ok(identical),
            errs[0],
            errs[1],
            errs[2],
            orders[0],
            orders[1]
        ),
    );
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let mut v = Verdicts { rows: Vec::new() };
    let started = Instant::now();

    let guarded = |v: &mut Verdicts, id: &str, f: &mut dyn FnMut(&mut Verdicts)| {
        if let Err(e) = catch_unwind(AssertUnwindSafe(|| f(v))) {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            v.record(id, "aborted", false, &msg.unwrap_or_default());
        }
    };

    guarded(&mut v, "C4", &mut |v| c4_analytic(v));
    guarded(&mut v, "C6", &mut |v| c6_moments(v));
    guarded(&mut v, "C7", &mut |v| c7_sources(v));
    guarded(&mut v, "C8", &mut |v| c8_ladder(v));
    guarded(&mut v, "C1", &mut |v| c1_homogeneous(v, out));

    // every PDE-backed catalog run once; later criteria reuse the results
    let mut reports: HashMap<String, Vec<Report>> = HashMap::new();
    let mut timings: HashMap<String, Duration> = HashMap::new();
    for name in catalog::names().filter(|n| !n.starts_with("threshold")) {
        match catch_unwind(|| run_catalog(name, &Overrides::default(), &out.join("catalog"))) {
            Ok((r, t)) => {
                v.info("catalog", &format!("{name}: {:.1} s", t.as_secs_f64()));
                reports.insert(name.to_string(), r);
                timings.insert(name.to_string(), t);
            }
            Err(_) => v.record("catalog", name, false, "catalog run failed"),
        }
    }

    guarded(&mut v, "C2", &mut |v| c2_fit_quality(v, &reports));
    guarded(&mut v, "C9", &mut |v| c9_compare(v, &reports));
    guarded(&mut v, "C10", &mut |v| c10_inverse(v, &reports));
    guarded(&mut v, "C11", &mut |v| c11_determinism_and_order(v, out));
    guarded(&mut v, "C3", &mut |v| c3_pinning(v, &reports, timings["fig3"], out));
    guarded(&mut v, "C5", &mut |v| c5_threshold(v, out));

    let failed: Vec<&str> = v.rows.iter().filter(|(_, p)| !p).map(|(id, _)| id.as_str()).collect();
    let _ = writeln!(
        std::io::stderr(),
        "acceptance: {} passed, {} failed{} in {:.0} s",
        v.rows.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({})", failed.join(", ")) },
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
