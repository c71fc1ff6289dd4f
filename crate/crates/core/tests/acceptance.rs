//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::PI;

use demailly::bundle::linalg::{c, CMat};
use demailly::bundle::{eig_sorted, random_traceless, HermitianField};
use demailly::continuation::PathOutcome;
use demailly::scenario::{
    laplace_refinement, oracle_compare, run_scenario, FieldSnapshot, RunSummary, ScenarioConfig, ScenarioData, PRESETS,
};
use demailly::system::{cushioned_residual, rms, solve_cushioned, solve_cushioned_from, MetricState};
use demailly::torus::{random_band_limited, Grid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CLOSED_FORM_TOL: f64 = 1e-8;
const ORACLE_TOL: f64 = 1e-6;
const REFINEMENT_RATIO: f64 = 4.0;
const MIN_GAP: f64 = 0.5;
const DEGQ_TOL: f64 = 1e-3;
const CUSHION_RESIDUAL_TOL: f64 = 1e-8;
const CUSHION_AGREEMENT_TOL: f64 = 1e-6;
const CUSHION_CONSTANT_TOL: f64 = 1e-10;
const SPECTRAL_TOL: f64 = 1e-10;

type Outcome = Result<String, String>;

fn cfg(text: &str) -> ScenarioConfig {
    ScenarioConfig::parse(text).expect("valid scenario")
}

fn run(text: &str) -> Result<RunSummary, String> {
    run_scenario(&cfg(text)).map_err(|e| e.to_string())
}

fn success_state(s: &RunSummary) -> Result<&MetricState, String> {
    match &s.outcome {
        PathOutcome::Success(st) => Ok(st),
        other => Err(format!("path ended as {}", other.name())),
    }
}

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn closed_form_rank_one() -> Outcome {
    let s = run("preset = constant_model\nrank = 1\nn = 16")?;
    let st = success_state(&s)?;
    let want = 0.5 * (3.0f64 / 4.0).ln();
    let err = st.f.values().iter().map(|v| (v - want).abs()).fold(0.0, f64::max);
    ensure(err <= CLOSED_FORM_TOL, format!("max |f - ln(3/4)/2| = {err:.2e}"))
}

fn closed_form_rank_two() -> Outcome {
    let s = run("preset = constant_model\nrank = 2\nlambda_exp = 2\nn = 16")?;
    let st = success_state(&s)?;
    let f = 0.5 * (3.0f64 / 8.0).ln();
    let f_err = st.f.values().iter().map(|v| (v - f).abs()).fold(0.0, f64::max);
    let want = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(-(-f).exp()), c((-f).exp())]));
    let h_err = (0..st.h.points())
        .map(|p| (st.h.at(p) - &want).iter().map(|z| z.norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let ef_err = s.records.iter().map(|r| (r.sup_ef_lambda_max - 1.0).abs()).fold(0.0, f64::max);
    ensure(
        f_err <= CLOSED_FORM_TOL && h_err <= CLOSED_FORM_TOL && ef_err <= CLOSED_FORM_TOL,
        format!("f error {f_err:.2e}, H error {h_err:.2e}, max |sup e^f lambda_max - 1| {ef_err:.2e} over {} records", s.records.len()),
    )
}

fn oracle_equivalence() -> Outcome {
    let (rows, _) = oracle_compare(&cfg("preset = ample_sum\nn = 32\nbeta_perturbation = 0.2\nseed = 7"), &[0.0, 0.5, 1.0])
        .map_err(|e| e.to_string())?;
    let worst = rows.iter().map(|r| r.f_error.max(r.eigenvalue_error)).fold(0.0, f64::max);
    let detail = rows
        .iter()
        .map(|r| format!("t={}: {:.1e}/{:.1e}", r.t, r.f_error, r.eigenvalue_error))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(rows.len() == 3 && worst <= ORACLE_TOL, detail)
}

fn laplace_identity() -> Outcome {
    let data = ScenarioData::from_config(&cfg("preset = extension\nn = 32")).map_err(|e| e.to_string())?;
    let (params, st) = data.setup().map_err(|e| e.to_string())?;
    // the extension setup field is constant, so a seeded smooth perturbation is added
    let h = HermitianField::project(&st.h.axpby(1.0, &random_traceless(&data.grid, 2, 11, 2, 0.3), 1.0), true);
    let (e0, e1, _) = laplace_refinement(&data.grid, &h, &params.a, 32, 64).map_err(|e| e.to_string())?;

    let g = Grid::new(32).unwrap();
    let base = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(0.0), c(-1.0)]));
    let hr = HermitianField::project(&random_traceless(&g, 3, 23, 2, 0.1).map(|_, m| m + &base), true);
    let eig = eig_sorted(&hr);
    let gap = (0..g.len()).map(|p| eig.gap(p)).fold(f64::INFINITY, f64::min);
    let zero = demailly::bundle::ConnectionData::zero(32, 3);
    let (r0, r1, _) = laplace_refinement(&g, &hr, &zero, 32, 64).map_err(|e| e.to_string())?;
    ensure(
        e0 >= REFINEMENT_RATIO * e1 && gap >= MIN_GAP && r0 >= REFINEMENT_RATIO * r1,
        format!("extension {e0:.2e} -> {e1:.2e}; random (gap {gap:.2}) {r0:.2e} -> {r1:.2e}"),
    )
}

fn apriori_suite() -> Outcome {
    let runs = [
        ("ample_sum", "preset = ample_sum\nn = 32"),
        ("ample_sum+beta", "preset = ample_sum\nn = 32\nbeta_perturbation = 0.2\nseed = 7"),
        ("extension", "preset = extension\nn = 32"),
        ("constant r=1", "preset = constant_model\nn = 16"),
        ("constant r=2", "preset = constant_model\nrank = 2\nn = 16"),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, text) in runs {
        let s = run(text)?;
        success_state(&s)?;
        let l1_strict = s.records.iter().all(|r| r.l1_slack > 0.0);
        let gposi = s.checks.get("gposi_floor").unwrap();
        let osc = s.checks.get("osc_direct_sum").unwrap();
        let gposi_ok = !gposi.applicable || (gposi.passed && gposi.measured.is_finite());
        let this = l1_strict && s.checks.get("keyest_laplacian_f").unwrap().passed && gposi_ok && s.checks.passed();
        ok &= this;
        lines.push(format!(
            "{name}: {} (C_measured {:.2e}{})",
            if this { "ok" } else { "violated" },
            gposi.measured,
            if osc.applicable { format!(", osc {:.2e} <= {:.2e}", osc.measured, osc.bound) } else { String::new() }
        ));
    }
    ensure(ok, lines.join("; "))
}

fn dichotomy() -> Outcome {
    let ample = run("preset = ample_sum\nn = 32")?;
    success_state(&ample)?;
    let curv = ample.final_min_curvature.unwrap_or(f64::NAN);
    let m_last = ample.records.last().unwrap().min_eig_m;
    let non = run("preset = nonample_sum\nn = 32")?;
    let PathOutcome::Destabilized(rep) = &non.outcome else {
        return Err(format!("nonample_sum ended as {}", non.outcome.name()));
    };
    ensure(
        curv > 0.0 && m_last > 0.0 && rep.rank_pi == 1 && (rep.degq_estimate + 1.0).abs() <= DEGQ_TOL,
        format!(
            "ample min curvature {curv:.3}; nonample destabilized at t={:.4} with rank {} and degQ {:.6}",
            rep.t, rep.rank_pi, rep.degq_estimate
        ),
    )
}

fn cushioned() -> Outcome {
    let mut worst_res: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for (k, name) in PRESETS.iter().enumerate() {
        let data = ScenarioData::from_config(&cfg(&format!("preset = {name}\nn = 32"))).map_err(|e| e.to_string())?;
        let h0 = solve_cushioned(&data.grid, &data.c0, &data.a, 1e-12).map_err(|e| e.to_string())?;
        let res = cushioned_residual(&data.grid, &data.c0, &data.a, &h0).map_err(|e| e.to_string())?;
        worst_res = worst_res.max(rms(&demailly::system::pack_traceless(&res)));
        let init = random_traceless(&data.grid, data.rank(), 100 + k as u64, 2, 0.5);
        let h1 = solve_cushioned_from(&data.grid, &data.c0, &data.a, &init, 1e-12).map_err(|e| e.to_string())?;
        worst_gap = worst_gap.max(h1.axpby(1.0, &h0, -1.0).max_norm());
    }
    let data = ScenarioData::from_config(&cfg("preset = nonample_sum\nn = 32")).unwrap();
    let h0 = solve_cushioned(&data.grid, &data.c0, &data.a, 1e-12).map_err(|e| e.to_string())?;
    let constant_err = h0.axpby(1.0, &data.c0, 1.0).max_norm();
    ensure(
        worst_res < CUSHION_RESIDUAL_TOL && worst_gap < CUSHION_AGREEMENT_TOL && constant_err < CUSHION_CONSTANT_TOL,
        format!("residual {worst_res:.1e}, two starts differ by {worst_gap:.1e}, |H0 + c0| = {constant_err:.1e}"),
    )
}

fn infrastructure() -> Outcome {
    let g = Grid::new(64).unwrap();
    let s = g.sample(|x, _| (2.0 * PI * x).sin());
    let eig_err = g.laplacian(&s).zip_map(&s, |l, v| l + 2.0 * PI * PI * v).max_abs();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rho = random_band_limited(&g, &mut rng, 4, 1.0);
    let poisson_err = g.laplacian(&g.poisson_solve(&rho)).zip_map(&rho, |a, b| a - b).max_abs();

    let h = random_traceless(&Grid::new(16).unwrap(), 3, 3, 2, 0.7);
    let st = MetricState::new(random_band_limited(&Grid::new(16).unwrap(), &mut rng, 2, 0.4), h).unwrap();
    let snap = FieldSnapshot::of_state(&st, 0.625);
    let back = FieldSnapshot::from_bytes(&snap.to_bytes()).map_err(|e| e.to_string())?;
    let snap_ok = back == snap && back.to_state().map_err(|e| e.to_string())? == st;

    let c = cfg("preset = extension\nn = 24\nbeta_modes = 1,2,0.1,-0.05\nepsilon = 0.3\ndt_max = 0.1\nseed = 3");
    let config_ok = ScenarioConfig::parse(&c.serialize()).map_err(|e| e.to_string())? == c;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut csvs = Vec::new();
    for k in 0..2 {
        let mut c = cfg("preset = ample_sum\nn = 32\nbeta_perturbation = 0.2\nseed = 7");
        c.out_dir = Some(dir.path().join(format!("run{k}")));
        run_scenario(&c).map_err(|e| e.to_string())?;
        csvs.push(std::fs::read(dir.path().join(format!("run{k}/records.csv"))).map_err(|e| e.to_string())?);
    }
    let deterministic = csvs[0] == csvs[1];
    ensure(
        eig_err < SPECTRAL_TOL && poisson_err < SPECTRAL_TOL && snap_ok && config_ok && deterministic,
        format!(
            "eigenfunction {eig_err:.1e}, poisson {poisson_err:.1e}, snapshot {snap_ok}, config {config_ok}, identical csv {deterministic}"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("closed-form path, rank 1", closed_form_rank_one),
        ("closed-form path, rank 2", closed_form_rank_two),
        ("matrix vs decoupled oracle", oracle_equivalence),
        ("eigenvalue Laplace identity refinement", laplace_identity),
        ("a priori estimate suite", apriori_suite),
        ("ample/non-ample dichotomy", dichotomy),
        ("cushioned Hermitian-Einstein setup", cushioned),
        ("infrastructure round trips and determinism", infrastructure),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let (status, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} [{name}]: {status} ({detail}) [{:.1}s]", k + 1, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
