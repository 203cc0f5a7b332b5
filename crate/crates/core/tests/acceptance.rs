//! Acceptance suite: one line per criterion, then a non-zero exit if any
//! check fails that is not a recorded, analysed gap.

use std::process::ExitCode;
use std::time::Instant;

use geored_core::calc::{random_test_field, scheme_disagreement};
use geored_core::catalog::{calogero_entry, calogero_equivalence, entries};
use geored_core::dirac::{
    canonical_pb, deformed_poincare, frobenius, poincare_generators, position_noncommutativity,
    random_boost, sample_on_shell, wlc_residual, CanonicalPb, TwoParticleModel,
};
use geored_core::flow::{integrate, IntegratorConfig, VectorFieldSystem};
use geored_core::frames::{
    boost, compatible, frame_tensor, frobenius_residual, metric_from_frame_family, Point,
    ReferenceFrame,
};
use geored_core::lagsym::{
    distance_from_span, energy, jacobi_residual, kernel_basis, lagrangian_two_form,
    newton_wigner_momentum, newton_wigner_position, random_timelike_point, spacetime_coordinates,
    Bracket, LagrangianModel, PresymplecticBracket, KERNEL_TOL,
};
use geored_core::qriccati::{
    random_bounded_hamiltonian, random_unitary, verify_coset_reduction, UnitaryState,
};
use geored_core::reduce::verify_commuting_diagram;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Check {
    name: String,
    ok: bool,
    detail: String,
    /// Failure analysed and recorded as unattainable as stated.
    known_gap: bool,
}

fn check(name: &str, ok: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        ok,
        detail,
        known_gap: false,
    }
}

fn criterion_1() -> Vec<Check> {
    let cfg = IntegratorConfig::rk45(1e-10);
    entries(2024)
        .into_iter()
        .map(|e| {
            match verify_commuting_diagram(&e.scenario, &e.default_x0, e.t_span.0, e.t_span.1, &cfg)
            {
                Ok(r) => check(
                    &e.name,
                    r.max_dev < 1e-6,
                    format!("max_dev {:.2e}", r.max_dev),
                ),
                Err(err) => check(&e.name, false, err.to_string()),
            }
        })
        .collect()
}

fn criterion_2() -> Vec<Check> {
    let x0 = calogero_entry(0).default_x0;
    let mut out = Vec::new();
    match calogero_equivalence(&x0, 5.0, 501, 0.05, &IntegratorConfig::rk45(1e-10)) {
        Ok(r) => {
            out.push(check(
                "default data",
                r.max_dev < 1e-6,
                format!("max_dev {:.2e} over {} samples", r.max_dev, r.samples),
            ));
            out.push(check(
                "coupling conserved",
                r.coupling_drift < 1e-8,
                format!("drift {:.2e}", r.coupling_drift),
            ));
        }
        Err(e) => out.push(check("default data", false, e.to_string())),
    }
    let close =
        geored_core::catalog::matrix_state_from_spectrum([-0.5, 0.5], [1.0, -1.0], 0.0, 0.01);
    match calogero_equivalence(&close, 2.0, 801, 0.05, &IntegratorConfig::rk45(1e-10)) {
        Ok(r) => out.push(check(
            "near collision",
            r.max_dev < 1e-6 && r.stopped_at.is_some(),
            format!("max_dev {:.2e}, stopped at {:?}", r.max_dev, r.stopped_at),
        )),
        Err(e) => out.push(check("near collision", false, e.to_string())),
    }
    out
}

fn criterion_3() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut out = Vec::new();
    for trial in 0..3 {
        let h = match random_bounded_hamiltonian(1, 2, 2.0, &mut rng) {
            Ok(h) => h,
            Err(e) => return vec![check("hamiltonian", false, e.to_string())],
        };
        let u0 = UnitaryState {
            u: random_unitary(3, &mut rng),
            t: 0.0,
        };
        let name = format!("seed 42 trial {trial}");
        match verify_coset_reduction(&h, &u0, (0.0, 1.0), 101, &IntegratorConfig::rk45(1e-10)) {
            Ok(r) => {
                let last = r
                    .z_unitary
                    .last()
                    .zip(r.z_riccati.last())
                    .map(|(a, b)| (a - b).norm());
                let reached = r.exit_reason.is_none();
                out.push(check(
                    &name,
                    reached && last.is_some_and(|d| d < 1e-6) && r.worst_unitarity < 1e-9,
                    format!(
                        "Frobenius error at t=1 {:.2e}, max {:.2e}, unitarity drift {:.2e}{}",
                        last.unwrap_or(f64::NAN),
                        r.max_dev,
                        r.worst_unitarity,
                        r.exit_reason
                            .map(|e| format!(", ended early: {e}"))
                            .unwrap_or_default()
                    ),
                ));
            }
            Err(e) => out.push(check(&name, false, e.to_string())),
        }
    }
    out
}

fn criterion_4() -> Vec<Check> {
    let model = LagrangianModel::relativistic(1.0, 1.0);
    let br = PresymplecticBracket::relativistic(1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let points: Vec<Vec<f64>> = (0..100).map(|_| random_timelike_point(&mut rng)).collect();
    let mut out = Vec::new();

    let e_max = points
        .iter()
        .map(|z| energy(&model, z).map_or(f64::INFINITY, f64::abs))
        .fold(0.0, f64::max);
    out.push(check(
        "energy vanishes",
        e_max < 1e-12,
        format!("max |E| {e_max:.2e} at 100 points"),
    ));

    let (mut kdim_ok, mut span_dev) = (true, 0.0f64);
    for z in points.iter().take(20) {
        let w = match lagrangian_two_form(&model, z) {
            Ok(w) => w,
            Err(_) => {
                kdim_ok = false;
                continue;
            }
        };
        let ker = kernel_basis(&w, KERNEL_TOL);
        kdim_ok &= ker.len() == 2;
        let vnorm = z[4..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let gamma = [&z[4..], &[0.0; 4]].concat();
        let delta = [&[0.0; 4], &z[4..]].concat();
        span_dev = span_dev
            .max(distance_from_span(&ker, &gamma) / vnorm)
            .max(distance_from_span(&ker, &delta) / vnorm);
    }
    out.push(check(
        "kernel",
        kdim_ok && span_dev < 1e-8,
        format!("dimension 2: {kdim_ok}, Γ/Δ distance {span_dev:.2e}"),
    ));

    let mut darboux = 0.0f64;
    for z in points.iter().take(20) {
        for i in 0..3 {
            for j in 0..3 {
                let d = if i == j { 1.0 } else { 0.0 };
                let (qi, qj) = (newton_wigner_position(i), newton_wigner_position(j));
                let (pi, pj) = (newton_wigner_momentum(i), newton_wigner_momentum(j));
                let vals = [
                    br.eval(&qi, &pj, z).map(|v| v - d),
                    br.eval(&qi, &qj, z),
                    br.eval(&pi, &pj, z),
                ];
                for v in vals {
                    darboux = darboux.max(v.map_or(f64::INFINITY, f64::abs));
                }
            }
        }
    }
    out.push(check(
        "Darboux relations",
        darboux < 1e-8,
        format!("max deviation {darboux:.2e}"),
    ));

    let coords = spacetime_coordinates();
    let mut jac = 0.0f64;
    for z in points.iter().take(2) {
        for a in 0..8 {
            for b in a + 1..8 {
                for c in b + 1..8 {
                    let r = jacobi_residual(&br, &coords[a], &coords[b], &coords[c], z);
                    jac = jac.max(r.unwrap_or(f64::INFINITY));
                }
            }
        }
    }
    out.push(check(
        "Jacobi",
        jac < 1e-6,
        format!("max residual {jac:.2e} over all coordinate triples"),
    ));

    let mut casimir = 0.0f64;
    for z in points.iter().take(20) {
        for f in &coords {
            casimir = casimir.max(
                br.eval(&model.lagrangian, f, z)
                    .map_or(f64::INFINITY, f64::abs),
            );
        }
    }
    out.push(check(
        "Lagrangian is a Casimir",
        casimir < 1e-8,
        format!("max {casimir:.2e}"),
    ));
    out
}

fn criterion_5_and_6() -> (Vec<Check>, Vec<Check>) {
    let model = TwoParticleModel::reference();
    let space = model.space().clone();
    let coords = space.coordinates();
    let gens = poincare_generators(&space);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut casimir, mut jac, mut gens_dev, mut det_dev) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut min_noncomm, mut free_max) = (f64::INFINITY, 0.0f64);
    let mut sample_det = (0.0, 0.0);
    for k in 0..20 {
        let tau = 0.1 * k as f64;
        let z = match sample_on_shell(&model, &mut rng, tau) {
            Ok(z) => z,
            Err(e) => return (vec![check("sampling", false, e.to_string())], vec![]),
        };
        let db = model.set.dirac(tau);
        for v in model.set.fields(tau) {
            for f in &coords {
                casimir = casimir.max(db.eval(&v, f, &z).map_or(f64::INFINITY, f64::abs));
            }
        }
        for _ in 0..3 {
            let i: Vec<usize> = (0..3).map(|_| rng.gen_range(0..16)).collect();
            let r = jacobi_residual(&db, &coords[i[0]], &coords[i[1]], &coords[i[2]], &z);
            jac = jac.max(r.unwrap_or(f64::INFINITY));
        }
        for a in 0..gens.len() {
            for b in a + 1..gens.len() {
                let c = canonical_pb(&space, &gens[a], &gens[b], &z).unwrap_or(f64::NAN);
                let d = db.eval(&gens[a], &gens[b], &z).unwrap_or(f64::NAN);
                gens_dev = gens_dev.max((c - d).abs());
            }
        }
        let measured = model.set.gauge_block(&z, tau).determinant();
        let printed = model.printed_determinant(&z);
        det_dev = det_dev.max((measured - printed).abs());
        if k == 0 {
            sample_det = (measured, printed);
        }
        match position_noncommutativity(&db, &space, &z) {
            Ok(t) => min_noncomm = min_noncomm.min(t.max_abs),
            Err(_) => min_noncomm = 0.0,
        }
        if let Ok(t) = position_noncommutativity(
            &CanonicalPb {
                space: space.clone(),
            },
            &space,
            &z,
        ) {
            free_max = free_max.max(t.max_abs);
        }
    }
    let mut det = check(
        "determinant matches printed pattern",
        det_dev < 1e-8,
        format!(
            "max |det - pattern| {det_dev:.2e}; e.g. first-principles {:.4} vs pattern {:.4}",
            sample_det.0, sample_det.1
        ),
    );
    det.known_gap = true;
    let five = vec![
        check(
            "constraints are Dirac Casimirs",
            casimir < 1e-9,
            format!("max {casimir:.2e}"),
        ),
        check(
            "Dirac Jacobi",
            jac < 1e-6,
            format!("max residual {jac:.2e}"),
        ),
        det,
        check(
            "Poincaré brackets preserved",
            gens_dev < 1e-8,
            format!("max deviation {gens_dev:.2e}"),
        ),
    ];
    let six = vec![
        check(
            "positions do not commute",
            min_noncomm > 1e-6,
            format!("smallest per-point max {min_noncomm:.2e}"),
        ),
        check(
            "canonical positions commute",
            free_max == 0.0,
            format!("max {free_max:.2e}"),
        ),
    ];
    (five, six)
}

fn criterion_7() -> Vec<Check> {
    let model = TwoParticleModel::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for k in 0..10 {
        let tau = 0.2 * k as f64;
        let z = match sample_on_shell(&model, &mut rng, tau) {
            Ok(z) => z,
            Err(e) => return vec![check("sampling", false, e.to_string())],
        };
        let w = random_boost(&mut rng, 1e-4);
        match wlc_residual(&model.set, &w, &[0.0; 4], &z, tau) {
            Ok(r) => worst = worst.max(r.residual / frobenius(&w)),
            Err(e) => return vec![check("boost", false, e.to_string())],
        }
    }
    vec![check(
        "dynamical gauge boosts",
        worst < 1e-6,
        format!("max residual/|ω| {worst:.2e}"),
    )]
}

fn criterion_8() -> Vec<Check> {
    let mut out = Vec::new();
    for k in [0.1, 1.0, 100.0] {
        match deformed_poincare(k) {
            Ok(d) => {
                let jac = d.jacobi_residual();
                let mut scale = 0.0f64;
                for r in 0..4 {
                    for s in 0..4 {
                        if r != s {
                            scale = scale.max((d.position_coefficient(r, s) * k - 1.0).abs());
                        }
                    }
                }
                out.push(check(
                    &format!("K = {k}"),
                    jac < 1e-12 && scale < 1e-15,
                    format!("Jacobi {jac:.2e}, |K·c - 1| {scale:.2e}"),
                ));
            }
            Err(e) => out.push(check(&format!("K = {k}"), false, e.to_string())),
        }
    }
    out
}

fn criterion_9() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let f = random_test_field(&mut rng, 3, i % 2 == 1);
        for _ in 0..10 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            worst = worst.max(scheme_disagreement(&f, &x).unwrap_or(f64::INFINITY));
        }
    }
    let osc = VectorFieldSystem::autonomous("oscillator", &["x", "v"], |s| vec![s[1], -s[0]]);
    let err = |dt: f64| {
        integrate(&osc, &[1.0, 0.0], 0.0, 2.0, &IntegratorConfig::rk4(dt))
            .map(|t| (t.final_state()[0] - 2f64.cos()).abs())
            .unwrap_or(f64::NAN)
    };
    let ratios = [err(0.1) / err(0.05), err(0.05) / err(0.025)];
    let order_ok = ratios.iter().all(|r| (14.0..18.0).contains(r));
    vec![
        check(
            "dual vs central corpus",
            worst < 1e-5,
            format!("max relative disagreement {worst:.2e}"),
        ),
        check(
            "RK4 order 4",
            order_ok,
            format!("error ratios {:.2} {:.2}", ratios[0], ratios[1]),
        ),
    ]
}

fn criterion_10() -> Vec<Check> {
    let pts: [Point; 3] = [[0.0; 4], [0.3, -1.0, 2.0, 0.5], [-1.5, 0.2, 0.7, -0.4]];
    let mut out = Vec::new();
    let mut proj = 0.0f64;
    let mut frames = vec![ReferenceFrame::lab()];
    for (rap, dir) in [
        (0.5, [1.0, 0.0, 0.0]),
        (1.0, [0.0, 1.0, 1.0]),
        (2.0, [0.3, -0.2, 0.9]),
    ] {
        frames.push(
            ReferenceFrame::transformed(&boost(rap, dir).expect("valid boost"))
                .expect("invertible"),
        );
    }
    for f in &frames {
        for p in &pts {
            match frame_tensor(f, p) {
                Ok(r) => proj = proj.max(r.projector_dev()).max((r.trace() - 1.0).abs()),
                Err(_) => proj = f64::INFINITY,
            }
        }
    }
    out.push(check(
        "projector and trace",
        proj < 1e-10,
        format!("max deviation {proj:.2e}"),
    ));

    let lab = frame_tensor(&frames[0], &pts[0]).expect("lab frame");
    let boosted = frame_tensor(
        &ReferenceFrame::transformed(&boost(1.0, [1.0, 0.0, 0.0]).expect("valid boost"))
            .expect("invertible"),
        &pts[0],
    )
    .expect("boosted frame");
    let side = frame_tensor(
        &ReferenceFrame::constant("side", [0.0, 1.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]),
        &pts[0],
    )
    .expect("side frame");
    let c = compatible(&lab, &boosted);
    let symmetric = (c.trace - compatible(&boosted, &lab).trace).abs();
    let cosh_dev = (c.trace - 1f64.cosh().powi(2)).abs();
    let incompatible = !compatible(&lab, &side).compatible;
    out.push(check(
        "compatibility",
        c.compatible && cosh_dev < 1e-10 && symmetric < 1e-15 && incompatible,
        format!("trace vs cosh² {cosh_dev:.2e}, asymmetry {symmetric:.2e}, orthogonal frame rejected: {incompatible}"),
    ));

    let closed = frobenius_residual(&|_| [1.0, 0.0, 0.0, 0.0], &pts);
    let scaled = frobenius_residual(
        &|p: &Point| [(-(p[1] * p[2] + p[3])).exp(), 0.0, 0.0, 0.0],
        &pts,
    );
    let contact = frobenius_residual(&|p: &Point| [p[1], 0.0, 1.0, 0.0], &pts);
    out.push(check(
        "Frobenius",
        closed == 0.0 && scaled < 1e-7 && contact > 0.1,
        format!("dτ {closed:.1e}, rescaled {scaled:.2e}, contact {contact:.2}"),
    ));

    match metric_from_frame_family(&[
        (0.0, [1.0, 0.0, 0.0]),
        (0.7, [1.0, 0.0, 0.0]),
        (1.3, [0.2, 0.5, -0.8]),
    ]) {
        Ok(r) => out.push(check(
            "metric from frame family",
            r.residual < 1e-12 && r.inverse_dev < 1e-12,
            format!("residual {:.2e}, inverse {:.2e}", r.residual, r.inverse_dev),
        )),
        Err(e) => out.push(check("metric from frame family", false, e.to_string())),
    }
    out
}

fn report(n: usize, title: &str, checks: &[Check], elapsed: f64) -> (bool, bool) {
    let all_ok = checks.iter().all(|c| c.ok);
    let unexpected = checks.iter().any(|c| !c.ok && !c.known_gap);
    let summary: Vec<String> = checks
        .iter()
        .map(|c| {
            let tag = match (c.ok, c.known_gap) {
                (true, _) => "ok",
                (false, true) => "FAIL, recorded gap",
                (false, false) => "FAIL",
            };
            format!("{} [{}] {}", c.name, tag, c.detail)
        })
        .collect();
    println!(
        "criterion {n:>2} {:<4} {title} ({elapsed:.1}s): {}",
        if all_ok { "PASS" } else { "FAIL" },
        summary.join("; ")
    );
    (all_ok, unexpected)
}

fn timed(n: usize, title: &str, f: fn() -> Vec<Check>) -> bool {
    let start = Instant::now();
    let checks = f();
    report(n, title, &checks, start.elapsed().as_secs_f64()).1
}

fn main() -> ExitCode {
    let mut unexpected = false;
    unexpected |= timed(1, "reduction diagrams commute", criterion_1);
    unexpected |= timed(2, "Calogero from matrix eigenvalues", criterion_2);
    unexpected |= timed(3, "quantum coset reduction", criterion_3);
    unexpected |= timed(4, "relativistic free particle", criterion_4);
    let start = Instant::now();
    let (five, six) = criterion_5_and_6();
    let elapsed = start.elapsed().as_secs_f64();
    unexpected |= report(5, "Dirac bracket consistency", &five, elapsed).1;
    unexpected |= report(6, "non-commuting positions", &six, 0.0).1;
    unexpected |= timed(7, "world line condition", criterion_7);
    unexpected |= timed(8, "deformed Poincaré algebra", criterion_8);
    unexpected |= timed(9, "differentiation and integration kernels", criterion_9);
    unexpected |= timed(10, "reference frames", criterion_10);
    if unexpected {
        println!("acceptance: unexpected failures");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all criteria pass apart from recorded gaps");
        ExitCode::SUCCESS
    }
}
