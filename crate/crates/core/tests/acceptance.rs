//! Acceptance criteria 1 to 12. Each criterion prints one PASS/FAIL line
//! with its measured values and runtime.

use std::io::Write;
use std::time::{Duration, Instant};

use deltatree::couplings::{
    check_self_adjoint, delta_matrices, det_general_direct, general_eigenvalues, log_tau_grid, sufficient_condition_scan, CouplingSpec,
};
use deltatree::determinant::{appendix_a_checks, det_direct, det_recursive, ratio_by_flip, zero_order_at_origin};
use deltatree::fdm::compare_with_propagator;
use deltatree::function::{Norm, Packet};
use deltatree::propagator::{
    decay_scan, edge_grid, evolve_dispersive, grid_l2_norm, window_end, DecayOptions, EvolutionRequest, QuadratureSpec,
};
use deltatree::random::{rng, tree_family};
use deltatree::resolvent::{assemble_system, cramer_check, solve_resolvent, Layout};
use deltatree::spectral::find_eigenvalues;
use deltatree::{Complex64, Error, GraphFunction, MetricTree};
use nalgebra::DMatrix;
use rand::RngExt;

const SEED: u64 = 20240611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let pass = out.pass && took <= budget;
    // Written to the handle directly so the line shows without --nocapture.
    let _ = writeln!(
        std::io::stderr().lock(),
        "criterion {n:2}: {} ({}; {:.2} s of {} s)",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

/// The four oracle trees: single delta, two-delta line, star, bushy tree.
fn oracle_trees() -> Vec<(&'static str, MetricTree)> {
    vec![
        ("single delta", MetricTree::star(1.0, 2).unwrap()),
        ("two-delta line", MetricTree::line(&[1.0, 1.0], &[1.0]).unwrap()),
        ("star n=3", MetricTree::star(1.0, 3).unwrap()),
        (
            "bushy p=2",
            MetricTree::star(1.0, 3).unwrap().attach_vertex("e1", 1.0, 2.0, 3).unwrap(),
        ),
    ]
}

/// Gaussian at distance 3 from the root moving towards it with wavenumber
/// `k`, scaled to unit L¹ norm on its edge.
fn packet_data(tree: &MetricTree, k: f64) -> GraphFunction {
    let e = tree.external_edges().next().unwrap();
    let u = GraphFunction::zero(tree).with_packet(e, Packet::unit_mass(3.0, 1.0, k));
    let l1 = u.norm(tree, Norm::L1);
    u.scale(c(1.0 / l1, 0.0))
}

/// Oracle comparison data: slow enough for the fixed grid of the
/// Crank–Nicolson scheme, reaching the root at t = 0.75.
fn oracle_data(tree: &MetricTree) -> GraphFunction {
    packet_data(tree, -2.0)
}

/// Decay data: scattering is over before t = 1, so the fit window sees the
/// dispersive regime rather than the collision.
fn decay_data(tree: &MetricTree) -> GraphFunction {
    packet_data(tree, -3.0)
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0f64;
    let omegas: Vec<Complex64> = (0..50)
        .map(|i| 0.1 + 9.9 * i as f64 / 49.0)
        .flat_map(|s| [c(s, 0.0), c(0.0, s)])
        .collect();
    for n in [2usize, 3, 4] {
        for alpha in [-3.0, -1.0, 0.5, 1.0, 2.0] {
            let t = MetricTree::star(alpha, n).unwrap();
            let layout = Layout::full(&t);
            let nf = n as f64;
            for &w in &omegas {
                let det = det_direct(&t, w).unwrap();
                worst = worst.max(rel(det, (nf * w + alpha) / (w + alpha)));
                let ratio = ratio_by_flip(&t, &layout, 0, w).unwrap();
                worst = worst.max(rel(ratio, ((nf - 2.0) * w + alpha) / (nf * w + alpha)));
            }
        }
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("max relative error {worst:.2e}"),
    }
}

fn criterion_2() -> Outcome {
    let trees = tree_family(SEED, 20, 5, false);
    let mut r = rng(SEED + 2);
    let mut worst = 0.0f64;
    for t in &trees {
        for _ in 0..100 {
            let w = c(r.random_range(0.1..3.0), r.random_range(-3.0..3.0));
            let d = det_direct(t, w).unwrap();
            worst = worst.max(rel(det_recursive(t, w).unwrap().det, d));
        }
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("20 trees x 100 ω, max relative error {worst:.2e}"),
    }
}

fn criterion_3() -> Outcome {
    let trees = tree_family(SEED + 3, 20, 5, true);
    let mut mismatches = 0;
    for t in &trees {
        match zero_order_at_origin(t) {
            Ok(r) if r.zero_order + 1 == t.vertex_count() => {}
            _ => mismatches += 1,
        }
    }
    let resonant = MetricTree::line(&[2.0, -1.0], &[0.5]).unwrap();
    let order = zero_order_at_origin(&resonant).map(|r| r.zero_order);
    let resonant_ok = matches!(order, Ok(m) if m >= 2);
    Outcome {
        pass: mismatches == 0 && resonant_ok,
        detail: format!("{mismatches} of 20 positive trees off p-1; resonant line order {order:?}"),
    }
}

fn criterion_4() -> Outcome {
    let trees = tree_family(SEED + 4, 20, 5, true);
    let mut worst_ratio = 0.0f64;
    let mut max_derivative = f64::NEG_INFINITY;
    let mut stages = 0;
    let mut errors = 0;
    for t in &trees {
        match appendix_a_checks(t) {
            Ok(rep) => {
                for s in &rep.stages {
                    stages += 1;
                    worst_ratio = worst_ratio.max((s.ratio_at_zero - 1.0).norm());
                    max_derivative = max_derivative.max(s.ratio_derivative_at_zero.re);
                }
            }
            Err(_) => errors += 1,
        }
    }
    Outcome {
        pass: errors == 0 && worst_ratio <= 1e-8 && max_derivative < 0.0,
        detail: format!("{stages} stage edges, max |ratio(0)-1| {worst_ratio:.2e}, max ratio'(0) {max_derivative:.3e}, {errors} errors"),
    }
}

fn criterion_5() -> Outcome {
    let t = MetricTree::star(-2.0, 2).unwrap();
    let s = find_eigenvalues(&t).unwrap();
    let ev = s.eigenvalues();
    let one = ev.len() == 1 && (ev[0] + 1.0).abs() <= 1e-9;
    let mut sup = f64::INFINITY;
    if one {
        let phi = &s.eigenfunctions[0];
        let sign = phi.eval(0, 0.0).re.signum();
        sup = 0.0;
        for e in 0..2 {
            for i in 0..=400 {
                let x = 10.0 * i as f64 / 400.0;
                sup = sup.max((sign * phi.eval(e, x) - (-x).exp()).norm());
            }
        }
    }
    let positives = tree_family(SEED + 5, 10, 5, true);
    let with_eigs = positives
        .iter()
        .filter(|t| !find_eigenvalues(t).unwrap().eigen_omegas.is_empty())
        .count();
    Outcome {
        pass: one && sup <= 1e-7 && with_eigs == 0,
        detail: format!("eigenvalues {ev:?}, L∞ eigenfunction error {sup:.2e}, {with_eigs} of 10 positive trees with eigenvalues"),
    }
}

fn criterion_6() -> Outcome {
    let trees = tree_family(SEED + 6, 10, 5, false);
    let mut r = rng(SEED + 60);
    let (mut res, mut cont, mut flux, mut cramer) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for t in &trees {
        let mut u0 = GraphFunction::zero(t);
        let ext: Vec<usize> = t.external_edges().collect();
        let e = ext[r.random_range(0..ext.len())];
        u0 = u0.with_packet(
            e,
            Packet::new(
                c(1.0, r.random_range(-1.0..1.0)),
                r.random_range(0.5..3.0),
                r.random_range(0.3..1.0),
                r.random_range(-2.0..2.0),
            ),
        );
        if let Some(i) = t.internal_edges().next() {
            let l = t.edges()[i].length;
            u0 = u0.with_packet(i, Packet::new(c(0.5, 0.0), 0.5 * l, 0.2 * l, 1.0));
        }
        for _ in 0..10 {
            let w = c(r.random_range(0.2..2.0), r.random_range(-2.0..2.0));
            let sys = assemble_system(t, w, &u0).unwrap();
            let sol = solve_resolvent(t, &u0, &sys).unwrap();
            cramer = cramer.max(cramer_check(&sys, &sol));
            for v in 0..t.vertex_count() {
                cont = cont.max(sol.continuity_mismatch(v));
                flux = flux.max(sol.flux_defect(v));
            }
            for (k, edge) in t.edges().iter().enumerate() {
                let end = if edge.is_infinite() { 6.0 } else { edge.length };
                for j in 1..10 {
                    let x = end * j as f64 / 10.0;
                    res = res.max(sol.residual(k, x).norm());
                }
            }
        }
    }
    Outcome {
        pass: res <= 1e-5 && cont <= 1e-9 && flux <= 1e-7 && cramer <= 1e-9,
        detail: format!("residual {res:.2e}, continuity {cont:.2e}, flux {flux:.2e}, Cramer {cramer:.2e}"),
    }
}

fn criterion_7() -> Outcome {
    let t = MetricTree::star(0.0, 2).unwrap();
    let p = Packet::new(c(1.0, 0.0), 4.0, 1.0, -1.5);
    let u0 = GraphFunction::zero(&t).with_packet(1, p);
    let times = [0.5, 1.0, 5.0, 20.0];
    let mut worst = 0.0f64;
    for &tt in &times {
        let samples = edge_grid(&t, window_end(&u0, tt, 4.0), 0.05, 10);
        let ev = evolve_dispersive(&EvolutionRequest::new(&t, u0.clone(), vec![tt], samples.clone())).unwrap();
        let mut err = 0.0f64;
        let mut peak = 0.0f64;
        for (j, &(e, x)) in samples.iter().enumerate() {
            let exact = p.free_evolution(tt, if e == 0 { -x } else { x });
            err = err.max((ev.values[0][j] - exact).norm());
            peak = peak.max(exact.norm());
        }
        worst = worst.max(err / peak);
    }
    Outcome {
        pass: worst <= 1e-4,
        detail: format!("max relative L∞ error {worst:.2e}"),
    }
}

/// Criterion 8, returning the largest CN mass drift for criterion 12.
fn criterion_8(mass_drift: &mut f64) -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, t) in oracle_trees() {
        let u0 = oracle_data(&t);
        let rep = compare_with_propagator(&t, &u0, &[0.5, 1.0, 2.0], 1.0 / 64.0, 1.0 / 128.0, None, QuadratureSpec::default()).unwrap();
        let w = rep.rows.iter().map(|r| r.relative_l2).fold(0.0, f64::max);
        *mass_drift = mass_drift.max(rep.mass_drift);
        worst = worst.max(w);
        parts.push(format!("{name} {w:.2e}"));
    }
    Outcome {
        pass: worst <= 1e-2,
        detail: format!("relative L²: {}", parts.join(", ")),
    }
}

fn criterion_9() -> Outcome {
    let times: Vec<f64> = (0..=10).map(|i| 10f64.powf(0.2 * i as f64)).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, t) in oracle_trees() {
        let u0 = decay_data(&t);
        let base = decay_scan(&t, &u0, &times, DecayOptions::default()).unwrap();
        let refined_opts = DecayOptions {
            points_per_edge: 2 * DecayOptions::default().points_per_edge,
            quadrature: QuadratureSpec {
                tau_max: Some(1.5 * deltatree::propagator::default_tau_max(&u0)),
                min_nodes: 4096,
                check: false,
            },
        };
        let refined = decay_scan(&t, &u0, &times, refined_opts).unwrap();
        let change = (base.max_normalized - refined.max_normalized).abs() / refined.max_normalized;
        let ok = (base.beta - 0.5).abs() <= 0.05 && change <= 0.05 && (base.l1_norm - 1.0).abs() < 1e-6;
        pass &= ok;
        parts.push(format!("{name} β={:.3} max={:.4} Δ={change:.1e}", base.beta, base.max_normalized));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn criterion_10() -> Outcome {
    let t = MetricTree::line(&[2.0, -1.0], &[0.5]).unwrap();
    let u0 = GraphFunction::zero(&t).with_packet(0, Packet::unit_mass(3.0, 1.0, -1.0));
    let samples = edge_grid(&t, 40.0, 0.01, 10);
    let start = Instant::now();
    let out = evolve_dispersive(&EvolutionRequest::new(&t, u0, vec![1.0, 10.0], samples));
    let took = start.elapsed();
    let refused = matches!(out, Err(Error::ResonanceCondition { zero_order, expected: 1 }) if zero_order >= 2);
    Outcome {
        pass: refused && took < Duration::from_millis(500),
        detail: format!("refused: {refused}, {:.1} ms before any τ quadrature", took.as_secs_f64() * 1e3),
    }
}

fn criterion_11() -> Outcome {
    // δ instance: det_general / (det_δ Π(ω+α)) is the constant (-1)^p.
    let trees = [
        MetricTree::star(1.0, 3).unwrap().attach_vertex("e1", 1.0, -2.0, 3).unwrap(),
        MetricTree::line(&[-2.0, 0.5, -1.0], &[1.5, 0.7]).unwrap(),
    ];
    let mut spread = 0.0f64;
    let mut eig_err = 0.0f64;
    let mut eig_count_ok = true;
    let mut r = rng(SEED + 11);
    for t in &trees {
        let spec = CouplingSpec::delta_as_general(t).unwrap();
        let mut first: Option<Complex64> = None;
        for _ in 0..100 {
            let w = c(r.random_range(0.1..3.0), r.random_range(-3.0..3.0));
            let scale: Complex64 = t.vertices().iter().map(|v| w + v.alpha).product();
            let q = det_general_direct(t, &spec, w).unwrap() / (det_direct(t, w).unwrap() * scale);
            let f = *first.get_or_insert(q);
            spread = spread.max((q - f).norm() / f.norm());
        }
        let general = general_eigenvalues(t, &spec, 5.0).unwrap();
        let delta = find_eigenvalues(t).unwrap().eigenvalues();
        eig_count_ok &= general.len() == delta.len() && !delta.is_empty();
        for (a, b) in general.iter().zip(&delta) {
            eig_err = eig_err.max((a - b).abs());
        }
    }
    let (a, b) = delta_matrices(3, 1.0).unwrap();
    let delta_ok = check_self_adjoint(&a, &b).unwrap().self_adjoint;
    let dir_ok = check_self_adjoint(&DMatrix::identity(3, 3), &DMatrix::zeros(3, 3))
        .unwrap()
        .self_adjoint;
    let deficient = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    let rejects = !check_self_adjoint(&DMatrix::zeros(3, 3), &deficient).unwrap().self_adjoint;

    // conddet: the minimum over the grid follows the smallest |τ| down to 0.
    let line = MetricTree::line(&[1.0, 2.0], &[1.0]).unwrap();
    let spec = CouplingSpec::delta_as_general(&line).unwrap();
    let mins: Vec<(f64, f64)> = [1e-2, 1e-4, 1e-6, 1e-8]
        .iter()
        .map(|&lo| {
            let rep = sufficient_condition_scan(&line, &spec, &log_tau_grid(lo, 10.0, 80)).unwrap();
            (rep.argmin_tau.abs(), rep.min_abs_det)
        })
        .collect();
    let tends_to_zero = mins.windows(2).all(|w| w[1].1 < 0.1 * w[0].1)
        && mins
            .iter()
            .zip([1e-2, 1e-4, 1e-6, 1e-8])
            .all(|((at, _), lo)| (at - lo).abs() <= 1e-12 * lo.max(1.0) + 1e-3 * lo);
    let star = MetricTree::star(1.0, 3).unwrap();
    let dir = sufficient_condition_scan(&star, &CouplingSpec::dirichlet(&star), &log_tau_grid(1e-8, 10.0, 80)).unwrap();
    let pass = spread <= 1e-10 && eig_count_ok && eig_err <= 1e-9 && delta_ok && dir_ok && rejects && tends_to_zero && dir.plausibly_holds;
    Outcome {
        pass,
        detail: format!(
            "ratio spread {spread:.1e}, eigenvalue error {eig_err:.1e}, self-adjoint checks {delta_ok}/{dir_ok}/rejects {rejects}, \
             δ minima {:?}, Dirichlet min {:.3}",
            mins.iter().map(|m| format!("{:.1e}", m.1)).collect::<Vec<_>>(),
            dir.min_abs_det
        ),
    }
}

fn criterion_12(cn_mass_drift: f64) -> Outcome {
    let times = vec![0.1, 0.3, 1.0, 3.0, 10.0];
    let mut worst = 0.0f64;
    for (_, t) in oracle_trees() {
        let u0 = decay_data(&t);
        let exact = u0.norm(&t, Norm::L2);
        let samples = edge_grid(&t, window_end(&u0, 10.0, 4.0), 0.02, 10);
        let mut req = EvolutionRequest::new(&t, u0.clone(), times.clone(), samples.clone());
        req.quadrature.check = false;
        let ev = evolve_dispersive(&req).unwrap();
        for vals in &ev.values {
            worst = worst.max((grid_l2_norm(&samples, vals) - exact).abs() / exact);
        }
    }
    Outcome {
        pass: worst <= 1e-3 && cn_mass_drift <= 1e-10,
        detail: format!("max relative L² change {worst:.2e}, CN mass drift {cn_mass_drift:.1e}"),
    }
}

#[test]
fn acceptance_criteria() {
    let s = Duration::from_secs;
    let mut results = vec![
        report(1, s(1), criterion_1),
        report(2, s(10), criterion_2),
        report(3, s(30), criterion_3),
        report(4, s(30), criterion_4),
        report(5, s(5), criterion_5),
        report(6, s(20), criterion_6),
        report(7, s(10), criterion_7),
    ];
    let mut drift = 0.0;
    results.push(report(8, s(300), || criterion_8(&mut drift)));
    results.push(report(9, s(600), criterion_9));
    results.push(report(10, s(5), criterion_10));
    results.push(report(11, s(30), criterion_11));
    results.push(report(12, s(600), || criterion_12(drift)));
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, p)| !**p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
