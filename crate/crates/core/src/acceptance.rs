//! The acceptance suite: ten end-to-end checks tying the numerical
//! transform, the simulators, the decomposition identities, and the bound
//! profiles to independent oracles. Each criterion returns a structured
//! result so the CLI and the test harness print identical verdicts.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::bounds::{self, BoundFunction, ChainInputs, DeriveMode};
use crate::dynkin_hunt::{self, MdhParams};
use crate::estimate::{self, PartitionHierarchy, SamplingParams};
use crate::gasket::GasketGraph;
use crate::oracle;
use crate::process::{ModelKind, ProcessModel, State};
use crate::rng::SeedId;
use crate::scale::{self, ScaleFunction, ScaleKind};
use crate::space::{OpenSet, Point, Space};
use crate::stopping;

#[derive(Debug, Clone, serde::Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CriterionResult {
    fn new(id: u32, name: &str, pass: bool, detail: String) -> Self {
        CriterionResult {
            id,
            name: name.to_string(),
            pass,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "criterion {:2} [{}] {} — {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

/// Run all ten criteria in order. Heavy Monte Carlo work dominates the
/// runtime; every estimator call uses a fixed seed so reruns are
/// bit-identical.
pub fn run_all() -> Vec<CriterionResult> {
    let mut out = Vec::new();
    out.push(phi_closed_form());
    out.push(phi_sandwich());
    out.push(multiple_dh_identity());
    let (c4, eps3) = mean_exit_oracle();
    out.push(c4);
    out.push(exit_prob_oracle());
    let (c6, chain) = exit_chain(eps3);
    out.push(c6);
    out.push(mean_exit_criterion_empirical());
    out.push(density_extraction());
    out.push(bound_domination(chain));
    out.push(pathwise_invariants());
    out
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// 1. Numeric Phi agrees with the power-law closed form to 1e-6 relative
/// error on a 50x50 log grid for four exponents.
fn phi_closed_form() -> CriterionResult {
    let grid = log_grid(1e-2, 1e2, 50);
    let mut worst = 0.0f64;
    for beta in [1.5, 2.0, 2.5, 5f64.log2()] {
        let sf = ScaleFunction::power(beta).unwrap();
        for &big_r in &grid {
            for &t in &grid {
                let numeric = sf.phi(big_r, t);
                let closed = scale::phi_power_closed_form(beta, big_r, t).unwrap();
                let rel = (numeric - closed).abs() / closed.max(1e-300);
                worst = worst.max(rel);
            }
        }
    }
    CriterionResult::new(
        1,
        "phi closed form",
        worst <= 1e-6,
        format!("worst relative error {worst:.2e} (tolerance 1e-6)"),
    )
}

/// 2. Phi sandwich and homogeneity inequalities hold at every point of a
/// 100x100 grid for the power and piecewise scale functions.
fn phi_sandwich() -> CriterionResult {
    let rs = log_grid(1e-2, 1e2, 100);
    let ts = log_grid(1e-2, 1e2, 100);
    let power = ScaleFunction::power(2.0).unwrap();
    let piecewise = ScaleFunction::new(
        ScaleKind::PiecewisePower {
            breakpoints: vec![1.0],
            exponents: vec![2.0, 2.5],
        },
        1.0,
        2.0,
        2.5,
    )
    .unwrap();
    let rep_p = scale::phi_sandwich_check(&power, &rs, &ts);
    let rep_pw = scale::phi_sandwich_check(&piecewise, &rs, &ts);
    CriterionResult::new(
        2,
        "phi sandwich and homogeneity",
        rep_p.pass && rep_pw.pass,
        format!(
            "violations: power {}, piecewise {}",
            rep_p.violations, rep_pw.violations
        ),
    )
}

/// 3. Multiple Dynkin-Hunt identity on the line with U = (-1,1),
/// B = (-1/2,1/2), x in {0, 2}, t in {0.1, 0.5, 1.0}.
fn multiple_dh_identity() -> CriterionResult {
    let model = ProcessModel::brownian_line();
    let u = OpenSet::Interval { a: -1.0, b: 1.0 };
    let b = OpenSet::Interval { a: -0.5, b: 0.5 };
    let ts = [0.1, 0.5, 1.0];
    let params = SamplingParams::bridged(1e-4);
    let mdh = MdhParams {
        n_outer: 200_000,
        m_inner: 16,
        n_max: 32,
        remainder_tol: 1e-5,
    };
    let mut pass = true;
    let mut details = Vec::new();
    for (xi, &x) in [0.0f64, 2.0].iter().enumerate() {
        let ledgers = dynkin_hunt::verify_multiple_dh(
            &model,
            &u,
            &b,
            Point::Line(x),
            &ts,
            &params,
            &mdh,
            301 + xi as u64,
        )
        .unwrap();
        for ledger in &ledgers {
            let identity_ok = ledger.holds_within(3.0);
            let exact = oracle::free_interval_prob(x, ledger.t, 1.0, -0.5, 0.5);
            // At the far start the empirical SE can degenerate to 0; fall
            // back on the binomial SE implied by the oracle value.
            let se = ledger
                .lhs
                .std_error
                .max((exact * (1.0 - exact) / ledger.lhs.n as f64).sqrt());
            let oracle_ok = (ledger.lhs.estimate - exact).abs() <= 3.0 * se;
            pass &= identity_ok && oracle_ok;
            details.push(format!(
                "x={x} t={}: diff {:+.2e} (3SE+rem {:.2e}) lhs {:.4} oracle {:.4}",
                ledger.t,
                ledger.diff.estimate,
                3.0 * ledger.diff.std_error + ledger.remainder_bound,
                ledger.lhs.estimate,
                exact
            ));
        }
    }
    CriterionResult::new(3, "multiple Dynkin-Hunt identity", pass, details.join("; "))
}

/// 4. Mean exit time from B(0,1) on the line: uncapped within 2% of the
/// exact value 1, capped at 1 within 2% of the series-integrated value.
/// Also returns the conservative capped-mean constant feeding criterion 6.
fn mean_exit_oracle() -> (CriterionResult, f64) {
    let model = ProcessModel::brownian_line();
    let params = SamplingParams::bridged(1e-4);
    let uncapped = estimate::mean_exit_time(
        &model,
        Point::Line(0.0),
        1.0,
        None,
        12.0,
        100_000,
        &params,
        401,
        1e-3,
    )
    .unwrap();
    let capped = estimate::mean_exit_time(
        &model,
        Point::Line(0.0),
        1.0,
        Some(1.0),
        12.0,
        100_000,
        &params,
        402,
        1e-3,
    )
    .unwrap();
    let capped_oracle = oracle::capped_mean_exit_time(0.0, -1.0, 1.0, 1.0, 1.0);
    let err_u = (uncapped.estimate.estimate - 1.0).abs();
    let err_c = (capped.estimate.estimate - capped_oracle).abs() / capped_oracle;
    let pass = err_u <= 0.02 && err_c <= 0.02;
    // Conservative empirical constant for condition (3): shave 3 SE.
    let eps3 = capped.estimate.estimate - 3.0 * capped.estimate.std_error;
    (
        CriterionResult::new(
            4,
            "mean exit time oracle",
            pass,
            format!(
                "E[tau] {:.4} (exact 1, err {:.2}%), E[tau^1] {:.4} (oracle {:.4}, err {:.2}%)",
                uncapped.estimate.estimate,
                100.0 * err_u,
                capped.estimate.estimate,
                capped_oracle,
                100.0 * err_c
            ),
        ),
        eps3,
    )
}

/// 5. Exit probability from B(0,1) within 3 SE of the eigenfunction-series
/// oracle at t in {0.25, 0.5, 1.0}.
fn exit_prob_oracle() -> CriterionResult {
    let model = ProcessModel::brownian_line();
    let params = SamplingParams::bridged(1e-4);
    let mut pass = true;
    let mut details = Vec::new();
    for (i, &t) in [0.25, 0.5, 1.0].iter().enumerate() {
        let est = estimate::exit_prob(
            &model,
            Point::Line(0.0),
            1.0,
            t,
            100_000,
            &params,
            501 + i as u64,
        )
        .unwrap();
        let exact = 1.0 - oracle::survival_prob(0.0, -1.0, 1.0, t, 1.0);
        let ok = (est.estimate - exact).abs() <= 3.0 * est.std_error;
        pass &= ok;
        details.push(format!("t={t}: {:.4} vs {:.4}", est.estimate, exact));
    }
    CriterionResult::new(5, "exit probability oracle", pass, details.join("; "))
}

/// 6. Exit-probability condition chain: witness the capped-mean condition
/// empirically, compose the displayed implications into a Phi-form bound,
/// and check it dominates the empirical exit probabilities on a grid; the
/// negative control with gamma x 100 must fail.
fn exit_chain(eps3: f64) -> (CriterionResult, bounds::ExitChain) {
    let sf = ScaleFunction::power(2.0).unwrap();
    let chain = bounds::chain_from_capped_mean(eps3, 1.0, 1.0, 2.0, 2.0).unwrap();
    let model = ProcessModel::brownian_line();
    let params = SamplingParams::bridged(1e-4);
    let samples = [
        (Point::Line(0.0), 0.25),
        (Point::Line(0.0), 0.5),
        (Point::Line(0.0), 1.0),
    ];
    let ts = [0.05, 0.1, 0.25, 0.5, 1.0];
    let positive = bounds::verify_p_condition(
        &model,
        &OpenSet::WholeSpace,
        2.0,
        &sf,
        chain.c,
        chain.gamma,
        &samples,
        &ts,
        20_000,
        &params,
        601,
    )
    .unwrap();
    let negative = bounds::verify_p_condition(
        &model,
        &OpenSet::WholeSpace,
        2.0,
        &sf,
        chain.c,
        chain.gamma * 100.0,
        &samples,
        &ts,
        20_000,
        &params,
        601,
    )
    .unwrap();
    let pass = positive.pass && !negative.pass;
    (
        CriterionResult::new(
            6,
            "exit-probability condition chain",
            pass,
            format!(
                "eps3 {:.4}, gamma {:.4}, c {:.4}; bound slack {:+.3e}; negative control {}",
                eps3,
                chain.gamma,
                chain.c,
                positive.worst_slack,
                if negative.pass { "PASSED (bad)" } else { "failed as required" }
            ),
        ),
        chain,
    )
}

/// 7. Mean-exit-time criterion: threshold 1/2 and bound 7/8 for the unit
/// ball under Gaussian scaling; the empirical probability sits far below.
fn mean_exit_criterion_empirical() -> CriterionResult {
    let sf = ScaleFunction::power(2.0).unwrap();
    let (threshold, bound) = bounds::mean_exit_criterion(1.0, 1.0, 2.0, &sf, 1.0).unwrap();
    let model = ProcessModel::brownian_line();
    let params = SamplingParams::bridged(1e-4);
    let est = estimate::exit_prob(&model, Point::Line(0.0), 1.0, threshold, 100_000, &params, 701)
        .unwrap();
    let margin = (bound - est.estimate) / est.std_error;
    let oracle_p = 1.0 - oracle::survival_prob(0.0, -1.0, 1.0, threshold, 1.0);
    let pass = threshold == 0.5
        && bound == 0.875
        && (est.estimate - oracle_p).abs() <= 3.0 * est.std_error
        && margin >= 50.0;
    CriterionResult::new(
        7,
        "mean-exit-time criterion",
        pass,
        format!(
            "threshold {threshold}, bound {bound}; P_hat {:.4} (oracle {:.4}), margin {:.0} SE",
            est.estimate, oracle_p, margin
        ),
    )
}

/// 8. Density extraction on the killed interval: finest-cell value at the
/// origin within 5% of the image-method kernel, coarse-level telescoping
/// exact.
fn density_extraction() -> CriterionResult {
    let model = ProcessModel::brownian_killed(-1.0, 1.0);
    let params = SamplingParams::bridged(1e-4);
    let hierarchy = PartitionHierarchy::new(-1.0, 1.0, 10).unwrap();
    let est = estimate::density_extract(
        &model,
        Point::Line(0.0),
        0.1,
        &OpenSet::Interval { a: -1.0, b: 1.0 },
        hierarchy,
        500_000,
        &params,
        801,
    )
    .unwrap();
    let cell = est.hierarchy.cell_of(0.0).unwrap();
    let (c0, c1) = est.hierarchy.cell_bounds(cell);
    let exact =
        oracle::dirichlet_interval_prob(0.0, -1.0, 1.0, 0.1, 1.0, c0, c1) / est.hierarchy.cell_width();
    let rel = (est.density(cell) - exact).abs() / exact;
    // Telescoping: every coarse level must be the exact sum of its
    // children, with zero tolerance (shared samples).
    let mut telescoping = true;
    for level in (0..10).rev() {
        let coarse = est.counts_at_level(level);
        let fine = est.counts_at_level(level + 1);
        for (i, &c) in coarse.iter().enumerate() {
            if c != fine[2 * i] + fine[2 * i + 1] {
                telescoping = false;
            }
        }
    }
    CriterionResult::new(
        8,
        "density extraction",
        rel <= 0.05 && telescoping,
        format!(
            "cell density {:.4} vs kernel {:.4} ({:.2}% off); telescoping {}",
            est.density(cell),
            exact,
            100.0 * rel,
            if telescoping { "exact" } else { "BROKEN" }
        ),
    )
}

/// 9. The localized bound profile with chain-derived constants dominates
/// the image-method Dirichlet kernel and the empirical full-kernel
/// estimates in all three cases of the display.
fn bound_domination(chain: bounds::ExitChain) -> CriterionResult {
    let sf = ScaleFunction::power(2.0).unwrap();
    let space = Space::Line;
    let c3 = 1.01 / (2.0 * std::f64::consts::PI).sqrt();
    let f = BoundFunction::power(c3, 0.5);
    let u = OpenSet::Interval { a: -1.0, b: 1.0 };
    let big_r = 2.0;
    let inputs = ChainInputs {
        c_psi: 1.0,
        beta1: 2.0,
        beta2: 2.0,
        c_f: 1.0,
        alpha_f: 0.5,
        c: chain.c,
        gamma: chain.gamma,
        epsilon: 0.2,
    };
    let ledger = bounds::derive_constants(&inputs, &DeriveMode::Chain).unwrap();
    let mut pass = true;
    let mut details = Vec::new();

    // Gate: F passes the on-diagonal verification on the killed interval.
    let killed = ProcessModel::brownian_killed(-1.0, 1.0);
    let du = bounds::verify_du_condition(
        &f,
        &killed,
        &u,
        big_r,
        &sf,
        &[(0.1, Point::Line(0.0)), (0.5, Point::Line(0.3))],
        6,
        50_000,
        &SamplingParams::bridged(1e-3),
        901,
    )
    .unwrap();
    pass &= du.pass;
    details.push(format!("DU slack {:+.3e}", du.worst_slack));

    // Case 1 analytic: t < Psi(R), x in U; the profile dominates the
    // image-method kernel on a dense grid of y (kernel <= free Gaussian
    // and the profile's exponential decays strictly slower).
    let mut worst1 = f64::INFINITY;
    for &t in &[0.1, 0.5] {
        for &x in &[0.0, 0.3] {
            for k in 0..100 {
                let y = -0.49 + 0.98 * k as f64 / 99.0;
                let rhs = bounds::theorem52_rhs(
                    &ledger,
                    &f,
                    &space,
                    &sf,
                    big_r,
                    &u,
                    t,
                    Point::Line(x),
                    Point::Line(y),
                )
                .unwrap();
                let kernel = oracle::dirichlet_kernel(x, y, -1.0, 1.0, t, 1.0);
                worst1 = worst1.min(rhs - kernel);
            }
        }
    }
    pass &= worst1 >= 0.0;
    details.push(format!("case-1 analytic slack {worst1:+.3e}"));

    // Empirical full-kernel domination in each case: cell densities of
    // the unkilled process against the profile at cell centers.
    let line = ProcessModel::brownian_line();
    let cases: [(f64, f64, &str); 3] = [
        (0.1, 0.0, "case 1 (t < Psi(R), x in U)"),
        (0.1, 1.5, "case 2 (x outside U)"),
        (4.0, 0.0, "case 3 (t >= Psi(R))"),
    ];
    for (ci, &(t, x, label)) in cases.iter().enumerate() {
        let params = if t > 1.0 {
            SamplingParams::bridged(1e-3)
        } else {
            SamplingParams::bridged(1e-4)
        };
        let hierarchy = PartitionHierarchy::new(-0.5, 0.5, 7).unwrap();
        let est = estimate::density_extract(
            &line,
            Point::Line(x),
            t,
            &OpenSet::WholeSpace,
            hierarchy,
            50_000,
            &params,
            902 + ci as u64,
        )
        .unwrap();
        let mut worst = f64::INFINITY;
        for cell in 0..est.hierarchy.n_cells() {
            let (c0, c1) = est.hierarchy.cell_bounds(cell);
            let y = 0.5 * (c0 + c1);
            let rhs = bounds::theorem52_rhs(
                &ledger,
                &f,
                &space,
                &sf,
                big_r,
                &u,
                t,
                Point::Line(x),
                Point::Line(y),
            )
            .unwrap();
            worst = worst.min(rhs + 3.0 * est.density_se(cell) - est.density(cell));
        }
        pass &= worst >= 0.0;
        details.push(format!("{label} slack {worst:+.3e}"));
    }
    CriterionResult::new(9, "bound profile domination", pass, details.join("; "))
}

/// 10. Pathwise invariants on 10^4 paths per model, plus bit-identical
/// results across thread counts.
fn pathwise_invariants() -> CriterionResult {
    let mut pass = true;
    let mut details = Vec::new();

    let gasket = Arc::new(GasketGraph::new(3));
    let gasket_dt = gasket.step_time();
    let corner = gasket.corners()[0];
    let inner = gasket.neighbors(corner)[0];
    let mut b_verts = BTreeSet::new();
    b_verts.insert(inner);
    let mut u_verts = b_verts.clone();
    for &v in gasket.neighbors(inner) {
        u_verts.insert(v);
    }
    for v in u_verts.clone() {
        for &w in gasket.neighbors(v) {
            u_verts.insert(w);
        }
    }

    let fixtures: Vec<(&str, ProcessModel, Point, f64, OpenSet, OpenSet)> = vec![
        (
            "brownian_line",
            ProcessModel::brownian_line(),
            Point::Line(0.0),
            1e-3,
            OpenSet::Interval { a: -1.0, b: 1.0 },
            OpenSet::Interval { a: -0.5, b: 0.5 },
        ),
        (
            "brownian_killed",
            ProcessModel::brownian_killed(-1.0, 1.0),
            Point::Line(0.0),
            1e-3,
            OpenSet::Interval { a: -0.8, b: 0.8 },
            OpenSet::Interval { a: -0.4, b: 0.4 },
        ),
        (
            "brownian_circle",
            ProcessModel::new(ModelKind::BrownianCircle { circumference: 1.0 }, 1.0).unwrap(),
            Point::Circle(0.5),
            1e-3,
            OpenSet::Ball {
                center: Point::Circle(0.5),
                radius: 0.3,
            },
            OpenSet::Ball {
                center: Point::Circle(0.5),
                radius: 0.1,
            },
        ),
        (
            "gasket_walk",
            ProcessModel::new(ModelKind::GasketWalk(gasket.clone()), 1.0).unwrap(),
            Point::Gasket(inner),
            gasket_dt,
            OpenSet::VertexSet(u_verts),
            OpenSet::VertexSet(b_verts),
        ),
    ];

    for (name, model, x0, dt, u, b) in &fixtures {
        let space = model.space();
        let horizon = 1.0;
        let mut ok = true;
        for i in 0..10_000u64 {
            let seed = SeedId::new(1000, i);
            let path = model.sample_path(*x0, horizon, *dt, seed).unwrap();
            // Interleaving tau_n <= sigma_n <= tau_{n+1}.
            let seq = stopping::mdh_sequence(&path, &space, u, b, horizon).unwrap();
            let mut prev_sigma = 0.0;
            for &(tau, sigma) in &seq.pairs {
                ok &= prev_sigma <= tau && tau <= sigma;
                prev_sigma = sigma.min(f64::INFINITY);
                if !sigma.is_finite() {
                    break;
                }
            }
            // Exit-time monotonicity in the radius.
            let small = OpenSet::Ball {
                center: *x0,
                radius: 0.2,
            };
            let large = OpenSet::Ball {
                center: *x0,
                radius: 0.4,
            };
            ok &= stopping::exit_time(&path, &space, &small)
                <= stopping::exit_time(&path, &space, &large);
            // Part <= full indicator dominance at mid-horizon (snapped to
            // the model's time grid).
            let idx = (0.5 / *dt).round() as usize;
            let t_mid = idx as f64 * *dt;
            let at_mid = path.states[idx];
            let full_ind = matches!(at_mid, State::Alive(p) if b.contains(&space, p));
            let part_ind = full_ind && stopping::exit_time(&path, &space, u) > t_mid;
            ok &= !part_ind || full_ind;
            // Cemetery absorption: no live state after the first cemetery.
            let mut dead = false;
            for s in &path.states {
                if dead {
                    ok &= s.is_cemetery();
                }
                dead |= s.is_cemetery();
            }
            if !ok {
                break;
            }
        }
        pass &= ok;
        details.push(format!("{name} {}", if ok { "ok" } else { "VIOLATED" }));
    }

    // Thread-count invariance: identical bits from 1 and 8 worker threads.
    let model = ProcessModel::brownian_line();
    let params = SamplingParams::bridged(1e-3);
    let target = OpenSet::Interval { a: -0.5, b: 0.5 };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                estimate::transition_prob(&model, Point::Line(0.0), 0.2, &target, 20_000, &params, 1001)
                    .unwrap()
            })
    };
    let a = run(1);
    let b = run(8);
    let deterministic =
        a.estimate.to_bits() == b.estimate.to_bits() && a.std_error.to_bits() == b.std_error.to_bits();
    pass &= deterministic;
    details.push(format!(
        "threads 1 vs 8 {}",
        if deterministic { "identical" } else { "DIFFER" }
    ));

    CriterionResult::new(10, "pathwise invariants", pass, details.join("; "))
}
