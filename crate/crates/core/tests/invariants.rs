//! Cross-module property tests: semigroup consistency of the simulator,
//! analytic monotonicity of the transform and the interval oracles, and
//! structural invariants of the gasket walk.

use heatlab::estimate::{self, SamplingParams};
use heatlab::gasket::GasketGraph;
use heatlab::oracle;
use heatlab::process::{ModelKind, ProcessModel, State};
use heatlab::rng::SeedId;
use heatlab::scale::ScaleFunction;
use heatlab::space::{OpenSet, Point};
use proptest::prelude::*;
use std::sync::Arc;

/// Chapman-Kolmogorov: restarting a fresh path at X_{t1} and running it
/// for t2 reproduces the direct t1 + t2 transition probability.
#[test]
fn chapman_kolmogorov_two_stage_matches_direct() {
    let model = ProcessModel::brownian_line();
    let dt = 1e-3;
    let (t1, t2) = (0.3, 0.2);
    let n = 50_000u64;
    let target = OpenSet::Interval { a: -0.5, b: 0.5 };
    let direct = estimate::transition_prob(
        &model,
        Point::Line(0.0),
        t1 + t2,
        &target,
        n,
        &SamplingParams::grid(dt),
        8101,
    )
    .unwrap();
    let mut hits = 0u64;
    for i in 0..n {
        let first = model
            .sample_path(Point::Line(0.0), t1, dt, SeedId::new(8102, i))
            .unwrap();
        let x1 = first.states.last().unwrap().point().unwrap();
        let second = model
            .sample_path(x1, t2, dt, SeedId::new(8103, i))
            .unwrap();
        if let State::Alive(Point::Line(y)) = second.states.last().unwrap() {
            if (-0.5..0.5).contains(y) {
                hits += 1;
            }
        }
    }
    let two_stage = hits as f64 / n as f64;
    let se2 = (two_stage * (1.0 - two_stage) / n as f64).sqrt();
    let combined = (direct.std_error.powi(2) + se2 * se2).sqrt();
    let exact = oracle::free_interval_prob(0.0, t1 + t2, 1.0, -0.5, 0.5);
    assert!(
        (direct.estimate - two_stage).abs() <= 4.0 * combined,
        "direct {} vs two-stage {two_stage} (combined SE {combined})",
        direct.estimate
    );
    assert!((two_stage - exact).abs() <= 4.0 * se2.max(1e-4));
}

/// Consecutive distinct states of the gasket walk are graph neighbors,
/// and the walk never leaves the vertex set.
#[test]
fn gasket_walk_moves_along_edges() {
    let g = Arc::new(GasketGraph::new(2));
    let model = ProcessModel::new(ModelKind::GasketWalk(g.clone()), 1.0).unwrap();
    let x0 = g.corners()[0];
    let dt = g.step_time();
    for i in 0..500u64 {
        let path = model
            .sample_path(Point::Gasket(x0), 100.0 * dt, dt, SeedId::new(8200, i))
            .unwrap();
        let mut prev = x0;
        for s in &path.states {
            let State::Alive(Point::Gasket(v)) = *s else {
                panic!("gasket walk is conservative");
            };
            assert!(v == prev || g.neighbors(prev).contains(&v));
            prev = v;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// a Phi(R, t) <= Phi(aR, t) for a >= 1, and Phi is nonincreasing
    /// in t.
    #[test]
    fn phi_homogeneity_and_monotonicity(
        beta in 1.5f64..4.0,
        a in 1.0f64..10.0,
        r in 0.01f64..100.0,
        t in 0.01f64..100.0,
    ) {
        let sf = ScaleFunction::power(beta).unwrap();
        let phi = sf.phi(r, t);
        let scaled = sf.phi(a * r, t);
        prop_assert!(a * phi <= scaled * (1.0 + 1e-9) + 1e-12);
        let later = sf.phi(r, 1.5 * t);
        prop_assert!(later <= phi * (1.0 + 1e-9) + 1e-12);
    }

    /// Interval survival probability lies in [0, 1], decreases in t, and
    /// its complement (the exit CDF) increases accordingly.
    #[test]
    fn survival_is_a_decreasing_probability(
        x in -0.9f64..0.9,
        t in 0.01f64..3.0,
    ) {
        let s0 = oracle::survival_prob(x, -1.0, 1.0, t, 1.0);
        let s1 = oracle::survival_prob(x, -1.0, 1.0, t + 0.25, 1.0);
        prop_assert!((0.0..=1.0).contains(&s0));
        prop_assert!(s1 <= s0 + 1e-12);
        let c0 = oracle::exit_cdf(x, -1.0, 1.0, t, 1.0);
        prop_assert!((c0 + s0 - 1.0).abs() < 1e-12);
    }

    /// The image-method interval probability is additive over a partition
    /// of (-1, 1) and bounded by the survival probability.
    #[test]
    fn dirichlet_interval_prob_partitions_survival(
        x in -0.8f64..0.8,
        t in 0.02f64..1.0,
    ) {
        let k = 16;
        let mut total = 0.0;
        for i in 0..k {
            let lo = -1.0 + 2.0 * i as f64 / k as f64;
            let hi = -1.0 + 2.0 * (i + 1) as f64 / k as f64;
            total += oracle::dirichlet_interval_prob(x, -1.0, 1.0, t, 1.0, lo, hi);
        }
        let survival = oracle::survival_prob(x, -1.0, 1.0, t, 1.0);
        prop_assert!((total - survival).abs() < 1e-7);
    }
}
