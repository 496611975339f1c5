//! Monte Carlo verification of the single and multiple Dynkin-Hunt
//! identities.
//!
//! Single form: P_t u(x) = P^U_t u(x) + E_x[1{tau_U <= t} P_{t-tau_U} u(X_{tau_U})].
//! Multiple form, for u supported in B with closure(B) inside U:
//!   P_t u(x) = P^U_t u(x) + sum_n E_x[1{sigma_n <= t} P^U_{t-sigma_n} u(X_{sigma_n})],
//! where tau_1 is the exit time of U, sigma_n the entrance time of B after
//! tau_n, and tau_{n+1} the exit time of U after sigma_n.
//!
//! The composite expectations are estimated by nested restart sampling: m
//! fresh inner paths per outer stopping event, drawn from derived RNG
//! substreams, which makes the product estimator unbiased. Outer and inner
//! dynamics use identical stepping (including the optional bridge-crossing
//! correction), under which the decomposition is an exact identity for the
//! simulated chain, not just a discretization of the continuum one.

use rayon::prelude::*;

use crate::error::{ConfigError, Result};
use crate::estimate::{EstimateWithError, SamplingParams};
use crate::process::{ModelKind, ProcessModel, State};
use crate::rng::{CounterRng, SeedId};
use crate::space::{OpenSet, Point};

/// Substream tag family for inner restarts; the term index n is added so
/// each series term gets its own family.
const INNER_TAG: u64 = 0x4448; // "DH"

const CHUNK: u64 = 1024;

#[derive(Debug, Clone)]
pub struct MdhParams {
    pub n_outer: u64,
    pub m_inner: u32,
    /// Largest series index sampled; the tail beyond it is covered by the
    /// remainder bound |u|_sup * P(sigma_{n_max+1} <= t).
    pub n_max: usize,
    /// Terms whose empirical P(sigma_n <= t) falls below this are cut from
    /// the reported series (the remainder bound then starts there).
    pub remainder_tol: f64,
}

impl Default for MdhParams {
    fn default() -> Self {
        MdhParams {
            n_outer: 100_000,
            m_inner: 16,
            n_max: 32,
            remainder_tol: 1e-4,
        }
    }
}

/// One series term of the multiple Dynkin-Hunt ledger.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MdhTerm {
    pub n: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub p_sigma_le_t: f64,
}

/// All estimated pieces of the identity at one time t.
#[derive(Debug, Clone)]
pub struct MdhLedger {
    pub t: f64,
    /// P_t u(x), the plain transition estimate.
    pub lhs: EstimateWithError,
    /// P^U_t u(x), the part-process term.
    pub zeroth: EstimateWithError,
    pub terms: Vec<MdhTerm>,
    /// Upper bound on the truncated tail: P(sigma_{N+1} <= t) for the last
    /// reported index N, times |u|_sup = 1 for indicators.
    pub remainder_bound: f64,
    /// Mean and SE of the per-path difference lhs - rhs over all sampled
    /// terms; the identity asserts |mean| <= remainder within noise.
    pub diff: EstimateWithError,
}

impl MdhLedger {
    pub fn rhs_partial_sum(&self) -> f64 {
        self.zeroth.estimate + self.terms.iter().map(|e| e.estimate).sum::<f64>()
    }

    /// Identity check: |lhs - rhs| within k standard errors plus the
    /// one-sided truncation remainder.
    pub fn holds_within(&self, k: f64) -> bool {
        self.diff.estimate.abs() <= k * self.diff.std_error + self.remainder_bound
    }
}

/// Both sides of the single Dynkin-Hunt identity.
#[derive(Debug, Clone)]
pub struct SingleDhReport {
    pub t: f64,
    pub lhs: EstimateWithError,
    pub part: EstimateWithError,
    pub second_term: EstimateWithError,
    pub diff: EstimateWithError,
}

impl SingleDhReport {
    pub fn rhs(&self) -> f64 {
        self.part.estimate + self.second_term.estimate
    }

    pub fn holds_within(&self, k: f64) -> bool {
        self.diff.estimate.abs() <= k * self.diff.std_error
    }
}

/// Interval endpoints for the bridge correction, when applicable.
fn bridge_interval(
    model: &ProcessModel,
    set: &OpenSet,
    params: &SamplingParams,
) -> Option<(f64, f64)> {
    if !params.bridge_correction {
        return None;
    }
    if !matches!(
        model.kind,
        ModelKind::BrownianLine | ModelKind::BrownianKilled { .. }
    ) {
        return None;
    }
    match set {
        OpenSet::Interval { a, b } => Some((*a, *b)),
        OpenSet::Ball {
            center: Point::Line(c),
            radius,
        } => Some((c - radius, c + radius)),
        _ => None,
    }
}

/// Within-step crossing coin for the bridged exit rule; slot 2 keeps it
/// disjoint from the increment slots. Steps far from both walls skip the
/// exp() evaluation entirely.
#[inline]
fn bridged_cross(
    model: &ProcessModel,
    rng: &CounterRng,
    step: u64,
    iv: (f64, f64),
    x: f64,
    y: f64,
    dt: f64,
) -> bool {
    let (a, b) = iv;
    let band = 6.0 * (model.scale * dt).sqrt();
    if (x - a).min(y - a) > band && (b - x).min(b - y) > band {
        return false;
    }
    let p = model.bridge_crossing_prob(a, b, x, y, dt);
    p > 0.0 && rng.uniform(step, 2) <= p
}

/// Events of one outer path: states at the requested grid steps, the first
/// exit time of U, and the (sigma_n, entry point) sequence.
struct OuterScan {
    states_at: Vec<State>,
    tau1: f64,
    sigmas: Vec<(f64, Point)>,
}

fn scan_outer(
    model: &ProcessModel,
    u_set: &OpenSet,
    b_set: &OpenSet,
    x: Point,
    t_steps: &[usize],
    params: &SamplingParams,
    seed: SeedId,
    max_sigmas: usize,
) -> OuterScan {
    let space = model.space();
    let rng = CounterRng::new(seed);
    let iv = bridge_interval(model, u_set, params);
    let n_steps = *t_steps.iter().max().unwrap();
    let mut states_at = vec![State::Cemetery; t_steps.len()];
    let mut state = State::Alive(x);
    // watching_exit: true while inside the current U-excursion.
    let mut watching_exit = u_set.contains(&space, x);
    let mut tau1 = if watching_exit { f64::INFINITY } else { 0.0 };
    let mut sigmas: Vec<(f64, Point)> = Vec::new();
    for i in 0..=n_steps {
        if i > 0 {
            let prev = state;
            state = model.step(&rng, (i - 1) as u64, params.dt, state);
            let t_here = i as f64 * params.dt;
            if watching_exit {
                let inside = match state {
                    State::Alive(p) => u_set.contains(&space, p),
                    State::Cemetery => false,
                };
                let crossed = inside
                    && match (iv, prev, state) {
                        (Some(iv), State::Alive(pp), State::Alive(pq)) => bridged_cross(
                            model,
                            &rng,
                            (i - 1) as u64,
                            iv,
                            pp.as_line(),
                            pq.as_line(),
                            params.dt,
                        ),
                        _ => false,
                    };
                if !inside || crossed {
                    if tau1.is_infinite() {
                        tau1 = t_here;
                    }
                    watching_exit = false;
                }
            }
            // A bridged exit leaves the state inside U, so the entrance of
            // B can occur at the same grid time; check after the exit phase.
            if !watching_exit && sigmas.len() < max_sigmas {
                if let State::Alive(p) = state {
                    if b_set.contains(&space, p) {
                        sigmas.push((t_here, p));
                        watching_exit = true;
                    }
                }
            }
        }
        for (slot, &s) in t_steps.iter().enumerate() {
            if s == i {
                states_at[slot] = state;
            }
        }
    }
    OuterScan {
        states_at,
        tau1,
        sigmas,
    }
}

/// Part-process indicators 1{X'_s in B, s < tau'_U} of one inner path at
/// the given step offsets. Streaming stops at the (bridged) exit of U,
/// after which every later offset contributes 0.
fn inner_part_indicators(
    model: &ProcessModel,
    u_set: &OpenSet,
    b_set: &OpenSet,
    start: Point,
    offsets: &[usize],
    params: &SamplingParams,
    seed: SeedId,
) -> Vec<f64> {
    let space = model.space();
    let rng = CounterRng::new(seed);
    let iv = bridge_interval(model, u_set, params);
    let max_off = *offsets.iter().max().unwrap();
    let mut out = vec![0.0; offsets.len()];
    let mut state = State::Alive(start);
    let record = |step: usize, st: &State, out: &mut [f64]| {
        for (slot, &off) in offsets.iter().enumerate() {
            if off == step {
                if let State::Alive(p) = st {
                    if b_set.contains(&space, *p) {
                        out[slot] = 1.0;
                    }
                }
            }
        }
    };
    record(0, &state, &mut out);
    for i in 0..max_off {
        let prev = state;
        state = model.step(&rng, i as u64, params.dt, state);
        let exited = match state {
            State::Alive(p) => {
                !u_set.contains(&space, p)
                    || match (iv, prev) {
                        (Some(iv), State::Alive(pp)) => bridged_cross(
                            model,
                            &rng,
                            i as u64,
                            iv,
                            pp.as_line(),
                            p.as_line(),
                            params.dt,
                        ),
                        _ => false,
                    }
            }
            State::Cemetery => true,
        };
        if exited {
            // s < tau'_U fails from this grid time on.
            break;
        }
        record(i + 1, &state, &mut out);
    }
    out
}

/// Per-chunk sums, merged in fixed order for thread-count invariance.
#[derive(Clone)]
struct Accum {
    lhs: Vec<(f64, f64)>,
    zeroth: Vec<(f64, f64)>,
    diff: Vec<(f64, f64)>,
    /// term_sums[t_slot][n-1] = (sum, sum of squares) of the inner means.
    term_sums: Vec<Vec<(f64, f64)>>,
    /// sigma_counts[t_slot][n-1] = #paths with sigma_n <= t.
    sigma_counts: Vec<Vec<u64>>,
}

impl Accum {
    fn new(n_t: usize, n_terms: usize) -> Self {
        Accum {
            lhs: vec![(0.0, 0.0); n_t],
            zeroth: vec![(0.0, 0.0); n_t],
            diff: vec![(0.0, 0.0); n_t],
            term_sums: vec![vec![(0.0, 0.0); n_terms]; n_t],
            sigma_counts: vec![vec![0; n_terms]; n_t],
        }
    }

    fn add_into(a: &mut [(f64, f64)], b: &[(f64, f64)]) {
        for (x, y) in a.iter_mut().zip(b) {
            x.0 += y.0;
            x.1 += y.1;
        }
    }

    fn merge(mut self, other: Accum) -> Accum {
        Accum::add_into(&mut self.lhs, &other.lhs);
        Accum::add_into(&mut self.zeroth, &other.zeroth);
        Accum::add_into(&mut self.diff, &other.diff);
        for (a, b) in self.term_sums.iter_mut().zip(&other.term_sums) {
            Accum::add_into(a, b);
        }
        for (a, b) in self.sigma_counts.iter_mut().zip(&other.sigma_counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self
    }
}

fn estimate_of(sums: (f64, f64), n: u64, seed: u64) -> EstimateWithError {
    let mean = sums.0 / n as f64;
    let var = (sums.1 / n as f64 - mean * mean).max(0.0);
    EstimateWithError {
        estimate: mean,
        std_error: (var / n as f64).sqrt(),
        n,
        seed,
    }
}

/// Verify the multiple Dynkin-Hunt identity for u = 1_B at each time in
/// `ts`, sharing one outer path ensemble across all times.
pub fn verify_multiple_dh(
    model: &ProcessModel,
    u_set: &OpenSet,
    b_set: &OpenSet,
    x: Point,
    ts: &[f64],
    params: &SamplingParams,
    mdh: &MdhParams,
    base_seed: u64,
) -> Result<Vec<MdhLedger>> {
    let space = model.space();
    if !b_set.closure_contained_in(&space, u_set) {
        return Err(ConfigError::Geometry(
            "closure(B) must be contained in U".into(),
        ));
    }
    model.validate_dt(params.dt)?;
    model.validate_start(x)?;
    if ts.is_empty() {
        return Err(ConfigError::invalid("t", "need at least one time"));
    }
    let t_steps: Vec<usize> = ts
        .iter()
        .map(|&t| params.steps_for(t))
        .collect::<Result<_>>()?;
    // One extra sigma beyond n_max feeds the remainder bound.
    let n_terms = mdh.n_max + 1;
    let n = mdh.n_outer;

    let n_chunks = n.div_ceil(CHUNK);
    let acc = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut acc = Accum::new(ts.len(), n_terms);
            for path in lo..hi {
                let seed = SeedId::new(base_seed, path);
                let scan = scan_outer(model, u_set, b_set, x, &t_steps, params, seed, n_terms);
                // Inner sampling: one pass per sigma_n, shared across all
                // t >= sigma_n. Only the first n_max sigmas need inner
                // estimates; the last slot only counts occupation.
                let mut term_vals = vec![vec![0.0f64; ts.len()]; scan.sigmas.len()];
                for (ni, &(sig, start)) in scan.sigmas.iter().enumerate().take(mdh.n_max) {
                    let sig_step = (sig / params.dt).round() as usize;
                    let mut slots = Vec::new();
                    let mut offsets = Vec::new();
                    for (slot, (&t, &t_step)) in ts.iter().zip(&t_steps).enumerate() {
                        if sig <= t {
                            slots.push(slot);
                            offsets.push(t_step - sig_step);
                        }
                    }
                    if offsets.is_empty() {
                        continue;
                    }
                    let mut means = vec![0.0; offsets.len()];
                    for j in 0..mdh.m_inner {
                        let inner_seed = seed.substream(INNER_TAG + ni as u64, j as u64);
                        let inds = inner_part_indicators(
                            model, u_set, b_set, start, &offsets, params, inner_seed,
                        );
                        for (m, v) in means.iter_mut().zip(inds) {
                            *m += v;
                        }
                    }
                    for (&slot, &m) in slots.iter().zip(&means) {
                        term_vals[ni][slot] = m / mdh.m_inner as f64;
                    }
                }
                for (slot, &t) in ts.iter().enumerate() {
                    let lhs_ind = match scan.states_at[slot] {
                        State::Alive(p) if b_set.contains(&space, p) => 1.0,
                        _ => 0.0,
                    };
                    let zeroth_ind = if scan.tau1 > t { lhs_ind } else { 0.0 };
                    let mut rhs = zeroth_ind;
                    for (ni, &(sig, _)) in scan.sigmas.iter().enumerate() {
                        if sig <= t {
                            acc.sigma_counts[slot][ni] += 1;
                            if ni < mdh.n_max {
                                let v = term_vals[ni][slot];
                                rhs += v;
                                acc.term_sums[slot][ni].0 += v;
                                acc.term_sums[slot][ni].1 += v * v;
                            }
                        }
                    }
                    let d = lhs_ind - rhs;
                    acc.lhs[slot].0 += lhs_ind;
                    acc.lhs[slot].1 += lhs_ind * lhs_ind;
                    acc.zeroth[slot].0 += zeroth_ind;
                    acc.zeroth[slot].1 += zeroth_ind * zeroth_ind;
                    acc.diff[slot].0 += d;
                    acc.diff[slot].1 += d * d;
                }
            }
            acc
        })
        .reduce(|| Accum::new(ts.len(), n_terms), Accum::merge);

    let ledgers = ts
        .iter()
        .enumerate()
        .map(|(slot, &t)| {
            // Report terms while their occupation probability stays above
            // the truncation tolerance; the remainder bound starts at the
            // first cut index.
            let mut terms = Vec::new();
            let mut cut = mdh.n_max;
            for ni in 0..mdh.n_max {
                let p = acc.sigma_counts[slot][ni] as f64 / n as f64;
                if p < mdh.remainder_tol {
                    cut = ni;
                    break;
                }
                let e = estimate_of(acc.term_sums[slot][ni], n, base_seed);
                terms.push(MdhTerm {
                    n: ni + 1,
                    estimate: e.estimate,
                    std_error: e.std_error,
                    p_sigma_le_t: p,
                });
            }
            let remainder_bound = acc.sigma_counts[slot][cut] as f64 / n as f64;
            MdhLedger {
                t,
                lhs: estimate_of(acc.lhs[slot], n, base_seed),
                zeroth: estimate_of(acc.zeroth[slot], n, base_seed),
                terms,
                remainder_bound,
                diff: estimate_of(acc.diff[slot], n, base_seed),
            }
        })
        .collect();
    Ok(ledgers)
}

/// Verify the single Dynkin-Hunt identity for u = 1_A (any open A): the
/// second term restarts the FULL process at the exit point of U.
pub fn verify_single_dh(
    model: &ProcessModel,
    u_set: &OpenSet,
    a_set: &OpenSet,
    x: Point,
    t: f64,
    n_paths: u64,
    m_inner: u32,
    params: &SamplingParams,
    base_seed: u64,
) -> Result<SingleDhReport> {
    model.validate_dt(params.dt)?;
    model.validate_start(x)?;
    let t_step = params.steps_for(t)?;
    let space = model.space();

    let n_chunks = n_paths.div_ceil(CHUNK);
    let acc = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n_paths);
            let mut acc = Accum::new(1, 1);
            for path in lo..hi {
                let seed = SeedId::new(base_seed, path);
                // Reuse the outer scanner with B = empty-by-never-matching:
                // we only need tau_1, the state at tau_1 and the state at t.
                let rng = CounterRng::new(seed);
                let iv = bridge_interval(model, u_set, params);
                let mut state = State::Alive(x);
                let mut tau1 = if u_set.contains(&space, x) {
                    f64::INFINITY
                } else {
                    0.0
                };
                let mut state_at_tau = if tau1 == 0.0 { Some(state) } else { None };
                let mut state_at_t = if t_step == 0 { Some(state) } else { None };
                for i in 0..t_step {
                    let prev = state;
                    state = model.step(&rng, i as u64, params.dt, state);
                    if tau1.is_infinite() {
                        let inside = match state {
                            State::Alive(p) => u_set.contains(&space, p),
                            State::Cemetery => false,
                        };
                        let crossed = inside
                            && match (iv, prev, state) {
                                (Some(iv), State::Alive(pp), State::Alive(pq)) => bridged_cross(
                                    model,
                                    &rng,
                                    i as u64,
                                    iv,
                                    pp.as_line(),
                                    pq.as_line(),
                                    params.dt,
                                ),
                                _ => false,
                            };
                        if !inside || crossed {
                            tau1 = (i + 1) as f64 * params.dt;
                            state_at_tau = Some(state);
                        }
                    }
                    if i + 1 == t_step {
                        state_at_t = Some(state);
                    }
                }
                let state_at_t = state_at_t.unwrap();
                let lhs_ind = match state_at_t {
                    State::Alive(p) if a_set.contains(&space, p) => 1.0,
                    _ => 0.0,
                };
                let part_ind = if tau1 > t { lhs_ind } else { 0.0 };
                // Second term: full-process restart from X_{tau_U}.
                let mut second = 0.0;
                if tau1 <= t {
                    if let Some(State::Alive(p)) = state_at_tau {
                        let off = t_step - (tau1 / params.dt).round() as usize;
                        let mut hits = 0.0;
                        for j in 0..m_inner {
                            let inner_seed = seed.substream(INNER_TAG, j as u64);
                            let irng = CounterRng::new(inner_seed);
                            let mut st = State::Alive(p);
                            for k in 0..off {
                                st = model.step(&irng, k as u64, params.dt, st);
                            }
                            if let State::Alive(q) = st {
                                if a_set.contains(&space, q) {
                                    hits += 1.0;
                                }
                            }
                        }
                        second = hits / m_inner as f64;
                    }
                }
                let d = lhs_ind - part_ind - second;
                acc.lhs[0].0 += lhs_ind;
                acc.lhs[0].1 += lhs_ind * lhs_ind;
                acc.zeroth[0].0 += part_ind;
                acc.zeroth[0].1 += part_ind * part_ind;
                acc.term_sums[0][0].0 += second;
                acc.term_sums[0][0].1 += second * second;
                acc.diff[0].0 += d;
                acc.diff[0].1 += d * d;
            }
            acc
        })
        .reduce(|| Accum::new(1, 1), Accum::merge);

    Ok(SingleDhReport {
        t,
        lhs: estimate_of(acc.lhs[0], n_paths, base_seed),
        part: estimate_of(acc.zeroth[0], n_paths, base_seed),
        second_term: estimate_of(acc.term_sums[0][0], n_paths, base_seed),
        diff: estimate_of(acc.diff[0], n_paths, base_seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::space::Space;
    use crate::stopping;

    fn line() -> ProcessModel {
        ProcessModel::brownian_line()
    }

    fn fixture_sets() -> (OpenSet, OpenSet) {
        (
            OpenSet::Interval { a: -1.0, b: 1.0 },
            OpenSet::Interval { a: -0.5, b: 0.5 },
        )
    }

    #[test]
    fn streaming_scan_matches_stored_path_stopping_times() {
        let (u, b) = fixture_sets();
        let m = line();
        let params = SamplingParams::grid(1e-2);
        let t_steps = vec![400usize];
        for i in 0..300u64 {
            let seed = SeedId::new(99, i);
            let scan = scan_outer(&m, &u, &b, Point::Line(0.0), &t_steps, &params, seed, 33);
            let path = m.sample_path(Point::Line(0.0), 4.0, 1e-2, seed).unwrap();
            let seq = stopping::mdh_sequence(&path, &Space::Line, &u, &b, 4.0).unwrap();
            let expect_tau1 = seq.pairs[0].0;
            if expect_tau1.is_finite() {
                assert_eq!(scan.tau1, expect_tau1, "path {i}");
            } else {
                assert!(scan.tau1.is_infinite());
            }
            let expect_sigmas: Vec<f64> = seq
                .pairs
                .iter()
                .map(|&(_, s)| s)
                .filter(|s| s.is_finite())
                .collect();
            let got: Vec<f64> = scan.sigmas.iter().map(|&(s, _)| s).collect();
            assert_eq!(got, expect_sigmas, "path {i}");
        }
    }

    #[test]
    fn single_dh_whole_space_is_exact() {
        let a = OpenSet::Interval { a: -0.5, b: 0.5 };
        let rep = verify_single_dh(
            &line(),
            &OpenSet::WholeSpace,
            &a,
            Point::Line(0.0),
            0.5,
            2000,
            4,
            &SamplingParams::grid(1e-2),
            5,
        )
        .unwrap();
        assert_eq!(rep.second_term.estimate, 0.0);
        assert_eq!(rep.diff.estimate, 0.0);
        assert_eq!(rep.lhs.estimate, rep.part.estimate);
    }

    #[test]
    fn single_dh_identity_and_oracle() {
        let (u, a) = fixture_sets();
        let rep = verify_single_dh(
            &line(),
            &u,
            &a,
            Point::Line(0.0),
            0.5,
            30_000,
            8,
            &SamplingParams::grid(1e-3),
            6,
        )
        .unwrap();
        assert!(rep.holds_within(3.0), "{rep:?}");
        let exact = oracle::free_interval_prob(0.0, 0.5, 1.0, -0.5, 0.5);
        assert!(
            (rep.lhs.estimate - exact).abs() < 3.0 * rep.lhs.std_error,
            "{} vs {exact}",
            rep.lhs.estimate
        );
    }

    #[test]
    fn single_dh_from_outside_u() {
        let (u, a) = fixture_sets();
        let rep = verify_single_dh(
            &line(),
            &u,
            &a,
            Point::Line(2.0),
            0.5,
            20_000,
            8,
            &SamplingParams::grid(1e-3),
            7,
        )
        .unwrap();
        assert_eq!(rep.part.estimate, 0.0);
        assert!(rep.holds_within(3.0), "{rep:?}");
        let exact = oracle::free_interval_prob(2.0, 0.5, 1.0, -0.5, 0.5);
        assert!(
            (rep.lhs.estimate - exact).abs() < 3.0 * rep.lhs.std_error + 1e-4,
            "{} vs {exact}",
            rep.lhs.estimate
        );
    }

    #[test]
    fn multiple_dh_identity_holds_and_matches_gaussian_oracle() {
        let (u, b) = fixture_sets();
        let mdh = MdhParams {
            n_outer: 30_000,
            m_inner: 8,
            n_max: 32,
            remainder_tol: 1e-4,
        };
        let ledgers = verify_multiple_dh(
            &line(),
            &u,
            &b,
            Point::Line(0.0),
            &[0.2, 0.5],
            &SamplingParams::grid(1e-3),
            &mdh,
            8,
        )
        .unwrap();
        for ledger in &ledgers {
            assert!(ledger.holds_within(3.0), "{:?}", ledger.diff);
            let exact = oracle::free_interval_prob(0.0, ledger.t, 1.0, -0.5, 0.5);
            assert!(
                (ledger.lhs.estimate - exact).abs() < 3.0 * ledger.lhs.std_error,
                "t {}: {} vs {exact}",
                ledger.t,
                ledger.lhs.estimate
            );
            // Occupation probabilities are non-increasing in n, exactly.
            for w in ledger.terms.windows(2) {
                assert!(w[0].p_sigma_le_t >= w[1].p_sigma_le_t);
            }
        }
    }

    #[test]
    fn multiple_dh_u_huge_reduces_to_part_term() {
        let u = OpenSet::Interval { a: -50.0, b: 50.0 };
        let b = OpenSet::Interval { a: -0.5, b: 0.5 };
        let mdh = MdhParams {
            n_outer: 2000,
            m_inner: 4,
            n_max: 8,
            remainder_tol: 1e-4,
        };
        let ledgers = verify_multiple_dh(
            &line(),
            &u,
            &b,
            Point::Line(0.0),
            &[0.2],
            &SamplingParams::grid(1e-2),
            &mdh,
            9,
        )
        .unwrap();
        let ledger = &ledgers[0];
        assert!(ledger.terms.is_empty());
        assert_eq!(ledger.remainder_bound, 0.0);
        assert_eq!(ledger.lhs.estimate, ledger.zeroth.estimate);
        assert_eq!(ledger.diff.estimate, 0.0);
    }

    #[test]
    fn multiple_dh_rejects_bad_geometry() {
        let u = OpenSet::Interval { a: -0.4, b: 0.4 };
        let b = OpenSet::Interval { a: -0.5, b: 0.5 };
        let mdh = MdhParams::default();
        assert!(verify_multiple_dh(
            &line(),
            &u,
            &b,
            Point::Line(0.0),
            &[0.1],
            &SamplingParams::grid(1e-2),
            &mdh,
            1,
        )
        .is_err());
    }
}
