//! Streaming Monte Carlo estimators for transition functions, part-process
//! kernels, exit statistics, and dyadic heat-kernel density extraction.
//!
//! Every estimator is a pure function of (seed, path index), sampled in
//! fixed-size chunks that are reduced in index order, so results are
//! bit-identical for a given seed regardless of thread count. Paths are
//! never stored in the hot loops; states are advanced in place.

use rayon::prelude::*;

use crate::error::{ConfigError, Result};
use crate::process::{ModelKind, ProcessModel, State};
use crate::rng::{CounterRng, SeedId};
use crate::space::{OpenSet, Point};

/// A Monte Carlo point estimate with its standard error.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EstimateWithError {
    pub estimate: f64,
    pub std_error: f64,
    pub n: u64,
    pub seed: u64,
}

impl EstimateWithError {
    /// Combined SE of the difference of two independent estimates.
    pub fn combined_se(&self, other: &EstimateWithError) -> f64 {
        (self.std_error.powi(2) + other.std_error.powi(2)).sqrt()
    }
}

/// How paths are discretized and whether interval exits are corrected for
/// the within-step crossings a grid scan misses.
#[derive(Debug, Clone, Copy)]
pub struct SamplingParams {
    pub dt: f64,
    pub bridge_correction: bool,
}

impl SamplingParams {
    pub fn grid(dt: f64) -> Self {
        SamplingParams {
            dt,
            bridge_correction: false,
        }
    }

    pub fn bridged(dt: f64) -> Self {
        SamplingParams {
            dt,
            bridge_correction: true,
        }
    }

    pub fn steps_for(&self, t: f64) -> Result<usize> {
        let idx = t / self.dt;
        if (idx - idx.round()).abs() > 1e-6 {
            return Err(ConfigError::invalid(
                "t",
                format!("{t} is not a multiple of dt = {}", self.dt),
            ));
        }
        Ok(idx.round() as usize)
    }
}

const CHUNK: u64 = 4096;

/// Mean of a pure per-path functional over path indices 0..n, chunked for
/// parallelism and reduced in fixed order.
pub fn monte_carlo_mean<F>(n: u64, base_seed: u64, f: F) -> EstimateWithError
where
    F: Fn(SeedId) -> f64 + Sync,
{
    let n_chunks = n.div_ceil(CHUNK);
    let partials: Vec<(f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let (mut s1, mut s2) = (0.0, 0.0);
            for path in lo..hi {
                let v = f(SeedId::new(base_seed, path));
                s1 += v;
                s2 += v * v;
            }
            (s1, s2)
        })
        .collect();
    let (mut s1, mut s2) = (0.0, 0.0);
    for (a, b) in partials {
        s1 += a;
        s2 += b;
    }
    let mean = s1 / n as f64;
    let var = (s2 / n as f64 - mean * mean).max(0.0);
    EstimateWithError {
        estimate: mean,
        std_error: (var / n as f64).sqrt(),
        n,
        seed: base_seed,
    }
}

/// The open set rendered as a line interval, when that makes sense; this is
/// the case where the bridge-crossing correction applies.
fn as_line_interval(set: &OpenSet) -> Option<(f64, f64)> {
    match set {
        OpenSet::Interval { a, b } => Some((*a, *b)),
        OpenSet::Ball {
            center: Point::Line(c),
            radius,
        } => Some((c - radius, c + radius)),
        _ => None,
    }
}

/// Outcome of streaming one path to a fixed number of steps while watching
/// an optional open set: the final state and the exit time of the set
/// (infinity if never exited within the scanned steps).
pub struct StreamOutcome {
    pub final_state: State,
    pub exit_time: f64,
}

/// Advance one path for `n_steps` grid steps from x0, recording the first
/// exit of `watched` (if any). With bridge correction on and a watched
/// line interval, a within-step crossing is sampled from the Brownian
/// bridge probability and recorded at the end of the step. RNG slots: 0-1
/// drive the increment, slot 2 the crossing coin.
pub fn stream_path(
    model: &ProcessModel,
    x0: Point,
    watched: Option<&OpenSet>,
    n_steps: usize,
    params: &SamplingParams,
    seed: SeedId,
) -> StreamOutcome {
    let rng = CounterRng::new(seed);
    let space = model.space();
    let bridge = watched.and_then(|w| {
        if params.bridge_correction && matches!(model.kind, ModelKind::BrownianLine | ModelKind::BrownianKilled { .. }) {
            as_line_interval(w)
        } else {
            None
        }
    });
    let mut state = State::Alive(x0);
    let mut exit_time = f64::INFINITY;
    let inside = |s: &State| match s {
        State::Alive(p) => watched.map_or(true, |w| w.contains(&space, *p)),
        State::Cemetery => false,
    };
    if !inside(&state) {
        exit_time = 0.0;
    }
    for i in 0..n_steps {
        let prev = state;
        state = model.step(&rng, i as u64, params.dt, state);
        if exit_time.is_finite() {
            continue;
        }
        let t_here = (i + 1) as f64 * params.dt;
        if !inside(&state) {
            exit_time = t_here;
        } else if let Some((a, b)) = bridge {
            // Both endpoints are inside; account for crossings in between.
            let x = prev.point().unwrap().as_line();
            let y = state.point().unwrap().as_line();
            let p_cross = model.bridge_crossing_prob(a, b, x, y, params.dt);
            if p_cross > 0.0 && rng.uniform(i as u64, 2) <= p_cross {
                exit_time = t_here;
            }
        }
    }
    StreamOutcome {
        final_state: state,
        exit_time,
    }
}

/// P_x[X_t in A]; the cemetery never counts as in A.
pub fn transition_prob(
    model: &ProcessModel,
    x: Point,
    t: f64,
    a: &OpenSet,
    n_paths: u64,
    params: &SamplingParams,
    base_seed: u64,
) -> Result<EstimateWithError> {
    let n_steps = params.steps_for(t)?;
    model.validate_dt(params.dt)?;
    model.validate_start(x)?;
    let space = model.space();
    Ok(monte_carlo_mean(n_paths, base_seed, |seed| {
        let out = stream_path(model, x, None, n_steps, params, seed);
        match out.final_state {
            State::Alive(p) if a.contains(&space, p) => 1.0,
            _ => 0.0,
        }
    }))
}

/// P_x[X_t in A, t < tau_U]: the part-process transition probability.
pub fn part_transition_prob(
    model: &ProcessModel,
    x: Point,
    t: f64,
    u: &OpenSet,
    a: &OpenSet,
    n_paths: u64,
    params: &SamplingParams,
    base_seed: u64,
) -> Result<EstimateWithError> {
    let n_steps = params.steps_for(t)?;
    model.validate_dt(params.dt)?;
    model.validate_start(x)?;
    let space = model.space();
    Ok(monte_carlo_mean(n_paths, base_seed, |seed| {
        let out = stream_path(model, x, Some(u), n_steps, params, seed);
        let survived = out.exit_time > t;
        match out.final_state {
            State::Alive(p) if survived && a.contains(&space, p) => 1.0,
            _ => 0.0,
        }
    }))
}

/// P_x[tau_{B(x,r)} <= t]. Censoring is handled correctly by construction:
/// a path not seen exiting within t counts as "not yet exited".
pub fn exit_prob(
    model: &ProcessModel,
    x: Point,
    r: f64,
    t: f64,
    n_paths: u64,
    params: &SamplingParams,
    base_seed: u64,
) -> Result<EstimateWithError> {
    if r <= 0.0 {
        return Err(ConfigError::invalid("r", "must be positive"));
    }
    let n_steps = params.steps_for(t)?;
    model.validate_dt(params.dt)?;
    model.validate_start(x)?;
    let ball = OpenSet::Ball {
        center: x,
        radius: r,
    };
    Ok(monte_carlo_mean(n_paths, base_seed, |seed| {
        let out = stream_path(model, x, Some(&ball), n_steps, params, seed);
        if out.exit_time <= t {
            1.0
        } else {
            0.0
        }
    }))
}

/// Mean exit time of B(x, r), optionally capped. Uncapped runs report the
/// censored-path fraction; callers must treat heavy censoring as a failed
/// precondition, which `max_censored` enforces here.
pub struct MeanExitResult {
    pub estimate: EstimateWithError,
    pub censored_fraction: f64,
}

pub fn mean_exit_time(
    model: &ProcessModel,
    x: Point,
    r: f64,
    cap: Option<f64>,
    horizon: f64,
    n_paths: u64,
    params: &SamplingParams,
    base_seed: u64,
    max_censored: f64,
) -> Result<MeanExitResult> {
    if r <= 0.0 {
        return Err(ConfigError::invalid("r", "must be positive"));
    }
    if let Some(c) = cap {
        if c < 0.0 {
            return Err(ConfigError::invalid("cap", "must be nonnegative"));
        }
        if c == 0.0 {
            return Ok(MeanExitResult {
                estimate: EstimateWithError {
                    estimate: 0.0,
                    std_error: 0.0,
                    n: n_paths,
                    seed: base_seed,
                },
                censored_fraction: 0.0,
            });
        }
    }
    let scan_to = cap.map_or(horizon, |c| c.min(horizon));
    let n_steps = params.steps_for(scan_to)?;
    model.validate_dt(params.dt)?;
    model.validate_start(x)?;
    let ball = OpenSet::Ball {
        center: x,
        radius: r,
    };
    let censored = std::sync::atomic::AtomicU64::new(0);
    let est = monte_carlo_mean(n_paths, base_seed, |seed| {
        let out = stream_path(model, x, Some(&ball), n_steps, params, seed);
        match cap {
            Some(c) => out.exit_time.min(c),
            None => {
                if out.exit_time.is_finite() {
                    out.exit_time
                } else {
                    censored.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    scan_to
                }
            }
        }
    });
    let censored_fraction =
        censored.load(std::sync::atomic::Ordering::Relaxed) as f64 / n_paths as f64;
    if cap.is_none() && censored_fraction > max_censored {
        return Err(ConfigError::invalid(
            "horizon",
            format!(
                "censored fraction {censored_fraction:.2e} exceeds {max_censored:.2e}; raise the horizon"
            ),
        ));
    }
    Ok(MeanExitResult {
        estimate: est,
        censored_fraction,
    })
}

/// E_x[exp(-lambda tau_{B(x,r)})]. Censored paths contribute
/// exp(-lambda * horizon), an upper bound on their true contribution; the
/// censored fraction bounds the gap.
pub fn laplace_exit(
    model: &ProcessModel,
    x: Point,
    r: f64,
    lambda: f64,
    horizon: f64,
    n_paths: u64,
    params: &SamplingParams,
    base_seed: u64,
) -> Result<MeanExitResult> {
    if lambda <= 0.0 {
        return Err(ConfigError::invalid("lambda", "must be positive"));
    }
    if r <= 0.0 {
        return Err(ConfigError::invalid("r", "must be positive"));
    }
    let n_steps = params.steps_for(horizon)?;
    model.validate_dt(params.dt)?;
    model.validate_start(x)?;
    let ball = OpenSet::Ball {
        center: x,
        radius: r,
    };
    let censored = std::sync::atomic::AtomicU64::new(0);
    let est = monte_carlo_mean(n_paths, base_seed, |seed| {
        let out = stream_path(model, x, Some(&ball), n_steps, params, seed);
        if out.exit_time.is_finite() {
            (-lambda * out.exit_time).exp()
        } else {
            censored.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            (-lambda * horizon).exp()
        }
    });
    Ok(MeanExitResult {
        estimate: est,
        censored_fraction: censored.load(std::sync::atomic::Ordering::Relaxed) as f64
            / n_paths as f64,
    })
}

/// Dyadic bisection hierarchy over a window (w0, w1) on the line: level k
/// has 2^k equal cells. Nested by construction, so coarse-cell statistics
/// are exact sums of their children's.
#[derive(Debug, Clone)]
pub struct PartitionHierarchy {
    pub w0: f64,
    pub w1: f64,
    pub depth: u32,
}

impl PartitionHierarchy {
    pub fn new(w0: f64, w1: f64, depth: u32) -> Result<Self> {
        if !(w0 < w1) {
            return Err(ConfigError::invalid("window", "need w0 < w1"));
        }
        if depth > 16 {
            return Err(ConfigError::invalid("depth", "must be at most 16"));
        }
        Ok(PartitionHierarchy { w0, w1, depth })
    }

    pub fn n_cells(&self) -> usize {
        1usize << self.depth
    }

    pub fn cell_width(&self) -> f64 {
        (self.w1 - self.w0) / self.n_cells() as f64
    }

    /// Finest-level cell index of y, or None outside the window.
    pub fn cell_of(&self, y: f64) -> Option<usize> {
        if y < self.w0 || y >= self.w1 {
            return None;
        }
        let i = ((y - self.w0) / self.cell_width()) as usize;
        Some(i.min(self.n_cells() - 1))
    }

    pub fn cell_bounds(&self, i: usize) -> (f64, f64) {
        let w = self.cell_width();
        (self.w0 + i as f64 * w, self.w0 + (i + 1) as f64 * w)
    }
}

/// Constructive heat-kernel density estimate: per-cell values of the
/// part-process density at the finest partition level, sharing one path
/// ensemble so that coarse-level consistency is an exact identity.
#[derive(Debug, Clone)]
pub struct KernelEstimate {
    pub hierarchy: PartitionHierarchy,
    /// Paths landing in each finest cell (alive, inside U, inside window).
    pub counts: Vec<u64>,
    pub n_paths: u64,
    pub seed: u64,
    pub t: f64,
}

impl KernelEstimate {
    /// Density value on finest cell i: cell probability / cell measure.
    pub fn density(&self, i: usize) -> f64 {
        let p = self.counts[i] as f64 / self.n_paths as f64;
        p / self.hierarchy.cell_width()
    }

    /// Standard error of the density value on cell i.
    pub fn density_se(&self, i: usize) -> f64 {
        let p = self.counts[i] as f64 / self.n_paths as f64;
        (p * (1.0 - p) / self.n_paths as f64).sqrt() / self.hierarchy.cell_width()
    }

    /// Estimated probability of the whole window (with survival).
    pub fn total_prob(&self) -> f64 {
        self.counts.iter().sum::<u64>() as f64 / self.n_paths as f64
    }

    /// Cell counts aggregated to a coarser level (exact sums of children).
    pub fn counts_at_level(&self, level: u32) -> Vec<u64> {
        assert!(level <= self.hierarchy.depth);
        let group = 1usize << (self.hierarchy.depth - level);
        self.counts
            .chunks(group)
            .map(|c| c.iter().sum())
            .collect()
    }
}

/// Sample the part-process law P_x[X_t in dy, t < tau_U] into the dyadic
/// hierarchy over the window.
pub fn density_extract(
    model: &ProcessModel,
    x: Point,
    t: f64,
    u: &OpenSet,
    hierarchy: PartitionHierarchy,
    n_paths: u64,
    params: &SamplingParams,
    base_seed: u64,
) -> Result<KernelEstimate> {
    let n_steps = params.steps_for(t)?;
    model.validate_dt(params.dt)?;
    model.validate_start(x)?;
    let space = model.space();
    let n_cells = hierarchy.n_cells();
    let n_chunks = n_paths.div_ceil(CHUNK);
    let partials: Vec<Vec<u64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n_paths);
            let mut counts = vec![0u64; n_cells];
            for path in lo..hi {
                let out = stream_path(model, x, Some(u), n_steps, params, SeedId::new(base_seed, path));
                if out.exit_time <= t {
                    continue;
                }
                if let State::Alive(p) = out.final_state {
                    if u.contains(&space, p) {
                        if let Some(i) = hierarchy.cell_of(p.as_line()) {
                            counts[i] += 1;
                        }
                    }
                }
            }
            counts
        })
        .collect();
    let mut counts = vec![0u64; n_cells];
    for part in partials {
        for (acc, v) in counts.iter_mut().zip(part) {
            *acc += v;
        }
    }
    Ok(KernelEstimate {
        hierarchy,
        counts,
        n_paths,
        seed: base_seed,
        t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn line() -> ProcessModel {
        ProcessModel::brownian_line()
    }

    #[test]
    fn transition_prob_matches_gaussian_oracle() {
        let params = SamplingParams::grid(1e-2);
        let half = OpenSet::Interval {
            a: f64::NEG_INFINITY,
            b: 0.0,
        };
        let est = transition_prob(&line(), Point::Line(0.0), 1.0, &half, 40_000, &params, 101)
            .unwrap();
        assert!((est.estimate - 0.5).abs() < 3.0 * est.std_error);

        let band = OpenSet::Interval { a: -1.0, b: 1.0 };
        let est = transition_prob(&line(), Point::Line(0.0), 1.0, &band, 40_000, &params, 102)
            .unwrap();
        let exact = oracle::free_interval_prob(0.0, 1.0, 1.0, -1.0, 1.0);
        assert!(
            (est.estimate - exact).abs() < 3.0 * est.std_error,
            "{} vs {exact}",
            est.estimate
        );

        let whole = OpenSet::WholeSpace;
        let est = transition_prob(&line(), Point::Line(0.0), 0.5, &whole, 1000, &params, 103)
            .unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn part_prob_dominated_and_matches_dirichlet_oracle() {
        let params = SamplingParams::bridged(1e-3);
        let u = OpenSet::Interval { a: -1.0, b: 1.0 };
        let a = OpenSet::Interval { a: -0.1, b: 0.1 };
        let n = 40_000;
        let part =
            part_transition_prob(&line(), Point::Line(0.0), 0.1, &u, &a, n, &params, 7).unwrap();
        let full = transition_prob(&line(), Point::Line(0.0), 0.1, &a, n, &params, 7).unwrap();
        // Shared seeds make the dominance pathwise, hence deterministic.
        assert!(part.estimate <= full.estimate);
        let exact = oracle::dirichlet_interval_prob(0.0, -1.0, 1.0, 0.1, 1.0, -0.1, 0.1);
        assert!(
            (part.estimate - exact).abs() < 3.0 * part.std_error + 1e-3,
            "{} vs {exact}",
            part.estimate
        );
    }

    #[test]
    fn part_prob_trivial_cases() {
        let params = SamplingParams::grid(1e-2);
        let u = OpenSet::Interval { a: -1.0, b: 1.0 };
        let a = OpenSet::Interval { a: -0.5, b: 0.5 };
        // Start outside U: tau_U = 0, so the part probability vanishes.
        let est =
            part_transition_prob(&line(), Point::Line(2.0), 0.5, &u, &a, 2000, &params, 11)
                .unwrap();
        assert_eq!(est.estimate, 0.0);
        // U = whole space on a conservative model: equals transition_prob.
        let whole = OpenSet::WholeSpace;
        let p = part_transition_prob(&line(), Point::Line(0.0), 0.5, &whole, &a, 5000, &params, 12)
            .unwrap();
        let q = transition_prob(&line(), Point::Line(0.0), 0.5, &a, 5000, &params, 12).unwrap();
        assert_eq!(p.estimate, q.estimate);
    }

    #[test]
    fn exit_prob_matches_series_oracle() {
        let params = SamplingParams::bridged(1e-3);
        let est = exit_prob(&line(), Point::Line(0.0), 1.0, 1.0, 40_000, &params, 21).unwrap();
        let exact = oracle::exit_cdf(0.0, -1.0, 1.0, 1.0, 1.0);
        assert!(
            (est.estimate - exact).abs() < 3.0 * est.std_error + 2e-3,
            "{} vs {exact}",
            est.estimate
        );
        // Huge radius: no exits at all.
        let est = exit_prob(&line(), Point::Line(0.0), 100.0, 1.0, 5000, &params, 22).unwrap();
        assert_eq!(est.estimate, 0.0);
        // One tiny step from the center: negligible exit mass.
        let est = exit_prob(
            &line(),
            Point::Line(0.0),
            1.0,
            1e-4,
            5000,
            &SamplingParams::bridged(1e-4),
            23,
        )
        .unwrap();
        assert!(est.estimate <= 1e-3);
    }

    #[test]
    fn mean_exit_matches_ode_and_capped_oracles() {
        let params = SamplingParams::bridged(1e-3);
        let res = mean_exit_time(
            &line(),
            Point::Line(0.0),
            1.0,
            None,
            30.0,
            20_000,
            &params,
            31,
            1e-3,
        )
        .unwrap();
        assert!(
            (res.estimate.estimate - 1.0).abs() < 0.02,
            "mean exit {}",
            res.estimate.estimate
        );
        let capped = mean_exit_time(
            &line(),
            Point::Line(0.0),
            1.0,
            Some(1.0),
            30.0,
            20_000,
            &params,
            32,
            1e-3,
        )
        .unwrap();
        let exact = oracle::capped_mean_exit_time(0.0, -1.0, 1.0, 1.0, 1.0);
        assert!(
            (capped.estimate.estimate - exact).abs() < 0.02 * exact,
            "capped {} vs {exact}",
            capped.estimate.estimate
        );
        // cap = 0 degenerates to 0.
        let zero = mean_exit_time(
            &line(),
            Point::Line(0.0),
            1.0,
            Some(0.0),
            1.0,
            100,
            &params,
            33,
            1e-3,
        )
        .unwrap();
        assert_eq!(zero.estimate.estimate, 0.0);
    }

    #[test]
    fn laplace_exit_matches_cosh_formula() {
        let params = SamplingParams::bridged(1e-3);
        let res = laplace_exit(&line(), Point::Line(0.0), 1.0, 1.0, 20.0, 20_000, &params, 41)
            .unwrap();
        let exact = oracle::laplace_exit(0.0, -1.0, 1.0, 1.0, 1.0);
        assert!(
            (res.estimate.estimate - exact).abs() < 3.0 * res.estimate.std_error + 2e-3,
            "{} vs {exact}",
            res.estimate.estimate
        );
        assert!(laplace_exit(&line(), Point::Line(0.0), 1.0, 0.0, 1.0, 100, &params, 42).is_err());
    }

    #[test]
    fn density_extraction_is_symmetric_and_telescopes() {
        let params = SamplingParams::grid(1e-3);
        let u = OpenSet::Interval { a: -1.0, b: 1.0 };
        let h = PartitionHierarchy::new(-1.0, 1.0, 4).unwrap();
        let ke = density_extract(&line(), Point::Line(0.0), 0.1, &u, h, 50_000, &params, 51)
            .unwrap();
        // Level-1 split at 0: symmetry of the two halves.
        let lvl1 = ke.counts_at_level(1);
        let (l, r) = (lvl1[0] as f64, lvl1[1] as f64);
        let se = (l + r).sqrt();
        assert!((l - r).abs() < 3.0 * se, "halves {l} vs {r}");
        // Telescoping: every level sums to the same total.
        for level in 0..=4 {
            assert_eq!(
                ke.counts_at_level(level).iter().sum::<u64>(),
                ke.counts.iter().sum::<u64>()
            );
        }
        // Total probability equals the part-transition estimate on the
        // same samples.
        let window = OpenSet::Interval { a: -1.0, b: 1.0 };
        let part =
            part_transition_prob(&line(), Point::Line(0.0), 0.1, &u, &window, 50_000, &params, 51)
                .unwrap();
        assert_eq!(ke.total_prob(), part.estimate);
    }

    #[test]
    fn estimates_are_thread_count_invariant() {
        // Same seed, different rayon pool sizes: identical bits.
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let params = SamplingParams::bridged(1e-3);
                exit_prob(&line(), Point::Line(0.0), 1.0, 0.5, 20_000, &params, 61)
                    .unwrap()
                    .estimate
            })
        };
        assert_eq!(run(1).to_bits(), run(4).to_bits());
    }

    #[test]
    fn off_grid_time_is_rejected() {
        let params = SamplingParams::grid(1e-2);
        let a = OpenSet::WholeSpace;
        assert!(
            transition_prob(&line(), Point::Line(0.0), 0.505, &a, 100, &params, 71).is_err()
        );
    }
}
