//! Diffusion models and path sampling on a uniform time grid.
//!
//! Four built-in models: Brownian motion on the line, Brownian motion
//! killed on exiting an interval, Brownian motion on a circle, and the
//! nearest-neighbor walk on the level-L gasket graph with step time 5^{-L}.
//! Killing sends the path to an absorbing cemetery state; functions are
//! zero there by convention, which estimators implement by counting
//! cemetery states as "not in A".

use std::sync::Arc;

use crate::error::{ConfigError, Result};
use crate::gasket::GasketGraph;
use crate::rng::{CounterRng, SeedId};
use crate::space::{Point, Space};

/// One grid state: a live point or the cemetery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum State {
    Alive(Point),
    Cemetery,
}

impl State {
    pub fn point(&self) -> Option<Point> {
        match self {
            State::Alive(p) => Some(*p),
            State::Cemetery => None,
        }
    }

    pub fn is_cemetery(&self) -> bool {
        matches!(self, State::Cemetery)
    }
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    BrownianLine,
    /// Brownian motion killed at the first grid time outside (a, b).
    BrownianKilled { a: f64, b: f64 },
    BrownianCircle { circumference: f64 },
    GasketWalk(Arc<GasketGraph>),
}

/// A simulatable diffusion: model kind plus the variance-per-unit-time
/// scale (ignored by the gasket walk, whose clock is fixed by its level).
#[derive(Debug, Clone)]
pub struct ProcessModel {
    pub kind: ModelKind,
    pub scale: f64,
}

impl ProcessModel {
    pub fn new(kind: ModelKind, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(ConfigError::invalid("model.scale", "must be positive"));
        }
        if let ModelKind::BrownianKilled { a, b } = kind {
            if !(a < b) {
                return Err(ConfigError::invalid("model.interval", "need a < b"));
            }
        }
        if let ModelKind::BrownianCircle { circumference } = kind {
            if !(circumference > 0.0) {
                return Err(ConfigError::invalid(
                    "model.circumference",
                    "must be positive",
                ));
            }
        }
        Ok(ProcessModel { kind, scale })
    }

    pub fn brownian_line() -> Self {
        ProcessModel::new(ModelKind::BrownianLine, 1.0).unwrap()
    }

    pub fn brownian_killed(a: f64, b: f64) -> Self {
        ProcessModel::new(ModelKind::BrownianKilled { a, b }, 1.0).unwrap()
    }

    pub fn space(&self) -> Space {
        match &self.kind {
            ModelKind::BrownianLine | ModelKind::BrownianKilled { .. } => Space::Line,
            ModelKind::BrownianCircle { circumference } => Space::Circle {
                circumference: *circumference,
            },
            ModelKind::GasketWalk(g) => Space::Gasket(g.clone()),
        }
    }

    /// Whether the model never hits the cemetery.
    pub fn is_conservative(&self) -> bool {
        !matches!(self.kind, ModelKind::BrownianKilled { .. })
    }

    /// Validate a grid step against the model (the gasket walk's clock is
    /// not adjustable).
    pub fn validate_dt(&self, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ConfigError::invalid("dt", "must be positive"));
        }
        if let ModelKind::GasketWalk(g) = &self.kind {
            if (dt - g.step_time()).abs() > 1e-15 * g.step_time() {
                return Err(ConfigError::invalid(
                    "dt",
                    format!("gasket walk at level {} requires dt = {}", g.level, g.step_time()),
                ));
            }
        }
        Ok(())
    }

    pub fn validate_start(&self, x0: Point) -> Result<()> {
        match (&self.kind, x0) {
            (ModelKind::BrownianLine, Point::Line(_)) => Ok(()),
            (ModelKind::BrownianKilled { a, b }, Point::Line(x)) => {
                if *a < x && x < *b {
                    Ok(())
                } else {
                    Err(ConfigError::invalid(
                        "x0",
                        format!("{x} is outside the killing interval ({a}, {b})"),
                    ))
                }
            }
            (ModelKind::BrownianCircle { .. }, Point::Circle(_)) => Ok(()),
            (ModelKind::GasketWalk(g), Point::Gasket(v)) => {
                if (v as usize) < g.vertex_count() {
                    Ok(())
                } else {
                    Err(ConfigError::invalid("x0", "gasket vertex out of range"))
                }
            }
            _ => Err(ConfigError::invalid("x0", "point kind does not match model")),
        }
    }

    /// Advance one grid step. `step` indexes the RNG stream; passing each
    /// grid index exactly once keeps draws independent.
    #[inline]
    pub fn step(&self, rng: &CounterRng, step: u64, dt: f64, state: State) -> State {
        let p = match state {
            State::Cemetery => return State::Cemetery,
            State::Alive(p) => p,
        };
        match (&self.kind, p) {
            (ModelKind::BrownianLine, Point::Line(x)) => {
                State::Alive(Point::Line(x + (self.scale * dt).sqrt() * rng.normal(step)))
            }
            (ModelKind::BrownianKilled { a, b }, Point::Line(x)) => {
                let y = x + (self.scale * dt).sqrt() * rng.normal(step);
                if *a < y && y < *b {
                    State::Alive(Point::Line(y))
                } else {
                    State::Cemetery
                }
            }
            (ModelKind::BrownianCircle { circumference }, Point::Circle(x)) => {
                let y = x + (self.scale * dt).sqrt() * rng.normal(step);
                State::Alive(Point::Circle(y.rem_euclid(*circumference)))
            }
            (ModelKind::GasketWalk(g), Point::Gasket(v)) => {
                let nbrs = g.neighbors(v);
                let k = rng.below(step, 0, nbrs.len() as u64) as usize;
                State::Alive(Point::Gasket(nbrs[k]))
            }
            _ => unreachable!("state kind does not match model"),
        }
    }

    pub fn sample_path(&self, x0: Point, horizon: f64, dt: f64, seed: SeedId) -> Result<Path> {
        self.validate_dt(dt)?;
        self.validate_start(x0)?;
        if !(horizon > 0.0 && dt <= horizon) {
            return Err(ConfigError::invalid("horizon", "need 0 < dt <= horizon"));
        }
        let n_steps = (horizon / dt).ceil() as usize;
        let rng = CounterRng::new(seed);
        let mut states = Vec::with_capacity(n_steps + 1);
        let mut state = State::Alive(x0);
        states.push(state);
        let mut zeta = f64::INFINITY;
        for i in 0..n_steps {
            state = self.step(&rng, i as u64, dt, state);
            if state.is_cemetery() && zeta.is_infinite() {
                zeta = (i + 1) as f64 * dt;
            }
            states.push(state);
        }
        Ok(Path {
            dt,
            states,
            zeta,
            seed,
        })
    }

    /// Fresh path started from the state of `path` at grid time `s`;
    /// realizes the shift-operator / strong-Markov restart.
    pub fn restart_path(&self, path: &Path, s: f64, horizon: f64, seed: SeedId) -> Result<Path> {
        let idx = path.grid_index(s)?;
        match path.states[idx] {
            State::Cemetery => Err(ConfigError::invalid(
                "restart",
                "cannot restart from the cemetery",
            )),
            State::Alive(p) => self.sample_path(p, horizon, path.dt, seed),
        }
    }

    /// Probability that a Brownian bridge over one grid step from x to y
    /// (both strictly inside (a, b)) crossed either endpoint in between.
    /// Used to correct the late-exit bias of grid-time stopping.
    pub fn bridge_crossing_prob(&self, a: f64, b: f64, x: f64, y: f64, dt: f64) -> f64 {
        debug_assert!(a < x && x < b && a < y && y < b);
        let v = self.scale * dt;
        let upper = (-2.0 * (b - x) * (b - y) / v).exp();
        let lower = (-2.0 * (x - a) * (y - a) / v).exp();
        (upper + lower).min(1.0)
    }
}

/// One sampled trajectory on a uniform grid.
#[derive(Debug, Clone)]
pub struct Path {
    pub dt: f64,
    pub states: Vec<State>,
    /// Life time: first grid time in the cemetery, or infinity.
    pub zeta: f64,
    pub seed: SeedId,
}

impl Path {
    pub fn horizon(&self) -> f64 {
        (self.states.len() - 1) as f64 * self.dt
    }

    pub fn state_at(&self, t: f64) -> Result<State> {
        Ok(self.states[self.grid_index(t)?])
    }

    /// Index of grid time t, rejecting off-grid times.
    pub fn grid_index(&self, t: f64) -> Result<usize> {
        let idx = t / self.dt;
        let rounded = idx.round();
        if (idx - rounded).abs() > 1e-6 || rounded < 0.0 {
            return Err(ConfigError::invalid("t", format!("{t} is not a grid time")));
        }
        let i = rounded as usize;
        if i >= self.states.len() {
            return Err(ConfigError::invalid(
                "t",
                format!("{t} exceeds the path horizon {}", self.horizon()),
            ));
        }
        Ok(i)
    }
}
