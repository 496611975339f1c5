//! Stopping times evaluated on sampled paths: entrance and exit times,
//! their "after sigma" variants, and the alternating exit/re-entry
//! sequence used by the multiple Dynkin-Hunt decomposition.
//!
//! All times are grid times; the continuum definitions are approximated
//! from above by the first grid point satisfying the condition. Events
//! never observed within the horizon report infinity (the inf of an empty
//! set), which estimators must treat as "> horizon", never as a value.

use crate::error::{ConfigError, Result};
use crate::process::{Path, State};
use crate::space::{OpenSet, Space};

/// First grid time >= sigma at which the state lies in B. The cemetery is
/// not in B (functions vanish there), so killed paths can only enter B
/// while alive. Returns infinity if sigma is infinite or B is never hit.
pub fn entrance_time_after(path: &Path, space: &Space, b: &OpenSet, sigma: f64) -> f64 {
    if sigma.is_infinite() {
        return f64::INFINITY;
    }
    let start = (sigma / path.dt).round() as usize;
    for (i, state) in path.states.iter().enumerate().skip(start) {
        if let State::Alive(p) = state {
            if b.contains(space, *p) {
                return i as f64 * path.dt;
            }
        }
    }
    f64::INFINITY
}

/// First grid time at which the state lies in B.
pub fn entrance_time(path: &Path, space: &Space, b: &OpenSet) -> f64 {
    entrance_time_after(path, space, b, 0.0)
}

/// First grid time >= sigma at which the state leaves B or is dead: the
/// exit time of B after sigma. The cemetery belongs to the complement, so
/// for the killed model with B equal to the killing interval this is
/// exactly the life time.
pub fn exit_time_after(path: &Path, space: &Space, b: &OpenSet, sigma: f64) -> f64 {
    if sigma.is_infinite() {
        return f64::INFINITY;
    }
    let start = (sigma / path.dt).round() as usize;
    for (i, state) in path.states.iter().enumerate().skip(start) {
        let inside = match state {
            State::Alive(p) => b.contains(space, *p),
            State::Cemetery => false,
        };
        if !inside {
            return i as f64 * path.dt;
        }
    }
    f64::INFINITY
}

/// First grid time outside B (or dead); infinity if censored by the horizon.
pub fn exit_time(path: &Path, space: &Space, b: &OpenSet) -> f64 {
    exit_time_after(path, space, b, 0.0)
}

/// The alternating sequence tau_1 = tau_U, sigma_n = entrance of B after
/// tau_n, tau_{n+1} = exit of U after sigma_n, truncated at the first time
/// that is infinite or past the horizon.
#[derive(Debug, Clone)]
pub struct MdhSequence {
    /// (tau_n, sigma_n) pairs, 1-indexed conceptually; the last pair may
    /// carry infinite entries where the sequence left the horizon.
    pub pairs: Vec<(f64, f64)>,
}

impl MdhSequence {
    /// Pairs with sigma_n <= t, i.e. the terms contributing at time t.
    pub fn active_at(&self, t: f64) -> impl Iterator<Item = &(f64, f64)> {
        self.pairs.iter().filter(move |(_, s)| *s <= t)
    }
}

/// Evaluate the alternating sequence on one path. Requires closure(B)
/// inside U, which makes each sigma_n a genuine re-entry after the path
/// has left U.
pub fn mdh_sequence(
    path: &Path,
    space: &Space,
    u: &OpenSet,
    b: &OpenSet,
    horizon: f64,
) -> Result<MdhSequence> {
    if !b.closure_contained_in(space, u) {
        return Err(ConfigError::Geometry(
            "closure(B) must be contained in U".into(),
        ));
    }
    let mut pairs = Vec::new();
    let mut tau = exit_time(path, space, u);
    loop {
        if tau.is_infinite() || tau > horizon {
            pairs.push((tau, f64::INFINITY));
            break;
        }
        let sigma = entrance_time_after(path, space, b, tau);
        pairs.push((tau, sigma));
        if sigma.is_infinite() || sigma > horizon {
            break;
        }
        tau = exit_time_after(path, space, u, sigma);
    }
    Ok(MdhSequence { pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{Path, ProcessModel, State};
    use crate::rng::SeedId;
    use crate::space::{OpenSet, Point, Space};

    /// Build a deterministic line path from explicit positions.
    fn line_path(xs: &[Option<f64>], dt: f64) -> Path {
        let states: Vec<State> = xs
            .iter()
            .map(|x| match x {
                Some(v) => State::Alive(Point::Line(*v)),
                None => State::Cemetery,
            })
            .collect();
        let zeta = states
            .iter()
            .position(|s| s.is_cemetery())
            .map_or(f64::INFINITY, |i| i as f64 * dt);
        Path {
            dt,
            states,
            zeta,
            seed: SeedId::new(0, 0),
        }
    }

    #[test]
    fn exit_and_entrance_on_a_hand_traced_path() {
        // Grid dt = 1; positions: start in B, leave U at t=2, re-enter B at
        // t=4, leave U again at t=6, never return.
        let p = line_path(
            &[
                Some(0.0),
                Some(0.8),
                Some(1.5),
                Some(0.9),
                Some(0.2),
                Some(0.7),
                Some(-1.2),
                Some(-1.5),
            ],
            1.0,
        );
        let u = OpenSet::Interval { a: -1.0, b: 1.0 };
        let b = OpenSet::Interval { a: -0.5, b: 0.5 };
        assert_eq!(exit_time(&p, &Space::Line, &u), 2.0);
        assert_eq!(entrance_time_after(&p, &Space::Line, &b, 2.0), 4.0);
        assert_eq!(exit_time_after(&p, &Space::Line, &u, 4.0), 6.0);
        // Visiting B only before sigma leaves the after-entrance empty.
        assert_eq!(entrance_time_after(&p, &Space::Line, &b, 6.0), f64::INFINITY);
        assert_eq!(
            entrance_time_after(&p, &Space::Line, &b, f64::INFINITY),
            f64::INFINITY
        );

        let seq = mdh_sequence(&p, &Space::Line, &u, &b, 7.0).unwrap();
        assert_eq!(seq.pairs, vec![(2.0, 4.0), (6.0, f64::INFINITY)]);
        assert_eq!(seq.active_at(5.0).count(), 1);
    }

    #[test]
    fn path_inside_u_reports_censored_exit() {
        let p = line_path(&[Some(0.0), Some(0.1), Some(-0.1)], 0.5);
        let u = OpenSet::Interval { a: -1.0, b: 1.0 };
        assert_eq!(exit_time(&p, &Space::Line, &u), f64::INFINITY);
        let b = OpenSet::Interval { a: -0.5, b: 0.5 };
        let seq = mdh_sequence(&p, &Space::Line, &u, &b, 1.0).unwrap();
        assert_eq!(seq.pairs, vec![(f64::INFINITY, f64::INFINITY)]);
    }

    #[test]
    fn entrance_after_zero_is_plain_entrance() {
        let m = ProcessModel::brownian_line();
        let b = OpenSet::Interval { a: 0.5, b: 1.5 };
        for i in 0..200u64 {
            let p = m
                .sample_path(Point::Line(0.0), 1.0, 1e-2, SeedId::new(5, i))
                .unwrap();
            assert_eq!(
                entrance_time(&p, &Space::Line, &b),
                entrance_time_after(&p, &Space::Line, &b, 0.0)
            );
        }
    }

    #[test]
    fn killed_model_exit_of_killing_interval_equals_life_time() {
        let m = ProcessModel::brownian_killed(-0.4, 0.4);
        let u = OpenSet::Interval { a: -0.4, b: 0.4 };
        for i in 0..300u64 {
            let p = m
                .sample_path(Point::Line(0.0), 2.0, 1e-2, SeedId::new(9, i))
                .unwrap();
            assert_eq!(exit_time(&p, &Space::Line, &u), p.zeta);
        }
    }

    #[test]
    fn exit_time_is_monotone_in_the_radius() {
        let m = ProcessModel::brownian_line();
        for i in 0..300u64 {
            let p = m
                .sample_path(Point::Line(0.0), 1.0, 1e-2, SeedId::new(13, i))
                .unwrap();
            let mut prev = 0.0;
            for r in [0.25, 0.5, 1.0, 2.0] {
                let ball = OpenSet::Ball {
                    center: Point::Line(0.0),
                    radius: r,
                };
                let t = exit_time(&p, &Space::Line, &ball);
                assert!(t >= prev);
                prev = t;
            }
        }
    }

    #[test]
    fn interleaving_holds_on_every_sampled_path() {
        let m = ProcessModel::brownian_line();
        let u = OpenSet::Interval { a: -1.0, b: 1.0 };
        let b = OpenSet::Interval { a: -0.5, b: 0.5 };
        let mut multi = 0;
        for i in 0..500u64 {
            let p = m
                .sample_path(Point::Line(0.0), 4.0, 1e-2, SeedId::new(17, i))
                .unwrap();
            let seq = mdh_sequence(&p, &Space::Line, &u, &b, 4.0).unwrap();
            let mut prev_sigma = 0.0;
            for &(tau, sigma) in &seq.pairs {
                assert!(prev_sigma <= tau && tau <= sigma);
                prev_sigma = sigma;
            }
            if seq.pairs.len() > 1 {
                multi += 1;
            }
        }
        // A 4-unit horizon gives plenty of exit/re-entry cycles.
        assert!(multi > 100, "only {multi} paths iterated");
    }

    #[test]
    fn geometry_violation_is_rejected() {
        let p = line_path(&[Some(0.0)], 1.0);
        let u = OpenSet::Interval { a: -0.4, b: 0.4 };
        let b = OpenSet::Interval { a: -0.5, b: 0.5 };
        assert!(mdh_sequence(&p, &Space::Line, &u, &b, 1.0).is_err());
    }
}
