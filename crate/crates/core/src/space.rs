//! Metric measure space abstraction for the built-in models: the real line,
//! a circle of given circumference, and the level-L gasket graph with the
//! uniform probability measure on its vertices.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{ConfigError, Result};
use crate::gasket::GasketGraph;

/// Model-tagged coordinate. Mixing points across models is a usage error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Point {
    Line(f64),
    /// Position along the circle, in [0, circumference).
    Circle(f64),
    Gasket(u32),
}

impl Point {
    pub fn as_line(&self) -> f64 {
        match self {
            Point::Line(x) => *x,
            other => panic!("expected line point, got {other:?}"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Space {
    Line,
    Circle { circumference: f64 },
    Gasket(Arc<GasketGraph>),
}

impl Space {
    /// Metric d(x, y). Panics on cross-model points; configuration
    /// validation guarantees this cannot happen for loaded configs.
    pub fn distance(&self, x: Point, y: Point) -> f64 {
        match (self, x, y) {
            (Space::Line, Point::Line(a), Point::Line(b)) => (a - b).abs(),
            (Space::Circle { circumference }, Point::Circle(a), Point::Circle(b)) => {
                // |a - b| first keeps the metric exactly symmetric in
                // floating point.
                let d = (a - b).abs().rem_euclid(*circumference);
                d.min(circumference - d)
            }
            (Space::Gasket(g), Point::Gasket(u), Point::Gasket(v)) => g.distance(u, v),
            _ => panic!("point does not belong to this space"),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Space::Line => f64::INFINITY,
            Space::Circle { circumference } => circumference / 2.0,
            Space::Gasket(_) => 1.0,
        }
    }

    /// mu(B(x, r)) for the model's reference measure: Lebesgue length on the
    /// line and circle, uniform probability on gasket vertices.
    pub fn ball_measure(&self, center: Point, r: f64) -> f64 {
        assert!(r > 0.0, "ball radius must be positive");
        match (self, center) {
            (Space::Line, Point::Line(_)) => 2.0 * r,
            (Space::Circle { circumference }, Point::Circle(_)) => (2.0 * r).min(*circumference),
            (Space::Gasket(g), Point::Gasket(c)) => {
                let n = g.vertex_count();
                let inside = (0..n as u32).filter(|&v| g.distance(c, v) < r).count();
                inside as f64 / n as f64
            }
            _ => panic!("point does not belong to this space"),
        }
    }

    /// Points of the model usable as sample centers (finite set for the
    /// gasket, a grid for the continuum models).
    pub fn sample_points(&self, n: usize) -> Vec<Point> {
        match self {
            Space::Line => (0..n)
                .map(|i| Point::Line(-5.0 + 10.0 * i as f64 / (n.max(2) - 1) as f64))
                .collect(),
            Space::Circle { circumference } => (0..n)
                .map(|i| Point::Circle(circumference * i as f64 / n as f64))
                .collect(),
            Space::Gasket(g) => {
                let total = g.vertex_count();
                let stride = (total / n.max(1)).max(1);
                (0..total as u32).step_by(stride).collect::<Vec<_>>()
                    .into_iter()
                    .map(Point::Gasket)
                    .collect()
            }
        }
    }
}

/// Open subsets with analytic membership tests.
#[derive(Debug, Clone)]
pub enum OpenSet {
    Ball { center: Point, radius: f64 },
    Interval { a: f64, b: f64 },
    VertexSet(BTreeSet<u32>),
    WholeSpace,
}

impl OpenSet {
    /// Strict-inequality ball membership, matching B(x,r) = {y : d(x,y) < r}.
    pub fn contains(&self, space: &Space, x: Point) -> bool {
        match self {
            OpenSet::Ball { center, radius } => space.distance(*center, x) < *radius,
            OpenSet::Interval { a, b } => {
                let v = x.as_line();
                *a < v && v < *b
            }
            OpenSet::VertexSet(set) => match x {
                Point::Gasket(v) => set.contains(&v),
                other => panic!("vertex set membership for non-gasket point {other:?}"),
            },
            OpenSet::WholeSpace => true,
        }
    }

    /// Distance from x to the complement of the set (infinite for the whole
    /// space).
    pub fn distance_to_complement(&self, space: &Space, x: Point) -> f64 {
        match self {
            OpenSet::Ball { center, radius } => (radius - space.distance(*center, x)).max(0.0),
            OpenSet::Interval { a, b } => {
                let v = x.as_line();
                if v <= *a || v >= *b {
                    0.0
                } else {
                    (v - a).min(b - v)
                }
            }
            OpenSet::VertexSet(set) => match (space, x) {
                (Space::Gasket(g), Point::Gasket(v)) => (0..g.vertex_count() as u32)
                    .filter(|w| !set.contains(w))
                    .map(|w| g.distance(v, w))
                    .fold(f64::INFINITY, f64::min),
                _ => panic!("vertex set distance for non-gasket space"),
            },
            OpenSet::WholeSpace => f64::INFINITY,
        }
    }

    /// Membership in the inner set U°_{eps R} = {x : dist(x, complement) > eps R}.
    pub fn inner_contains(&self, space: &Space, epsilon: f64, big_r: f64, x: Point) -> Result<bool> {
        if !(0.0 < epsilon && epsilon < 1.0) {
            return Err(ConfigError::invalid("epsilon", "must lie in (0, 1)"));
        }
        if big_r <= 0.0 {
            return Err(ConfigError::invalid("R", "must be positive"));
        }
        Ok(self.distance_to_complement(space, x) > epsilon * big_r)
    }

    /// Check closure(self) subset of `outer`, analytically for balls and
    /// intervals, by exhaustive vertex scan for gasket sets.
    pub fn closure_contained_in(&self, space: &Space, outer: &OpenSet) -> bool {
        match (self, outer) {
            (_, OpenSet::WholeSpace) => true,
            (OpenSet::Interval { a, b }, OpenSet::Interval { a: oa, b: ob }) => oa < a && b < ob,
            (OpenSet::Ball { center, radius }, OpenSet::Ball { center: oc, radius: or_ }) => {
                space.distance(*center, *oc) + radius < *or_
            }
            (OpenSet::Ball { center, radius }, OpenSet::Interval { a, b }) => {
                let c = center.as_line();
                *a < c - radius && c + radius < *b
            }
            (OpenSet::Interval { a, b }, OpenSet::Ball { center, radius }) => {
                let c = center.as_line();
                c - radius < *a && *b < c + radius
            }
            (OpenSet::VertexSet(set), outer) => match space {
                // Finite graph: the closure of a vertex set is itself, but we
                // require one hop of slack so boundary states of the inner
                // set stay strictly inside the outer one.
                Space::Gasket(g) => set.iter().all(|&v| {
                    outer.contains(space, Point::Gasket(v))
                        && g.neighbors(v)
                            .iter()
                            .all(|&w| outer.contains(space, Point::Gasket(w)))
                }),
                _ => false,
            },
            (OpenSet::WholeSpace, _) => false,
            _ => false,
        }
    }
}

/// Result of the empirical volume-doubling scan.
#[derive(Debug, Clone)]
pub struct DoublingReport {
    /// sup over samples of mu(B(x,2r)) / mu(B(x,r)).
    pub sup_ratio: f64,
    /// (center index, radius) pairs where a ball had zero or non-finite mass.
    pub violations: Vec<(usize, f64)>,
}

/// Estimate the volume-doubling constant over sample centers and radii.
pub fn volume_doubling_report(space: &Space, centers: &[Point], radii: &[f64]) -> DoublingReport {
    let mut sup_ratio: f64 = 0.0;
    let mut violations = Vec::new();
    for (i, &c) in centers.iter().enumerate() {
        for &r in radii {
            let small = space.ball_measure(c, r);
            let big = space.ball_measure(c, 2.0 * r);
            if !(small > 0.0 && big.is_finite()) {
                violations.push((i, r));
                continue;
            }
            sup_ratio = sup_ratio.max(big / small);
        }
    }
    DoublingReport {
        sup_ratio,
        violations,
    }
}
