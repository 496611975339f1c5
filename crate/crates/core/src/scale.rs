//! Space-time scaling functions Psi and the transform
//! Phi(R, t) = sup_{r > 0} { R/r - t/Psi(r) },
//! together with verification of the two-sided power doubling bounds
//! c^{-1}(R/r)^{b1} <= Psi(R)/Psi(r) <= c(R/r)^{b2} and the sandwich
//! estimates that Phi inherits from them.

use crate::error::{ConfigError, Result};

/// The analytic form of Psi.
#[derive(Debug, Clone)]
pub enum ScaleKind {
    /// Psi(r) = r^beta.
    Power { beta: f64 },
    /// Continuous piecewise power: exponent `exponents[i]` on the i-th
    /// segment, with segment boundaries at `breakpoints` (sorted, positive)
    /// and Psi(breakpoints[0]) = breakpoints[0]^exponents[0]. There is one
    /// more exponent than breakpoint; the last exponent rules (last
    /// breakpoint, infinity).
    PiecewisePower {
        breakpoints: Vec<f64>,
        exponents: Vec<f64>,
    },
    /// Monotone table of (r, Psi(r)) samples, interpolated by a monotone
    /// cubic in log-log coordinates and extrapolated as a power law with
    /// exponent beta1 below the table and beta2 above it.
    Tabulated { r: Vec<f64>, values: Vec<f64> },
}

/// Psi together with its declared doubling data (c_psi, beta1, beta2).
#[derive(Debug, Clone)]
pub struct ScaleFunction {
    kind: ScaleKind,
    pub c_psi: f64,
    pub beta1: f64,
    pub beta2: f64,
    interp: Option<Pchip>,
}

impl ScaleFunction {
    pub fn new(kind: ScaleKind, c_psi: f64, beta1: f64, beta2: f64) -> Result<Self> {
        if !(c_psi >= 1.0) {
            return Err(ConfigError::invalid("scale.c_psi", "must be >= 1"));
        }
        if !(1.0 < beta1 && beta1 <= beta2) {
            return Err(ConfigError::invalid(
                "scale.beta",
                "need 1 < beta1 <= beta2",
            ));
        }
        let interp = match &kind {
            ScaleKind::Power { beta } => {
                if !(*beta > 1.0) {
                    return Err(ConfigError::invalid("scale.power.beta", "must exceed 1"));
                }
                None
            }
            ScaleKind::PiecewisePower {
                breakpoints,
                exponents,
            } => {
                if exponents.len() != breakpoints.len() + 1 {
                    return Err(ConfigError::invalid(
                        "scale.piecewise",
                        "need one more exponent than breakpoints",
                    ));
                }
                if breakpoints.windows(2).any(|w| w[0] >= w[1])
                    || breakpoints.first().map_or(false, |&b| b <= 0.0)
                {
                    return Err(ConfigError::invalid(
                        "scale.piecewise.breakpoints",
                        "must be positive and strictly increasing",
                    ));
                }
                if exponents.iter().any(|&e| e <= 1.0) {
                    return Err(ConfigError::invalid(
                        "scale.piecewise.exponents",
                        "every exponent must exceed 1",
                    ));
                }
                None
            }
            ScaleKind::Tabulated { r, values } => {
                if r.len() < 2 || r.len() != values.len() {
                    return Err(ConfigError::invalid(
                        "scale.table",
                        "need at least two (r, value) samples of equal length",
                    ));
                }
                let strictly_increasing = |v: &[f64]| {
                    v[0] > 0.0 && v.windows(2).all(|w| w[0] < w[1])
                };
                if !strictly_increasing(r) || !strictly_increasing(values) {
                    return Err(ConfigError::invalid(
                        "scale.table",
                        "samples must be positive and strictly increasing",
                    ));
                }
                let lx: Vec<f64> = r.iter().map(|v| v.ln()).collect();
                let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
                Some(Pchip::new(lx, ly))
            }
        };
        Ok(ScaleFunction {
            kind,
            c_psi,
            beta1,
            beta2,
            interp,
        })
    }

    /// Pure power law with the tight constants (c_psi = 1, beta1 = beta2).
    pub fn power(beta: f64) -> Result<Self> {
        ScaleFunction::new(ScaleKind::Power { beta }, 1.0, beta, beta)
    }

    /// Psi(r). Negative radii are a usage error.
    pub fn psi(&self, r: f64) -> f64 {
        assert!(r >= 0.0, "psi expects r >= 0, got {r}");
        if r == 0.0 {
            return 0.0;
        }
        match &self.kind {
            ScaleKind::Power { beta } => r.powf(*beta),
            ScaleKind::PiecewisePower {
                breakpoints,
                exponents,
            } => {
                // Anchor at the first breakpoint and walk segments so the
                // function stays continuous.
                let b0 = breakpoints[0];
                if r <= b0 {
                    return b0.powf(exponents[0]) * (r / b0).powf(exponents[0]);
                }
                let mut anchor_r = b0;
                let mut anchor_v = b0.powf(exponents[0]);
                for (i, &b) in breakpoints.iter().enumerate().skip(1) {
                    if r <= b {
                        return anchor_v * (r / anchor_r).powf(exponents[i]);
                    }
                    anchor_v *= (b / anchor_r).powf(exponents[i]);
                    anchor_r = b;
                }
                anchor_v * (r / anchor_r).powf(*exponents.last().unwrap())
            }
            ScaleKind::Tabulated { r: xs, values } => {
                let p = self.interp.as_ref().unwrap();
                if r < xs[0] {
                    values[0] * (r / xs[0]).powf(self.beta1)
                } else if r > *xs.last().unwrap() {
                    values.last().unwrap() * (r / xs.last().unwrap()).powf(self.beta2)
                } else {
                    p.eval(r.ln()).exp()
                }
            }
        }
    }

    /// Psi^{-1}(t), exact for the closed-form kinds and by bisection on the
    /// monotone interpolant for tables.
    pub fn psi_inv(&self, t: f64) -> f64 {
        assert!(t >= 0.0, "psi_inv expects t >= 0, got {t}");
        if t == 0.0 {
            return 0.0;
        }
        match &self.kind {
            ScaleKind::Power { beta } => t.powf(1.0 / beta),
            ScaleKind::PiecewisePower { .. } => self.invert_by_bisection(t),
            ScaleKind::Tabulated { r: xs, values } => {
                if t < values[0] {
                    xs[0] * (t / values[0]).powf(1.0 / self.beta1)
                } else if t > *values.last().unwrap() {
                    xs.last().unwrap() * (t / values.last().unwrap()).powf(1.0 / self.beta2)
                } else {
                    self.invert_by_bisection(t)
                }
            }
        }
    }

    fn invert_by_bisection(&self, t: f64) -> f64 {
        // Bracket in log space, then bisect; Psi is strictly increasing.
        let mut lo = 1.0f64;
        let mut hi = 1.0f64;
        while self.psi(lo) > t {
            lo *= 0.5;
        }
        while self.psi(hi) < t {
            hi *= 2.0;
        }
        let (mut a, mut b) = (lo.ln(), hi.ln());
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.psi(m.exp()) < t {
                a = m;
            } else {
                b = m;
            }
        }
        (0.5 * (a + b)).exp()
    }

    /// Phi(R, t) = sup_{r > 0} { R/r - t/Psi(r) }, by multi-start search
    /// over log r. The objective tends to 0 from below at both ends of the
    /// relevant range, so the supremum is nonnegative; values below 1e-15
    /// are clamped to 0 since exp(-Phi) cannot resolve them anyway.
    pub fn phi(&self, big_r: f64, t: f64) -> f64 {
        assert!(big_r >= 0.0, "phi expects R >= 0, got {big_r}");
        assert!(t > 0.0, "phi expects t > 0, got {t}");
        if big_r == 0.0 {
            return 0.0;
        }
        let objective = |s: f64| {
            let r = s.exp();
            big_r / r - t / self.psi(r)
        };

        // Bracket the maximizer in log r. The stationary point solves
        // R/r ~ t/Psi(r); for a power law it sits at (beta t / R)^{1/(beta-1)},
        // which runs below Psi^{-1}(t) when R >> Psi^{-1}(t) and above it
        // when R << Psi^{-1}(t). The power-law factors with exponent
        // 1/(beta1 - 1) stretch the bracket to cover both regimes.
        let psi_inv_t = self.psi_inv(t);
        let e = 1.0 / (self.beta1 - 1.0);
        let shrink = (psi_inv_t / big_r.max(psi_inv_t)).powf(e);
        let grow = (psi_inv_t / big_r.min(psi_inv_t)).powf(e);
        let lo = (psi_inv_t * shrink / 1e3).ln();
        let hi = (1e3 * big_r.max(psi_inv_t) * grow).ln();
        const N: usize = 256;
        let step = (hi - lo) / (N - 1) as f64;
        let mut best: Vec<(f64, usize)> = (0..N)
            .map(|i| (objective(lo + i as f64 * step), i))
            .collect();
        best.sort_by(|a, b| b.0.total_cmp(&a.0));

        // The objective need not be unimodal for general Psi; refine around
        // the three best grid points by golden-section search.
        let mut sup = 0.0f64;
        for &(_, i) in best.iter().take(3) {
            let a = lo + (i.saturating_sub(1)) as f64 * step;
            let b = lo + ((i + 1).min(N - 1)) as f64 * step;
            sup = sup.max(golden_max(objective, a, b));
        }
        if sup < 1e-15 {
            0.0
        } else {
            sup
        }
    }
}

/// Golden-section maximization on [a, b].
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..90 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}

/// Phi for Psi(r) = r^beta:
/// Phi(R, t) = beta^{-beta/(beta-1)} (beta - 1) (R^beta / t)^{1/(beta-1)}.
pub fn phi_power_closed_form(beta: f64, big_r: f64, t: f64) -> Result<f64> {
    if !(beta > 1.0) {
        return Err(ConfigError::invalid("beta", "must exceed 1"));
    }
    if big_r < 0.0 || t <= 0.0 {
        return Err(ConfigError::invalid("(R, t)", "need R >= 0 and t > 0"));
    }
    if big_r == 0.0 {
        return Ok(0.0);
    }
    let e = 1.0 / (beta - 1.0);
    Ok(beta.powf(-beta * e) * (beta - 1.0) * (big_r.powf(beta) / t).powf(e))
}

/// Outcome of checking the declared (c_psi, beta1, beta2) against
/// Psi(R)/Psi(r) on a grid of pairs.
#[derive(Debug, Clone)]
pub struct DoublingReport {
    /// min over the grid of (Psi(R)/Psi(r)) / (R/r)^{beta1}; must be >= 1/c_psi.
    pub min_lower_ratio: f64,
    /// max over the grid of (Psi(R)/Psi(r)) / (R/r)^{beta2}; must be <= c_psi.
    pub max_upper_ratio: f64,
    pub pass: bool,
}

pub fn psi_doubling_verify(sf: &ScaleFunction, pairs: &[(f64, f64)]) -> DoublingReport {
    let mut min_lower = f64::INFINITY;
    let mut max_upper = 0.0f64;
    for &(r, big_r) in pairs {
        assert!(0.0 < r && r <= big_r, "need 0 < r <= R, got ({r}, {big_r})");
        let ratio = sf.psi(big_r) / sf.psi(r);
        let q = big_r / r;
        min_lower = min_lower.min(ratio / q.powf(sf.beta1));
        max_upper = max_upper.max(ratio / q.powf(sf.beta2));
    }
    // Tiny relative slack absorbs round-off at the equality cases.
    let tol = 1.0 + 1e-9;
    DoublingReport {
        min_lower_ratio: min_lower,
        max_upper_ratio: max_upper,
        pass: min_lower * sf.c_psi * tol >= 1.0 && max_upper <= sf.c_psi * tol,
    }
}

/// Outcome of checking the Phi sandwich and homogeneity inequalities on a
/// grid. Slacks are (bound - value) normalized by the bound's scale; a
/// negative worst slack beyond round-off is a violation.
#[derive(Debug, Clone)]
pub struct SandwichReport {
    pub worst_lower_slack: f64,
    pub worst_upper_slack: f64,
    pub worst_homogeneity_slack: f64,
    pub violations: usize,
    pub pass: bool,
}

/// Verify, at each grid point (R, t):
///   (c 2^{b1})^{-1/(b1-1)} min_k (Psi(R)/t)^{1/(b_k-1)}  <=  Phi(R, t)
///   Phi(R, t)  <=  c^{1/(b1-1)} max_k (Psi(R)/t)^{1/(b_k-1)}
/// and the homogeneity a Phi(R, t) <= Phi(aR, t) for a in {1, 2, 5, 10}.
pub fn phi_sandwich_check(sf: &ScaleFunction, rs: &[f64], ts: &[f64]) -> SandwichReport {
    const REL_TOL: f64 = 1e-6;
    let e1 = 1.0 / (sf.beta1 - 1.0);
    let e2 = 1.0 / (sf.beta2 - 1.0);
    let lower_c = (sf.c_psi * 2.0f64.powf(sf.beta1)).powf(-e1);
    let upper_c = sf.c_psi.powf(e1);
    let mut worst_lower = f64::INFINITY;
    let mut worst_upper = f64::INFINITY;
    let mut worst_homog = f64::INFINITY;
    let mut violations = 0usize;
    for &big_r in rs {
        for &t in ts {
            let phi = sf.phi(big_r, t);
            let q = sf.psi(big_r) / t;
            let lower = lower_c * q.powf(e1).min(q.powf(e2));
            let upper = upper_c * q.powf(e1).max(q.powf(e2));
            let low_slack = (phi - lower) / upper.max(1e-300);
            let up_slack = (upper - phi) / upper.max(1e-300);
            worst_lower = worst_lower.min(low_slack);
            worst_upper = worst_upper.min(up_slack);
            if low_slack < -REL_TOL || up_slack < -REL_TOL {
                violations += 1;
            }
            for a in [1.0, 2.0, 5.0, 10.0] {
                let scaled = sf.phi(a * big_r, t);
                let slack = (scaled - a * phi) / scaled.max(1e-300);
                worst_homog = worst_homog.min(slack);
                if slack < -REL_TOL {
                    violations += 1;
                }
            }
        }
    }
    SandwichReport {
        worst_lower_slack: worst_lower,
        worst_upper_slack: worst_upper,
        worst_homogeneity_slack: worst_homog,
        violations,
        pass: violations == 0,
    }
}

/// Monotone cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Debug, Clone)]
struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Pchip {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let d: Vec<f64> = (0..n - 1)
            .map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i]))
            .collect();
        let mut m = vec![0.0; n];
        m[0] = d[0];
        m[n - 1] = d[n - 2];
        for i in 1..n - 1 {
            if d[i - 1] * d[i] > 0.0 {
                // Harmonic mean keeps the interpolant monotone.
                let w1 = 2.0 * (x[i + 1] - x[i]) + (x[i] - x[i - 1]);
                let w2 = (x[i + 1] - x[i]) + 2.0 * (x[i] - x[i - 1]);
                m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
            }
        }
        Pchip { x, y, m }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => return self.y[i],
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (x - self.x[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        self.y[i] * (2.0 * s3 - 3.0 * s2 + 1.0)
            + h * self.m[i] * (s3 - 2.0 * s2 + s)
            + self.y[i + 1] * (-2.0 * s3 + 3.0 * s2)
            + h * self.m[i + 1] * (s3 - s2)
    }
}
