//! Run configuration: JSON schema, loading, and validation with field-path
//! error reporting.

use std::collections::BTreeMap;
use std::path::Path as FsPath;
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{ConfigError, Result};
use crate::gasket::GasketGraph;
use crate::process::{ModelKind, ProcessModel};
use crate::scale::{ScaleFunction, ScaleKind};
use crate::space::{OpenSet, Point};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub circumference: Option<f64>,
    pub level: Option<u32>,
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleConfig {
    pub kind: String,
    pub beta: Option<f64>,
    pub breakpoints: Option<Vec<f64>>,
    pub exponents: Option<Vec<f64>>,
    pub r: Option<Vec<f64>>,
    pub values: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub c_psi: f64,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetConfig {
    pub kind: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub center: Option<f64>,
    pub radius: Option<f64>,
    pub vertices: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub u: Option<SetConfig>,
    pub b: Option<SetConfig>,
    pub window: Option<(f64, f64)>,
    pub x0: Option<f64>,
    pub big_r: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub n_paths: Option<u64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    pub depth: Option<u32>,
    #[serde(default = "default_m_inner")]
    pub m_inner: u32,
    #[serde(default)]
    pub bridge_correction: bool,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub c_e: Option<f64>,
    /// When true, chain constants are derived rather than read.
    #[serde(default)]
    pub derive: bool,
    /// Named constant overrides for the derived ledger.
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub kind: String,
    pub c3: Option<f64>,
    pub alpha1: Option<f64>,
    #[serde(default)]
    pub alpha2: f64,
    #[serde(default)]
    pub alpha3: f64,
    pub c4: Option<f64>,
    #[serde(default = "one")]
    pub c_f: f64,
    pub alpha_f: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub scale_function: Option<ScaleConfig>,
    pub geometry: Option<GeometryConfig>,
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub constants: ConstantsConfig,
    pub bound: Option<BoundConfig>,
    pub times: Option<Vec<f64>>,
    pub radii: Option<Vec<f64>>,
    pub points: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: Option<String>,
}

fn one() -> f64 {
    1.0
}

fn default_n_max() -> usize {
    32
}

fn default_m_inner() -> u32 {
    16
}

impl RunConfig {
    pub fn load(path: &FsPath) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::invalid("config", format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError::invalid("config", format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Collect every violation with its field path.
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        if let Err(e) = self.build_model() {
            errs.push(e.to_string());
        }
        if self.scale_function.is_some() {
            if let Err(e) = self.build_scale() {
                errs.push(e.to_string());
            }
        }
        if let Some(dt) = self.estimator.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                errs.push("estimator.dt: must be positive".into());
            }
        }
        if let Some(n) = self.estimator.n_paths {
            if n == 0 {
                errs.push("estimator.n_paths: must be positive".into());
            }
        }
        if let Some(depth) = self.estimator.depth {
            if depth > 16 {
                errs.push("estimator.depth: must be at most 16".into());
            }
        }
        if let Some(ts) = &self.times {
            if ts.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
                errs.push("times: entries must be positive".into());
            }
        }
        if let Some(rs) = &self.radii {
            if rs.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
                errs.push("radii: entries must be positive".into());
            }
        }
        if let (Ok(model), Some(geo)) = (self.build_model(), &self.geometry) {
            let space = model.space();
            let u = geo.u.as_ref().map(|s| build_set(s, "geometry.u"));
            let b = geo.b.as_ref().map(|s| build_set(s, "geometry.b"));
            for set in [&u, &b].into_iter().flatten() {
                if let Err(e) = set {
                    errs.push(e.to_string());
                }
            }
            if let (Some(Ok(u)), Some(Ok(b))) = (&u, &b) {
                if !b.closure_contained_in(&space, u) {
                    errs.push("geometry.b: closure must be contained in geometry.u".into());
                }
            }
            if let Some((w0, w1)) = geo.window {
                if !(w0 < w1) {
                    errs.push("geometry.window: need w0 < w1".into());
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::invalid("config", errs.join("; ")))
        }
    }

    pub fn build_model(&self) -> Result<ProcessModel> {
        let m = &self.model;
        let kind = match m.kind.as_str() {
            "brownian_line" => ModelKind::BrownianLine,
            "brownian_killed" => {
                let a = m
                    .a
                    .ok_or_else(|| ConfigError::invalid("model.a", "required for brownian_killed"))?;
                let b = m
                    .b
                    .ok_or_else(|| ConfigError::invalid("model.b", "required for brownian_killed"))?;
                ModelKind::BrownianKilled { a, b }
            }
            "brownian_circle" => ModelKind::BrownianCircle {
                circumference: m.circumference.ok_or_else(|| {
                    ConfigError::invalid("model.circumference", "required for brownian_circle")
                })?,
            },
            "gasket_walk" => {
                let level = m.level.ok_or_else(|| {
                    ConfigError::invalid("model.level", "required for gasket_walk")
                })?;
                if level == 0 || level > 8 {
                    return Err(ConfigError::invalid("model.level", "must be in 1..=8"));
                }
                ModelKind::GasketWalk(Arc::new(GasketGraph::new(level)))
            }
            other => {
                return Err(ConfigError::invalid(
                    "model.kind",
                    format!("unknown model {other:?}"),
                ))
            }
        };
        ProcessModel::new(kind, m.scale)
    }

    pub fn build_scale(&self) -> Result<ScaleFunction> {
        let s = self.scale_function.as_ref().ok_or_else(|| {
            ConfigError::invalid("scale_function", "required for this subcommand")
        })?;
        match s.kind.as_str() {
            "power" => {
                let beta = s
                    .beta
                    .ok_or_else(|| ConfigError::invalid("scale_function.beta", "required"))?;
                ScaleFunction::power(beta)
            }
            "piecewise_power" => {
                let breakpoints = s.breakpoints.clone().ok_or_else(|| {
                    ConfigError::invalid("scale_function.breakpoints", "required")
                })?;
                let exponents = s.exponents.clone().ok_or_else(|| {
                    ConfigError::invalid("scale_function.exponents", "required")
                })?;
                let beta1 = s.beta1.ok_or_else(|| {
                    ConfigError::invalid("scale_function.beta1", "required")
                })?;
                let beta2 = s.beta2.ok_or_else(|| {
                    ConfigError::invalid("scale_function.beta2", "required")
                })?;
                ScaleFunction::new(
                    ScaleKind::PiecewisePower {
                        breakpoints,
                        exponents,
                    },
                    s.c_psi,
                    beta1,
                    beta2,
                )
            }
            "tabulated" => {
                let r = s
                    .r
                    .clone()
                    .ok_or_else(|| ConfigError::invalid("scale_function.r", "required"))?;
                let values = s
                    .values
                    .clone()
                    .ok_or_else(|| ConfigError::invalid("scale_function.values", "required"))?;
                let beta1 = s.beta1.ok_or_else(|| {
                    ConfigError::invalid("scale_function.beta1", "required")
                })?;
                let beta2 = s.beta2.ok_or_else(|| {
                    ConfigError::invalid("scale_function.beta2", "required")
                })?;
                ScaleFunction::new(ScaleKind::Tabulated { r, values }, s.c_psi, beta1, beta2)
            }
            other => Err(ConfigError::invalid(
                "scale_function.kind",
                format!("unknown kind {other:?}"),
            )),
        }
    }

    pub fn u_set(&self) -> Result<OpenSet> {
        match self.geometry.as_ref().and_then(|g| g.u.as_ref()) {
            Some(s) => build_set(s, "geometry.u"),
            None => Err(ConfigError::invalid("geometry.u", "required")),
        }
    }

    pub fn b_set(&self) -> Result<OpenSet> {
        match self.geometry.as_ref().and_then(|g| g.b.as_ref()) {
            Some(s) => build_set(s, "geometry.b"),
            None => Err(ConfigError::invalid("geometry.b", "required")),
        }
    }

    pub fn x0(&self) -> Point {
        Point::Line(self.geometry.as_ref().and_then(|g| g.x0).unwrap_or(0.0))
    }

    pub fn dt(&self) -> Result<f64> {
        self.estimator
            .dt
            .ok_or_else(|| ConfigError::invalid("estimator.dt", "required"))
    }

    pub fn n_paths(&self) -> Result<u64> {
        self.estimator
            .n_paths
            .ok_or_else(|| ConfigError::invalid("estimator.n_paths", "required"))
    }
}

pub fn build_set(s: &SetConfig, field: &str) -> Result<OpenSet> {
    match s.kind.as_str() {
        "interval" => {
            let a = s
                .a
                .ok_or_else(|| ConfigError::invalid(format!("{field}.a"), "required"))?;
            let b = s
                .b
                .ok_or_else(|| ConfigError::invalid(format!("{field}.b"), "required"))?;
            if !(a < b) {
                return Err(ConfigError::invalid(field, "need a < b"));
            }
            Ok(OpenSet::Interval { a, b })
        }
        "ball" => {
            let center = s
                .center
                .ok_or_else(|| ConfigError::invalid(format!("{field}.center"), "required"))?;
            let radius = s
                .radius
                .ok_or_else(|| ConfigError::invalid(format!("{field}.radius"), "required"))?;
            if !(radius > 0.0) {
                return Err(ConfigError::invalid(format!("{field}.radius"), "must be positive"));
            }
            Ok(OpenSet::Ball {
                center: Point::Line(center),
                radius,
            })
        }
        "vertex_set" => Ok(OpenSet::VertexSet(
            s.vertices
                .clone()
                .ok_or_else(|| ConfigError::invalid(format!("{field}.vertices"), "required"))?
                .into_iter()
                .collect(),
        )),
        "whole_space" => Ok(OpenSet::WholeSpace),
        other => Err(ConfigError::invalid(
            field,
            format!("unknown set kind {other:?}"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
            "model": {"kind": "brownian_line"},
            "estimator": {"n_paths": 1000, "dt": 0.001},
            "seed": 7
        }"#
    }

    #[test]
    fn minimal_config_parses_and_builds() {
        let cfg: RunConfig = serde_json::from_str(minimal()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 7);
        cfg.build_model().unwrap();
        assert_eq!(cfg.dt().unwrap(), 0.001);
    }

    #[test]
    fn missing_dt_is_named_in_the_error() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"model": {"kind": "brownian_line"}, "estimator": {"n_paths": 10}}"#,
        )
        .unwrap();
        let err = cfg.dt().unwrap_err().to_string();
        assert!(err.contains("estimator.dt"), "{err}");
    }

    #[test]
    fn geometry_cross_reference_is_checked() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{
                "model": {"kind": "brownian_line"},
                "estimator": {"dt": 0.001},
                "geometry": {
                    "u": {"kind": "interval", "a": -0.4, "b": 0.4},
                    "b": {"kind": "interval", "a": -0.5, "b": 0.5}
                }
            }"#,
        )
        .unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("geometry.b"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let res: std::result::Result<RunConfig, _> = serde_json::from_str(
            r#"{"model": {"kind": "brownian_line", "bogus": 1}, "estimator": {}}"#,
        );
        assert!(res.is_err());
    }

    #[test]
    fn scale_descriptors_build() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{
                "model": {"kind": "brownian_line"},
                "estimator": {},
                "scale_function": {"kind": "power", "beta": 2.5}
            }"#,
        )
        .unwrap();
        let sf = cfg.build_scale().unwrap();
        assert!((sf.psi(2.0) - 2f64.powf(2.5)).abs() < 1e-12);
    }
}
