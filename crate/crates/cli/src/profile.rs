//! Profile specifications expanded onto a `cells^d` grid.
//!
//! A profile is a number (constant), an explicit list of cell values in
//! raster order, or a short text form:
//!
//! - `constant V`
//! - `cosine amplitude A [mean B] [axis K]`: `B + A cos(2π r_K)`
//! - `sine amplitude A [mean B] [axis K]`: `B + A sin(2π r_K)`
//! - `step LOW HIGH [axis K]`: `LOW` for `r_K < 0`, `HIGH` otherwise
//!
//! Coordinates `r` are cell centers on `[-½, ½)^d`.

use std::f64::consts::TAU;

use kacmix::thermo::ProfileField;
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Constant(f64),
    Values(Vec<f64>),
    Text(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Constant(f64),
    Cosine { amplitude: f64, mean: f64, axis: usize },
    Sine { amplitude: f64, mean: f64, axis: usize },
    Step { low: f64, high: f64, axis: usize },
}

impl Shape {
    pub fn eval(&self, r: &[f64]) -> f64 {
        match *self {
            Shape::Constant(v) => v,
            Shape::Cosine { amplitude, mean, axis } => mean + amplitude * (TAU * r[axis]).cos(),
            Shape::Sine { amplitude, mean, axis } => mean + amplitude * (TAU * r[axis]).sin(),
            Shape::Step { low, high, axis } => {
                if r[axis] < 0.0 {
                    low
                } else {
                    high
                }
            }
        }
    }

    fn axis(&self) -> usize {
        match *self {
            Shape::Constant(_) => 0,
            Shape::Cosine { axis, .. } | Shape::Sine { axis, .. } | Shape::Step { axis, .. } => axis,
        }
    }
}

/// Parses the text form.
pub fn parse_shape(text: &str) -> Result<Shape, String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let num = |s: Option<&&str>, what: &str| -> Result<f64, String> {
        let s = s.ok_or_else(|| format!("missing {what}"))?;
        let v: f64 = s.parse().map_err(|_| format!("{what} {s:?} is not a number"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{what} must be finite"))
        }
    };
    // trailing `key value` options
    let options = |rest: &[&str], allowed: &[&str]| -> Result<Vec<(String, f64)>, String> {
        if rest.len() % 2 != 0 {
            return Err(format!("dangling option in {text:?}"));
        }
        rest.chunks(2)
            .map(|kv| {
                if !allowed.contains(&kv[0]) {
                    return Err(format!("unknown option {:?}", kv[0]));
                }
                Ok((kv[0].to_string(), num(Some(&kv[1]), kv[0])?))
            })
            .collect()
    };
    let axis_of = |opts: &[(String, f64)]| -> Result<usize, String> {
        match opts.iter().find(|(k, _)| k == "axis") {
            None => Ok(0),
            Some((_, v)) if *v >= 0.0 && v.fract() == 0.0 => Ok(*v as usize),
            Some((_, v)) => Err(format!("axis {v} is not a non-negative integer")),
        }
    };
    let mean_of = |opts: &[(String, f64)]| opts.iter().find(|(k, _)| k == "mean").map_or(0.0, |(_, v)| *v);
    match words.first().copied() {
        Some("constant") if words.len() == 2 => Ok(Shape::Constant(num(words.get(1), "value")?)),
        Some(kind @ ("cosine" | "sine")) => {
            if words.get(1) != Some(&"amplitude") {
                return Err(format!("expected \"{kind} amplitude A\""));
            }
            let amplitude = num(words.get(2), "amplitude")?;
            let opts = options(&words[3.min(words.len())..], &["mean", "axis"])?;
            let (mean, axis) = (mean_of(&opts), axis_of(&opts)?);
            Ok(if kind == "cosine" {
                Shape::Cosine { amplitude, mean, axis }
            } else {
                Shape::Sine { amplitude, mean, axis }
            })
        }
        Some("step") => {
            let low = num(words.get(1), "low value")?;
            let high = num(words.get(2), "high value")?;
            let opts = options(&words[3.min(words.len())..], &["axis"])?;
            Ok(Shape::Step {
                low,
                high,
                axis: axis_of(&opts)?,
            })
        }
        _ => Err(format!(
            "unrecognized profile {text:?}; expected constant, cosine, sine or step"
        )),
    }
}

impl ProfileSpec {
    /// Expands onto `cells^dim` cells; errors name `key`.
    pub fn resolve(&self, dim: usize, cells: usize, key: &str) -> Result<ProfileField, ConfigError> {
        let field = match self {
            ProfileSpec::Constant(v) => ProfileField::constant(dim, cells, *v),
            ProfileSpec::Values(values) => ProfileField::new(dim, cells, values.clone()),
            ProfileSpec::Text(t) => {
                let shape = parse_shape(t).map_err(|m| ConfigError::new(key, m))?;
                if shape.axis() >= dim {
                    return Err(ConfigError::new(key, format!("axis {} out of range for d = {dim}", shape.axis())));
                }
                ProfileField::from_fn(dim, cells, |r| shape.eval(r))
            }
        };
        let field = field.map_err(|e| ConfigError::new(key, e.to_string()))?;
        if let Some(v) = field.values().iter().find(|v| v.abs() >= 1.0) {
            if key.ends_with(".u") {
                return Err(ConfigError::new(key, format!("magnetization {v} must lie in (-1, 1)")));
            }
        }
        Ok(field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_matches_direct_sampling() {
        let spec = ProfileSpec::Text("cosine amplitude 0.4".into());
        let f = spec.resolve(2, 4, "model.u").unwrap();
        for cy in 0..4 {
            for cx in 0..4 {
                let rx = (cx as f64 + 0.5) / 4.0 - 0.5;
                let want = 0.4 * (2.0 * std::f64::consts::PI * rx).cos();
                assert!((f.values()[cx + 4 * cy] - want).abs() < 1e-15);
            }
        }
        let g = ProfileSpec::Text("sine amplitude 0.2 mean 0.1 axis 1".into())
            .resolve(2, 2, "model.u")
            .unwrap();
        // r_1 = -1/4 on the first row, +1/4 on the second
        assert!((g.values()[0] - (0.1 - 0.2)).abs() < 1e-15);
        assert!((g.values()[3] - (0.1 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn other_forms() {
        assert_eq!(
            ProfileSpec::Constant(0.3).resolve(1, 2, "model.u").unwrap().values(),
            &[0.3, 0.3]
        );
        assert_eq!(
            ProfileSpec::Text("step -0.5 0.5".into()).resolve(1, 4, "model.u").unwrap().values(),
            &[-0.5, -0.5, 0.5, 0.5]
        );
        assert_eq!(
            ProfileSpec::Text("constant 0.25".into()).resolve(1, 1, "model.u").unwrap().values(),
            &[0.25]
        );
        let v = ProfileSpec::Values(vec![0.1, 0.2]).resolve(1, 2, "model.u").unwrap();
        assert_eq!(v.values(), &[0.1, 0.2]);
    }

    #[test]
    fn rejections() {
        for bad in ["cosine 0.4", "cosine amplitude x", "step 0.1", "wave amplitude 1", "cosine amplitude 0.1 mean"] {
            let e = ProfileSpec::Text(bad.into()).resolve(1, 2, "model.u").unwrap_err();
            assert_eq!(e.key, "model.u", "{bad}");
        }
        assert!(ProfileSpec::Text("cosine amplitude 0.1 axis 1".into()).resolve(1, 2, "model.u").is_err());
        assert!(ProfileSpec::Values(vec![0.1]).resolve(1, 2, "model.u").is_err());
        assert!(ProfileSpec::Constant(1.0).resolve(1, 2, "model.u").is_err());
        // α may leave (-1, 1)
        assert!(ProfileSpec::Constant(1.5).resolve(1, 2, "model.alpha").is_ok());
    }

    #[test]
    fn untagged_json_forms() {
        let a: ProfileSpec = serde_json::from_str("0.5").unwrap();
        assert_eq!(a, ProfileSpec::Constant(0.5));
        let b: ProfileSpec = serde_json::from_str("[0.1, 0.2]").unwrap();
        assert_eq!(b, ProfileSpec::Values(vec![0.1, 0.2]));
        let c: ProfileSpec = serde_json::from_str("\"constant 0.1\"").unwrap();
        assert_eq!(c, ProfileSpec::Text("constant 0.1".into()));
    }
}
