//! Flat key-value configuration shared by config files and CLI flags.
//!
//! A config file is a TOML document with top-level keys only. Flags use the
//! same key names (with `-` instead of `_`) and override the file. Every
//! value is converted by the same routine whichever way it arrives, so an
//! error always names the offending key.

use std::path::{Path, PathBuf};

use toml::Value;

use crate::algorithms::{Algorithm, UpdateOrder};
use crate::error::{Error, Result};
use crate::topology::GraphKind;

use super::Experiment;

/// Every setting a run can take, all optional until defaults are applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatConfig {
    pub experiment: Option<Experiment>,
    pub n: Option<usize>,
    pub topology: Option<GraphKind>,
    pub edges: Option<Vec<(usize, usize)>>,
    pub algos: Option<Vec<Algorithm>>,
    /// Lists are accepted so that sweeps can share the format; a run needs
    /// exactly one value.
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub gamma_x: Option<Vec<f64>>,
    pub gamma_y: Option<Vec<f64>>,
    pub c0: Option<f64>,
    pub order: Option<UpdateOrder>,
    pub iterations: Option<usize>,
    pub stride: Option<usize>,
    pub seed: Option<u64>,
    pub noise: Option<String>,
    pub sigma: Option<f64>,
    pub clip: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub x0: Option<f64>,
    pub y0: Option<f64>,
    pub init_offset: Option<f64>,
    pub p: Option<usize>,
    pub d: Option<usize>,
    pub l_low: Option<f64>,
    pub l_high: Option<f64>,
    pub phi_margin: Option<f64>,
    pub y_box: Option<Vec<f64>>,
    pub y_ball: Option<f64>,
    pub threshold: Option<f64>,
}

const KEYS: &[&str] = &[
    "experiment", "n", "topology", "edges", "algos", "alpha", "beta", "gamma_x", "gamma_y", "c0",
    "order", "K", "stride", "seed", "noise", "sigma", "clip", "out_dir", "x0", "y0", "init_offset",
    "p", "d", "l_low", "l_high", "phi_margin", "y_box", "y_ball", "threshold",
];

fn canonical(key: &str) -> String {
    let k = key.trim().replace('-', "_");
    match k.as_str() {
        "K" | "k" | "iterations" => "K".to_string(),
        "algo" => "algos".to_string(),
        "trace_stride" => "stride".to_string(),
        _ => k,
    }
}

fn type_err(key: &str, expected: &str, v: &Value) -> Error {
    Error::config(key, format!("expected {expected}, got `{v}`"))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    let x = match v {
        Value::Float(f) => *f,
        Value::Integer(i) => *i as f64,
        Value::String(s) => s.trim().parse::<f64>().map_err(|_| type_err(key, "a number", v))?,
        _ => return Err(type_err(key, "a number", v)),
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::config(key, "value must be finite"))
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::Float(f) if *f >= 0.0 && f.fract() == 0.0 && *f < 1.8e19 => Ok(*f as u64),
        Value::String(s) => {
            let s = s.trim();
            s.parse::<u64>()
                .or_else(|_| match s.parse::<f64>() {
                    Ok(f) if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 => Ok(f as u64),
                    _ => Err(()),
                })
                .map_err(|_| type_err(key, "a non-negative integer", v))
        }
        _ => Err(type_err(key, "a non-negative integer", v)),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    as_u64(key, v).map(|x| x as usize)
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| type_err(key, "a string", v))
}

/// An array, or a comma-separated string.
fn items(v: &Value) -> Vec<Value> {
    match v {
        Value::Array(a) => a.clone(),
        Value::String(s) if s.trim().is_empty() => Vec::new(),
        Value::String(s) => s.split(',').map(|t| Value::String(t.trim().to_string())).collect(),
        other => vec![other.clone()],
    }
}

fn f64_list(key: &str, v: &Value) -> Result<Vec<f64>> {
    items(v).iter().map(|x| as_f64(key, x)).collect()
}

fn parse_with<T>(key: &str, v: &Value, f: impl Fn(&str) -> Result<T>) -> Result<T> {
    f(as_str(key, v)?).map_err(|e| Error::config(key, e.to_string()))
}

fn edge_list(key: &str, v: &Value) -> Result<Vec<(usize, usize)>> {
    let pair = |x: &Value| -> Result<(usize, usize)> {
        match x {
            Value::Array(a) if a.len() == 2 => Ok((as_usize(key, &a[0])?, as_usize(key, &a[1])?)),
            Value::String(s) => {
                let (a, b) = s
                    .split_once('-')
                    .ok_or_else(|| type_err(key, "edges as `i-j`", x))?;
                Ok((
                    as_usize(key, &Value::String(a.into()))?,
                    as_usize(key, &Value::String(b.into()))?,
                ))
            }
            _ => Err(type_err(key, "a pair of node indices", x)),
        }
    };
    items(v).iter().map(pair).collect()
}

impl FlatConfig {
    /// Sets one key. String values are parsed according to the key.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        let key = canonical(key);
        let k = key.as_str();
        match k {
            "experiment" => self.experiment = Some(parse_with(k, v, |s| s.parse())?),
            "n" => self.n = Some(as_usize(k, v)?),
            "topology" => self.topology = Some(parse_with(k, v, |s| s.parse())?),
            "edges" => self.edges = Some(edge_list(k, v)?),
            "algos" => {
                let list = items(v)
                    .iter()
                    .map(|x| parse_with(k, x, |s| s.parse()))
                    .collect::<Result<Vec<Algorithm>>>()?;
                self.algos = Some(list);
            }
            "alpha" => self.alpha = Some(f64_list(k, v)?),
            "beta" => self.beta = Some(f64_list(k, v)?),
            "gamma_x" => self.gamma_x = Some(f64_list(k, v)?),
            "gamma_y" => self.gamma_y = Some(f64_list(k, v)?),
            "c0" => self.c0 = Some(as_f64(k, v)?),
            "order" => self.order = Some(parse_with(k, v, |s| s.parse())?),
            "K" => self.iterations = Some(as_usize(k, v)?),
            "stride" => self.stride = Some(as_usize(k, v)?),
            "seed" => self.seed = Some(as_u64(k, v)?),
            "noise" => self.noise = Some(as_str(k, v)?.trim().to_ascii_lowercase()),
            "sigma" => self.sigma = Some(as_f64(k, v)?),
            "clip" => self.clip = Some(as_f64(k, v)?),
            "out_dir" => self.out_dir = Some(PathBuf::from(as_str(k, v)?)),
            "x0" => self.x0 = Some(as_f64(k, v)?),
            "y0" => self.y0 = Some(as_f64(k, v)?),
            "init_offset" => self.init_offset = Some(as_f64(k, v)?),
            "p" => self.p = Some(as_usize(k, v)?),
            "d" => self.d = Some(as_usize(k, v)?),
            "l_low" => self.l_low = Some(as_f64(k, v)?),
            "l_high" => self.l_high = Some(as_f64(k, v)?),
            "phi_margin" => self.phi_margin = Some(as_f64(k, v)?),
            "y_box" => {
                let b = f64_list(k, v)?;
                if b.len() != 2 || !(b[0] <= b[1]) {
                    return Err(Error::config(k, "expected `[lo, hi]` with lo <= hi"));
                }
                self.y_box = Some(b);
            }
            "y_ball" => self.y_ball = Some(as_f64(k, v)?),
            "threshold" => self.threshold = Some(as_f64(k, v)?),
            _ => return Err(Error::config(key.clone(), format!("unknown key; expected one of {}", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Sets a key from a command-line string.
    pub fn set_str(&mut self, key: &str, raw: &str) -> Result<()> {
        self.set(key, &Value::String(raw.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let key = e.message().split('`').nth(1).unwrap_or("<file>").to_string();
            Error::config(key, e.message().trim().to_string())
        })?;
        let mut cfg = Self::default();
        for (k, v) in &table {
            if v.is_table() {
                return Err(Error::config(k.clone(), "nested tables are not supported"));
            }
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// `other` wins wherever it is set.
    pub fn overlay(self, other: FlatConfig) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { FlatConfig { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            experiment, n, topology, edges, algos, alpha, beta, gamma_x, gamma_y, c0, order,
            iterations, stride, seed, noise, sigma, clip, out_dir, x0, y0, init_offset, p, d, l_low,
            l_high, phi_margin, y_box, y_ball, threshold
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_and_flag_values_agree() {
        let f = FlatConfig::from_toml_str(
            "experiment = \"synthetic\"\nn = 50\nalgos = [\"d-adast\", \"d-tiada\"]\ngamma_x = 0.1\nK = 1000\n",
        )
        .unwrap();
        let mut g = FlatConfig::default();
        for (k, v) in [("experiment", "synthetic"), ("n", "50"), ("algos", "d-adast,d-tiada"), ("gamma-x", "0.1"), ("K", "1000")] {
            g.set_str(k, v).unwrap();
        }
        assert_eq!(f, g);
    }

    #[test]
    fn errors_name_the_key() {
        for text in ["bogus = 1", "n = \"many\"", "alpha = true", "topology = \"torus\"", "y_box = [1, 0]"] {
            match FlatConfig::from_toml_str(text).unwrap_err() {
                Error::Config { key, .. } => assert_eq!(key, text.split(' ').next().unwrap()),
                e => panic!("unexpected {e}"),
            }
        }
        assert!(matches!(FlatConfig::from_toml_str("n = ="), Err(Error::Config { .. })));
    }

    #[test]
    fn overlay_prefers_flags() {
        let file = FlatConfig { n: Some(10), seed: Some(1), ..Default::default() };
        let flags = FlatConfig { n: Some(20), ..Default::default() };
        let merged = file.overlay(flags);
        assert_eq!(merged.n, Some(20));
        assert_eq!(merged.seed, Some(1));
    }

    #[test]
    fn edge_formats() {
        let mut c = FlatConfig::default();
        c.set_str("edges", "0-1, 1-2").unwrap();
        assert_eq!(c.edges, Some(vec![(0, 1), (1, 2)]));
        let c = FlatConfig::from_toml_str("edges = [[0, 2], [2, 1]]").unwrap();
        assert_eq!(c.edges, Some(vec![(0, 2), (2, 1)]));
    }
}
