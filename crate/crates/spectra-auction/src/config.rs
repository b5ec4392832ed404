//! Flat key=value configuration: files, CLI flag overrides, and the echo map
//! stored in run manifests. A preset round-trips exactly through its echo.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::drift::{DriftConfig, TrackingConfig};
use crate::harness::{find_preset, ExperimentPreset, PresetKind, SweepParam};
use crate::schemes::{SchemeConfig, SchemeId};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown preset '{0}'; see `list-presets`")]
    UnknownPreset(String),
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("missing required key '{0}'")]
    MissingKey(&'static str),
    #[error("invalid value for key '{key}': {message}")]
    BadValue { key: String, message: String },
    #[error("unknown scheme id '{0}'")]
    UnknownScheme(String),
    #[error("config file line {line} is not 'key = value': {text}")]
    BadLine { line: usize, text: String },
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
}

const KEYS: &[&str] = &[
    "name",
    "scheme",
    "users",
    "units",
    "p",
    "delta",
    "h",
    "rounds",
    "trials",
    "seed",
    "delta_levels",
    "q",
    "epsilon",
    "lambda",
    "mu",
    "theta",
    "sweep",
    "sweep_values",
    "fer_levels",
    "fer_rounds",
    "fer_p_values",
];

/// Assemble a preset from an optional builtin base, an optional key=value
/// file, and flag overrides, in that precedence order (later wins).
pub fn parse_config(
    preset_name: Option<&str>,
    file: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<ExperimentPreset, ConfigError> {
    let mut map = match preset_name {
        Some(name) => {
            let preset =
                find_preset(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
            preset_to_map(&preset)
        }
        None => BTreeMap::new(),
    };
    if let Some(path) = file {
        for (k, v) in parse_file(path)? {
            insert_checked(&mut map, &k, v)?;
        }
    }
    for (k, v) in overrides {
        insert_checked(&mut map, k, v.clone())?;
    }
    build_preset(&map)
}

fn insert_checked(
    map: &mut BTreeMap<String, String>,
    key: &str,
    value: String,
) -> Result<(), ConfigError> {
    if !KEYS.contains(&key) {
        return Err(ConfigError::UnknownKey(key.to_string()));
    }
    map.insert(key.to_string(), value);
    Ok(())
}

fn parse_file(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::BadLine { line: i + 1, text: raw.to_string() })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// The flat echo of a preset, as stored in the run manifest.
pub fn preset_to_map(preset: &ExperimentPreset) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        map.insert(k.to_string(), v);
    };
    put("name", preset.name.clone());
    put("trials", preset.trials.to_string());
    put("seed", preset.master_seed.to_string());
    put("delta_levels", join(&preset.delta_levels));
    match &preset.kind {
        PresetKind::Single(cfg) => put_scheme(&mut map, cfg),
        PresetKind::Sweep { base, param, values } => {
            put_scheme(&mut map, base);
            map.insert("sweep".into(), param.as_str().to_string());
            map.insert("sweep_values".into(), join(values));
        }
        PresetKind::Fer { levels, code_rounds, crossovers } => {
            map.insert("scheme".into(), "fer".into());
            map.insert("fer_levels".into(), levels.to_string());
            map.insert("fer_rounds".into(), code_rounds.to_string());
            map.insert("fer_p_values".into(), join(crossovers));
        }
    }
    map
}

fn put_scheme(map: &mut BTreeMap<String, String>, cfg: &SchemeConfig) {
    map.insert("scheme".into(), cfg.scheme.as_str().to_string());
    map.insert("users".into(), cfg.users.to_string());
    map.insert("units".into(), cfg.units.to_string());
    map.insert("p".into(), cfg.p.to_string());
    map.insert("delta".into(), cfg.delta.to_string());
    map.insert("h".into(), cfg.h.to_string());
    map.insert("rounds".into(), cfg.rounds.to_string());
    if let Some(d) = &cfg.drift {
        map.insert("q".into(), d.q.to_string());
        map.insert("epsilon".into(), d.epsilon.to_string());
    }
    if let Some(t) = &cfg.tracking {
        map.insert("lambda".into(), t.lambda.to_string());
        map.insert("mu".into(), t.mu.to_string());
        map.insert("theta".into(), t.theta.to_string());
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn build_preset(map: &BTreeMap<String, String>) -> Result<ExperimentPreset, ConfigError> {
    let scheme_str = map.get("scheme").ok_or(ConfigError::MissingKey("scheme"))?.clone();
    let name = map.get("name").cloned().unwrap_or_else(|| "custom".to_string());
    let trials = get_or(map, "trials", 500usize, parse_usize)?;
    let master_seed = get_or(map, "seed", 42u64, parse_u64)?;
    let delta_levels =
        get_or(map, "delta_levels", vec![0.005, 0.01, 0.02], parse_f64_list)?;

    let kind = if scheme_str == "fer" {
        PresetKind::Fer {
            levels: get_or(map, "fer_levels", 100_000usize, parse_usize)?,
            code_rounds: get_or(map, "fer_rounds", 50u64, parse_u64)?,
            crossovers: get_or(map, "fer_p_values", vec![0.05, 0.06, 0.1], parse_f64_list)?,
        }
    } else {
        let scheme = SchemeId::parse(&scheme_str)
            .ok_or_else(|| ConfigError::UnknownScheme(scheme_str.clone()))?;
        let drift = match (map.get("q"), map.get("epsilon")) {
            (None, None) => None,
            (q, eps) => Some(DriftConfig {
                q: opt_parse(q, "q", parse_f64)?.unwrap_or(0.0),
                epsilon: opt_parse(eps, "epsilon", parse_f64)?.unwrap_or(0.01),
            }),
        };
        let tracking = if scheme == SchemeId::MatchedTracking
            || map.contains_key("lambda")
            || map.contains_key("mu")
            || map.contains_key("theta")
        {
            Some(TrackingConfig {
                lambda: get_or(map, "lambda", 0.005, parse_f64)?,
                mu: get_or(map, "mu", 0.005, parse_f64)?,
                theta: get_or(map, "theta", 0.3, parse_f64)?,
            })
        } else {
            None
        };
        let cfg = SchemeConfig {
            scheme,
            users: get_or(map, "users", 10usize, parse_usize)?,
            units: get_or(map, "units", 1usize, parse_usize)?,
            p: get_or(map, "p", 0.05, parse_f64)?,
            delta: get_or(map, "delta", 1e-3, parse_f64)?,
            h: get_or(map, "h", 1e-3, parse_f64)?,
            drift,
            tracking,
            rounds: get_or(map, "rounds", 150usize, parse_usize)?,
        };
        match map.get("sweep") {
            Some(param_str) => {
                let param = SweepParam::parse(param_str).ok_or_else(|| ConfigError::BadValue {
                    key: "sweep".into(),
                    message: format!("'{param_str}' is not a sweepable parameter"),
                })?;
                let values = get_or(map, "sweep_values", Vec::new(), parse_f64_list)?;
                if values.is_empty() {
                    return Err(ConfigError::MissingKey("sweep_values"));
                }
                PresetKind::Sweep { base: cfg, param, values }
            }
            None => PresetKind::Single(cfg),
        }
    };

    let preset = ExperimentPreset { name, kind, trials, master_seed, delta_levels };
    preset.validate().map_err(|e| ConfigError::BadValue {
        key: "scheme".into(),
        message: e.to_string(),
    })?;
    Ok(preset)
}

fn get_or<T, F>(
    map: &BTreeMap<String, String>,
    key: &'static str,
    default: T,
    parse: F,
) -> Result<T, ConfigError>
where
    F: Fn(&str) -> Result<T, String>,
{
    match map.get(key) {
        Some(raw) => parse(raw).map_err(|message| ConfigError::BadValue { key: key.into(), message }),
        None => Ok(default),
    }
}

fn opt_parse<T, F>(raw: Option<&String>, key: &str, parse: F) -> Result<Option<T>, ConfigError>
where
    F: Fn(&str) -> Result<T, String>,
{
    raw.map(|r| {
        parse(r).map_err(|message| ConfigError::BadValue { key: key.into(), message })
    })
    .transpose()
}

fn parse_usize(s: &str) -> Result<usize, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_u64(s: &str) -> Result<u64, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s} is not finite"))
    }
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(parse_f64).collect()
}
