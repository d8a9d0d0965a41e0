//! Flat `key = value` configuration files.
//!
//! One setting per line, `#` starts a comment, unknown keys are rejected.
//! Keys are the field names of [`OdometryConfig`] and [`SolverConfig`];
//! `kappa` takes three comma-separated counts and `search_mode` is `faces7`
//! or `block27`.
//!
//! [`SolverConfig`]: crate::optimizer::SolverConfig

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::map::SearchMode;
use crate::pipeline::OdometryConfig;

const KEYS: &[&str] = &[
    "dt_init",
    "alpha",
    "k_vec",
    "k_val",
    "window_size",
    "kappa",
    "c_strong",
    "c_contrib",
    "ds_init",
    "ds_floor",
    "span_cap",
    "pca_ds",
    "enable_pca",
    "enable_dm",
    "deskew",
    "voxel_size",
    "max_points_per_voxel",
    "search_mode",
    "map_radius",
    "anchor_information",
    "lock_weight",
    "record_timing",
    "max_outer",
    "max_inner",
    "translation_tol",
    "rotation_tol",
    "huber_delta",
    "point_information",
    "velocity_information_rho",
    "velocity_information_phi",
    "plane_neighbors",
    "plane_min_count",
    "planarity_min",
    "max_corr_dist",
    "marginal_eps",
    "initial_lambda",
    "parallel",
];

impl FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "faces7" | "7" => Ok(SearchMode::Faces7),
            "block27" | "27" => Ok(SearchMode::Block27),
            _ => Err(Error::UnknownName {
                kind: "search mode",
                name: s.to_string(),
                valid: "faces7, block27".into(),
            }),
        }
    }
}

fn parse_value<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse '{value}'"))
}

fn parse_kappa(value: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b, c] => Ok([parse_value(a)?, parse_value(b)?, parse_value(c)?]),
        _ => Err(format!("kappa needs three comma-separated counts, got '{value}'")),
    }
}

fn apply(cfg: &mut OdometryConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    let s = &mut cfg.solver;
    match key {
        "dt_init" => cfg.dt_init = parse_value(value)?,
        "alpha" => cfg.alpha = parse_value(value)?,
        "k_vec" => cfg.k_vec = parse_value(value)?,
        "k_val" => cfg.k_val = parse_value(value)?,
        "window_size" => cfg.window_size = parse_value(value)?,
        "kappa" => cfg.kappa = parse_kappa(value)?,
        "c_strong" => cfg.c_strong = parse_value(value)?,
        "c_contrib" => cfg.c_contrib = parse_value(value)?,
        "ds_init" => cfg.ds_init = parse_value(value)?,
        "ds_floor" => cfg.ds_floor = parse_value(value)?,
        "span_cap" => cfg.span_cap = parse_value(value)?,
        "pca_ds" => cfg.pca_ds = parse_value(value)?,
        "enable_pca" => cfg.enable_pca = parse_value(value)?,
        "enable_dm" => cfg.enable_dm = parse_value(value)?,
        "deskew" => cfg.deskew = parse_value(value)?,
        "voxel_size" => cfg.voxel_size = parse_value(value)?,
        "max_points_per_voxel" => cfg.max_points_per_voxel = parse_value(value)?,
        "search_mode" => cfg.search_mode = value.parse().map_err(|e: Error| e.to_string())?,
        "map_radius" => cfg.map_radius = parse_value(value)?,
        "anchor_information" => cfg.anchor_information = parse_value(value)?,
        "lock_weight" => cfg.lock_weight = parse_value(value)?,
        "record_timing" => cfg.record_timing = parse_value(value)?,
        "max_outer" => s.max_outer = parse_value(value)?,
        "max_inner" => s.max_inner = parse_value(value)?,
        "translation_tol" => s.translation_tol = parse_value(value)?,
        "rotation_tol" => s.rotation_tol = parse_value(value)?,
        "huber_delta" => s.huber_delta = parse_value(value)?,
        "point_information" => s.point_information = parse_value(value)?,
        "velocity_information_rho" => s.velocity_information_rho = parse_value(value)?,
        "velocity_information_phi" => s.velocity_information_phi = parse_value(value)?,
        "plane_neighbors" => s.plane_neighbors = parse_value(value)?,
        "plane_min_count" => s.plane_min_count = parse_value(value)?,
        "planarity_min" => s.planarity_min = parse_value(value)?,
        "max_corr_dist" => s.max_corr_dist = parse_value(value)?,
        "marginal_eps" => s.marginal_eps = parse_value(value)?,
        "initial_lambda" => s.initial_lambda = parse_value(value)?,
        "parallel" => s.parallel = parse_value(value)?,
        _ => return Err(format!("unknown key '{key}'; valid keys: {}", KEYS.join(", "))),
    }
    Ok(())
}

/// Parses configuration text over the defaults and validates the result.
/// `origin` only labels error messages.
pub fn parse_config(text: &str, origin: &Path) -> Result<OdometryConfig> {
    let mut cfg = OdometryConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            msg,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected key = value, got '{line}'")))?;
        apply(&mut cfg, key.trim(), value.trim()).map_err(parse_err)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<OdometryConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

/// Renders every setting, in a form [`parse_config`] reads back unchanged.
pub fn render_config(cfg: &OdometryConfig) -> String {
    let s = &cfg.solver;
    let mode = match cfg.search_mode {
        SearchMode::Faces7 => "faces7",
        SearchMode::Block27 => "block27",
    };
    let [k1, k2, k3] = cfg.kappa;
    let values: Vec<String> = vec![
        cfg.dt_init.to_string(),
        cfg.alpha.to_string(),
        cfg.k_vec.to_string(),
        cfg.k_val.to_string(),
        cfg.window_size.to_string(),
        format!("{k1},{k2},{k3}"),
        cfg.c_strong.to_string(),
        cfg.c_contrib.to_string(),
        cfg.ds_init.to_string(),
        cfg.ds_floor.to_string(),
        cfg.span_cap.to_string(),
        cfg.pca_ds.to_string(),
        cfg.enable_pca.to_string(),
        cfg.enable_dm.to_string(),
        cfg.deskew.to_string(),
        cfg.voxel_size.to_string(),
        cfg.max_points_per_voxel.to_string(),
        mode.to_string(),
        cfg.map_radius.to_string(),
        cfg.anchor_information.to_string(),
        cfg.lock_weight.to_string(),
        cfg.record_timing.to_string(),
        s.max_outer.to_string(),
        s.max_inner.to_string(),
        s.translation_tol.to_string(),
        s.rotation_tol.to_string(),
        s.huber_delta.to_string(),
        s.point_information.to_string(),
        s.velocity_information_rho.to_string(),
        s.velocity_information_phi.to_string(),
        s.plane_neighbors.to_string(),
        s.plane_min_count.to_string(),
        s.planarity_min.to_string(),
        s.max_corr_dist.to_string(),
        s.marginal_eps.to_string(),
        s.initial_lambda.to_string(),
        s.parallel.to_string(),
    ];
    let mut out = String::new();
    for (k, v) in KEYS.iter().zip(values) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = OdometryConfig::default();
        let back = parse_config(&render_config(&cfg), Path::new("x")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_and_comments() {
        let text = "# tuned\nalpha = 0.25\nkappa = 90, 40, 10  # counts\nsearch_mode = block27\n\nparallel=true\n";
        let cfg = parse_config(text, Path::new("x")).unwrap();
        assert_eq!(cfg.alpha, 0.25);
        assert_eq!(cfg.kappa, [90, 40, 10]);
        assert_eq!(cfg.search_mode, SearchMode::Block27);
        assert!(cfg.solver.parallel);
    }

    #[test]
    fn unknown_key_names_the_line() {
        let err = parse_config("alpha = 0.5\nbeta = 1\n", Path::new("c.cfg")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("c.cfg:2:"), "{msg}");
        assert!(msg.contains("unknown key 'beta'"));
    }

    #[test]
    fn invalid_alpha_is_rejected() {
        let err = parse_config("alpha = 1.5\n", Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("0 < alpha < 1"));
    }

    #[test]
    fn missing_equals_is_a_parse_error() {
        assert!(matches!(
            parse_config("alpha 0.5\n", Path::new("x")),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
