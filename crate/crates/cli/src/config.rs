//! Experiment configuration: flat UTF-8 `key = value` text grouped by
//! `[section]` headers. Every key must belong to its section's vocabulary —
//! unknown keys, unknown sections, and duplicates are hard errors, so typos
//! never pass silently. All randomness flows from the configured seed list.

use std::collections::BTreeMap;
use std::path::PathBuf;

use cglab_core::fem::SolveConfig;
use cglab_core::{DMat, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Field,
    Coarsen,
    Verify(Harness),
    Report,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Harness {
    Caccioppoli,
    Approx,
    Liouville,
    Excess,
    Dims,
}

impl Harness {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "caccioppoli" => Ok(Harness::Caccioppoli),
            "approx" => Ok(Harness::Approx),
            "liouville" => Ok(Harness::Liouville),
            "excess" => Ok(Harness::Excess),
            "dims" => Ok(Harness::Dims),
            other => Err(Error::validation(format!(
                "unknown harness '{other}' (expected caccioppoli, approx, liouville, excess, or dims)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Harness::Caccioppoli => "caccioppoli",
            Harness::Approx => "approx",
            Harness::Liouville => "liouville",
            Harness::Excess => "excess",
            Harness::Dims => "dims",
        }
    }
}

/// Which stationary generator fills the ensemble, with its parameters.
#[derive(Clone, Debug)]
pub enum EnsembleSpec {
    Constant { s: DMat, k: DMat },
    Checkerboard { sigma1: f64, sigma2: f64, p: f64 },
    Laminate { sigma1: f64, sigma2: f64, axis: usize },
    Poisson { intensity: f64, radius_cells: f64, sigma_background: f64, sigma_inclusion: f64 },
}

/// Boundary data selector for the verification harnesses.
#[derive(Clone, Copy, Debug)]
pub enum BoundaryChoice {
    Affine([f64; 2]),
    Smooth { seed: u64 },
    Cubic,
}

/// Harness thresholds and parameters (section [verify]).
#[derive(Clone, Debug)]
pub struct VerifyParams {
    pub boundary: BoundaryChoice,
    pub lambda_bar: Option<f64>,
    pub max_ratio: Option<f64>,
    pub max_total_over_ref: Option<f64>,
    pub max_mean_ratio: f64,
    pub max_excess_ratio: f64,
    pub radii: Vec<f64>,
    pub excess_k: usize,
    pub k_list: Vec<usize>,
    pub expected_dims: Vec<usize>,
    pub min_gap: f64,
    pub x_hat: f64,
    pub theta_hat: Option<f64>,
    pub scales_n: Vec<u32>,
    pub ball_r: Option<f64>,
    pub ball_big_r: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub d: usize,
    pub l_cells: usize,
    pub seeds: Vec<u64>,
    pub ensemble: EnsembleSpec,
    pub k0: u32,
    pub adapted: bool,
    pub solver: SolveConfig,
    pub max_solves: usize,
    pub m_levels: Vec<u32>,
    pub s_exponent: f64,
    pub gamma: f64,
    pub est_level: Option<u32>,
    pub verify: VerifyParams,
    pub out_dir: PathBuf,
    pub threads: usize,
    /// Experiment-defining keys ("section.key" -> value) embedded verbatim in
    /// every artifact. Excludes the output directory and the thread budget,
    /// which describe the run environment rather than the experiment, so the
    /// same experiment produces byte-identical artifacts wherever and however
    /// wide it runs.
    pub resolved: BTreeMap<String, String>,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("run", &["command", "harness", "threads"]),
    (
        "ensemble",
        &[
            "generator",
            "d",
            "l_cells",
            "seeds",
            "s_entries",
            "k_entries",
            "sigma1",
            "sigma2",
            "p",
            "axis",
            "intensity",
            "radius_cells",
            "sigma_background",
            "sigma_inclusion",
        ],
    ),
    ("geometry", &["k0", "adapted"]),
    ("solver", &["tol_rel", "max_iter", "max_solves"]),
    ("scales", &["m_levels", "s_exponent", "gamma", "est_level"]),
    (
        "verify",
        &[
            "boundary",
            "e0",
            "e1",
            "bseed",
            "lambda_bar",
            "max_ratio",
            "max_total_over_ref",
            "max_mean_ratio",
            "max_excess_ratio",
            "radii",
            "excess_k",
            "k_list",
            "expected_dims",
            "min_gap",
            "x_hat",
            "theta_hat",
            "scales_n",
            "ball_r",
            "ball_big_r",
        ],
    ),
    ("output", &["dir"]),
];

/// Raw parsed text: section -> key -> value, with per-key line numbers for
/// error messages.
struct RawConfig {
    values: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut values: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut section: Option<String> = None;
        for (i, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    return Err(Error::format(format!(
                        "line {lineno}: unknown section [{name}]"
                    )));
                }
                section = Some(name.to_string());
                values.entry(name.to_string()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::format(format!(
                    "line {lineno}: expected 'key = value' or '[section]', got '{line}'"
                )));
            };
            let key = key.trim();
            let value = value.trim();
            let Some(sec) = &section else {
                return Err(Error::format(format!(
                    "line {lineno}: key '{key}' appears before any [section] header"
                )));
            };
            let vocab = SECTIONS.iter().find(|(s, _)| s == sec).unwrap().1;
            if !vocab.contains(&key) {
                return Err(Error::format(format!(
                    "line {lineno}: unknown key '{key}' in section [{sec}]"
                )));
            }
            let entry = values.get_mut(sec).unwrap();
            if entry.contains_key(key) {
                return Err(Error::format(format!(
                    "line {lineno}: duplicate key '{key}' in section [{sec}]"
                )));
            }
            entry.insert(key.to_string(), value.to_string());
        }
        Ok(RawConfig { values })
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.values.get(section).and_then(|m| m.get(key)).map(|s| s.as_str())
    }

    fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key).ok_or_else(|| {
            Error::validation(format!("missing required key '{key}' in section [{section}]"))
        })
    }
}

fn parse_f64(section: &str, key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>().map_err(|_| {
        Error::validation(format!("[{section}] {key} = '{v}' is not a number"))
    })
}

fn parse_usize(section: &str, key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>().map_err(|_| {
        Error::validation(format!("[{section}] {key} = '{v}' is not a nonnegative integer"))
    })
}

fn parse_u64(section: &str, key: &str, v: &str) -> Result<u64> {
    v.parse::<u64>().map_err(|_| {
        Error::validation(format!("[{section}] {key} = '{v}' is not a nonnegative integer"))
    })
}

fn parse_u32(section: &str, key: &str, v: &str) -> Result<u32> {
    v.parse::<u32>().map_err(|_| {
        Error::validation(format!("[{section}] {key} = '{v}' is not a nonnegative integer"))
    })
}

fn parse_bool(section: &str, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::validation(format!(
            "[{section}] {key} = '{v}' is not 'true' or 'false'"
        ))),
    }
}

fn parse_list<T, F: Fn(&str) -> Result<T>>(v: &str, item: F) -> Result<Vec<T>> {
    v.split(',').map(|s| item(s.trim())).collect()
}

fn matrix_from_entries(d: usize, section: &str, key: &str, v: &str) -> Result<DMat> {
    let entries = parse_list(v, |s| parse_f64(section, key, s))?;
    if entries.len() != d * d {
        return Err(Error::validation(format!(
            "[{section}] {key} needs {} entries for d = {d}, got {}",
            d * d,
            entries.len()
        )));
    }
    Ok(DMat::from_row_slice(d, d, &entries))
}

/// Reject generator parameters that do not belong to the chosen generator, so
/// a mistyped configuration cannot silently carry dead keys.
fn check_generator_keys(raw: &RawConfig, generator: &str, allowed: &[&str]) -> Result<()> {
    const GENERATOR_KEYS: &[&str] = &[
        "s_entries",
        "k_entries",
        "sigma1",
        "sigma2",
        "p",
        "axis",
        "intensity",
        "radius_cells",
        "sigma_background",
        "sigma_inclusion",
    ];
    for key in GENERATOR_KEYS {
        if raw.get("ensemble", key).is_some() && !allowed.contains(key) {
            return Err(Error::validation(format!(
                "[ensemble] key '{key}' does not apply to generator '{generator}'"
            )));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let raw = RawConfig::parse(text)?;

        let command = match raw.get("run", "command") {
            None => None,
            Some("field") => Some(Command::Field),
            Some("coarsen") => Some(Command::Coarsen),
            Some("report") => Some(Command::Report),
            Some("verify") => {
                let h = raw.require("run", "harness")?;
                Some(Command::Verify(Harness::parse(h)?))
            }
            Some(other) => {
                return Err(Error::validation(format!(
                    "[run] command = '{other}' is not field, coarsen, verify, or report"
                )))
            }
        };
        if raw.get("run", "harness").is_some() && !matches!(command, Some(Command::Verify(_))) {
            return Err(Error::validation(
                "[run] harness is only meaningful with command = verify",
            ));
        }
        let threads = match raw.get("run", "threads") {
            Some(v) => parse_usize("run", "threads", v)?,
            None => 1,
        };
        if threads == 0 {
            return Err(Error::validation("[run] threads must be at least 1"));
        }

        let d = parse_usize("ensemble", "d", raw.require("ensemble", "d")?)?;
        if d != 1 && d != 2 {
            return Err(Error::validation(format!("[ensemble] d = {d} must be 1 or 2")));
        }
        let l_cells = parse_usize("ensemble", "l_cells", raw.require("ensemble", "l_cells")?)?;
        let seeds = parse_list(raw.require("ensemble", "seeds")?, |s| {
            parse_u64("ensemble", "seeds", s)
        })?;
        if seeds.is_empty() {
            return Err(Error::validation("[ensemble] seeds must be non-empty"));
        }
        let generator = raw.require("ensemble", "generator")?;
        let ensemble = match generator {
            "constant" => {
                check_generator_keys(&raw, generator, &["s_entries", "k_entries"])?;
                let s = matrix_from_entries(
                    d,
                    "ensemble",
                    "s_entries",
                    raw.require("ensemble", "s_entries")?,
                )?;
                let k = match raw.get("ensemble", "k_entries") {
                    Some(v) => matrix_from_entries(d, "ensemble", "k_entries", v)?,
                    None => DMat::zeros(d, d),
                };
                EnsembleSpec::Constant { s, k }
            }
            "checkerboard" => {
                check_generator_keys(&raw, generator, &["sigma1", "sigma2", "p"])?;
                EnsembleSpec::Checkerboard {
                    sigma1: parse_f64("ensemble", "sigma1", raw.require("ensemble", "sigma1")?)?,
                    sigma2: parse_f64("ensemble", "sigma2", raw.require("ensemble", "sigma2")?)?,
                    p: parse_f64("ensemble", "p", raw.require("ensemble", "p")?)?,
                }
            }
            "laminate" => {
                check_generator_keys(&raw, generator, &["sigma1", "sigma2", "axis"])?;
                EnsembleSpec::Laminate {
                    sigma1: parse_f64("ensemble", "sigma1", raw.require("ensemble", "sigma1")?)?,
                    sigma2: parse_f64("ensemble", "sigma2", raw.require("ensemble", "sigma2")?)?,
                    axis: match raw.get("ensemble", "axis") {
                        Some(v) => parse_usize("ensemble", "axis", v)?,
                        None => 0,
                    },
                }
            }
            "poisson" => {
                check_generator_keys(
                    &raw,
                    generator,
                    &["intensity", "radius_cells", "sigma_background", "sigma_inclusion"],
                )?;
                EnsembleSpec::Poisson {
                    intensity: parse_f64(
                        "ensemble",
                        "intensity",
                        raw.require("ensemble", "intensity")?,
                    )?,
                    radius_cells: parse_f64(
                        "ensemble",
                        "radius_cells",
                        raw.require("ensemble", "radius_cells")?,
                    )?,
                    sigma_background: parse_f64(
                        "ensemble",
                        "sigma_background",
                        raw.require("ensemble", "sigma_background")?,
                    )?,
                    sigma_inclusion: parse_f64(
                        "ensemble",
                        "sigma_inclusion",
                        raw.require("ensemble", "sigma_inclusion")?,
                    )?,
                }
            }
            other => {
                return Err(Error::validation(format!(
                    "[ensemble] generator = '{other}' is not constant, checkerboard, laminate, or poisson"
                )))
            }
        };

        let k0 = match raw.get("geometry", "k0") {
            Some(v) => parse_u32("geometry", "k0", v)?,
            None => 0,
        };
        let adapted = match raw.get("geometry", "adapted") {
            Some(v) => parse_bool("geometry", "adapted", v)?,
            None => false,
        };

        let mut solver = SolveConfig::default();
        if let Some(v) = raw.get("solver", "tol_rel") {
            solver.tol_rel = parse_f64("solver", "tol_rel", v)?;
        }
        if let Some(v) = raw.get("solver", "max_iter") {
            solver.max_iter = Some(parse_usize("solver", "max_iter", v)?);
        }
        let max_solves = match raw.get("solver", "max_solves") {
            Some(v) => parse_usize("solver", "max_solves", v)?,
            None => 200_000,
        };

        let m_levels = match raw.get("scales", "m_levels") {
            Some(v) => parse_list(v, |s| parse_u32("scales", "m_levels", s))?,
            None => Vec::new(),
        };
        let s_exponent = match raw.get("scales", "s_exponent") {
            Some(v) => parse_f64("scales", "s_exponent", v)?,
            None => 0.4,
        };
        if !(s_exponent > 0.0 && s_exponent < 0.5) {
            return Err(Error::validation(format!(
                "[scales] s_exponent = {s_exponent} outside (0, 0.5)"
            )));
        }
        let gamma = match raw.get("scales", "gamma") {
            Some(v) => parse_f64("scales", "gamma", v)?,
            None => 0.5,
        };
        let est_level = match raw.get("scales", "est_level") {
            Some(v) => Some(parse_u32("scales", "est_level", v)?),
            None => None,
        };

        let boundary = match raw.get("verify", "boundary").unwrap_or("affine") {
            "affine" => {
                let e0 = match raw.get("verify", "e0") {
                    Some(v) => parse_f64("verify", "e0", v)?,
                    None => 1.0,
                };
                let e1 = match raw.get("verify", "e1") {
                    Some(v) => parse_f64("verify", "e1", v)?,
                    None => 0.0,
                };
                BoundaryChoice::Affine([e0, e1])
            }
            "smooth" => BoundaryChoice::Smooth {
                seed: match raw.get("verify", "bseed") {
                    Some(v) => parse_u64("verify", "bseed", v)?,
                    None => 7,
                },
            },
            "cubic" => BoundaryChoice::Cubic,
            other => {
                return Err(Error::validation(format!(
                    "[verify] boundary = '{other}' is not affine, smooth, or cubic"
                )))
            }
        };
        let opt_f64 = |key: &str| -> Result<Option<f64>> {
            match raw.get("verify", key) {
                Some(v) => Ok(Some(parse_f64("verify", key, v)?)),
                None => Ok(None),
            }
        };
        let verify = VerifyParams {
            boundary,
            lambda_bar: opt_f64("lambda_bar")?,
            max_ratio: opt_f64("max_ratio")?,
            max_total_over_ref: opt_f64("max_total_over_ref")?,
            max_mean_ratio: opt_f64("max_mean_ratio")?.unwrap_or(1.0),
            max_excess_ratio: opt_f64("max_excess_ratio")?.unwrap_or(1.0),
            radii: match raw.get("verify", "radii") {
                Some(v) => parse_list(v, |s| parse_f64("verify", "radii", s))?,
                None => Vec::new(),
            },
            excess_k: match raw.get("verify", "excess_k") {
                Some(v) => parse_usize("verify", "excess_k", v)?,
                None => 1,
            },
            k_list: match raw.get("verify", "k_list") {
                Some(v) => parse_list(v, |s| parse_usize("verify", "k_list", s))?,
                None => Vec::new(),
            },
            expected_dims: match raw.get("verify", "expected_dims") {
                Some(v) => parse_list(v, |s| parse_usize("verify", "expected_dims", s))?,
                None => Vec::new(),
            },
            min_gap: opt_f64("min_gap")?.unwrap_or(1e3),
            x_hat: opt_f64("x_hat")?.unwrap_or(1.0),
            theta_hat: opt_f64("theta_hat")?,
            scales_n: match raw.get("verify", "scales_n") {
                Some(v) => parse_list(v, |s| parse_u32("verify", "scales_n", s))?,
                None => Vec::new(),
            },
            ball_r: opt_f64("ball_r")?,
            ball_big_r: opt_f64("ball_big_r")?,
        };

        let out_dir = PathBuf::from(raw.get("output", "dir").unwrap_or("out"));

        let max_level = (l_cells as f64).log(3.0).floor() as u32;
        for m in m_levels.iter().chain(verify.scales_n.iter()) {
            if 3usize.pow(*m) > l_cells {
                return Err(Error::validation(format!(
                    "scale m = {m} needs 3^m = {} cells, exceeding the period {l_cells} \
                     (largest admissible level is {max_level})",
                    3usize.pow(*m)
                )));
            }
        }
        if let Some(e) = est_level {
            if 3usize.pow(e) > l_cells {
                return Err(Error::validation(format!(
                    "[scales] est_level = {e} exceeds the period {l_cells}"
                )));
            }
        }

        let mut resolved = BTreeMap::new();
        for (section, keys) in &raw.values {
            if section == "output" {
                continue;
            }
            for (key, value) in keys {
                if section == "run" && key == "threads" {
                    continue;
                }
                resolved.insert(format!("{section}.{key}"), value.clone());
            }
        }

        Ok(ExperimentConfig {
            command,
            d,
            l_cells,
            seeds,
            ensemble,
            k0,
            adapted,
            solver,
            max_solves,
            m_levels,
            s_exponent,
            gamma,
            est_level,
            verify,
            out_dir,
            threads,
            resolved,
        })
    }

    /// Shift every seed by the offset and record the shifted list as the
    /// experiment actually run.
    pub fn apply_seed_offset(&mut self, offset: u64) {
        if offset == 0 {
            return;
        }
        for s in &mut self.seeds {
            *s = s.wrapping_add(offset);
        }
        let joined: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        self.resolved.insert("ensemble.seeds".to_string(), joined.join(","));
    }

    /// Levels required for the active command; validation error when missing.
    pub fn require_m_levels(&self) -> Result<&[u32]> {
        if self.m_levels.is_empty() {
            return Err(Error::validation(
                "missing required key 'm_levels' in section [scales]",
            ));
        }
        Ok(&self.m_levels)
    }
}
