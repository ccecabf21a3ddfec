//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use geoscvx::conic::Backend;
use geoscvx::landing::{self, LandingParams};
use geoscvx::problems::{self, Scenario};

use crate::error::{CliError, Result};

pub const KEYS: [&str; 19] = [
    "problem",
    "params",
    "segments",
    "order",
    "output",
    "mu_nu",
    "mu_s",
    "mu_r",
    "epsilon",
    "max_iters",
    "free_final_time",
    "sigma_min",
    "sigma_max",
    "state_trust_region",
    "solver",
    "feas_tol",
    "gap_tol",
    "certify_tol",
    "solver_max_iters",
];

pub const MAX_ORDER: usize = 64;

/// Splits a `key = value` document into `(line, key, value)` triples.
/// Blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CliError::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        out.push((k + 1, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Reads a landing parameter file on top of the defaults.
pub fn load_landing_params(path: &Path) -> Result<LandingParams> {
    let mut params = LandingParams::default();
    for (line, key, value) in parse_pairs(&read_text(path)?, path)? {
        params.set(&key, &value).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line,
            msg: e.to_string(),
        })?;
    }
    params.validate()?;
    Ok(params)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub problem: Option<String>,
    pub params: Option<PathBuf>,
    pub segments: Option<usize>,
    pub order: Option<usize>,
    pub output: Option<PathBuf>,
    pub mu_nu: Option<f64>,
    pub mu_s: Option<f64>,
    pub mu_r: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    pub free_final_time: Option<bool>,
    pub sigma_min: Option<f64>,
    pub sigma_max: Option<f64>,
    pub state_trust_region: Option<f64>,
    pub solver: Option<Backend>,
    pub feas_tol: Option<f64>,
    pub gap_tol: Option<f64>,
    pub certify_tol: Option<f64>,
    pub solver_max_iters: Option<u32>,
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("{key}: cannot parse '{value}'"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let base = path.parent().unwrap_or(Path::new(""));
        for (line, key, value) in parse_pairs(&read_text(path)?, path)? {
            cfg.set(&key, &value).map_err(|msg| CliError::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            })?;
            // relative paths in a file are relative to that file
            let slot = match key.as_str() {
                "params" => &mut cfg.params,
                "output" => &mut cfg.output,
                _ => continue,
            };
            if let Some(p) = slot.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "problem" => self.problem = Some(value.to_string()),
            "params" => self.params = Some(PathBuf::from(value)),
            "segments" => self.segments = Some(num(key, value)?),
            "order" => self.order = Some(num(key, value)?),
            "output" => self.output = Some(PathBuf::from(value)),
            "mu_nu" => self.mu_nu = Some(num(key, value)?),
            "mu_s" => self.mu_s = Some(num(key, value)?),
            "mu_r" => self.mu_r = Some(num(key, value)?),
            "epsilon" => self.epsilon = Some(num(key, value)?),
            "max_iters" => self.max_iters = Some(num(key, value)?),
            "free_final_time" => self.free_final_time = Some(num(key, value)?),
            "sigma_min" => self.sigma_min = Some(num(key, value)?),
            "sigma_max" => self.sigma_max = Some(num(key, value)?),
            "state_trust_region" => self.state_trust_region = Some(num(key, value)?),
            "solver" => {
                self.solver = Some(match value {
                    "clarabel" => Backend::Clarabel,
                    "dense" => Backend::Dense,
                    other => return Err(format!("solver: expected 'clarabel' or 'dense', got '{other}'")),
                })
            }
            "feas_tol" => self.feas_tol = Some(num(key, value)?),
            "gap_tol" => self.gap_tol = Some(num(key, value)?),
            "certify_tol" => self.certify_tol = Some(num(key, value)?),
            "solver_max_iters" => self.solver_max_iters = Some(num(key, value)?),
            other => return Err(format!("unknown key '{other}'; valid keys: {}", KEYS.join(", "))),
        }
        Ok(())
    }

    /// Applies `KEY=VALUE` overrides given on the command line.
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<()> {
        for pair in pairs {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{pair}'")))?;
            self.set(k.trim(), v.trim()).map_err(CliError::Usage)?;
        }
        Ok(())
    }

    fn grid(&self) -> Result<Option<(usize, usize)>> {
        match (self.segments, self.order) {
            (None, None) => Ok(None),
            (n, p) => {
                let (dn, dp) = match self.problem_name() {
                    "lq-euclidean" => (2, 6),
                    "attitude-toy" => (4, 10),
                    _ => (5, 10),
                };
                let (n, p) = (n.unwrap_or(dn), p.unwrap_or(dp));
                if n == 0 {
                    return Err(CliError::Usage("segments must be at least 1".into()));
                }
                if !(1..=MAX_ORDER).contains(&p) {
                    return Err(CliError::Usage(format!("order must be in 1..={MAX_ORDER}, got {p}")));
                }
                Ok(Some((n, p)))
            }
        }
    }

    pub fn problem_name(&self) -> &str {
        match (&self.problem, &self.params) {
            (Some(p), _) => p,
            (None, Some(_)) => "landing",
            (None, None) => "",
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("geoscvx-out"))
    }

    /// Builds the scenario and applies setting overrides.
    pub fn scenario(&self) -> Result<Scenario> {
        let name = self.problem_name();
        if name.is_empty() {
            return Err(CliError::Usage(format!(
                "no problem selected; pass --problem ({}) or --params FILE",
                problems::BUILTIN_NAMES.join(", ")
            )));
        }
        let grid = self.grid()?;
        let mut sc = match &self.params {
            Some(path) => {
                if name != "landing" {
                    return Err(CliError::Usage(format!("a parameter file only applies to 'landing', not '{name}'")));
                }
                let params = load_landing_params(path)?;
                let (n, p) = grid.unwrap_or((5, 10));
                landing::scenario(&params, n, p)?
            }
            None => problems::builtin(name, grid).map_err(|e| CliError::Usage(e.to_string()))?,
        };
        let s = &mut sc.settings;
        s.mu_nu = self.mu_nu.unwrap_or(s.mu_nu);
        s.mu_s = self.mu_s.unwrap_or(s.mu_s);
        s.mu_r = self.mu_r.unwrap_or(s.mu_r);
        s.epsilon = self.epsilon.unwrap_or(s.epsilon);
        s.max_iters = self.max_iters.unwrap_or(s.max_iters);
        s.free_final_time = self.free_final_time.unwrap_or(s.free_final_time);
        if self.sigma_min.is_some() || self.sigma_max.is_some() {
            let lo = self.sigma_min.unwrap_or(f64::MIN_POSITIVE);
            let hi = self.sigma_max.unwrap_or(f64::MAX);
            s.sigma_bounds = Some((lo, hi));
        }
        s.state_trust_region = self.state_trust_region.or(s.state_trust_region);
        if let Some(b) = self.solver {
            s.solver.backend = b;
        }
        s.solver.feas_tol = self.feas_tol.unwrap_or(s.solver.feas_tol);
        s.solver.gap_tol = self.gap_tol.unwrap_or(s.solver.gap_tol);
        s.solver.certify_tol = self.certify_tol.unwrap_or(s.solver.certify_tol);
        s.solver.max_iters = self.solver_max_iters.unwrap_or(s.solver.max_iters);
        s.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(sc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_fail_fast() {
        let mut cfg = RunConfig::default();
        let err = cfg.set("mu_x", "1").unwrap_err();
        assert!(err.contains("unknown key 'mu_x'") && err.contains("mu_nu"));
    }

    #[test]
    fn pairs_skip_comments_and_report_lines() {
        let text = "# header\nmu_r = 0.5  # inline\n\nsegments=3\n";
        let pairs = parse_pairs(text, Path::new("x.cfg")).unwrap();
        assert_eq!(pairs, vec![(2, "mu_r".into(), "0.5".into()), (4, "segments".into(), "3".into())]);
        match parse_pairs("a = 1\noops\n", Path::new("x.cfg")) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn weights_and_grid_reach_the_scenario() {
        let mut cfg = RunConfig::default();
        for (k, v) in [("problem", "lq-euclidean"), ("mu_r", "0.25"), ("order", "5"), ("solver", "dense")] {
            cfg.set(k, v).unwrap();
        }
        let sc = cfg.scenario().unwrap();
        assert_eq!(sc.settings.mu_r, 0.25);
        assert_eq!(sc.grid.order(), 5);
        assert_eq!(sc.grid.segments, 2);
        assert_eq!(sc.settings.solver.backend, Backend::Dense);
    }

    #[test]
    fn grid_bounds_are_enforced() {
        let mut cfg = RunConfig { problem: Some("lq-euclidean".into()), ..Default::default() };
        cfg.order = Some(65);
        assert!(matches!(cfg.scenario(), Err(CliError::Usage(_))));
        cfg.order = Some(4);
        cfg.segments = Some(0);
        assert!(matches!(cfg.scenario(), Err(CliError::Usage(_))));
    }

    #[test]
    fn missing_problem_is_a_usage_error() {
        assert!(matches!(RunConfig::default().scenario(), Err(CliError::Usage(_))));
    }
}
