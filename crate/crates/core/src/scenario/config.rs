//! Strict TOML schema of a scenario file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Convexity,
    Ellipticity,
    Rank,
    Theorem2,
    Ineq,
    Semiconcavity,
    Harnack,
    Deru,
}

impl Check {
    pub const ALL: [Check; 8] = [
        Check::Convexity,
        Check::Ellipticity,
        Check::Rank,
        Check::Theorem2,
        Check::Ineq,
        Check::Semiconcavity,
        Check::Harnack,
        Check::Deru,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Convexity => "convexity",
            Check::Ellipticity => "ellipticity",
            Check::Rank => "rank",
            Check::Theorem2 => "theorem2",
            Check::Ineq => "ineq",
            Check::Semiconcavity => "semiconcavity",
            Check::Harnack => "harnack",
            Check::Deru => "deru",
        }
    }

    fn needs_ladder(self) -> bool {
        matches!(self, Check::Ineq | Check::Semiconcavity | Check::Harnack)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub checks: Vec<Check>,
    /// Output directory, relative to the config file.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Exit code the suite expects from this scenario.
    #[serde(default)]
    pub expect_exit: i32,
    pub domain: DomainSpec,
    pub field: FieldSpec,
    pub operator: NamedSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub ladder: Option<LadderSpec>,
    #[serde(default)]
    pub sampling: Sampling,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum HalfWidth {
    Uniform(f64),
    PerAxis(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub center: Vec<f64>,
    pub half_width: HalfWidth,
    pub grid: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Builtin {
        name: String,
        #[serde(default)]
        params: Vec<f64>,
    },
    Polynomial {
        path: PathBuf,
    },
    Grid {
        path: PathBuf,
    },
    /// Newton solve of `F = 0` with Dirichlet data from a builtin field.
    Solve {
        boundary: NamedSpec,
        #[serde(default)]
        guess: Option<NamedSpec>,
        #[serde(default = "one")]
        damping: f64,
        #[serde(default = "fifty")]
        max_iter: usize,
        #[serde(default = "newton_tol")]
        tol: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn fifty() -> usize {
    50
}

fn newton_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub tau_zero: Option<f64>,
    pub delta_gap: Option<f64>,
    pub form_tol: f64,
    pub slack_tol: f64,
    pub eta_tol: f64,
    pub theta_tol: f64,
    pub certificate_tol: f64,
    pub convexity_tol: f64,
    pub deru_tol: f64,
    pub solution_tol: f64,
    pub gap_tol: f64,
    pub semiconcavity_tol: f64,
    /// Shift `s` in the states `(D²u + s·I, Du, u, x)` used by the convexity
    /// check, where `A⁻¹` must exist.
    pub regularization: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tau_zero: None,
            delta_gap: None,
            form_tol: 1e-8,
            slack_tol: 1e-4,
            eta_tol: 1e-6,
            theta_tol: 1e-6,
            certificate_tol: 1e-7,
            convexity_tol: 1e-8,
            deru_tol: 1e-8,
            solution_tol: 1e-6,
            gap_tol: 1e-8,
            semiconcavity_tol: 1e-8,
            regularization: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSpec {
    #[serde(default = "one_usize")]
    pub ell: usize,
    pub degrees: Vec<usize>,
    pub taus: Vec<f64>,
    /// Hölder exponent of the gradient bound.
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "half")]
    pub harnack_q: f64,
    /// Mollifier radii in units of the grid spacing.
    #[serde(default = "harnack_eps")]
    pub harnack_eps: Vec<f64>,
}

fn one_usize() -> usize {
    1
}

fn half() -> f64 {
    0.5
}

fn harnack_eps() -> Vec<f64> {
    vec![2.0, 4.0, 8.0]
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sampling {
    pub convexity_points: usize,
    pub convexity_trials: usize,
    pub convexity_starts: usize,
    pub convexity_iters: usize,
    pub neighborhood: f64,
    pub certificate_points: usize,
    pub deru_points: usize,
    pub semiconcavity_pairs: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            convexity_points: 32,
            convexity_trials: 200,
            convexity_starts: 2,
            convexity_iters: 100,
            neighborhood: 0.05,
            certificate_points: 50,
            deru_points: 200,
            semiconcavity_pairs: 2000,
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string().trim_end().to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
        Scenario::from_toml(&text)
    }

    pub fn n(&self) -> usize {
        self.domain.center.len()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        match &self.domain.half_width {
            HalfWidth::Uniform(w) => vec![*w; self.n()],
            HalfWidth::PerAxis(w) => w.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::input("name: must be a non-empty identifier of [A-Za-z0-9_-]"));
        }
        for (i, c) in self.checks.iter().enumerate() {
            if self.checks[..i].contains(c) {
                return Err(Error::input(format!("checks: '{}' listed twice", c.name())));
            }
        }
        if self.n() == 0 {
            return Err(Error::input("domain.center: must not be empty"));
        }
        if let HalfWidth::PerAxis(w) = &self.domain.half_width {
            if w.len() != self.n() {
                return Err(Error::input("domain.half_width: length differs from domain.center"));
            }
        }
        if ![0, 2, 3].contains(&self.expect_exit) {
            return Err(Error::input("expect_exit: must be 0, 2 or 3"));
        }
        if let Some(c) = self.checks.iter().find(|c| c.needs_ladder()) {
            let l = self
                .ladder
                .as_ref()
                .ok_or_else(|| Error::input(format!("ladder: required by check '{}'", c.name())))?;
            if l.degrees.is_empty() || l.degrees.len() != l.taus.len() {
                return Err(Error::input("ladder: degrees and taus must be non-empty and of equal length"));
            }
            if l.ell == 0 || l.ell > self.n() {
                return Err(Error::input("ladder.ell: must lie in 1..=n"));
            }
            if l.harnack_eps.iter().any(|e| !(*e >= 2.0)) || l.harnack_eps.is_empty() {
                return Err(Error::input("ladder.harnack_eps: needs radii of at least 2 grid cells"));
            }
        }
        let t = &self.tolerances;
        let positive = [
            ("form_tol", t.form_tol),
            ("slack_tol", t.slack_tol),
            ("eta_tol", t.eta_tol),
            ("theta_tol", t.theta_tol),
            ("certificate_tol", t.certificate_tol),
            ("convexity_tol", t.convexity_tol),
            ("deru_tol", t.deru_tol),
            ("solution_tol", t.solution_tol),
            ("gap_tol", t.gap_tol),
            ("semiconcavity_tol", t.semiconcavity_tol),
            ("regularization", t.regularization),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::input(format!("tolerances.{k}: must be positive and finite")));
            }
        }
        for (k, v) in [("tau_zero", t.tau_zero), ("delta_gap", t.delta_gap)] {
            if v.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::input(format!("tolerances.{k}: must be positive and finite")));
            }
        }
        let s = &self.sampling;
        if s.convexity_points == 0 || s.convexity_trials == 0 || s.convexity_starts == 0 {
            return Err(Error::input("sampling: convexity point, trial and start counts must be positive"));
        }
        if s.certificate_points == 0 || s.deru_points == 0 || s.semiconcavity_pairs == 0 {
            return Err(Error::input("sampling: point counts must be positive"));
        }
        if !(s.neighborhood > 0.0 && s.neighborhood < 1.0) {
            return Err(Error::input("sampling.neighborhood: must lie in (0, 1)"));
        }
        Ok(())
    }
}
