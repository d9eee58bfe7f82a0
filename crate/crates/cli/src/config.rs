//! Run configuration: one JSON document, checked before anything runs.

use std::collections::BTreeMap;

use crossbif::family::BuiltinKind;
use crossbif::perturbation::PerturbationTerm;
use crossbif::poincare::Hamiltonian;
use crossbif::poly::Polynomial;
use crossbif::{Point3, ShearFamily, Tolerances};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    ClassifyMap,
    Continue,
    LibrationScan,
    Monodromy,
    PerturbCheck,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::ClassifyMap => "classify-map",
            Mode::Continue => "continue",
            Mode::LibrationScan => "libration-scan",
            Mode::Monodromy => "monodromy",
            Mode::PerturbCheck => "perturb-check",
        }
    }
}

/// `c q^i eps^j delta^k` in the shear polynomial `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GTerm {
    pub i: u32,
    pub j: u32,
    #[serde(default)]
    pub k: u32,
    pub c: f64,
}

/// `c eps^j delta^k` in a shift polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftTerm {
    pub j: u32,
    #[serde(default)]
    pub k: u32,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    #[serde(default = "shear_kind")]
    pub kind: BuiltinKind,
    pub g: Vec<GTerm>,
    #[serde(default)]
    pub q_shift: Vec<ShiftTerm>,
    #[serde(default)]
    pub p_shift: Vec<ShiftTerm>,
    /// Radians.
    #[serde(default)]
    pub theta: f64,
}

fn shear_kind() -> BuiltinKind {
    BuiltinKind::ShearComposition
}

/// `c x^i y^j` in the potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VTerm {
    pub i: u32,
    pub j: u32,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoPotential {
    pub lambda: f64,
    pub omega: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `y^2/2 + (lambda/4) y^4 + x^2 (omega^2 + alpha y)/2`.
    Demo(DemoPotential),
    Terms(Vec<VTerm>),
}

/// `c x^i y^j p_x^k p_y^l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FTerm {
    pub i: u32,
    pub j: u32,
    pub k: u32,
    pub l: u32,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomPerturbation {
    pub name: String,
    pub terms: Vec<FTerm>,
}

/// A built-in name (`rotation`, `x2y`, `symmetric`) or a monomial list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerturbationSpec {
    Named(String),
    Custom(CustomPerturbation),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_report")]
    pub report: String,
    /// Base name for CSV artifacts; defaults per mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            report: default_report(),
            csv: None,
        }
    }
}

fn default_report() -> String {
    "report.json".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    /// `[q, p, eps]`; classification point or continuation seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSpec>,
    /// Libration energy (reference energy for scans).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section_y0: Option<f64>,
    #[serde(default)]
    pub well_guess: f64,
    /// Grid size of a libration scan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perturbations: Vec<PerturbationSpec>,
    /// Rescan offsets for cross-preserving terms.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub smoke_deltas: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub outputs: OutputSpec,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn finite(name: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad(format!("{name} must be finite")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| bad(format!("config: {e}")))
    }

    pub fn tolerances(&self) -> Result<Tolerances, CliError> {
        let mut t = Tolerances::default();
        for (name, &v) in &self.tolerances {
            t.set(name, v).map_err(|e| bad(e.to_string()))?;
        }
        Ok(t)
    }

    pub fn family(&self) -> Result<ShearFamily, CliError> {
        let spec = self
            .family
            .as_ref()
            .ok_or_else(|| bad(format!("mode {} needs 'family'", self.mode.name())))?;
        let g = Polynomial::new(spec.g.iter().map(|t| ([t.i, t.j, t.k], t.c)));
        let shift = |ts: &[ShiftTerm]| Polynomial::new(ts.iter().map(|t| ([t.j, t.k], t.c)));
        ShearFamily::new(spec.kind, g, shift(&spec.q_shift), shift(&spec.p_shift), spec.theta)
            .map_err(|e| bad(e.to_string()))
    }

    pub fn hamiltonian(&self) -> Result<Hamiltonian, CliError> {
        let spec = self
            .potential
            .as_ref()
            .ok_or_else(|| bad(format!("mode {} needs 'potential'", self.mode.name())))?;
        match spec {
            PotentialSpec::Demo(d) => {
                for (n, v) in [("lambda", d.lambda), ("omega", d.omega), ("alpha", d.alpha)] {
                    finite(n, v)?;
                }
                Ok(Hamiltonian::demo(d.lambda, d.omega, d.alpha))
            }
            PotentialSpec::Terms(ts) => {
                Hamiltonian::new(Polynomial::new(ts.iter().map(|t| ([t.i, t.j], t.c)))).map_err(|e| bad(e.to_string()))
            }
        }
    }

    pub fn perturbation_terms(&self) -> Result<Vec<PerturbationTerm>, CliError> {
        self.perturbations
            .iter()
            .map(|p| match p {
                PerturbationSpec::Named(n) => PerturbationTerm::named(n).map_err(|e| bad(e.to_string())),
                PerturbationSpec::Custom(c) => {
                    if c.terms.iter().any(|t| !t.c.is_finite()) {
                        return Err(bad(format!("perturbation '{}' has a non-finite coefficient", c.name)));
                    }
                    Ok(PerturbationTerm::from_monomials(
                        c.name.clone(),
                        c.terms.iter().map(|t| (t.i, t.j, t.k, t.l, t.c)),
                    ))
                }
            })
            .collect()
    }

    pub fn point(&self) -> Result<Point3, CliError> {
        let [q, p, e] = self.point.unwrap_or([0.0; 3]);
        Ok(Point3::new(
            finite("point.q", q)?,
            finite("point.p", p)?,
            finite("point.eps", e)?,
        ))
    }

    pub fn eps_range(&self) -> Result<(f64, f64), CliError> {
        let [a, b] = self
            .eps_range
            .ok_or_else(|| bad(format!("mode {} needs 'eps_range'", self.mode.name())))?;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(bad("eps_range must be finite and increasing"));
        }
        Ok((a, b))
    }

    pub fn step(&self) -> Result<f64, CliError> {
        match self.step {
            Some(s) if s.is_finite() && s > 0.0 => Ok(s),
            Some(_) => Err(bad("step must be positive")),
            None => Err(bad(format!("mode {} needs 'step'", self.mode.name()))),
        }
    }

    pub fn energy(&self) -> Result<f64, CliError> {
        let e = self
            .energy
            .ok_or_else(|| bad(format!("mode {} needs 'energy'", self.mode.name())))?;
        finite("energy", e)
    }

    pub fn samples(&self) -> Result<usize, CliError> {
        match self.samples {
            Some(n) if n >= 2 => Ok(n),
            Some(_) => Err(bad("samples must be at least 2")),
            None => Err(bad(format!("mode {} needs 'samples'", self.mode.name()))),
        }
    }

    /// Everything the mode will touch, checked up front so that a bad
    /// config never produces partial output.
    pub fn validate(&self) -> Result<(), CliError> {
        self.tolerances()?;
        finite("well_guess", self.well_guess)?;
        if let Some(y) = self.section_y0 {
            finite("section_y0", y)?;
        }
        if self.outputs.report.is_empty() || self.outputs.report.contains(['/', '\\']) {
            return Err(bad("outputs.report must be a plain file name"));
        }
        if let Some(c) = &self.outputs.csv {
            if c.is_empty() || c.contains(['/', '\\']) {
                return Err(bad("outputs.csv must be a plain file name stem"));
            }
        }
        match self.mode {
            Mode::ClassifyMap => {
                self.family()?;
                self.point()?;
            }
            Mode::Continue => {
                self.family()?;
                self.point()?;
                self.eps_range()?;
                self.step()?;
            }
            Mode::LibrationScan => {
                self.hamiltonian()?;
                self.energy()?;
                self.eps_range()?;
                self.samples()?;
            }
            Mode::Monodromy => {
                self.hamiltonian()?;
                self.energy()?;
            }
            Mode::PerturbCheck => {
                self.hamiltonian()?;
                self.energy()?;
                if self.perturbations.is_empty() {
                    return Err(bad("perturb-check needs at least one perturbation"));
                }
                self.perturbation_terms()?;
                if self.eps_range.is_some() || self.samples.is_some() {
                    self.eps_range()?;
                    self.samples()?;
                }
                if !self.smoke_deltas.is_empty() && self.eps_range.is_none() {
                    return Err(bad("smoke_deltas need a located crossing (eps_range and samples)"));
                }
                for &d in &self.smoke_deltas {
                    finite("smoke_deltas", d)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::parse(r#"{"mode": "classify-map", "famly": {}}"#).unwrap_err();
        assert!(matches!(e, CliError::Config(_)));
        let e = RunConfig::parse(r#"{"mode": "classify-map", "family": {"g": [{"i": 1, "j": 1, "c": 1, "x": 0}]}}"#);
        assert!(e.is_err());
    }

    #[test]
    fn mode_requirements() {
        let c = RunConfig::parse(r#"{"mode": "continue", "family": {"g": []}}"#).unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::parse(
            r#"{"mode": "monodromy", "potential": {"terms": [{"i": 1, "j": 0, "c": 1}]}, "energy": 0.1}"#,
        )
        .unwrap();
        assert!(c.validate().is_err(), "x-linear potential must be refused");
        let c =
            RunConfig::parse(r#"{"mode": "classify-map", "family": {"g": []}, "tolerances": {"trace": -1}}"#).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn perturbation_forms() {
        let c = RunConfig::parse(
            r#"{"mode": "perturb-check", "potential": {"demo": {"lambda": 1, "omega": 1.1, "alpha": 1.5}}, "energy": 0.2,
                "perturbations": ["rotation", {"name": "f", "terms": [{"i": 2, "j": 1, "k": 0, "l": 0, "c": 1}]}]}"#,
        )
        .unwrap();
        c.validate().unwrap();
        let ts = c.perturbation_terms().unwrap();
        assert_eq!(ts[0].name, "rotation");
        assert!(ts[1].is_cross_preserving());
    }
}
