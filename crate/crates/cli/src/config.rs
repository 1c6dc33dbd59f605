//! Run configuration: a TOML file with one table per section. Every table
//! rejects unknown keys and the whole file is validated before any compute.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qgamma::energy::ElectrostaticConfig;
use qgamma::field::{CollarLaw, DirectorSpec, Geometry, KernelSampling, LatticeOptions};
use qgamma::kernel::{KernelSpec, QuadratureSpec, RadialProfile};
use qgamma::maxent::SphereSpec;
use qgamma::minimize::{MinimizeOptions, ProbeOptions};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub kernel: KernelSection,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub bulk: BulkSection,
    pub grid: Option<GridSection>,
    pub domain: Option<DomainSection>,
    pub boundary: Option<BoundarySection>,
    pub electrostatics: Option<ElectrostaticConfig>,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub minimize: MinimizeOptions,
    pub probe: Option<ProbeOptions>,
    #[serde(default)]
    pub psi: PsiSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    InversePower,
    Zero,
}

/// `g_n(r) = c_n r^(−exponent)` for `r ≥ cutoff` (and `r ≤ r_max` if given).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub profiles: ProfileKind,
    #[serde(default)]
    pub coefficients: [f64; 3],
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    pub r_max: Option<f64>,
    pub m_bound: Option<f64>,
}

fn default_cutoff() -> f64 {
    0.1
}

fn default_exponent() -> f64 {
    6.0
}

impl KernelSection {
    pub fn spec(&self) -> KernelSpec {
        match self.profiles {
            ProfileKind::Zero => KernelSpec::zero(),
            ProfileKind::InversePower => {
                let p = |c: f64| {
                    let p = RadialProfile::inverse_power(c, self.exponent, self.cutoff);
                    match self.r_max {
                        Some(r) => p.with_r_max(r),
                        None => p,
                    }
                };
                KernelSpec {
                    g1: p(self.coefficients[0]),
                    g2: p(self.coefficients[1]),
                    g3: p(self.coefficients[2]),
                    m_bound: self.m_bound,
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BulkSection {
    /// Take `k₀` from the kernel moments.
    pub auto_k0: Option<bool>,
    pub k0_override: Option<f64>,
    #[serde(default)]
    pub sphere: SphereSpec,
}

impl Default for BulkSection {
    fn default() -> Self {
        BulkSection {
            auto_k0: None,
            k0_override: None,
            sphere: SphereSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "N")]
    pub n: usize,
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub sampling: KernelSampling,
    #[serde(default)]
    pub lattice: LatticeOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub geometry: Geometry,
    #[serde(default = "law_default_alpha")]
    pub alpha: f64,
    #[serde(default = "law_default_c6")]
    pub c6: f64,
    #[serde(default = "law_default_c7")]
    pub c7: f64,
    #[serde(default = "law_default_delta1")]
    pub delta1: f64,
}

fn law_default_alpha() -> f64 {
    CollarLaw::default().alpha
}

fn law_default_c6() -> f64 {
    CollarLaw::default().c6
}

fn law_default_c7() -> f64 {
    CollarLaw::default().c7
}

fn law_default_delta1() -> f64 {
    CollarLaw::default().delta1
}

impl DomainSection {
    pub fn law(&self) -> CollarLaw {
        CollarLaw {
            alpha: self.alpha,
            c6: self.c6,
            c7: self.c7,
            delta1: self.delta1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    pub director: DirectorSpec,
    /// `L²` amplitude of a seeded random perturbation added to the lifted
    /// initial field (periodic minimization only).
    #[serde(default)]
    pub perturbation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub epsilons: Vec<f64>,
    /// One grid size for every rung or one per rung; defaults to `grid.N`.
    pub grids: Option<Vec<usize>>,
    /// Options for the limit director problem.
    #[serde(default = "default_director_options")]
    pub director: MinimizeOptions,
}

fn default_director_options() -> MinimizeOptions {
    MinimizeOptions {
        grad_tol: 1e-8,
        max_iters: 5000,
        ..Default::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsiSection {
    pub s_min: f64,
    pub s_max: f64,
    pub points: usize,
}

impl Default for PsiSection {
    fn default() -> Self {
        PsiSection {
            s_min: -0.45,
            s_max: 0.95,
            points: 57,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl OutputSection {
    pub fn csv(&self) -> bool {
        self.formats.contains(&Format::Csv)
    }

    pub fn json(&self) -> bool {
        self.formats.contains(&Format::Json)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Structural checks that need no numerics.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let k = &self.kernel;
        if !(k.cutoff >= 0.0) || !(k.exponent > 0.0) || k.coefficients.iter().any(|c| !c.is_finite()) {
            return bad(format!("kernel: invalid cutoff/exponent/coefficients {k:?}"));
        }
        if let Some(r) = k.r_max {
            if !(r > k.cutoff) {
                return bad(format!("kernel: r_max = {r} must exceed the cutoff"));
            }
        }
        if self.bulk.auto_k0 == Some(true) && self.bulk.k0_override.is_some() {
            return bad("bulk: set either auto_k0 = true or k0_override, not both".into());
        }
        if self.bulk.auto_k0 == Some(false) && self.bulk.k0_override.is_none() {
            return bad("bulk: auto_k0 = false needs k0_override".into());
        }
        if let Some(k0) = self.bulk.k0_override {
            if !(k0 >= 0.0) || !k0.is_finite() {
                return bad(format!("bulk: k0_override = {k0} must be finite and non-negative"));
            }
        }
        if let Some(g) = &self.grid {
            if g.n < 8 || g.n % 2 != 0 {
                return bad(format!("grid: N = {} must be even and at least 8", g.n));
            }
            if let Some(e) = g.epsilon {
                if !(e > 0.0) {
                    return bad(format!("grid: epsilon = {e} must be positive"));
                }
            }
        }
        if let Some(d) = &self.domain {
            let l = d.law();
            if !(l.alpha > 0.0 && l.alpha < 1.0 && l.c6 > 0.0 && l.c7 > l.c6 && l.delta1 > 0.0) {
                return bad(format!("domain: invalid collar law {l:?}"));
            }
        }
        if let Some(b) = &self.boundary {
            if !(b.perturbation >= 0.0) {
                return bad("boundary: perturbation must be non-negative".into());
            }
        }
        if let Some(e) = &self.electrostatics {
            e.validate().map_err(|e| CliError::Config(format!("electrostatics: {e}")))?;
        }
        if let Some(s) = &self.sweep {
            if s.epsilons.is_empty() || s.epsilons.iter().any(|e| !(*e > 0.0)) {
                return bad("sweep: epsilons must be a non-empty list of positive numbers".into());
            }
            match &s.grids {
                Some(g) if g.len() != 1 && g.len() != s.epsilons.len() => {
                    return bad("sweep: grids needs one entry or one per epsilon".into());
                }
                None if self.grid.is_none() => return bad("sweep: needs sweep.grids or grid.N".into()),
                _ => {}
            }
            s.director.validate().map_err(|e| CliError::Config(format!("sweep.director: {e}")))?;
        }
        self.minimize.validate().map_err(|e| CliError::Config(format!("minimize: {e}")))?;
        let p = &self.psi;
        if !(p.s_min > -0.5 && p.s_max < 1.0 && p.s_min < p.s_max && p.points >= 2) {
            return bad(format!("psi: need -0.5 < s_min < s_max < 1 and points >= 2, got {p:?}"));
        }
        if self.output.formats.is_empty() {
            return bad("output: formats must not be empty".into());
        }
        Ok(())
    }

    pub fn require_grid(&self) -> Result<&GridSection, CliError> {
        self.grid.as_ref().ok_or_else(|| CliError::Config("missing [grid] section".into()))
    }

    pub fn require_epsilon(&self) -> Result<f64, CliError> {
        self.require_grid()?
            .epsilon
            .ok_or_else(|| CliError::Config("missing grid.epsilon".into()))
    }

    pub fn require_domain(&self) -> Result<&DomainSection, CliError> {
        self.domain.as_ref().ok_or_else(|| CliError::Config("missing [domain] section".into()))
    }

    pub fn require_boundary(&self) -> Result<&BoundarySection, CliError> {
        self.boundary
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [boundary] section".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
seed = 7

[kernel]
profiles = "inverse-power"
coefficients = [1.0, 1.0, 1.0]
cutoff = 0.5
exponent = 6.0

[bulk]
k0_override = 30.0
sphere = { n_theta = 32, n_phi = 64 }

[grid]
N = 16
epsilon = 0.5

[domain]
geometry = { shape = "ball", center = [3.14, 3.14, 3.14], radius = 2.0 }
alpha = 0.25

[boundary]
director = { kind = "twist", q = 1.0 }

[electrostatics]
A_iso = 1.0
A_aniso = 0.5
phi0 = { kind = "linear", gradient = [1.0, 0.0, 0.0], offset = 0.0 }

[sweep]
epsilons = [0.4, 0.2]

[minimize]
max_iters = 10

[output]
directory = "results"
formats = ["csv"]
"#;

    #[test]
    fn full_config_parses() {
        let c = RunConfig::parse(FULL).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.grid.as_ref().unwrap().n, 16);
        assert_eq!(c.domain.as_ref().unwrap().alpha, 0.25);
        assert_eq!(c.domain.as_ref().unwrap().c6, CollarLaw::default().c6);
        assert_eq!(c.minimize.max_iters, 10);
        assert_eq!(c.minimize.step0, MinimizeOptions::default().step0);
        assert!(c.output.csv() && !c.output.json());
        assert_eq!(c.kernel.spec().g1.r0, 0.5);
    }

    #[test]
    fn unknown_keys_rejected() {
        for (section, key) in [
            ("[kernel]", "colour = 1"),
            ("[grid]", "M = 3"),
            ("[minimize]", "stepsize = 1.0"),
            ("[electrostatics]", "A_other = 1.0"),
            ("[domain]", "c8 = 1.0"),
        ] {
            let text = FULL.replacen(section, &format!("{section}\n{key}"), 1);
            assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(_))), "{section} {key}");
        }
        let text = FULL.replace("radius = 2.0", "radius = 2.0, height = 1.0");
        assert!(RunConfig::parse(&text).is_err());
        assert!(RunConfig::parse(&format!("{FULL}\n[extra]\na = 1\n")).is_err());
    }

    #[test]
    fn semantic_checks() {
        assert!(RunConfig::parse(&FULL.replace("N = 16", "N = 15")).is_err());
        assert!(RunConfig::parse(&FULL.replace("k0_override = 30.0", "k0_override = 30.0\nauto_k0 = true")).is_err());
        assert!(RunConfig::parse(&FULL.replace("A_iso = 1.0", "A_iso = 0.1\n")).is_err());
        assert!(RunConfig::parse(&FULL.replace("epsilons = [0.4, 0.2]", "epsilons = []")).is_err());
        assert!(RunConfig::parse(&FULL.replace("max_iters = 10", "backtrack = 1.5")).is_err());
        assert!(RunConfig::parse(&FULL.replace("alpha = 0.25", "alpha = 0.25\nc7 = 0.4")).is_err());
    }

    #[test]
    fn minimal_config() {
        let c = RunConfig::parse("[kernel]\nprofiles = \"zero\"\n").unwrap();
        assert!(c.kernel.spec().is_zero());
        assert!(c.grid.is_none());
        assert!(c.require_epsilon().is_err());
    }
}
