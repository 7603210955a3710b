//! Experiment files: `[section]` headers with `key = value` lines (TOML
//! syntax). Unknown sections and keys are rejected; every documented key has
//! a default.
//!
//! ```toml
//! [geometry]
//! family = "circle"
//! length = 6.283185307179586
//!
//! [equation]
//! family = "heat"
//!
//! [initial]
//! kind = "sine"
//!
//! [barrier]
//! mode = "analytic"
//! profile = "linear"
//! slope = 2.0
//! offset = -3.2
//! verify_mode = "parabolic_eq16"
//!
//! [checks]
//! list = ["barrier_condition", "containment", "two_point_psi", "grad_cor15"]
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::barrier::{ConditionMode, Profile, DEFAULT_MARGIN};
use crate::equations::{CoefficientFamily, CoefficientTable, EquationForm, Family, TableArg, DEFAULT_EPSILON_REG};
use crate::error::{Error, Result};
use crate::geometry::{Geometry, Point};
use crate::solver::DEFAULT_C_CFL;
use crate::verify::{TwoPointMode, DEFAULT_TOL_RATIO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryFamily {
    Circle,
    Torus2,
    SphereShrinking,
    SphereStatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub family: GeometryFamily,
    pub length: f64,
    pub lx: f64,
    pub ly: f64,
    pub r0: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection { family: GeometryFamily::Circle, length: 2.0 * PI, lx: 1.0, ly: 1.0, r0: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationFamily {
    Heat,
    GraphicalMcf,
    PLaplacian,
    CustomTabulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormTag {
    #[serde(rename = "eq_1_4")]
    Eq14,
    #[serde(rename = "eq_1_5")]
    Eq15,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableArgTag {
    GradNorm,
    Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquationSection {
    pub family: EquationFamily,
    pub p: f64,
    pub epsilon_reg: f64,
    /// Defaults to `eq_1_4` for heat and graphical MCF, `eq_1_5` otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub form: Option<FormTag>,
    pub table_arg: TableArgTag,
    pub table_grid: Vec<f64>,
    pub table_alpha: Vec<f64>,
    pub table_beta: Vec<f64>,
    pub table_q: Vec<f64>,
    /// Extra `epsilon_reg` values for the sensitivity report; empty disables it.
    pub epsilon_sweep: Vec<f64>,
}

impl Default for EquationSection {
    fn default() -> Self {
        EquationSection {
            family: EquationFamily::Heat,
            p: 2.0,
            epsilon_reg: DEFAULT_EPSILON_REG,
            form: None,
            table_arg: TableArgTag::GradNorm,
            table_grid: Vec::new(),
            table_alpha: Vec::new(),
            table_beta: Vec::new(),
            table_q: Vec::new(),
            epsilon_sweep: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Constant,
    Sine,
    Cosine,
    SineProduct,
}

/// Initial data `offset + amplitude * shape(k)`: `sin(2 pi k x / L)` and
/// `cos(2 pi k x / L)` on a circle, `sin(2 pi k x / lx) sin(2 pi k y / ly)` on a
/// torus, `sin(k theta)` and `cos(k theta)` on a sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub kind: InitialKind,
    pub amplitude: f64,
    pub offset: f64,
    pub wavenumber: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection { kind: InitialKind::Sine, amplitude: 1.0, offset: 0.0, wavenumber: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { n: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub t_end: f64,
    pub snapshots: usize,
    pub c_cfl: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection { t_end: 0.5, snapshots: 10, c_cfl: DEFAULT_C_CFL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierSource {
    Analytic,
    Solve,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Linear,
    Sine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerifyModeTag {
    #[serde(rename = "elliptic_1_3")]
    Elliptic13,
    #[serde(rename = "parabolic_thm14")]
    ParabolicThm14,
    #[serde(rename = "parabolic_eq16")]
    ParabolicEq16,
}

impl From<VerifyModeTag> for ConditionMode {
    fn from(v: VerifyModeTag) -> Self {
        match v {
            VerifyModeTag::Elliptic13 => ConditionMode::Elliptic13,
            VerifyModeTag::ParabolicThm14 => ConditionMode::ParabolicThm14,
            VerifyModeTag::ParabolicEq16 => ConditionMode::ParabolicEq16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarrierSection {
    pub mode: BarrierSource,
    /// Analytic profile, or the initial profile `phi0` when solving.
    pub profile: ProfileKind,
    pub slope: f64,
    pub offset: f64,
    pub drift: f64,
    pub amplitude: f64,
    pub rate: f64,
    pub frequency: f64,
    pub delta: f64,
    pub margin: f64,
    /// Defaults to `parabolic_thm14` for psi-form checks and
    /// `parabolic_eq16` otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify_mode: Option<VerifyModeTag>,
    /// Defaults to the diameter for psi-form checks, half of it otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_max: Option<f64>,
    pub n_s: usize,
    pub path: String,
}

impl Default for BarrierSection {
    fn default() -> Self {
        BarrierSection {
            mode: BarrierSource::Analytic,
            profile: ProfileKind::Linear,
            slope: 1.0,
            offset: 0.0,
            drift: 0.0,
            amplitude: 1.0,
            rate: 0.0,
            frequency: 1.0,
            delta: 0.0,
            margin: DEFAULT_MARGIN,
            verify_mode: None,
            s_max: None,
            n_s: 129,
            path: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Containment,
    TwoPointPsi,
    TwoPointModulus,
    GradCor15,
    GradCor17,
    Liyau,
    BarrierCondition,
}

impl CheckName {
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckName::Containment => "containment",
            CheckName::TwoPointPsi => "two_point_psi",
            CheckName::TwoPointModulus => "two_point_modulus",
            CheckName::GradCor15 => "grad_cor15",
            CheckName::GradCor17 => "grad_cor17",
            CheckName::Liyau => "liyau",
            CheckName::BarrierCondition => "barrier_condition",
        }
    }

    fn is_psi(&self) -> bool {
        matches!(self, CheckName::TwoPointPsi | CheckName::GradCor15)
    }

    fn is_modulus(&self) -> bool {
        matches!(self, CheckName::TwoPointModulus | CheckName::GradCor17)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksSection {
    pub list: Vec<CheckName>,
}

impl Default for ChecksSection {
    fn default() -> Self {
        ChecksSection { list: vec![CheckName::BarrierCondition, CheckName::Containment, CheckName::TwoPointPsi] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LiYauSection {
    pub alpha_ly: f64,
    /// First snapshot time included in the check.
    pub t_min: f64,
}

impl Default for LiYauSection {
    fn default() -> Self {
        LiYauSection { alpha_ly: 2.0, t_min: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TolerancesSection {
    /// Two-point and containment tolerance; `10 (h + dt) L` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_point: Option<f64>,
    pub ratio: f64,
    pub liyau: f64,
    /// Largest accepted max/min spread of the epsilon sweep.
    pub epsilon_spread: f64,
}

impl Default for TolerancesSection {
    fn default() -> Self {
        TolerancesSection { two_point: None, ratio: DEFAULT_TOL_RATIO, liyau: 0.0, epsilon_spread: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "twopoint-out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub geometry: GeometrySection,
    pub equation: EquationSection,
    pub initial: InitialSection,
    pub grid: GridSection,
    pub time: TimeSection,
    pub barrier: BarrierSection,
    pub checks: ChecksSection,
    pub liyau: LiYauSection,
    pub tolerances: TolerancesSection,
    pub output: OutputSection,
}

/// Message of `e` without its class prefix, for consolidated reports.
fn detail(e: Error) -> String {
    match e {
        Error::Domain(m) | Error::Config(m) | Error::Hypothesis(m) | Error::Parameter(m) | Error::Io(m) => m,
        other => other.to_string(),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

/// Parse and validate an experiment file.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn geometry(&self) -> Result<Geometry> {
        let g = &self.geometry;
        match g.family {
            GeometryFamily::Circle => Geometry::circle(g.length),
            GeometryFamily::Torus2 => Geometry::torus2(g.lx, g.ly),
            GeometryFamily::SphereShrinking => Geometry::sphere_shrinking(g.r0),
            GeometryFamily::SphereStatic => Geometry::sphere_static(g.r0),
        }
    }

    pub fn form(&self) -> EquationForm {
        match self.equation.form {
            Some(FormTag::Eq14) => EquationForm::Eq14,
            Some(FormTag::Eq15) => EquationForm::Eq15,
            None => match self.equation.family {
                EquationFamily::Heat | EquationFamily::GraphicalMcf => EquationForm::Eq14,
                _ => EquationForm::Eq15,
            },
        }
    }

    pub fn family_with_epsilon(&self, epsilon_reg: f64) -> Result<CoefficientFamily> {
        let e = &self.equation;
        let family = match e.family {
            EquationFamily::Heat => Family::Heat,
            EquationFamily::GraphicalMcf => Family::GraphicalMcf,
            EquationFamily::PLaplacian => Family::PLaplacian { p: e.p },
            EquationFamily::CustomTabulated => Family::CustomTabulated(CoefficientTable::new(
                match e.table_arg {
                    TableArgTag::GradNorm => TableArg::GradNorm,
                    TableArgTag::Value => TableArg::Value,
                },
                e.table_grid.clone(),
                e.table_alpha.clone(),
                e.table_beta.clone(),
                e.table_q.clone(),
            )?),
        };
        CoefficientFamily::new(family, epsilon_reg, self.form())
    }

    pub fn family(&self) -> Result<CoefficientFamily> {
        self.family_with_epsilon(self.equation.epsilon_reg)
    }

    pub fn initial_value(&self, geom: &Geometry, p: Point) -> f64 {
        let i = &self.initial;
        let k = i.wavenumber;
        let shape = match (i.kind, *geom) {
            (InitialKind::Constant, _) => 0.0,
            (InitialKind::Sine | InitialKind::SineProduct, Geometry::Circle { length }) => {
                (2.0 * PI * k * p[0] / length).sin()
            }
            (InitialKind::Cosine, Geometry::Circle { length }) => (2.0 * PI * k * p[0] / length).cos(),
            (InitialKind::Sine | InitialKind::SineProduct, Geometry::Torus2 { lx, ly }) => {
                (2.0 * PI * k * p[0] / lx).sin() * (2.0 * PI * k * p[1] / ly).sin()
            }
            (InitialKind::Cosine, Geometry::Torus2 { lx, ly }) => {
                (2.0 * PI * k * p[0] / lx).cos() * (2.0 * PI * k * p[1] / ly).cos()
            }
            (InitialKind::Sine | InitialKind::SineProduct, _) => (k * p[0]).sin(),
            (InitialKind::Cosine, _) => (k * p[0]).cos(),
        };
        i.offset + i.amplitude * shape
    }

    pub fn two_point_mode(&self) -> Option<TwoPointMode> {
        let list = &self.checks.list;
        if list.iter().any(CheckName::is_psi) {
            Some(TwoPointMode::PsiForm)
        } else if list.iter().any(CheckName::is_modulus) || list.contains(&CheckName::Containment) {
            Some(if self.form() == EquationForm::Eq14 && !list.iter().any(CheckName::is_modulus) {
                TwoPointMode::PsiForm
            } else {
                TwoPointMode::ModulusForm
            })
        } else {
            None
        }
    }

    pub fn verify_mode(&self) -> ConditionMode {
        match (self.barrier.verify_mode, self.two_point_mode()) {
            (Some(m), _) => m.into(),
            (None, Some(TwoPointMode::PsiForm)) => ConditionMode::ParabolicThm14,
            (None, _) => ConditionMode::ParabolicEq16,
        }
    }

    pub fn barrier_s_max(&self) -> Result<f64> {
        if let Some(s) = self.barrier.s_max {
            return Ok(s);
        }
        let d = self.geometry()?.diameter();
        Ok(match self.two_point_mode() {
            Some(TwoPointMode::PsiForm) => d,
            _ => 0.5 * d,
        })
    }

    pub fn profile(&self) -> Profile {
        let b = &self.barrier;
        match b.profile {
            ProfileKind::Linear => Profile::Linear { slope: b.slope, offset: b.offset, drift: b.drift },
            ProfileKind::Sine => Profile::Sine { amplitude: b.amplitude, rate: b.rate, frequency: b.frequency },
        }
    }

    /// Snapshot times including 0.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let mut t = vec![0.0];
        t.extend(crate::solver::uniform_times(0.0, self.time.t_end, self.time.snapshots));
        t.dedup();
        t
    }

    pub fn needs_barrier(&self) -> bool {
        self.checks.list.iter().any(|c| *c != CheckName::Liyau)
    }

    /// All semantic violations, reported together.
    pub fn validate(&self) -> Result<()> {
        let mut config_errs: Vec<String> = Vec::new();
        let mut hyp_errs: Vec<String> = Vec::new();
        let geom = match self.geometry() {
            Ok(g) => Some(g),
            Err(e) => {
                config_errs.push(detail(e));
                None
            }
        };
        let fam = match self.family() {
            Ok(f) => Some(f),
            Err(e) => {
                config_errs.push(detail(e));
                None
            }
        };
        for eps in &self.equation.epsilon_sweep {
            if !(*eps >= 0.0) {
                config_errs.push(format!("epsilon_sweep values must be nonnegative, got {eps}"));
            }
        }
        if self.grid.n < 3 {
            config_errs.push(format!("grid n must be at least 3, got {}", self.grid.n));
        }
        let t = &self.time;
        if !(t.t_end >= 0.0) || !t.t_end.is_finite() {
            config_errs.push(format!("t_end must be nonnegative, got {}", t.t_end));
        }
        if t.snapshots == 0 {
            config_errs.push("snapshots must be at least 1".into());
        }
        if !(t.c_cfl > 0.0 && t.c_cfl <= 1.0) {
            config_errs.push(format!("c_cfl must lie in (0, 1], got {}", t.c_cfl));
        }
        if let Some(g) = geom {
            if let Err(e) = g.check_time(t.t_end) {
                config_errs.push(detail(e));
            }
        }
        let list = &self.checks.list;
        if list.is_empty() {
            config_errs.push("no checks requested".into());
        }
        if list.iter().any(CheckName::is_psi) && list.iter().any(CheckName::is_modulus) {
            config_errs.push("psi-form and modulus-form checks need different barriers; run them separately".into());
        }
        let b = &self.barrier;
        if self.needs_barrier() {
            if b.mode == BarrierSource::Solve && self.verify_mode() != ConditionMode::ParabolicEq16 {
                config_errs.push("solved barriers are certified in verify_mode parabolic_eq16 only".into());
            }
            if b.mode == BarrierSource::Csv && b.path.is_empty() {
                config_errs.push("barrier mode csv needs a path".into());
            }
            if !(b.delta >= 0.0) {
                config_errs.push(format!("barrier delta must be nonnegative, got {}", b.delta));
            }
            if !(b.margin >= 0.0) {
                config_errs.push(format!("barrier margin must be nonnegative, got {}", b.margin));
            }
            if b.n_s < 4 {
                config_errs.push(format!("barrier n_s must be at least 4, got {}", b.n_s));
            }
            if let Some(s) = b.s_max {
                if !(s > 0.0) {
                    config_errs.push(format!("barrier s_max must be positive, got {s}"));
                }
            }
        }
        if let (Some(fam), Some(mode)) = (&fam, self.two_point_mode()) {
            let bounds = geom.and_then(|g| g.curvature_bounds(0.0, self.time.t_end).ok());
            if let Some(bounds) = bounds {
                if let Err(e) = crate::verify::check_hypotheses(fam, &bounds, mode) {
                    hyp_errs.push(detail(e));
                }
            }
        }
        if list.contains(&CheckName::Liyau) {
            if !(self.liyau.alpha_ly > 1.0) {
                config_errs.push(format!("alpha_ly must exceed 1, got {}", self.liyau.alpha_ly));
            }
            if let Some(fam) = &fam {
                if !fam.is_heat() {
                    hyp_errs.push(format!("liyau applies to the heat family only, got {}", fam.name()));
                }
            }
            if let Some(g) = geom {
                if !g.is_exact_ricci_flow() {
                    hyp_errs.push(format!("liyau needs an exact Ricci flow geometry, got {}", g.name()));
                }
            }
        }
        if config_errs.is_empty() && hyp_errs.is_empty() {
            return Ok(());
        }
        if hyp_errs.is_empty() {
            Err(Error::Config(config_errs.join("; ")))
        } else {
            hyp_errs.extend(config_errs);
            Err(Error::Hypothesis(hyp_errs.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[geometry]
family = "circle"

[equation]
family = "heat"

[checks]
list = ["containment"]
"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.grid.n, 256);
        assert_eq!(cfg.time, TimeSection::default());
        assert_eq!(cfg.barrier.margin, DEFAULT_MARGIN);
        assert_eq!(cfg.equation.epsilon_reg, DEFAULT_EPSILON_REG);
        assert_eq!(cfg.form(), EquationForm::Eq14);
        assert_eq!(cfg.two_point_mode(), Some(TwoPointMode::PsiForm));
    }

    #[test]
    fn p_below_one_is_rejected() {
        let text = "[equation]\nfamily = \"p_laplacian\"\np = 0.5\n[checks]\nlist = [\"two_point_modulus\"]\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("p must exceed 1"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn psi_check_with_p_laplacian_is_a_hypothesis_error() {
        let text =
            "[equation]\nfamily = \"p_laplacian\"\np = 3.0\nform = \"eq_1_4\"\n[checks]\nlist = [\"two_point_psi\"]\n";
        let err = parse_config(text).unwrap_err();
        assert!(matches!(err, Error::Hypothesis(_)));
        assert!(err.to_string().contains("β(t) ≥ 1 required"), "{err}");
    }

    #[test]
    fn unknown_keys_are_errors_with_line_numbers() {
        let err = parse_config("[geometry]\nfamily = \"circle\"\nlenght = 3.0\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("lenght"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config("[nonsense]\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_config("[grid]\nn = = 3\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn violations_are_consolidated() {
        let text = "[grid]\nn = 1\n[time]\nc_cfl = 2.0\nsnapshots = 0\n";
        let msg = parse_config(text).unwrap_err().to_string();
        assert!(msg.contains("grid n") && msg.contains("c_cfl") && msg.contains("snapshots"), "{msg}");
    }

    #[test]
    fn sphere_horizon_is_checked() {
        let text =
            "[geometry]\nfamily = \"sphere_shrinking\"\nr0 = 1.0\n[time]\nt_end = 0.5\n[checks]\nlist = [\"liyau\"]\n";
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("horizon"));
    }

    #[test]
    fn liyau_refuses_static_sphere() {
        let text = "[geometry]\nfamily = \"sphere_static\"\n[checks]\nlist = [\"liyau\"]\n";
        assert!(matches!(parse_config(text), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let back: ExperimentConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }
}
