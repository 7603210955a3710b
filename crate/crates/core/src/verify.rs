//! Brute-force checks of the two-point estimates, their gradient corollaries
//! and the Li–Yau bound on solver trajectories.
//!
//! Two-point functions, for nodes `x`, `y` at time `t`:
//!
//! - psi form: `Z = Psi(u(y), t) - Psi(u(x), t) - d_t(x, y)`
//! - modulus form: `C = u(y) - u(x) - 2 phi(d_t(x, y) / 2, t)`
//!
//! Both must stay `<= 0` for all pairs. The pair loop visits `x <= y` once,
//! evaluates both orientations, and reduces with `max` and a lexicographic
//! tie-break on `(xi, yi)` so the result does not depend on thread count.

use crate::barrier::Barrier;
use crate::equations::{CoefficientFamily, EquationForm};
use crate::error::{Error, Result};
use crate::geometry::CurvatureBounds;
use crate::solver::{self, ScalarField, Trajectory};

pub const DEFAULT_TOL_RATIO: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoPointMode {
    PsiForm,
    ModulusForm,
}

impl TwoPointMode {
    pub fn name(&self) -> &'static str {
        match self {
            TwoPointMode::PsiForm => "psi_form",
            TwoPointMode::ModulusForm => "modulus_form",
        }
    }
}

/// Worst two-point value of one snapshot and the ordered pair attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointRow {
    pub t: f64,
    pub worst: f64,
    pub xi: usize,
    pub yi: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointReport {
    pub mode: TwoPointMode,
    pub series: Vec<TwoPointRow>,
    pub worst: TwoPointRow,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    value: f64,
    xi: usize,
    yi: usize,
}

impl Candidate {
    const NONE: Candidate = Candidate { value: f64::NEG_INFINITY, xi: usize::MAX, yi: usize::MAX };

    fn better(self, other: Candidate) -> Candidate {
        if other.value > self.value || (other.value == self.value && (other.xi, other.yi) < (self.xi, self.yi)) {
            other
        } else {
            self
        }
    }
}

/// Precomputed per-snapshot data for the pair loop.
enum PairTerms<'a> {
    Psi(Vec<f64>),
    Modulus { u: &'a [f64], barrier: &'a Barrier },
}

fn pair_worst(field: &ScalarField, terms: &PairTerms<'_>) -> Result<Candidate> {
    let n = field.grid.len();
    let t = field.t;
    let row = |i: usize| -> Result<Candidate> {
        let mut best = Candidate::NONE;
        for j in i..n {
            let d = field.node_distance(i, j)?;
            let (zij, zji) = match terms {
                PairTerms::Psi(psi) => (psi[j] - psi[i] - d, psi[i] - psi[j] - d),
                PairTerms::Modulus { u, barrier } => {
                    let w = 2.0 * barrier.phi(0.5 * d, t)?;
                    (u[j] - u[i] - w, u[i] - u[j] - w)
                }
            };
            best = best.better(Candidate { value: zij, xi: i, yi: j });
            best = best.better(Candidate { value: zji, xi: j, yi: i });
        }
        Ok(best)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(row).try_reduce(|| Candidate::NONE, |a, b| Ok(a.better(b)))
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).try_fold(Candidate::NONE, |acc, i| Ok(acc.better(row(i)?)))
    }
}

/// Worst two-point value over all ordered node pairs of one field.
pub fn snapshot_worst(field: &ScalarField, b: &Barrier, mode: TwoPointMode) -> Result<TwoPointRow> {
    let terms = match mode {
        TwoPointMode::PsiForm => {
            PairTerms::Psi(field.values.iter().map(|u| b.invert(*u, field.t)).collect::<Result<_>>()?)
        }
        TwoPointMode::ModulusForm => PairTerms::Modulus { u: &field.values, barrier: b },
    };
    let c = pair_worst(field, &terms)?;
    Ok(TwoPointRow { t: field.t, worst: c.value, xi: c.xi, yi: c.yi })
}

fn report(mode: TwoPointMode, series: Vec<TwoPointRow>, tolerance: f64) -> TwoPointReport {
    let mut worst = series[0];
    for r in &series[1..] {
        if r.worst > worst.worst {
            worst = *r;
        }
    }
    TwoPointReport { mode, worst, pass: worst.worst <= tolerance, series, tolerance }
}

/// Validate that `fam` and `bounds` meet the hypotheses of the estimate
/// behind `mode`.
pub fn check_hypotheses(fam: &CoefficientFamily, bounds: &CurvatureBounds, mode: TwoPointMode) -> Result<()> {
    match mode {
        TwoPointMode::PsiForm => {
            if fam.form != EquationForm::Eq14 {
                return Err(Error::Hypothesis(format!(
                    "psi-form estimate needs an eq_1_4 equation, {} is tagged eq_1_5",
                    fam.name()
                )));
            }
            fam.check_form(EquationForm::Eq14)?;
            if bounds.k0 > 0.0 {
                return Err(Error::Hypothesis(format!(
                    "psi-form estimate needs Ric >= 0, got lower bound -{}",
                    bounds.k0
                )));
            }
        }
        TwoPointMode::ModulusForm => fam.check_form(EquationForm::Eq15)?,
    }
    Ok(())
}

/// Two-point function of the initial data; the estimate's starting hypothesis.
pub fn initial_containment(
    u0: &ScalarField,
    b: &Barrier,
    mode: TwoPointMode,
    tolerance: f64,
) -> Result<TwoPointReport> {
    Ok(report(mode, vec![snapshot_worst(u0, b, mode)?], tolerance))
}

/// Two-point function over every snapshot of `traj`.
pub fn two_point_check(
    traj: &Trajectory,
    b: &Barrier,
    mode: TwoPointMode,
    fam: &CoefficientFamily,
    bounds: &CurvatureBounds,
    tolerance: f64,
) -> Result<TwoPointReport> {
    check_hypotheses(fam, bounds, mode)?;
    let series = traj.snapshots.iter().map(|f| snapshot_worst(f, b, mode)).collect::<Result<Vec<_>>>()?;
    Ok(report(mode, series, tolerance))
}

/// Default two-point tolerance `10 (h + dt) L` with `h` the metric grid
/// spacing, `dt` the mean step and `L` the largest initial slope.
pub fn default_tolerance(traj: &Trajectory) -> Result<f64> {
    let u0 = &traj.snapshots[0];
    let h = u0.grid.spacing() * u0.geom.radius(u0.t)?;
    let span = traj.last().t - u0.t;
    let dt = if traj.steps > 0 { span / traj.steps as f64 } else { 0.0 };
    let lip = solver::gradient_norm(u0)?.into_iter().fold(0.0_f64, f64::max).max(1.0);
    Ok(10.0 * (h + dt) * lip)
}

/// One node-level record: gradient rows hold `(grad, bound, ratio)`, Li–Yau
/// rows hold `(lhs, rhs, margin)` with `margin = rhs - lhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeRow {
    pub t: f64,
    pub node: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Gradient,
    LiYau,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub kind: CheckKind,
    /// Largest gradient ratio, or largest `lhs - rhs`.
    pub worst: f64,
    pub worst_t: f64,
    pub worst_node: usize,
    /// `(t, worst at t)` per snapshot.
    pub series: Vec<(f64, f64)>,
    pub tolerance: f64,
    pub pass: bool,
    pub rows: Vec<NodeRow>,
}

fn node_report(
    kind: CheckKind,
    rows: Vec<NodeRow>,
    score: impl Fn(&NodeRow) -> f64,
    tolerance: f64,
    threshold: f64,
) -> CheckReport {
    let mut series: Vec<(f64, f64)> = Vec::new();
    let mut worst = (f64::NEG_INFINITY, 0.0, 0);
    for r in &rows {
        let v = score(r);
        match series.last_mut() {
            Some(last) if last.0 == r.t => last.1 = last.1.max(v),
            _ => series.push((r.t, v)),
        }
        if v > worst.0 {
            worst = (v, r.t, r.node);
        }
    }
    CheckReport {
        kind,
        worst: worst.0,
        worst_t: worst.1,
        worst_node: worst.2,
        series,
        tolerance,
        pass: worst.0 <= threshold,
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// `|Du| <= phi'(Psi(u, t), t)`
    Cor15,
    /// `|Du| <= phi'(0, t)`
    Cor17,
}

/// Compare `|Du|` against the barrier's gradient bound at every node and snapshot.
/// Passes when the worst ratio is at most `1 + tol_ratio`.
pub fn gradient_check(traj: &Trajectory, b: &Barrier, mode: GradientMode, tol_ratio: f64) -> Result<CheckReport> {
    let mut rows = Vec::new();
    for f in &traj.snapshots {
        let grads = solver::gradient_norm(f)?;
        let at_origin = b.eval(0.0, f.t)?.phi_s;
        for (node, g) in grads.into_iter().enumerate() {
            let bound = match mode {
                GradientMode::Cor15 => b.eval(b.invert(f.values[node], f.t)?, f.t)?.phi_s,
                GradientMode::Cor17 => at_origin,
            };
            let ratio = if bound > 0.0 {
                g / bound
            } else if g == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            rows.push(NodeRow { t: f.t, node, a: g, b: bound, c: ratio });
        }
    }
    Ok(node_report(CheckKind::Gradient, rows, |r| r.c, tol_ratio, 1.0 + tol_ratio))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiYauParams {
    /// Harnack parameter, distinct from the diffusion coefficient.
    pub alpha_ly: f64,
    pub k0: f64,
    pub k1: f64,
    pub n: usize,
}

impl LiYauParams {
    pub fn new(alpha_ly: f64, bounds: &CurvatureBounds, n: usize) -> Result<Self> {
        if !(alpha_ly > 1.0) || !alpha_ly.is_finite() {
            return Err(Error::Parameter(format!("alpha_ly must exceed 1, got {alpha_ly}")));
        }
        Ok(LiYauParams { alpha_ly, k0: bounds.k0, k1: bounds.k1, n })
    }

    /// `n a^2 / t + n a^3 K0 / (a - 1) + n^{3/2} a^2 (K0 + K1)`
    pub fn rhs(&self, t: f64) -> f64 {
        let a = self.alpha_ly;
        let n = self.n as f64;
        n * a * a / t + n * a.powi(3) * self.k0 / (a - 1.0) + n.powf(1.5) * a * a * (self.k0 + self.k1)
    }
}

/// Li–Yau check on snapshots with `t >= t_min > 0`. `u_t` is the metric
/// Laplacian of the snapshot. Passes when `max(lhs - rhs) <= tolerance`.
pub fn liyau_check(
    traj: &Trajectory,
    params: &LiYauParams,
    fam: &CoefficientFamily,
    t_min: f64,
    tolerance: f64,
) -> Result<CheckReport> {
    if !(params.alpha_ly > 1.0) {
        return Err(Error::Parameter(format!("alpha_ly must exceed 1, got {}", params.alpha_ly)));
    }
    if !fam.is_heat() {
        return Err(Error::Hypothesis(format!("the Li–Yau check applies to the heat family only, got {}", fam.name())));
    }
    let geom = traj.snapshots[0].geom;
    if !geom.is_exact_ricci_flow() {
        return Err(Error::Hypothesis(format!(
            "the Li–Yau check needs an exact Ricci flow, {} is not one",
            geom.name()
        )));
    }
    let mut rows = Vec::new();
    for f in traj.snapshots.iter().filter(|f| f.t > 0.0 && f.t >= t_min) {
        if let Some(node) = f.values.iter().position(|u| !(*u > 0.0)) {
            return Err(Error::Positivity { value: f.values[node], node, t: f.t });
        }
        let grads = solver::gradient_norm(f)?;
        let u_t = solver::spatial_operator(f, fam)?;
        let rhs = params.rhs(f.t);
        for (node, u) in f.values.iter().enumerate() {
            let lhs = grads[node] * grads[node] / (u * u) - params.alpha_ly * u_t[node] / u;
            rows.push(NodeRow { t: f.t, node, a: lhs, b: rhs, c: rhs - lhs });
        }
    }
    if rows.is_empty() {
        return Err(Error::Parameter(format!("no snapshot at t >= {t_min} with t > 0")));
    }
    Ok(node_report(CheckKind::LiYau, rows, |r| r.a - r.b, tolerance, tolerance))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use super::*;
    use crate::barrier::Profile;
    use crate::geometry::Geometry;
    use crate::solver::{evolve, uniform_times, SolverControls};

    fn circle_field(n: usize, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::from_fn(Geometry::circle(2.0 * PI).unwrap(), n, 0.0, |p| f(p[0])).unwrap()
    }

    fn line(slope: f64, offset: f64, t_end: f64) -> Barrier {
        Barrier::analytic(Profile::Linear { slope, offset, drift: 0.0 }, PI, 64, vec![0.0, t_end]).unwrap()
    }

    #[test]
    fn constant_data_has_zero_worst_on_the_diagonal() {
        let u0 = circle_field(32, |_| 0.5);
        let r = initial_containment(&u0, &line(2.0, 0.0, 1.0), TwoPointMode::PsiForm, 0.0).unwrap();
        assert_eq!(r.worst.worst, 0.0);
        assert_eq!((r.worst.xi, r.worst.yi), (0, 0));
        assert!(r.pass);
    }

    #[test]
    fn sine_is_contained_by_slope_two_not_one_half() {
        let u0 = circle_field(64, f64::sin);
        let r = initial_containment(&u0, &line(2.0, -PI, 1.0), TwoPointMode::PsiForm, 0.0).unwrap();
        assert!(r.pass && r.worst.worst == 0.0);
        let r = initial_containment(&u0, &line(2.0, 0.0, 1.0), TwoPointMode::ModulusForm, 0.0).unwrap();
        assert!(r.pass && r.worst.worst == 0.0);
        // Slope 0.5 cannot hold [-1, 1] in its range over [0, pi]; use the modulus form.
        let r = initial_containment(&u0, &line(0.5, 0.0, 1.0), TwoPointMode::ModulusForm, 0.0).unwrap();
        assert!(!r.pass && r.worst.worst > 0.0);
    }

    #[test]
    fn out_of_range_data_is_a_range_error() {
        let u0 = circle_field(16, f64::sin);
        let err = initial_containment(&u0, &line(2.0, 0.0, 1.0), TwoPointMode::PsiForm, 0.0).unwrap_err();
        assert!(matches!(err, Error::Range { z, .. } if z < 0.0));
    }

    #[test]
    fn modulus_form_diagonal_is_minus_two_phi_zero() {
        let u0 = circle_field(16, |_| 1.0);
        let b = line(1.0, 0.25, 1.0);
        let r = initial_containment(&u0, &b, TwoPointMode::ModulusForm, 0.0).unwrap();
        assert_eq!(r.worst.worst, -0.5);
    }

    #[test]
    fn psi_form_rejects_p_laplacian() {
        let fam =
            CoefficientFamily::new(crate::equations::Family::PLaplacian { p: 3.0 }, 1e-6, EquationForm::Eq14).unwrap();
        let err = check_hypotheses(&fam, &CurvatureBounds::flat(), TwoPointMode::PsiForm).unwrap_err();
        assert!(err.to_string().contains("β(t) ≥ 1"));
        let neg = CurvatureBounds::new(1.0, 0.0).unwrap();
        assert!(check_hypotheses(&CoefficientFamily::heat(), &neg, TwoPointMode::PsiForm).is_err());
    }

    #[test]
    fn heat_on_circle_respects_static_line_barrier() {
        let u0 = circle_field(128, f64::sin);
        let fam = CoefficientFamily::heat();
        let traj = evolve(&u0, &fam, 0.5, &uniform_times(0.0, 0.5, 5), SolverControls::default()).unwrap();
        let r =
            two_point_check(&traj, &line(2.0, -PI, 0.5), TwoPointMode::PsiForm, &fam, &CurvatureBounds::flat(), 1e-3)
                .unwrap();
        assert!(r.pass, "{:?}", r.worst);
        assert_eq!(r.series.len(), 6);
    }

    #[test]
    fn gradient_ratio_against_slope_two() {
        let u0 = circle_field(256, f64::sin);
        let traj = evolve(&u0, &CoefficientFamily::heat(), 0.0, &[], SolverControls::default()).unwrap();
        let r = gradient_check(&traj, &line(2.0, -PI, 1.0), GradientMode::Cor15, DEFAULT_TOL_RATIO).unwrap();
        assert!(r.worst <= 0.5 + 1e-3 && r.pass);
        let flat = circle_field(16, |_| 2.0);
        let traj = evolve(&flat, &CoefficientFamily::heat(), 0.0, &[], SolverControls::default()).unwrap();
        let r = gradient_check(&traj, &line(2.0, 0.0, 1.0), GradientMode::Cor17, DEFAULT_TOL_RATIO).unwrap();
        assert_eq!(r.worst, 0.0);
    }

    #[test]
    fn cor17_ratio_for_decaying_sine_barrier() {
        let u0 = circle_field(256, f64::sin);
        let traj = evolve(&u0, &CoefficientFamily::heat(), 0.5, &uniform_times(0.0, 0.5, 5), SolverControls::default())
            .unwrap();
        let b = Barrier::analytic(
            Profile::Sine { amplitude: 1.2, rate: 1.0, frequency: 1.0 },
            FRAC_PI_2,
            64,
            vec![0.0, 0.5],
        )
        .unwrap();
        let r = gradient_check(&traj, &b, GradientMode::Cor17, DEFAULT_TOL_RATIO).unwrap();
        assert!((r.worst - 1.0 / 1.2).abs() < 1e-3, "{}", r.worst);
    }

    #[test]
    fn liyau_rhs_value() {
        let p = LiYauParams::new(2.0, &CurvatureBounds::new(0.0, 1.0).unwrap(), 2).unwrap();
        assert!((p.rhs(1.0) - 19.3137085).abs() < 1e-6);
        assert!(LiYauParams::new(1.0, &CurvatureBounds::flat(), 2).is_err());
    }

    #[test]
    fn liyau_on_constant_torus_data() {
        let g = Geometry::torus2(1.0, 1.0).unwrap();
        let u0 = ScalarField::from_fn(g, 8, 0.0, |_| 3.0).unwrap();
        let fam = CoefficientFamily::heat();
        let traj = evolve(&u0, &fam, 0.1, &[0.05], SolverControls::default()).unwrap();
        let p = LiYauParams::new(2.0, &CurvatureBounds::flat(), 2).unwrap();
        let r = liyau_check(&traj, &p, &fam, 0.0, 0.0).unwrap();
        assert!(r.rows.iter().all(|row| row.a == 0.0));
        assert!(r.pass);
    }

    #[test]
    fn liyau_guards() {
        let u0 = circle_field(16, f64::sin);
        let fam = CoefficientFamily::heat();
        let traj = evolve(&u0, &fam, 0.1, &[], SolverControls::default()).unwrap();
        let p = LiYauParams::new(2.0, &CurvatureBounds::flat(), 1).unwrap();
        assert!(matches!(liyau_check(&traj, &p, &fam, 0.0, 0.0), Err(Error::Positivity { .. })));
        let pl = CoefficientFamily::p_laplacian(3.0, 1e-6).unwrap();
        assert!(matches!(liyau_check(&traj, &p, &pl, 0.0, 0.0), Err(Error::Hypothesis(_))));
    }
}
