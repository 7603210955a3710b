//! Closed model manifolds with exact time-dependent metrics.
//!
//! Every family here satisfies `d/dt g + 2 Ric >= 0` in closed form: the flat
//! circle and torus are static with `Ric = 0`, the static round sphere is a
//! strict supersolution, and the shrinking round sphere of radius
//! `r(t) = sqrt(r0^2 - 2t)` is an exact Ricci flow.
//!
//! Points are two-component chart coordinates. The circle uses only the
//! first component; the torus uses `(x, y)` in its fundamental domain; the
//! sphere uses `(theta, lon)` with colatitude `theta` in `[0, pi]`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Chart coordinates of a point.
pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Circle { length: f64 },
    Torus2 { lx: f64, ly: f64 },
    SphereShrinking { r0: f64 },
    SphereStatic { r0: f64 },
}

/// Symmetric bilinear form in the chart basis. One-dimensional forms only
/// use the `[0][0]` entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymForm {
    pub dim: usize,
    pub m: [[f64; 2]; 2],
}

impl SymForm {
    pub fn scalar(v: f64) -> Self {
        SymForm { dim: 1, m: [[v, 0.0], [0.0, 0.0]] }
    }

    pub fn diag(a: f64, b: f64) -> Self {
        SymForm { dim: 2, m: [[a, 0.0], [0.0, b]] }
    }

    pub fn zero(dim: usize) -> Self {
        SymForm { dim, m: [[0.0; 2]; 2] }
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut m = self.m;
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v *= c;
            }
        }
        SymForm { dim: self.dim, m }
    }

    pub fn add(&self, other: &SymForm) -> Self {
        let mut m = self.m;
        for (row, other_row) in m.iter_mut().zip(other.m) {
            for (v, w) in row.iter_mut().zip(other_row) {
                *v += w;
            }
        }
        SymForm { dim: self.dim, m }
    }

    pub fn sub(&self, other: &SymForm) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Eigenvalues of `self` relative to the positive-definite `g`, i.e. the
    /// eigenvalues of `self` written in a `g`-orthonormal basis, ascending.
    pub fn eigenvalues_relative_to(&self, g: &SymForm) -> Result<Vec<f64>> {
        if self.dim == 1 {
            if g.m[0][0] <= 0.0 {
                return Err(Error::Domain("metric is not positive definite".into()));
            }
            return Ok(vec![self.m[0][0] / g.m[0][0]]);
        }
        // Cholesky g = L L^T, then B = L^{-1} A L^{-T}.
        let l00 = g.m[0][0].sqrt();
        if !(l00 > 0.0) {
            return Err(Error::Domain("metric is not positive definite".into()));
        }
        let l10 = g.m[1][0] / l00;
        let d = g.m[1][1] - l10 * l10;
        if !(d > 0.0) {
            return Err(Error::Domain("metric is not positive definite".into()));
        }
        let l11 = d.sqrt();
        let a = &self.m;
        let b00 = a[0][0] / (l00 * l00);
        let b01 = (a[0][1] - l10 * b00 * l00) / (l00 * l11);
        let b11 = (a[1][1] - 2.0 * l10 * (a[0][1] / l00) + l10 * l10 * b00) / (l11 * l11);
        let mean = 0.5 * (b00 + b11);
        let rad = (0.25 * (b00 - b11).powi(2) + b01 * b01).sqrt();
        Ok(vec![mean - rad, mean + rad])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureBounds {
    /// Lower bound in `-k0 <= Ric`.
    pub k0: f64,
    /// Upper bound in `Ric <= k1`.
    pub k1: f64,
    /// Two-sided bound `|Ric| <= kappa`.
    pub kappa: f64,
}

impl CurvatureBounds {
    pub fn new(k0: f64, k1: f64) -> Result<Self> {
        if !(k0 >= 0.0 && k1 >= 0.0) {
            return Err(Error::Parameter(format!("curvature bounds must be nonnegative, got K0={k0}, K1={k1}")));
        }
        Ok(CurvatureBounds { k0, k1, kappa: k0.max(k1) })
    }

    pub fn flat() -> Self {
        CurvatureBounds { k0: 0.0, k1: 0.0, kappa: 0.0 }
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Config(format!("{name} must be strictly positive, got {v}")))
    }
}

impl Geometry {
    pub fn circle(length: f64) -> Result<Self> {
        Ok(Geometry::Circle { length: positive("circle length", length)? })
    }

    pub fn torus2(lx: f64, ly: f64) -> Result<Self> {
        Ok(Geometry::Torus2 { lx: positive("torus length", lx)?, ly: positive("torus length", ly)? })
    }

    pub fn sphere_shrinking(r0: f64) -> Result<Self> {
        Ok(Geometry::SphereShrinking { r0: positive("initial radius", r0)? })
    }

    pub fn sphere_static(r0: f64) -> Result<Self> {
        Ok(Geometry::SphereStatic { r0: positive("initial radius", r0)? })
    }

    pub fn dimension(&self) -> usize {
        match self {
            Geometry::Circle { .. } => 1,
            _ => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Geometry::Circle { .. } => "circle",
            Geometry::Torus2 { .. } => "torus2",
            Geometry::SphereShrinking { .. } => "sphere_shrinking",
            Geometry::SphereStatic { .. } => "sphere_static",
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, Geometry::SphereShrinking { .. } | Geometry::SphereStatic { .. })
    }

    /// Whether the family evolves by exact Ricci flow (`d/dt g = -2 Ric`).
    pub fn is_exact_ricci_flow(&self) -> bool {
        !matches!(self, Geometry::SphereStatic { .. })
    }

    /// First time at which the metric ceases to exist, if any.
    pub fn horizon(&self) -> Option<f64> {
        match *self {
            Geometry::SphereShrinking { r0 } => Some(0.5 * r0 * r0),
            _ => None,
        }
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::Domain(format!("time {t} is not finite")));
        }
        if let Some(h) = self.horizon() {
            if t >= h {
                return Err(Error::Domain(format!("t = {t} exceeds the {} horizon r0^2/2 = {h}", self.name())));
            }
        }
        Ok(())
    }

    /// Squared scale factor of the metric at time `t` (`r(t)^2` for spheres,
    /// 1 for flat families).
    pub fn scale_sq(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(match *self {
            Geometry::SphereShrinking { r0 } => r0 * r0 - 2.0 * t,
            Geometry::SphereStatic { r0 } => r0 * r0,
            _ => 1.0,
        })
    }

    /// Sphere radius at time `t`; 1 for flat families.
    pub fn radius(&self, t: f64) -> Result<f64> {
        Ok(self.scale_sq(t)?.sqrt())
    }

    /// Analytic `d/dt` of the squared scale factor.
    fn scale_sq_rate(&self) -> f64 {
        match self {
            Geometry::SphereShrinking { .. } => -2.0,
            _ => 0.0,
        }
    }

    fn round_form(&self, p: Point) -> Result<SymForm> {
        match self {
            Geometry::Circle { .. } => Ok(SymForm::scalar(1.0)),
            Geometry::Torus2 { .. } => Ok(SymForm::diag(1.0, 1.0)),
            _ => {
                let s = p[0].sin();
                if !(p[0] > 0.0 && p[0] < PI) || s <= 0.0 {
                    return Err(Error::Domain(format!("colatitude {} outside the open chart (0, pi)", p[0])));
                }
                Ok(SymForm::diag(1.0, s * s))
            }
        }
    }

    pub fn metric_at(&self, p: Point, t: f64) -> Result<SymForm> {
        let s2 = self.scale_sq(t)?;
        Ok(self.round_form(p)?.scale(s2))
    }

    /// Analytic time derivative of the metric.
    pub fn metric_dot(&self, p: Point, t: f64) -> Result<SymForm> {
        self.check_time(t)?;
        Ok(self.round_form(p)?.scale(self.scale_sq_rate()))
    }

    pub fn ricci_at(&self, p: Point, t: f64) -> Result<SymForm> {
        self.check_time(t)?;
        match self {
            Geometry::Circle { .. } => Ok(SymForm::zero(1)),
            Geometry::Torus2 { .. } => Ok(SymForm::zero(2)),
            // Ric = (1/r^2) g = round components for a 2-sphere of radius r.
            _ => self.round_form(p),
        }
    }

    pub fn distance(&self, x: Point, y: Point, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(match *self {
            Geometry::Circle { length } => wrap_1d(x[0] - y[0], length),
            Geometry::Torus2 { lx, ly } => {
                let dx = x[0] - y[0];
                let dy = x[1] - y[1];
                let mut best = f64::INFINITY;
                for i in [-1.0, 0.0, 1.0] {
                    for j in [-1.0, 0.0, 1.0] {
                        let ax = dx + i * lx;
                        let ay = dy + j * ly;
                        best = best.min((ax * ax + ay * ay).sqrt());
                    }
                }
                best
            }
            _ => self.radius(t)? * central_angle(x, y),
        })
    }

    /// Distance between two colatitudes of the rotationally symmetric
    /// reduction, `r(t) |theta1 - theta2|`.
    pub fn latitude_distance(&self, theta1: f64, theta2: f64, t: f64) -> Result<f64> {
        Ok(self.radius(t)? * (theta1 - theta2).abs())
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Geometry::Circle { length } => 0.5 * length,
            Geometry::Torus2 { lx, ly } => 0.5 * (lx * lx + ly * ly).sqrt(),
            Geometry::SphereShrinking { r0 } | Geometry::SphereStatic { r0 } => PI * r0,
        }
    }

    /// Tightest Ricci bounds valid on the whole interval `[t0, t1]`.
    pub fn curvature_bounds(&self, t0: f64, t1: f64) -> Result<CurvatureBounds> {
        if t1 < t0 {
            return Err(Error::Domain(format!("empty time interval [{t0}, {t1}]")));
        }
        self.check_time(t0)?;
        self.check_time(t1)?;
        match self {
            Geometry::Circle { .. } | Geometry::Torus2 { .. } => Ok(CurvatureBounds::flat()),
            // 1/r(t)^2 is nondecreasing in t, so the supremum sits at t1.
            _ => CurvatureBounds::new(0.0, 1.0 / self.scale_sq(t1)?),
        }
    }

    /// Smallest eigenvalue of `d/dt g + 2 Ric` in a `g`-orthonormal basis.
    pub fn supersolution_residual(&self, p: Point, t: f64) -> Result<f64> {
        let form = self.metric_dot(p, t)?.add(&self.ricci_at(p, t)?.scale(2.0));
        let g = self.metric_at(p, t)?;
        let eig = form.eigenvalues_relative_to(&g)?;
        Ok(eig.into_iter().fold(f64::INFINITY, f64::min))
    }
}

/// Minimal periodic distance on a circle of the given length for
/// fundamental-domain coordinates.
pub(crate) fn wrap_1d(dx: f64, length: f64) -> f64 {
    let mut best = f64::INFINITY;
    for k in [-1.0, 0.0, 1.0] {
        best = best.min((dx + k * length).abs());
    }
    best
}

fn central_angle(x: Point, y: Point) -> f64 {
    let to_unit = |p: Point| {
        let (st, ct) = p[0].sin_cos();
        let (sl, cl) = p[1].sin_cos();
        [st * cl, st * sl, ct]
    };
    let a = to_unit(x);
    let b = to_unit(y);
    let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let cn = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    cn.atan2(dot)
}
