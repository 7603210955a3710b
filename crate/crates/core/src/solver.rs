//! Explicit, CFL-controlled time stepping of the quasilinear operator on the
//! model geometries.
//!
//! The discrete operator at a node is
//!
//! `beta * tr(H) + (alpha - beta) * (Du . H . Du) / s_eff^2 + q`
//!
//! with `H` the metric Hessian and `s_eff = sqrt(|Du|^2 + eps^2)`. Away from
//! critical points this is the projector split `alpha P + beta (I - P)`; at
//! `|Du| = 0` it falls back continuously to `beta * Laplacian`.
//!
//! Spheres are solved on the rotationally symmetric latitude reduction with
//! pole nodes; the poles use ghost-node reflection.

use std::f64::consts::PI;

use crate::equations::CoefficientFamily;
use crate::error::{Error, Result};
use crate::geometry::{Geometry, Point};

pub const DEFAULT_C_CFL: f64 = 0.4;

/// Node layout of a scalar field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grid {
    /// Periodic nodes `x_i = i h`, `h = L / n`.
    Periodic1 { n: usize, h: f64 },
    /// Periodic nodes `(i hx, j hy)`, flattened as `i + nx * j`.
    Periodic2 { nx: usize, ny: usize, hx: f64, hy: f64 },
    /// Colatitudes `theta_i = i h`, `h = pi / (n - 1)`, both poles included.
    Latitude { n: usize, h: f64 },
}

impl Grid {
    pub fn for_geometry(geom: &Geometry, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Config(format!("grid needs at least 3 nodes per axis, got {n}")));
        }
        Ok(match *geom {
            Geometry::Circle { length } => Grid::Periodic1 { n, h: length / n as f64 },
            Geometry::Torus2 { lx, ly } => Grid::Periodic2 { nx: n, ny: n, hx: lx / n as f64, hy: ly / n as f64 },
            Geometry::SphereShrinking { .. } | Geometry::SphereStatic { .. } => {
                Grid::Latitude { n, h: PI / (n - 1) as f64 }
            }
        })
    }

    pub fn len(&self) -> usize {
        match *self {
            Grid::Periodic1 { n, .. } | Grid::Latitude { n, .. } => n,
            Grid::Periodic2 { nx, ny, .. } => nx * ny,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> Point {
        match *self {
            Grid::Periodic1 { h, .. } | Grid::Latitude { h, .. } => [i as f64 * h, 0.0],
            Grid::Periodic2 { nx, hx, hy, .. } => [(i % nx) as f64 * hx, (i / nx) as f64 * hy],
        }
    }

    /// Chart spacing (before metric scaling).
    pub fn spacing(&self) -> f64 {
        match *self {
            Grid::Periodic1 { h, .. } | Grid::Latitude { h, .. } => h,
            Grid::Periodic2 { hx, hy, .. } => hx.min(hy),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub geom: Geometry,
    pub grid: Grid,
    pub t: f64,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn from_fn(geom: Geometry, n: usize, t: f64, f: impl Fn(Point) -> f64) -> Result<Self> {
        geom.check_time(t)?;
        let grid = Grid::for_geometry(&geom, n)?;
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        ScalarField::new(geom, grid, t, values)
    }

    pub fn new(geom: Geometry, grid: Grid, t: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!("{} values for a grid of {} nodes", values.len(), grid.len())));
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence { node, t });
        }
        Ok(ScalarField { geom, grid, t, values })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Distance between two nodes at the field's time.
    pub fn node_distance(&self, i: usize, j: usize) -> Result<f64> {
        match self.grid {
            Grid::Latitude { h, .. } => self.geom.latitude_distance(i as f64 * h, j as f64 * h, self.t),
            _ => self.geom.distance(self.grid.point(i), self.grid.point(j), self.t),
        }
    }

    /// Metric grid spacing at time `t`.
    fn metric_spacing(&self, t: f64) -> Result<f64> {
        Ok(self.grid.spacing() * self.geom.radius(t)?)
    }
}

/// Local first and second derivatives at a node, expressed in a
/// metric-orthonormal frame.
#[derive(Debug, Clone, Copy)]
struct Jet {
    grad_sq: f64,
    laplacian: f64,
    /// `Du . H . Du`
    hess_along: f64,
}

fn jet(field: &ScalarField, i: usize, r_sq: f64) -> Jet {
    let u = &field.values;
    match field.grid {
        Grid::Periodic1 { n, h } => {
            let (l, r) = ((i + n - 1) % n, (i + 1) % n);
            let ux = (u[r] - u[l]) / (2.0 * h);
            let uxx = (u[r] - 2.0 * u[i] + u[l]) / (h * h);
            Jet { grad_sq: ux * ux, laplacian: uxx, hess_along: ux * ux * uxx }
        }
        Grid::Periodic2 { nx, ny, hx, hy } => {
            let (ix, iy) = (i % nx, i / nx);
            let at = |a: usize, b: usize| u[a % nx + nx * (b % ny)];
            let (xl, xr, yd, yu) = (ix + nx - 1, ix + 1, iy + ny - 1, iy + 1);
            let c = u[i];
            let ux = (at(xr, iy) - at(xl, iy)) / (2.0 * hx);
            let uy = (at(ix, yu) - at(ix, yd)) / (2.0 * hy);
            let uxx = (at(xr, iy) - 2.0 * c + at(xl, iy)) / (hx * hx);
            let uyy = (at(ix, yu) - 2.0 * c + at(ix, yd)) / (hy * hy);
            let uxy = (at(xr, yu) - at(xr, yd) - at(xl, yu) + at(xl, yd)) / (4.0 * hx * hy);
            Jet {
                grad_sq: ux * ux + uy * uy,
                laplacian: uxx + uyy,
                hess_along: ux * ux * uxx + 2.0 * ux * uy * uxy + uy * uy * uyy,
            }
        }
        Grid::Latitude { n, h } => {
            if i == 0 || i == n - 1 {
                // Ghost reflection u(-h) = u(h): u_theta = 0 and
                // cot(theta) u_theta -> u_thetatheta.
                let nb = if i == 0 { 1 } else { n - 2 };
                let utt = 2.0 * (u[nb] - u[i]) / (h * h) / r_sq;
                Jet { grad_sq: 0.0, laplacian: 2.0 * utt, hess_along: 0.0 }
            } else {
                let theta = i as f64 * h;
                let ut = (u[i + 1] - u[i - 1]) / (2.0 * h);
                let utt = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h);
                let grad_sq = ut * ut / r_sq;
                let tangential = ut * theta.cos() / theta.sin();
                Jet { grad_sq, laplacian: (utt + tangential) / r_sq, hess_along: grad_sq * utt / r_sq }
            }
        }
    }
}

fn map_nodes(n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if n >= 4096 {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Metric norm of the differential at every node. Centered differences,
/// periodic wrap on flat families, one-sided differences at sphere poles.
pub fn gradient_norm(field: &ScalarField) -> Result<Vec<f64>> {
    let r_sq = field.geom.scale_sq(field.t)?;
    let u = &field.values;
    Ok(match field.grid {
        Grid::Latitude { n, h } => {
            let r = r_sq.sqrt();
            (0..n)
                .map(|i| {
                    let ut = if i == 0 {
                        (u[1] - u[0]) / h
                    } else if i == n - 1 {
                        (u[n - 1] - u[n - 2]) / h
                    } else {
                        (u[i + 1] - u[i - 1]) / (2.0 * h)
                    };
                    ut.abs() / r
                })
                .collect()
        }
        _ => (0..field.grid.len()).map(|i| jet(field, i, r_sq).grad_sq.sqrt()).collect(),
    })
}

/// Right-hand side of the equation at every node, evaluated with the metric
/// at the field's time. For the heat family this is the metric Laplacian.
pub fn spatial_operator(field: &ScalarField, fam: &CoefficientFamily) -> Result<Vec<f64>> {
    let r_sq = field.geom.scale_sq(field.t)?;
    let t = field.t;
    Ok(map_nodes(field.grid.len(), |i| {
        let j = jet(field, i, r_sq);
        let grad = j.grad_sq.sqrt();
        let c = fam.evaluate(field.values[i], grad, t);
        let s_eff_sq = j.grad_sq + fam.epsilon_reg * fam.epsilon_reg;
        let along = if s_eff_sq > 0.0 { j.hess_along / s_eff_sq } else { 0.0 };
        c.beta * j.laplacian + (c.alpha - c.beta) * along + c.q
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverControls {
    pub c_cfl: f64,
}

impl Default for SolverControls {
    fn default() -> Self {
        SolverControls { c_cfl: DEFAULT_C_CFL }
    }
}

fn max_diffusivity(field: &ScalarField, fam: &CoefficientFamily) -> Result<f64> {
    let grads = gradient_norm(field)?;
    let mut worst = 0.0_f64;
    for (i, g) in grads.iter().enumerate() {
        let c = fam.evaluate(field.values[i], *g, field.t);
        let d = c.alpha.max(c.beta);
        if !d.is_finite() {
            return Err(Error::Config(format!("non-finite diffusivity at node {i}")));
        }
        worst = worst.max(d);
    }
    if worst <= 0.0 {
        return Err(Error::Config("diffusivity vanishes at every node".into()));
    }
    Ok(worst)
}

/// Largest stable explicit step `c_cfl h_eff^2 / (2 max(alpha, beta))`.
/// On a shrinking sphere `h_eff` is taken at the end of the step.
pub fn cfl_dt(field: &ScalarField, fam: &CoefficientFamily, controls: SolverControls) -> Result<f64> {
    let diff = max_diffusivity(field, fam)?;
    let bound = |h_eff: f64| controls.c_cfl * h_eff * h_eff / (2.0 * diff);
    let dt0 = bound(field.metric_spacing(field.t)?);
    if field.geom.horizon().is_none() {
        return Ok(dt0);
    }
    // r(t + dt1) >= r(t + dt0) since dt1 <= dt0, so dt1 is safe at its own end.
    Ok(bound(field.metric_spacing(field.t + dt0)?))
}

/// One explicit Euler step of size `dt`.
pub fn step(field: &ScalarField, fam: &CoefficientFamily, dt: f64, controls: SolverControls) -> Result<ScalarField> {
    let limit = cfl_dt(field, fam, controls)?;
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::Stability { dt, limit });
    }
    step_unchecked(field, fam, dt)
}

fn step_unchecked(field: &ScalarField, fam: &CoefficientFamily, dt: f64) -> Result<ScalarField> {
    let t_next = field.t + dt;
    field.geom.check_time(t_next)?;
    let rhs = spatial_operator(field, fam)?;
    let values: Vec<f64> = field.values.iter().zip(&rhs).map(|(u, r)| u + dt * r).collect();
    if let Some(node) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Divergence { node, t: t_next });
    }
    Ok(ScalarField { geom: field.geom, grid: field.grid, t: t_next, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<ScalarField>,
    pub controls: SolverControls,
    pub steps: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &ScalarField {
        self.snapshots.last().expect("trajectory holds at least the initial field")
    }
}

/// `count` equally spaced times in `(t0, t_end]`.
pub fn uniform_times(t0: f64, t_end: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|k| t0 + (t_end - t0) * k as f64 / count as f64).collect()
}

/// Snapshot schedule: the requested times inside `(t0, t_end]`, sorted and
/// deduplicated, always ending at `t_end`.
pub(crate) fn schedule(t0: f64, t_end: f64, snapshot_times: &[f64]) -> Vec<f64> {
    let mut times: Vec<f64> = snapshot_times.iter().copied().filter(|s| *s > t0 && *s < t_end).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    if t_end > t0 {
        times.push(t_end);
    }
    times
}

/// Step `u0` to `t_end`, landing exactly on every snapshot time.
pub fn evolve(
    u0: &ScalarField,
    fam: &CoefficientFamily,
    t_end: f64,
    snapshot_times: &[f64],
    controls: SolverControls,
) -> Result<Trajectory> {
    u0.geom.check_time(t_end)?;
    if t_end < u0.t {
        return Err(Error::Domain(format!("t_end = {t_end} precedes the initial time {}", u0.t)));
    }
    let mut snapshots = vec![u0.clone()];
    let mut current = u0.clone();
    let mut steps = 0;
    for target in schedule(u0.t, t_end, snapshot_times) {
        while current.t < target {
            let dt = cfl_dt(&current, fam, controls)?;
            let next = if current.t + dt >= target * (1.0 - 1e-14) {
                let mut f = step_unchecked(&current, fam, target - current.t)?;
                f.t = target;
                f
            } else {
                step_unchecked(&current, fam, dt)?
            };
            current = next;
            steps += 1;
        }
        snapshots.push(current.clone());
    }
    Ok(Trajectory { snapshots, controls, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equations::{EquationForm, Family};

    fn circle(n: usize, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::from_fn(Geometry::circle(2.0 * PI).unwrap(), n, 0.0, |p| f(p[0])).unwrap()
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let f = circle(16, |_| 3.0);
        assert!(gradient_norm(&f).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn gradient_of_sine_peaks_at_one() {
        let f = circle(512, f64::sin);
        let m = gradient_norm(&f).unwrap().into_iter().fold(0.0, f64::max);
        assert!((m - 1.0).abs() < 1e-4, "{m}");
    }

    #[test]
    fn sphere_gradient_is_scaled_by_radius() {
        let g = Geometry::sphere_static(2.0).unwrap();
        let f = ScalarField::from_fn(g, 257, 0.0, |p| p[0].cos()).unwrap();
        let grads = gradient_norm(&f).unwrap();
        let (imax, m) = grads.iter().enumerate().fold((0, 0.0), |a, (i, g)| if *g > a.1 { (i, *g) } else { a });
        assert!((m - 0.5).abs() < 1e-4);
        assert_eq!(imax, 128);
    }

    #[test]
    fn constant_field_is_stationary() {
        for fam in [
            CoefficientFamily::heat(),
            CoefficientFamily::p_laplacian(3.0, 1e-6).unwrap(),
            CoefficientFamily::new(Family::GraphicalMcf, 1e-6, EquationForm::Eq15).unwrap(),
        ] {
            let f = circle(32, |_| 1.5);
            let dt = cfl_dt(&f, &fam, SolverControls::default()).unwrap();
            assert!(dt.is_finite() && dt > 0.0);
            let g = step(&f, &fam, dt, SolverControls::default()).unwrap();
            assert_eq!(g.values, f.values);
        }
    }

    #[test]
    fn cfl_formula() {
        // L = 2 pi, n chosen so that h = 0.1 -> dt = 0.4 * 0.01 / 2
        let g = Geometry::circle(6.4).unwrap();
        let f = ScalarField::from_fn(g, 64, 0.0, |_| 0.0).unwrap();
        let dt = cfl_dt(&f, &CoefficientFamily::heat(), SolverControls::default()).unwrap();
        assert!((dt - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn cfl_scales_with_p_laplacian_diffusivity() {
        let g = Geometry::circle(2.0 * PI).unwrap();
        // slope 2 everywhere except the wrap: use 2 sin(x) whose max slope is 2.
        let f = ScalarField::from_fn(g, 2048, 0.0, |p| 2.0 * p[0].sin()).unwrap();
        let heat = cfl_dt(&f, &CoefficientFamily::heat(), SolverControls::default()).unwrap();
        let pl = cfl_dt(&f, &CoefficientFamily::p_laplacian(3.0, 0.0).unwrap(), SolverControls::default()).unwrap();
        assert!((heat / pl - 4.0).abs() < 1e-4, "{}", heat / pl);
    }

    #[test]
    fn step_rejects_oversized_dt() {
        let f = circle(32, f64::sin);
        let fam = CoefficientFamily::heat();
        let dt = cfl_dt(&f, &fam, SolverControls::default()).unwrap();
        assert!(matches!(step(&f, &fam, 2.0 * dt, SolverControls::default()), Err(Error::Stability { .. })));
    }

    #[test]
    fn heat_on_circle_matches_separation_of_variables() {
        let f = circle(256, f64::sin);
        let traj = evolve(&f, &CoefficientFamily::heat(), 0.1, &[], SolverControls::default()).unwrap();
        let last = traj.last();
        assert_eq!(last.t, 0.1);
        let err = (0..256)
            .map(|i| (last.values[i] - (-0.1f64).exp() * last.grid.point(i)[0].sin()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 5e-4, "{err}");
    }

    #[test]
    fn heat_on_static_sphere_decays_first_eigenfunction() {
        let g = Geometry::sphere_static(1.0).unwrap();
        let f = ScalarField::from_fn(g, 129, 0.0, |p| p[0].cos()).unwrap();
        let traj = evolve(&f, &CoefficientFamily::heat(), 0.1, &[], SolverControls::default()).unwrap();
        let last = traj.last();
        let err = (0..129)
            .map(|i| (last.values[i] - (-0.2f64).exp() * last.grid.point(i)[0].cos()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-3, "{err}");
    }

    #[test]
    fn evolve_to_initial_time_keeps_only_u0() {
        let f = circle(16, f64::sin);
        let traj = evolve(&f, &CoefficientFamily::heat(), 0.0, &[0.5], SolverControls::default()).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.snapshots[0], f);
    }

    #[test]
    fn snapshots_land_exactly() {
        let f = circle(64, f64::sin);
        let traj = evolve(&f, &CoefficientFamily::heat(), 0.3, &[0.1, 0.2, 0.05], SolverControls::default()).unwrap();
        assert_eq!(traj.times(), vec![0.0, 0.05, 0.1, 0.2, 0.3]);
    }

    #[test]
    fn evolve_rejects_sphere_horizon() {
        let g = Geometry::sphere_shrinking(1.0).unwrap();
        let f = ScalarField::from_fn(g, 33, 0.0, |p| p[0].cos()).unwrap();
        let err = evolve(&f, &CoefficientFamily::heat(), 0.5, &[], SolverControls::default()).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn maximum_principle_on_all_geometries() {
        let fields = vec![
            circle(64, |x| (3.0 * x).sin() + 0.3 * x.cos()),
            ScalarField::from_fn(Geometry::torus2(1.0, 1.0).unwrap(), 24, 0.0, |p| {
                (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).cos() + 0.2 * (4.0 * PI * p[1]).sin()
            })
            .unwrap(),
            ScalarField::from_fn(Geometry::sphere_shrinking(1.0).unwrap(), 65, 0.0, |p| (2.0 * p[0]).cos() + p[0])
                .unwrap(),
        ];
        for fam in [CoefficientFamily::heat(), CoefficientFamily::p_laplacian(3.0, 1e-6).unwrap()] {
            for f in &fields {
                let times = uniform_times(0.0, 0.2, 40);
                let traj = evolve(f, &fam, 0.2, &times, SolverControls::default()).unwrap();
                for w in traj.snapshots.windows(2) {
                    assert!(w[1].max() <= w[0].max() + 1e-10);
                    assert!(w[1].min() >= w[0].min() - 1e-10);
                }
            }
        }
    }

    #[test]
    fn even_data_stays_even() {
        let n = 64;
        let f = circle(n, |x| x.cos() + 0.5 * (2.0 * x).cos());
        let traj = evolve(&f, &CoefficientFamily::p_laplacian(3.0, 1e-6).unwrap(), 0.2, &[], SolverControls::default())
            .unwrap();
        let u = &traj.last().values;
        for i in 1..n {
            assert!((u[i] - u[n - i]).abs() <= 1e-12);
        }
    }
}
