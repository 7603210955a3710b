//! Browser demo bindings. Every export returns a flat `Float64Array`; the
//! page in `www/` reshapes and plots it.

use std::f64::consts::PI;

use wasm_bindgen::prelude::*;

use twopoint::barrier::{self, Barrier, Profile};
use twopoint::equations::CoefficientFamily;
use twopoint::geometry::{CurvatureBounds, Geometry};
use twopoint::solver::{self, ScalarField, SolverControls};
use twopoint::verify::{self, TwoPointMode};

fn js(e: twopoint::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn family(p: f64) -> Result<CoefficientFamily, JsError> {
    if p == 2.0 {
        Ok(CoefficientFamily::heat())
    } else {
        CoefficientFamily::p_laplacian(p, twopoint::equations::DEFAULT_EPSILON_REG).map_err(js)
    }
}

fn circle_run(n: usize, p: f64, t_end: f64, snapshots: usize) -> Result<solver::Trajectory, JsError> {
    let geom = Geometry::circle(2.0 * PI).map_err(js)?;
    let u0 = ScalarField::from_fn(geom, n, 0.0, |x| x[0].sin()).map_err(js)?;
    let times = solver::uniform_times(0.0, t_end, snapshots.max(1));
    solver::evolve(&u0, &family(p)?, t_end, &times, SolverControls::default()).map_err(js)
}

/// Evolve `sin x` on the circle of length `2 pi` under the `p`-Laplacian
/// flow (`p = 2` is the heat equation). Returns `snapshots + 1` rows of `n`
/// values, the first row being the initial data.
#[wasm_bindgen]
pub fn evolve_circle(n: usize, p: f64, t_end: f64, snapshots: usize) -> Result<Vec<f64>, JsError> {
    let traj = circle_run(n, p, t_end, snapshots)?;
    Ok(traj.snapshots.iter().flat_map(|f| f.values.iter().copied()).collect())
}

/// Worst two-point value per snapshot of the same run, modulus form against
/// the analytic barrier `amplitude e^{-rate t} sin s` on `[0, pi/2]`.
/// Returns `(t, worst)` pairs.
#[wasm_bindgen]
pub fn two_point_series(
    n: usize,
    p: f64,
    t_end: f64,
    snapshots: usize,
    amplitude: f64,
    rate: f64,
) -> Result<Vec<f64>, JsError> {
    let traj = circle_run(n, p, t_end, snapshots)?;
    let profile = Profile::Sine { amplitude, rate, frequency: 1.0 };
    let b = Barrier::analytic(profile, PI / 2.0, 65, traj.times()).map_err(js)?;
    let mut out = Vec::with_capacity(2 * traj.snapshots.len());
    for f in &traj.snapshots {
        let row = verify::snapshot_worst(f, &b, TwoPointMode::ModulusForm).map_err(js)?;
        out.extend([row.t, row.worst]);
    }
    Ok(out)
}

/// Solve the barrier equation from `amplitude sin s` on `[0, pi/2]` with
/// forcing `delta` and no curvature term. Returns `rows` time rows of
/// `n_s` values at equally spaced times in `[0, t_end]`.
#[wasm_bindgen]
pub fn barrier_rows(
    p: f64,
    amplitude: f64,
    delta: f64,
    t_end: f64,
    n_s: usize,
    rows: usize,
) -> Result<Vec<f64>, JsError> {
    let n_s = n_s.max(4);
    let s_max = PI / 2.0;
    let phi0: Vec<f64> = (0..n_s).map(|i| amplitude * (s_max * i as f64 / (n_s - 1) as f64).sin()).collect();
    let mut t_grid = vec![0.0];
    t_grid.extend(solver::uniform_times(0.0, t_end, rows.max(2) - 1));
    let b = barrier::solve_barrier(
        &family(p)?,
        &CurvatureBounds::flat(),
        &phi0,
        s_max,
        delta,
        &t_grid,
        SolverControls::default(),
    )
    .map_err(js)?;
    let mut out = Vec::with_capacity(n_s * t_grid.len());
    for &t in b.t_grid() {
        for &s in b.s_grid() {
            out.push(b.phi(s, t).map_err(js)?);
        }
    }
    Ok(out)
}
