//! Barrier profiles `phi(s, t)` on `[0, S] x [0, T]`, their admissibility
//! conditions, and the monotone inverse `Psi(z, t)` with `phi(Psi(z, t), t) = z`.
//!
//! A barrier is either analytic (exact derivatives) or tabulated on a tensor
//! grid. Tabulated barriers interpolate with piecewise cubic Hermite
//! polynomials in `s` and linearly in `t`.
//!
//! Grid stencils for tabulated barriers: centered differences inside and
//! one-sided three-point slopes at both ends. The second difference at an
//! end is carried over from its interior neighbour, except that barriers
//! built by [`solve_barrier`] are reflected oddly about `phi(0, t)`, which
//! pins `phi'' = 0` at `s = 0`. The same stencils drive [`solve_barrier`]
//! and [`verify_condition`].

use std::io::{Read, Write};

use crate::equations::CoefficientFamily;
use crate::error::{Error, Result};
use crate::geometry::CurvatureBounds;
use crate::solver::SolverControls;

pub const DEFAULT_MARGIN: f64 = 1e-8;
const INVERT_TOL: f64 = 1e-12;

/// Closed-form barrier descriptors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `slope * s + offset + drift * t`
    Linear { slope: f64, offset: f64, drift: f64 },
    /// `amplitude * exp(-rate * t) * sin(frequency * s)`
    Sine { amplitude: f64, rate: f64, frequency: f64 },
}

impl Profile {
    pub fn jet(&self, s: f64, t: f64) -> BarrierJet {
        match *self {
            Profile::Linear { slope, offset, drift } => {
                BarrierJet { phi: slope * s + offset + drift * t, phi_s: slope, phi_ss: 0.0, phi_t: drift }
            }
            Profile::Sine { amplitude, rate, frequency } => {
                let a = amplitude * (-rate * t).exp();
                let (sn, cs) = (frequency * s).sin_cos();
                BarrierJet {
                    phi: a * sn,
                    phi_s: a * frequency * cs,
                    phi_ss: -(a * frequency * frequency * sn),
                    phi_t: -(rate * a * sn),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierJet {
    pub phi: f64,
    pub phi_s: f64,
    pub phi_ss: f64,
    pub phi_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Analytic(Profile),
    Tabulated {
        phi: Vec<Vec<f64>>,
        /// Node slopes used by the Hermite interpolant, per time row.
        slopes: Vec<Vec<f64>>,
        phi_t: Option<Vec<Vec<f64>>>,
        odd_origin: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Barrier {
    s_grid: Vec<f64>,
    t_grid: Vec<f64>,
    repr: Repr,
}

/// Relative slack for grid positions, wide enough for values that went
/// through nine-digit CSV.
const GRID_TOL: f64 = 1e-8;

fn uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn check_grids(s_grid: &[f64], t_grid: &[f64]) -> Result<()> {
    if s_grid.len() < 4 {
        return Err(Error::Config("barrier s-grid needs at least 4 nodes".into()));
    }
    if s_grid[0] != 0.0 {
        return Err(Error::Config("barrier s-grid must start at 0".into()));
    }
    if t_grid.is_empty() {
        return Err(Error::Config("barrier t-grid is empty".into()));
    }
    for g in [s_grid, t_grid] {
        if g.windows(2).any(|w| !(w[1] > w[0])) || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("barrier grids must be finite and strictly increasing".into()));
        }
    }
    Ok(())
}

/// Grid derivatives `(phi', phi'')` of one time row, uniform spacing `h`.
pub fn row_derivatives(row: &[f64], h: f64, odd_origin: bool) -> (Vec<f64>, Vec<f64>) {
    let n = row.len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 1..n - 1 {
        d1[i] = (row[i + 1] - row[i - 1]) / (2.0 * h);
        d2[i] = (row[i + 1] - 2.0 * row[i] + row[i - 1]) / (h * h);
    }
    d1[0] = (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * h);
    d1[n - 1] = (3.0 * row[n - 1] - 4.0 * row[n - 2] + row[n - 3]) / (2.0 * h);
    d2[0] = if odd_origin { 0.0 } else { d2[1] };
    d2[n - 1] = d2[n - 2];
    (d1, d2)
}

fn hermite(x0: f64, h: f64, p0: f64, p1: f64, m0: f64, m1: f64, x: f64) -> (f64, f64, f64) {
    let u = (x - x0) / h;
    let (u2, u3) = (u * u, u * u * u);
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    let v = h00 * p0 + h10 * h * m0 + h01 * p1 + h11 * h * m1;
    let d = ((6.0 * u2 - 6.0 * u) * p0
        + (3.0 * u2 - 4.0 * u + 1.0) * h * m0
        + (-6.0 * u2 + 6.0 * u) * p1
        + (3.0 * u2 - 2.0 * u) * h * m1)
        / h;
    let dd = ((12.0 * u - 6.0) * p0 + (6.0 * u - 4.0) * h * m0 + (-12.0 * u + 6.0) * p1 + (6.0 * u - 2.0) * h * m1)
        / (h * h);
    (v, d, dd)
}

impl Barrier {
    /// Analytic barrier checked on a uniform `n_s`-node grid over `[0, s_max]`
    /// at the times of `t_grid`.
    pub fn analytic(profile: Profile, s_max: f64, n_s: usize, t_grid: Vec<f64>) -> Result<Self> {
        if !(s_max > 0.0) {
            return Err(Error::Config(format!("barrier domain [0, {s_max}] is empty")));
        }
        let s_grid = uniform(0.0, s_max, n_s.max(4));
        check_grids(&s_grid, &t_grid)?;
        Ok(Barrier { s_grid, t_grid, repr: Repr::Analytic(profile) })
    }

    /// Tabulated barrier; `phi[k][i]` is the value at `(s_grid[i], t_grid[k])`.
    /// The s-grid must be uniform. `phi_t`, when given, supplies exact time
    /// derivatives at the nodes; otherwise they come from time differences.
    pub fn tabulated(
        s_grid: Vec<f64>,
        t_grid: Vec<f64>,
        phi: Vec<Vec<f64>>,
        phi_t: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        Self::tabulated_with(s_grid, t_grid, phi, phi_t, false)
    }

    fn tabulated_with(
        s_grid: Vec<f64>,
        t_grid: Vec<f64>,
        phi: Vec<Vec<f64>>,
        phi_t: Option<Vec<Vec<f64>>>,
        odd_origin: bool,
    ) -> Result<Self> {
        check_grids(&s_grid, &t_grid)?;
        let span = s_grid[s_grid.len() - 1];
        let h = span / (s_grid.len() - 1) as f64;
        if s_grid.iter().enumerate().any(|(i, s)| (s - i as f64 * h).abs() > GRID_TOL * span) {
            return Err(Error::Config("tabulated barrier s-grid must be uniform".into()));
        }
        // Tables read back from nine-digit CSV are uniform only up to rounding.
        let s_grid = uniform(0.0, span, s_grid.len());
        let shape_ok = |tab: &Vec<Vec<f64>>| {
            tab.len() == t_grid.len() && tab.iter().all(|r| r.len() == s_grid.len() && r.iter().all(|v| v.is_finite()))
        };
        if !shape_ok(&phi) || phi_t.as_ref().is_some_and(|p| !shape_ok(p)) {
            return Err(Error::Config(
                "barrier table shape does not match its grids or holds non-finite values".into(),
            ));
        }
        let slopes = phi.iter().map(|row| row_derivatives(row, h, odd_origin).0).collect();
        Ok(Barrier { s_grid, t_grid, repr: Repr::Tabulated { phi, slopes, phi_t, odd_origin } })
    }

    pub fn s_grid(&self) -> &[f64] {
        &self.s_grid
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn s_max(&self) -> f64 {
        self.s_grid[self.s_grid.len() - 1]
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self.repr, Repr::Analytic(_))
    }

    pub fn profile(&self) -> Option<Profile> {
        match self.repr {
            Repr::Analytic(p) => Some(p),
            Repr::Tabulated { .. } => None,
        }
    }

    fn h(&self) -> f64 {
        self.s_grid[1] - self.s_grid[0]
    }

    fn check_domain(&self, s: f64, t: f64) -> Result<f64> {
        let s_max = self.s_max();
        let (t0, t1) = (self.t_grid[0], self.t_grid[self.t_grid.len() - 1]);
        let tol_s = GRID_TOL * s_max;
        let tol_t = GRID_TOL * t1.abs().max(1.0);
        if !(s >= -tol_s && s <= s_max + tol_s) || !(t >= t0 - tol_t && t <= t1 + tol_t) {
            return Err(Error::Domain(format!("({s}, {t}) outside the barrier domain [0, {s_max}] x [{t0}, {t1}]")));
        }
        Ok(s.clamp(0.0, s_max))
    }

    /// Time row bracketing `t`: `(k, weight of row k + 1)`.
    fn time_slot(&self, t: f64) -> (usize, f64) {
        let g = &self.t_grid;
        let tol = GRID_TOL * t.abs().max(1.0);
        if let Some(k) = g.iter().position(|v| (v - t).abs() <= tol) {
            return (k, 0.0);
        }
        let k = g.partition_point(|v| *v <= t).saturating_sub(1).min(g.len().saturating_sub(2));
        if g.len() == 1 {
            return (0, 0.0);
        }
        (k, ((t - g[k]) / (g[k + 1] - g[k])).clamp(0.0, 1.0))
    }

    fn row_eval(&self, k: usize, s: f64) -> (f64, f64, f64) {
        let Repr::Tabulated { phi, slopes, .. } = &self.repr else { unreachable!() };
        let h = self.h();
        let n = self.s_grid.len();
        let i = ((s / h).floor() as usize).min(n - 2);
        hermite(self.s_grid[i], h, phi[k][i], phi[k][i + 1], slopes[k][i], slopes[k][i + 1], s)
    }

    fn row_phi_t(&self, k: usize, s: f64) -> f64 {
        let Repr::Tabulated { phi_t, .. } = &self.repr else { unreachable!() };
        if let Some(pt) = phi_t {
            let h = self.h();
            let i = ((s / h).floor() as usize).min(self.s_grid.len() - 2);
            let w = (s - self.s_grid[i]) / h;
            return pt[k][i] + w * (pt[k][i + 1] - pt[k][i]);
        }
        let g = &self.t_grid;
        let m = g.len();
        if m < 2 {
            return 0.0;
        }
        let (a, b) = if k == 0 {
            (0, 1)
        } else if k == m - 1 {
            (m - 2, m - 1)
        } else {
            (k - 1, k + 1)
        };
        (self.row_eval(b, s).0 - self.row_eval(a, s).0) / (g[b] - g[a])
    }

    /// `(phi, phi_s, phi_ss, phi_t)` at `(s, t)`.
    pub fn eval(&self, s: f64, t: f64) -> Result<BarrierJet> {
        let s = self.check_domain(s, t)?;
        if let Repr::Analytic(p) = &self.repr {
            return Ok(p.jet(s, t));
        }
        let (k, w) = self.time_slot(t);
        let (v0, d0, dd0) = self.row_eval(k, s);
        let pt0 = self.row_phi_t(k, s);
        if w == 0.0 {
            return Ok(BarrierJet { phi: v0, phi_s: d0, phi_ss: dd0, phi_t: pt0 });
        }
        let (v1, d1, dd1) = self.row_eval(k + 1, s);
        let g = &self.t_grid;
        let phi_t = if matches!(self.repr, Repr::Tabulated { phi_t: Some(_), .. }) {
            (1.0 - w) * pt0 + w * self.row_phi_t(k + 1, s)
        } else {
            (v1 - v0) / (g[k + 1] - g[k])
        };
        let lerp = |a: f64, b: f64| (1.0 - w) * a + w * b;
        Ok(BarrierJet { phi: lerp(v0, v1), phi_s: lerp(d0, d1), phi_ss: lerp(dd0, dd1), phi_t })
    }

    pub fn phi(&self, s: f64, t: f64) -> Result<f64> {
        Ok(self.eval(s, t)?.phi)
    }

    /// Jet at grid node `(i, k)`: exact for analytic barriers, grid stencils
    /// otherwise.
    pub fn node_jet(&self, i: usize, k: usize) -> BarrierJet {
        match &self.repr {
            Repr::Analytic(p) => p.jet(self.s_grid[i], self.t_grid[k]),
            Repr::Tabulated { phi, odd_origin, .. } => {
                let (d1, d2) = row_derivatives(&phi[k], self.h(), *odd_origin);
                BarrierJet { phi: phi[k][i], phi_s: d1[i], phi_ss: d2[i], phi_t: self.row_phi_t(k, self.s_grid[i]) }
            }
        }
    }

    /// `Psi(z, t)`: the `s` with `phi(s, t) = z`.
    pub fn invert(&self, z: f64, t: f64) -> Result<f64> {
        let s_max = self.s_max();
        let lo = self.phi(0.0, t)?;
        let hi = self.phi(s_max, t)?;
        let slack = INVERT_TOL * lo.abs().max(hi.abs()).max(1.0);
        if !(z >= lo - slack && z <= hi + slack) {
            return Err(Error::Range { z, lo, hi, t });
        }
        if let Repr::Analytic(Profile::Linear { slope, offset, drift }) = self.repr {
            if slope > 0.0 {
                return Ok(((z - offset - drift * t) / slope).clamp(0.0, s_max));
            }
        }
        let (mut a, mut b) = (0.0, s_max);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let v = self.phi(m, t)?;
            if (v - z).abs() <= INVERT_TOL * z.abs().max(1.0) || b - a <= f64::EPSILON * s_max {
                return Ok(m);
            }
            if v < z {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// Values at every `(s, t)` grid node, time-major.
    pub fn table(&self) -> Vec<(f64, f64, f64)> {
        let mut rows = Vec::with_capacity(self.s_grid.len() * self.t_grid.len());
        for (k, &t) in self.t_grid.iter().enumerate() {
            for (i, &s) in self.s_grid.iter().enumerate() {
                rows.push((s, t, self.node_jet(i, k).phi));
            }
        }
        rows
    }

    /// CSV with columns `s,t,phi`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["s", "t", "phi"])?;
        for (s, t, p) in self.table() {
            out.write_record([fmt_g(s), fmt_g(t), fmt_g(p)])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Read a `s,t,phi` CSV covering a full tensor grid.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["s", "t", "phi"] {
            return Err(Error::Config(format!(
                "barrier CSV header must be s,t,phi, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut pts = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |j: usize| {
                rec[j].trim().parse::<f64>().map_err(|e| Error::Parse { line: line + 2, message: e.to_string() })
            };
            pts.push((parse(0)?, parse(1)?, parse(2)?));
        }
        let mut s_grid: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let mut t_grid: Vec<f64> = pts.iter().map(|p| p.1).collect();
        for g in [&mut s_grid, &mut t_grid] {
            g.sort_by(f64::total_cmp);
            g.dedup();
        }
        if s_grid.len() * t_grid.len() != pts.len() {
            return Err(Error::Config("barrier CSV does not cover a full (s, t) grid".into()));
        }
        let mut phi = vec![vec![f64::NAN; s_grid.len()]; t_grid.len()];
        for (s, t, p) in pts {
            let i = s_grid.partition_point(|v| *v < s);
            let k = t_grid.partition_point(|v| *v < t);
            phi[k][i] = p;
        }
        Barrier::tabulated(s_grid, t_grid, phi, None)
    }
}

/// Nine significant digits, scientific notation.
pub(crate) fn fmt_g(v: f64) -> String {
    format!("{v:.8e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionMode {
    /// Time-frozen monotone quotient with numerator `phi'' alpha + q`.
    Elliptic13,
    /// Monotone quotient with numerator `phi_t - phi'' alpha + q`.
    ParabolicThm14,
    /// `phi_t >= phi'' alpha(phi') + kappa s |phi' (1 - beta(phi'))|`.
    ParabolicEq16,
}

impl ConditionMode {
    pub fn name(&self) -> &'static str {
        match self {
            ConditionMode::Elliptic13 => "elliptic_1_3",
            ConditionMode::ParabolicThm14 => "parabolic_thm14",
            ConditionMode::ParabolicEq16 => "parabolic_eq16",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRow {
    pub s: f64,
    pub t: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub mode: ConditionMode,
    pub margin: f64,
    /// Minimum residual for `ParabolicEq16`, maximum quotient derivative for
    /// the quotient modes.
    pub worst_residual: f64,
    pub worst_location: (f64, f64),
    pub pass: bool,
    pub rows: Vec<ResidualRow>,
}

/// Slack below which `phi' >= 0` counts as violated in the `ParabolicEq16`
/// mode, relative to the largest slope.
const EQ16_SLOPE_TOL: f64 = 1e-9;

fn centered_derivative(q: &[f64], h: f64) -> Vec<f64> {
    let n = q.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (-3.0 * q[0] + 4.0 * q[1] - q[2]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * q[n - 1] - 4.0 * q[n - 2] + q[n - 3]) / (2.0 * h)
            } else {
                (q[i + 1] - q[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// Right side of the `ParabolicEq16` barrier equation without forcing.
pub(crate) fn eq16_rhs(fam: &CoefficientFamily, kappa: f64, s: f64, j: &BarrierJet, t: f64) -> f64 {
    let c = fam.evaluate(j.phi, j.phi_s.abs(), t);
    j.phi_ss * c.alpha + kappa * s * (j.phi_s * (1.0 - c.beta)).abs()
}

/// Check the barrier inequality of `mode` at every grid node.
pub fn verify_condition(
    b: &Barrier,
    fam: &CoefficientFamily,
    mode: ConditionMode,
    bounds: &CurvatureBounds,
    margin: f64,
) -> Result<ConditionReport> {
    let h = b.h();
    let mut rows = Vec::with_capacity(b.s_grid.len() * b.t_grid.len());
    for (k, &t) in b.t_grid.iter().enumerate() {
        let jets: Vec<BarrierJet> = (0..b.s_grid.len()).map(|i| b.node_jet(i, k)).collect();
        let max_slope = jets.iter().fold(0.0_f64, |a, j| a.max(j.phi_s.abs()));
        for (i, j) in jets.iter().enumerate() {
            let s = b.s_grid[i];
            let bad = match mode {
                ConditionMode::ParabolicEq16 => j.phi_s < -EQ16_SLOPE_TOL * max_slope.max(1.0),
                _ => !(j.phi_s > 0.0),
            };
            if bad {
                return Err(Error::Monotonicity { slope: j.phi_s, s, t });
            }
        }
        match mode {
            ConditionMode::ParabolicEq16 => {
                for (i, j) in jets.iter().enumerate() {
                    let s = b.s_grid[i];
                    rows.push(ResidualRow { s, t, residual: j.phi_t - eq16_rhs(fam, bounds.kappa, s, j, t) });
                }
            }
            ConditionMode::ParabolicThm14 | ConditionMode::Elliptic13 => {
                let mut quotient = Vec::with_capacity(jets.len());
                for (i, j) in jets.iter().enumerate() {
                    let c = fam.evaluate(j.phi, j.phi_s, t);
                    if c.beta == 0.0 {
                        return Err(Error::Division { s: b.s_grid[i], t });
                    }
                    let numerator = if mode == ConditionMode::ParabolicThm14 {
                        j.phi_t - j.phi_ss * c.alpha + c.q
                    } else {
                        j.phi_ss * c.alpha + c.q
                    };
                    quotient.push(numerator / (j.phi_s * c.beta));
                }
                for (i, d) in centered_derivative(&quotient, h).into_iter().enumerate() {
                    rows.push(ResidualRow { s: b.s_grid[i], t, residual: d });
                }
            }
        }
    }
    let pick_min = mode == ConditionMode::ParabolicEq16;
    let mut worst = rows[0];
    for r in &rows[1..] {
        if (pick_min && r.residual < worst.residual) || (!pick_min && r.residual > worst.residual) {
            worst = *r;
        }
    }
    let pass = if pick_min { worst.residual >= margin } else { worst.residual < 0.0 && worst.residual <= -margin };
    Ok(ConditionReport { mode, margin, worst_residual: worst.residual, worst_location: (worst.s, worst.t), pass, rows })
}

/// Integrate `phi_t = phi'' alpha(phi', t) + kappa s |phi' (1 - beta(phi', t))| + delta`
/// from `phi0` (sampled on a uniform grid over `[0, s_max]`) through the
/// times of `t_grid`, which must start at 0.
pub fn solve_barrier(
    fam: &CoefficientFamily,
    bounds: &CurvatureBounds,
    phi0: &[f64],
    s_max: f64,
    delta: f64,
    t_grid: &[f64],
    controls: SolverControls,
) -> Result<Barrier> {
    if !(delta >= 0.0) {
        return Err(Error::Config(format!("delta must be nonnegative, got {delta}")));
    }
    let n = phi0.len();
    let s_grid = uniform(0.0, s_max, n.max(4));
    check_grids(&s_grid, t_grid)?;
    if t_grid[0] != 0.0 {
        return Err(Error::Config("barrier time grid must start at 0".into()));
    }
    if phi0.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("phi0 must be strictly increasing".into()));
    }
    let h = s_grid[1] - s_grid[0];
    let kappa = bounds.kappa;

    let rhs = |row: &[f64], t: f64| -> (Vec<f64>, f64) {
        let (d1, d2) = row_derivatives(row, h, true);
        let mut diff = 0.0_f64;
        let out = (0..n)
            .map(|i| {
                let j = BarrierJet { phi: row[i], phi_s: d1[i], phi_ss: d2[i], phi_t: 0.0 };
                let c = fam.evaluate(row[i], d1[i].abs(), t);
                diff = diff.max(c.alpha.max(c.beta));
                eq16_rhs(fam, kappa, s_grid[i], &j, t) + delta
            })
            .collect();
        (out, diff)
    };

    let mut phi = vec![phi0.to_vec()];
    let mut phi_t = vec![rhs(phi0, 0.0).0];
    let mut row = phi0.to_vec();
    let mut t = 0.0;
    for &target in &t_grid[1..] {
        while t < target {
            let (r, diff) = rhs(&row, t);
            if !(diff > 0.0) || !diff.is_finite() {
                return Err(Error::Config(format!("barrier diffusivity degenerates at t = {t}")));
            }
            let dt_cfl = controls.c_cfl * h * h / (2.0 * diff);
            let (dt, landing) = if t + dt_cfl >= target * (1.0 - 1e-14) { (target - t, true) } else { (dt_cfl, false) };
            for (v, d) in row.iter_mut().zip(&r) {
                *v += dt * d;
            }
            t = if landing { target } else { t + dt };
            if row.iter().any(|v| !v.is_finite()) || row.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Construction { t });
            }
        }
        phi_t.push(rhs(&row, t).0);
        phi.push(row.clone());
    }
    Barrier::tabulated_with(s_grid, t_grid.to_vec(), phi, Some(phi_t), true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    use proptest::prelude::*;

    const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn linear(slope: f64, drift: f64) -> Profile {
        Profile::Linear { slope, offset: 0.0, drift }
    }

    fn sine() -> Profile {
        Profile::Sine { amplitude: 1.0, rate: 1.0, frequency: 1.0 }
    }

    fn times(t_end: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
    }

    #[test]
    fn eval_examples() {
        let b = Barrier::analytic(linear(1.0, 0.0), 10.0, 16, vec![0.0, 10.0]).unwrap();
        assert_eq!(b.eval(2.5, 1.0).unwrap(), BarrierJet { phi: 2.5, phi_s: 1.0, phi_ss: 0.0, phi_t: 0.0 });

        let b = Barrier::analytic(sine(), FRAC_PI_2, 16, vec![0.0, 1.0]).unwrap();
        let j = b.eval(FRAC_PI_4, 0.0).unwrap();
        for (got, want) in [(j.phi, SQRT_HALF), (j.phi_s, SQRT_HALF), (j.phi_ss, -SQRT_HALF), (j.phi_t, -SQRT_HALF)] {
            assert!((got - want).abs() < 1e-15);
        }

        let b = Barrier::analytic(linear(3.0, 0.0), 4.0, 16, vec![0.0, 5.0]).unwrap();
        assert_eq!(b.eval(2.0, 5.0).unwrap(), BarrierJet { phi: 6.0, phi_s: 3.0, phi_ss: 0.0, phi_t: 0.0 });
    }

    #[test]
    fn eval_outside_domain_fails() {
        let b = Barrier::analytic(linear(1.0, 0.0), 1.0, 16, vec![0.0, 1.0]).unwrap();
        assert!(matches!(b.eval(1.5, 0.5), Err(Error::Domain(_))));
        assert!(matches!(b.eval(0.5, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn eq16_passes_for_heat_kernel_profile() {
        let b = Barrier::analytic(sine(), FRAC_PI_2, 64, times(1.0, 10)).unwrap();
        let r = verify_condition(
            &b,
            &CoefficientFamily::heat(),
            ConditionMode::ParabolicEq16,
            &CurvatureBounds::flat(),
            0.0,
        )
        .unwrap();
        assert!(r.pass);
        assert_eq!(r.worst_residual, 0.0);
    }

    #[test]
    fn eq16_fails_for_receding_line() {
        let b = Barrier::analytic(linear(1.0, -1.0), 1.0, 16, times(1.0, 4)).unwrap();
        let r = verify_condition(
            &b,
            &CoefficientFamily::heat(),
            ConditionMode::ParabolicEq16,
            &CurvatureBounds::flat(),
            0.0,
        )
        .unwrap();
        assert!(!r.pass);
        assert_eq!(r.worst_residual, -1.0);
        assert_eq!(r.worst_location, (0.0, 0.0));
    }

    #[test]
    fn static_line_fails_strict_modes_but_passes_eq16() {
        let b = Barrier::analytic(linear(1.0, 0.0), 1.0, 16, times(1.0, 4)).unwrap();
        let fam = CoefficientFamily::heat();
        let flat = CurvatureBounds::flat();
        for mode in [ConditionMode::Elliptic13, ConditionMode::ParabolicThm14] {
            let r = verify_condition(&b, &fam, mode, &flat, 0.0).unwrap();
            assert_eq!(r.worst_residual, 0.0);
            assert!(!r.pass);
        }
        assert!(verify_condition(&b, &fam, ConditionMode::ParabolicEq16, &flat, 0.0).unwrap().pass);
    }

    #[test]
    fn quotient_modes_keep_their_printed_numerators() {
        // phi = s^2/2 + s on [0,1], static. Elliptic quotient (phi'')/(phi') = 1/(s+1),
        // decreasing. Parabolic quotient (0 - phi'')/(phi') = -1/(s+1), increasing.
        let n = 65;
        let s: Vec<f64> = uniform(0.0, 1.0, n);
        let row: Vec<f64> = s.iter().map(|x| 0.5 * x * x + x).collect();
        let b = Barrier::tabulated(s, vec![0.0, 1.0], vec![row.clone(), row], None).unwrap();
        let fam = CoefficientFamily::heat();
        let flat = CurvatureBounds::flat();
        assert!(verify_condition(&b, &fam, ConditionMode::Elliptic13, &flat, 1e-8).unwrap().pass);
        assert!(!verify_condition(&b, &fam, ConditionMode::ParabolicThm14, &flat, 1e-8).unwrap().pass);
    }

    #[test]
    fn decreasing_barrier_is_a_monotonicity_error() {
        let b = Barrier::analytic(linear(-1.0, 0.0), 1.0, 16, vec![0.0, 1.0]).unwrap();
        let err = verify_condition(
            &b,
            &CoefficientFamily::heat(),
            ConditionMode::ParabolicThm14,
            &CurvatureBounds::flat(),
            0.0,
        );
        assert!(matches!(err, Err(Error::Monotonicity { .. })));
    }

    #[test]
    fn solve_reproduces_heat_kernel_profile() {
        let n = 128;
        let s = uniform(0.0, FRAC_PI_2, n);
        let phi0: Vec<f64> = s.iter().map(|x| x.sin()).collect();
        let b = solve_barrier(
            &CoefficientFamily::heat(),
            &CurvatureBounds::flat(),
            &phi0,
            FRAC_PI_2,
            0.0,
            &[0.0, 0.05, 0.1],
            SolverControls::default(),
        )
        .unwrap();
        let err = s.iter().map(|x| (b.phi(*x, 0.1).unwrap() - (-0.1f64).exp() * x.sin()).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-3, "{err}");
        let r = verify_condition(
            &b,
            &CoefficientFamily::heat(),
            ConditionMode::ParabolicEq16,
            &CurvatureBounds::flat(),
            0.0,
        )
        .unwrap();
        assert!(r.pass, "{}", r.worst_residual);
    }

    #[test]
    fn linear_profile_is_stationary_for_p_laplacian() {
        let n = 33;
        let s = uniform(0.0, 2.0, n);
        let phi0: Vec<f64> = s.iter().map(|x| 3.0 * x).collect();
        let fam = CoefficientFamily::p_laplacian(3.0, 1e-6).unwrap();
        let b = solve_barrier(&fam, &CurvatureBounds::flat(), &phi0, 2.0, 0.0, &[0.0, 0.5], SolverControls::default())
            .unwrap();
        for (i, x) in s.iter().enumerate() {
            assert!((b.node_jet(i, 1).phi - 3.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn forcing_shows_up_as_residual() {
        let n = 64;
        let s = uniform(0.0, FRAC_PI_2, n);
        let phi0: Vec<f64> = s.iter().map(|x| 1.2 * x.sin()).collect();
        let fam = CoefficientFamily::p_laplacian(3.0, 1e-6).unwrap();
        let delta = 1e-3;
        let b = solve_barrier(
            &fam,
            &CurvatureBounds::flat(),
            &phi0,
            FRAC_PI_2,
            delta,
            &times(0.2, 4),
            SolverControls::default(),
        )
        .unwrap();
        let r =
            verify_condition(&b, &fam, ConditionMode::ParabolicEq16, &CurvatureBounds::flat(), delta / 2.0).unwrap();
        assert!(r.pass);
        for row in &r.rows {
            assert!((row.residual - delta).abs() < 1e-9);
        }
    }

    #[test]
    fn invert_examples() {
        let b = Barrier::analytic(linear(2.0, 0.0), 1.0, 16, vec![0.0, 1.0]).unwrap();
        assert!((b.invert(1.4, 0.0).unwrap() - 0.7).abs() < 1e-15);
        let b = Barrier::analytic(
            Profile::Sine { amplitude: 1.0, rate: 0.0, frequency: 1.0 },
            FRAC_PI_2,
            16,
            vec![0.0, 1.0],
        )
        .unwrap();
        assert!((b.invert(SQRT_HALF, 0.5).unwrap() - FRAC_PI_4).abs() <= 1e-10);
        assert!(matches!(b.invert(1.5, 0.0), Err(Error::Range { .. })));
    }

    #[test]
    fn tabulated_derivatives_converge_at_second_order() {
        let err = |n: usize| {
            let s = uniform(0.0, PI / 3.0, n);
            let row: Vec<f64> = s.iter().map(|x| x.sin()).collect();
            let b = Barrier::tabulated(s.clone(), vec![0.0, 1.0], vec![row.clone(), row], None).unwrap();
            let mut e = 0.0_f64;
            for k in 0..200 {
                let x = PI / 3.0 * (k as f64 + 0.5) / 200.0;
                let j = b.eval(x, 0.5).unwrap();
                e = e.max((j.phi_s - x.cos()).abs());
            }
            e
        };
        let ratio = err(33) / err(65);
        assert!(ratio > 3.5, "{ratio}");
    }

    #[test]
    fn csv_round_trip() {
        let s = uniform(0.0, 1.0, 8);
        let rows: Vec<Vec<f64>> = [0.0, 0.5].iter().map(|t| s.iter().map(|x| x + t).collect()).collect();
        let b = Barrier::tabulated(s, vec![0.0, 0.5], rows, None).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("s,t,phi\n"));
        let back = Barrier::read_csv(buf.as_slice()).unwrap();
        for ((s0, t0, p0), (s1, t1, p1)) in b.table().into_iter().zip(back.table()) {
            assert!((s0 - s1).abs() < 1e-8 && (t0 - t1).abs() < 1e-8 && (p0 - p1).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn inverse_round_trips(zs in proptest::collection::vec(0.0..1.0f64, 1..50), t in 0.0..1.0f64) {
            let b = Barrier::analytic(Profile::Sine { amplitude: 1.0, rate: 0.5, frequency: 1.0 }, FRAC_PI_2, 16, vec![0.0, 1.0]).unwrap();
            let top = b.phi(FRAC_PI_2, t).unwrap();
            let mut zs: Vec<f64> = zs.into_iter().map(|z| z * top).collect();
            zs.sort_by(f64::total_cmp);
            let mut last = -1.0;
            for z in zs {
                let s = b.invert(z, t).unwrap();
                prop_assert!((b.phi(s, t).unwrap() - z).abs() <= 1e-10);
                prop_assert!(s >= last);
                last = s;
            }
        }

        #[test]
        fn psi_of_phi_is_identity_on_grid(t in 0.0..1.0f64) {
            let n = 40;
            let s = uniform(0.0, 1.0, n);
            let row: Vec<f64> = s.iter().map(|x| x + 0.3 * x * x).collect();
            let b = Barrier::tabulated(s.clone(), vec![0.0, 1.0], vec![row.clone(), row], None).unwrap();
            for x in s {
                prop_assert!((b.invert(b.phi(x, t).unwrap(), t).unwrap() - x).abs() <= 1e-9);
            }
        }
    }
}
