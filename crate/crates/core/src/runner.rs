//! Experiment pipeline: barrier verification, initial containment,
//! evolution, then the remaining checks, each written to its own CSV.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use crate::barrier::{self, Barrier, ConditionMode, ConditionReport};
use crate::config::{BarrierSource, CheckName, ExperimentConfig};
use crate::equations::CoefficientFamily;
use crate::error::{Error, Result};
use crate::geometry::{CurvatureBounds, Geometry};
use crate::report::{self, SummaryRow};
use crate::solver::{self, ScalarField, SolverControls, Trajectory};
use crate::verify::{self, GradientMode, LiYauParams, TwoPointMode};

/// Environment variable overriding `[output] dir`.
pub const OUT_DIR_ENV: &str = "TWOPOINT_OUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub summary: Vec<SummaryRow>,
    pub error: Option<Error>,
}

impl RunOutcome {
    /// 0 when every check passed, 1 when one failed, otherwise the error's code.
    pub fn exit_code(&self) -> i32 {
        match &self.error {
            Some(e) => e.exit_code(),
            None if self.summary.iter().all(|r| r.pass) => 0,
            None => 1,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.exit_code() == 0
    }
}

pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => PathBuf::from(&cfg.output.dir),
    }
}

struct Setup {
    geom: Geometry,
    fam: CoefficientFamily,
    bounds: CurvatureBounds,
    controls: SolverControls,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    cfg.validate()?;
    let geom = cfg.geometry()?;
    Ok(Setup {
        geom,
        fam: cfg.family()?,
        bounds: geom.curvature_bounds(0.0, cfg.time.t_end)?,
        controls: SolverControls { c_cfl: cfg.time.c_cfl },
    })
}

/// Barrier described by `[barrier]`, on the snapshot times of the run.
pub fn build_barrier(cfg: &ExperimentConfig, fam: &CoefficientFamily, bounds: &CurvatureBounds) -> Result<Barrier> {
    let b = &cfg.barrier;
    let t_grid = cfg.snapshot_times();
    match b.mode {
        BarrierSource::Analytic => Barrier::analytic(cfg.profile(), cfg.barrier_s_max()?, b.n_s, t_grid),
        BarrierSource::Solve => {
            let s_max = cfg.barrier_s_max()?;
            let profile = cfg.profile();
            let phi0: Vec<f64> =
                (0..b.n_s).map(|i| profile.jet(s_max * i as f64 / (b.n_s - 1) as f64, 0.0).phi).collect();
            let controls = SolverControls { c_cfl: cfg.time.c_cfl };
            barrier::solve_barrier(fam, bounds, &phi0, s_max, b.delta, &t_grid, controls)
        }
        BarrierSource::Csv => {
            let f = File::open(&b.path).map_err(|e| Error::Io(format!("{}: {e}", b.path)))?;
            let barrier = Barrier::read_csv(f)?;
            let last = *barrier.t_grid().last().expect("nonempty t-grid");
            if barrier.t_grid()[0] > 1e-8 || last < cfg.time.t_end * (1.0 - 1e-8) {
                return Err(Error::Config(format!(
                    "barrier table covers t in [{}, {last}], run needs [0, {}]",
                    barrier.t_grid()[0],
                    cfg.time.t_end
                )));
            }
            Ok(barrier)
        }
    }
}

fn condition_row(r: &ConditionReport) -> SummaryRow {
    let tol = if r.mode == ConditionMode::ParabolicEq16 { r.margin } else { -r.margin };
    SummaryRow { check: CheckName::BarrierCondition.as_str().into(), pass: r.pass, worst: r.worst_residual, tol }
}

fn initial_field(cfg: &ExperimentConfig, geom: Geometry) -> Result<ScalarField> {
    ScalarField::from_fn(geom, cfg.grid.n, 0.0, |p| cfg.initial_value(&geom, p))
}

struct Run<'a> {
    dir: &'a Path,
    summary: Vec<SummaryRow>,
}

impl Run<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn finish(dir: &Path, summary: Vec<SummaryRow>, result: Result<()>) -> RunOutcome {
    let mut error = result.err();
    if let Err(e) = report::write_summary(&dir.join("summary.csv"), &summary) {
        error.get_or_insert(e);
    }
    if let Some(e) = &error {
        // Best effort: the directory may be what failed.
        let _ = report::write_error(&dir.join("error.csv"), e);
    }
    RunOutcome { out_dir: dir.to_path_buf(), summary, error }
}

fn run_outcome(dir: &Path, body: impl FnOnce(&mut Run) -> Result<()>) -> RunOutcome {
    if let Err(e) = prepare_dir(dir) {
        return RunOutcome { out_dir: dir.to_path_buf(), summary: Vec::new(), error: Some(e) };
    }
    let _ = fs::remove_file(dir.join("error.csv"));
    let mut run = Run { dir, summary: Vec::new() };
    let result = body(&mut run);
    finish(dir, run.summary, result)
}

/// Full pipeline. Stops after a failed barrier condition or failed initial
/// containment, since later checks would then test nothing.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> RunOutcome {
    run_outcome(dir, |run| pipeline(cfg, run))
}

fn pipeline(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let Setup { geom, fam, bounds, controls } = setup(cfg)?;
    let list = &cfg.checks.list;
    let mode = cfg.two_point_mode();
    let barrier = if cfg.needs_barrier() {
        let b = build_barrier(cfg, &fam, &bounds)?;
        let cond = barrier::verify_condition(&b, &fam, cfg.verify_mode(), &bounds, cfg.barrier.margin)?;
        report::write_condition(&run.path("barrier_condition.csv"), &cond)?;
        run.summary.push(condition_row(&cond));
        if !cond.pass {
            return Ok(());
        }
        Some(b)
    } else {
        None
    };

    let u0 = initial_field(cfg, geom)?;
    if let (Some(b), Some(mode)) = (&barrier, mode) {
        let tol = match cfg.tolerances.two_point {
            Some(t) => t,
            None => verify::default_tolerance(&Trajectory { snapshots: vec![u0.clone()], controls, steps: 0 })?,
        };
        let r = verify::initial_containment(&u0, b, mode, tol)?;
        report::write_two_point(&run.path("containment.csv"), &r)?;
        run.summary.push(SummaryRow { check: "containment".into(), pass: r.pass, worst: r.worst.worst, tol });
        if !r.pass {
            return Ok(());
        }
    }

    let times = cfg.snapshot_times();
    let traj = solver::evolve(&u0, &fam, cfg.time.t_end, &times, controls)?;
    let tol = match cfg.tolerances.two_point {
        Some(t) => t,
        None => verify::default_tolerance(&traj)?,
    };

    for check in list {
        match (check, &barrier) {
            (CheckName::TwoPointPsi | CheckName::TwoPointModulus, Some(b)) => {
                let m =
                    if *check == CheckName::TwoPointPsi { TwoPointMode::PsiForm } else { TwoPointMode::ModulusForm };
                let r = verify::two_point_check(&traj, b, m, &fam, &bounds, tol)?;
                report::write_two_point(&run.path(&format!("{}.csv", check.as_str())), &r)?;
                run.summary.push(SummaryRow { check: check.as_str().into(), pass: r.pass, worst: r.worst.worst, tol });
            }
            (CheckName::GradCor15 | CheckName::GradCor17, Some(b)) => {
                let m = if *check == CheckName::GradCor15 { GradientMode::Cor15 } else { GradientMode::Cor17 };
                let r = verify::gradient_check(&traj, b, m, cfg.tolerances.ratio)?;
                report::write_node_check(&run.path(&format!("{}.csv", check.as_str())), &r)?;
                let tol = 1.0 + cfg.tolerances.ratio;
                run.summary.push(SummaryRow { check: check.as_str().into(), pass: r.pass, worst: r.worst, tol });
            }
            (CheckName::Liyau, _) => {
                let params = LiYauParams::new(cfg.liyau.alpha_ly, &bounds, geom.dimension())?;
                let r = verify::liyau_check(&traj, &params, &fam, cfg.liyau.t_min, cfg.tolerances.liyau)?;
                report::write_node_check(&run.path("liyau.csv"), &r)?;
                run.summary.push(SummaryRow { check: "liyau".into(), pass: r.pass, worst: r.worst, tol: r.tolerance });
            }
            _ => {}
        }
    }

    if !cfg.equation.epsilon_sweep.is_empty() {
        if let Some(mode) = mode {
            let rows = epsilon_sweep(cfg, mode)?;
            report::write_epsilon(&run.path("epsilon_sensitivity.csv"), &rows)?;
            let spread = epsilon_spread(&rows);
            let tol = cfg.tolerances.epsilon_spread;
            run.summary.push(SummaryRow {
                check: "epsilon_sensitivity".into(),
                pass: spread < tol,
                worst: spread,
                tol,
            });
        }
    }
    Ok(())
}

/// Worst two-point value over the whole run for each `epsilon_reg` of the
/// sweep, barrier rebuilt each time.
pub fn epsilon_sweep(cfg: &ExperimentConfig, mode: TwoPointMode) -> Result<Vec<(f64, f64)>> {
    let geom = cfg.geometry()?;
    let bounds = geom.curvature_bounds(0.0, cfg.time.t_end)?;
    let controls = SolverControls { c_cfl: cfg.time.c_cfl };
    let u0 = initial_field(cfg, geom)?;
    let times = cfg.snapshot_times();
    let mut rows = Vec::new();
    for &eps in &cfg.equation.epsilon_sweep {
        let fam = cfg.family_with_epsilon(eps)?;
        let b = build_barrier(cfg, &fam, &bounds)?;
        let traj = solver::evolve(&u0, &fam, cfg.time.t_end, &times, controls)?;
        let r = verify::two_point_check(&traj, &b, mode, &fam, &bounds, f64::INFINITY)?;
        rows.push((eps, r.worst.worst));
    }
    Ok(rows)
}

/// Spread `max |w| / min |w|` of the sweep's worst values, with magnitudes
/// floored at `EPSILON_SPREAD_FLOOR` so that exact zeros compare equal.
pub fn epsilon_spread(rows: &[(f64, f64)]) -> f64 {
    let mags: Vec<f64> = rows.iter().map(|(_, w)| w.abs().max(EPSILON_SPREAD_FLOOR)).collect();
    let hi = mags.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = mags.iter().copied().fold(f64::INFINITY, f64::min);
    if mags.is_empty() {
        1.0
    } else {
        hi / lo
    }
}

pub const EPSILON_SPREAD_FLOOR: f64 = 1e-12;

/// Verify the configured barrier only.
pub fn barrier_check(cfg: &ExperimentConfig, dir: &Path) -> RunOutcome {
    run_outcome(dir, |run| {
        let Setup { fam, bounds, .. } = setup(cfg)?;
        let b = build_barrier(cfg, &fam, &bounds)?;
        let cond = barrier::verify_condition(&b, &fam, cfg.verify_mode(), &bounds, cfg.barrier.margin)?;
        report::write_condition(&run.path("barrier_condition.csv"), &cond)?;
        run.summary.push(condition_row(&cond));
        Ok(())
    })
}

/// Construct the barrier by the method of lines, write it as `barrier.csv`
/// and verify it.
pub fn barrier_solve(cfg: &ExperimentConfig, dir: &Path) -> RunOutcome {
    run_outcome(dir, |run| {
        if cfg.barrier.mode != BarrierSource::Solve {
            return Err(Error::Config("barrier solve needs [barrier] mode = \"solve\"".into()));
        }
        let Setup { fam, bounds, .. } = setup(cfg)?;
        let b = build_barrier(cfg, &fam, &bounds)?;
        let path = run.path("barrier.csv");
        let f = File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        b.write_csv(f)?;
        let cond = barrier::verify_condition(&b, &fam, cfg.verify_mode(), &bounds, cfg.barrier.margin)?;
        report::write_condition(&run.path("barrier_condition.csv"), &cond)?;
        run.summary.push(condition_row(&cond));
        Ok(())
    })
}
