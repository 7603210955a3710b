//! Coefficient triples `(alpha, beta, q)` of the quasilinear operator
//!
//! `u_t = [alpha P + beta (I - P)] : D^2 u + q`,  `P = Du (x) Du / |Du|^2`,
//!
//! where `alpha` acts along the gradient and `beta` across it.

use crate::error::{Error, Result};

pub const DEFAULT_EPSILON_REG: f64 = 1e-6;

/// Which structure of the operator an experiment relies on: `Eq14` allows
/// `alpha(u, |Du|, t)` with `beta = beta(t) >= 1`; `Eq15` allows
/// `alpha(|Du|, t)`, `beta(|Du|, t) > 0` and a curvature term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquationForm {
    Eq14,
    Eq15,
}

/// Argument of a tabulated coefficient family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableArg {
    GradNorm,
    Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub arg: TableArg,
    pub grid: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub q: Vec<f64>,
}

impl CoefficientTable {
    pub fn new(arg: TableArg, grid: Vec<f64>, alpha: Vec<f64>, beta: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if n < 2 || alpha.len() != n || beta.len() != n || q.len() != n {
            return Err(Error::Config("tabulated coefficients need >= 2 samples and equal-length columns".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("tabulated coefficient grid must be strictly increasing".into()));
        }
        if alpha.iter().any(|a| !(*a >= 0.0)) || beta.iter().any(|b| !(*b > 0.0)) || q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("tabulated coefficients need alpha >= 0, beta > 0 and finite q".into()));
        }
        Ok(CoefficientTable { arg, grid, alpha, beta, q })
    }

    fn lookup(&self, x: f64) -> (f64, f64, f64) {
        let g = &self.grid;
        let n = g.len();
        let x = x.clamp(g[0], g[n - 1]);
        let k = match g.partition_point(|v| *v <= x) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        };
        let w = (x - g[k]) / (g[k + 1] - g[k]);
        let lerp = |c: &[f64]| c[k] + w * (c[k + 1] - c[k]);
        (lerp(&self.alpha), lerp(&self.beta), lerp(&self.q))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Heat,
    GraphicalMcf,
    PLaplacian { p: f64 },
    CustomTabulated(CoefficientTable),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub alpha: f64,
    pub beta: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFamily {
    pub family: Family,
    pub epsilon_reg: f64,
    pub form: EquationForm,
}

impl CoefficientFamily {
    pub fn new(family: Family, epsilon_reg: f64, form: EquationForm) -> Result<Self> {
        if let Family::PLaplacian { p } = family {
            if !(p > 1.0) || !p.is_finite() {
                return Err(Error::Config(format!("p must exceed 1, got {p}")));
            }
        }
        if !(epsilon_reg >= 0.0) || !epsilon_reg.is_finite() {
            return Err(Error::Config(format!("epsilon_reg must be nonnegative, got {epsilon_reg}")));
        }
        Ok(CoefficientFamily { family, epsilon_reg, form })
    }

    pub fn heat() -> Self {
        CoefficientFamily { family: Family::Heat, epsilon_reg: DEFAULT_EPSILON_REG, form: EquationForm::Eq14 }
    }

    pub fn p_laplacian(p: f64, epsilon_reg: f64) -> Result<Self> {
        Self::new(Family::PLaplacian { p }, epsilon_reg, EquationForm::Eq15)
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Heat => "heat",
            Family::GraphicalMcf => "graphical_mcf",
            Family::PLaplacian { .. } => "p_laplacian",
            Family::CustomTabulated(_) => "custom_tabulated",
        }
    }

    pub fn is_heat(&self) -> bool {
        match self.family {
            Family::Heat => true,
            Family::PLaplacian { p } => p == 2.0,
            _ => false,
        }
    }

    /// Regularized gradient norm `sqrt(|Du|^2 + eps^2)`.
    pub fn regularized_norm(&self, grad_norm: f64) -> f64 {
        grad_norm.hypot(self.epsilon_reg)
    }

    pub fn evaluate(&self, u: f64, grad_norm: f64, _t: f64) -> Coefficients {
        let s = self.regularized_norm(grad_norm);
        match &self.family {
            Family::Heat => Coefficients { alpha: 1.0, beta: 1.0, q: 0.0 },
            Family::GraphicalMcf => Coefficients { alpha: 1.0 / (1.0 + s * s), beta: 1.0, q: 0.0 },
            Family::PLaplacian { p } => {
                let beta = s.powf(p - 2.0);
                Coefficients { alpha: (p - 1.0) * beta, beta, q: 0.0 }
            }
            Family::CustomTabulated(table) => {
                let x = match table.arg {
                    TableArg::GradNorm => s,
                    TableArg::Value => u,
                };
                let (alpha, beta, q) = table.lookup(x);
                Coefficients { alpha, beta, q }
            }
        }
    }

    /// Whether `beta` depends on time only and satisfies `beta(t) >= 1`, the
    /// structural requirement of the `Eq14` two-point estimate.
    pub fn beta_is_time_only_at_least_one(&self) -> bool {
        match &self.family {
            Family::Heat | Family::GraphicalMcf => true,
            Family::PLaplacian { p } => *p == 2.0,
            Family::CustomTabulated(table) => {
                let b0 = table.beta[0];
                b0 >= 1.0 && table.beta.iter().all(|b| *b == b0)
            }
        }
    }

    /// Whether `alpha`, `beta`, `q` are free of `u`-dependence, as `Eq15` requires.
    pub fn is_gradient_only(&self) -> bool {
        !matches!(&self.family, Family::CustomTabulated(t) if t.arg == TableArg::Value)
    }

    /// Validate the family against the structure demanded by `form`.
    pub fn check_form(&self, form: EquationForm) -> Result<()> {
        match form {
            EquationForm::Eq14 => {
                if !self.beta_is_time_only_at_least_one() {
                    return Err(Error::Hypothesis(format!(
                        "β(t) ≥ 1 required for the eq_1_4 estimate; {} has gradient-dependent or small β",
                        self.name()
                    )));
                }
            }
            EquationForm::Eq15 => {
                if !self.is_gradient_only() {
                    return Err(Error::Hypothesis("eq_1_5 coefficients may depend on |Du| and t only".into()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn heat_is_identity_triple() {
        let c = CoefficientFamily::heat().evaluate(3.0, 0.0, 1.0);
        assert_eq!(c, Coefficients { alpha: 1.0, beta: 1.0, q: 0.0 });
    }

    #[test]
    fn p_laplacian_examples() {
        let f = CoefficientFamily::p_laplacian(2.0, 1e-6).unwrap();
        assert_eq!(f.evaluate(0.0, 5.0, 0.0), Coefficients { alpha: 1.0, beta: 1.0, q: 0.0 });
        let f = CoefficientFamily::p_laplacian(3.0, 0.0).unwrap();
        assert_eq!(f.evaluate(0.0, 2.0, 0.0), Coefficients { alpha: 4.0, beta: 2.0, q: 0.0 });
    }

    #[test]
    fn graphical_mcf_example() {
        let f = CoefficientFamily::new(Family::GraphicalMcf, DEFAULT_EPSILON_REG, EquationForm::Eq15).unwrap();
        let c = f.evaluate(0.0, 1.0, 0.0);
        assert!((c.alpha - 0.5).abs() < 1e-12);
        assert_eq!((c.beta, c.q), (1.0, 0.0));
    }

    #[test]
    fn p_must_exceed_one() {
        let err = CoefficientFamily::p_laplacian(0.5, 1e-6).unwrap_err();
        assert!(err.to_string().contains("p must exceed 1"));
        assert!(CoefficientFamily::p_laplacian(1.0, 1e-6).is_err());
    }

    #[test]
    fn eq14_rejects_p_laplacian() {
        let f = CoefficientFamily::p_laplacian(3.0, 1e-6).unwrap();
        let err = f.check_form(EquationForm::Eq14).unwrap_err();
        assert!(matches!(err, Error::Hypothesis(_)));
        assert!(err.to_string().contains("β(t) ≥ 1"));
        assert!(CoefficientFamily::heat().check_form(EquationForm::Eq14).is_ok());
    }

    #[test]
    fn tabulated_interpolates_linearly_and_clamps() {
        let t = CoefficientTable::new(
            TableArg::GradNorm,
            vec![0.0, 1.0, 2.0],
            vec![1.0, 3.0, 5.0],
            vec![1.0, 1.0, 2.0],
            vec![0.0, 0.0, 1.0],
        )
        .unwrap();
        let f = CoefficientFamily::new(Family::CustomTabulated(t), 0.0, EquationForm::Eq15).unwrap();
        let c = f.evaluate(0.0, 1.5, 0.0);
        assert_eq!((c.alpha, c.beta, c.q), (4.0, 1.5, 0.5));
        let c = f.evaluate(0.0, 10.0, 0.0);
        assert_eq!((c.alpha, c.beta, c.q), (5.0, 2.0, 1.0));
        assert!(!f.beta_is_time_only_at_least_one());
    }

    #[test]
    fn tabulated_rejects_bad_tables() {
        assert!(CoefficientTable::new(TableArg::Value, vec![0.0], vec![1.0], vec![1.0], vec![0.0]).is_err());
        assert!(
            CoefficientTable::new(TableArg::Value, vec![1.0, 0.0], vec![1.0; 2], vec![1.0; 2], vec![0.0; 2]).is_err()
        );
        assert!(
            CoefficientTable::new(TableArg::Value, vec![0.0, 1.0], vec![1.0; 2], vec![0.0; 2], vec![0.0; 2]).is_err()
        );
    }

    proptest! {
        #[test]
        fn p_laplacian_ratio_is_p_minus_one(p in 1.1..5.0f64, s in 1e-3..10.0f64) {
            let f = CoefficientFamily::p_laplacian(p, 0.0).unwrap();
            let c = f.evaluate(0.0, s, 0.0);
            prop_assert!((c.alpha / c.beta - (p - 1.0)).abs() < 1e-12 * (p - 1.0));
        }

        #[test]
        fn regularized_coefficients_are_finite(p in 1.1..5.0f64, s in 0.0..1e-3f64) {
            let f = CoefficientFamily::p_laplacian(p, DEFAULT_EPSILON_REG).unwrap();
            let c = f.evaluate(0.0, s, 0.0);
            prop_assert!(c.alpha.is_finite() && c.beta.is_finite() && c.beta > 0.0 && c.alpha >= 0.0);
        }
    }
}
