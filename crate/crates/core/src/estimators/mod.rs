//! The five multi-response estimators (plus an OLS baseline), all expressed
//! on second moments so they run equally on sample data and on population
//! covariance blocks.

mod envelope;
mod moments;
mod ols;
mod pcr;
mod pls;
mod prereduce;

pub use envelope::{
    envelope_basis, envelope_basis_warm, senv_moments, senv_objective, xenv_moments, EnvelopeFit, EnvelopeObjective,
    EnvelopeOptions, SenvFit, XenvFit,
};
pub use moments::{center, Centered, Moments};
pub use ols::{fit_ols, ols_moments};
pub use pcr::pcr_path;
pub use pls::{pls1_path, pls2_path};
pub use prereduce::{pca_prereduce, prereduce_moments, PrereduceOptions, ReducedBasis};

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::simulation::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodId {
    #[serde(rename = "PCR")]
    Pcr,
    #[serde(rename = "PLS1")]
    Pls1,
    #[serde(rename = "PLS2")]
    Pls2,
    Xenv,
    Senv,
    /// Internal baseline, not one of the compared methods.
    #[serde(rename = "OLS")]
    Ols,
}

impl MethodId {
    /// The five compared methods, in reporting order.
    pub const COMPARED: [MethodId; 5] = [MethodId::Pcr, MethodId::Pls1, MethodId::Pls2, MethodId::Xenv, MethodId::Senv];

    pub fn name(self) -> &'static str {
        match self {
            MethodId::Pcr => "PCR",
            MethodId::Pls1 => "PLS1",
            MethodId::Pls2 => "PLS2",
            MethodId::Xenv => "Xenv",
            MethodId::Senv => "Senv",
            MethodId::Ols => "OLS",
        }
    }

    /// Stable small integer, `1..=6`.
    pub fn code(self) -> u64 {
        match self {
            MethodId::Pcr => 1,
            MethodId::Pls1 => 2,
            MethodId::Pls2 => 3,
            MethodId::Xenv => 4,
            MethodId::Senv => 5,
            MethodId::Ols => 6,
        }
    }

    pub fn is_envelope(self) -> bool {
        matches!(self, MethodId::Xenv | MethodId::Senv)
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pcr" => Ok(MethodId::Pcr),
            "pls1" => Ok(MethodId::Pls1),
            "pls2" => Ok(MethodId::Pls2),
            "xenv" => Ok(MethodId::Xenv),
            "senv" => Ok(MethodId::Senv),
            "ols" => Ok(MethodId::Ols),
            other => Err(invalid!("unknown method `{other}`")),
        }
    }
}

/// Outcome of the fit at one component count.
#[derive(Debug, Clone, PartialEq)]
pub enum FitStatus {
    Ok,
    /// More components were requested than available; the fit with `used`
    /// components is repeated.
    Truncated { used: usize },
    /// Optimizer stopped at its iteration cap; best-so-far returned.
    NotConverged,
    Failed(String),
}

impl FitStatus {
    pub fn is_failed(&self) -> bool {
        matches!(self, FitStatus::Failed(_))
    }

    pub fn label(&self) -> String {
        match self {
            FitStatus::Ok => "ok".into(),
            FitStatus::Truncated { used } => format!("truncated:{used}"),
            FitStatus::NotConverged => "not_converged".into(),
            FitStatus::Failed(msg) => format!("failed:{msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathStep<T: Real> {
    pub coef: DMatrix<T>,
    pub status: FitStatus,
}

impl<T: Real> PathStep<T> {
    pub fn ok(coef: DMatrix<T>) -> Self {
        PathStep { coef, status: FitStatus::Ok }
    }
}

/// Coefficient matrices for `l = 0..=lmax` components, in original
/// predictor coordinates.
#[derive(Debug, Clone)]
pub struct CoefficientPath<T: Real> {
    pub method: MethodId,
    /// `p × m` per component count; entry 0 is the null model.
    pub coef: Vec<DMatrix<T>>,
    pub intercepts: Vec<DVector<T>>,
    pub status: Vec<FitStatus>,
    pub prereduction: Option<ReducedBasis<T>>,
}

impl<T: Real> CoefficientPath<T> {
    pub fn lmax(&self) -> usize {
        self.coef.len() - 1
    }

    fn assemble(
        method: MethodId,
        steps: Vec<PathStep<T>>,
        basis: Option<ReducedBasis<T>>,
        x_mean: &DVector<T>,
        y_mean: &DVector<T>,
    ) -> Self {
        let mut coef = Vec::with_capacity(steps.len());
        let mut intercepts = Vec::with_capacity(steps.len());
        let mut status = Vec::with_capacity(steps.len());
        for step in steps {
            let b = match &basis {
                Some(r) => &r.loadings * step.coef,
                None => step.coef,
            };
            intercepts.push(y_mean - b.transpose() * x_mean);
            coef.push(b);
            status.push(step.status);
        }
        CoefficientPath { method, coef, intercepts, status, prereduction: basis }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub lmax: usize,
    pub senv_response_dim: usize,
    pub envelope: EnvelopeOptions,
    pub prereduce: PrereduceOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lmax: 10,
            senv_response_dim: 2,
            envelope: EnvelopeOptions::default(),
            prereduce: PrereduceOptions::default(),
        }
    }
}

/// Path of one method on moments. For the envelope methods the component
/// count is the predictor envelope dimension.
pub fn fit_moments_path<T: Real>(method: MethodId, mom: &Moments<T>, cfg: &FitConfig) -> Vec<PathStep<T>> {
    let lmax = cfg.lmax;
    match method {
        MethodId::Pcr => pcr_path(mom, lmax),
        MethodId::Pls1 => pls1_path(mom, lmax),
        MethodId::Pls2 => pls2_path(mom, lmax),
        MethodId::Ols => {
            let zero = DMatrix::zeros(mom.p(), mom.m());
            let full = match ols_moments(mom) {
                Ok(b) => PathStep::ok(b),
                Err(e) => PathStep { coef: zero.clone(), status: FitStatus::Failed(e.to_string()) },
            };
            std::iter::once(PathStep::ok(zero)).chain(std::iter::repeat_n(full, lmax)).collect()
        }
        MethodId::Xenv | MethodId::Senv => {
            let p = mom.p();
            let d = cfg.senv_response_dim.clamp(1, mom.m());
            let mut out = vec![PathStep::ok(DMatrix::zeros(p, mom.m()))];
            let mut last_good = out[0].coef.clone();
            for u in 1..=lmax {
                if u > p {
                    out.push(PathStep { coef: last_good.clone(), status: FitStatus::Truncated { used: p } });
                    continue;
                }
                let res = if method == MethodId::Xenv {
                    xenv_moments(mom, u, &cfg.envelope).map(|f| (f.coef, f.converged))
                } else {
                    senv_moments(mom, u, d, &cfg.envelope).map(|f| (f.coef, f.converged))
                };
                let step = match res {
                    Ok((coef, true)) => PathStep::ok(coef),
                    Ok((coef, false)) => PathStep { coef, status: FitStatus::NotConverged },
                    Err(e) => {
                        log::warn!("{method} failed at dimension {u}: {e}");
                        PathStep { coef: DMatrix::zeros(p, mom.m()), status: FitStatus::Failed(e.to_string()) }
                    }
                };
                if !step.status.is_failed() {
                    last_good = step.coef.clone();
                }
                out.push(step);
            }
            out
        }
    }
}

/// Fits the full component path of `method` on a dataset, pre-reducing
/// wide predictors (`p > n`) to principal component scores first.
pub fn fit_method<T: Real>(method: MethodId, data: &Dataset<T>, cfg: &FitConfig) -> Result<CoefficientPath<T>> {
    if cfg.lmax == 0 {
        return Err(invalid!("lmax must be at least 1"));
    }
    let c = center(&data.x, &data.y)?;
    let (basis, mom) = if data.p() > data.n() {
        let (basis, scores) = pca_prereduce(&data.x, &cfg.prereduce)?;
        (Some(basis), Moments::from_centered(&scores, &c.y))
    } else {
        (None, Moments::from_centered(&c.x, &c.y))
    };
    let steps = fit_moments_path(method, &mom, cfg);
    Ok(CoefficientPath::assemble(method, steps, basis, &c.x_mean, &c.y_mean))
}

fn data_path<T: Real>(method: MethodId, x: &DMatrix<T>, y: &DMatrix<T>, lmax: usize) -> Result<CoefficientPath<T>> {
    let c = center(x, y)?;
    let mom = Moments::from_centered(&c.x, &c.y);
    let cfg = FitConfig { lmax, ..FitConfig::default() };
    let steps = fit_moments_path(method, &mom, &cfg);
    Ok(CoefficientPath::assemble(method, steps, None, &c.x_mean, &c.y_mean))
}

/// PCR path on raw data, no pre-reduction.
pub fn fit_pcr<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>, lmax: usize) -> Result<CoefficientPath<T>> {
    data_path(MethodId::Pcr, x, y, lmax)
}

pub fn fit_pls1<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>, lmax: usize) -> Result<CoefficientPath<T>> {
    data_path(MethodId::Pls1, x, y, lmax)
}

pub fn fit_pls2<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>, lmax: usize) -> Result<CoefficientPath<T>> {
    data_path(MethodId::Pls2, x, y, lmax)
}

/// Predictor envelope coefficients of dimension `u`.
pub fn fit_xenv<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>, u: usize) -> Result<DMatrix<T>> {
    let c = center(x, y)?;
    Ok(xenv_moments(&Moments::from_centered(&c.x, &c.y), u, &EnvelopeOptions::default())?.coef)
}

/// Simultaneous envelope with predictor dimension `u`, response dimension `d`.
pub fn fit_senv<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>, u: usize, d: usize) -> Result<SenvFit<T>> {
    let c = center(x, y)?;
    senv_moments(&Moments::from_centered(&c.x, &c.y), u, d, &EnvelopeOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::simulation::{assemble_population, sample_dataset, DatasetTag, SimDesign, SimRng};
    use rand::SeedableRng;

    fn dataset(p: usize, seed: u64) -> Dataset<f64> {
        let d = SimDesign { design_id: 3, p, n: 100, m: 4, gamma: 0.2, eta: 0.4, relpos: vec![1, 2, 3, 4], r2: 0.8, base_seed: 0 };
        let pop = assemble_population::<f64, _>(&d, &mut SimRng::seed_from_u64(seed)).unwrap();
        let tag = DatasetTag { design_id: 3, method: None, replicate: 1, seed };
        sample_dataset(&pop, 100, tag, &mut SimRng::seed_from_u64(seed + 1)).unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in MethodId::COMPARED.iter().chain([MethodId::Ols].iter()) {
            assert_eq!(m.name().parse::<MethodId>().unwrap(), *m);
        }
        assert!("lasso".parse::<MethodId>().is_err());
    }

    #[test]
    fn every_path_has_eleven_entries_and_zero_null() {
        let data = dataset(20, 1);
        for m in MethodId::COMPARED {
            let path = fit_method(m, &data, &FitConfig::default()).unwrap();
            assert_eq!(path.coef.len(), 11, "{m}");
            assert!(path.coef[0].iter().all(|&v| v == 0.0));
            // null model predicts the training mean
            let ym = data.y.row_mean().transpose();
            assert!((&path.intercepts[0] - ym).norm() < 1e-12);
        }
    }

    #[test]
    fn wide_paths_are_back_projected() {
        let data = dataset(250, 2);
        let path = fit_method(MethodId::Pls2, &data, &FitConfig::default()).unwrap();
        let basis = path.prereduction.as_ref().unwrap();
        assert!(basis.q >= 10);
        assert_eq!(path.coef[3].shape(), (250, 4));
    }

    #[test]
    fn scale_equivariance_of_projection_methods() {
        let data = dataset(20, 3);
        let mut scaled = data.clone();
        scaled.y *= 3.5;
        for m in [MethodId::Pcr, MethodId::Pls1, MethodId::Pls2] {
            let a = fit_method(m, &data, &FitConfig::default()).unwrap();
            let b = fit_method(m, &scaled, &FitConfig::default()).unwrap();
            for l in 0..=10 {
                assert!(max_abs_diff(&(&a.coef[l] * 3.5), &b.coef[l]) < 1e-10, "{m} l={l}");
            }
        }
    }

    #[test]
    fn fits_are_deterministic() {
        let data = dataset(20, 4);
        for m in MethodId::COMPARED {
            let a = fit_method(m, &data, &FitConfig::default()).unwrap();
            let b = fit_method(m, &data, &FitConfig::default()).unwrap();
            assert_eq!(a.coef, b.coef);
        }
    }

    #[test]
    fn reduction_identities_on_tall_data() {
        let data = dataset(20, 5);
        let ols = fit_ols(&data.x, &data.y).unwrap();
        let pcr = fit_pcr(&data.x, &data.y, 20).unwrap();
        let pls = fit_pls2(&data.x, &data.y, 20).unwrap();
        assert!(max_abs_diff(&pcr.coef[20], &ols) < 1e-6);
        assert!(max_abs_diff(&pls.coef[20], &ols) < 1e-6);
        let xenv = fit_xenv(&data.x, &data.y, 20).unwrap();
        assert!(max_abs_diff(&xenv, &ols) < 1e-6);
        let senv = fit_senv(&data.x, &data.y, 20, 4).unwrap();
        assert!(max_abs_diff(&senv.coef, &ols) < 1e-4);
    }

    #[test]
    fn senv_uses_two_response_components_by_default() {
        let data = dataset(20, 6);
        let c = center(&data.x, &data.y).unwrap();
        let fit = senv_moments(&Moments::from_centered(&c.x, &c.y), 3, FitConfig::default().senv_response_dim, &EnvelopeOptions::default()).unwrap();
        assert_eq!(fit.phi.shape(), (4, 2));
        // coefficients live in the span of Φ on the response side
        let proj = &fit.phi * fit.phi.transpose();
        assert!(max_abs_diff(&(&fit.coef * &proj), &fit.coef) < 1e-10);
    }
}
