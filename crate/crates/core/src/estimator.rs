//! The pooled estimator with unit-level partialling of estimated factor
//! proxies, plus presets and multi-spec comparison.
//!
//! The slope vector is always computed from the proxy-only normal equations
//!
//! ```text
//! beta_hat = (sum_i X_i' M X_i)^{-1} (sum_i X_i' M y_i),   M = M_psi_hat
//! ```
//!
//! Aggregate deterministic regressors D (intercept, trends, time dummies)
//! never enter this solve: whenever the proxy set contains the regressor
//! means, the long regression on (M D, M X_i) returns the same slope block,
//! so the short solve is taken as the definition. When D is requested, its
//! coefficients are fit afterwards to the averaged partialled residual
//! `M (y_bar - X_bar beta_hat)`, which reproduces the long-regression alpha
//! exactly in that same case. When the proxy set also contains the outcome
//! mean, alpha is identically zero and is returned as exact zeros without a
//! solve.
//!
//! Every unit-level pass runs in a fixed order, so results are bit-identical
//! across runs and independent of caller-level parallelism.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{self, Matrix};
use crate::panel::{cross_section_means, PanelDataset};
use crate::proxy::{build_proxy, ProxyColumn, ProxyMatrix, ProxySpec};

/// Aggregate deterministic regressors d_t with homogeneous coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeterministicSpec {
    /// As many period dummies as the proxy set allows (r = T - m, for
    /// periods 2..=T-m+1; period 1 is the base).
    TimeDummies,
    /// Columns t^1..t^degree, t = 1..T.
    Trend { degree: u32 },
    /// Explicit T x r values, row per period.
    Explicit { values: Vec<Vec<f64>> },
}

/// Full estimator specification: proxy columns plus optional deterministic
/// regressors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub proxy: ProxySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deterministic: Option<DeterministicSpec>,
}

impl EstimatorSpec {
    pub fn proxy_only(proxy: ProxySpec) -> Self {
        EstimatorSpec {
            proxy,
            deterministic: None,
        }
    }
}

/// Named estimator presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Partial out the regressor means.
    CcepX,
    /// Partial out the regressor and outcome means.
    CcepXy,
    /// Partial out a constant: the within (fixed effects) estimator.
    FeWithin,
    /// Partial out (1, t): unit-specific linear detrending.
    Detrend,
    /// Partial out (1, x_bar_t).
    CcepXPlusIntercept,
    /// Partial out (1, t, x_bar_t).
    CcepXPlusTrend,
}

impl Preset {
    pub fn proxy_spec(&self) -> ProxySpec {
        let cols = match self {
            Preset::CcepX => vec![ProxyColumn::MeanX],
            Preset::CcepXy => vec![ProxyColumn::MeanX, ProxyColumn::MeanY],
            Preset::FeWithin => vec![ProxyColumn::Intercept],
            Preset::Detrend => vec![ProxyColumn::Intercept, ProxyColumn::Trend { power: 1 }],
            Preset::CcepXPlusIntercept => vec![ProxyColumn::Intercept, ProxyColumn::MeanX],
            Preset::CcepXPlusTrend => vec![
                ProxyColumn::Intercept,
                ProxyColumn::Trend { power: 1 },
                ProxyColumn::MeanX,
            ],
        };
        ProxySpec::new(cols)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::CcepX => "ccep_x",
            Preset::CcepXy => "ccep_xy",
            Preset::FeWithin => "fe_within",
            Preset::Detrend => "detrend",
            Preset::CcepXPlusIntercept => "ccep_x_plus_intercept",
            Preset::CcepXPlusTrend => "ccep_x_plus_trend",
        }
    }

    pub fn parse(name: &str) -> Result<Preset> {
        match name {
            "ccep_x" => Ok(Preset::CcepX),
            "ccep_xy" => Ok(Preset::CcepXy),
            "fe_within" => Ok(Preset::FeWithin),
            "detrend" => Ok(Preset::Detrend),
            "ccep_x_plus_intercept" => Ok(Preset::CcepXPlusIntercept),
            "ccep_x_plus_trend" => Ok(Preset::CcepXPlusTrend),
            other => Err(Error::InvalidConfig(format!("unknown preset '{other}'"))),
        }
    }

    pub fn all() -> &'static [Preset] {
        &[
            Preset::CcepX,
            Preset::CcepXy,
            Preset::FeWithin,
            Preset::Detrend,
            Preset::CcepXPlusIntercept,
            Preset::CcepXPlusTrend,
        ]
    }
}

/// Fit output: coefficients, per-unit partialled blocks, residuals, and the
/// curvature matrix used by the variance module.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub beta_hat: DVector<f64>,
    /// Coefficients on D; empty when no deterministic block was requested.
    pub alpha_hat: DVector<f64>,
    /// Set when alpha is identically zero because the proxy set contains
    /// both the regressor means and the outcome mean.
    pub alpha_identically_zero: bool,
    /// Per-unit M X_i.
    pub x_ddot: Vec<Matrix>,
    /// Raw T x r deterministic block (zero columns when r = 0).
    pub d_matrix: Matrix,
    /// M D.
    pub d_ddot: Matrix,
    /// Per-unit residuals y_i - D alpha_hat - X_i beta_hat.
    pub u_hat: Vec<DVector<f64>>,
    /// A_hat = N^{-1} sum_i X_ddot_i' X_ddot_i, symmetrized.
    pub a_hat: Matrix,
    pub proxy: ProxyMatrix,
    pub n_obs: usize,
    /// N (T - m) - k - r; diagnostic only, no estimator uses it by default.
    pub dof: i64,
    /// Condition number of sum_i X_ddot_i' X_ddot_i.
    pub a_condition: f64,
}

impl EstimateResult {
    pub fn n_units(&self) -> usize {
        self.x_ddot.len()
    }

    pub fn k(&self) -> usize {
        self.beta_hat.len()
    }

    pub fn r(&self) -> usize {
        self.alpha_hat.len()
    }
}

/// Realize the deterministic block for a panel, given the proxy width m.
fn build_deterministic(spec: &DeterministicSpec, t: usize, m: usize) -> Result<Matrix> {
    match spec {
        DeterministicSpec::TimeDummies => {
            let r = t.saturating_sub(m);
            if r == 0 {
                return Err(Error::InvalidConfig(
                    "time_dummies: no free periods left after the proxy columns".to_string(),
                ));
            }
            let mut d = Matrix::zeros(t, r);
            for j in 0..r {
                d[(j + 1, j)] = 1.0;
            }
            Ok(d)
        }
        DeterministicSpec::Trend { degree } => {
            if *degree == 0 {
                return Err(Error::InvalidConfig("trend degree must be >= 1".to_string()));
            }
            let r = *degree as usize;
            Ok(Matrix::from_fn(t, r, |ti, j| {
                ((ti + 1) as f64).powi(j as i32 + 1)
            }))
        }
        DeterministicSpec::Explicit { values } => {
            if values.len() != t {
                return Err(Error::DimensionMismatch(format!(
                    "deterministic block has {} rows, panel has T = {t}",
                    values.len()
                )));
            }
            let r = values[0].len();
            if r == 0 || values.iter().any(|row| row.len() != r) {
                return Err(Error::DimensionMismatch(
                    "deterministic block rows must share a positive length".to_string(),
                ));
            }
            Ok(Matrix::from_fn(t, r, |ti, j| values[ti][j]))
        }
    }
}

/// Fit the extended pooled estimator.
pub fn ccep_fit(ds: &PanelDataset, spec: &EstimatorSpec) -> Result<EstimateResult> {
    spec.proxy.validate(ds.k())?;
    let t = ds.t();
    let n = ds.n();
    let k = ds.k();
    let m = spec.proxy.width(k);
    if t <= m {
        return Err(Error::TooFewPeriods {
            min_exclusive: m,
            available: t,
        });
    }

    let proxy = build_proxy(ds, &spec.proxy)?;
    let annihilator = &proxy.annihilator;

    // unit-level partialling and fixed-order accumulation
    let mut x_ddot = Vec::with_capacity(n);
    let mut s_xx = Matrix::zeros(k, k);
    let mut s_xy = DVector::zeros(k);
    for i in 0..n {
        let xd = annihilator * ds.x(i);
        s_xx += xd.transpose() * &xd;
        s_xy += xd.transpose() * ds.y(i);
        x_ddot.push(xd);
    }

    let (a_rank, a_condition) = matops::rank_and_condition(&s_xx);
    if a_rank < k {
        return Err(Error::RankDeficient {
            matrix: "sum(X_ddot' X_ddot)".to_string(),
            rank: a_rank,
            expected: k,
            condition: a_condition,
        });
    }
    let beta_hat = matops::ols_solve(&s_xx, &Matrix::from_column_slice(k, 1, s_xy.as_slice()), true)?
        .coefficients
        .column(0)
        .into_owned();

    let mut a_hat = s_xx / n as f64;
    for i in 0..k {
        for j in 0..i {
            let v = 0.5 * (a_hat[(i, j)] + a_hat[(j, i)]);
            a_hat[(i, j)] = v;
            a_hat[(j, i)] = v;
        }
    }

    // deterministic block
    let (d_matrix, d_ddot, alpha_hat, alpha_identically_zero) = match &spec.deterministic {
        None => (Matrix::zeros(t, 0), Matrix::zeros(t, 0), DVector::zeros(0), false),
        Some(dspec) => {
            let d = build_deterministic(dspec, t, m)?;
            let r = d.ncols();
            let d_ddot = annihilator * &d;
            let (d_rank, d_condition) = matops::rank_and_condition(&d_ddot);
            if d_rank < r {
                return Err(Error::RankDeficient {
                    matrix: "D_ddot".to_string(),
                    rank: d_rank,
                    expected: r,
                    condition: d_condition,
                });
            }
            if spec.proxy.has_mean_x() && spec.proxy.has_mean_y() {
                // alpha is identically zero: the annihilator kills both the
                // regressor and outcome means, so the averaged residual the
                // D block would fit is exactly zero.
                (d, d_ddot, DVector::zeros(r), true)
            } else {
                let means = cross_section_means(ds);
                let target = annihilator * (means.y_bar - &means.x_bar * &beta_hat);
                let alpha = matops::ols_solve(
                    &d_ddot,
                    &Matrix::from_column_slice(t, 1, target.as_slice()),
                    true,
                )
                .map_err(|e| match e {
                    Error::RankDeficient {
                        rank,
                        expected,
                        condition,
                        ..
                    } => Error::RankDeficient {
                        matrix: "D_ddot".to_string(),
                        rank,
                        expected,
                        condition,
                    },
                    other => other,
                })?
                .coefficients
                .column(0)
                .into_owned();
                (d, d_ddot, alpha, false)
            }
        }
    };

    // residuals per the estimated model: net out D and X, not the proxies
    let r = alpha_hat.len();
    let d_alpha = if r > 0 {
        &d_matrix * &alpha_hat
    } else {
        DVector::zeros(t)
    };
    let u_hat: Vec<DVector<f64>> = (0..n)
        .map(|i| ds.y(i) - &d_alpha - ds.x(i) * &beta_hat)
        .collect();

    Ok(EstimateResult {
        beta_hat,
        alpha_hat,
        alpha_identically_zero,
        x_ddot,
        d_matrix,
        d_ddot,
        u_hat,
        a_hat,
        proxy,
        n_obs: n * t,
        dof: (n * (t - m)) as i64 - k as i64 - r as i64,
        a_condition,
    })
}

/// Fit one of the named presets (no deterministic block).
pub fn ccep_fit_preset(ds: &PanelDataset, preset: Preset) -> Result<EstimateResult> {
    ccep_fit(ds, &EstimatorSpec::proxy_only(preset.proxy_spec()))
}

/// One row of a spec comparison: the estimate, or the error that felled it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub beta: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    pub error: Option<String>,
}

/// Fit several specs on the same dataset; per-spec failures become row-level
/// flags and do not abort the other rows.
pub fn compare_specs(ds: &PanelDataset, specs: &[(String, EstimatorSpec)]) -> Vec<ComparisonRow> {
    specs
        .iter()
        .map(|(label, spec)| match ccep_fit(ds, spec) {
            Ok(res) => ComparisonRow {
                label: label.clone(),
                beta: Some(res.beta_hat.iter().cloned().collect()),
                alpha: Some(res.alpha_hat.iter().cloned().collect()),
                error: None,
            },
            Err(e) => ComparisonRow {
                label: label.clone(),
                beta: None,
                alpha: None,
                error: Some(format!("{}: {e}", e.kind().as_str())),
            },
        })
        .collect()
}
