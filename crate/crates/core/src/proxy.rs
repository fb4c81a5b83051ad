//! Factor-proxy construction: the T x m proxy matrix, its annihilator, and
//! the per-unit influence vectors that feed the variance correction.
//!
//! A proxy spec is an ordered list of columns. Deterministic columns
//! (intercept, trends, user-supplied vectors) are known constants; stochastic
//! columns are cross-sectional averages of per-unit statistics (regressor
//! means, outcome means, per-period second moments). Every stochastic column
//! is an i.i.d. average, so its first-stage sampling error has the influence
//! representation q_i = vec(H_i - H_bar) with H_i the unit's per-column
//! statistic matrix; deterministic columns get identically-zero blocks so a
//! single vec layout serves the Jacobian algebra downstream.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{self, Matrix};
use crate::panel::{cross_section_means, PanelDataset};

/// One declared proxy column (MeanX expands to k columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxyColumn {
    /// Column of ones.
    Intercept,
    /// t^power for t = 1..T (raw powers, no orthogonalization).
    Trend { power: u32 },
    /// A known T-vector supplied by the caller.
    Deterministic { label: String, values: Vec<f64> },
    /// Cross-sectional means of all k regressors (k columns).
    MeanX,
    /// Cross-sectional mean of the outcome.
    MeanY,
    /// Per-period cross-sectional mean of x_j * x_l; `indices` are the
    /// 1-based regressor indices (j, l).
    MeanProduct { indices: (usize, usize) },
}

/// Ordered list of proxy columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxySpec {
    pub columns: Vec<ProxyColumn>,
}

impl ProxySpec {
    pub fn new(columns: Vec<ProxyColumn>) -> Self {
        ProxySpec { columns }
    }

    /// Number of realized columns for a panel with k regressors.
    pub fn width(&self, k: usize) -> usize {
        self.columns
            .iter()
            .map(|c| match c {
                ProxyColumn::MeanX => k,
                _ => 1,
            })
            .sum()
    }

    pub fn has_mean_x(&self) -> bool {
        self.columns.iter().any(|c| matches!(c, ProxyColumn::MeanX))
    }

    pub fn has_mean_y(&self) -> bool {
        self.columns.iter().any(|c| matches!(c, ProxyColumn::MeanY))
    }

    /// Structural validation against a panel with k regressors.
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::InvalidConfig("proxy spec has no columns".to_string()));
        }
        let mean_x_count = self
            .columns
            .iter()
            .filter(|c| matches!(c, ProxyColumn::MeanX))
            .count();
        if mean_x_count > 1 {
            return Err(Error::InvalidConfig(
                "mean_x may appear at most once in a proxy spec".to_string(),
            ));
        }
        for col in &self.columns {
            match col {
                ProxyColumn::Trend { power } if *power == 0 => {
                    return Err(Error::InvalidConfig("trend power must be >= 1".to_string()));
                }
                ProxyColumn::MeanProduct { indices: (j, l) } => {
                    if *j == 0 || *l == 0 || *j > k || *l > k {
                        return Err(Error::InvalidConfig(format!(
                            "mean_product indices ({j}, {l}) out of range 1..={k}"
                        )));
                    }
                }
                ProxyColumn::Deterministic { values, .. } if values.is_empty() => {
                    return Err(Error::InvalidConfig(
                        "deterministic proxy column has no values".to_string(),
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Realized proxy matrix with its annihilator.
#[derive(Debug, Clone)]
pub struct ProxyMatrix {
    /// T x m realized proxy columns, in declared order.
    pub psi_hat: Matrix,
    pub m: usize,
    pub column_labels: Vec<String>,
    /// Per-column flag: false for Intercept/Trend/Deterministic.
    pub is_stochastic: Vec<bool>,
    /// M = I_T - Psi (Psi'Psi)^{-1} Psi'.
    pub annihilator: Matrix,
    /// Condition number of psi_hat (ratio of extreme singular values).
    pub condition: f64,
}

/// Per-unit influence vectors q_i = vec(H_i - H_bar), laid out column-major
/// in proxy-column order (length T * m).
#[derive(Debug, Clone)]
pub struct InfluenceSet {
    pub q: Vec<DVector<f64>>,
    /// Stochastic flag per realized column, matching the vec layout.
    pub is_stochastic: Vec<bool>,
}

struct RealizedColumn {
    label: String,
    stochastic: bool,
    /// Realized proxy column (cross-sectional average for stochastic ones).
    average: DVector<f64>,
    /// Per-unit statistic H_i column; `None` for deterministic columns
    /// (identically equal to `average` for every unit).
    per_unit: Option<Vec<DVector<f64>>>,
}

fn realize_columns(ds: &PanelDataset, spec: &ProxySpec) -> Result<Vec<RealizedColumn>> {
    spec.validate(ds.k())?;
    let t = ds.t();
    let n = ds.n();
    let means = cross_section_means(ds);
    let mut out = Vec::new();
    for col in &spec.columns {
        match col {
            ProxyColumn::Intercept => out.push(RealizedColumn {
                label: "const".to_string(),
                stochastic: false,
                average: DVector::from_element(t, 1.0),
                per_unit: None,
            }),
            ProxyColumn::Trend { power } => out.push(RealizedColumn {
                label: if *power == 1 {
                    "trend".to_string()
                } else {
                    format!("trend^{power}")
                },
                stochastic: false,
                average: DVector::from_fn(t, |ti, _| ((ti + 1) as f64).powi(*power as i32)),
                per_unit: None,
            }),
            ProxyColumn::Deterministic { label, values } => {
                if values.len() != t {
                    return Err(Error::DimensionMismatch(format!(
                        "deterministic proxy column '{label}' has {} values, panel has T = {t}",
                        values.len()
                    )));
                }
                out.push(RealizedColumn {
                    label: label.clone(),
                    stochastic: false,
                    average: DVector::from_column_slice(values),
                    per_unit: None,
                });
            }
            ProxyColumn::MeanX => {
                for j in 0..ds.k() {
                    out.push(RealizedColumn {
                        label: format!("mean({})", ds.regressor_names()[j]),
                        stochastic: true,
                        average: means.x_bar.column(j).into_owned(),
                        per_unit: Some((0..n).map(|i| ds.x(i).column(j).into_owned()).collect()),
                    });
                }
            }
            ProxyColumn::MeanY => out.push(RealizedColumn {
                label: "mean(y)".to_string(),
                stochastic: true,
                average: means.y_bar.clone(),
                per_unit: Some((0..n).map(|i| ds.y(i).clone()).collect()),
            }),
            ProxyColumn::MeanProduct { indices: (j, l) } => {
                let (cj, cl) = (*j - 1, *l - 1);
                let per_unit: Vec<DVector<f64>> = (0..n)
                    .map(|i| DVector::from_fn(t, |ti, _| ds.x(i)[(ti, cj)] * ds.x(i)[(ti, cl)]))
                    .collect();
                let mut avg = DVector::zeros(t);
                for h in &per_unit {
                    avg += h;
                }
                avg /= n as f64;
                out.push(RealizedColumn {
                    label: format!(
                        "mean({}*{})",
                        ds.regressor_names()[cj],
                        ds.regressor_names()[cl]
                    ),
                    stochastic: true,
                    average: avg,
                    per_unit: Some(per_unit),
                });
            }
        }
    }
    Ok(out)
}

/// Realize the proxy matrix for a dataset and compute its annihilator.
pub fn build_proxy(ds: &PanelDataset, spec: &ProxySpec) -> Result<ProxyMatrix> {
    let cols = realize_columns(ds, spec)?;
    let t = ds.t();
    let m = cols.len();
    if m >= t {
        return Err(Error::TooManyProxies { m, t });
    }
    let mut psi_hat = Matrix::zeros(t, m);
    for (c, col) in cols.iter().enumerate() {
        psi_hat.set_column(c, &col.average);
    }
    let (rank, condition) = matops::rank_and_condition(&psi_hat);
    if rank < m {
        return Err(Error::RankDeficient {
            matrix: "psi_hat".to_string(),
            rank,
            expected: m,
            condition,
        });
    }
    let annihilator = matops::residual_maker(&psi_hat)?;
    Ok(ProxyMatrix {
        psi_hat,
        m,
        column_labels: cols.iter().map(|c| c.label.clone()).collect(),
        is_stochastic: cols.iter().map(|c| c.stochastic).collect(),
        annihilator,
        condition,
    })
}

/// Per-unit influence vectors for the realized proxy columns.
pub fn build_influence(ds: &PanelDataset, spec: &ProxySpec) -> Result<InfluenceSet> {
    let cols = realize_columns(ds, spec)?;
    let t = ds.t();
    let m = cols.len();
    if m >= t {
        return Err(Error::TooManyProxies { m, t });
    }
    let n = ds.n();
    let mut q: Vec<DVector<f64>> = (0..n).map(|_| DVector::zeros(t * m)).collect();
    for (c, col) in cols.iter().enumerate() {
        if let Some(per_unit) = &col.per_unit {
            for (i, h_i) in per_unit.iter().enumerate() {
                let dev = h_i - &col.average;
                q[i].rows_mut(c * t, t).copy_from(&dev);
            }
        }
    }
    Ok(InfluenceSet {
        q,
        is_stochastic: cols.iter().map(|c| c.stochastic).collect(),
    })
}
