//! Result documents and output rendering (json / csv / table).

use ccep::error::{Error, Result};
use ccep::estimator::{ComparisonRow, EstimateResult};
use ccep::matops::Matrix;
use ccep::montecarlo::McReport;
use ccep::proxy::ProxySpec;
use ccep::variance::VarianceResult;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

/// Machine-readable estimate result; JSON numbers carry full round-trip
/// precision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateDocument {
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub n_obs: usize,
    pub dof: i64,
    pub regressors: Vec<String>,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_identically_zero: bool,
    pub se_corrected: Vec<f64>,
    pub se_naive: Vec<f64>,
    pub ci_level: f64,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub ci_lower_naive: Vec<f64>,
    pub ci_upper_naive: Vec<f64>,
    pub proxy_spec: ProxySpec,
    pub proxy_columns: Vec<String>,
    pub proxy_condition: f64,
    pub a_condition: f64,
    pub non_psd_warning: bool,
}

pub fn estimate_document(
    ds_names: &[String],
    res: &EstimateResult,
    var: &VarianceResult,
    proxy_spec: &ProxySpec,
) -> EstimateDocument {
    EstimateDocument {
        n: res.n_units(),
        t: res.proxy.annihilator.nrows(),
        k: res.k(),
        n_obs: res.n_obs,
        dof: res.dof,
        regressors: ds_names.to_vec(),
        beta: res.beta_hat.iter().cloned().collect(),
        alpha: res.alpha_hat.iter().cloned().collect(),
        alpha_identically_zero: res.alpha_identically_zero,
        se_corrected: var.se_corrected.iter().cloned().collect(),
        se_naive: var.se_naive.iter().cloned().collect(),
        ci_level: var.ci_level,
        ci_lower: var.ci_lower.iter().cloned().collect(),
        ci_upper: var.ci_upper.iter().cloned().collect(),
        ci_lower_naive: var.ci_lower_naive.iter().cloned().collect(),
        ci_upper_naive: var.ci_upper_naive.iter().cloned().collect(),
        proxy_spec: proxy_spec.clone(),
        proxy_columns: res.proxy.column_labels.clone(),
        proxy_condition: res.proxy.condition,
        a_condition: res.a_condition,
        non_psd_warning: var.non_psd_warning,
    }
}

/// Six significant digits for the human-readable table.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn render_estimate(doc: &EstimateDocument, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(doc).expect("serializable"),
        Format::Csv => {
            let mut out = String::from(
                "coefficient,estimate,se_corrected,se_naive,ci_lower,ci_upper\n",
            );
            for j in 0..doc.k {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    doc.regressors[j],
                    doc.beta[j],
                    doc.se_corrected[j],
                    doc.se_naive[j],
                    doc.ci_lower[j],
                    doc.ci_upper[j]
                ));
            }
            for (i, a) in doc.alpha.iter().enumerate() {
                out.push_str(&format!("d{},{},,,,\n", i + 1, a));
            }
            out
        }
        Format::Table => {
            let mut out = String::new();
            out.push_str(&format!(
                "panel: N = {}, T = {}, k = {} ({} observations, dof {})\n",
                doc.n, doc.t, doc.k, doc.n_obs, doc.dof
            ));
            out.push_str(&format!(
                "proxies: [{}]  condition {}\n",
                doc.proxy_columns.join(", "),
                sig6(doc.proxy_condition)
            ));
            out.push_str(&format!(
                "{:<12} {:>14} {:>14} {:>14} {:>14} {:>14}\n",
                "coefficient", "estimate", "se(corr)", "se(naive)", "ci lower", "ci upper"
            ));
            for j in 0..doc.k {
                out.push_str(&format!(
                    "{:<12} {:>14} {:>14} {:>14} {:>14} {:>14}\n",
                    doc.regressors[j],
                    sig6(doc.beta[j]),
                    sig6(doc.se_corrected[j]),
                    sig6(doc.se_naive[j]),
                    sig6(doc.ci_lower[j]),
                    sig6(doc.ci_upper[j])
                ));
            }
            if !doc.alpha.is_empty() {
                let note = if doc.alpha_identically_zero {
                    " (identically zero: outcome mean among the proxies)"
                } else {
                    ""
                };
                out.push_str(&format!("deterministic coefficients{note}:\n"));
                for (i, a) in doc.alpha.iter().enumerate() {
                    out.push_str(&format!("  d{:<10} {:>14}\n", i + 1, sig6(*a)));
                }
            }
            if doc.non_psd_warning {
                out.push_str("warning: a score covariance matrix has a negative eigenvalue beyond tolerance\n");
            }
            out
        }
    }
}

pub fn render_compare(rows: &[ComparisonRow], format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(rows).expect("serializable"),
        Format::Csv => {
            let mut out = String::from("label,status,beta,alpha\n");
            for row in rows {
                let status = row.error.as_deref().unwrap_or("ok");
                let beta = row
                    .beta
                    .as_ref()
                    .map(|b| b.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"))
                    .unwrap_or_default();
                let alpha = row
                    .alpha
                    .as_ref()
                    .map(|a| a.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"))
                    .unwrap_or_default();
                out.push_str(&format!("{},{},{},{}\n", row.label, status, beta, alpha));
            }
            out
        }
        Format::Table => {
            let mut out = format!("{:<28} {:>40}\n", "spec", "beta");
            for row in rows {
                match &row.beta {
                    Some(beta) => {
                        let cells: Vec<String> = beta.iter().map(|v| sig6(*v)).collect();
                        out.push_str(&format!("{:<28} {:>40}\n", row.label, cells.join("  ")));
                    }
                    None => {
                        out.push_str(&format!(
                            "{:<28} {:>40}\n",
                            row.label,
                            row.error.as_deref().unwrap_or("failed")
                        ));
                    }
                }
            }
            out
        }
    }
}

pub fn render_mc(report: &McReport, format: Format) -> String {
    match format {
        Format::Json => report.to_json(),
        Format::Csv => {
            let mut out = String::from(
                "estimator,coefficient,true_value,mean_bias,rmse,sd,mean_se_corrected,mean_se_naive,coverage_corrected,coverage_naive,reps_used\n",
            );
            for est in &report.estimators {
                for c in &est.coefficients {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{},{},{}\n",
                        est.label,
                        c.name,
                        c.true_value,
                        c.mean_bias,
                        c.rmse,
                        c.sd_of_estimates,
                        c.mean_se_corrected,
                        c.mean_se_naive,
                        c.coverage_corrected,
                        c.coverage_naive,
                        est.reps_used
                    ));
                }
            }
            out
        }
        Format::Table => {
            let mut out = format!(
                "monte carlo: N = {}, reps = {}, ci level {}, seed {}\n",
                report.n, report.reps, report.ci_level, report.master_seed
            );
            out.push_str(&format!(
                "{:<16} {:<6} {:>11} {:>11} {:>11} {:>11} {:>11} {:>9} {:>9}\n",
                "estimator", "coef", "bias", "rmse", "sd", "se(corr)", "se(naive)", "cov(c)", "cov(n)"
            ));
            for est in &report.estimators {
                for c in &est.coefficients {
                    out.push_str(&format!(
                        "{:<16} {:<6} {:>11} {:>11} {:>11} {:>11} {:>11} {:>9.3} {:>9.3}\n",
                        est.label,
                        c.name,
                        sig6(c.mean_bias),
                        sig6(c.rmse),
                        sig6(c.sd_of_estimates),
                        sig6(c.mean_se_corrected),
                        sig6(c.mean_se_naive),
                        c.coverage_corrected,
                        c.coverage_naive
                    ));
                }
                if !est.failures.is_empty() {
                    out.push_str(&format!("  {} failures: {:?}\n", est.label, est.failures));
                }
            }
            if let Some(eff) = &report.efficiency {
                out.push_str(&format!(
                    "efficiency: min eig(Var[{}] - Var[{}]) = {} (mc se of smallest variance {})\n",
                    eff.extended_label,
                    eff.base_label,
                    sig6(eff.variance_difference_min_eigenvalue),
                    sig6(eff.smallest_variance_mc_se)
                ));
            }
            out
        }
    }
}

/// Per-replication CSV dump.
pub fn render_rep_dump(report: &McReport) -> Result<String> {
    let rows = report.per_rep.as_ref().ok_or_else(|| {
        Error::InvalidConfig("per-replication records were not kept".to_string())
    })?;
    let k = report.true_beta.len();
    let mut out = String::from("rep,estimator");
    for j in 1..=k {
        out.push_str(&format!(",beta_x{j}"));
    }
    for j in 1..=k {
        out.push_str(&format!(",se_corrected_x{j}"));
    }
    for j in 1..=k {
        out.push_str(&format!(",se_naive_x{j}"));
    }
    out.push_str(",error\n");
    for row in rows {
        out.push_str(&format!("{},{}", row.rep, row.label));
        let cell = |v: Option<&f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for j in 0..k {
            out.push_str(&format!(",{}", cell(row.beta.get(j))));
        }
        for j in 0..k {
            out.push_str(&format!(",{}", cell(row.se_corrected.get(j))));
        }
        for j in 0..k {
            out.push_str(&format!(",{}", cell(row.se_naive.get(j))));
        }
        out.push_str(&format!(",{}\n", row.error.as_deref().unwrap_or("")));
    }
    Ok(out)
}

/// Ground-truth document written next to simulated panels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthDocument {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Realized factor matrix, T rows by p columns.
    pub f: Vec<Vec<f64>>,
    /// Deterministic block, T rows by r columns (empty when r = 0).
    pub d: Vec<Vec<f64>>,
    pub seed: u64,
    pub n: usize,
}

pub fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_rounds_to_six_significant_digits() {
        assert_eq!(sig6(1234.56789), "1234.57");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(-1.959963984540054), "-1.95996");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(123456789.0), "1.23457e8");
    }
}
