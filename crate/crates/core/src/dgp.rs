//! Synthetic factor-model panels with known truth.
//!
//! Generates y_i = D (alpha + a_i) + X_i (beta + b_i) + F gamma_i + e_i with
//! configurable factor structure, regressor processes, loading-regressor
//! correlation, idiosyncratic error processes, and slope heterogeneity.
//!
//! Correlation channels run through a shared latent k-vector h_i: it can
//! shift unit regressor levels, tilt factor loadings, and tilt slopes, so
//! "heterogeneity correlated with X" presets are one knob away from their
//! "independent" counterparts.
//!
//! Randomness: one ChaCha8 stream per unit (`seed` selects the keystream,
//! the unit index selects the stream), so generation is reproducible
//! bit-for-bit no matter how units are scheduled across workers.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::Matrix;
use crate::panel::PanelDataset;

/// Factor matrix F (T x p) selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorMode {
    /// Explicit T x p values, row per period.
    ExplicitF { values: Vec<Vec<f64>> },
    /// Single constant factor (classic additive effect), p = 1.
    AdditiveEffect,
    /// Constant plus linear trend, p = 2.
    LinearTrendHet,
    /// F = Psi Lambda where Psi stacks deterministic columns and the
    /// population regressor means; `lambda` is m x p (rows follow the
    /// expanded template order).
    Bsw {
        template: Vec<BswColumn>,
        lambda: Vec<Vec<f64>>,
    },
}

/// Columns available to the BSW factor template (MeanX expands to k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BswColumn {
    Intercept,
    Trend { power: u32 },
    MeanX,
}

/// Distribution of the factor loadings gamma_i (p-vector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingModel {
    /// Mean loading vector (length p).
    pub gamma_bar: Vec<f64>,
    /// Standard deviation of the independent Gaussian part.
    pub gamma_sd: f64,
    /// Coupling of gamma_i to the shared latent h_i; nonzero makes the
    /// heterogeneity correlated with the regressors.
    pub corr_with_x: f64,
}

/// Population mean structure mu_X for mean-based regressor models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanSpec {
    /// Explicit T x k values.
    Explicit { values: Vec<Vec<f64>> },
    /// base + amplitude * cos(pi (2t+1)(j+1) / (2T)): mutually independent
    /// cosine columns, full column rank for any k < T.
    Smooth { base: f64, amplitude: f64 },
}

/// Idiosyncratic noise process for regressors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseProcess {
    Iid { sigma: f64 },
    /// Stationary AR(1) with marginal standard deviation sigma.
    Ar1 { rho: f64, sigma: f64 },
}

impl NoiseProcess {
    fn sigma(&self) -> f64 {
        match self {
            NoiseProcess::Iid { sigma } => *sigma,
            NoiseProcess::Ar1 { sigma, .. } => *sigma,
        }
    }

    fn validate(&self) -> Result<()> {
        let (rho, sigma) = match self {
            NoiseProcess::Iid { sigma } => (0.0, *sigma),
            NoiseProcess::Ar1 { rho, sigma } => (*rho, *sigma),
        };
        check_rho(rho)?;
        check_sigma(sigma)
    }

    fn draw(&self, t: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        match self {
            NoiseProcess::Iid { sigma } => {
                DVector::from_fn(t, |_, _| *sigma * randn(rng))
            }
            NoiseProcess::Ar1 { rho, sigma } => ar1_chain(t, *rho, *sigma, rng),
        }
    }
}

/// Regressor-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorModel {
    /// X_i = mu_X + 1_T (shift_scale * h_i)' + V_i: regressor means load on
    /// nothing, unit levels shift with the latent h_i.
    General {
        mu_x: MeanSpec,
        shift_scale: f64,
        noise: NoiseProcess,
    },
    /// X_i = F Gamma_i + V_i with Gamma_i = Gamma_bar + sd * Z_i + coupling
    /// to h_i: the full factor structure on the regressors.
    Scf {
        /// p x k mean loading matrix.
        gamma_mat_bar: Vec<Vec<f64>>,
        gamma_mat_sd: f64,
        /// Couples column b of Gamma_i to h_{ib} (decaying over factor index).
        h_coupling: f64,
        noise: NoiseProcess,
    },
    /// Binary staggered adoption: regressor j switches on from period
    /// T - k + j for units whose latent crosses the adoption threshold;
    /// `fractions[j]` is the adopter share. Discreteness deliberately breaks
    /// regressor-side factor structures.
    StaggeredBinary {
        fractions: Vec<f64>,
        latent_coupling: f64,
    },
}

/// Idiosyncratic error process for the outcome equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorModel {
    IidNormal { sigma: f64 },
    Ar1 { rho: f64, sigma: f64 },
    /// Unit-variance AR(1) innovations scaled per period.
    Heteroskedastic { rho: f64, sigma_by_period: Vec<f64> },
}

/// Random slopes b_i on X (and a_i on D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeHeterogeneity {
    /// Independent sd of a_i components (length r; empty when no D).
    pub sd_a: Vec<f64>,
    /// Independent sd of b_i components (length k).
    pub sd_b: Vec<f64>,
    /// Couples b_i to the latent level h_i (allowed by the estimator's
    /// exogeneity conditions: levels are partialled out).
    pub couple_level: f64,
    /// Couples b_i to the unit's idiosyncratic regressor volatility
    /// (standardized sum of squared noise), which the exogeneity conditions
    /// rule out; nonzero values make the pooled estimator biased.
    pub couple_volatility: f64,
}

/// Deterministic aggregate block D with true alpha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpDeterministic {
    pub kind: DgpDKind,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DgpDKind {
    /// Columns t^1..t^degree.
    Trend { degree: u32 },
    /// Explicit T x r values.
    Explicit { values: Vec<Vec<f64>> },
}

/// Full data-generating configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub t: usize,
    pub k: usize,
    /// True mean slopes (length k).
    pub beta: Vec<f64>,
    pub factor_mode: FactorMode,
    pub loading_model: LoadingModel,
    pub regressor_model: RegressorModel,
    pub error_model: ErrorModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_heterogeneity: Option<SlopeHeterogeneity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deterministic: Option<DgpDeterministic>,
    /// Record per-unit loadings, slopes, and errors in the truth object.
    #[serde(default)]
    pub record_components: bool,
}

/// Ground truth accompanying a generated panel.
#[derive(Debug, Clone)]
pub struct DgpTruth {
    pub beta: DVector<f64>,
    pub alpha: DVector<f64>,
    /// Realized T x p factor matrix.
    pub f: Matrix,
    /// Realized T x r deterministic block (zero columns if none).
    pub d: Matrix,
    pub gamma: Option<Vec<DVector<f64>>>,
    pub slope_a: Option<Vec<DVector<f64>>>,
    pub slope_b: Option<Vec<DVector<f64>>>,
    pub errors: Option<Vec<DVector<f64>>>,
}

fn randn(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Stationary AR(1) chain with marginal sd sigma.
fn ar1_chain(t: usize, rho: f64, sigma: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut v = DVector::zeros(t);
    if t == 0 {
        return v;
    }
    v[0] = sigma * randn(rng);
    let innov = sigma * (1.0 - rho * rho).sqrt();
    for ti in 1..t {
        v[ti] = rho * v[ti - 1] + innov * randn(rng);
    }
    v
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && rho.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "ar(1) rho must satisfy |rho| < 1, got {rho}"
        )))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("sigma must be >= 0, got {sigma}")))
    }
}

fn matrix_from_rows(values: &[Vec<f64>], what: &str, t: usize) -> Result<Matrix> {
    if values.len() != t {
        return Err(Error::InvalidConfig(format!(
            "{what}: {} rows, expected T = {t}",
            values.len()
        )));
    }
    let cols = values[0].len();
    if cols == 0 || values.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidConfig(format!(
            "{what}: rows must share a positive length"
        )));
    }
    Ok(Matrix::from_fn(t, cols, |ti, j| values[ti][j]))
}

/// Population regressor means, when the regressor model pins them down.
fn population_mu_x(config: &DgpConfig) -> Result<Option<Matrix>> {
    let t = config.t;
    let k = config.k;
    match &config.regressor_model {
        RegressorModel::General { mu_x, .. } => match mu_x {
            MeanSpec::Explicit { values } => {
                let m = matrix_from_rows(values, "mu_x", t)?;
                if m.ncols() != k {
                    return Err(Error::InvalidConfig(format!(
                        "mu_x has {} columns, expected k = {k}",
                        m.ncols()
                    )));
                }
                Ok(Some(m))
            }
            MeanSpec::Smooth { base, amplitude } => Ok(Some(Matrix::from_fn(t, k, |ti, j| {
                base + amplitude
                    * (std::f64::consts::PI * (2 * ti + 1) as f64 * (j + 1) as f64
                        / (2 * t) as f64)
                        .cos()
            }))),
        },
        RegressorModel::StaggeredBinary { fractions, .. } => {
            let mut mu = Matrix::zeros(t, k);
            for j in 0..k {
                let on = t - k + j; // 0-based first treated period
                for ti in on..t {
                    mu[(ti, j)] = fractions[j];
                }
            }
            Ok(Some(mu))
        }
        RegressorModel::Scf { .. } => Ok(None),
    }
}

/// Realize the factor matrix F.
fn build_factors(config: &DgpConfig, mu_x: Option<&Matrix>) -> Result<Matrix> {
    let t = config.t;
    match &config.factor_mode {
        FactorMode::ExplicitF { values } => matrix_from_rows(values, "factor values", t),
        FactorMode::AdditiveEffect => Ok(Matrix::from_element(t, 1, 1.0)),
        FactorMode::LinearTrendHet => Ok(Matrix::from_fn(t, 2, |ti, j| {
            if j == 0 {
                1.0
            } else {
                (ti + 1) as f64
            }
        })),
        FactorMode::Bsw { template, lambda } => {
            let mut cols: Vec<DVector<f64>> = Vec::new();
            for col in template {
                match col {
                    BswColumn::Intercept => cols.push(DVector::from_element(t, 1.0)),
                    BswColumn::Trend { power } => cols.push(DVector::from_fn(t, |ti, _| {
                        ((ti + 1) as f64).powi(*power as i32)
                    })),
                    BswColumn::MeanX => {
                        let mu = mu_x.ok_or_else(|| {
                            Error::InvalidConfig(
                                "bsw factor template uses mean_x, but the regressor model does \
                                 not pin down a population mean structure"
                                    .to_string(),
                            )
                        })?;
                        for j in 0..mu.ncols() {
                            cols.push(mu.column(j).into_owned());
                        }
                    }
                }
            }
            let m = cols.len();
            let lam = matrix_from_rows(lambda, "bsw lambda", m)?;
            let mut psi = Matrix::zeros(t, m);
            for (c, col) in cols.iter().enumerate() {
                psi.set_column(c, col);
            }
            Ok(psi * lam)
        }
    }
}

fn build_d(config: &DgpConfig) -> Result<(Matrix, DVector<f64>)> {
    let t = config.t;
    match &config.deterministic {
        None => Ok((Matrix::zeros(t, 0), DVector::zeros(0))),
        Some(det) => {
            let d = match &det.kind {
                DgpDKind::Trend { degree } => {
                    if *degree == 0 {
                        return Err(Error::InvalidConfig("trend degree must be >= 1".to_string()));
                    }
                    Matrix::from_fn(t, *degree as usize, |ti, j| {
                        ((ti + 1) as f64).powi(j as i32 + 1)
                    })
                }
                DgpDKind::Explicit { values } => matrix_from_rows(values, "dgp deterministic", t)?,
            };
            if det.alpha.len() != d.ncols() {
                return Err(Error::InvalidConfig(format!(
                    "alpha has {} entries, D has {} columns",
                    det.alpha.len(),
                    d.ncols()
                )));
            }
            Ok((d, DVector::from_column_slice(&det.alpha)))
        }
    }
}

fn validate(config: &DgpConfig) -> Result<()> {
    if config.t < 2 {
        return Err(Error::InvalidConfig(format!("T must be >= 2, got {}", config.t)));
    }
    if config.k < 1 {
        return Err(Error::InvalidConfig(format!("k must be >= 1, got {}", config.k)));
    }
    if config.beta.len() != config.k {
        return Err(Error::InvalidConfig(format!(
            "beta has {} entries, expected k = {}",
            config.beta.len(),
            config.k
        )));
    }
    check_sigma(config.loading_model.gamma_sd)?;
    match &config.regressor_model {
        RegressorModel::General { noise, .. } => noise.validate()?,
        RegressorModel::Scf {
            gamma_mat_bar,
            gamma_mat_sd,
            noise,
            ..
        } => {
            noise.validate()?;
            check_sigma(*gamma_mat_sd)?;
            if gamma_mat_bar.iter().any(|row| row.len() != config.k) {
                return Err(Error::InvalidConfig(
                    "gamma_mat_bar rows must have k entries".to_string(),
                ));
            }
        }
        RegressorModel::StaggeredBinary { fractions, .. } => {
            if fractions.len() != config.k {
                return Err(Error::InvalidConfig(format!(
                    "fractions has {} entries, expected k = {}",
                    fractions.len(),
                    config.k
                )));
            }
            if fractions.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
                return Err(Error::InvalidConfig(
                    "adoption fractions must lie in (0, 1)".to_string(),
                ));
            }
            if config.k >= config.t {
                return Err(Error::InvalidConfig(
                    "staggered adoption needs k < T".to_string(),
                ));
            }
        }
    }
    match &config.error_model {
        ErrorModel::IidNormal { sigma } => check_sigma(*sigma)?,
        ErrorModel::Ar1 { rho, sigma } => {
            check_rho(*rho)?;
            check_sigma(*sigma)?;
        }
        ErrorModel::Heteroskedastic { rho, sigma_by_period } => {
            check_rho(*rho)?;
            if sigma_by_period.len() != config.t {
                return Err(Error::InvalidConfig(format!(
                    "sigma_by_period has {} entries, expected T = {}",
                    sigma_by_period.len(),
                    config.t
                )));
            }
            for &s in sigma_by_period {
                check_sigma(s)?;
            }
        }
    }
    if let Some(sh) = &config.slope_heterogeneity {
        if sh.sd_b.len() != config.k {
            return Err(Error::InvalidConfig(format!(
                "sd_b has {} entries, expected k = {}",
                sh.sd_b.len(),
                config.k
            )));
        }
        let r = config.deterministic.as_ref().map_or(0, |d| d.alpha.len());
        if sh.sd_a.len() != r {
            return Err(Error::InvalidConfig(format!(
                "sd_a has {} entries, expected r = {r}",
                sh.sd_a.len()
            )));
        }
    }
    Ok(())
}

struct UnitDraw {
    y: DVector<f64>,
    x: Matrix,
    gamma: DVector<f64>,
    a: DVector<f64>,
    b: DVector<f64>,
    e: DVector<f64>,
}

/// Loading tilt matrix W (p x k): deterministic decaying pattern mapping the
/// latent h_i into loading space.
fn latent_tilt(p: usize, k: usize) -> Matrix {
    Matrix::from_fn(p, k, |a, b| 1.0 / (1.0 + (a as f64 - b as f64).abs()))
}

/// The nonrandom pieces shared by every unit draw.
struct Realized<'a> {
    f: &'a Matrix,
    d: &'a Matrix,
    alpha: &'a DVector<f64>,
    mu_x: Option<&'a Matrix>,
    tilt: &'a Matrix,
}

fn draw_unit(config: &DgpConfig, fixed: &Realized<'_>, unit: usize, seed: u64) -> UnitDraw {
    let Realized {
        f,
        d,
        alpha,
        mu_x,
        tilt,
    } = *fixed;
    let t = config.t;
    let k = config.k;
    let p = f.ncols();
    let r = d.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(unit as u64 + 1);

    // fixed draw order: latent, loadings, regressors, slopes, errors
    let h = DVector::from_fn(k, |_, _| randn(&mut rng));

    let lm = &config.loading_model;
    let mut gamma = DVector::from_fn(p, |a, _| {
        lm.gamma_bar.get(a).copied().unwrap_or(0.0) + lm.gamma_sd * randn(&mut rng)
    });
    if lm.corr_with_x != 0.0 {
        gamma += lm.corr_with_x * (tilt * &h);
    }

    // regressors + the volatility statistic used by the biased-slope channel
    let (x, vol_z) = match &config.regressor_model {
        RegressorModel::General {
            shift_scale,
            noise,
            ..
        } => {
            let mu = mu_x.expect("general model always has mu_x");
            let mut x = Matrix::zeros(t, k);
            let mut vol = 0.0;
            for j in 0..k {
                let v = noise.draw(t, &mut rng);
                vol += v.norm_squared();
                let shift = shift_scale * h[j];
                for ti in 0..t {
                    x[(ti, j)] = mu[(ti, j)] + shift + v[ti];
                }
            }
            (x, standardized_volatility(vol, t, k, noise.sigma()))
        }
        RegressorModel::Scf {
            gamma_mat_bar,
            gamma_mat_sd,
            h_coupling,
            noise,
        } => {
            let mut gam = Matrix::from_fn(p, k, |a, b| {
                gamma_mat_bar[a][b] + gamma_mat_sd * randn(&mut rng)
            });
            if *h_coupling != 0.0 {
                for a in 0..p {
                    for b in 0..k {
                        gam[(a, b)] += h_coupling * h[b] / (1.0 + a as f64);
                    }
                }
            }
            let mut x = f * gam;
            let mut vol = 0.0;
            for j in 0..k {
                let v = noise.draw(t, &mut rng);
                vol += v.norm_squared();
                for ti in 0..t {
                    x[(ti, j)] += v[ti];
                }
            }
            (x, standardized_volatility(vol, t, k, noise.sigma()))
        }
        RegressorModel::StaggeredBinary {
            fractions,
            latent_coupling,
        } => {
            let mut x = Matrix::zeros(t, k);
            let mut vol = 0.0;
            for j in 0..k {
                let xi: f64 = randn(&mut rng);
                vol += xi * xi;
                let z = (latent_coupling * h[j] + xi)
                    / (1.0 + latent_coupling * latent_coupling).sqrt();
                let threshold = crate::variance::normal_quantile(fractions[j]);
                if z < threshold {
                    let on = t - k + j;
                    for ti in on..t {
                        x[(ti, j)] = 1.0;
                    }
                }
            }
            (x, standardized_volatility(vol, 1, k, 1.0))
        }
    };

    // slope heterogeneity
    let (a_i, b_i) = match &config.slope_heterogeneity {
        None => (DVector::zeros(r), DVector::zeros(k)),
        Some(sh) => {
            let mut b = DVector::from_fn(k, |j, _| sh.sd_b[j] * randn(&mut rng));
            let a = DVector::from_fn(r, |j, _| sh.sd_a[j] * randn(&mut rng));
            if sh.couple_level != 0.0 {
                b += sh.couple_level * &h;
            }
            if sh.couple_volatility != 0.0 {
                b.add_scalar_mut(sh.couple_volatility * vol_z);
            }
            (a, b)
        }
    };

    // idiosyncratic errors
    let e = match &config.error_model {
        ErrorModel::IidNormal { sigma } => DVector::from_fn(t, |_, _| sigma * randn(&mut rng)),
        ErrorModel::Ar1 { rho, sigma } => ar1_chain(t, *rho, *sigma, &mut rng),
        ErrorModel::Heteroskedastic {
            rho,
            sigma_by_period,
        } => {
            let base = ar1_chain(t, *rho, 1.0, &mut rng);
            DVector::from_fn(t, |ti, _| sigma_by_period[ti] * base[ti])
        }
    };

    let beta = DVector::from_column_slice(&config.beta);
    let slope = &beta + &b_i;
    let mut y = &x * slope + f * &gamma + &e;
    if r > 0 {
        y += d * (alpha + &a_i);
    }

    UnitDraw {
        y,
        x,
        gamma,
        a: a_i,
        b: b_i,
        e,
    }
}

/// (vol - E vol) / sd(vol) under the iid-Gaussian reference.
fn standardized_volatility(vol: f64, t: usize, k: usize, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let c = sigma * sigma;
    let mean = (t * k) as f64 * c;
    let sd = (2.0 * (t * k) as f64).sqrt() * c;
    (vol - mean) / sd
}

/// Generate a panel of `n` units. Identical (config, n, seed) triples give
/// bit-identical output regardless of worker count.
pub fn generate(config: &DgpConfig, n: usize, seed: u64) -> Result<(PanelDataset, DgpTruth)> {
    validate(config)?;
    if n < 2 {
        return Err(Error::InvalidConfig(format!("need N >= 2 units, got {n}")));
    }
    let mu_x = population_mu_x(config)?;
    let f = build_factors(config, mu_x.as_ref())?;
    let (d, alpha) = build_d(config)?;
    let p = f.ncols();
    let tilt = latent_tilt(p, config.k);

    let fixed = Realized {
        f: &f,
        d: &d,
        alpha: &alpha,
        mu_x: mu_x.as_ref(),
        tilt: &tilt,
    };
    let draws: Vec<UnitDraw> = (0..n)
        .into_par_iter()
        .map(|i| draw_unit(config, &fixed, i, seed))
        .collect();

    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut gamma = Vec::with_capacity(n);
    let mut slope_a = Vec::with_capacity(n);
    let mut slope_b = Vec::with_capacity(n);
    let mut errors = Vec::with_capacity(n);
    for dr in draws {
        y.push(dr.y);
        x.push(dr.x);
        if config.record_components {
            gamma.push(dr.gamma);
            slope_a.push(dr.a);
            slope_b.push(dr.b);
            errors.push(dr.e);
        }
    }

    let ds = PanelDataset::new(
        (1..=n).map(|i| i.to_string()).collect(),
        (1..=config.t).map(|i| i.to_string()).collect(),
        (1..=config.k).map(|j| format!("x{j}")).collect(),
        y,
        x,
    )?;
    let truth = DgpTruth {
        beta: DVector::from_column_slice(&config.beta),
        alpha,
        f,
        d,
        gamma: config.record_components.then_some(gamma),
        slope_a: config.record_components.then_some(slope_a),
        slope_b: config.record_components.then_some(slope_b),
        errors: config.record_components.then_some(errors),
    };
    Ok((ds, truth))
}

/// A named configuration with a note stating the assumption it targets.
#[derive(Debug, Clone)]
pub struct DgpPreset {
    pub name: &'static str,
    pub note: &'static str,
    pub config: DgpConfig,
}

/// Named scenario presets covering the estimator's assumption landscape.
pub fn presets() -> Vec<DgpPreset> {
    let smooth = MeanSpec::Smooth {
        base: 1.0,
        amplitude: 1.0,
    };
    let iid1 = NoiseProcess::Iid { sigma: 1.0 };

    let mut out = Vec::new();

    out.push(DgpPreset {
        name: "additive-effect",
        note: "single constant factor, loadings correlated with regressor levels; \
               the within estimator is consistent",
        config: DgpConfig {
            t: 5,
            k: 2,
            beta: vec![1.0, -0.5],
            factor_mode: FactorMode::AdditiveEffect,
            loading_model: LoadingModel {
                gamma_bar: vec![1.0],
                gamma_sd: 1.0,
                corr_with_x: 0.8,
            },
            regressor_model: RegressorModel::General {
                mu_x: smooth.clone(),
                shift_scale: 1.0,
                noise: iid1.clone(),
            },
            error_model: ErrorModel::IidNormal { sigma: 1.0 },
            slope_heterogeneity: None,
            deterministic: None,
            record_components: false,
        },
    });

    out.push(DgpPreset {
        name: "staggered-binary",
        note: "binary staggered adoption with latent selection: cross-section means \
               converge to the staggered fraction matrix and discreteness breaks \
               regressor-side factor structure",
        config: DgpConfig {
            t: 3,
            k: 2,
            beta: vec![1.0, 0.5],
            factor_mode: FactorMode::AdditiveEffect,
            loading_model: LoadingModel {
                gamma_bar: vec![1.0],
                gamma_sd: 1.0,
                corr_with_x: 0.8,
            },
            regressor_model: RegressorModel::StaggeredBinary {
                fractions: vec![0.5, 0.25],
                latent_coupling: 0.7,
            },
            error_model: ErrorModel::IidNormal { sigma: 0.5 },
            slope_heterogeneity: None,
            deterministic: None,
            record_components: false,
        },
    });

    let explicit_f_p2 = FactorMode::ExplicitF {
        values: (0..6)
            .map(|ti| vec![1.0, 1.0 + (ti as f64 * 0.9).sin()])
            .collect(),
    };
    out.push(DgpPreset {
        name: "scf-p-eq-k",
        note: "regressors share the outcome's factors (p = k): the mean structure \
               is rank-deficient in the weak-factor sense yet the proxy estimator \
               needs no factor count",
        config: DgpConfig {
            t: 6,
            k: 2,
            beta: vec![1.0, -0.5],
            factor_mode: explicit_f_p2,
            loading_model: LoadingModel {
                gamma_bar: vec![1.0, 0.6],
                gamma_sd: 0.7,
                corr_with_x: 0.8,
            },
            regressor_model: RegressorModel::Scf {
                gamma_mat_bar: vec![vec![1.0, 0.3], vec![0.2, 1.0]],
                gamma_mat_sd: 0.3,
                h_coupling: 0.6,
                noise: NoiseProcess::Ar1 {
                    rho: 0.4,
                    sigma: 1.0,
                },
            },
            error_model: ErrorModel::Ar1 {
                rho: 0.3,
                sigma: 1.0,
            },
            slope_heterogeneity: None,
            deterministic: None,
            record_components: false,
        },
    });

    let explicit_f_p3 = FactorMode::ExplicitF {
        values: (0..6)
            .map(|ti| {
                vec![
                    1.0,
                    1.0 + (ti as f64 * 0.9).sin(),
                    0.5 + 0.4 * (ti as f64 * 1.3).cos(),
                ]
            })
            .collect(),
    };
    out.push(DgpPreset {
        name: "scf-p-eq-k-plus-1",
        note: "one more factor than regressors with nonsingular joint loading \
               matrix C = (gamma, Gamma): the stacked mean matrix (mu_y, mu_X) \
               has rank k + 1, so adding the outcome mean to the proxies is valid",
        config: DgpConfig {
            t: 6,
            k: 2,
            beta: vec![1.0, -0.5],
            factor_mode: explicit_f_p3,
            loading_model: LoadingModel {
                gamma_bar: vec![1.0, 0.5, 0.25],
                gamma_sd: 0.5,
                corr_with_x: 0.6,
            },
            regressor_model: RegressorModel::Scf {
                gamma_mat_bar: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]],
                gamma_mat_sd: 0.3,
                h_coupling: 0.5,
                noise: iid1.clone(),
            },
            error_model: ErrorModel::IidNormal { sigma: 1.0 },
            slope_heterogeneity: None,
            deterministic: None,
            record_components: false,
        },
    });

    out.push(DgpPreset {
        name: "bsw-intercept-trend",
        note: "factors are a linear map of (1, t, mu_X): partialling intercept, \
               trend, and regressor means per unit removes all heterogeneity",
        config: DgpConfig {
            t: 8,
            k: 2,
            beta: vec![1.0, -0.5],
            factor_mode: FactorMode::Bsw {
                template: vec![
                    BswColumn::Intercept,
                    BswColumn::Trend { power: 1 },
                    BswColumn::MeanX,
                ],
                lambda: vec![
                    vec![1.0, 0.2],
                    vec![0.15, -0.1],
                    vec![0.6, 0.3],
                    vec![-0.2, 0.7],
                ],
            },
            loading_model: LoadingModel {
                gamma_bar: vec![1.0, 0.5],
                gamma_sd: 0.8,
                corr_with_x: 0.8,
            },
            regressor_model: RegressorModel::General {
                mu_x: smooth.clone(),
                shift_scale: 0.8,
                noise: iid1.clone(),
            },
            error_model: ErrorModel::IidNormal { sigma: 1.0 },
            slope_heterogeneity: None,
            deterministic: None,
            record_components: false,
        },
    });

    let slopes_base = DgpConfig {
        t: 6,
        k: 2,
        beta: vec![1.0, -0.5],
        factor_mode: FactorMode::Bsw {
            template: vec![BswColumn::Intercept, BswColumn::MeanX],
            lambda: vec![vec![1.0, 0.3], vec![0.5, 0.2], vec![-0.3, 0.6]],
        },
        loading_model: LoadingModel {
            gamma_bar: vec![1.0, 0.5],
            gamma_sd: 0.8,
            corr_with_x: 0.8,
        },
        regressor_model: RegressorModel::General {
            mu_x: smooth.clone(),
            shift_scale: 1.0,
            noise: iid1.clone(),
        },
        error_model: ErrorModel::IidNormal { sigma: 1.0 },
        slope_heterogeneity: Some(SlopeHeterogeneity {
            sd_a: vec![],
            sd_b: vec![0.4, 0.4],
            couple_level: 0.6,
            couple_volatility: 0.0,
        }),
        deterministic: None,
        record_components: false,
    };
    out.push(DgpPreset {
        name: "random-slopes-a6-satisfied",
        note: "unit slopes correlated with regressor levels only; levels are \
               partialled out, so the mean slope is estimated consistently",
        config: slopes_base.clone(),
    });

    let mut violated = slopes_base;
    if let Some(sh) = violated.slope_heterogeneity.as_mut() {
        sh.couple_volatility = 0.6;
    }
    out.push(DgpPreset {
        name: "random-slopes-a6-violated",
        note: "unit slopes correlated with idiosyncratic regressor volatility, \
               which no level partialling removes; the pooled estimator is biased",
        config: violated,
    });

    let ideal_factor = FactorMode::Bsw {
        template: vec![BswColumn::MeanX],
        lambda: vec![vec![1.0, 0.4], vec![0.3, 0.8]],
    };
    out.push(DgpPreset {
        name: "ideal-homoskedastic",
        note: "independent loadings, iid errors, spherical composite error after \
               partialling: adding the outcome mean to the proxies can only lose \
               efficiency; the trend block keeps (mu_y, mu_X) at full rank",
        config: DgpConfig {
            t: 6,
            k: 2,
            beta: vec![1.0, -0.5],
            factor_mode: ideal_factor.clone(),
            loading_model: LoadingModel {
                gamma_bar: vec![0.8, 0.5],
                gamma_sd: 0.8,
                corr_with_x: 0.0,
            },
            regressor_model: RegressorModel::General {
                mu_x: smooth.clone(),
                shift_scale: 0.5,
                noise: iid1.clone(),
            },
            error_model: ErrorModel::IidNormal { sigma: 1.0 },
            slope_heterogeneity: None,
            deterministic: Some(DgpDeterministic {
                kind: DgpDKind::Trend { degree: 1 },
                alpha: vec![0.5],
            }),
            record_components: false,
        },
    });

    out.push(DgpPreset {
        name: "re-style",
        note: "loadings independent of the regressors: first-stage proxy noise \
               does not move the asymptotic variance, so corrected and naive \
               standard errors agree; errors stay serially correlated and \
               heteroskedastic",
        config: DgpConfig {
            t: 6,
            k: 2,
            beta: vec![1.0, -0.5],
            factor_mode: ideal_factor.clone(),
            loading_model: LoadingModel {
                gamma_bar: vec![0.8, 0.5],
                gamma_sd: 0.8,
                corr_with_x: 0.0,
            },
            regressor_model: RegressorModel::General {
                mu_x: smooth.clone(),
                shift_scale: 0.8,
                noise: NoiseProcess::Ar1 {
                    rho: 0.5,
                    sigma: 1.0,
                },
            },
            error_model: ErrorModel::Heteroskedastic {
                rho: 0.5,
                sigma_by_period: vec![0.6, 0.8, 1.0, 1.2, 1.4, 1.6],
            },
            slope_heterogeneity: None,
            deterministic: None,
            record_components: false,
        },
    });

    out.push(DgpPreset {
        name: "correlated-loadings",
        note: "loadings strongly correlated with regressor levels: proxy \
               estimation error feeds the estimator's variance and only the \
               corrected standard errors are calibrated",
        config: DgpConfig {
            t: 6,
            k: 2,
            beta: vec![1.0, -0.5],
            factor_mode: ideal_factor,
            loading_model: LoadingModel {
                gamma_bar: vec![1.0, 0.6],
                gamma_sd: 0.8,
                corr_with_x: 0.9,
            },
            regressor_model: RegressorModel::General {
                mu_x: smooth,
                shift_scale: 1.0,
                noise: iid1,
            },
            error_model: ErrorModel::IidNormal { sigma: 1.0 },
            slope_heterogeneity: None,
            deterministic: None,
            record_components: false,
        },
    });

    out
}

/// Look up a preset by name.
pub fn preset(name: &str) -> Result<DgpPreset> {
    presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| {
            let names: Vec<&str> = presets().iter().map(|p| p.name).collect();
            Error::InvalidConfig(format!(
                "unknown dgp preset '{name}' (available: {})",
                names.join(", ")
            ))
        })
}
