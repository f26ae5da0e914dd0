//! Double/debiased machine learning: partially linear regression, average
//! partial effects with median aggregation, omitted-variable sensitivity.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::featlab::FeatureSpec;
use crate::learners::{fit_gbm, fit_lasso_cv, r_squared, BoostedRegressor, GbmParams, LassoModel, Matrix};
use crate::rng;
use crate::stats;

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_BOOTSTRAP: usize = 1000;
pub const HORSE_RACE_VALIDATION: f64 = 0.2;
pub const FD_STEP_SCALE: f64 = 0.1;
pub const VARIANCE_FLOOR_SCALE: f64 = 1e-4;
pub const Z_975: f64 = 1.959_963_984_540_054;
const LASSO_FOLDS: usize = 5;

/// Parent indicator → parents treated as mechanistic components of it.
pub type ExclusionMap = BTreeMap<String, Vec<String>>;

pub fn default_exclusion_map() -> ExclusionMap {
    let mut m = ExclusionMap::new();
    m.insert("vrp".into(), vec!["vix".into(), "realized_volatility".into()]);
    m
}

/// Indices of `names` usable as confounders for `treatment`.
pub fn build_exclusion(treatment: &str, names: &[String], map: &ExclusionMap) -> Result<Vec<usize>> {
    let spec = FeatureSpec::parse(treatment)
        .map_err(|_| Error::InvalidInput(format!("unknown treatment {treatment}")))?;
    let mut banned = vec![spec.parent.as_str()];
    if let Some(extra) = map.get(&spec.parent) {
        banned.extend(extra.iter().map(String::as_str));
    }
    Ok(names
        .iter()
        .enumerate()
        .filter(|(_, n)| match FeatureSpec::parse(n) {
            Ok(s) => !banned.contains(&s.parent.as_str()),
            Err(_) => n.as_str() != treatment,
        })
        .map(|(i, _)| i)
        .collect())
}

#[derive(Debug, Clone)]
pub struct CausalTask {
    pub treatment: String,
    pub d: Vec<f64>,
    pub y: Vec<f64>,
    pub x: Matrix,
    pub folds: usize,
    pub bootstrap: usize,
    /// Finite-difference step as a multiple of sd(D).
    pub fd_scale: f64,
    /// Variance floor as a multiple of Var(D).
    pub floor_scale: f64,
    pub seed: u64,
}

impl CausalTask {
    pub fn new(treatment: &str, d: Vec<f64>, y: Vec<f64>, x: Matrix, seed: u64) -> Self {
        Self {
            treatment: treatment.to_string(),
            d,
            y,
            x,
            folds: DEFAULT_FOLDS,
            bootstrap: DEFAULT_BOOTSTRAP,
            fd_scale: FD_STEP_SCALE,
            floor_scale: VARIANCE_FLOOR_SCALE,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.d.len();
        if self.y.len() != n || self.x.rows() != n {
            return Err(Error::InvalidInput("treatment, outcome and confounders differ in length".into()));
        }
        if self.folds < 2 || n < 4 * self.folds {
            return Err(Error::InvalidInput(format!("{n} rows cannot hold {} cross-fitting folds", self.folds)));
        }
        if self.fd_scale <= 0.0 || self.floor_scale <= 0.0 {
            return Err(Error::InvalidInput("step and floor scales must be positive".into()));
        }
        if self.d.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite treatment or outcome".into()));
        }
        Ok(())
    }
}

/// Contiguous chronological blocks.
pub fn fold_blocks(n: usize, k: usize) -> Vec<Range<usize>> {
    (0..k).map(|i| i * n / k..(i + 1) * n / k).collect()
}

fn complement(n: usize, block: &Range<usize>) -> Vec<usize> {
    (0..block.start).chain(block.end..n).collect()
}

#[derive(Debug, Clone)]
pub enum Regressor {
    Boosted(BoostedRegressor),
    Lasso(LassoModel),
}

impl Regressor {
    pub fn predict_matrix(&self, x: &Matrix) -> Vec<f64> {
        match self {
            Regressor::Boosted(m) => m.predict_matrix(x),
            Regressor::Lasso(m) => m.predict_matrix(x),
        }
    }

    pub fn is_boosted(&self) -> bool {
        matches!(self, Regressor::Boosted(_))
    }
}

#[derive(Debug, Clone)]
pub struct HorseRace {
    pub model: Regressor,
    pub r2_boosted: f64,
    pub r2_lasso: f64,
}

/// Fits both entrants on the first 80% of rows, keeps the one with higher
/// validation R² (boosting wins ties) and refits it on all rows.
pub fn horse_race(x: &Matrix, y: &[f64], seed: u64) -> Result<HorseRace> {
    let n = x.rows();
    if n != y.len() {
        return Err(Error::InvalidInput("row/target count mismatch".into()));
    }
    if stats::variance(y) <= 0.0 {
        return Err(Error::Numerical("horse race target is constant".into()));
    }
    let cut = ((1.0 - HORSE_RACE_VALIDATION) * n as f64).round() as usize;
    if cut < 2 * LASSO_FOLDS || n - cut < 2 {
        return Err(Error::InvalidInput(format!("{n} rows are too few for a horse race")));
    }
    let tr: Vec<usize> = (0..cut).collect();
    let va: Vec<usize> = (cut..n).collect();
    let (xt, xv) = (x.select_rows(&tr), x.select_rows(&va));
    let (yt, yv) = (&y[..cut], &y[cut..]);
    let params = GbmParams::default();
    let gseed = rng::derive(seed, "boosted");
    let r2_boosted = r_squared(yv, &fit_gbm(&xt, yt, &params, gseed)?.predict_matrix(&xv));
    let r2_lasso = if x.cols() == 0 {
        r_squared(yv, &vec![stats::mean(yt); yv.len()])
    } else {
        r_squared(yv, &fit_lasso_cv(&xt, yt, LASSO_FOLDS)?.predict_matrix(&xv))
    };
    let model = if r2_boosted >= r2_lasso || x.cols() == 0 {
        Regressor::Boosted(fit_gbm(x, y, &params, gseed)?)
    } else {
        Regressor::Lasso(fit_lasso_cv(x, y, LASSO_FOLDS)?)
    };
    Ok(HorseRace {
        model,
        r2_boosted,
        r2_lasso,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalEstimate {
    pub treatment: String,
    pub theta: f64,
    pub stderr: f64,
    pub p_value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub bias_phi: f64,
    pub adj_ci_lower: f64,
    pub adj_ci_upper: f64,
    pub r2_y: f64,
    pub r2_d: f64,
    pub robust: bool,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity {
    pub bias: f64,
    pub lower: f64,
    pub upper: f64,
    pub robust: bool,
}

/// Omitted-variable bias bound for a confounder as strong as the benchmarks.
pub fn sensitivity(theta: f64, stderr: f64, r2_y: f64, r2_d: f64, df: usize) -> Result<Sensitivity> {
    if !(0.0..1.0).contains(&r2_d) || !(0.0..=1.0).contains(&r2_y) {
        return Err(Error::InvalidInput(format!("benchmark R² out of range: R²_Y={r2_y}, R²_D={r2_d}")));
    }
    let bias = stderr * (r2_y * r2_d / (1.0 - r2_d)).sqrt() * (df as f64).sqrt();
    let half = Z_975 * stderr + bias;
    let (lower, upper) = (theta - half, theta + half);
    Ok(Sensitivity {
        bias,
        lower,
        upper,
        robust: lower > 0.0 || upper < 0.0,
    })
}

fn clip_r2(r2: f64) -> f64 {
    if r2.is_finite() {
        r2.clamp(0.0, 1.0 - 1e-12)
    } else {
        0.0
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    treatment: &str,
    n: usize,
    theta: f64,
    stderr: f64,
    p_value: f64,
    ci: (f64, f64),
    r2_y: f64,
    r2_d: f64,
) -> Result<CausalEstimate> {
    let (r2_y, r2_d) = (clip_r2(r2_y), clip_r2(r2_d));
    let s = sensitivity(theta, stderr, r2_y, r2_d, n.saturating_sub(2))?;
    Ok(CausalEstimate {
        treatment: treatment.to_string(),
        theta,
        stderr,
        p_value,
        ci_lower: ci.0,
        ci_upper: ci.1,
        bias_phi: s.bias,
        adj_ci_lower: s.lower,
        adj_ci_upper: s.upper,
        r2_y,
        r2_d,
        robust: s.robust,
        n,
    })
}

/// Out-of-fold nuisance residuals for the partially linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct PlrResiduals {
    pub y: Vec<f64>,
    pub d: Vec<f64>,
    /// Fold index that produced each prediction.
    pub fold: Vec<usize>,
    pub r2_y: f64,
    pub r2_d: f64,
    /// Per fold: (boosted, lasso) validation R² for l and for m.
    pub race_y: Vec<(f64, f64)>,
    pub race_d: Vec<(f64, f64)>,
}

pub fn plr_residuals(task: &CausalTask) -> Result<PlrResiduals> {
    task.validate()?;
    let n = task.d.len();
    let blocks = fold_blocks(n, task.folds);
    let fitted = blocks
        .par_iter()
        .enumerate()
        .map(|(k, b)| {
            let tr = complement(n, b);
            let xt = task.x.select_rows(&tr);
            let xv = task.x.select_rows(&b.clone().collect::<Vec<_>>());
            let seed = rng::derive_index(rng::derive(task.seed, "plr"), k as u64);
            let yt: Vec<f64> = tr.iter().map(|&i| task.y[i]).collect();
            let dt: Vec<f64> = tr.iter().map(|&i| task.d[i]).collect();
            let l = horse_race(&xt, &yt, rng::derive(seed, "l"))?;
            let m = horse_race(&xt, &dt, rng::derive(seed, "m"))?;
            Ok((l.model.predict_matrix(&xv), m.model.predict_matrix(&xv), (l.r2_boosted, l.r2_lasso), (m.r2_boosted, m.r2_lasso)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = PlrResiduals {
        y: Vec::with_capacity(n),
        d: Vec::with_capacity(n),
        fold: Vec::with_capacity(n),
        r2_y: 0.0,
        r2_d: 0.0,
        race_y: Vec::new(),
        race_d: Vec::new(),
    };
    let (mut lhat, mut mhat) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for (k, (b, (l, m, ry, rd))) in blocks.iter().zip(fitted).enumerate() {
        for (j, i) in b.clone().enumerate() {
            out.y.push(task.y[i] - l[j]);
            out.d.push(task.d[i] - m[j]);
            out.fold.push(k);
        }
        lhat.extend(l);
        mhat.extend(m);
        out.race_y.push(ry);
        out.race_d.push(rd);
    }
    out.r2_y = r_squared(&task.y, &lhat);
    out.r2_d = r_squared(&task.d, &mhat);
    Ok(out)
}

/// Residual-on-residual slope and its sandwich standard error.
pub fn plr_from_residuals(uy: &[f64], ud: &[f64]) -> Result<(f64, f64)> {
    let n = uy.len() as f64;
    let sdd: f64 = ud.iter().map(|v| v * v).sum();
    let scale: f64 = ud.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if sdd <= 1e-12 * n * scale.max(1e-300).powi(2) || sdd == 0.0 {
        return Err(Error::Numerical("residual treatment variance is near zero".into()));
    }
    let theta = uy.iter().zip(ud).map(|(a, b)| a * b).sum::<f64>() / sdd;
    let j = sdd / n;
    let s2: f64 = uy.iter().zip(ud).map(|(a, b)| ((a - theta * b) * b).powi(2)).sum::<f64>() / n;
    Ok((theta, (s2 / (j * j) / n).sqrt()))
}

pub fn dml_plr(task: &CausalTask) -> Result<CausalEstimate> {
    let r = plr_residuals(task)?;
    let (theta, se) = plr_from_residuals(&r.y, &r.d)?;
    let p = if se > 0.0 { 2.0 * (1.0 - stats::normal_cdf((theta / se).abs())) } else { 0.0 };
    let ci = (theta - Z_975 * se, theta + Z_975 * se);
    finish(&task.treatment, task.d.len(), theta, se, p, ci, r.r2_y, r.r2_d)
}

/// ∂/∂d log N(d; m, v).
pub fn gaussian_logdensity_grad(d: f64, m: f64, v: f64) -> Result<f64> {
    if v <= 0.0 || !v.is_finite() {
        return Err(Error::InvalidInput(format!("variance must be positive, got {v}")));
    }
    Ok(-(d - m) / v)
}

pub fn central_difference(f: impl Fn(f64) -> f64, d: f64, h: f64) -> f64 {
    (f(d + h) - f(d - h)) / (2.0 * h)
}

/// Orthogonal APE score for one row; `l` is the outcome model at this row's
/// confounders as a function of the treatment.
pub fn ape_score(l: impl Fn(f64) -> f64, d: f64, y: f64, m: f64, v: f64, theta: f64, h: f64) -> f64 {
    central_difference(&l, d, h) - theta + (d - m) / v * (y - l(d))
}

/// Pooled out-of-fold nuisance evaluations for the APE score.
#[derive(Debug, Clone, PartialEq)]
pub struct ApeNuisances {
    pub d: Vec<f64>,
    pub y: Vec<f64>,
    pub l: Vec<f64>,
    pub l_plus: Vec<f64>,
    pub l_minus: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub fold: Vec<usize>,
    pub h: f64,
    pub r2_y: f64,
    pub r2_d: f64,
}

impl ApeNuisances {
    pub fn naive(&self) -> Vec<f64> {
        self.l_plus.iter().zip(&self.l_minus).map(|(p, m)| (p - m) / (2.0 * self.h)).collect()
    }

    pub fn correction(&self) -> Vec<f64> {
        (0..self.d.len())
            .map(|i| (self.d[i] - self.m[i]) / self.v[i] * (self.y[i] - self.l[i]))
            .collect()
    }

    /// Per-observation scores at θ = 0.
    pub fn scores(&self) -> Vec<f64> {
        self.naive().iter().zip(self.correction()).map(|(a, b)| a + b).collect()
    }
}

pub fn ape_nuisances(task: &CausalTask) -> Result<ApeNuisances> {
    task.validate()?;
    if task.y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput("APE outcome must be binary".into()));
    }
    if task.y.iter().all(|&v| v == task.y[0]) {
        return Err(Error::InvalidInput("APE outcome has a single class".into()));
    }
    let n = task.d.len();
    let sd = stats::std_dev(&task.d, 1);
    if sd <= 0.0 {
        return Err(Error::Numerical("treatment is constant".into()));
    }
    let h = task.fd_scale * sd;
    let floor = task.floor_scale * stats::variance(&task.d);
    let blocks = fold_blocks(n, task.folds);
    let params = GbmParams::default();
    let parts = blocks
        .par_iter()
        .enumerate()
        .map(|(k, b)| {
            let seed = rng::derive_index(rng::derive(task.seed, "ape"), k as u64);
            let tr = complement(n, b);
            let va: Vec<usize> = b.clone().collect();
            let xt = task.x.select_rows(&tr);
            let xv = task.x.select_rows(&va);
            let dt: Vec<f64> = tr.iter().map(|&i| task.d[i]).collect();
            let yt: Vec<f64> = tr.iter().map(|&i| task.y[i]).collect();
            let dv: Vec<f64> = va.iter().map(|&i| task.d[i]).collect();
            let l = fit_gbm(&xt.with_leading_column(&dt), &yt, &params, rng::derive(seed, "l"))?;
            let eval = |shift: f64| -> Vec<f64> {
                let ds: Vec<f64> = dv.iter().map(|d| d + shift).collect();
                l.predict_matrix(&xv.with_leading_column(&ds))
            };
            let m = horse_race(&xt, &dt, rng::derive(seed, "m"))?;
            let m_in = m.model.predict_matrix(&xt);
            let sq: Vec<f64> = dt.iter().zip(&m_in).map(|(d, p)| (d - p).powi(2)).collect();
            let v = horse_race(&xt, &sq, rng::derive(seed, "v"))?;
            let vv: Vec<f64> = v.model.predict_matrix(&xv).into_iter().map(|x| x.max(floor)).collect();
            Ok((eval(0.0), eval(h), eval(-h), m.model.predict_matrix(&xv), vv))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = ApeNuisances {
        d: task.d.clone(),
        y: task.y.clone(),
        l: Vec::with_capacity(n),
        l_plus: Vec::with_capacity(n),
        l_minus: Vec::with_capacity(n),
        m: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        fold: Vec::with_capacity(n),
        h,
        r2_y: 0.0,
        r2_d: 0.0,
    };
    for (k, (b, (l, lp, lm, m, v))) in blocks.iter().zip(parts).enumerate() {
        out.fold.extend(std::iter::repeat_n(k, b.len()));
        out.l.extend(l);
        out.l_plus.extend(lp);
        out.l_minus.extend(lm);
        out.m.extend(m);
        out.v.extend(v);
    }
    out.r2_y = r_squared(&task.y, &out.l);
    out.r2_d = r_squared(&task.d, &out.m);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedianInference {
    pub theta: f64,
    pub stderr: f64,
    pub p_value: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Median point estimate with a percentile bootstrap of the median.
pub fn median_bootstrap(scores: &[f64], b: usize, seed: u64) -> Result<MedianInference> {
    if scores.is_empty() || scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("scores must be nonempty and finite".into()));
    }
    let theta = stats::median(scores);
    if b < 2 {
        return Ok(MedianInference {
            theta,
            stderr: 0.0,
            p_value: 1.0,
            lower: theta,
            upper: theta,
        });
    }
    let n = scores.len();
    let meds: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(rng::derive_index(seed, i as u64), "bootstrap");
            let mut s: Vec<f64> = (0..n).map(|_| scores[r.random_range(0..n)]).collect();
            s.sort_by(f64::total_cmp);
            stats::quantile_sorted(&s, 0.5)
        })
        .collect();
    let le = meds.iter().filter(|&&m| m <= 0.0).count() as f64 / b as f64;
    let ge = meds.iter().filter(|&&m| m >= 0.0).count() as f64 / b as f64;
    let p_value = (2.0 * le.min(ge)).max(2.0 / b as f64).min(1.0);
    Ok(MedianInference {
        theta,
        stderr: stats::std_dev(&meds, 1),
        p_value,
        lower: stats::quantile(&meds, 0.025),
        upper: stats::quantile(&meds, 0.975),
    })
}

pub fn dml_ape(task: &CausalTask) -> Result<CausalEstimate> {
    let nu = ape_nuisances(task)?;
    let inf = median_bootstrap(&nu.scores(), task.bootstrap, rng::derive(task.seed, "bootstrap"))?;
    finish(
        &task.treatment,
        task.d.len(),
        inf.theta,
        inf.stderr,
        inf.p_value,
        (inf.lower, inf.upper),
        nu.r2_y,
        nu.r2_d,
    )
}

/// Slope at zero of the mean score under nuisance perturbations, for the
/// orthogonal score and a non-orthogonal comparator on the same data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthogonalityReport {
    /// l → l + t·r with r the standardized treatment; comparator: naive score.
    pub slope_l: f64,
    pub slope_l_naive: f64,
    /// m → m + t; comparator: inverse-probability-weighted score.
    pub slope_m: f64,
    pub slope_m_ipw: f64,
}

/// Four-point central slope from evaluations at ±δ and ±2δ.
pub fn richardson_slope(f: impl Fn(f64) -> f64, delta: f64) -> f64 {
    (8.0 * (f(delta) - f(-delta)) - (f(2.0 * delta) - f(-2.0 * delta))) / (12.0 * delta)
}

pub fn orthogonality_check(nu: &ApeNuisances, delta: f64) -> OrthogonalityReport {
    let n = nu.d.len();
    let mu = stats::mean(&nu.d);
    let sd = stats::std_dev(&nu.d, 1);
    let r: Vec<f64> = nu.d.iter().map(|d| (d - mu) / sd).collect();
    let naive = nu.naive();
    let theta = stats::mean(&nu.scores());
    let mean_over = |f: &dyn Fn(usize) -> f64| (0..n).map(f).sum::<f64>() / n as f64;
    // r is linear in d, so its central difference is exactly 1/sd.
    let dr = 1.0 / sd;
    let l_orth = |t: f64| {
        mean_over(&|i| naive[i] + t * dr + (nu.d[i] - nu.m[i]) / nu.v[i] * (nu.y[i] - nu.l[i] - t * r[i]) - theta)
    };
    let l_naive = |t: f64| mean_over(&|i| naive[i] + t * dr - theta);
    let m_orth = |t: f64| mean_over(&|i| naive[i] + (nu.d[i] - nu.m[i] - t) / nu.v[i] * (nu.y[i] - nu.l[i]) - theta);
    let m_ipw = |t: f64| mean_over(&|i| (nu.d[i] - nu.m[i] - t) / nu.v[i] * nu.y[i] - theta);
    OrthogonalityReport {
        slope_l: richardson_slope(l_orth, delta),
        slope_l_naive: richardson_slope(l_naive, delta),
        slope_m: richardson_slope(m_orth, delta),
        slope_m_ipw: richardson_slope(m_ipw, delta),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Consistent,
    LostRobustness,
    GainedRobustness,
    SignReversal,
}

impl Comparison {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparison::Consistent => "consistent",
            Comparison::LostRobustness => "lost robustness",
            Comparison::GainedRobustness => "gained robustness",
            Comparison::SignReversal => "sign reversal",
        }
    }
}

pub fn classify(plr: &CausalEstimate, ape: &CausalEstimate) -> Comparison {
    if plr.robust && ape.robust && plr.theta.signum() != ape.theta.signum() {
        Comparison::SignReversal
    } else if plr.robust && !ape.robust {
        Comparison::LostRobustness
    } else if !plr.robust && ape.robust {
        Comparison::GainedRobustness
    } else {
        Comparison::Consistent
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameworkRow {
    pub treatment: String,
    pub plr: CausalEstimate,
    pub ape: CausalEstimate,
    pub class: Comparison,
}

/// Pairs estimates by treatment name, in the order of `plr`.
pub fn compare_frameworks(plr: &[CausalEstimate], ape: &[CausalEstimate]) -> Vec<FrameworkRow> {
    plr.iter()
        .filter_map(|p| {
            ape.iter().find(|a| a.treatment == p.treatment).map(|a| FrameworkRow {
                treatment: p.treatment.clone(),
                plr: p.clone(),
                ape: a.clone(),
                class: classify(p, a),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_grad() {
        assert_eq!(gaussian_logdensity_grad(2.0, 0.0, 1.0).unwrap(), -2.0);
        assert_eq!(gaussian_logdensity_grad(1.5, 1.5, 3.0).unwrap(), 0.0);
        assert!(gaussian_logdensity_grad(0.0, 0.0, 0.0).is_err());
        let logpdf = |d: f64| -0.5 * (2.0 * std::f64::consts::PI * 2.0).ln() - (d - 0.3).powi(2) / 4.0;
        let fd = central_difference(logpdf, 1.1, 1e-5);
        assert!((fd - gaussian_logdensity_grad(1.1, 0.3, 2.0).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn quadratic_central_difference() {
        assert!((central_difference(|d| d * d, 1.0, 1e-2) - 2.0).abs() < 1e-4);
        let s = ape_score(|d| d * d, 1.0, 1.0, 0.0, 1.0, 0.0, 1e-2);
        assert!((s - 2.0).abs() < 1e-4);
    }

    #[test]
    fn sensitivity_limits() {
        let s = sensitivity(0.1, 0.02, 0.3, 0.0, 500).unwrap();
        assert_eq!(s.bias, 0.0);
        assert_eq!(s.lower, 0.1 - Z_975 * 0.02);
        assert!(s.robust);
        assert!(sensitivity(0.1, 0.02, 0.3, 1.0, 500).is_err());
        let a = sensitivity(0.0, 0.01, 0.2, 0.1, 100).unwrap();
        let b = sensitivity(0.0, 0.02, 0.2, 0.1, 100).unwrap();
        assert!((b.bias - 2.0 * a.bias).abs() < 1e-15);
        assert!((b.upper - 2.0 * a.upper).abs() < 1e-15);
    }

    #[test]
    fn degenerate_bootstrap() {
        let inf = median_bootstrap(&[3.0, 1.0, 2.0], 1, 9).unwrap();
        assert_eq!((inf.lower, inf.theta, inf.upper), (2.0, 2.0, 2.0));
    }

    #[test]
    fn bootstrap_p_value_floor() {
        let s: Vec<f64> = (0..200).map(|i| 1.0 + i as f64 * 0.01).collect();
        let inf = median_bootstrap(&s, 100, 3).unwrap();
        assert_eq!(inf.p_value, 0.02);
        assert!(inf.lower <= inf.theta && inf.theta <= inf.upper);
    }

    #[test]
    fn exclusion() {
        let names: Vec<String> = [
            "vrp_scaled_mean",
            "vrp_roc63_scaled_last",
            "vix_scaled_std",
            "realized_volatility_trend_z_scaled_mean",
            "gex_oi_scaled_mean",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let keep = build_exclusion("vrp_scaled_mean", &names, &default_exclusion_map()).unwrap();
        assert_eq!(keep, vec![4]);
        let keep = build_exclusion("gex_oi_scaled_std", &names, &default_exclusion_map()).unwrap();
        assert_eq!(keep, vec![0, 1, 2, 3]);
        assert!(build_exclusion("nonsense", &names, &default_exclusion_map()).is_err());
    }

    #[test]
    fn plr_plug_in_identity() {
        let ud: Vec<f64> = (0..50).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let uy: Vec<f64> = ud.iter().map(|v| 0.5 * v).collect();
        let (theta, se) = plr_from_residuals(&uy, &ud).unwrap();
        assert!((theta - 0.5).abs() < 1e-14 && se < 1e-14);
        assert!(plr_from_residuals(&uy, &vec![0.0; 50]).is_err());
    }

    #[test]
    fn framework_classes() {
        let est = |theta: f64, robust| CausalEstimate {
            treatment: "t".into(),
            theta,
            stderr: 0.0,
            p_value: 0.0,
            ci_lower: 0.0,
            ci_upper: 0.0,
            bias_phi: 0.0,
            adj_ci_lower: 0.0,
            adj_ci_upper: 0.0,
            r2_y: 0.0,
            r2_d: 0.0,
            robust,
            n: 10,
        };
        assert_eq!(classify(&est(-0.0608, true), &est(0.0160, true)), Comparison::SignReversal);
        assert_eq!(classify(&est(0.1, false), &est(0.1, true)), Comparison::GainedRobustness);
        assert_eq!(classify(&est(0.1, true), &est(0.1, false)), Comparison::LostRobustness);
        assert_eq!(classify(&est(0.1, true), &est(0.1, true)), Comparison::Consistent);
    }
}
