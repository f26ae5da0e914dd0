//! Nested chronological cross-validation, one-SE model selection,
//! calibration, evaluation metrics, linear SHAP and drift diagnostics.

use std::fmt::Write as _;
use std::ops::Range;

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::featlab::FeatureMatrix;
use crate::learners::svm::fit_linear_svm;
use crate::learners::{
    fit_forest, fit_isotonic, smote, ForestParams, IsotonicCalibrator, LinearClassifier, Matrix, Scaler,
};
use crate::rng;
use crate::stats;

pub use crate::stats::{brier, roc_auc};

pub const PIPELINE_FORMAT: &str = "troughcast-pipeline";
pub const PIPELINE_VERSION: u32 = 1;
pub const ROLLING_BRIER_WINDOW: usize = 63;
pub const CALIBRATION_BINS: usize = 10;
/// About two years of trading days.
pub const DEFAULT_HOLDOUT: usize = 504;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub n_features: Vec<usize>,
    pub c_values: Vec<f64>,
    pub smote_factor: f64,
    pub smote_k: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            n_features: vec![10, 15, 20, 25, 30],
            c_values: vec![0.01, 0.1, 1.0],
            smote_factor: 1.0,
            smote_k: 5,
        }
    }
}

/// One point of the search space. Candidate order is the complexity order:
/// fewer features first, then lower C.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub n_features: usize,
    pub c: f64,
}

impl SearchSpace {
    pub fn candidates(&self) -> Vec<Hyper> {
        let mut n = self.n_features.clone();
        n.sort_unstable();
        let mut c = self.c_values.clone();
        c.sort_by(f64::total_cmp);
        n.iter()
            .flat_map(|&n_features| c.iter().map(move |&c| Hyper { n_features, c }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub search: SearchSpace,
    pub forest: ForestParams,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            outer_folds: 5,
            inner_folds: 3,
            search: SearchSpace::default(),
            forest: ForestParams::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Range<usize>,
    pub val: Range<usize>,
}

/// Expanding-window splits: `k` contiguous validation blocks of equal size,
/// each trained on everything before it.
pub fn time_series_split(n: usize, k: usize) -> Result<Vec<Fold>> {
    if k == 0 || n < 2 * (k + 1) {
        return Err(Error::InvalidInput(format!("{n} rows cannot hold {k} chronological folds")));
    }
    let size = n / (k + 1);
    let first = n - k * size;
    Ok((0..k)
        .map(|i| {
            let start = first + i * size;
            Fold {
                train: 0..start,
                val: start..start + size,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvPlan {
    pub outer: Vec<Fold>,
    /// Inner folds per outer fold, indexed within that fold's training block.
    pub inner: Vec<Vec<Fold>>,
}

pub fn cv_plan(n: usize, outer: usize, inner: usize) -> Result<CvPlan> {
    let outer_folds = time_series_split(n, outer)?;
    let inner_folds = outer_folds
        .iter()
        .map(|f| time_series_split(f.train.len(), inner))
        .collect::<Result<Vec<_>>>()?;
    Ok(CvPlan {
        outer: outer_folds,
        inner: inner_folds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub mean: f64,
    pub stderr: f64,
    pub complexity: usize,
}

/// One-standard-error rule: the least complex candidate whose mean is within
/// one standard error of the best mean. Ties go to the earlier candidate.
pub fn one_se_select(candidates: &[CandidateScore]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidates to select from".into()));
    }
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.mean > candidates[best].mean {
            best = i;
        }
    }
    let band = candidates[best].mean - candidates[best].stderr;
    let mut pick: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if c.mean >= band && pick.is_none_or(|p| c.complexity < candidates[p].complexity) {
            pick = Some(i);
        }
    }
    Ok(pick.expect("best candidate is always inside its own band"))
}

/// Models fitted on one training block for every candidate.
#[derive(Debug, Clone)]
pub struct FoldModels {
    pub scaler: Scaler,
    pub ranking: Vec<usize>,
    pub classifiers: Vec<LinearClassifier>,
}

impl FoldModels {
    /// Raw decision scores of candidate `k` on unscaled rows.
    pub fn decision(&self, hyper: &Hyper, k: usize, x: &Matrix) -> Vec<f64> {
        let cols = &self.ranking[..hyper.n_features.min(self.ranking.len())];
        let clf = &self.classifiers[k];
        (0..x.rows())
            .map(|i| {
                let z = self.scaler.transform_row(x.row(i));
                let sel: Vec<f64> = cols.iter().map(|&j| z[j]).collect();
                clf.decision(&sel)
            })
            .collect()
    }
}

/// Augment with SMOTE, scale, rank features by forest importance, then fit
/// one linear SVM per candidate. Sees only the rows it is given.
pub fn fit_fold(x: &Matrix, y: &[u8], cands: &[Hyper], cfg: &PipelineConfig, seed: u64) -> Result<FoldModels> {
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
    let neg = y.len() - pos.len();
    if pos.is_empty() || neg == 0 {
        return Err(Error::InvalidInput("training block lacks one class".into()));
    }
    let synth = smote(
        &x.select_rows(&pos),
        neg,
        cfg.search.smote_factor,
        cfg.search.smote_k,
        rng::derive(seed, "smote"),
    )?;
    let aug = x.vstack(&synth)?;
    let mut ya = y.to_vec();
    ya.extend(std::iter::repeat_n(1u8, synth.rows()));
    let scaler = Scaler::fit(&aug);
    let z = scaler.transform(&aug);
    let forest = fit_forest(&z, &ya, &cfg.forest, rng::derive(seed, "forest"))?;
    let ranking = forest.ranking();
    let classifiers = cands
        .iter()
        .map(|h| {
            let cols = &ranking[..h.n_features.min(ranking.len())];
            fit_linear_svm(&z.select_cols(cols), &ya, h.c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldModels {
        scaler,
        ranking,
        classifiers,
    })
}

fn idx(r: &Range<usize>) -> Vec<usize> {
    r.clone().collect()
}

fn has_both(y: &[u8]) -> bool {
    y.contains(&0) && y.contains(&1)
}

fn summarize(aucs: &[Vec<f64>], n_cands: usize) -> Vec<CandidateScore> {
    (0..n_cands)
        .map(|k| {
            let v: Vec<f64> = aucs.iter().map(|a| a[k]).collect();
            let mean = stats::mean(&v);
            let stderr = if v.len() > 1 { stats::std_dev(&v, 1) / (v.len() as f64).sqrt() } else { 0.0 };
            CandidateScore {
                mean,
                stderr,
                complexity: k,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct OuterFoldResult {
    pub fold: usize,
    pub skipped: bool,
    /// Validation AUC per candidate; empty when the block has one class.
    pub aucs: Vec<f64>,
    /// Raw validation scores per candidate.
    pub scores: Vec<Vec<f64>>,
    /// Candidate picked by the inner loop and its validation AUC.
    pub inner_choice: Option<usize>,
    pub nested_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CvSummary {
    pub plan: CvPlan,
    pub candidates: Vec<Hyper>,
    pub scores: Vec<CandidateScore>,
    pub chosen: usize,
    pub folds: Vec<OuterFoldResult>,
    /// Row indices and raw scores of the chosen candidate, out of fold.
    pub oof_rows: Vec<usize>,
    pub oof_raw: Vec<f64>,
    /// Calibrated out-of-fold probabilities using only earlier folds'
    /// scores for calibration; missing for the first scored fold.
    pub oof_prob: Vec<f64>,
}

impl CvSummary {
    pub fn nested_auc(&self) -> Option<f64> {
        let v: Vec<f64> = self.folds.iter().filter_map(|f| f.nested_auc).collect();
        (!v.is_empty()).then(|| stats::mean(&v))
    }
}

fn inner_select(x: &Matrix, y: &[u8], folds: &[Fold], cands: &[Hyper], cfg: &PipelineConfig, seed: u64) -> Option<usize> {
    let mut aucs = Vec::new();
    for (j, f) in folds.iter().enumerate() {
        let tr = idx(&f.train);
        let va = idx(&f.val);
        let (ytr, yva): (Vec<u8>, Vec<u8>) = (tr.iter().map(|&i| y[i]).collect(), va.iter().map(|&i| y[i]).collect());
        if !has_both(&yva) {
            continue;
        }
        let Ok(m) = fit_fold(&x.select_rows(&tr), &ytr, cands, cfg, rng::derive_index(seed, j as u64)) else {
            continue;
        };
        let xv = x.select_rows(&va);
        aucs.push(
            cands
                .iter()
                .enumerate()
                .map(|(k, h)| roc_auc(&m.decision(h, k, &xv), &yva).expect("both classes"))
                .collect::<Vec<f64>>(),
        );
    }
    if aucs.is_empty() {
        return None;
    }
    one_se_select(&summarize(&aucs, cands.len())).ok()
}

pub fn outer_fold_seed(seed: u64, k: usize) -> u64 {
    rng::derive_index(rng::derive(seed, "outer"), k as u64)
}

/// Refits outer fold `k` exactly as [`cross_validate`] does, from the rows
/// before its validation block.
pub fn refit_outer_fold(fm: &FeatureMatrix, cfg: &PipelineConfig, k: usize) -> Result<FoldModels> {
    let plan = time_series_split(fm.x.rows(), cfg.outer_folds)?;
    let f = plan
        .get(k)
        .ok_or_else(|| Error::InvalidInput(format!("no outer fold {k}")))?;
    let tr = idx(&f.train);
    let y: Vec<u8> = tr.iter().map(|&i| fm.labels[i]).collect();
    fit_fold(&fm.x.select_rows(&tr), &y, &cfg.search.candidates(), cfg, outer_fold_seed(cfg.seed, k))
}

/// Runs the outer folds (in parallel), each with its own inner selection.
pub fn cross_validate(fm: &FeatureMatrix, cfg: &PipelineConfig) -> Result<CvSummary> {
    let n = fm.x.rows();
    let plan = cv_plan(n, cfg.outer_folds, cfg.inner_folds)?;
    let cands = cfg.search.candidates();
    if cands.is_empty() {
        return Err(Error::InvalidInput("empty search space".into()));
    }
    let folds: Vec<OuterFoldResult> = plan
        .outer
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let seed = outer_fold_seed(cfg.seed, k);
            let tr = idx(&f.train);
            let va = idx(&f.val);
            let xtr = fm.x.select_rows(&tr);
            let ytr: Vec<u8> = tr.iter().map(|&i| fm.labels[i]).collect();
            let yva: Vec<u8> = va.iter().map(|&i| fm.labels[i]).collect();
            let skipped = |why: String| {
                log::warn!("outer fold {k} skipped: {why}");
                OuterFoldResult {
                    fold: k,
                    skipped: true,
                    aucs: Vec::new(),
                    scores: Vec::new(),
                    inner_choice: None,
                    nested_auc: None,
                }
            };
            if !ytr.contains(&1) {
                return skipped("no positive training rows".into());
            }
            let models = match fit_fold(&xtr, &ytr, &cands, cfg, seed) {
                Ok(m) => m,
                Err(e) => return skipped(e.to_string()),
            };
            let xva = fm.x.select_rows(&va);
            let scores: Vec<Vec<f64>> = cands.iter().enumerate().map(|(c, h)| models.decision(h, c, &xva)).collect();
            let aucs: Vec<f64> = if has_both(&yva) {
                scores.iter().map(|s| roc_auc(s, &yva).expect("both classes")).collect()
            } else {
                Vec::new()
            };
            let inner_choice = inner_select(&xtr, &ytr, &plan.inner[k], &cands, cfg, rng::derive(seed, "inner"));
            let nested_auc = inner_choice.and_then(|c| aucs.get(c).copied());
            OuterFoldResult {
                fold: k,
                skipped: false,
                aucs,
                scores,
                inner_choice,
                nested_auc,
            }
        })
        .collect();
    let scored: Vec<Vec<f64>> = folds.iter().filter(|f| !f.aucs.is_empty()).map(|f| f.aucs.clone()).collect();
    if scored.is_empty() {
        return Err(Error::InvalidInput("no outer fold could be scored".into()));
    }
    let scores = summarize(&scored, cands.len());
    let chosen = one_se_select(&scores)?;

    let mut oof_rows = Vec::new();
    let mut oof_raw = Vec::new();
    let mut oof_prob = Vec::new();
    for f in folds.iter().filter(|f| !f.skipped) {
        let fold = &plan.outer[f.fold];
        let prior_x: Vec<f64> = oof_raw.clone();
        let prior_y: Vec<f64> = oof_rows.iter().map(|&i: &usize| f64::from(fm.labels[i])).collect();
        let cal = fit_isotonic(&prior_x, &prior_y).ok();
        for (r, &s) in fold.val.clone().zip(&f.scores[chosen]) {
            oof_rows.push(r);
            oof_raw.push(s);
            oof_prob.push(cal.as_ref().map_or(f64::NAN, |c| c.predict(s)));
        }
    }
    Ok(CvSummary {
        plan,
        candidates: cands,
        scores,
        chosen,
        folds,
        oof_rows,
        oof_raw,
        oof_prob,
    })
}

/// Everything needed to score new rows, by feature name.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPipeline {
    pub features: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub classifier: LinearClassifier,
    pub calibrator: IsotonicCalibrator,
    /// Mean of the scaled selected features over the unaugmented training rows.
    pub background: Vec<f64>,
    pub hyper: Hyper,
    pub smote_factor: f64,
    pub smote_k: usize,
    pub seed: u64,
}

impl TrainedPipeline {
    fn columns(&self, names: &[String]) -> Result<Vec<usize>> {
        self.features
            .iter()
            .map(|f| {
                names
                    .iter()
                    .position(|n| n == f)
                    .ok_or_else(|| Error::Schema(format!("feature {f} missing from matrix")))
            })
            .collect()
    }

    /// Scaled selected features of each row.
    pub fn scaled(&self, fm: &FeatureMatrix) -> Result<Matrix> {
        let cols = self.columns(&fm.names)?;
        let d = cols.len();
        let mut data = Vec::with_capacity(fm.x.rows() * d);
        for i in 0..fm.x.rows() {
            for (k, &j) in cols.iter().enumerate() {
                data.push((fm.x.get(i, j) - self.mean[k]) / self.std[k]);
            }
        }
        Matrix::new(fm.x.rows(), d, data)
    }

    pub fn decision(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self.classifier.decision_matrix(&self.scaled(fm)?))
    }

    pub fn predict_proba(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self.calibrator.predict_all(&self.decision(fm)?))
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "format={PIPELINE_FORMAT}");
        let _ = writeln!(s, "version={PIPELINE_VERSION}");
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "kernel=linear");
        let _ = writeln!(s, "n_features={}", self.hyper.n_features);
        let _ = writeln!(s, "c={}", self.hyper.c);
        let _ = writeln!(s, "smote_factor={}", self.smote_factor);
        let _ = writeln!(s, "smote_k={}", self.smote_k);
        let _ = writeln!(s, "features={}", self.features.join(","));
        let _ = writeln!(s, "scaler_mean={}", join(&self.mean));
        let _ = writeln!(s, "scaler_std={}", join(&self.std));
        let _ = writeln!(s, "background={}", join(&self.background));
        let _ = writeln!(s, "weights={}", join(&self.classifier.w));
        let _ = writeln!(s, "bias={}", self.classifier.b);
        let _ = writeln!(s, "objective={}", self.classifier.objective);
        let _ = writeln!(s, "isotonic_x={}", join(&self.calibrator.x));
        let _ = writeln!(s, "isotonic_y={}", join(&self.calibrator.y));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv = std::collections::HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "expected key=value".into(),
            })?;
            kv.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        let get = |k: &str| -> Result<&(usize, String)> {
            kv.get(k).ok_or_else(|| Error::Schema(format!("model file lacks key {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            let (line, v) = get(k)?;
            v.parse().map_err(|_| Error::Parse {
                line: *line,
                msg: format!("bad number for {k}"),
            })
        };
        let vec = |k: &str| -> Result<Vec<f64>> {
            let (line, v) = get(k)?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|x| {
                    x.parse().map_err(|_| Error::Parse {
                        line: *line,
                        msg: format!("bad number in {k}"),
                    })
                })
                .collect()
        };
        if get("format")?.1 != PIPELINE_FORMAT {
            return Err(Error::Schema("not a pipeline model file".into()));
        }
        let version = num("version")? as u32;
        if version != PIPELINE_VERSION {
            return Err(Error::Schema(format!("unsupported model version {version}")));
        }
        let features: Vec<String> = get("features")?.1.split(',').map(str::to_string).collect();
        let c = num("c")?;
        let p = TrainedPipeline {
            mean: vec("scaler_mean")?,
            std: vec("scaler_std")?,
            background: vec("background")?,
            classifier: LinearClassifier {
                w: vec("weights")?,
                b: num("bias")?,
                c,
                objective: num("objective")?,
            },
            calibrator: IsotonicCalibrator {
                x: vec("isotonic_x")?,
                y: vec("isotonic_y")?,
            },
            hyper: Hyper {
                n_features: num("n_features")? as usize,
                c,
            },
            smote_factor: num("smote_factor")?,
            smote_k: num("smote_k")? as usize,
            seed: num("seed")? as u64,
            features,
        };
        let d = p.features.len();
        if [p.mean.len(), p.std.len(), p.background.len(), p.classifier.w.len()].iter().any(|&l| l != d)
            || p.calibrator.x.len() != p.calibrator.y.len()
            || p.calibrator.x.is_empty()
        {
            return Err(Error::Schema("inconsistent model dimensions".into()));
        }
        Ok(p)
    }
}

/// Cross-validates, then refits the chosen candidate on all rows and
/// calibrates it on the pooled out-of-fold scores.
pub fn run_nested_cv(fm: &FeatureMatrix, cfg: &PipelineConfig) -> Result<(TrainedPipeline, CvSummary)> {
    let cv = cross_validate(fm, cfg)?;
    let hyper = cv.candidates[cv.chosen];
    let oof_y: Vec<f64> = cv.oof_rows.iter().map(|&i| f64::from(fm.labels[i])).collect();
    let calibrator = fit_isotonic(&cv.oof_raw, &oof_y)?;
    let models = fit_fold(&fm.x, &fm.labels, &[hyper], cfg, rng::derive(cfg.seed, "final"))?;
    let cols: Vec<usize> = models.ranking[..hyper.n_features.min(models.ranking.len())].to_vec();
    let mean: Vec<f64> = cols.iter().map(|&j| models.scaler.mean[j]).collect();
    let std: Vec<f64> = cols.iter().map(|&j| models.scaler.std[j]).collect();
    let mut background = vec![0.0; cols.len()];
    for i in 0..fm.x.rows() {
        for (k, &j) in cols.iter().enumerate() {
            background[k] += (fm.x.get(i, j) - mean[k]) / std[k];
        }
    }
    background.iter_mut().for_each(|v| *v /= fm.x.rows() as f64);
    let pipeline = TrainedPipeline {
        features: cols.iter().map(|&j| fm.names[j].clone()).collect(),
        mean,
        std,
        classifier: models.classifiers.into_iter().next().expect("one candidate"),
        calibrator,
        background,
        hyper,
        smote_factor: cfg.search.smote_factor,
        smote_k: cfg.search.smote_k,
        seed: cfg.seed,
    };
    Ok((pipeline, cv))
}

/// Splits off the last `holdout` rows, which cross-validation never sees.
pub fn split_holdout(fm: &FeatureMatrix, holdout: usize) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let n = fm.x.rows();
    if holdout == 0 || holdout >= n {
        return Err(Error::InvalidInput(format!("hold-out of {holdout} rows leaves no training data")));
    }
    let main: Vec<usize> = (0..n - holdout).collect();
    let test: Vec<usize> = (n - holdout..n).collect();
    Ok((fm.select_rows(&main), fm.select_rows(&test)))
}

pub fn rolling_brier(probs: &[f64], labels: &[u8], window: usize) -> Vec<f64> {
    let sq: Vec<f64> = probs.iter().zip(labels).map(|(p, &y)| (p - f64::from(y)).powi(2)).collect();
    (0..sq.len())
        .map(|t| {
            if window == 0 || t + 1 < window {
                f64::NAN
            } else {
                sq[t + 1 - window..=t].iter().sum::<f64>() / window as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_predicted: f64,
    pub observed_rate: f64,
}

pub fn calibration_curve(probs: &[f64], labels: &[u8], bins: usize) -> Vec<CalibrationBin> {
    let mut sum_p = vec![0.0; bins];
    let mut sum_y = vec![0.0; bins];
    let mut cnt = vec![0usize; bins];
    for (p, &y) in probs.iter().zip(labels) {
        let b = ((p * bins as f64) as usize).min(bins - 1);
        sum_p[b] += p;
        sum_y[b] += f64::from(y);
        cnt[b] += 1;
    }
    (0..bins)
        .map(|b| CalibrationBin {
            lower: b as f64 / bins as f64,
            upper: (b + 1) as f64 / bins as f64,
            count: cnt[b],
            mean_predicted: if cnt[b] > 0 { sum_p[b] / cnt[b] as f64 } else { f64::NAN },
            observed_rate: if cnt[b] > 0 { sum_y[b] / cnt[b] as f64 } else { f64::NAN },
        })
        .collect()
}

/// Exact SHAP values of a linear model: φ_j = w_j (x_j − x̄_j).
pub fn linear_shap(w: &[f64], rows: &Matrix, background: &[f64]) -> Matrix {
    let mut out = rows.clone();
    for i in 0..rows.rows() {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = w[j] * (*v - background[j]);
        }
    }
    out
}

pub fn mean_abs_columns(m: &Matrix) -> Vec<f64> {
    (0..m.cols())
        .map(|j| (0..m.rows()).map(|i| m.get(i, j).abs()).sum::<f64>() / m.rows().max(1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    pub features: Vec<String>,
    pub ks: Vec<f64>,
    pub shap_first: Vec<f64>,
    pub shap_second: Vec<f64>,
    pub shap_spearman: f64,
}

/// Splits `fm` at `split` (rows on or after it form the later sample) and
/// runs [`drift_between`].
pub fn drift_diagnostics(p: &TrainedPipeline, fm: &FeatureMatrix, split: NaiveDate) -> Result<DriftReport> {
    let cut = fm.dates.partition_point(|d| *d < split);
    let before: Vec<usize> = (0..cut).collect();
    let after: Vec<usize> = (cut..fm.dates.len()).collect();
    drift_between(p, &fm.select_rows(&before), &fm.select_rows(&after))
}

/// KS statistic per feature between `before` and `after`, and the stability of
/// mean-|SHAP| rankings across the two chronological halves of `after`.
pub fn drift_between(p: &TrainedPipeline, before: &FeatureMatrix, after: &FeatureMatrix) -> Result<DriftReport> {
    if before.x.rows() == 0 || after.x.rows() < 2 {
        return Err(Error::InvalidInput("drift diagnostics need nonempty samples".into()));
    }
    let cols = p.columns(&before.names)?;
    let cols_after = p.columns(&after.names)?;
    let ks: Vec<f64> = cols
        .iter()
        .zip(&cols_after)
        .map(|(&a, &b)| stats::ks_statistic(&before.x.column(a), &after.x.column(b)))
        .collect();
    let z = p.scaled(after)?;
    let half = z.rows() / 2;
    let first: Vec<usize> = (0..half).collect();
    let second: Vec<usize> = (half..z.rows()).collect();
    let s1 = mean_abs_columns(&linear_shap(&p.classifier.w, &z.select_rows(&first), &p.background));
    let s2 = mean_abs_columns(&linear_shap(&p.classifier.w, &z.select_rows(&second), &p.background));
    Ok(DriftReport {
        features: p.features.clone(),
        ks,
        shap_spearman: stats::spearman(&s1, &s2),
        shap_first: s1,
        shap_second: s2,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub roc_auc: f64,
    pub brier: f64,
    pub rolling_brier: Vec<f64>,
    pub calibration: Vec<CalibrationBin>,
    pub shap: Vec<(String, f64)>,
    pub probs: Vec<f64>,
    pub raw: Vec<f64>,
}

pub fn evaluate(p: &TrainedPipeline, test: &FeatureMatrix) -> Result<EvalReport> {
    let raw = p.decision(test)?;
    let probs = p.calibrator.predict_all(&raw);
    let shap = mean_abs_columns(&linear_shap(&p.classifier.w, &p.scaled(test)?, &p.background));
    Ok(EvalReport {
        roc_auc: roc_auc(&raw, &test.labels)?,
        brier: brier(&probs, &test.labels)?,
        rolling_brier: rolling_brier(&probs, &test.labels, ROLLING_BRIER_WINDOW),
        calibration: calibration_curve(&probs, &test.labels, CALIBRATION_BINS),
        shap: p.features.iter().cloned().zip(shap).collect(),
        probs,
        raw,
    })
}
