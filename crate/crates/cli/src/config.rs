//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use troughcast::backtest::Sizing;
use troughcast::causal::ExclusionMap;
use troughcast::learners::ForestParams;
use troughcast::pipeline::{PipelineConfig, SearchSpace};
use troughcast::turnlab::BBParams;

/// Every recognised key, its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "7", "master seed for every stage"),
    ("out", "run", "artifact directory"),
    ("n_days", "3200", "synthetic trading days (synth)"),
    ("prices", "", "prices.csv path; empty means <out>/prices.csv"),
    ("chain", "", "chain.csv path; empty means <out>/chain.csv"),
    ("bars", "", "bars.csv path; empty means <out>/bars.csv"),
    ("macro", "", "macro.csv path; empty means <out>/macro.csv"),
    ("bb_order", "20", "local-extremum half window"),
    ("bb_min_phase", "30", "minimum phase length"),
    ("bb_min_cycle", "90", "minimum cycle length"),
    ("label_window", "5", "labeling window W_L (search space 5..30; final 5)"),
    ("lookback", "10", "lookback window L (search space 5..30; final 10)"),
    ("holdout", "504", "hold-out rows at the end of the matrix"),
    ("outer_folds", "5", "outer chronological folds"),
    ("inner_folds", "3", "inner chronological folds"),
    ("n_features", "10,15,20,25,30", "feature-count search space (final 15)"),
    ("c_values", "0.01,0.1,1", "SVM C search space (final 0.01)"),
    ("smote_factor", "1.0", "SMOTE oversample factor (final 1.0)"),
    ("smote_k", "5", "SMOTE neighbours"),
    ("forest_trees", "200", "trees in the selection forest"),
    ("threshold", "0.05", "signal threshold on calibrated probability"),
    ("holding", "5", "holding period in trading days"),
    ("sizing", "fixed", "fixed | pyramiding"),
    ("capital", "100000", "initial capital for drawdown percent"),
    ("segment", "holdout", "probabilities traded: holdout | oof | all"),
    ("treatments", "amihud_illiquidity_trend_z_scaled_std,vrp_scaled_mean", "causal treatments"),
    ("exclusions", "vrp:vix|realized_volatility", "parent:excluded|... entries separated by ;"),
    ("causal_folds", "5", "cross-fitting folds"),
    ("bootstrap", "1000", "bootstrap resamples for the median"),
    ("fd_step", "0.1", "finite-difference step in units of sd(D)"),
    ("variance_floor", "1e-4", "variance floor in units of Var(D)"),
];

pub fn help_table() -> String {
    let mut s = String::from("Config keys (file `key = value`, overridden by --set key=value and named flags):\n");
    for (k, v, d) in KEYS {
        s.push_str(&format!("  {k:<15} default {:<22} {d}\n", if v.is_empty() { "-" } else { v }));
    }
    s
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key = value", path.display(), i + 1))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| anyhow!("{}:{}: {e}", path.display(), i + 1))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            bail!("unknown config key {key:?}");
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)
            .parse()
            .map_err(|_| anyhow!("config key {key} has invalid value {:?}", self.get(key)))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.get(key)
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| anyhow!("config key {key} has invalid entry {v:?}")))
            .collect()
    }

    pub fn seed(&self) -> Result<u64> {
        self.num("seed")
    }

    pub fn out(&self) -> PathBuf {
        PathBuf::from(self.get("out"))
    }

    pub fn out_file(&self, name: &str) -> PathBuf {
        self.out().join(name)
    }

    /// Explicit input path or the file of that name in the output directory.
    pub fn input(&self, key: &str) -> PathBuf {
        match self.get(key) {
            "" => self.out_file(&format!("{key}.csv")),
            p => PathBuf::from(p),
        }
    }

    pub fn n_days(&self) -> Result<usize> {
        self.num("n_days")
    }

    pub fn bb(&self) -> Result<BBParams> {
        let p = BBParams {
            order: self.num("bb_order")?,
            min_phase: self.num("bb_min_phase")?,
            min_cycle: self.num("bb_min_cycle")?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn label_window(&self) -> Result<usize> {
        self.num("label_window")
    }

    pub fn lookback(&self) -> Result<usize> {
        self.num("lookback")
    }

    pub fn holdout(&self) -> Result<usize> {
        self.num("holdout")
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            outer_folds: self.num("outer_folds")?,
            inner_folds: self.num("inner_folds")?,
            search: SearchSpace {
                n_features: self.list("n_features")?,
                c_values: self.list("c_values")?,
                smote_factor: self.num("smote_factor")?,
                smote_k: self.num("smote_k")?,
            },
            forest: ForestParams {
                n_trees: self.num("forest_trees")?,
                ..ForestParams::default()
            },
            seed: self.seed()?,
        })
    }

    pub fn threshold(&self) -> Result<f64> {
        self.num("threshold")
    }

    pub fn holding(&self) -> Result<usize> {
        self.num("holding")
    }

    pub fn sizing(&self) -> Result<Sizing> {
        Sizing::parse(self.get("sizing")).ok_or_else(|| anyhow!("sizing must be fixed or pyramiding"))
    }

    pub fn capital(&self) -> Result<f64> {
        self.num("capital")
    }

    pub fn segment(&self) -> Result<String> {
        match self.get("segment") {
            s @ ("holdout" | "oof" | "all") => Ok(s.to_string()),
            s => bail!("segment must be holdout, oof or all, got {s:?}"),
        }
    }

    pub fn treatments(&self) -> Vec<String> {
        self.get("treatments")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    }

    pub fn exclusions(&self) -> Result<ExclusionMap> {
        let mut m = ExclusionMap::new();
        for entry in self.get("exclusions").split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (parent, rest) = entry
                .split_once(':')
                .ok_or_else(|| anyhow!("exclusion entry {entry:?} lacks ':'"))?;
            m.insert(
                parent.trim().to_string(),
                rest.split('|').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
            );
        }
        Ok(m)
    }

    pub fn causal_folds(&self) -> Result<usize> {
        self.num("causal_folds")
    }

    pub fn bootstrap(&self) -> Result<usize> {
        self.num("bootstrap")
    }

    pub fn fd_step(&self) -> Result<f64> {
        self.num("fd_step")
    }

    pub fn variance_floor(&self) -> Result<f64> {
        self.num("variance_floor")
    }

    /// The resolved configuration, one key per line, sorted.
    pub fn dump(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let c = RunConfig::default();
        assert_eq!(c.seed().unwrap(), 7);
        assert_eq!(c.pipeline().unwrap().search.candidates().len(), 15);
        assert_eq!(c.exclusions().unwrap()["vrp"], vec!["vix", "realized_volatility"]);
        assert_eq!(c.input("prices"), PathBuf::from("run/prices.csv"));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(RunConfig::default().set("nope", "1").is_err());
    }
}
