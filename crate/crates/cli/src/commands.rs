use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use troughcast::backtest::{self, Sizing, HOLDING_PERIODS};
use troughcast::causal::{self, CausalEstimate, CausalTask};
use troughcast::dataio::{self, fmt_f64, SynthConfig, DATE_FMT};
use troughcast::featlab::{build_matrix, default_specs, FeatureMatrix};
use troughcast::indicators::{compute_panel, IndicatorPanel, INDICATOR_NAMES};
use troughcast::pipeline::{self, TrainedPipeline};
use troughcast::series::DailySeries;
use troughcast::turnlab::{identify_turns, make_labels, LabelSet};

use crate::config::RunConfig;
use crate::svg::{bar_chart, Chart, Layer};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("missing input file {}", path.display()))?,
    ))
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Rows of a headed CSV as string maps in file order.
fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| Ok(rec?.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>>>()
        .with_context(|| format!("malformed {}", path.display()))?;
    Ok((header, rows))
}

fn col(header: &[String], name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| anyhow!("{} lacks column {name}", path.display()))
}

fn date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, DATE_FMT).map_err(|_| anyhow!("bad date {s:?}"))
}

fn num(s: &str) -> Result<f64> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| anyhow!("bad number {s:?}"))
}

fn ds(d: NaiveDate) -> String {
    d.format(DATE_FMT).to_string()
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let bundle = dataio::generate_synthetic_market(&SynthConfig::new(cfg.seed()?, cfg.n_days()?))?;
    dataio::write_prices(create(&cfg.out_file("prices.csv"))?, &bundle.prices)?;
    dataio::write_chain(create(&cfg.out_file("chain.csv"))?, &bundle.chains)?;
    dataio::write_bars(create(&cfg.out_file("bars.csv"))?, &bundle.bars)?;
    dataio::write_macro(create(&cfg.out_file("macro.csv"))?, &bundle.macro_series)?;
    let dates = bundle.prices.dates();
    write_csv(
        &cfg.out_file("planted_troughs.csv"),
        &["date"],
        bundle.planted_troughs.iter().map(|&i| vec![ds(dates[i])]),
    )?;
    log::info!("synthetic market: {} days, {} planted troughs", dates.len(), bundle.planted_troughs.len());
    Ok(())
}

pub fn label(cfg: &RunConfig) -> Result<()> {
    let prices = dataio::load_prices(&cfg.input("prices"))?;
    let turns = identify_turns(&prices, &cfg.bb()?)?;
    write_csv(
        &cfg.out_file("turns.csv"),
        &["date", "log_price", "kind"],
        turns
            .iter()
            .map(|t| vec![ds(t.date), fmt_f64(t.log_price), t.kind.as_str().to_string()]),
    )?;
    let labels = make_labels(&turns, prices.dates(), cfg.label_window()?)?;
    let series = DailySeries::new(labels.dates.clone(), labels.labels.iter().map(|&l| f64::from(l)).collect())?;
    dataio::write_daily(create(&cfg.out_file("labels.csv"))?, "label", &series)?;
    log::info!("{} turning points, {} positive days", turns.len(), labels.positives());
    Ok(())
}

pub fn indicators(cfg: &RunConfig) -> Result<()> {
    let prices = dataio::load_prices(&cfg.input("prices"))?;
    let chains = dataio::load_chain(&cfg.input("chain"))?;
    let bars = dataio::load_bars(&cfg.input("bars"))?;
    let macro_series = dataio::load_macro(&cfg.input("macro"))?;
    let panel = compute_panel(&prices, &chains, &bars, &macro_series)?;
    dataio::write_frame(create(&cfg.out_file("indicators.csv"))?, &panel.frame)?;
    Ok(())
}

fn load_labels(path: &Path) -> Result<LabelSet> {
    let (_, s) = dataio::read_daily(open(path)?)?;
    let labels = s
        .values()
        .iter()
        .map(|&v| match v {
            0.0 => Ok(0u8),
            1.0 => Ok(1u8),
            _ => Err(anyhow!("label {v} is not 0 or 1")),
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok(LabelSet {
        dates: s.dates().to_vec(),
        labels,
    })
}

pub fn features(cfg: &RunConfig) -> Result<()> {
    let frame = dataio::read_frame(open(&cfg.out_file("indicators.csv"))?)?;
    let panel = IndicatorPanel { frame };
    let labels = load_labels(&cfg.out_file("labels.csv"))?;
    let fm = build_matrix(&panel, &default_specs(&INDICATOR_NAMES), cfg.lookback()?, &labels)?;
    dataio::write_frame(create(&cfg.out_file("features.csv"))?, &fm.to_frame()?)?;
    log::info!("feature matrix {} x {}", fm.x.rows(), fm.x.cols());
    Ok(())
}

fn load_features(cfg: &RunConfig) -> Result<FeatureMatrix> {
    Ok(FeatureMatrix::from_frame(&dataio::read_frame(open(&cfg.out_file("features.csv"))?)?)?)
}

fn load_model(cfg: &RunConfig) -> Result<TrainedPipeline> {
    let path = cfg.out_file("model.txt");
    let text = fs::read_to_string(&path).with_context(|| format!("missing input file {}", path.display()))?;
    Ok(TrainedPipeline::from_text(&text)?)
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let fm = load_features(cfg)?;
    let (main, hold) = pipeline::split_holdout(&fm, cfg.holdout()?)?;
    let (model, cv) = pipeline::run_nested_cv(&main, &cfg.pipeline()?)?;
    write_text(&cfg.out_file("model.txt"), &model.to_text())?;
    let mut rows = Vec::new();
    for ((&i, &raw), &prob) in cv.oof_rows.iter().zip(&cv.oof_raw).zip(&cv.oof_prob) {
        rows.push(vec![
            ds(main.dates[i]),
            main.labels[i].to_string(),
            fmt_f64(raw),
            fmt_f64(prob),
            "oof".to_string(),
        ]);
    }
    let raw = model.decision(&hold)?;
    for (i, &r) in raw.iter().enumerate() {
        rows.push(vec![
            ds(hold.dates[i]),
            hold.labels[i].to_string(),
            fmt_f64(r),
            fmt_f64(model.calibrator.predict(r)),
            "holdout".to_string(),
        ]);
    }
    write_csv(&cfg.out_file("oof_probs.csv"), &["date", "label", "raw", "prob", "segment"], rows)?;
    write_csv(
        &cfg.out_file("cv_scores.csv"),
        &["candidate", "n_features", "c", "mean_auc", "stderr_auc", "chosen"],
        cv.candidates.iter().zip(&cv.scores).enumerate().map(|(k, (h, s))| {
            vec![
                k.to_string(),
                h.n_features.to_string(),
                fmt_f64(h.c),
                fmt_f64(s.mean),
                fmt_f64(s.stderr),
                u8::from(k == cv.chosen).to_string(),
            ]
        }),
    )?;
    log::info!(
        "chosen N={} C={}; nested AUC {:?}",
        model.hyper.n_features,
        model.hyper.c,
        cv.nested_auc()
    );
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let fm = load_features(cfg)?;
    let model = load_model(cfg)?;
    let (main, hold) = pipeline::split_holdout(&fm, cfg.holdout()?)?;
    let rep = pipeline::evaluate(&model, &hold)?;
    let drift = pipeline::drift_between(&model, &main, &hold)?;
    let dir = cfg.out().join("report");
    write_text(
        &dir.join("metrics.txt"),
        &format!(
            "roc_auc={}\nbrier={}\nn_holdout={}\npositives_holdout={}\nshap_spearman_halves={}\nn_features={}\nc={}\n",
            rep.roc_auc,
            rep.brier,
            hold.labels.len(),
            hold.labels.iter().filter(|&&l| l == 1).count(),
            fmt_f64(drift.shap_spearman),
            model.hyper.n_features,
            model.hyper.c,
        ),
    )?;
    write_csv(
        &dir.join("calibration.csv"),
        &["bin_lower", "bin_upper", "count", "mean_predicted", "observed_rate"],
        rep.calibration.iter().map(|b| {
            vec![
                fmt_f64(b.lower),
                fmt_f64(b.upper),
                b.count.to_string(),
                fmt_f64(b.mean_predicted),
                fmt_f64(b.observed_rate),
            ]
        }),
    )?;
    write_csv(
        &dir.join("rolling_brier.csv"),
        &["date", "rolling_brier"],
        hold.dates.iter().zip(&rep.rolling_brier).map(|(d, v)| vec![ds(*d), fmt_f64(*v)]),
    )?;
    let mut shap = rep.shap.clone();
    shap.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    write_csv(
        &dir.join("shap.csv"),
        &["feature", "mean_abs_shap"],
        shap.iter().map(|(f, v)| vec![f.clone(), fmt_f64(*v)]),
    )?;
    write_csv(
        &dir.join("drift.csv"),
        &["feature", "ks", "shap_first_half", "shap_second_half"],
        (0..drift.features.len()).map(|k| {
            vec![
                drift.features[k].clone(),
                fmt_f64(drift.ks[k]),
                fmt_f64(drift.shap_first[k]),
                fmt_f64(drift.shap_second[k]),
            ]
        }),
    )?;
    write_csv(
        &dir.join("holdout_probs.csv"),
        &["date", "label", "raw", "prob"],
        (0..hold.labels.len()).map(|i| {
            vec![
                ds(hold.dates[i]),
                hold.labels[i].to_string(),
                fmt_f64(rep.raw[i]),
                fmt_f64(rep.probs[i]),
            ]
        }),
    )?;
    let mut hist = Vec::new();
    for f in &model.features {
        let j = fm.column_index(f).ok_or_else(|| anyhow!("feature {f} missing from features.csv"))?;
        for (segment, m) in [("train", &main), ("holdout", &hold)] {
            let mut counts = [0usize; 20];
            for v in m.x.column(j) {
                // Scaled features live in [-1, 1].
                let b = (((v + 1.0) / 2.0 * 20.0).floor().max(0.0) as usize).min(19);
                counts[b] += 1;
            }
            for (b, c) in counts.iter().enumerate() {
                hist.push(vec![
                    f.clone(),
                    segment.to_string(),
                    fmt_f64(-1.0 + 0.1 * b as f64),
                    fmt_f64(-1.0 + 0.1 * (b + 1) as f64),
                    c.to_string(),
                ]);
            }
        }
    }
    write_csv(&dir.join("feature_histograms.csv"), &["feature", "segment", "bin_lower", "bin_upper", "count"], hist)?;
    log::info!("hold-out AUC {:.4}, Brier {:.4}", rep.roc_auc, rep.brier);
    Ok(())
}

fn load_probs(cfg: &RunConfig) -> Result<DailySeries> {
    let path = cfg.out_file("oof_probs.csv");
    let (h, rows) = read_table(&path)?;
    let (cd, cp, cs) = (col(&h, "date", &path)?, col(&h, "prob", &path)?, col(&h, "segment", &path)?);
    let segment = cfg.segment()?;
    let mut dates = Vec::new();
    let mut probs = Vec::new();
    for r in &rows {
        if segment != "all" && r[cs] != segment {
            continue;
        }
        let p = num(&r[cp])?;
        if p.is_nan() {
            continue;
        }
        dates.push(date(&r[cd])?);
        probs.push(p);
    }
    if dates.is_empty() {
        bail!("no probabilities in segment {segment}");
    }
    Ok(DailySeries::new(dates, probs)?)
}

pub fn run_backtest(cfg: &RunConfig) -> Result<()> {
    let probs = load_probs(cfg)?;
    let closes = dataio::load_prices(&cfg.input("prices"))?;
    let signals = backtest::generate_signals(&probs, cfg.threshold()?)?;
    let trades = backtest::simulate(&signals, &closes, cfg.holding()?, cfg.sizing()?)?;
    write_csv(
        &cfg.out_file("trades.csv"),
        &["trade", "entry_date", "exit_date", "entry_price", "exit_price", "size", "pnl"],
        trades.iter().enumerate().map(|(k, t)| {
            vec![
                k.to_string(),
                ds(t.entry_date),
                ds(t.exit_date),
                fmt_f64(t.entry_close),
                fmt_f64(t.exit_close),
                t.size.to_string(),
                format!("{:.2}", t.pnl),
            ]
        }),
    )?;
    let mut rows = Vec::new();
    for h in HOLDING_PERIODS {
        for s in [Sizing::Fixed, Sizing::Pyramiding] {
            let t = backtest::simulate(&signals, &closes, h, s)?;
            let rep = if t.is_empty() { None } else { backtest::metrics(&t, &closes, cfg.capital()?).ok() };
            let f = |g: fn(&backtest::BacktestReport) -> f64| rep.as_ref().map_or(String::new(), |r| fmt_f64(g(r)));
            rows.push(vec![
                h.to_string(),
                s.as_str().to_string(),
                t.len().to_string(),
                format!("{:.2}", t.iter().map(|x| x.pnl).sum::<f64>()),
                f(|r| r.sharpe),
                f(|r| r.profit_factor),
                f(|r| r.max_drawdown),
                f(|r| r.max_drawdown_pct),
            ]);
        }
    }
    write_csv(
        &cfg.out_file("report.csv"),
        &["holding", "sizing", "n_trades", "total_pnl", "sharpe", "profit_factor", "max_drawdown", "max_drawdown_pct"],
        rows,
    )?;
    log::info!("{} trades, total P&L {:.2}", trades.len(), trades.iter().map(|t| t.pnl).sum::<f64>());
    Ok(())
}

fn estimate_row(e: &CausalEstimate) -> Vec<String> {
    vec![
        e.treatment.clone(),
        fmt_f64(e.theta),
        fmt_f64(e.p_value),
        fmt_f64(e.bias_phi),
        fmt_f64(e.adj_ci_lower),
        fmt_f64(e.adj_ci_upper),
        fmt_f64(e.r2_y),
        fmt_f64(e.r2_d),
        e.robust.to_string(),
    ]
}

const ESTIMATE_HEADER: [&str; 9] = [
    "treatment",
    "coeff",
    "p_value",
    "bias_phi",
    "adj_ci_lower",
    "adj_ci_upper",
    "benchmark_r2_y",
    "benchmark_r2_d",
    "robust",
];

pub fn run_causal(cfg: &RunConfig) -> Result<()> {
    let fm = load_features(cfg)?;
    let map = cfg.exclusions()?;
    let treatments = cfg.treatments();
    if treatments.is_empty() {
        bail!("no treatments configured");
    }
    let seed = cfg.seed()?;
    let mut plr = Vec::new();
    let mut ape = Vec::new();
    for (k, t) in treatments.iter().enumerate() {
        let j = fm
            .column_index(t)
            .ok_or_else(|| anyhow!("unknown treatment {t}: not a column of features.csv"))?;
        let keep = causal::build_exclusion(t, &fm.names, &map)?;
        let mut task = CausalTask::new(
            t,
            fm.x.column(j),
            fm.labels.iter().map(|&l| f64::from(l)).collect(),
            fm.x.select_cols(&keep),
            troughcast::rng::derive_index(troughcast::rng::derive(seed, "causal"), k as u64),
        );
        task.folds = cfg.causal_folds()?;
        task.bootstrap = cfg.bootstrap()?;
        task.fd_scale = cfg.fd_step()?;
        task.floor_scale = cfg.variance_floor()?;
        log::info!("{t}: {} confounders", keep.len());
        plr.push(causal::dml_plr(&task)?);
        ape.push(causal::dml_ape(&task)?);
    }
    write_csv(&cfg.out_file("estimates_plr.csv"), &ESTIMATE_HEADER, plr.iter().map(estimate_row))?;
    write_csv(&cfg.out_file("estimates_ape.csv"), &ESTIMATE_HEADER, ape.iter().map(estimate_row))?;
    write_csv(
        &cfg.out_file("comparison.csv"),
        &["treatment", "plr_coeff", "plr_p_value", "plr_robust", "ape_coeff", "ape_p_value", "ape_robust", "classification"],
        causal::compare_frameworks(&plr, &ape).iter().map(|r| {
            vec![
                r.treatment.clone(),
                fmt_f64(r.plr.theta),
                fmt_f64(r.plr.p_value),
                r.plr.robust.to_string(),
                fmt_f64(r.ape.theta),
                fmt_f64(r.ape.p_value),
                r.ape.robust.to_string(),
                r.class.as_str().to_string(),
            ]
        }),
    )?;
    Ok(())
}

/// Days since the first date, for plotting.
fn day_axis(dates: &[NaiveDate]) -> Vec<f64> {
    let d0 = dates.first().copied().unwrap_or_default();
    dates.iter().map(|d| (*d - d0).num_days() as f64).collect()
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.out().join("report");
    fs::create_dir_all(&dir)?;
    let prices = dataio::load_prices(&cfg.input("prices"))?;
    let x = day_axis(prices.dates());
    let log_p: Vec<(f64, f64)> = x.iter().zip(prices.values()).map(|(a, b)| (*a, b.ln())).collect();
    let mut layers = vec![Layer::Line {
        name: "log close".into(),
        points: log_p,
    }];
    let turns_path = cfg.out_file("turns.csv");
    if turns_path.exists() {
        let (h, rows) = read_table(&turns_path)?;
        let (cd, cl, ck) = (col(&h, "date", &turns_path)?, col(&h, "log_price", &turns_path)?, col(&h, "kind", &turns_path)?);
        let d0 = prices.dates()[0];
        let pick = |kind: &str| -> Result<Vec<(f64, f64)>> {
            rows.iter()
                .filter(|r| r[ck] == kind)
                .map(|r| Ok(((date(&r[cd])? - d0).num_days() as f64, num(&r[cl])?)))
                .collect()
        };
        layers.push(Layer::Points {
            name: "troughs".into(),
            points: pick("trough")?,
        });
        layers.push(Layer::Points {
            name: "peaks".into(),
            points: pick("peak")?,
        });
    }
    write_text(
        &dir.join("prices_turns.svg"),
        &Chart {
            title: "Log price with turning points".into(),
            x_label: "days since start".into(),
            y_label: "log close".into(),
            layers,
            y_range: None,
        }
        .render(),
    )?;

    let cal_path = dir.join("calibration.csv");
    let (h, rows) = read_table(&cal_path)?;
    let (cp, co) = (col(&h, "mean_predicted", &cal_path)?, col(&h, "observed_rate", &cal_path)?);
    let pts = rows
        .iter()
        .map(|r| Ok((num(&r[cp])?, num(&r[co])?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.0.is_finite())
        .collect();
    write_text(
        &dir.join("calibration.svg"),
        &Chart {
            title: "Calibration (hold-out)".into(),
            x_label: "mean predicted probability".into(),
            y_label: "observed frequency".into(),
            layers: vec![
                Layer::Line {
                    name: "ideal".into(),
                    points: vec![(0.0, 0.0), (1.0, 1.0)],
                },
                Layer::Points {
                    name: "bins".into(),
                    points: pts,
                },
            ],
            y_range: Some((0.0, 1.0)),
        }
        .render(),
    )?;

    let hp = dir.join("holdout_probs.csv");
    let (h, rows) = read_table(&hp)?;
    let (cd, cl, cpr) = (col(&h, "date", &hp)?, col(&h, "label", &hp)?, col(&h, "prob", &hp)?);
    let dates = rows.iter().map(|r| date(&r[cd])).collect::<Result<Vec<_>>>()?;
    let xs = day_axis(&dates);
    let probs: Vec<(f64, f64)> = rows.iter().zip(&xs).map(|(r, x)| Ok((*x, num(&r[cpr])?))).collect::<Result<_>>()?;
    let labels: Vec<(f64, f64)> = rows.iter().zip(&xs).map(|(r, x)| Ok((*x, num(&r[cl])?))).collect::<Result<_>>()?;
    write_text(
        &dir.join("probability.svg"),
        &Chart {
            title: "Calibrated trough probability vs labels (hold-out)".into(),
            x_label: "days since hold-out start".into(),
            y_label: "probability".into(),
            layers: vec![
                Layer::Line {
                    name: "probability".into(),
                    points: probs,
                },
                Layer::Line {
                    name: "label".into(),
                    points: labels,
                },
            ],
            y_range: Some((0.0, 1.0)),
        }
        .render(),
    )?;

    let rb = dir.join("rolling_brier.csv");
    let (h, rows) = read_table(&rb)?;
    let (cd, cv) = (col(&h, "date", &rb)?, col(&h, "rolling_brier", &rb)?);
    let dates = rows.iter().map(|r| date(&r[cd])).collect::<Result<Vec<_>>>()?;
    let pts = day_axis(&dates)
        .into_iter()
        .zip(&rows)
        .map(|(x, r)| Ok((x, num(&r[cv])?)))
        .collect::<Result<Vec<_>>>()?;
    write_text(
        &dir.join("rolling_brier.svg"),
        &Chart {
            title: "Rolling 63-day Brier score (hold-out)".into(),
            x_label: "days since hold-out start".into(),
            y_label: "Brier".into(),
            layers: vec![Layer::Line {
                name: "rolling Brier".into(),
                points: pts,
            }],
            y_range: None,
        }
        .render(),
    )?;

    let sp = dir.join("shap.csv");
    let (h, rows) = read_table(&sp)?;
    let (cf, cv) = (col(&h, "feature", &sp)?, col(&h, "mean_abs_shap", &sp)?);
    let bars = rows.iter().map(|r| Ok((r[cf].clone(), num(&r[cv])?))).collect::<Result<Vec<_>>>()?;
    write_text(&dir.join("shap.svg"), &bar_chart("Mean |SHAP| on hold-out", &bars))?;
    Ok(())
}
