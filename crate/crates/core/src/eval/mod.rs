//! Model comparison: per-fixation log-likelihood differences, bootstrap
//! intervals, time-rescaling diagnostics and comparison suites.

use std::fmt::Write as _;

use log::{info, warn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::duration::{duration_loglik, GammaKernel};
use crate::error::{Error, Result};
use crate::events::Events;
use crate::fit::{
    grid_search, train, warm_start, DurationModel, FitResult, GridSpec, Model, SaccadeModel, Sample, Splits,
    TrainConfig,
};
use crate::geometry::Rect;
use crate::params::{duration_from_doc, saccade_from_doc, ParamDoc};
use crate::saccade::{scanpath_loglik, KernelState, SaccadeParams, SaccadeSpec};
use crate::duration::DurationSpec;
use crate::simulate::replicate_rng;

/// Log-likelihood of every fixation, tagged by scanpath key and index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerFixation {
    pub ids: Vec<(String, usize)>,
    pub values: Vec<f64>,
}

/// Evaluates a parameter document on `samples`, fixation by fixation.
pub fn per_fixation_loglik(doc: &ParamDoc, samples: &[Sample]) -> Result<PerFixation> {
    let columns = doc.columns();
    let lls: Vec<Vec<f64>> = match doc.require_meta("kind")? {
        "saccade" => {
            let (spec, _, params) = saccade_from_doc(doc)?;
            samples
                .par_iter()
                .map(|s| Ok(scanpath_loglik(&check_width(s, &columns)?.events, &spec, &params, &s.omega)?.per_event))
                .collect::<Result<_>>()?
        }
        "duration" => {
            let (spec, _, params) = duration_from_doc(doc)?;
            samples
                .par_iter()
                .map(|s| Ok(duration_loglik(&check_width(s, &columns)?.events, &spec, &params)?.per_event))
                .collect::<Result<_>>()?
        }
        other => return Err(Error::Validation(format!("unknown model kind `{other}`"))),
    };
    let mut out = PerFixation {
        ids: Vec::new(),
        values: Vec::new(),
    };
    for (s, ll) in samples.iter().zip(lls) {
        out.ids.extend((0..ll.len()).map(|i| (s.events.key.clone(), i)));
        out.values.extend(ll);
    }
    Ok(out)
}

fn check_width<'a>(s: &'a Sample, columns: &[String]) -> Result<&'a Sample> {
    if !s.is_empty() && s.events.width() != columns.len() {
        return Err(Error::Validation(format!(
            "scanpath {} has {} predictor columns; the model expects {}",
            s.events.key,
            s.events.width(),
            columns.len()
        )));
    }
    Ok(s)
}

/// Elementwise `model − baseline`, in nats per fixation.
pub fn delta_loglik(model: &PerFixation, baseline: &PerFixation) -> Result<Vec<f64>> {
    if model.ids != baseline.ids {
        return Err(Error::Validation(
            "model and baseline were evaluated on different fixations".into(),
        ));
    }
    Ok(model.values.iter().zip(&baseline.values).map(|(a, b)| a - b).collect())
}

/// Percentage by which a mean per-fixation gain `g` raises the likelihood.
pub fn relative_gain_percent(g: f64) -> f64 {
    g.exp_m1() * 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    /// Mean of the replicate means.
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub replicates: usize,
}

impl BootstrapCi {
    pub fn excludes_zero(&self) -> bool {
        self.lower > 0.0 || self.upper < 0.0
    }
}

/// Percentile (2.5 %, 97.5 %) bootstrap of the mean. With `groups`, whole
/// groups (e.g. scanpaths) are resampled instead of single values.
pub fn bootstrap(values: &[f64], b: usize, seed: u64, groups: Option<&[usize]>) -> Result<BootstrapCi> {
    if values.is_empty() {
        return Err(Error::Validation("cannot bootstrap an empty sample".into()));
    }
    if b == 0 {
        return Err(Error::Usage("bootstrap needs at least one replicate".into()));
    }
    let blocks: Vec<Vec<usize>> = match groups {
        None => Vec::new(),
        Some(g) => {
            if g.len() != values.len() {
                return Err(Error::Validation("one group label per value is required".into()));
            }
            let mut map: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
            for (i, &k) in g.iter().enumerate() {
                map.entry(k).or_default().push(i);
            }
            map.into_values().collect()
        }
    };
    let mut means: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            if blocks.is_empty() {
                let n = values.len();
                (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64
            } else {
                let (mut sum, mut count) = (0.0, 0usize);
                for _ in 0..blocks.len() {
                    let blk = &blocks[rng.random_range(0..blocks.len())];
                    sum += blk.iter().map(|&i| values[i]).sum::<f64>();
                    count += blk.len();
                }
                sum / count as f64
            }
        })
        .collect();
    let mean = means.iter().sum::<f64>() / b as f64;
    means.sort_by(f64::total_cmp);
    Ok(BootstrapCi {
        mean,
        lower: quantile(&means, 0.025),
        upper: quantile(&means, 0.975),
        replicates: b,
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov–Smirnov test against Exp(1), with the asymptotic
/// Kolmogorov p-value `Q(√n · D)`.
pub fn ks_exponential(gaps: &[f64]) -> Result<KsResult> {
    if gaps.is_empty() {
        return Err(Error::Validation("KS test needs at least one value".into()));
    }
    if let Some(g) = gaps.iter().find(|g| !(**g >= 0.0) || !g.is_finite()) {
        return Err(Error::Domain(format!("rescaled gap {g} is not a finite non-negative number")));
    }
    let mut x = gaps.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = -(-v).exp_m1();
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q(n.sqrt() * d),
        n: x.len(),
    })
}

/// `Q(λ) = P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // P(K ≤ λ) = √(2π)/λ Σ_k exp(−(2k−1)²π²/(8λ²))
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=6).map(|k| ((2 * k - 1) as f64).powi(2) * c).map(f64::exp).sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=20)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Compensator increments `Λ(t_n) − Λ(end of fixation n−1)` of every
/// fixation; Exp(1) when the model generated the data.
pub fn rescaled_exposures(
    events: &Events<f64>,
    spec: &SaccadeSpec,
    params: &SaccadeParams<f64>,
    omega: &Rect<f64>,
) -> Vec<f64> {
    let mut state = KernelState::new(spec, params, *omega);
    (0..events.len())
        .map(|i| {
            let v = state.compensator(events.onsets[i]);
            state.push(events.onsets[i], events.locations[i], events.durations[i], &events.rows[i]);
            v
        })
        .collect()
}

// --- suites ----------------------------------------------------------------

/// A model to train inside a suite. `columns` selects design columns of the
/// dataset by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SuiteModel {
    Saccade {
        spec: SaccadeSpec,
        columns: Vec<String>,
    },
    Duration {
        spec: DurationSpec,
        columns: Vec<String>,
        #[serde(default)]
        kernel_init: Vec<GammaKernel<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub name: String,
    pub model: SuiteModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub train: TrainConfig,
    /// Grid-search each entry instead of training once.
    pub grid: Option<GridSpec>,
    pub bootstrap_replicates: usize,
    /// Resample whole scanpaths.
    pub block_bootstrap: bool,
    /// Dataset tag, e.g. `full` or `filtered`.
    pub variant: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub model: String,
    pub baseline: String,
    pub variant: String,
    pub ids: Vec<(String, usize)>,
    pub deltas: Vec<f64>,
    pub ci: Option<BootstrapCi>,
    pub seed: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub fits: Vec<(String, Option<FitResult>, Option<String>)>,
    pub reports: Vec<ComparisonReport>,
}

/// Design columns of the dataset restricted to `wanted`, by name.
pub fn project(samples: &[Sample], dataset_columns: &[String], wanted: &[String]) -> Result<Vec<Sample>> {
    let idx: Vec<usize> = wanted
        .iter()
        .map(|w| {
            dataset_columns
                .iter()
                .position(|c| c == w)
                .ok_or_else(|| Error::Usage(format!("column `{w}` is not in the dataset")))
        })
        .collect::<Result<_>>()?;
    Ok(samples
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.events.rows = s.events.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect();
            s
        })
        .collect())
}

fn project_splits(data: &Splits, columns: &[String], wanted: &[String]) -> Result<Splits> {
    Ok(Splits {
        train: project(&data.train, columns, wanted)?,
        val: project(&data.val, columns, wanted)?,
        test: project(&data.test, columns, wanted)?,
    })
}

fn fit_one<M: Model>(
    model: &M,
    previous: Option<&FitResult>,
    data: &Splits,
    config: &SuiteConfig,
) -> Result<FitResult> {
    let init = match previous {
        Some(prev) => match warm_start(prev, model, &data.train) {
            Ok(t) => Some(t),
            Err(e) => {
                warn!("warm start skipped: {e}");
                None
            }
        },
        None => None,
    };
    match &config.grid {
        Some(g) => grid_search(model, init.as_deref(), data, g, &config.train),
        None => train(model, init.as_deref(), data, &config.train),
    }
}

/// Trains every entry in order, each warm-started from the previous
/// successful fit of the same kind, then compares each against `baseline`
/// on the shared test set. Failed entries are reported, not fatal.
pub fn compare_suite(
    data: &Splits,
    dataset_columns: &[String],
    entries: &[SuiteEntry],
    baseline: &str,
    config: &SuiteConfig,
) -> Result<SuiteOutcome> {
    if !entries.iter().any(|e| e.name == baseline) {
        return Err(Error::Usage(format!("baseline `{baseline}` is not in the suite")));
    }
    let mut fits: Vec<(String, Option<FitResult>, Option<String>)> = Vec::new();
    let mut last: [Option<FitResult>; 2] = [None, None];
    for e in entries {
        let outcome = (|| -> Result<FitResult> {
            match &e.model {
                SuiteModel::Saccade { spec, columns } => {
                    let d = project_splits(data, dataset_columns, columns)?;
                    let m = SaccadeModel::new(spec.clone(), columns.clone(), &d.train);
                    fit_one(&m, last[0].as_ref(), &d, config)
                }
                SuiteModel::Duration {
                    spec,
                    columns,
                    kernel_init,
                } => {
                    let d = project_splits(data, dataset_columns, columns)?;
                    let m = DurationModel::new(spec.clone(), columns.clone(), kernel_init.clone())?;
                    fit_one(&m, last[1].as_ref(), &d, config)
                }
            }
        })();
        match outcome {
            Ok(f) => {
                info!("{}: train {} val {}", e.name, f.train_loss, f.val_loss);
                let slot = usize::from(matches!(e.model, SuiteModel::Duration { .. }));
                last[slot] = Some(f.clone());
                fits.push((e.name.clone(), Some(f), None));
            }
            Err(err) => {
                warn!("{} failed: {err}", e.name);
                fits.push((e.name.clone(), None, Some(err.to_string())));
            }
        }
    }
    let named: Vec<(String, Result<FitResult, String>)> = fits
        .iter()
        .map(|(n, f, e)| (n.clone(), f.clone().ok_or_else(|| e.clone().unwrap_or_default())))
        .collect();
    let reports = compare_fits(&named, baseline, &data.test, dataset_columns, config)?;
    Ok(SuiteOutcome { fits, reports })
}

/// Compares already-fitted models against `baseline` on `test`.
pub fn compare_fits(
    fits: &[(String, Result<FitResult, String>)],
    baseline: &str,
    test: &[Sample],
    dataset_columns: &[String],
    config: &SuiteConfig,
) -> Result<Vec<ComparisonReport>> {
    let evaluate = |f: &FitResult| -> Result<PerFixation> {
        let samples = project(test, dataset_columns, &f.params.columns())?;
        per_fixation_loglik(&f.params, &samples)
    };
    let base = match fits.iter().find(|(n, _)| n == baseline) {
        Some((_, Ok(f))) => evaluate(f),
        Some((_, Err(e))) => Err(Error::Validation(format!("baseline `{baseline}` failed: {e}"))),
        None => return Err(Error::Usage(format!("baseline `{baseline}` is not among the fits"))),
    };
    let groups: Vec<usize> = {
        let mut keys: Vec<&str> = Vec::new();
        test.iter()
            .flat_map(|s| {
                let k = match keys.iter().position(|k| *k == s.events.key) {
                    Some(i) => i,
                    None => {
                        keys.push(&s.events.key);
                        keys.len() - 1
                    }
                };
                std::iter::repeat_n(k, s.len())
            })
            .collect()
    };
    let seed = config.train.seed;
    Ok(fits
        .iter()
        .map(|(name, fit)| {
            let result = (|| -> Result<(PerFixation, Vec<f64>, Option<BootstrapCi>)> {
                let f = fit.as_ref().map_err(|e| Error::Validation(e.clone()))?;
                let b = base.as_ref().map_err(|e| Error::Validation(e.to_string()))?;
                let m = evaluate(f)?;
                let deltas = delta_loglik(&m, b)?;
                let ci = if deltas.is_empty() {
                    None
                } else {
                    let g = config.block_bootstrap.then_some(groups.as_slice());
                    Some(bootstrap(&deltas, config.bootstrap_replicates, seed, g)?)
                };
                Ok((m, deltas, ci))
            })();
            match result {
                Ok((m, deltas, ci)) => ComparisonReport {
                    model: name.clone(),
                    baseline: baseline.to_string(),
                    variant: config.variant.clone(),
                    ids: m.ids,
                    deltas,
                    ci,
                    seed,
                    error: None,
                },
                Err(e) => ComparisonReport {
                    model: name.clone(),
                    baseline: baseline.to_string(),
                    variant: config.variant.clone(),
                    ids: Vec::new(),
                    deltas: Vec::new(),
                    ci: None,
                    seed,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// Raw deltas of several reports as one CSV table.
pub fn reports_csv(reports: &[ComparisonReport]) -> String {
    let mut out = String::from("variant,model,baseline,scanpath,fixation,delta\n");
    for r in reports {
        for ((key, i), d) in r.ids.iter().zip(&r.deltas) {
            let _ = writeln!(out, "{},{},{},{},{},{:?}", r.variant, r.model, r.baseline, key, i, d);
        }
    }
    out
}

/// Report summaries (without raw deltas) as one CSV table.
pub fn summary_csv(reports: &[ComparisonReport]) -> String {
    let mut out = String::from("variant,model,baseline,n,mean,lower,upper,replicates,seed,error\n");
    for r in reports {
        let (m, l, u, b) = match r.ci {
            Some(c) => (format!("{:?}", c.mean), format!("{:?}", c.lower), format!("{:?}", c.upper), c.replicates),
            None => (String::new(), String::new(), String::new(), 0),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.variant,
            r.model,
            r.baseline,
            r.deltas.len(),
            m,
            l,
            u,
            b,
            r.seed,
            r.error.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_gain_example() {
        assert!((relative_gain_percent(2.44) - 1047.3).abs() < 0.1);
    }

    #[test]
    fn bootstrap_constant_and_single() {
        let ci = bootstrap(&[0.3; 50], 200, 1, None).unwrap();
        assert!((ci.lower - 0.3).abs() < 1e-15 && (ci.upper - 0.3).abs() < 1e-15);
        assert!((ci.mean - 0.3).abs() < 1e-15);
        let one = bootstrap(&[1.0, 2.0, 4.0], 1, 9, None).unwrap();
        assert_eq!(one.lower, one.upper);
        assert_eq!(one.mean, one.lower);
        assert!(bootstrap(&[], 10, 1, None).is_err());
    }

    #[test]
    fn ks_degenerate_and_empty() {
        assert!(ks_exponential(&[]).is_err());
        let r = ks_exponential(&[1.0; 500]).unwrap();
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn kolmogorov_q_values() {
        // Q(1.3581) ≈ 0.05 and Q(1.6276) ≈ 0.01.
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_q(0.5) - 0.9639).abs() < 1e-4);
        // Both branches agree at the switch point.
        let (a, b) = (kolmogorov_q(1.18 - 1e-9), kolmogorov_q(1.18 + 1e-9));
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn delta_is_antisymmetric_and_checks_alignment() {
        let a = PerFixation {
            ids: vec![("r/t".into(), 0), ("r/t".into(), 1)],
            values: vec![-1.0, -2.5],
        };
        let b = PerFixation {
            ids: a.ids.clone(),
            values: vec![-1.5, -2.0],
        };
        assert_eq!(delta_loglik(&a, &b).unwrap(), vec![0.5, -0.5]);
        assert_eq!(delta_loglik(&b, &a).unwrap(), vec![-0.5, 0.5]);
        assert_eq!(delta_loglik(&a, &a).unwrap(), vec![0.0, 0.0]);
        let c = PerFixation {
            ids: vec![("r/t".into(), 0)],
            values: vec![-1.0],
        };
        assert!(delta_loglik(&a, &c).is_err());
    }
}
