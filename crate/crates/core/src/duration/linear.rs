//! Closed-form linear models for aggregated reading measures.

use log::warn;
use serde::{Deserialize, Serialize};

use super::{lognormal_logpdf, DurationParams, DurationSpec, GammaKernel, MeanVariant, SpilloverSource};
use crate::data::{AggregatedRecord, DesignMatrix};
use crate::error::{Error, Result};
use crate::events::Events;

/// Result of an ordinary-least-squares fit on log values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub params: DurationParams<f64>,
    /// Names of every candidate column, in design order.
    pub columns: Vec<String>,
    /// Columns removed as collinear with earlier ones.
    pub dropped: Vec<String>,
    pub per_record: Vec<f64>,
    pub loglik: f64,
}

/// Expands the design with Markov lag columns: for each lag `j = 1..l`, a
/// presence indicator followed by one column per spillover predictor. Lags
/// never cross a (reader, text) boundary.
pub fn markov_design(
    records: &[AggregatedRecord],
    design: &DesignMatrix,
    spec: &DurationSpec,
) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    if design.len() != records.len() {
        return Err(Error::Validation(format!(
            "design has {} rows but there are {} records",
            design.len(),
            records.len()
        )));
    }
    let p = design.width();
    spec.validate(p)?;
    let lags = spec.lags();
    let mut names = design.names();
    for j in 1..=lags {
        names.push(format!("lag{j}:present"));
        for src in &spec.spillover {
            let base = match src {
                SpilloverSource::Column(c) => names[*c].clone(),
                SpilloverSource::Duration => "duration".to_string(),
            };
            names.push(format!("lag{j}:{base}"));
        }
    }
    let mut start = 0;
    let rows = records
        .iter()
        .enumerate()
        .map(|(n, r)| {
            if n > 0 && (records[n - 1].reader_id != r.reader_id || records[n - 1].text_id != r.text_id) {
                start = n;
            }
            let mut row = design.rows[n].clone();
            for j in 1..=lags {
                let present = n >= start + j;
                row.push(if present { 1.0 } else { 0.0 });
                for src in &spec.spillover {
                    row.push(match (present, src) {
                        (false, _) => 0.0,
                        (true, SpilloverSource::Column(c)) => design.rows[n - j][*c],
                        (true, SpilloverSource::Duration) => records[n - j].value,
                    });
                }
            }
            row
        })
        .collect();
    Ok((names, rows))
}

/// Design rows of a scanpath for a plain or Markov mean: `x_n` followed by
/// the same lag columns as [`markov_design`].
pub(crate) fn event_rows(ev: &Events<f64>, spec: &DurationSpec) -> Vec<Vec<f64>> {
    (0..ev.len())
        .map(|n| {
            let mut row = ev.rows[n].clone();
            for j in 1..=spec.lags() {
                let present = n >= j;
                row.push(if present { 1.0 } else { 0.0 });
                for src in &spec.spillover {
                    row.push(match (present, src) {
                        (false, _) => 0.0,
                        (true, SpilloverSource::Column(c)) => ev.rows[n - j][*c],
                        (true, SpilloverSource::Duration) => ev.durations[n - j],
                    });
                }
            }
            row
        })
        .collect()
}

/// Fits `log value ~ x` by least squares, which is the maximum-likelihood
/// log-normal fit with `σ² = RSS / n`. Columns that are (numerically) linear
/// combinations of earlier ones are dropped in column order, with a warning,
/// and keep a zero weight.
pub fn fit_linear_aggregated(
    records: &[AggregatedRecord],
    design: &DesignMatrix,
    spec: &DurationSpec,
) -> Result<LinearFit> {
    if matches!(spec.mean, MeanVariant::Convolution) {
        return Err(Error::Usage("aggregated linear models take a plain or Markov mean".into()));
    }
    if records.is_empty() {
        return Err(Error::Validation("no records to fit".into()));
    }
    if let Some(r) = records.iter().find(|r| !(r.value > 0.0)) {
        return Err(Error::Domain(format!(
            "record {}/{} word {} has non-positive value {}",
            r.reader_id, r.text_id, r.word_index, r.value
        )));
    }
    let (columns, rows) = markov_design(records, design, spec)?;
    let y: Vec<f64> = records.iter().map(|r| r.value.ln()).collect();
    let (kept, coef) = least_squares(&rows, &y, columns.len());
    let dropped: Vec<String> = (0..columns.len())
        .filter(|c| !kept.contains(c))
        .map(|c| columns[c].clone())
        .collect();
    for name in &dropped {
        warn!("dropping collinear column {name}");
    }
    let mut beta = vec![0.0; columns.len()];
    for (&c, &b) in kept.iter().zip(&coef) {
        beta[c] = b;
    }

    let p = design.width();
    let unused = GammaKernel {
        shape: 2.0,
        rate: 1.0,
        shift: 0.0,
    };
    let mut params = DurationParams::new(p, spec, unused);
    assign_coefficients(&mut params, &beta, spec);

    let means: Vec<f64> = rows.iter().map(|r| r.iter().zip(&beta).map(|(a, b)| a * b).sum()).collect();
    let rss: f64 = y.iter().zip(&means).map(|(a, b)| (a - b) * (a - b)).sum();
    let var = rss / y.len() as f64;
    if !(var > 0.0) {
        return Err(Error::Domain("residual variance is zero; the log-normal MLE is degenerate".into()));
    }
    params.var = var;
    let per_record = records
        .iter()
        .zip(&means)
        .map(|(r, &xi)| lognormal_logpdf(r.value, xi, var))
        .collect::<Result<Vec<_>>>()?;
    let loglik = per_record.iter().sum();
    Ok(LinearFit {
        params,
        columns,
        dropped,
        per_record,
        loglik,
    })
}

/// Spreads coefficients laid out as in [`event_rows`] over the parameter
/// blocks.
pub(crate) fn assign_coefficients(params: &mut DurationParams<f64>, beta: &[f64], spec: &DurationSpec) {
    let p = params.weights.len();
    let kk = spec.spillover.len();
    params.weights.copy_from_slice(&beta[..p]);
    for j in 0..spec.lags() {
        let at = p + j * (kk + 1);
        params.lag_presence[j] = beta[at];
        params.spill_weights[j * kk..(j + 1) * kk].copy_from_slice(&beta[at + 1..at + 1 + kk]);
    }
}

/// Least squares via Gram–Schmidt with reorthogonalization, dropping columns
/// whose residual norm falls below a relative tolerance. Returns the kept
/// column indices and their coefficients.
pub(crate) fn least_squares(rows: &[Vec<f64>], y: &[f64], q: usize) -> (Vec<usize>, Vec<f64>) {
    const TOL: f64 = 1e-10;
    let n = rows.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut r: Vec<Vec<f64>> = Vec::new(); // r[j][i] = coefficient of basis i in column j
    let mut kept = Vec::new();
    for c in 0..q {
        let mut v: Vec<f64> = (0..n).map(|i| rows[i][c]).collect();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut coeffs = vec![0.0; basis.len()];
        for _ in 0..2 {
            for (i, u) in basis.iter().enumerate() {
                let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                coeffs[i] += d;
                for (x, a) in v.iter_mut().zip(u) {
                    *x -= d * a;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= TOL * norm0 {
            continue;
        }
        for x in v.iter_mut() {
            *x /= norm;
        }
        coeffs.push(norm);
        basis.push(v);
        r.push(coeffs);
        kept.push(c);
    }
    // Qᵀy, then back-substitute R β = Qᵀy.
    let qty: Vec<f64> = basis.iter().map(|u| u.iter().zip(y).map(|(a, b)| a * b).sum()).collect();
    let k = basis.len();
    let mut beta = vec![0.0; k];
    for j in (0..k).rev() {
        let mut s = qty[j];
        for l in j + 1..k {
            s -= r[l][j] * beta[l];
        }
        beta[j] = s / r[j][j];
    }
    (kept, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnKind, MeasureKind};

    fn rec(reader: &str, word: usize, value: f64) -> AggregatedRecord {
        AggregatedRecord {
            reader_id: reader.into(),
            text_id: "t".into(),
            word_index: word,
            kind: MeasureKind::Gaze,
            value,
        }
    }

    #[test]
    fn intercept_only_is_mean_of_logs() {
        let recs: Vec<_> = [0.2, 0.25, 0.31, 0.18].iter().enumerate().map(|(i, &v)| rec("a", i, v)).collect();
        let fit = fit_linear_aggregated(&recs, &DesignMatrix::intercept_only(4), &DurationSpec::plain()).unwrap();
        let logs: Vec<f64> = recs.iter().map(|r| r.value.ln()).collect();
        let mean = logs.iter().sum::<f64>() / 4.0;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((fit.params.weights[0] - mean).abs() < 1e-14);
        assert!((fit.params.var - var).abs() < 1e-14);
    }

    #[test]
    fn duplicated_column_is_dropped() {
        let recs: Vec<_> = [0.2, 0.25, 0.31, 0.18].iter().enumerate().map(|(i, &v)| rec("a", i, v)).collect();
        let cols = vec![
            ColumnKind::Intercept,
            ColumnKind::Effect("z".into()),
            ColumnKind::Effect("z2".into()),
        ];
        let rows = vec![vec![1.0, 1.0, 1.0], vec![1.0, 2.0, 2.0], vec![1.0, 0.5, 0.5], vec![1.0, 3.0, 3.0]];
        let d = DesignMatrix::from_rows(cols, rows).unwrap();
        let fit = fit_linear_aggregated(&recs, &d, &DurationSpec::plain()).unwrap();
        assert_eq!(fit.dropped, vec!["effect:z2".to_string()]);
        assert_eq!(fit.params.weights[2], 0.0);
    }

    #[test]
    fn markov_lags_respect_sessions() {
        let recs = vec![rec("a", 0, 0.2), rec("a", 1, 0.3), rec("b", 0, 0.4)];
        let cols = vec![ColumnKind::Intercept, ColumnKind::Effect("z".into())];
        let d = DesignMatrix::from_rows(cols, vec![vec![1.0, 5.0], vec![1.0, 6.0], vec![1.0, 7.0]]).unwrap();
        let spec = DurationSpec::markov(1, vec![SpilloverSource::Column(1), SpilloverSource::Duration]);
        let (names, rows) = markov_design(&recs, &d, &spec).unwrap();
        assert_eq!(names, ["intercept", "effect:z", "lag1:present", "lag1:effect:z", "lag1:duration"]);
        assert_eq!(rows[1], vec![1.0, 6.0, 1.0, 5.0, 0.2]);
        assert_eq!(rows[2], vec![1.0, 7.0, 0.0, 0.0, 0.0]);
    }
}
