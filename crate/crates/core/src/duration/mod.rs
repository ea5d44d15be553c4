//! Fixation-duration models.
//!
//! Durations are log-normal with log-mean
//!
//! ```text
//! ξ_n = x_nᵀw + Σ_k w'_k Σ_{m<n} x_mk · γ(t_n − t_m | α_k, β_k, θ_k)   (convolution)
//! ξ_n = x_nᵀw + Σ_k Σ_{j=1..l} x_{n−j,k} · w'_{j,k}                    (Markov, order l)
//! ```
//!
//! where `γ` is a shifted gamma density. A gamma-distributed alternative with
//! the same mean `e^ξ` is available for distribution comparisons.

mod linear;

pub use linear::{fit_linear_aggregated, markov_design, LinearFit};
pub(crate) use linear::{assign_coefficients, event_rows, least_squares};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::Events;
use crate::saccade::{dot, Loglik};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanVariant {
    Plain,
    Convolution,
    Markov { lags: usize },
}

/// Where a spillover predictor's values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpilloverSource {
    /// A column of the design matrix.
    Column(usize),
    /// The (observed) duration of the earlier fixation, in seconds.
    Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    #[default]
    LogNormal,
    Gamma,
}

/// Time axis of the convolution kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelClock {
    /// Raw onset differences `t_n − t_m`.
    #[default]
    Onset,
    /// Onset differences minus the fixation time in between.
    Saccade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationSpec {
    pub mean: MeanVariant,
    pub spillover: Vec<SpilloverSource>,
    pub distribution: Distribution,
    pub clock: KernelClock,
}

impl DurationSpec {
    pub fn plain() -> Self {
        Self {
            mean: MeanVariant::Plain,
            spillover: Vec::new(),
            distribution: Distribution::LogNormal,
            clock: KernelClock::Onset,
        }
    }

    pub fn convolution(spillover: Vec<SpilloverSource>) -> Self {
        Self {
            mean: MeanVariant::Convolution,
            spillover,
            ..Self::plain()
        }
    }

    pub fn markov(lags: usize, spillover: Vec<SpilloverSource>) -> Self {
        Self {
            mean: MeanVariant::Markov { lags },
            spillover,
            ..Self::plain()
        }
    }

    pub fn lags(&self) -> usize {
        match self.mean {
            MeanVariant::Markov { lags } => lags,
            _ => 0,
        }
    }

    /// Number of spillover weights `w'`.
    pub fn n_spill_weights(&self) -> usize {
        match self.mean {
            MeanVariant::Plain => 0,
            MeanVariant::Convolution => self.spillover.len(),
            MeanVariant::Markov { lags } => lags * self.spillover.len(),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        for s in &self.spillover {
            if let SpilloverSource::Column(c) = s {
                if *c >= p {
                    return Err(Error::Usage(format!("spillover column {c} outside design width {p}")));
                }
            }
        }
        Ok(())
    }
}

/// Shifted gamma kernel `γ(τ | α, β, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaKernel<T> {
    /// α > 1.
    pub shape: T,
    /// β > 0.
    pub rate: T,
    /// θ ≥ 0.
    pub shift: T,
}

impl<T: Scalar> GammaKernel<T> {
    pub fn new(shape: T, rate: T, shift: T) -> Result<Self> {
        let k = Self { shape, rate, shift };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shape > T::one()) {
            return Err(Error::Parameter(format!("gamma kernel shape must exceed 1, got {}", self.shape)));
        }
        if !(self.rate > T::zero()) {
            return Err(Error::Parameter(format!("gamma kernel rate must be positive, got {}", self.rate)));
        }
        if !(self.shift >= T::zero()) {
            return Err(Error::Parameter(format!("gamma kernel shift must be ≥ 0, got {}", self.shift)));
        }
        Ok(())
    }

    /// Density value (parameters assumed valid).
    pub fn eval(&self, tau: T) -> T {
        let u = tau + self.shift;
        if u <= T::zero() {
            return T::zero();
        }
        (self.shape * self.rate.ln() - self.shape.ln_gamma() + (self.shape - T::one()) * u.ln() - self.rate * u).exp()
    }

    /// Value and partial derivatives in (shape, rate, shift).
    fn eval_grad(&self, tau: T) -> (T, [T; 3]) {
        let u = tau + self.shift;
        if u <= T::zero() {
            return (T::zero(), [T::zero(); 3]);
        }
        let g = self.eval(tau);
        (
            g,
            [
                g * (self.rate.ln() - self.shape.digamma() + u.ln()),
                g * (self.shape / self.rate - u),
                g * ((self.shape - T::one()) / u - self.rate),
            ],
        )
    }
}

/// `γ(τ | α, β, θ) = β^α / Γ(α) · (τ+θ)^{α−1} · e^{−β(τ+θ)}`.
pub fn gamma_kernel<T: Scalar>(tau: T, kernel: &GammaKernel<T>) -> Result<T> {
    kernel.validate()?;
    if tau < T::zero() {
        return Err(Error::Domain(format!("kernel argument must be ≥ 0, got {tau}")));
    }
    Ok(kernel.eval(tau))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationParams<T> {
    /// w ∈ ℝ^p.
    pub weights: Vec<T>,
    /// w'_k (convolution) or w'_{j,k} laid out lag-major (Markov).
    pub spill_weights: Vec<T>,
    /// Weight of each lag-presence indicator (Markov only).
    pub lag_presence: Vec<T>,
    /// One kernel per spillover predictor (convolution only).
    pub kernels: Vec<GammaKernel<T>>,
    /// σ² of the log-normal.
    pub var: T,
    /// Shape of the gamma alternative.
    pub gamma_shape: T,
}

impl<T: Scalar> DurationParams<T> {
    /// Zero weights, unit variance, kernels at `init` for convolution.
    pub fn new(p: usize, spec: &DurationSpec, init: GammaKernel<T>) -> Self {
        let conv = spec.mean == MeanVariant::Convolution;
        Self {
            weights: vec![T::zero(); p],
            spill_weights: vec![T::zero(); spec.n_spill_weights()],
            lag_presence: vec![T::zero(); spec.lags()],
            kernels: if conv { vec![init; spec.spillover.len()] } else { Vec::new() },
            var: T::one(),
            gamma_shape: T::one(),
        }
    }

    pub fn validate(&self, p: usize, spec: &DurationSpec) -> Result<()> {
        if self.weights.len() != p
            || self.spill_weights.len() != spec.n_spill_weights()
            || self.lag_presence.len() != spec.lags()
        {
            return Err(Error::Parameter("duration parameter dimensions do not match the spec".into()));
        }
        if spec.mean == MeanVariant::Convolution {
            if self.kernels.len() != spec.spillover.len() {
                return Err(Error::Parameter("one gamma kernel per spillover predictor is required".into()));
            }
            for k in &self.kernels {
                k.validate()?;
            }
        }
        if !(self.var > T::zero()) {
            return Err(Error::Parameter(format!("variance must be positive, got {}", self.var)));
        }
        if spec.distribution == Distribution::Gamma && !(self.gamma_shape > T::zero()) {
            return Err(Error::Parameter("gamma shape must be positive".into()));
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weights: vec![T::zero(); self.weights.len()],
            spill_weights: vec![T::zero(); self.spill_weights.len()],
            lag_presence: vec![T::zero(); self.lag_presence.len()],
            kernels: self
                .kernels
                .iter()
                .map(|_| GammaKernel {
                    shape: T::zero(),
                    rate: T::zero(),
                    shift: T::zero(),
                })
                .collect(),
            var: T::zero(),
            gamma_shape: T::zero(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> DurationParams<U> {
        let v = |x: &[T]| x.iter().map(|&e| U::of(e.as_f64())).collect::<Vec<U>>();
        let c = |x: T| U::of(x.as_f64());
        DurationParams {
            weights: v(&self.weights),
            spill_weights: v(&self.spill_weights),
            lag_presence: v(&self.lag_presence),
            kernels: self
                .kernels
                .iter()
                .map(|k| GammaKernel {
                    shape: c(k.shape),
                    rate: c(k.rate),
                    shift: c(k.shift),
                })
                .collect(),
            var: c(self.var),
            gamma_shape: c(self.gamma_shape),
        }
    }
}

fn spill_value<T: Scalar>(ev: &Events<T>, m: usize, src: SpilloverSource) -> T {
    match src {
        SpilloverSource::Column(c) => ev.rows[m][c],
        SpilloverSource::Duration => ev.durations[m],
    }
}

fn kernel_lags<T: Scalar>(ev: &Events<T>, n: usize, clock: KernelClock) -> Vec<T> {
    match clock {
        KernelClock::Onset => (0..n).map(|m| ev.onsets[n] - ev.onsets[m]).collect(),
        KernelClock::Saccade => {
            let tau = ev.saccade_clock();
            (0..n).map(|m| tau[n] - tau[m]).collect()
        }
    }
}

/// Convolutional log-mean of fixation `n` (0-based).
pub fn conv_mean<T: Scalar>(n: usize, ev: &Events<T>, spec: &DurationSpec, params: &DurationParams<T>) -> T {
    let mut xi = dot(&ev.rows[n], &params.weights);
    if spec.mean != MeanVariant::Convolution || n == 0 {
        return xi;
    }
    let lags = kernel_lags(ev, n, spec.clock);
    for (k, &src) in spec.spillover.iter().enumerate() {
        let kernel = &params.kernels[k];
        let s = (0..n).fold(T::zero(), |acc, m| acc + spill_value(ev, m, src) * kernel.eval(lags[m]));
        xi = xi + params.spill_weights[k] * s;
    }
    xi
}

/// Markov log-mean of fixation `n` (0-based) with `lags` earlier fixations.
/// Lags reaching before the start of the scanpath contribute nothing.
pub fn markov_mean<T: Scalar>(n: usize, ev: &Events<T>, spec: &DurationSpec, params: &DurationParams<T>) -> T {
    let mut xi = dot(&ev.rows[n], &params.weights);
    let kk = spec.spillover.len();
    for lag in 1..=spec.lags().min(n) {
        let m = n - lag;
        xi = xi + params.lag_presence[lag - 1];
        for (k, &src) in spec.spillover.iter().enumerate() {
            xi = xi + spill_value(ev, m, src) * params.spill_weights[(lag - 1) * kk + k];
        }
    }
    xi
}

pub fn log_mean<T: Scalar>(n: usize, ev: &Events<T>, spec: &DurationSpec, params: &DurationParams<T>) -> T {
    match spec.mean {
        MeanVariant::Plain | MeanVariant::Convolution => conv_mean(n, ev, spec, params),
        MeanVariant::Markov { .. } => markov_mean(n, ev, spec, params),
    }
}

/// `log g(d)` for a log-normal with log-mean `xi` and log-variance `var`.
pub fn lognormal_logpdf<T: Scalar>(d: T, xi: T, var: T) -> Result<T> {
    if !(d > T::zero()) {
        return Err(Error::Domain(format!("duration must be positive, got {d}")));
    }
    let z = d.ln() - xi;
    Ok(-d.ln() - T::of(0.5) * (T::of(2.0) * T::PI() * var).ln() - z * z / (T::of(2.0) * var))
}

/// `log g(d)` for a gamma distribution with mean `e^xi` and the given shape.
pub fn gamma_logpdf<T: Scalar>(d: T, xi: T, shape: T) -> Result<T> {
    if !(d > T::zero()) {
        return Err(Error::Domain(format!("duration must be positive, got {d}")));
    }
    let rate = shape * (-xi).exp();
    Ok(shape * rate.ln() - shape.ln_gamma() + (shape - T::one()) * d.ln() - rate * d)
}

fn logpdf<T: Scalar>(d: T, xi: T, spec: &DurationSpec, params: &DurationParams<T>) -> Result<T> {
    match spec.distribution {
        Distribution::LogNormal => lognormal_logpdf(d, xi, params.var),
        Distribution::Gamma => gamma_logpdf(d, xi, params.gamma_shape),
    }
}

pub fn duration_loglik<T: Scalar>(ev: &Events<T>, spec: &DurationSpec, params: &DurationParams<T>) -> Result<Loglik<T>> {
    Ok(evaluate(ev, spec, params, false)?.0)
}

/// Log-likelihood and its gradient in every parameter, summed over fixations.
pub fn duration_loglik_grad<T: Scalar>(
    ev: &Events<T>,
    spec: &DurationSpec,
    params: &DurationParams<T>,
) -> Result<(Loglik<T>, DurationParams<T>)> {
    let (ll, g) = evaluate(ev, spec, params, true)?;
    Ok((ll, g.expect("gradient requested")))
}

fn evaluate<T: Scalar>(
    ev: &Events<T>,
    spec: &DurationSpec,
    params: &DurationParams<T>,
    want_grad: bool,
) -> Result<(Loglik<T>, Option<DurationParams<T>>)> {
    let p = ev.width();
    if !ev.is_empty() {
        spec.validate(p)?;
        params.validate(p, spec)?;
    }
    let mut grad = want_grad.then(|| params.zeros_like());
    let mut terms = Vec::with_capacity(ev.len());
    let kk = spec.spillover.len();
    let half = T::of(0.5);
    for n in 0..ev.len() {
        let d = ev.durations[n];
        let xi = log_mean(n, ev, spec, params);
        let term = logpdf(d, xi, spec, params)
            .map_err(|e| Error::Domain(format!("scanpath {} fixation {n}: {e}", ev.key)))?;
        terms.push(term);
        let Some(g) = grad.as_mut() else { continue };
        let (g_xi, ld) = match spec.distribution {
            Distribution::LogNormal => {
                let z = d.ln() - xi;
                let v = params.var;
                g.var = g.var - half / v + z * z / (T::of(2.0) * v * v);
                (z / v, T::zero())
            }
            Distribution::Gamma => {
                let k = params.gamma_shape;
                let ratio = d * (-xi).exp();
                g.gamma_shape = g.gamma_shape + k.ln() + T::one() - xi - k.digamma() + d.ln() - ratio;
                (k * (ratio - T::one()), T::zero())
            }
        };
        let _ = ld;
        for (gw, &x) in g.weights.iter_mut().zip(&ev.rows[n]) {
            *gw = *gw + g_xi * x;
        }
        match spec.mean {
            MeanVariant::Plain => {}
            MeanVariant::Convolution => {
                if n == 0 {
                    continue;
                }
                let lags = kernel_lags(ev, n, spec.clock);
                for (k, &src) in spec.spillover.iter().enumerate() {
                    let kernel = &params.kernels[k];
                    let mut s = T::zero();
                    let mut ds = [T::zero(); 3];
                    for m in 0..n {
                        let x = spill_value(ev, m, src);
                        let (v, dv) = kernel.eval_grad(lags[m]);
                        s = s + x * v;
                        for i in 0..3 {
                            ds[i] = ds[i] + x * dv[i];
                        }
                    }
                    let w = params.spill_weights[k];
                    g.spill_weights[k] = g.spill_weights[k] + g_xi * s;
                    let gk = &mut g.kernels[k];
                    gk.shape = gk.shape + g_xi * w * ds[0];
                    gk.rate = gk.rate + g_xi * w * ds[1];
                    gk.shift = gk.shift + g_xi * w * ds[2];
                }
            }
            MeanVariant::Markov { lags } => {
                for lag in 1..=lags.min(n) {
                    let m = n - lag;
                    g.lag_presence[lag - 1] = g.lag_presence[lag - 1] + g_xi;
                    for (k, &src) in spec.spillover.iter().enumerate() {
                        let i = (lag - 1) * kk + k;
                        g.spill_weights[i] = g.spill_weights[i] + g_xi * spill_value(ev, m, src);
                    }
                }
            }
        }
    }
    let neg_inf = terms.iter().filter(|t| **t == T::neg_infinity()).count();
    let total = terms.iter().fold(T::zero(), |a, &b| a + b);
    Ok((
        Loglik {
            total,
            per_event: terms,
            neg_inf,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DesignMatrix, Fixation, Scanpath};

    fn kernel(a: f64, b: f64, t: f64) -> GammaKernel<f64> {
        GammaKernel::new(a, b, t).unwrap()
    }

    fn events(onsets: &[f64], durations: &[f64], rows: Vec<Vec<f64>>) -> Events<f64> {
        let f = onsets
            .iter()
            .zip(durations)
            .map(|(&t, &d)| Fixation::new(t, 0.0, 0.0, d))
            .collect();
        let sp = Scanpath::new("r", "t", f).unwrap();
        let p = rows.first().map_or(1, Vec::len);
        let columns = (0..p)
            .map(|i| {
                if i == 0 {
                    crate::data::ColumnKind::Intercept
                } else {
                    crate::data::ColumnKind::Effect(format!("e{i}"))
                }
            })
            .collect();
        let design = DesignMatrix::from_rows(columns, rows).unwrap();
        Events::new(&sp, Some(&design)).unwrap()
    }

    #[test]
    fn gamma_kernel_value() {
        let v = gamma_kernel(1.0, &kernel(2.0, 3.0, 0.0)).unwrap();
        assert!((v - 9.0 * (-3.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.448_084).abs() < 1e-6);
    }

    #[test]
    fn gamma_kernel_rejects_shape_at_most_one() {
        assert!(matches!(GammaKernel::new(1.0, 1.0, 0.0), Err(Error::Parameter(_))));
        let bad = GammaKernel {
            shape: 0.5,
            rate: 1.0,
            shift: 0.0,
        };
        assert!(gamma_kernel(0.3, &bad).is_err());
    }

    #[test]
    fn lognormal_values() {
        let v = lognormal_logpdf::<f64>(1.0, 0.0, 1.0).unwrap();
        assert!((v + 0.918_938_533_204_672_7).abs() < 1e-15);
        // Centered: only the normalizing terms remain.
        let xi: f64 = -1.7;
        let c = lognormal_logpdf(xi.exp(), xi, 0.3).unwrap();
        assert!((c - (-xi - 0.5 * (2.0 * std::f64::consts::PI * 0.3).ln())).abs() < 1e-14);
        assert!(matches!(lognormal_logpdf(0.0, 0.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn wider_variance_lowers_the_mode() {
        let mut prev = f64::INFINITY;
        for var in [0.05, 0.1, 0.5, 2.0] {
            let v = lognormal_logpdf(0.2f64.exp(), 0.2, var).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn conv_mean_examples() {
        let ev = events(&[0.0, 1.0], &[0.2, 0.2], vec![vec![1.0, 1.0], vec![1.0, 0.5]]);
        let mut params = DurationParams::new(2, &DurationSpec::convolution(vec![SpilloverSource::Column(1)]), kernel(2.0, 3.0, 0.0));
        params.weights = vec![-1.5, 0.2];
        params.spill_weights = vec![1.0];
        let base = -1.5 + 0.2 * 0.5;
        let spec = DurationSpec::convolution(vec![SpilloverSource::Column(1)]);
        assert!((conv_mean(1, &ev, &spec, &params) - (base + 0.448_083_615_310_775_5)).abs() < 1e-12);
        assert_eq!(conv_mean(1, &ev, &DurationSpec::plain(), &params), base);
        let zero = events(&[0.0, 1.0], &[0.2, 0.2], vec![vec![1.0, 0.0], vec![1.0, 0.5]]);
        assert_eq!(conv_mean(1, &zero, &spec, &params), base);
    }

    #[test]
    fn markov_mean_examples() {
        let ev = events(&[0.0, 0.5, 1.0], &[0.2, 0.2, 0.2], vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 3.0]]);
        let spec = DurationSpec::markov(2, vec![SpilloverSource::Column(1)]);
        let mut params = DurationParams::new(2, &spec, kernel(2.0, 3.0, 0.0));
        params.weights = vec![-1.0, 0.1];
        params.spill_weights = vec![0.5, 0.25];
        let base = -1.0 + 0.3;
        assert!((markov_mean(2, &ev, &spec, &params) - (base + 0.75)).abs() < 1e-15);
        // First fixation: every lag is masked.
        assert_eq!(markov_mean(0, &ev, &spec, &params), -1.0 + 0.1);
        let l0 = DurationSpec::markov(0, vec![SpilloverSource::Column(1)]);
        let p0 = DurationParams::new(2, &l0, kernel(2.0, 3.0, 0.0));
        assert_eq!(markov_mean(2, &ev, &l0, &DurationParams { weights: params.weights.clone(), ..p0 }), base);
    }

    #[test]
    fn empty_scanpath_loglik_is_zero() {
        let sp = Scanpath::new("r", "t", vec![]).unwrap();
        let ev = Events::<f64>::new(&sp, None).unwrap();
        let p = DurationParams::new(1, &DurationSpec::plain(), kernel(2.0, 3.0, 0.5));
        assert_eq!(duration_loglik(&ev, &DurationSpec::plain(), &p).unwrap().total, 0.0);
    }

    #[test]
    fn zero_spill_weights_match_plain() {
        let ev = events(&[0.0, 0.4, 0.9], &[0.2, 0.25, 0.3], vec![vec![1.0, 2.0]; 3]);
        let conv = DurationSpec::convolution(vec![SpilloverSource::Column(1), SpilloverSource::Duration]);
        let mut p = DurationParams::new(2, &conv, kernel(3.0, 4.0, 0.5));
        p.weights = vec![-1.4, 0.05];
        p.var = 0.3;
        let plain = DurationParams {
            spill_weights: vec![],
            kernels: vec![],
            ..p.clone()
        };
        let a = duration_loglik(&ev, &conv, &p).unwrap().total;
        let b = duration_loglik(&ev, &DurationSpec::plain(), &plain).unwrap().total;
        assert_eq!(a, b);
    }
}
