//! Unconstrained parameterizations of the saccade and duration models.

use crate::duration::{
    assign_coefficients, duration_loglik, duration_loglik_grad, event_rows, least_squares, Distribution,
    DurationParams, DurationSpec, GammaKernel, MeanVariant, SpilloverSource,
};
use crate::error::{Error, Result};
use crate::events::Events;
use crate::geometry::{Point, Rect};
use crate::params::{duration_from_doc, duration_to_doc, saccade_from_doc, saccade_to_doc, ParamDoc};
use crate::saccade::{scanpath_loglik, scanpath_loglik_grad, Block, Loglik, SaccadeParams, SaccadeSpec, Variant};
use crate::scalar::{inv_softplus, sigmoid, softplus};

/// One scanpath with its design rows and screen region.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub events: Events<f64>,
    pub omega: Rect<f64>,
}

impl Sample {
    pub fn new(events: Events<f64>, omega: Rect<f64>) -> Self {
        Self { events, omega }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// A model as seen by the optimizer: a flat vector `θ` of unconstrained
/// parameters, and per-scanpath log-likelihoods with gradients in `θ`.
pub trait Model: Sync {
    fn names(&self) -> Vec<String>;
    /// Which entries of `θ` weight decay applies to.
    fn decayed(&self) -> Vec<bool>;
    fn loglik(&self, theta: &[f64], sample: &Sample) -> Result<Loglik<f64>>;
    fn loglik_grad(&self, theta: &[f64], sample: &Sample) -> Result<(Loglik<f64>, Vec<f64>)>;
    fn to_doc(&self, theta: &[f64]) -> ParamDoc;
    fn from_doc(&self, doc: &ParamDoc) -> Result<Vec<f64>>;
    /// Default starting point.
    fn initial(&self, train: &[Sample]) -> Result<Vec<f64>>;
    /// The exact maximum-likelihood estimate when one exists in closed form.
    fn closed_form(&self, _train: &[Sample]) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }
    /// Post-optimization adjustment on the training data.
    fn finalize(&self, theta: Vec<f64>, _train: &[Sample]) -> Result<Vec<f64>> {
        Ok(theta)
    }
}

// --- saccade ---------------------------------------------------------------

/// Saccade model with its optimizer coordinates.
///
/// `ν = ν₀·softplus(u)` with `ν₀` the Poisson rate of the training data,
/// `σ² = exp(u)`, and `α = κ·u_α`, `β = κ·u_β` with `1/κ` the median gap
/// between onsets on the saccade clock. Spatial parameters are expressed around
/// the centre `c` of the screen and in units of the median saccade length
/// `scale`:
/// `μ = A (s − c) + c + scale·ũ_b + C x`, `A = I + (scale / radius)·U_A`,
/// `C = scale·U_C`, so that a unit step in any spatial coordinate moves the
/// predicted landing site by about `scale` pixels.
#[derive(Debug, Clone)]
pub struct SaccadeModel {
    pub spec: SaccadeSpec,
    pub columns: Vec<String>,
    center: Point<f64>,
    scale: f64,
    radius: f64,
    base_unit: f64,
    rate_unit: f64,
}

struct SaccadeLayout {
    p: usize,
    var: bool,
    hawkes: bool,
    affine: bool,
    full: bool,
}

impl SaccadeModel {
    /// Fixes the reparameterization constants from the training data.
    pub fn new(spec: SaccadeSpec, columns: Vec<String>, train: &[Sample]) -> Self {
        let omega = train.first().map_or(Rect::new(0.0, 0.0, 1.0, 1.0), |s| s.omega);
        let radius = 0.5 * (omega.width.hypot(omega.height));
        let lengths: Vec<f64> = train
            .iter()
            .flat_map(|s| s.events.locations.windows(2).map(|w| w[0].dist2(w[1]).sqrt()))
            .collect();
        let scale = match median(lengths) {
            Some(m) if m > 0.0 => m,
            _ => initial_spatial_var(train).sqrt(),
        };
        let base_unit = Self::poisson_rate(train).unwrap_or(1.0 / omega.area());
        let gaps: Vec<f64> = train
            .iter()
            .flat_map(|s| {
                let c = s.events.saccade_clock();
                let first = c.first().copied();
                first.into_iter().chain(c.windows(2).map(|w| w[1] - w[0])).collect::<Vec<_>>()
            })
            .filter(|g| *g > 0.0)
            .collect();
        let rate_unit = median(gaps).map_or(1.0, |g| 1.0 / g);
        Self {
            spec,
            columns,
            center: omega.center(),
            scale,
            radius,
            base_unit,
            rate_unit,
        }
    }

    fn layout(&self) -> SaccadeLayout {
        SaccadeLayout {
            p: self.columns.len(),
            var: self.spec.uses(Block::SpatialVar),
            hawkes: self.spec.uses(Block::Excitation),
            affine: self.spec.uses(Block::Transform),
            full: self.spec.uses(Block::PredictorOffset),
        }
    }

    fn a_scale(&self) -> f64 {
        self.scale / self.radius
    }

    pub fn params(&self, theta: &[f64]) -> SaccadeParams<f64> {
        let l = self.layout();
        let mut it = theta.iter().copied();
        let mut next = || it.next().expect("θ has the layout's length");
        let mut p = SaccadeParams::new(l.p, 0.0, 1.0, self.spec.link);
        p.base_rate = self.base_unit * softplus(next());
        if l.var {
            p.spatial_var = next().exp();
        }
        if l.hawkes {
            for i in 0..l.p {
                p.excitation[i] = self.rate_unit * next();
            }
            for i in 0..l.p {
                p.decay[i] = self.rate_unit * next();
            }
        }
        if l.affine {
            let ka = self.a_scale();
            for i in 0..2 {
                for j in 0..2 {
                    p.transform[i][j] = if i == j { 1.0 } else { 0.0 } + ka * next();
                }
            }
            let a = p.transform;
            let c = [self.center.x, self.center.y];
            for i in 0..2 {
                p.offset[i] = c[i] - a[i][0] * c[0] - a[i][1] * c[1] + self.scale * next();
            }
        }
        if l.full {
            for i in 0..2 {
                for k in 0..l.p {
                    p.predictor_offset[i][k] = self.scale * next();
                }
            }
        }
        p
    }

    pub fn theta(&self, p: &SaccadeParams<f64>) -> Vec<f64> {
        let l = self.layout();
        let mut t = vec![inv_softplus(p.base_rate / self.base_unit)];
        if l.var {
            t.push(p.spatial_var.ln());
        }
        if l.hawkes {
            t.extend(p.excitation.iter().map(|v| v / self.rate_unit));
            t.extend(p.decay.iter().map(|v| v / self.rate_unit));
        }
        if l.affine {
            let ka = self.a_scale();
            for i in 0..2 {
                for j in 0..2 {
                    t.push((p.transform[i][j] - if i == j { 1.0 } else { 0.0 }) / ka);
                }
            }
            let a = p.transform;
            let c = [self.center.x, self.center.y];
            for i in 0..2 {
                t.push((p.offset[i] - c[i] + a[i][0] * c[0] + a[i][1] * c[1]) / self.scale);
            }
        }
        if l.full {
            for i in 0..2 {
                t.extend(p.predictor_offset[i].iter().map(|v| v / self.scale));
            }
        }
        t
    }

    fn chain(&self, theta: &[f64], p: &SaccadeParams<f64>, g: &SaccadeParams<f64>) -> Vec<f64> {
        let l = self.layout();
        let mut out = vec![g.base_rate * self.base_unit * sigmoid(theta[0])];
        if l.var {
            out.push(g.spatial_var * p.spatial_var);
        }
        if l.hawkes {
            out.extend(g.excitation.iter().map(|v| v * self.rate_unit));
            out.extend(g.decay.iter().map(|v| v * self.rate_unit));
        }
        if l.affine {
            let ka = self.a_scale();
            let c = [self.center.x, self.center.y];
            for i in 0..2 {
                for j in 0..2 {
                    // b depends on A through the centring.
                    out.push(ka * (g.transform[i][j] - g.offset[i] * c[j]));
                }
            }
            for i in 0..2 {
                out.push(self.scale * g.offset[i]);
            }
        }
        if l.full {
            for i in 0..2 {
                out.extend(g.predictor_offset[i].iter().map(|v| v * self.scale));
            }
        }
        out
    }

    /// Poisson MLE `N / Σ |Ω|·(time not spent fixating)`.
    pub fn poisson_rate(train: &[Sample]) -> Result<f64> {
        let n: usize = train.iter().map(Sample::len).sum();
        let exposure: f64 = train
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| s.omega.area() * s.events.saccade_clock().last().copied().unwrap_or(0.0))
            .sum();
        if n == 0 || !(exposure > 0.0) {
            return Err(Error::Validation("the Poisson rate needs at least one fixation after time 0".into()));
        }
        Ok(n as f64 / exposure)
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Population variance of saccade lengths, with a fallback for tiny data.
pub fn initial_spatial_var(train: &[Sample]) -> f64 {
    let norms: Vec<f64> = train
        .iter()
        .flat_map(|s| s.events.locations.windows(2).map(|w| w[0].dist2(w[1]).sqrt()))
        .collect();
    let fallback = || {
        let o = train.first().map_or(Rect::new(0.0, 0.0, 1.0, 1.0), |s| s.omega);
        (0.05 * o.width.hypot(o.height)).powi(2)
    };
    if norms.len() < 2 {
        return fallback();
    }
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    let var = norms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / norms.len() as f64;
    if var > 1e-12 {
        var
    } else {
        fallback()
    }
}

impl Model for SaccadeModel {
    fn names(&self) -> Vec<String> {
        let l = self.layout();
        let mut n = vec!["base_rate".to_string()];
        if l.var {
            n.push("spatial_var".into());
        }
        if l.hawkes {
            n.extend(self.columns.iter().map(|c| format!("alpha[{c}]")));
            n.extend(self.columns.iter().map(|c| format!("beta[{c}]")));
        }
        if l.affine {
            for i in ["x", "y"] {
                for j in ["x", "y"] {
                    n.push(format!("A[{i},{j}]"));
                }
            }
            n.extend(["b[x]".to_string(), "b[y]".to_string()]);
        }
        if l.full {
            for i in ["x", "y"] {
                n.extend(self.columns.iter().map(|c| format!("C[{i},{c}]")));
            }
        }
        n
    }

    fn decayed(&self) -> Vec<bool> {
        let is_intercept = |name: &str| name.contains("[intercept]") || name.ends_with(",intercept]");
        self.names()
            .iter()
            .map(|n| {
                let decays = n.starts_with("alpha[") || n.starts_with("beta[") || n.starts_with("A[") || n.starts_with("C[");
                decays && !is_intercept(n)
            })
            .collect()
    }

    fn loglik(&self, theta: &[f64], s: &Sample) -> Result<Loglik<f64>> {
        scanpath_loglik(&s.events, &self.spec, &self.params(theta), &s.omega)
    }

    fn loglik_grad(&self, theta: &[f64], s: &Sample) -> Result<(Loglik<f64>, Vec<f64>)> {
        let p = self.params(theta);
        let (ll, g) = scanpath_loglik_grad(&s.events, &self.spec, &p, &s.omega)?;
        Ok((ll, self.chain(theta, &p, &g)))
    }

    fn to_doc(&self, theta: &[f64]) -> ParamDoc {
        saccade_to_doc(&self.spec, &self.columns, &self.params(theta))
    }

    fn from_doc(&self, doc: &ParamDoc) -> Result<Vec<f64>> {
        let (spec, columns, params) = saccade_from_doc(doc)?;
        if spec != self.spec || columns != self.columns {
            return Err(Error::Usage("parameter document does not match the model specification".into()));
        }
        Ok(self.theta(&params))
    }

    fn initial(&self, train: &[Sample]) -> Result<Vec<f64>> {
        let nu = Self::poisson_rate(train)?;
        let p = SaccadeParams::new(self.columns.len(), nu, self.scale * self.scale, self.spec.link);
        Ok(self.theta(&p))
    }

    fn closed_form(&self, train: &[Sample]) -> Result<Option<Vec<f64>>> {
        if self.spec.variant != Variant::Poisson {
            return Ok(None);
        }
        let p = SaccadeParams::new(self.columns.len(), Self::poisson_rate(train)?, 1.0, self.spec.link);
        Ok(Some(self.theta(&p)))
    }
}

// --- duration --------------------------------------------------------------

/// Duration model with its optimizer coordinates: raw linear weights,
/// `α_k = 1 + softplus(a_k)`, `β_k = softplus(b_k)`, `θ_k = softplus(c_k)`,
/// and `σ²` (or the gamma shape) as `exp(u)`.
#[derive(Debug, Clone)]
pub struct DurationModel {
    pub spec: DurationSpec,
    pub columns: Vec<String>,
    /// Starting kernel for each spillover predictor.
    pub kernel_init: Vec<GammaKernel<f64>>,
}

impl DurationModel {
    pub fn new(spec: DurationSpec, columns: Vec<String>, kernel_init: Vec<GammaKernel<f64>>) -> Result<Self> {
        spec.validate(columns.len())?;
        let need = if spec.mean == MeanVariant::Convolution { spec.spillover.len() } else { 0 };
        let kernel_init = if kernel_init.len() == need {
            kernel_init
        } else if kernel_init.len() == 1 {
            vec![kernel_init[0]; need]
        } else if kernel_init.is_empty() {
            vec![default_kernel(); need]
        } else {
            return Err(Error::Usage(format!(
                "{} kernel initializations given for {need} spillover predictors",
                kernel_init.len()
            )));
        };
        for k in &kernel_init {
            k.validate()?;
        }
        Ok(Self {
            spec,
            columns,
            kernel_init,
        })
    }

    pub fn params(&self, theta: &[f64]) -> DurationParams<f64> {
        let mut it = theta.iter().copied();
        let mut next = || it.next().expect("θ has the layout's length");
        let mut p = DurationParams::new(self.columns.len(), &self.spec, default_kernel());
        for w in p.weights.iter_mut() {
            *w = next();
        }
        for w in p.spill_weights.iter_mut() {
            *w = next();
        }
        for w in p.lag_presence.iter_mut() {
            *w = next();
        }
        for k in p.kernels.iter_mut() {
            k.shape = 1.0 + softplus(next());
            k.rate = softplus(next());
            k.shift = softplus(next());
        }
        let u = next().exp();
        match self.spec.distribution {
            Distribution::LogNormal => p.var = u,
            Distribution::Gamma => p.gamma_shape = u,
        }
        p
    }

    pub fn theta(&self, p: &DurationParams<f64>) -> Vec<f64> {
        let mut t = p.weights.clone();
        t.extend(&p.spill_weights);
        t.extend(&p.lag_presence);
        for k in &p.kernels {
            t.extend([inv_softplus(k.shape - 1.0), inv_softplus(k.rate), inv_softplus(k.shift)]);
        }
        t.push(match self.spec.distribution {
            Distribution::LogNormal => p.var.ln(),
            Distribution::Gamma => p.gamma_shape.ln(),
        });
        t
    }

    fn linear_rows(&self, train: &[Sample]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let spec = match self.spec.mean {
            MeanVariant::Convolution => DurationSpec::plain(),
            _ => self.spec.clone(),
        };
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for s in train {
            rows.extend(event_rows(&s.events, &spec));
            y.extend(s.events.durations.iter().map(|d| d.ln()));
        }
        (rows, y)
    }

    /// Least-squares fit of the linear part (the whole model for plain and
    /// Markov means).
    fn least_squares_params(&self, train: &[Sample]) -> Result<DurationParams<f64>> {
        let (rows, y) = self.linear_rows(train);
        if y.is_empty() {
            return Err(Error::Validation("no fixations to fit".into()));
        }
        let q = rows[0].len();
        let (kept, coef) = least_squares(&rows, &y, q);
        let mut beta = vec![0.0; q];
        for (&c, &b) in kept.iter().zip(&coef) {
            beta[c] = b;
        }
        let rss: f64 = rows
            .iter()
            .zip(&y)
            .map(|(r, yi)| {
                let m: f64 = r.iter().zip(&beta).map(|(a, b)| a * b).sum();
                (yi - m).powi(2)
            })
            .sum();
        let mut p = DurationParams::new(self.columns.len(), &self.spec, default_kernel());
        if self.spec.mean == MeanVariant::Convolution {
            p.weights.copy_from_slice(&beta);
            p.kernels = self.kernel_init.clone();
        } else {
            assign_coefficients(&mut p, &beta, &self.spec);
        }
        p.var = (rss / y.len() as f64).max(1e-12);
        p.gamma_shape = 1.0 / p.var;
        Ok(p)
    }
}

/// Kernel used when no initialization is configured.
pub fn default_kernel() -> GammaKernel<f64> {
    GammaKernel {
        shape: 2.0,
        rate: 5.0,
        shift: 0.05,
    }
}

impl Model for DurationModel {
    fn names(&self) -> Vec<String> {
        let spill: Vec<String> = self
            .spec
            .spillover
            .iter()
            .map(|s| match s {
                SpilloverSource::Column(c) => self.columns[*c].clone(),
                SpilloverSource::Duration => "duration".into(),
            })
            .collect();
        let mut out: Vec<String> = self.columns.iter().map(|c| format!("w[{c}]")).collect();
        match self.spec.mean {
            MeanVariant::Plain => {}
            MeanVariant::Convolution => out.extend(spill.iter().map(|k| format!("w'[{k}]"))),
            MeanVariant::Markov { lags } => {
                for j in 1..=lags {
                    out.extend(spill.iter().map(|k| format!("w'[lag{j},{k}]")));
                }
                out.extend((1..=lags).map(|j| format!("presence[lag{j}]")));
            }
        }
        if self.spec.mean == MeanVariant::Convolution {
            for k in &spill {
                for part in ["alpha", "beta", "theta"] {
                    out.push(format!("kernel[{k}].{part}.raw"));
                }
            }
        }
        out.push(match self.spec.distribution {
            Distribution::LogNormal => "log_var".into(),
            Distribution::Gamma => "log_gamma_shape".into(),
        });
        out
    }

    fn decayed(&self) -> Vec<bool> {
        self.names()
            .iter()
            .map(|n| (n.starts_with("w[") && n != "w[intercept]") || n.starts_with("w'["))
            .collect()
    }

    fn loglik(&self, theta: &[f64], s: &Sample) -> Result<Loglik<f64>> {
        duration_loglik(&s.events, &self.spec, &self.params(theta))
    }

    fn loglik_grad(&self, theta: &[f64], s: &Sample) -> Result<(Loglik<f64>, Vec<f64>)> {
        let p = self.params(theta);
        let (ll, g) = duration_loglik_grad(&s.events, &self.spec, &p)?;
        let mut out = g.weights.clone();
        out.extend(&g.spill_weights);
        out.extend(&g.lag_presence);
        let mut i = p.weights.len() + p.spill_weights.len() + p.lag_presence.len();
        for gk in &g.kernels {
            out.extend([gk.shape * sigmoid(theta[i]), gk.rate * sigmoid(theta[i + 1]), gk.shift * sigmoid(theta[i + 2])]);
            i += 3;
        }
        out.push(match self.spec.distribution {
            Distribution::LogNormal => g.var * p.var,
            Distribution::Gamma => g.gamma_shape * p.gamma_shape,
        });
        Ok((ll, out))
    }

    fn to_doc(&self, theta: &[f64]) -> ParamDoc {
        duration_to_doc(&self.spec, &self.columns, &self.params(theta))
    }

    fn from_doc(&self, doc: &ParamDoc) -> Result<Vec<f64>> {
        let (spec, columns, params) = duration_from_doc(doc)?;
        if spec != self.spec || columns != self.columns {
            return Err(Error::Usage("parameter document does not match the model specification".into()));
        }
        Ok(self.theta(&params))
    }

    fn initial(&self, train: &[Sample]) -> Result<Vec<f64>> {
        Ok(self.theta(&self.least_squares_params(train)?))
    }

    fn closed_form(&self, train: &[Sample]) -> Result<Option<Vec<f64>>> {
        if self.spec.mean == MeanVariant::Convolution || self.spec.distribution != Distribution::LogNormal {
            return Ok(None);
        }
        Ok(Some(self.theta(&self.least_squares_params(train)?)))
    }

    /// Log-normal variance profiled out given the fitted means.
    fn finalize(&self, theta: Vec<f64>, train: &[Sample]) -> Result<Vec<f64>> {
        if self.spec.distribution != Distribution::LogNormal {
            return Ok(theta);
        }
        let mut p = self.params(&theta);
        let mut ss = 0.0;
        let mut n = 0usize;
        for s in train {
            for i in 0..s.len() {
                let xi = crate::duration::log_mean(i, &s.events, &self.spec, &p);
                ss += (s.events.durations[i].ln() - xi).powi(2);
                n += 1;
            }
        }
        if n > 0 && ss > 0.0 {
            p.var = ss / n as f64;
        }
        Ok(self.theta(&p))
    }
}
