use crate::error::{Error, Result};
use crate::events::Events;
use crate::geometry::{GaussianMass, Point, Rect};
use crate::saccade::{dot, spatial_density, spatial_mean, SaccadeParams, SaccadeSpec, Variant};
use crate::scalar::Scalar;

/// Kernel left behind by one past fixation.
#[derive(Debug, Clone, Copy)]
pub struct Component<T> {
    /// Saccade-clock time at the fixation's onset.
    pub clock: T,
    /// `h(xᵀα)`; 1 for the last-fixation baseline.
    pub strength: T,
    /// `h(xᵀβ)`; 0 for the last-fixation baseline.
    pub rate: T,
    pub mean: Point<T>,
    pub mass: GaussianMass<T>,
}

/// Intensity bookkeeping for a growing history.
///
/// Holds one [`Component`] per past fixation together with the total
/// fixation time so far, which converts wall-clock times to the saccade
/// clock.
#[derive(Debug, Clone)]
pub struct KernelState<T> {
    spec: SaccadeSpec,
    params: SaccadeParams<T>,
    omega: Rect<T>,
    components: Vec<Component<T>>,
    fixation_time: T,
    end: T,
}

impl<T: Scalar> KernelState<T> {
    pub fn new(spec: &SaccadeSpec, params: &SaccadeParams<T>, omega: Rect<T>) -> Self {
        Self {
            spec: spec.clone(),
            params: params.clone(),
            omega,
            components: Vec::new(),
            fixation_time: T::zero(),
            end: T::zero(),
        }
    }

    pub fn from_history(
        history: &Events<T>,
        spec: &SaccadeSpec,
        params: &SaccadeParams<T>,
        omega: Rect<T>,
    ) -> Self {
        let mut state = Self::new(spec, params, omega);
        for i in 0..history.len() {
            state.push(
                history.onsets[i],
                history.locations[i],
                history.durations[i],
                &history.rows[i],
            );
        }
        state
    }

    pub fn push(&mut self, onset: T, location: Point<T>, duration: T, row: &[T]) {
        let link = self.spec.link;
        let p = &self.params;
        let (strength, rate, mean) = match self.spec.variant {
            Variant::Hawkes => (
                p.excitation_strength(row, link),
                p.decay_rate(row, link),
                spatial_mean(location, row, self.spec.mean_fn, p),
            ),
            _ => (T::one(), T::zero(), location),
        };
        self.components.push(Component {
            clock: onset - self.fixation_time,
            strength,
            rate,
            mean,
            mass: self.omega.gaussian_mass(mean, p.spatial_var),
        });
        self.fixation_time = self.fixation_time + duration;
        self.end = onset + duration;
    }

    /// End of the last fixation (0 for an empty history).
    pub fn end(&self) -> T {
        self.end
    }

    pub fn omega(&self) -> &Rect<T> {
        &self.omega
    }

    pub fn base_rate(&self) -> T {
        self.params.base_rate
    }

    pub fn spatial_var(&self) -> T {
        self.params.spatial_var
    }

    /// Components that contribute to the next event's intensity.
    pub fn active(&self) -> &[Component<T>] {
        match self.spec.variant {
            Variant::Poisson => &[],
            Variant::LastFixation => {
                let n = self.components.len();
                &self.components[n.saturating_sub(1)..]
            }
            Variant::Hawkes => &self.components,
        }
    }

    /// Saccade-clock value of wall-clock time `t` (valid after `end()`).
    pub fn clock(&self, t: T) -> T {
        t - self.fixation_time
    }

    /// Temporal weight `φ_m(Δ)` of each active component at time `t`.
    pub fn temporal_weights(&self, t: T) -> Vec<T> {
        let now = self.clock(t);
        self.active()
            .iter()
            .map(|c| c.strength * (-c.rate * (now - c.clock)).exp())
            .collect()
    }

    pub fn intensity(&self, t: T, s: Point<T>) -> T {
        let var = self.params.spatial_var;
        self.temporal_weights(t)
            .iter()
            .zip(self.active())
            .fold(self.params.base_rate, |acc, (&w, c)| {
                acc + w * spatial_density(s, c.mean, var)
            })
    }

    /// `∫_Ω λ(t, s) ds`.
    pub fn marginal_rate(&self, t: T) -> T {
        let background = if self.params.base_rate == T::zero() {
            T::zero()
        } else {
            self.params.base_rate * self.omega.area()
        };
        self.temporal_weights(t)
            .iter()
            .zip(self.active())
            .fold(background, |acc, (&w, c)| acc + w * c.mass.mass)
    }

    /// `∫_{end}^{t} ∫_Ω λ`.
    pub fn compensator(&self, t: T) -> T {
        let gap = t - self.end;
        let mut total = if self.params.base_rate == T::zero() {
            T::zero()
        } else {
            self.params.base_rate * self.omega.area() * gap
        };
        let lo = self.clock(self.end);
        for c in self.active() {
            let f = exposure(c.rate, lo - c.clock, gap);
            total = total + c.mass.mass * c.strength * f;
        }
        total
    }
}

/// `∫_{lo}^{lo+gap} e^{−rate·u} du`, with the linear limit at rate 0.
fn exposure<T: Scalar>(rate: T, lo: T, gap: T) -> T {
    if rate == T::zero() {
        return gap;
    }
    (-rate * lo).exp() * (-(-rate * gap).exp_m1()) / rate
}

/// `∫_0^{gap} v e^{−rate·v} dv`, by series when `rate·gap` is small.
fn first_moment<T: Scalar>(rate: T, gap: T) -> T {
    let x = rate * gap;
    if x < T::of(0.1) {
        // g² Σ_k (−x)^k / (k! (k+2))
        let mut term = T::one();
        let mut sum = T::zero();
        for k in 0..16 {
            let kf = T::of(k as f64);
            if k > 0 {
                term = term * (-x) / kf;
            }
            sum = sum + term / (kf + T::of(2.0));
        }
        gap * gap * sum
    } else {
        (T::one() - (-x).exp() * (T::one() + x)) / (rate * rate)
    }
}

/// Intensity of the next fixation at `(t, s)` given a completed history.
pub fn intensity<T: Scalar>(
    t: T,
    s: Point<T>,
    history: &Events<T>,
    spec: &SaccadeSpec,
    params: &SaccadeParams<T>,
) -> Result<T> {
    let state = KernelState::from_history(history, spec, params, Rect::unbounded());
    if t < state.end() {
        return Err(Error::Domain(format!(
            "time {t} falls inside the fixation ending at {}",
            state.end()
        )));
    }
    Ok(state.intensity(t, s))
}

/// `Λ(t; history)`: expected number of events in `[end of history, t] × Ω`.
pub fn compensator<T: Scalar>(
    t: T,
    history: &Events<T>,
    spec: &SaccadeSpec,
    params: &SaccadeParams<T>,
    omega: &Rect<T>,
) -> Result<T> {
    let state = KernelState::from_history(history, spec, params, *omega);
    if t < state.end() {
        return Err(Error::Domain(format!(
            "time {t} precedes the end of the last fixation at {}",
            state.end()
        )));
    }
    Ok(state.compensator(t))
}

/// `log λ(t, s) − Λ(t)`; `−∞` before the last fixation ends or outside Ω.
pub fn log_density<T: Scalar>(
    t: T,
    s: Point<T>,
    history: &Events<T>,
    spec: &SaccadeSpec,
    params: &SaccadeParams<T>,
    omega: &Rect<T>,
) -> T {
    let state = KernelState::from_history(history, spec, params, *omega);
    if t < state.end() || !omega.contains_closed(s) {
        return T::neg_infinity();
    }
    state.intensity(t, s).ln() - state.compensator(t)
}

/// Per-fixation log-densities of a scanpath.
#[derive(Debug, Clone, PartialEq)]
pub struct Loglik<T> {
    pub total: T,
    pub per_event: Vec<T>,
    /// Events with zero intensity (log-density `−∞`).
    pub neg_inf: usize,
}

impl<T: Scalar> Loglik<T> {
    fn from_terms(per_event: Vec<T>) -> Self {
        let neg_inf = per_event.iter().filter(|v| **v == T::neg_infinity()).count();
        let total = per_event.iter().fold(T::zero(), |a, &b| a + b);
        Self {
            total,
            per_event,
            neg_inf,
        }
    }
}

pub fn scanpath_loglik<T: Scalar>(
    events: &Events<T>,
    spec: &SaccadeSpec,
    params: &SaccadeParams<T>,
    omega: &Rect<T>,
) -> Result<Loglik<T>> {
    Ok(evaluate(events, spec, params, omega, false)?.0)
}

/// Log-likelihood plus its gradient with respect to every parameter
/// (summed over events). Events with log-density `−∞` contribute no
/// gradient.
pub fn scanpath_loglik_grad<T: Scalar>(
    events: &Events<T>,
    spec: &SaccadeSpec,
    params: &SaccadeParams<T>,
    omega: &Rect<T>,
) -> Result<(Loglik<T>, SaccadeParams<T>)> {
    let (ll, grad) = evaluate(events, spec, params, omega, true)?;
    Ok((ll, grad.expect("gradient requested")))
}

struct Scratch<T> {
    m: usize,
    psi: T,
    e_hi: T,
    d_hi: T,
    d_lo: T,
    g0: T,
    f: T,
    r: Point<T>,
}

fn evaluate<T: Scalar>(
    ev: &Events<T>,
    spec: &SaccadeSpec,
    params: &SaccadeParams<T>,
    omega: &Rect<T>,
    want_grad: bool,
) -> Result<(Loglik<T>, Option<SaccadeParams<T>>)> {
    let n = ev.len();
    let p = params.width();
    if spec.variant == Variant::Hawkes && n > 0 {
        params.validate(ev.width())?;
    }
    let link = spec.link;
    let var = params.spatial_var;
    let two = T::of(2.0);
    let area = omega.area();
    let clock = ev.saccade_clock();

    // Per-fixation kernel pieces; they depend on m only.
    let mut comps: Vec<Component<T>> = Vec::with_capacity(n);
    let mut pre: Vec<(T, T)> = Vec::with_capacity(n);
    for m in 0..n {
        let x = &ev.rows[m];
        let (za, zb) = if spec.variant == Variant::Hawkes {
            (dot(x, &params.excitation), dot(x, &params.decay))
        } else {
            (T::zero(), T::zero())
        };
        let (strength, rate, mean) = match spec.variant {
            Variant::Hawkes => (
                link.apply(za),
                link.apply(zb),
                spatial_mean(ev.locations[m], x, spec.mean_fn, params),
            ),
            _ => (T::one(), T::zero(), ev.locations[m]),
        };
        let mass = if spec.variant == Variant::Poisson {
            GaussianMass {
                mass: T::zero(),
                d_mean: Point::new(T::zero(), T::zero()),
                d_var: T::zero(),
            }
        } else {
            omega.gaussian_mass(mean, var)
        };
        comps.push(Component {
            clock: clock[m],
            strength,
            rate,
            mean,
            mass,
        });
        pre.push((za, zb));
    }

    let mut grad = want_grad.then(|| SaccadeParams::zeros(p));
    let mut g_strength = vec![T::zero(); n];
    let mut g_rate = vec![T::zero(); n];
    let mut g_mean = vec![Point::new(T::zero(), T::zero()); n];
    let mut g_var = T::zero();
    let mut g_nu = T::zero();

    let mut terms = Vec::with_capacity(n);
    let mut scratch: Vec<Scratch<T>> = Vec::new();
    for i in 0..n {
        let lo = if i == 0 { T::zero() } else { clock[i - 1] };
        let hi = clock[i];
        let gap = hi - lo;
        if gap < T::zero() || !omega.contains_closed(ev.locations[i]) {
            terms.push(T::neg_infinity());
            continue;
        }
        let s = ev.locations[i];
        let active = match spec.variant {
            Variant::Poisson => 0..0,
            Variant::LastFixation => i.saturating_sub(1)..i,
            Variant::Hawkes => 0..i,
        };
        let mut lambda = params.base_rate;
        let mut big_lambda = if params.base_rate == T::zero() {
            T::zero()
        } else {
            params.base_rate * area * gap
        };
        scratch.clear();
        for m in active {
            let c = &comps[m];
            let d_hi = hi - c.clock;
            let d_lo = lo - c.clock;
            let e_hi = (-c.rate * d_hi).exp();
            let psi = spatial_density(s, c.mean, var);
            lambda = lambda + c.strength * e_hi * psi;
            let g0 = if c.rate == T::zero() {
                gap
            } else {
                -(-c.rate * gap).exp_m1() / c.rate
            };
            let f = (-c.rate * d_lo).exp() * g0;
            big_lambda = big_lambda + c.mass.mass * c.strength * f;
            if want_grad {
                scratch.push(Scratch {
                    m,
                    psi,
                    e_hi,
                    d_hi,
                    d_lo,
                    g0,
                    f,
                    r: Point::new(s.x - c.mean.x, s.y - c.mean.y),
                });
            }
        }
        let term = lambda.ln() - big_lambda;
        terms.push(term);
        if !want_grad || !term.is_finite() {
            continue;
        }
        let inv = T::one() / lambda;
        g_nu = g_nu + inv - if params.base_rate == T::zero() && area.is_infinite() {
            T::zero()
        } else {
            area * gap
        };
        for sc in &scratch {
            let c = &comps[sc.m];
            let k = c.strength * sc.e_hi * sc.psi;
            let share = k * inv;
            g_strength[sc.m] = g_strength[sc.m] + sc.e_hi * sc.psi * inv - c.mass.mass * sc.f;
            let df_drate = -(-c.rate * sc.d_lo).exp() * (sc.d_lo * sc.g0 + first_moment(c.rate, gap));
            g_rate[sc.m] = g_rate[sc.m] - c.strength * sc.d_hi * sc.e_hi * sc.psi * inv
                - c.mass.mass * c.strength * df_drate;
            let af = c.strength * sc.f;
            g_mean[sc.m] = Point::new(
                g_mean[sc.m].x + share * sc.r.x / var - af * c.mass.d_mean.x,
                g_mean[sc.m].y + share * sc.r.y / var - af * c.mass.d_mean.y,
            );
            let r2 = sc.r.x * sc.r.x + sc.r.y * sc.r.y;
            g_var = g_var + share * (r2 / (two * var * var) - T::one() / var) - af * c.mass.d_var;
        }
    }

    if let Some(g) = grad.as_mut() {
        g.base_rate = g_nu;
        g.spatial_var = g_var;
        if spec.variant == Variant::Hawkes {
            for m in 0..n {
                let x = &ev.rows[m];
                let (za, zb) = pre[m];
                let ga = g_strength[m] * link.derivative(za);
                let gb = g_rate[m] * link.derivative(zb);
                for j in 0..p {
                    g.excitation[j] = g.excitation[j] + ga * x[j];
                    g.decay[j] = g.decay[j] + gb * x[j];
                }
                if spec.mean_fn != super::MeanFn::Baseline {
                    let gm = [g_mean[m].x, g_mean[m].y];
                    let sm = [ev.locations[m].x, ev.locations[m].y];
                    for r in 0..2 {
                        for col in 0..2 {
                            g.transform[r][col] = g.transform[r][col] + gm[r] * sm[col];
                        }
                        g.offset[r] = g.offset[r] + gm[r];
                        if spec.mean_fn == super::MeanFn::Full {
                            for j in 0..p {
                                g.predictor_offset[r][j] = g.predictor_offset[r][j] + gm[r] * x[j];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((Loglik::from_terms(terms), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Fixation, Scanpath};
    use crate::saccade::{Link, MeanFn};

    fn events(fixations: &[(f64, f64, f64, f64)]) -> Events<f64> {
        let f = fixations
            .iter()
            .map(|&(t, x, y, d)| Fixation::new(t, x, y, d))
            .collect();
        Events::new(&Scanpath::new("r", "t", f).unwrap(), None).unwrap()
    }

    fn poisson(nu: f64) -> SaccadeParams<f64> {
        SaccadeParams::new(1, nu, 1.0, Link::Softplus)
    }

    #[test]
    fn empty_history_intensity_is_base_rate() {
        let h = events(&[]);
        let spec = SaccadeSpec::hawkes(MeanFn::Full);
        let v = intensity(3.0, Point::new(5.0, 5.0), &h, &spec, &poisson(0.7)).unwrap();
        assert_eq!(v, 0.7);
    }

    #[test]
    fn single_event_peak() {
        // Kernel at zero lag, evaluated at the spatial mean.
        let h = events(&[(0.0, 10.0, 10.0, 0.25)]);
        let mut p = SaccadeParams::new(1, 0.1, 2.0, Link::Softplus);
        p.excitation[0] = 0.3;
        let spec = SaccadeSpec::hawkes(MeanFn::Baseline);
        let v = intensity(0.25, Point::new(10.0, 10.0), &h, &spec, &p).unwrap();
        let expected = 0.1 + crate::scalar::softplus(0.3) / (2.0 * std::f64::consts::PI * 2.0);
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn intensity_inside_fixation_is_error() {
        let h = events(&[(0.0, 10.0, 10.0, 0.25)]);
        let r = intensity(0.1, Point::new(0.0, 0.0), &h, &SaccadeSpec::poisson(), &poisson(1.0));
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn poisson_compensator_and_density() {
        let h = events(&[(0.0, 0.5, 0.5, 0.5)]);
        let unit = Rect::screen(1.0, 1.0);
        let c = compensator(1.0, &h, &SaccadeSpec::poisson(), &poisson(2.0), &unit).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
        assert_eq!(compensator(0.5, &h, &SaccadeSpec::poisson(), &poisson(2.0), &unit).unwrap(), 0.0);
        let ld = log_density(1.5, Point::new(0.2, 0.2), &h, &SaccadeSpec::poisson(), &poisson(1.0), &unit);
        assert!((ld + 1.0).abs() < 1e-15);
        let early = log_density(0.3, Point::new(0.2, 0.2), &h, &SaccadeSpec::poisson(), &poisson(1.0), &unit);
        assert_eq!(early, f64::NEG_INFINITY);
    }

    #[test]
    fn unbounded_single_event_mass_is_alpha_over_beta() {
        // ν = 0, α = β = 1 under relu, integrated to (effectively) infinity.
        let h = events(&[(0.0, 0.0, 0.0, 0.2)]);
        let mut p = SaccadeParams::new(1, 0.0, 1.0, Link::Relu);
        p.excitation[0] = 1.0;
        p.decay[0] = 1.0;
        let spec = SaccadeSpec::hawkes(MeanFn::Baseline).with_link(Link::Relu);
        let c = compensator(1e3, &h, &spec, &p, &Rect::unbounded()).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_decay_uses_linear_limit() {
        let h = events(&[(0.0, 0.0, 0.0, 0.2)]);
        let mut p = SaccadeParams::new(1, 0.0, 1.0, Link::Relu);
        p.excitation[0] = 2.0;
        p.decay[0] = -1.0;
        let spec = SaccadeSpec::hawkes(MeanFn::Baseline).with_link(Link::Relu);
        let c = compensator(0.7, &h, &spec, &p, &Rect::unbounded()).unwrap();
        assert!((c - 2.0 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn first_moment_series_matches_closed_form() {
        for &(rate, gap) in &[(0.5, 0.19), (1.0, 0.0999), (3.0, 0.0334)] {
            let x: f64 = rate * gap;
            let closed = (1.0 - (-x).exp() * (1.0 + x)) / (rate * rate);
            assert!((first_moment(rate, gap) - closed).abs() < 1e-12 * closed.max(1e-300));
        }
        assert!((first_moment(0.0f64, 2.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn scanpath_loglik_sums_terms() {
        let unit = Rect::screen(1.0, 1.0);
        assert_eq!(
            scanpath_loglik(&events(&[]), &SaccadeSpec::poisson(), &poisson(1.0), &unit).unwrap().total,
            0.0
        );
        let ev = events(&[(0.5, 0.1, 0.1, 0.2), (1.0, 0.2, 0.2, 0.1), (2.1, 0.3, 0.3, 0.3)]);
        let ll = scanpath_loglik(&ev, &SaccadeSpec::poisson(), &poisson(2.0), &unit).unwrap();
        // gaps 0.5, 0.3, 1.0
        let expected = [2f64.ln() - 1.0, 2f64.ln() - 0.6, 2f64.ln() - 2.0];
        for (a, b) in ll.per_event.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((ll.total - expected.iter().sum::<f64>()).abs() < 1e-14);
        let single = scanpath_loglik(&ev.prefix(1), &SaccadeSpec::poisson(), &poisson(2.0), &unit).unwrap();
        let direct = log_density(0.5, Point::new(0.1, 0.1), &ev.prefix(0), &SaccadeSpec::poisson(), &poisson(2.0), &unit);
        assert_eq!(single.total, direct);
    }

    #[test]
    fn zero_intensity_counts_neg_inf() {
        let ev = events(&[(0.5, 0.1, 0.1, 0.2)]);
        let ll = scanpath_loglik(&ev, &SaccadeSpec::poisson(), &poisson(0.0), &Rect::screen(1.0, 1.0)).unwrap();
        assert_eq!(ll.neg_inf, 1);
        assert_eq!(ll.total, f64::NEG_INFINITY);
    }
}
