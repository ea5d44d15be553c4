//! Sampling scanpaths from fitted models.
//!
//! Onsets come from Ogata thinning of the temporal margin `∫_Ω λ(t, s) ds`,
//! locations from the spatial mixture at the accepted time, and durations
//! from the duration model given the history and onset.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Fixation, Scanpath};
use crate::duration::{log_mean, Distribution, DurationParams, DurationSpec};
use crate::error::{Error, Result};
use crate::events::Events;
use crate::geometry::{Point, Rect};
use crate::saccade::{KernelState, SaccadeParams, SaccadeSpec};

/// Rejected thinning proposals tolerated for a single fixation.
const MAX_PROPOSALS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub omega: Rect<f64>,
    pub seed: u64,
    pub max_events: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || self.max_events == 0 {
            return Err(Error::Usage("simulation needs horizon > 0 and max_events ≥ 1".into()));
        }
        Ok(())
    }
}

/// A generative model: saccade and duration components plus the predictor
/// row attached to a fixation landing at a given location.
pub struct Generator<'a> {
    pub saccade_spec: SaccadeSpec,
    pub saccade: SaccadeParams<f64>,
    pub duration_spec: DurationSpec,
    pub duration: DurationParams<f64>,
    pub row: &'a (dyn Fn(Point<f64>) -> Vec<f64> + Sync),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Next {
    Fixation { onset: f64, location: Point<f64> },
    HorizonExceeded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub scanpath: Scanpath,
    pub rows: Vec<Vec<f64>>,
    /// The event cap stopped the path before the horizon.
    pub truncated: bool,
}

/// `B(t) = ν|Ω| + Σ_m φ_m(t)`, which bounds `∫_Ω λ(t′, s) ds` for all
/// `t′ ≥ t` because every kernel decays and every spatial mass is ≤ 1.
pub fn intensity_upper_bound(state: &KernelState<f64>, t: f64) -> f64 {
    let base = state.base_rate();
    let background = if base == 0.0 { 0.0 } else { base * state.omega().area() };
    background + state.temporal_weights(t).iter().sum::<f64>()
}

/// Draws the next onset after the end of the history by thinning, then a
/// location from the spatial mixture at that time.
pub fn sample_next_fixation<R: Rng>(state: &KernelState<f64>, horizon: f64, rng: &mut R) -> Result<Next> {
    let mut t = state.end();
    for _ in 0..MAX_PROPOSALS {
        let bound = intensity_upper_bound(state, t);
        if !(bound > 0.0) {
            return Ok(Next::HorizonExceeded);
        }
        t += Exp::new(bound).expect("positive rate").sample(rng);
        if t > horizon {
            return Ok(Next::HorizonExceeded);
        }
        let rate = state.marginal_rate(t);
        if rng.random::<f64>() * bound <= rate {
            return Ok(Next::Fixation {
                onset: t,
                location: sample_location(state, t, rng),
            });
        }
    }
    Err(Error::Domain(format!(
        "thinning rejected {MAX_PROPOSALS} proposals after t = {}",
        state.end()
    )))
}

/// Picks the background (uniform on Ω) or a kernel with probability
/// proportional to its mass in Ω at time `t`, then draws within Ω.
fn sample_location<R: Rng>(state: &KernelState<f64>, t: f64, rng: &mut R) -> Point<f64> {
    let omega = *state.omega();
    let base = state.base_rate();
    let mut weights = vec![if base == 0.0 { 0.0 } else { base * omega.area() }];
    weights.extend(
        state
            .temporal_weights(t)
            .iter()
            .zip(state.active())
            .map(|(w, c)| w * c.mass.mass),
    );
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut pick = weights.len() - 1;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            pick = i;
            break;
        }
        u -= w;
    }
    if pick == 0 {
        return Point::new(
            omega.x0 + rng.random::<f64>() * omega.width,
            omega.y0 + rng.random::<f64>() * omega.height,
        );
    }
    let mean = state.active()[pick - 1].mean;
    let sd = state.spatial_var().sqrt();
    Point::new(
        truncated_normal(mean.x, sd, omega.x0, omega.x1(), rng),
        truncated_normal(mean.y, sd, omega.y0, omega.y1(), rng),
    )
}

/// `N(mean, sd²)` conditioned on `[lo, hi]`, by inverting the CDF on
/// whichever side of the mean keeps the tail probabilities representable.
fn truncated_normal<R: Rng>(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let (a, b) = ((lo - mean) / sd, (hi - mean) / sd);
    let u: f64 = rng.random();
    let z = if b < 0.0 { -upper_tail_z(-b, -a, u) } else { upper_tail_z(a, b, u) };
    (mean + sd * z).clamp(lo, hi)
}

/// Standard normal restricted to `[a, b]` with `b ≥ 0`, at uniform `u`.
fn upper_tail_z(a: f64, b: f64, u: f64) -> f64 {
    let n = Normal::standard();
    if a > 0.0 {
        let (qa, qb) = (n.sf(a), n.sf(b));
        n.inverse_cdf(1.0 - (qa - u * (qa - qb))).max(a).min(b)
    } else {
        let (pa, pb) = (n.cdf(a), n.cdf(b));
        n.inverse_cdf(pa + u * (pb - pa))
    }
}

/// Draws the duration of a fixation at `onset` whose predictors are `row`.
pub fn sample_duration<R: Rng>(
    history: &Events<f64>,
    onset: f64,
    location: Point<f64>,
    row: Vec<f64>,
    spec: &DurationSpec,
    params: &DurationParams<f64>,
    rng: &mut R,
) -> f64 {
    let mut ev = history.clone();
    ev.push(onset, location, 1.0, row);
    draw_duration(log_mean(ev.len() - 1, &ev, spec, params), spec, params, rng)
}

fn draw_duration<R: Rng>(xi: f64, spec: &DurationSpec, params: &DurationParams<f64>, rng: &mut R) -> f64 {
    match spec.distribution {
        Distribution::LogNormal => {
            let z: f64 = StandardNormal.sample(rng);
            (xi + params.var.sqrt() * z).exp()
        }
        Distribution::Gamma => {
            let k = params.gamma_shape;
            Gamma::new(k, xi.exp() / k).expect("valid gamma").sample(rng)
        }
    }
}

/// Alternates onset/location and duration draws until the next onset would
/// pass the horizon or `max_events` fixations exist.
pub fn sample_scanpath_with<R: Rng>(
    gen: &Generator,
    config: &SimConfig,
    reader_id: &str,
    text_id: &str,
    rng: &mut R,
) -> Result<Simulated> {
    config.validate()?;
    gen.duration.validate(gen.duration.weights.len(), &gen.duration_spec)?;
    let mut state = KernelState::new(&gen.saccade_spec, &gen.saccade, config.omega);
    let mut history = Events::<f64> {
        key: format!("{reader_id}/{text_id}"),
        onsets: vec![],
        locations: vec![],
        durations: vec![],
        rows: vec![],
    };
    let mut truncated = false;
    loop {
        if history.len() >= config.max_events {
            truncated = true;
            break;
        }
        let Next::Fixation { onset, location } = sample_next_fixation(&state, config.horizon, rng)? else {
            break;
        };
        let row = (gen.row)(location);
        history.push(onset, location, 1.0, row);
        let n = history.len() - 1;
        let xi = log_mean(n, &history, &gen.duration_spec, &gen.duration);
        let d = draw_duration(xi, &gen.duration_spec, &gen.duration, rng);
        history.durations[n] = d;
        state.push(onset, location, d, &history.rows[n]);
    }
    let fixations = (0..history.len())
        .map(|i| Fixation {
            onset: history.onsets[i],
            location: history.locations[i],
            duration: history.durations[i],
        })
        .collect();
    Ok(Simulated {
        scanpath: Scanpath::new(reader_id, text_id, fixations)?,
        rows: history.rows,
        truncated,
    })
}

pub fn sample_scanpath(gen: &Generator, config: &SimConfig, reader_id: &str, text_id: &str) -> Result<Simulated> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    sample_scanpath_with(gen, config, reader_id, text_id, &mut rng)
}

/// `n` independent scanpaths in parallel, replicate `i` drawing from stream
/// `i` of the master seed. Text ids are `{prefix}{i}`.
pub fn sample_replicates(
    gen: &Generator,
    config: &SimConfig,
    reader_id: &str,
    text_prefix: &str,
    n: usize,
) -> Result<Vec<Simulated>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(config.seed, i as u64);
            sample_scanpath_with(gen, config, reader_id, &format!("{text_prefix}{i}"), &mut rng)
        })
        .collect()
}

/// Independent stream `stream` of the master seed.
pub fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duration::GammaKernel;
    use crate::saccade::Link;

    fn fixed_row(_: Point<f64>) -> Vec<f64> {
        vec![1.0]
    }

    fn poisson_gen(nu: f64) -> Generator<'static> {
        let mut dur = DurationParams::new(1, &DurationSpec::plain(), GammaKernel::new(2.0, 1.0, 0.0).unwrap());
        dur.weights[0] = (0.2f64).ln();
        dur.var = 0.05;
        Generator {
            saccade_spec: SaccadeSpec::poisson(),
            saccade: SaccadeParams::new(1, nu, 1.0, Link::Softplus),
            duration_spec: DurationSpec::plain(),
            duration: dur,
            row: &fixed_row,
        }
    }

    #[test]
    fn zero_rate_empty_history_exceeds_horizon() {
        let state = KernelState::new(&SaccadeSpec::poisson(), &SaccadeParams::new(1, 0.0, 1.0, Link::Softplus), Rect::new(0.0, 0.0, 1.0, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_next_fixation(&state, 10.0, &mut rng).unwrap(), Next::HorizonExceeded);
        assert_eq!(intensity_upper_bound(&state, 0.0), 0.0);
    }

    #[test]
    fn paths_are_valid_and_deterministic() {
        let cfg = SimConfig {
            horizon: 30.0,
            omega: Rect::new(0.0, 0.0, 100.0, 50.0),
            seed: 7,
            max_events: 1000,
        };
        let gen = poisson_gen(2e-3);
        let a = sample_scanpath(&gen, &cfg, "r", "t").unwrap();
        let b = sample_scanpath(&gen, &cfg, "r", "t").unwrap();
        assert_eq!(a, b);
        assert!(!a.scanpath.is_empty());
        a.scanpath.validate().unwrap();
        assert!(a.scanpath.fixations.iter().all(|f| f.onset <= 30.0));
    }

    #[test]
    fn tiny_horizon_gives_empty_path() {
        let cfg = SimConfig {
            horizon: 1e-9,
            omega: Rect::new(0.0, 0.0, 1.0, 1.0),
            seed: 3,
            max_events: 10,
        };
        assert!(sample_scanpath(&poisson_gen(1.0), &cfg, "r", "t").unwrap().scanpath.is_empty());
    }

    #[test]
    fn event_cap_truncates() {
        let cfg = SimConfig {
            horizon: 1e6,
            omega: Rect::new(0.0, 0.0, 1.0, 1.0),
            seed: 3,
            max_events: 5,
        };
        let s = sample_scanpath(&poisson_gen(1.0), &cfg, "r", "t").unwrap();
        assert!(s.truncated);
        assert_eq!(s.scanpath.len(), 5);
    }

    #[test]
    fn truncated_normal_stays_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = truncated_normal(500.0, 3.0, 0.0, 10.0, &mut rng);
            assert!((0.0..=10.0).contains(&x));
        }
    }
}
