//! Spatio-temporal Hawkes model of fixation onsets and locations.
//!
//! The intensity of the next fixation at time `t` and location `s` is
//!
//! ```text
//! λ(t, s) = ν + Σ_m h(x_mᵀα) · exp(−h(x_mᵀβ) · Δ_m(t)) · N(s; μ_m, σ²I)
//! ```
//!
//! where `Δ_m(t)` is the time spent in saccades since fixation `m` ended
//! (fixation durations are excluded) and `μ_m` is the identity, an affine
//! map `A s_m + b`, or `A s_m + b + C x_m` of the earlier location.
//! Poisson (`λ = ν`) and last-fixation (`λ = ν + N(s; s_{n−1}, σ²I)`)
//! baselines share the same parameter layout.

mod likelihood;

pub use likelihood::{
    compensator, intensity, log_density, scanpath_loglik, scanpath_loglik_grad, Component, KernelState, Loglik,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Poisson,
    LastFixation,
    Hawkes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanFn {
    /// `μ(s) = s`
    #[default]
    Baseline,
    /// `μ(s) = A s + b`
    Affine,
    /// `μ(s) = A s + b + C x`
    Full,
}

/// Non-negativity link applied to `xᵀα` and `xᵀβ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Relu,
    #[default]
    Softplus,
}

impl Link {
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Link::Relu => z.max(T::zero()),
            Link::Softplus => softplus(z),
        }
    }

    pub fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Link::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Link::Softplus => sigmoid(z),
        }
    }

    /// Some pre-activation whose link value is `y > 0`.
    pub fn inverse<T: Scalar>(self, y: T) -> T {
        match self {
            Link::Relu => y,
            Link::Softplus => crate::scalar::inv_softplus(y),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaccadeSpec {
    pub variant: Variant,
    pub mean_fn: MeanFn,
    pub link: Link,
}

impl SaccadeSpec {
    pub fn poisson() -> Self {
        Self {
            variant: Variant::Poisson,
            mean_fn: MeanFn::Baseline,
            link: Link::Softplus,
        }
    }

    pub fn last_fixation() -> Self {
        Self {
            variant: Variant::LastFixation,
            ..Self::poisson()
        }
    }

    pub fn hawkes(mean_fn: MeanFn) -> Self {
        Self {
            variant: Variant::Hawkes,
            mean_fn,
            link: Link::Softplus,
        }
    }

    pub fn with_link(mut self, link: Link) -> Self {
        self.link = link;
        self
    }

    /// Whether the parameter block is used by this specification.
    pub fn uses(&self, block: Block) -> bool {
        let hawkes = self.variant == Variant::Hawkes;
        match block {
            Block::BaseRate => true,
            Block::SpatialVar => self.variant != Variant::Poisson,
            Block::Excitation | Block::Decay => hawkes,
            Block::Transform | Block::Offset => hawkes && self.mean_fn != MeanFn::Baseline,
            Block::PredictorOffset => hawkes && self.mean_fn == MeanFn::Full,
        }
    }
}

/// Parameter blocks of [`SaccadeParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    BaseRate,
    Excitation,
    Decay,
    Transform,
    Offset,
    PredictorOffset,
    SpatialVar,
}

/// Parameters of the saccade model for predictor width `p`.
///
/// The same struct holds gradients with respect to each field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaccadeParams<T> {
    /// ν: background events per second per pixel².
    pub base_rate: T,
    /// α ∈ ℝ^p.
    pub excitation: Vec<T>,
    /// β ∈ ℝ^p.
    pub decay: Vec<T>,
    /// A, row-major.
    pub transform: [[T; 2]; 2],
    /// b, pixels.
    pub offset: [T; 2],
    /// C ∈ ℝ^{2×p}, pixels per predictor unit.
    pub predictor_offset: [Vec<T>; 2],
    /// σ², pixels².
    pub spatial_var: T,
}

impl<T: Scalar> SaccadeParams<T> {
    /// Identity transform, zero shifts, unit excitation and decay through
    /// the given link on the intercept (first) column.
    pub fn new(p: usize, base_rate: T, spatial_var: T, link: Link) -> Self {
        let mut excitation = vec![T::zero(); p];
        let mut decay = vec![T::zero(); p];
        if p > 0 {
            excitation[0] = link.inverse(T::one());
            decay[0] = link.inverse(T::one());
        }
        Self {
            base_rate,
            excitation,
            decay,
            transform: [[T::one(), T::zero()], [T::zero(), T::one()]],
            offset: [T::zero(); 2],
            predictor_offset: [vec![T::zero(); p], vec![T::zero(); p]],
            spatial_var,
        }
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            base_rate: T::zero(),
            excitation: vec![T::zero(); p],
            decay: vec![T::zero(); p],
            transform: [[T::zero(); 2]; 2],
            offset: [T::zero(); 2],
            predictor_offset: [vec![T::zero(); p], vec![T::zero(); p]],
            spatial_var: T::zero(),
        }
    }

    pub fn width(&self) -> usize {
        self.excitation.len()
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.base_rate >= T::zero()) {
            return Err(Error::Parameter(format!("base rate must be ≥ 0, got {}", self.base_rate)));
        }
        if !(self.spatial_var > T::zero()) {
            return Err(Error::Parameter(format!("spatial variance must be > 0, got {}", self.spatial_var)));
        }
        let dims = [
            self.excitation.len(),
            self.decay.len(),
            self.predictor_offset[0].len(),
            self.predictor_offset[1].len(),
        ];
        if dims.iter().any(|&d| d != p) {
            return Err(Error::Parameter(format!(
                "parameter dimensions {dims:?} do not match predictor width {p}"
            )));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> SaccadeParams<U> {
        let v = |x: &[T]| x.iter().map(|&e| U::of(e.as_f64())).collect::<Vec<U>>();
        let c = |x: T| U::of(x.as_f64());
        SaccadeParams {
            base_rate: c(self.base_rate),
            excitation: v(&self.excitation),
            decay: v(&self.decay),
            transform: [
                [c(self.transform[0][0]), c(self.transform[0][1])],
                [c(self.transform[1][0]), c(self.transform[1][1])],
            ],
            offset: [c(self.offset[0]), c(self.offset[1])],
            predictor_offset: [v(&self.predictor_offset[0]), v(&self.predictor_offset[1])],
            spatial_var: c(self.spatial_var),
        }
    }

    /// Excitation strength `h(xᵀα)` of a fixation with predictors `x`.
    pub fn excitation_strength(&self, x: &[T], link: Link) -> T {
        link.apply(dot(x, &self.excitation))
    }

    /// Decay rate `h(xᵀβ)` of a fixation with predictors `x`.
    pub fn decay_rate(&self, x: &[T], link: Link) -> T {
        link.apply(dot(x, &self.decay))
    }

    /// `scale · self + other`, field by field.
    pub fn axpy(&mut self, scale: T, other: &Self) {
        let ax = |a: &mut T, b: T| *a = *a + scale * b;
        ax(&mut self.base_rate, other.base_rate);
        for (a, &b) in self.excitation.iter_mut().zip(&other.excitation) {
            ax(a, b);
        }
        for (a, &b) in self.decay.iter_mut().zip(&other.decay) {
            ax(a, b);
        }
        for i in 0..2 {
            for j in 0..2 {
                ax(&mut self.transform[i][j], other.transform[i][j]);
            }
            ax(&mut self.offset[i], other.offset[i]);
            for (a, &b) in self.predictor_offset[i].iter_mut().zip(&other.predictor_offset[i]) {
                ax(a, b);
            }
        }
        ax(&mut self.spatial_var, other.spatial_var);
    }
}

pub(crate) fn dot<T: Scalar>(x: &[T], w: &[T]) -> T {
    x.iter().zip(w).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

/// δ(n, m): total fixation time between the onsets of fixations `m` and
/// `n` (1-based), i.e. `Σ_{j=m}^{n−1} d_j`.
pub fn cumulative_gap<T: Scalar>(durations: &[T], n: usize, m: usize) -> Result<T> {
    if m < 1 || m >= n || n > durations.len() + 1 {
        return Err(Error::Usage(format!(
            "cumulative gap needs 1 ≤ m < n ≤ {}, got m = {m}, n = {n}",
            durations.len() + 1
        )));
    }
    Ok(durations[m - 1..n - 1].iter().fold(T::zero(), |a, &d| a + d))
}

/// φ(Δ) = h(xᵀα) · exp(−h(xᵀβ) · Δ).
pub fn temporal_kernel<T: Scalar>(delta: T, x: &[T], params: &SaccadeParams<T>, link: Link) -> T {
    let strength = params.excitation_strength(x, link);
    if strength == T::zero() {
        return T::zero();
    }
    strength * (-params.decay_rate(x, link) * delta).exp()
}

/// Centre of the spatial kernel left by a fixation at `s` with predictors `x`.
pub fn spatial_mean<T: Scalar>(s: Point<T>, x: &[T], mean_fn: MeanFn, params: &SaccadeParams<T>) -> Point<T> {
    match mean_fn {
        MeanFn::Baseline => s,
        MeanFn::Affine | MeanFn::Full => {
            let a = &params.transform;
            let mut mx = a[0][0] * s.x + a[0][1] * s.y + params.offset[0];
            let mut my = a[1][0] * s.x + a[1][1] * s.y + params.offset[1];
            if mean_fn == MeanFn::Full {
                mx = mx + dot(x, &params.predictor_offset[0]);
                my = my + dot(x, &params.predictor_offset[1]);
            }
            Point::new(mx, my)
        }
    }
}

/// Spherical bivariate Gaussian density at `s`.
pub fn spatial_density<T: Scalar>(s: Point<T>, mean: Point<T>, var: T) -> T {
    let two_var = T::of(2.0) * var;
    (-s.dist2(mean) / two_var).exp() / (T::PI() * two_var)
}
