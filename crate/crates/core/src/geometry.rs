use serde::{Deserialize, Serialize};

use crate::scalar::{norm_cdf, norm_pdf, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn dist2(self, other: Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn cast<U: Scalar>(self) -> Point<U> {
        Point::new(U::of(self.x.as_f64()), U::of(self.y.as_f64()))
    }
}

/// Axis-aligned rectangle `[x0, x0 + width) × [y0, y0 + height)`.
///
/// Used both for glyph boxes and for the screen region Ω. Infinite extents
/// are allowed for Ω (an unbounded plane).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect<T> {
    pub x0: T,
    pub y0: T,
    pub width: T,
    pub height: T,
}

/// Mass of a spherical Gaussian inside a rectangle, with partial derivatives.
#[derive(Debug, Clone, Copy)]
pub struct GaussianMass<T> {
    pub mass: T,
    pub d_mean: Point<T>,
    pub d_var: T,
}

impl<T: Scalar> Rect<T> {
    pub fn new(x0: T, y0: T, width: T, height: T) -> Self {
        Self { x0, y0, width, height }
    }

    /// Origin-anchored screen of the given size.
    pub fn screen(width: T, height: T) -> Self {
        Self::new(T::zero(), T::zero(), width, height)
    }

    pub fn unbounded() -> Self {
        Self::new(T::neg_infinity(), T::neg_infinity(), T::infinity(), T::infinity())
    }

    pub fn x1(&self) -> T {
        far_edge(self.x0, self.width)
    }

    pub fn y1(&self) -> T {
        far_edge(self.y0, self.height)
    }

    pub fn area(&self) -> T {
        self.width * self.height
    }

    pub fn center(&self) -> Point<T> {
        Point::new(
            self.x0 + self.width / T::of(2.0),
            self.y0 + self.height / T::of(2.0),
        )
    }

    /// Half-open containment test.
    pub fn contains(&self, p: Point<T>) -> bool {
        p.x >= self.x0 && p.x < self.x1() && p.y >= self.y0 && p.y < self.y1()
    }

    /// Closed containment test, used for the screen region where the far
    /// edge is still on screen.
    pub fn contains_closed(&self, p: Point<T>) -> bool {
        p.x >= self.x0 && p.x <= self.x1() && p.y >= self.y0 && p.y <= self.y1()
    }

    pub fn contains_rect(&self, r: &Rect<T>) -> bool {
        r.x0 >= self.x0 && r.y0 >= self.y0 && r.x1() <= self.x1() && r.y1() <= self.y1()
    }

    pub fn overlaps(&self, r: &Rect<T>) -> bool {
        self.x0 < r.x1() && r.x0 < self.x1() && self.y0 < r.y1() && r.y0 < self.y1()
    }

    /// Probability that `N(mean, var·I)` falls in this rectangle, computed as
    /// the product of two 1-D interval masses.
    pub fn gaussian_mass(&self, mean: Point<T>, var: T) -> GaussianMass<T> {
        let sd = var.sqrt();
        let (px, dpx_dm, dpx_ds) = interval_mass(self.x0, self.x1(), mean.x, sd);
        let (py, dpy_dm, dpy_ds) = interval_mass(self.y0, self.y1(), mean.y, sd);
        let ds = dpx_ds * py + px * dpy_ds;
        GaussianMass {
            mass: px * py,
            d_mean: Point::new(dpx_dm * py, px * dpy_dm),
            d_var: ds / (T::of(2.0) * sd),
        }
    }
}

fn far_edge<T: Scalar>(start: T, extent: T) -> T {
    if extent == T::infinity() {
        T::infinity()
    } else {
        start + extent
    }
}

/// Mass of `N(mean, sd²)` on `[lo, hi]` and its derivatives in `mean` and `sd`.
fn interval_mass<T: Scalar>(lo: T, hi: T, mean: T, sd: T) -> (T, T, T) {
    let zl = (lo - mean) / sd;
    let zh = (hi - mean) / sd;
    // Upper-tail form keeps precision when both bounds sit far right of the mean.
    let mass = if zl > T::zero() {
        norm_cdf(-zl) - norm_cdf(-zh)
    } else {
        norm_cdf(zh) - norm_cdf(zl)
    };
    let (pl, ph) = (norm_pdf(zl), norm_pdf(zh));
    let d_mean = -(ph - pl) / sd;
    let zph = if zh.is_infinite() { T::zero() } else { zh * ph };
    let zpl = if zl.is_infinite() { T::zero() } else { zl * pl };
    let d_sd = -(zph - zpl) / sd;
    (mass, d_mean, d_sd)
}
