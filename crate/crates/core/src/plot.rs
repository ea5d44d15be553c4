//! Intensity snapshots: `λ(t, ·)` on a grid over Ω, exported as CSV and SVG.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::events::Events;
use crate::geometry::{Point, Rect};
use crate::saccade::{KernelState, SaccadeParams, SaccadeSpec};

/// Intensity over a grid of cell centers at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major: `values[j][i]` is the intensity at `(xs[i], ys[j])`.
    pub values: Vec<Vec<f64>>,
    /// Fixations that ended by `time`.
    pub past: Vec<Point<f64>>,
    /// The first fixation starting after `time`, if any.
    pub next: Option<Point<f64>>,
}

impl Snapshot {
    /// Grid cell with the largest intensity.
    pub fn argmax(&self) -> Point<f64> {
        let mut best = (f64::NEG_INFINITY, Point::new(0.0, 0.0));
        for (j, row) in self.values.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                if v > best.0 {
                    best = (v, Point::new(self.xs[i], self.ys[j]));
                }
            }
        }
        best.1
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,x,y,intensity\n");
        for (j, row) in self.values.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                let _ = writeln!(out, "{:?},{:?},{:?},{:?}", self.time, self.xs[i], self.ys[j], v);
            }
        }
        out
    }

    /// Heatmap with past fixations as circles and the next one as a cross.
    /// Screen coordinates: y grows downward.
    pub fn to_svg(&self, omega: &Rect<f64>) -> String {
        let (nx, ny) = (self.xs.len(), self.ys.len());
        let (cw, ch) = (omega.width / nx as f64, omega.height / ny as f64);
        let (lo, hi) = self
            .values
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}" width="{}" height="{}">"#,
            omega.x0,
            omega.y0,
            omega.width,
            omega.height,
            omega.width.round(),
            omega.height.round()
        );
        let _ = writeln!(s, "<title>intensity at t = {}</title>", self.time);
        for (j, row) in self.values.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
                    self.xs[i] - cw / 2.0,
                    self.ys[j] - ch / 2.0,
                    cw,
                    ch,
                    color((v - lo) / span)
                );
            }
        }
        let r = 0.01 * omega.width.min(omega.height);
        for p in &self.past {
            let _ = writeln!(
                s,
                r#"<circle cx="{}" cy="{}" r="{r}" fill="none" stroke="white" stroke-width="{}"/>"#,
                p.x,
                p.y,
                r / 3.0
            );
        }
        if let Some(p) = self.next {
            let _ = writeln!(
                s,
                r#"<path d="M{} {}L{} {}M{} {}L{} {}" stroke="red" stroke-width="{}"/>"#,
                p.x - r,
                p.y - r,
                p.x + r,
                p.y + r,
                p.x - r,
                p.y + r,
                p.x + r,
                p.y - r,
                r / 2.0
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Dark blue → yellow ramp.
fn color(u: f64) -> String {
    let u = u.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * u).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(20.0, 250.0), lerp(20.0, 230.0), lerp(90.0, 40.0))
}

/// Evaluates the intensity at the centers of an `nx × ny` grid over Ω at
/// each timestamp, conditioning on the fixations that ended by then.
pub fn plot_intensity(
    spec: &SaccadeSpec,
    params: &SaccadeParams<f64>,
    history: &Events<f64>,
    omega: &Rect<f64>,
    times: &[f64],
    resolution: (usize, usize),
) -> Result<Vec<Snapshot>> {
    let (nx, ny) = resolution;
    if nx == 0 || ny == 0 {
        return Err(Error::Usage("grid resolution must be positive".into()));
    }
    if !(omega.width.is_finite() && omega.height.is_finite()) {
        return Err(Error::Usage("cannot plot over an unbounded region".into()));
    }
    params.validate(params.width())?;
    if !history.is_empty() && history.width() != params.width() {
        return Err(Error::Validation(format!(
            "history rows have {} columns; the parameters expect {}",
            history.width(),
            params.width()
        )));
    }
    let xs: Vec<f64> = (0..nx).map(|i| omega.x0 + (i as f64 + 0.5) * omega.width / nx as f64).collect();
    let ys: Vec<f64> = (0..ny).map(|j| omega.y0 + (j as f64 + 0.5) * omega.height / ny as f64).collect();
    times
        .iter()
        .map(|&t| {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::Domain(format!("timestamp {t} is not a non-negative time")));
            }
            if let Some(i) = (0..history.len()).find(|&i| {
                let (a, d) = (history.onsets[i], history.durations[i]);
                t >= a && t < a + d
            }) {
                let (a, b) = (history.onsets[i], history.onsets[i] + history.durations[i]);
                return Err(Error::Domain(format!(
                    "timestamp {t} falls inside fixation {i} of {} ([{a}, {b}))",
                    history.key
                )));
            }
            let n = history.onsets.iter().take_while(|&&a| a < t).count();
            let past = history.prefix(n);
            let state = KernelState::from_history(&past, spec, params, *omega);
            let values = ys
                .iter()
                .map(|&y| xs.iter().map(|&x| state.intensity(t, Point::new(x, y))).collect())
                .collect();
            Ok(Snapshot {
                time: t,
                xs: xs.clone(),
                ys: ys.clone(),
                values,
                past: past.locations.clone(),
                next: history.locations.get(n).copied(),
            })
        })
        .collect()
}
