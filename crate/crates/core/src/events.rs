//! Scanpath data in the scalar type of a model evaluation.

use crate::data::{DesignMatrix, Scanpath};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scalar::Scalar;

/// Onsets, locations, durations and predictor rows of one scanpath.
#[derive(Debug, Clone, PartialEq)]
pub struct Events<T> {
    pub key: String,
    pub onsets: Vec<T>,
    pub locations: Vec<Point<T>>,
    pub durations: Vec<T>,
    pub rows: Vec<Vec<T>>,
}

impl<T: Scalar> Events<T> {
    /// Pairs a scanpath with its design rows. Without a design every
    /// fixation gets the intercept-only row `[1]`.
    pub fn new(scanpath: &Scanpath, design: Option<&DesignMatrix>) -> Result<Self> {
        let rows = match design {
            Some(d) => {
                if d.len() != scanpath.len() {
                    return Err(Error::Validation(format!(
                        "scanpath {} has {} fixations but its design has {} rows",
                        scanpath.key(),
                        scanpath.len(),
                        d.len()
                    )));
                }
                d.rows
                    .iter()
                    .map(|r| r.iter().map(|&v| T::of(v)).collect())
                    .collect()
            }
            None => vec![vec![T::one()]; scanpath.len()],
        };
        Ok(Self {
            key: scanpath.key(),
            onsets: scanpath.fixations.iter().map(|f| T::of(f.onset)).collect(),
            locations: scanpath.fixations.iter().map(|f| f.location.cast()).collect(),
            durations: scanpath.fixations.iter().map(|f| T::of(f.duration)).collect(),
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.onsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.onsets.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// The first `n` events.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            key: self.key.clone(),
            onsets: self.onsets[..n].to_vec(),
            locations: self.locations[..n].to_vec(),
            durations: self.durations[..n].to_vec(),
            rows: self.rows[..n].to_vec(),
        }
    }

    /// End of the last fixation, or 0 when empty.
    pub fn end(&self) -> T {
        match (self.onsets.last(), self.durations.last()) {
            (Some(&t), Some(&d)) => t + d,
            _ => T::zero(),
        }
    }

    /// Saccade clock: each onset minus the durations of all earlier
    /// fixations. Kernel arguments are differences on this clock.
    pub fn saccade_clock(&self) -> Vec<T> {
        let mut spent = T::zero();
        self.onsets
            .iter()
            .zip(&self.durations)
            .map(|(&t, &d)| {
                let tau = t - spent;
                spent = spent + d;
                tau
            })
            .collect()
    }

    /// Sum of all durations.
    pub fn total_duration(&self) -> T {
        self.durations.iter().fold(T::zero(), |a, &d| a + d)
    }

    pub fn push(&mut self, onset: T, location: Point<T>, duration: T, row: Vec<T>) {
        self.onsets.push(onset);
        self.locations.push(location);
        self.durations.push(duration);
        self.rows.push(row);
    }
}
