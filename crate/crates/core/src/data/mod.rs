//! Scanpaths, text layouts, fixation-to-word assignment, aggregation and
//! design matrices.
//!
//! All times are seconds and all locations are screen pixels. Loaders
//! convert declared millisecond inputs on the way in.

mod aggregate;
mod assign;
mod design;
pub mod io;

pub use aggregate::{aggregate, pool_across_readers, word_effects, AggregatedRecord, MeasureKind};
pub use assign::{assign_fixations, filter_scanpath, AnnotatedFixation, AnnotatedScanpath, Assignment};
pub use design::{
    build_design, ColumnKind, DesignMatrix, DesignOptions, EffectColumn, EffectLevel,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    /// Seconds since recording start.
    pub onset: f64,
    pub location: Point<f64>,
    /// Seconds.
    pub duration: f64,
}

impl Fixation {
    pub fn new(onset: f64, x: f64, y: f64, duration: f64) -> Self {
        Self {
            onset,
            location: Point::new(x, y),
            duration,
        }
    }

    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }
}

/// One reader's ordered fixations over one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scanpath {
    pub reader_id: String,
    pub text_id: String,
    pub fixations: Vec<Fixation>,
}

impl Scanpath {
    /// Builds a scanpath, enforcing onset ≥ 0, duration > 0, strictly
    /// increasing onsets and non-overlapping fixations.
    pub fn new(
        reader_id: impl Into<String>,
        text_id: impl Into<String>,
        fixations: Vec<Fixation>,
    ) -> Result<Self> {
        let sp = Self {
            reader_id: reader_id.into(),
            text_id: text_id.into(),
            fixations,
        };
        sp.validate()?;
        Ok(sp)
    }

    pub fn key(&self) -> String {
        format!("{}/{}", self.reader_id, self.text_id)
    }

    pub fn len(&self) -> usize {
        self.fixations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixations.is_empty()
    }

    /// End of the last fixation, or 0 for an empty path.
    pub fn end(&self) -> f64 {
        self.fixations.last().map_or(0.0, Fixation::end)
    }

    pub fn validate(&self) -> Result<()> {
        let key = self.key();
        let mut prev: Option<&Fixation> = None;
        for (i, f) in self.fixations.iter().enumerate() {
            if !(f.onset.is_finite() && f.onset >= 0.0) {
                return Err(Error::Validation(format!(
                    "scanpath {key}: fixation {i} has invalid onset {}",
                    f.onset
                )));
            }
            if !(f.duration.is_finite() && f.duration > 0.0) {
                return Err(Error::Validation(format!(
                    "scanpath {key}: fixation {i} has non-positive duration {}",
                    f.duration
                )));
            }
            if !(f.location.x.is_finite() && f.location.y.is_finite()) {
                return Err(Error::Validation(format!(
                    "scanpath {key}: fixation {i} has non-finite location"
                )));
            }
            if let Some(p) = prev {
                if f.onset <= p.onset {
                    return Err(Error::Validation(format!(
                        "scanpath {key}: onsets not strictly increasing at fixation {i}"
                    )));
                }
                if f.onset < p.end() {
                    return Err(Error::Validation(format!(
                        "scanpath {key}: fixation {i} starts before fixation {} ends",
                        i - 1
                    )));
                }
            }
            prev = Some(f);
        }
        Ok(())
    }

    /// Checks that every fixation lies in the screen region.
    pub fn check_within(&self, omega: &Rect<f64>) -> Result<()> {
        for (i, f) in self.fixations.iter().enumerate() {
            if !omega.contains_closed(f.location) {
                return Err(Error::Validation(format!(
                    "scanpath {}: fixation {i} at ({}, {}) lies outside the screen",
                    self.key(),
                    f.location.x,
                    f.location.y
                )));
            }
        }
        Ok(())
    }
}

/// A glyph (or whitespace) bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphBox {
    pub glyph: String,
    pub rect: Rect<f64>,
    pub word_index: usize,
    /// Position of the glyph within its word.
    pub char_index: usize,
    pub is_whitespace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextLayout {
    pub text_id: String,
    pub screen: Rect<f64>,
    pub boxes: Vec<GlyphBox>,
}

impl TextLayout {
    pub fn new(text_id: impl Into<String>, screen: Rect<f64>, boxes: Vec<GlyphBox>) -> Result<Self> {
        let layout = Self {
            text_id: text_id.into(),
            screen,
            boxes,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.text_id;
        if !(self.screen.width > 0.0 && self.screen.height > 0.0) {
            return Err(Error::Validation(format!("layout {id}: empty screen region")));
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if !(b.rect.width > 0.0 && b.rect.height > 0.0) {
                return Err(Error::Validation(format!("layout {id}: box {i} is empty")));
            }
            if !self.screen.contains_rect(&b.rect) {
                return Err(Error::Validation(format!(
                    "layout {id}: box {i} lies outside the screen"
                )));
            }
        }
        // Word indices must form a contiguous range.
        let mut words: Vec<usize> = self
            .boxes
            .iter()
            .filter(|b| !b.is_whitespace)
            .map(|b| b.word_index)
            .collect();
        words.sort_unstable();
        words.dedup();
        if let (Some(&lo), Some(&hi)) = (words.first(), words.last()) {
            if hi - lo + 1 != words.len() {
                return Err(Error::Validation(format!(
                    "layout {id}: word indices are not contiguous"
                )));
            }
        }
        for (i, a) in self.boxes.iter().enumerate() {
            for b in &self.boxes[i + 1..] {
                if !a.is_whitespace
                    && !b.is_whitespace
                    && a.word_index == b.word_index
                    && a.rect.overlaps(&b.rect)
                {
                    return Err(Error::Validation(format!(
                        "layout {id}: overlapping boxes in word {}",
                        a.word_index
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_words(&self) -> usize {
        self.boxes
            .iter()
            .filter(|b| !b.is_whitespace)
            .map(|b| b.word_index + 1)
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_duration() {
        let err = Scanpath::new("r", "t", vec![Fixation::new(0.0, 1.0, 1.0, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn rejects_overlap_and_order() {
        let f = |t, d| Fixation::new(t, 0.0, 0.0, d);
        assert!(Scanpath::new("r", "t", vec![f(0.0, 0.2), f(0.1, 0.2)]).is_err());
        assert!(Scanpath::new("r", "t", vec![f(0.5, 0.1), f(0.5, 0.1)]).is_err());
        assert!(Scanpath::new("r", "t", vec![f(0.0, 0.2), f(0.2, 0.2)]).is_ok());
    }

    #[test]
    fn layout_rejects_gaps_in_word_indices() {
        let b = |x, w| GlyphBox {
            glyph: "a".into(),
            rect: Rect::new(x, 0.0, 10.0, 10.0),
            word_index: w,
            char_index: 0,
            is_whitespace: false,
        };
        let screen = Rect::screen(100.0, 100.0);
        assert!(TextLayout::new("t", screen, vec![b(0.0, 0), b(10.0, 1)]).is_ok());
        assert!(TextLayout::new("t", screen, vec![b(0.0, 0), b(10.0, 2)]).is_err());
        assert!(TextLayout::new("t", screen, vec![b(0.0, 0), b(5.0, 0)]).is_err());
    }
}
