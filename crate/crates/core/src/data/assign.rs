use serde::{Deserialize, Serialize};

use crate::data::{Fixation, Scanpath, TextLayout};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assignment {
    Box {
        word_index: usize,
        char_index: usize,
        is_whitespace: bool,
    },
    Outside,
}

impl Assignment {
    /// The word index, for fixations on a non-whitespace glyph.
    pub fn word(&self) -> Option<usize> {
        match *self {
            Assignment::Box {
                word_index,
                is_whitespace: false,
                ..
            } => Some(word_index),
            _ => None,
        }
    }

    /// Whether the fixation landed in any box, whitespace included.
    pub fn on_char(&self) -> bool {
        matches!(self, Assignment::Box { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedFixation {
    /// Position of the fixation in its original (full) scanpath.
    pub index: usize,
    pub fixation: Fixation,
    pub assignment: Assignment,
}

/// A scanpath whose fixations carry their box assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedScanpath {
    pub reader_id: String,
    pub text_id: String,
    pub fixations: Vec<AnnotatedFixation>,
}

impl AnnotatedScanpath {
    pub fn new(scanpath: &Scanpath, layout: &TextLayout) -> Result<Self> {
        Ok(Self {
            reader_id: scanpath.reader_id.clone(),
            text_id: scanpath.text_id.clone(),
            fixations: assign_fixations(scanpath, layout)?,
        })
    }

    /// The full scanpath without annotations.
    pub fn scanpath(&self) -> Scanpath {
        Scanpath {
            reader_id: self.reader_id.clone(),
            text_id: self.text_id.clone(),
            fixations: self.fixations.iter().map(|a| a.fixation).collect(),
        }
    }

    pub fn filtered(&self) -> Scanpath {
        filter_scanpath(&self.reader_id, &self.text_id, &self.fixations)
    }

    /// The word-only subsequence, keeping annotations.
    pub fn word_fixations(&self) -> Vec<AnnotatedFixation> {
        self.fixations
            .iter()
            .filter(|a| a.assignment.word().is_some())
            .copied()
            .collect()
    }
}

/// Maps each fixation to the box whose half-open rectangle contains it.
pub fn assign_fixations(scanpath: &Scanpath, layout: &TextLayout) -> Result<Vec<AnnotatedFixation>> {
    scanpath.check_within(&layout.screen)?;
    Ok(scanpath
        .fixations
        .iter()
        .enumerate()
        .map(|(index, f)| {
            let assignment = layout
                .boxes
                .iter()
                .find(|b| b.rect.contains(f.location))
                .map_or(Assignment::Outside, |b| Assignment::Box {
                    word_index: b.word_index,
                    char_index: b.char_index,
                    is_whitespace: b.is_whitespace,
                });
            AnnotatedFixation {
                index,
                fixation: *f,
                assignment,
            }
        })
        .collect())
}

/// Keeps only fixations on a word; whitespace and outside fixations drop out.
pub fn filter_scanpath(reader_id: &str, text_id: &str, annotated: &[AnnotatedFixation]) -> Scanpath {
    Scanpath {
        reader_id: reader_id.to_string(),
        text_id: text_id.to_string(),
        fixations: annotated
            .iter()
            .filter(|a| a.assignment.word().is_some())
            .map(|a| a.fixation)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GlyphBox;
    use crate::geometry::Rect;

    fn layout() -> TextLayout {
        // Two words on one line: "ab cd" with 12 px glyphs, then a second line.
        let mut boxes = Vec::new();
        let glyphs = [("a", 0, 0, false), ("b", 0, 1, false), (" ", 0, 2, true), ("c", 1, 0, false), ("d", 1, 1, false)];
        for (i, (g, w, c, ws)) in glyphs.iter().enumerate() {
            boxes.push(GlyphBox {
                glyph: g.to_string(),
                rect: Rect::new(12.0 * i as f64, 0.0, 12.0, 20.0),
                word_index: *w,
                char_index: *c,
                is_whitespace: *ws,
            });
        }
        boxes.push(GlyphBox {
            glyph: "e".into(),
            rect: Rect::new(0.0, 40.0, 12.0, 20.0),
            word_index: 2,
            char_index: 0,
            is_whitespace: false,
        });
        boxes.push(GlyphBox {
            glyph: "f".into(),
            rect: Rect::new(12.0, 40.0, 12.0, 20.0),
            word_index: 3,
            char_index: 0,
            is_whitespace: false,
        });
        TextLayout::new("t", Rect::screen(100.0, 100.0), boxes).unwrap()
    }

    fn path(points: &[(f64, f64)]) -> Scanpath {
        let fixations = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Fixation::new(i as f64 * 0.3, x, y, 0.2))
            .collect();
        Scanpath::new("r", "t", fixations).unwrap()
    }

    #[test]
    fn center_of_first_char() {
        let ann = assign_fixations(&path(&[(6.0, 50.0)]), &layout()).unwrap();
        assert_eq!(
            ann[0].assignment,
            Assignment::Box {
                word_index: 2,
                char_index: 0,
                is_whitespace: false
            }
        );
    }

    #[test]
    fn between_lines_is_outside() {
        let ann = assign_fixations(&path(&[(6.0, 30.0)]), &layout()).unwrap();
        assert_eq!(ann[0].assignment, Assignment::Outside);
    }

    #[test]
    fn shared_edge_goes_to_right_box() {
        // x = 12 is the right edge of "a" and the left edge of "b".
        let ann = assign_fixations(&path(&[(12.0, 10.0), (24.0, 50.0)]), &layout()).unwrap();
        assert_eq!(ann[0].assignment.word(), Some(0));
        assert!(matches!(ann[0].assignment, Assignment::Box { char_index: 1, .. }));
        assert_eq!(ann[1].assignment, Assignment::Outside);
    }

    #[test]
    fn outside_screen_is_error() {
        assert!(assign_fixations(&path(&[(150.0, 10.0)]), &layout()).is_err());
    }

    #[test]
    fn filter_mixed_path() {
        // word, outside, whitespace, word, outside
        let sp = path(&[(1.0, 1.0), (1.0, 30.0), (30.0, 5.0), (40.0, 5.0), (90.0, 90.0)]);
        let ann = assign_fixations(&sp, &layout()).unwrap();
        let filtered = filter_scanpath("r", "t", &ann);
        assert_eq!(filtered.fixations, vec![sp.fixations[0], sp.fixations[3]]);
    }

    #[test]
    fn filter_keeps_order_with_two_outside() {
        let sp = path(&[(1.0, 1.0), (90.0, 90.0), (40.0, 5.0), (6.0, 30.0), (13.0, 45.0)]);
        let ann = assign_fixations(&sp, &layout()).unwrap();
        let filtered = filter_scanpath("r", "t", &ann);
        assert_eq!(
            filtered.fixations,
            vec![sp.fixations[0], sp.fixations[2], sp.fixations[4]]
        );
    }

    #[test]
    fn filter_all_outside_is_empty() {
        let ann = assign_fixations(&path(&[(90.0, 90.0), (80.0, 80.0)]), &layout()).unwrap();
        assert!(filter_scanpath("r", "t", &ann).is_empty());
    }

    #[test]
    fn filter_all_words_is_identity() {
        let sp = path(&[(1.0, 1.0), (40.0, 5.0), (13.0, 45.0)]);
        let ann = assign_fixations(&sp, &layout()).unwrap();
        assert_eq!(filter_scanpath("r", "t", &ann), sp);
    }
}
