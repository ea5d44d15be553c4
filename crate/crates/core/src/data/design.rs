use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::AnnotatedFixation;
use crate::error::{Error, Result};

/// Which fixations an effect value applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectLevel {
    /// Word-level attributes (word surprisal, length, frequency): only
    /// fixations on a non-whitespace glyph.
    #[default]
    Word,
    /// Character-level attributes: any fixation inside a box, whitespace
    /// included.
    Char,
}

/// One named predictor with values keyed by original fixation index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EffectColumn {
    pub name: String,
    pub level: EffectLevel,
    pub values: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DesignOptions {
    pub reader_encoding: bool,
    pub interactions: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Intercept,
    Reader(String),
    Effect(String),
    Interaction { effect: String, reader: String },
    Presence(String),
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnKind::Intercept => f.write_str("intercept"),
            ColumnKind::Reader(r) => write!(f, "reader:{r}"),
            ColumnKind::Effect(e) => write!(f, "effect:{e}"),
            ColumnKind::Interaction { effect, reader } => write!(f, "effect:{effect}*reader:{reader}"),
            ColumnKind::Presence(e) => write!(f, "present:{e}"),
        }
    }
}

impl ColumnKind {
    pub fn parse(name: &str) -> Result<Self> {
        if name == "intercept" {
            return Ok(ColumnKind::Intercept);
        }
        if let Some((e, r)) = name.split_once('*') {
            if let (Some(effect), Some(reader)) = (e.strip_prefix("effect:"), r.strip_prefix("reader:")) {
                return Ok(ColumnKind::Interaction {
                    effect: effect.into(),
                    reader: reader.into(),
                });
            }
        }
        if let Some(r) = name.strip_prefix("reader:") {
            return Ok(ColumnKind::Reader(r.into()));
        }
        if let Some(e) = name.strip_prefix("effect:") {
            return Ok(ColumnKind::Effect(e.into()));
        }
        if let Some(e) = name.strip_prefix("present:") {
            return Ok(ColumnKind::Presence(e.into()));
        }
        Err(Error::Validation(format!("unknown design column `{name}`")))
    }
}

/// Per-fixation predictor vectors with a named column schema.
///
/// Column order is always: intercept, reader one-hots, effects,
/// effect×reader interactions (effect-major), presence indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub columns: Vec<ColumnKind>,
    pub rows: Vec<Vec<f64>>,
}

impl DesignMatrix {
    pub fn from_rows(columns: Vec<ColumnKind>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(i) = rows.iter().position(|r| r.len() != columns.len()) {
            return Err(Error::Validation(format!(
                "design row {i} has {} values for {} columns",
                rows[i].len(),
                columns.len()
            )));
        }
        Ok(Self { columns, rows })
    }

    pub fn intercept_only(n: usize) -> Self {
        Self {
            columns: vec![ColumnKind::Intercept],
            rows: vec![vec![1.0]; n],
        }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(ToString::to_string).collect()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.to_string() == name)
    }

    /// Builds the row of a fixation by `reader` on which no effect is
    /// present.
    pub fn reader_row(columns: &[ColumnKind], reader: &str) -> Vec<f64> {
        columns
            .iter()
            .map(|c| match c {
                ColumnKind::Intercept => 1.0,
                ColumnKind::Reader(r) if r == reader => 1.0,
                _ => 0.0,
            })
            .collect()
    }

    /// Restricts to the given subset of rows, in order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            columns: self.columns.clone(),
            rows: rows.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// Assembles the design matrix of one annotated scanpath.
///
/// Effect values for fixations that do not qualify under the effect's level
/// (or that have no value) are zeroed and their presence indicator is 0.
pub fn build_design(
    annotated: &[AnnotatedFixation],
    reader_id: &str,
    readers: &[String],
    effects: &[EffectColumn],
    options: DesignOptions,
) -> Result<DesignMatrix> {
    let mut columns = vec![ColumnKind::Intercept];
    let reader_pos = if options.reader_encoding {
        let pos = readers
            .iter()
            .position(|r| r == reader_id)
            .ok_or_else(|| Error::Validation(format!("reader `{reader_id}` is not in the reader list")))?;
        columns.extend(readers.iter().map(|r| ColumnKind::Reader(r.clone())));
        Some(pos)
    } else {
        None
    };
    columns.extend(effects.iter().map(|e| ColumnKind::Effect(e.name.clone())));
    let interactions = options.interactions && options.reader_encoding;
    if interactions {
        for e in effects {
            columns.extend(readers.iter().map(|r| ColumnKind::Interaction {
                effect: e.name.clone(),
                reader: r.clone(),
            }));
        }
    }
    columns.extend(effects.iter().map(|e| ColumnKind::Presence(e.name.clone())));

    let by_index: BTreeMap<usize, &AnnotatedFixation> = annotated.iter().map(|a| (a.index, a)).collect();
    for e in effects {
        if let Some(idx) = e.values.keys().find(|i| !by_index.contains_key(i)) {
            return Err(Error::Validation(format!(
                "effect `{}` has a value for unknown fixation index {idx}",
                e.name
            )));
        }
    }

    let n_readers = readers.len();
    let rows = annotated
        .iter()
        .map(|a| {
            let mut row = Vec::with_capacity(columns.len());
            row.push(1.0);
            if let Some(pos) = reader_pos {
                row.extend((0..n_readers).map(|j| if j == pos { 1.0 } else { 0.0 }));
            }
            let present: Vec<Option<f64>> = effects
                .iter()
                .map(|e| {
                    let eligible = match e.level {
                        EffectLevel::Word => a.assignment.word().is_some(),
                        EffectLevel::Char => a.assignment.on_char(),
                    };
                    if eligible {
                        e.values.get(&a.index).copied()
                    } else {
                        None
                    }
                })
                .collect();
            row.extend(present.iter().map(|v| v.unwrap_or(0.0)));
            if interactions {
                let pos = reader_pos.expect("interactions need reader encoding");
                for v in &present {
                    row.extend((0..n_readers).map(|j| if j == pos { v.unwrap_or(0.0) } else { 0.0 }));
                }
            }
            row.extend(present.iter().map(|v| if v.is_some() { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    Ok(DesignMatrix { columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Assignment, Fixation};

    fn fixations(assignments: &[Assignment]) -> Vec<AnnotatedFixation> {
        assignments
            .iter()
            .enumerate()
            .map(|(i, &assignment)| AnnotatedFixation {
                index: i,
                fixation: Fixation::new(i as f64, 0.0, 0.0, 0.2),
                assignment,
            })
            .collect()
    }

    const WORD: Assignment = Assignment::Box {
        word_index: 0,
        char_index: 0,
        is_whitespace: false,
    };
    const SPACE: Assignment = Assignment::Box {
        word_index: 0,
        char_index: 1,
        is_whitespace: true,
    };

    fn z(values: &[(usize, f64)], level: EffectLevel) -> EffectColumn {
        EffectColumn {
            name: "z".into(),
            level,
            values: values.iter().copied().collect(),
        }
    }

    #[test]
    fn intercept_only() {
        let d = build_design(&fixations(&[WORD, WORD]), "a", &[], &[], DesignOptions::default()).unwrap();
        assert_eq!(d.width(), 1);
        assert_eq!(d.rows, vec![vec![1.0], vec![1.0]]);
    }

    #[test]
    fn two_readers_one_effect_with_interactions() {
        let readers = vec!["a".to_string(), "b".to_string()];
        let opts = DesignOptions {
            reader_encoding: true,
            interactions: true,
        };
        let d = build_design(
            &fixations(&[WORD, Assignment::Outside]),
            "b",
            &readers,
            &[z(&[(0, 2.5), (1, 9.0)], EffectLevel::Word)],
            opts,
        )
        .unwrap();
        assert_eq!(d.width(), 7);
        assert_eq!(
            d.names(),
            ["intercept", "reader:a", "reader:b", "effect:z", "effect:z*reader:a", "effect:z*reader:b", "present:z"]
        );
        assert_eq!(d.rows[0], vec![1.0, 0.0, 1.0, 2.5, 0.0, 2.5, 1.0]);
        // Outside fixation: value masked, presence 0.
        assert_eq!(d.rows[1], vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn char_level_effects_reach_whitespace() {
        let f = fixations(&[SPACE, SPACE]);
        let word = build_design(&f, "a", &[], &[z(&[(0, 1.0)], EffectLevel::Word)], DesignOptions::default()).unwrap();
        assert_eq!(word.rows[0], vec![1.0, 0.0, 0.0]);
        let ch = build_design(&f, "a", &[], &[z(&[(0, 1.0)], EffectLevel::Char)], DesignOptions::default()).unwrap();
        assert_eq!(ch.rows[0], vec![1.0, 1.0, 1.0]);
        assert_eq!(ch.rows[1], vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn unknown_index_is_error() {
        let err = build_design(&fixations(&[WORD]), "a", &[], &[z(&[(4, 1.0)], EffectLevel::Word)], DesignOptions::default());
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn column_names_parse_back() {
        for c in [
            ColumnKind::Intercept,
            ColumnKind::Reader("r1".into()),
            ColumnKind::Effect("len".into()),
            ColumnKind::Interaction {
                effect: "len".into(),
                reader: "r1".into(),
            },
            ColumnKind::Presence("len".into()),
        ] {
            assert_eq!(ColumnKind::parse(&c.to_string()).unwrap(), c);
        }
    }
}
