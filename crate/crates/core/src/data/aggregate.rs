use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::assign::AnnotatedScanpath;
use crate::data::io::EffectTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    FirstFixation,
    Gaze,
    Total,
    Scanpath,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 4] = [
        MeasureKind::FirstFixation,
        MeasureKind::Gaze,
        MeasureKind::Total,
        MeasureKind::Scanpath,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::FirstFixation => "first_fixation",
            MeasureKind::Gaze => "gaze",
            MeasureKind::Total => "total",
            MeasureKind::Scanpath => "scanpath",
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MeasureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown aggregation strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedRecord {
    /// Reader identifier, or `pooled` after averaging across readers.
    pub reader_id: String,
    pub text_id: String,
    pub word_index: usize,
    pub kind: MeasureKind,
    /// Seconds.
    pub value: f64,
}

/// Word-level aggregation over the word-only subsequence of each scanpath.
///
/// First-fixation, gaze and total records come out in word order per
/// session; scanpath records come out in temporal order, one per maximal
/// run of consecutive fixations on the same word.
pub fn aggregate(sessions: &[AnnotatedScanpath], kind: MeasureKind) -> Vec<AggregatedRecord> {
    let mut out = Vec::new();
    for session in sessions {
        let mut runs: Vec<(usize, f64)> = Vec::new();
        for a in session.word_fixations() {
            let word = a.assignment.word().expect("word fixations only");
            match runs.last_mut() {
                Some((w, sum)) if *w == word => *sum += a.fixation.duration,
                _ => runs.push((word, a.fixation.duration)),
            }
        }
        let record = |word_index: usize, value: f64| AggregatedRecord {
            reader_id: session.reader_id.clone(),
            text_id: session.text_id.clone(),
            word_index,
            kind,
            value,
        };
        match kind {
            MeasureKind::Scanpath => out.extend(runs.iter().map(|&(w, v)| record(w, v))),
            MeasureKind::Gaze | MeasureKind::Total => {
                let mut per_word: BTreeMap<usize, f64> = BTreeMap::new();
                for &(w, v) in &runs {
                    match per_word.get_mut(&w) {
                        None => {
                            per_word.insert(w, v);
                        }
                        Some(sum) if kind == MeasureKind::Total => *sum += v,
                        Some(_) => {}
                    }
                }
                out.extend(per_word.into_iter().map(|(w, v)| record(w, v)));
            }
            MeasureKind::FirstFixation => {
                let mut per_word: BTreeMap<usize, f64> = BTreeMap::new();
                for a in session.word_fixations() {
                    let w = a.assignment.word().expect("word fixations only");
                    per_word.entry(w).or_insert(a.fixation.duration);
                }
                out.extend(per_word.into_iter().map(|(w, v)| record(w, v)));
            }
        }
    }
    out
}

/// Averages records over readers, one output record per `(text, word)`.
pub fn pool_across_readers(records: &[AggregatedRecord]) -> Result<Vec<AggregatedRecord>> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    if records.iter().any(|r| r.kind != first.kind) {
        return Err(Error::Usage("cannot pool records of different measure kinds".into()));
    }
    let mut sums: BTreeMap<(String, usize), (f64, usize)> = BTreeMap::new();
    for r in records {
        let slot = sums.entry((r.text_id.clone(), r.word_index)).or_insert((0.0, 0));
        slot.0 += r.value;
        slot.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|((text_id, word_index), (sum, n))| AggregatedRecord {
            reader_id: "pooled".into(),
            text_id,
            word_index,
            kind: first.kind,
            value: sum / n as f64,
        })
        .collect())
}

/// Word-level effect values, read off the first fixation that landed on
/// each word: `(text_id, word_index)` → effect → value.
pub fn word_effects(
    sessions: &[AnnotatedScanpath],
    effects: &EffectTable,
) -> BTreeMap<(String, usize), BTreeMap<String, f64>> {
    let mut out: BTreeMap<(String, usize), BTreeMap<String, f64>> = BTreeMap::new();
    for s in sessions {
        let Some(table) = effects.sessions.get(&(s.reader_id.clone(), s.text_id.clone())) else {
            continue;
        };
        for a in s.word_fixations() {
            let w = a.assignment.word().expect("word fixations only");
            let slot = out.entry((s.text_id.clone(), w)).or_default();
            for (name, values) in table {
                if let Some(&v) = values.get(&a.index) {
                    slot.entry(name.clone()).or_insert(v);
                }
            }
        }
    }
    out
}
