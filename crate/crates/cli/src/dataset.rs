//! Turns the configured input files into model-ready samples.

use std::collections::BTreeMap;
use std::path::Path;

use log::{info, warn};

use readpp_core::data::io::{load_effects, load_layouts, load_scanpaths, Delimiter, EffectTable};
use readpp_core::data::{
    aggregate, build_design, pool_across_readers, word_effects, AggregatedRecord, AnnotatedFixation,
    AnnotatedScanpath, Assignment, ColumnKind, DesignMatrix, DesignOptions, EffectColumn, EffectLevel,
    MeasureKind, Scanpath, TextLayout,
};
use readpp_core::events::Events;
use readpp_core::fit::Sample;
use readpp_core::Rect;

use crate::config::Config;
use crate::error::{CliError, CliResult};

/// Scanpaths with their layouts and effects, as read from disk.
pub struct Corpus {
    pub scanpaths: Vec<Scanpath>,
    pub layouts: Option<BTreeMap<String, TextLayout>>,
    pub effects: EffectTable,
}

pub struct Dataset {
    pub samples: Vec<Sample>,
    pub columns: Vec<String>,
}

fn required<'a>(path: &'a Option<std::path::PathBuf>, what: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Usage(format!("no {what} given (flag or [data] in the config)")))
}

impl Corpus {
    pub fn load(config: &Config) -> CliResult<Self> {
        let path = required(&config.data.scanpaths, "scanpath file")?;
        let scanpaths = load_scanpaths(path, Delimiter::for_path(path))?;
        let layouts = config.data.layouts.as_deref().map(load_layouts).transpose()?;
        let effects = match config.data.effects.as_deref() {
            Some(p) => load_effects(p)?,
            None => EffectTable::default(),
        };
        info!(
            "loaded {} scanpaths, {} layouts",
            scanpaths.len(),
            layouts.as_ref().map_or(0, BTreeMap::len)
        );
        Ok(Self {
            scanpaths,
            layouts,
            effects,
        })
    }

    /// Every scanpath with its box assignment; without layouts every
    /// fixation is outside any box.
    pub fn annotate(&self) -> CliResult<Vec<AnnotatedScanpath>> {
        self.scanpaths
            .iter()
            .map(|sp| match &self.layouts {
                Some(layouts) => {
                    let layout = layouts.get(&sp.text_id).ok_or_else(|| {
                        CliError::Core(readpp_core::Error::Validation(format!(
                            "no layout for text `{}` of {}",
                            sp.text_id,
                            sp.key()
                        )))
                    })?;
                    Ok(AnnotatedScanpath::new(sp, layout)?)
                }
                None => Ok(AnnotatedScanpath {
                    reader_id: sp.reader_id.clone(),
                    text_id: sp.text_id.clone(),
                    fixations: sp
                        .fixations
                        .iter()
                        .enumerate()
                        .map(|(index, &fixation)| AnnotatedFixation {
                            index,
                            fixation,
                            assignment: Assignment::Outside,
                        })
                        .collect(),
                }),
            })
            .collect()
    }

    pub fn readers(&self) -> Vec<String> {
        let mut r: Vec<String> = self.scanpaths.iter().map(|s| s.reader_id.clone()).collect();
        r.sort();
        r.dedup();
        r
    }

    fn omega(&self, config: &Config, text_id: &str) -> CliResult<Rect> {
        if let Some([x0, y0, w, h]) = config.data.omega {
            return Ok(Rect::new(x0, y0, w, h));
        }
        self.layouts
            .as_ref()
            .and_then(|l| l.get(text_id))
            .map(|l| l.screen)
            .ok_or_else(|| CliError::Usage("no observation window: set data.omega or give layouts".into()))
    }

    /// One sample per scanpath, in file order.
    pub fn dataset(&self, config: &Config) -> CliResult<Dataset> {
        let design = &config.design;
        let needs_layout = config.data.filtered || !design.effects.is_empty() || !design.char_effects.is_empty();
        if needs_layout && self.layouts.is_none() {
            return Err(CliError::Usage("filtering and effects need layouts".into()));
        }
        let readers = self.readers();
        let options = DesignOptions {
            reader_encoding: design.reader_encoding,
            interactions: design.interactions,
        };
        let mut columns: Option<Vec<String>> = None;
        let mut samples = Vec::with_capacity(self.scanpaths.len());
        for a in self.annotate()? {
            let kept: Vec<AnnotatedFixation> = if config.data.filtered {
                a.word_fixations()
            } else {
                a.fixations.clone()
            };
            let scanpath = if config.data.filtered { a.filtered() } else { a.scanpath() };
            if scanpath.is_empty() {
                warn!("skipping empty scanpath {}", scanpath.key());
                continue;
            }
            let effects: Vec<EffectColumn> = design
                .effects
                .iter()
                .map(|e| (e, EffectLevel::Word))
                .chain(design.char_effects.iter().map(|e| (e, EffectLevel::Char)))
                .map(|(name, level)| EffectColumn {
                    name: name.clone(),
                    level,
                    values: self
                        .effects
                        .values(&a.reader_id, &a.text_id, name)
                        .cloned()
                        .unwrap_or_default(),
                })
                .collect();
            let matrix = build_design(&kept, &a.reader_id, &readers, &effects, options)?;
            columns.get_or_insert_with(|| matrix.names());
            let omega = self.omega(config, &a.text_id)?;
            samples.push(Sample::new(Events::new(&scanpath, Some(&matrix))?, omega));
        }
        let columns = columns.ok_or_else(|| {
            CliError::Core(readpp_core::Error::Validation("the dataset has no fixations".into()))
        })?;
        info!("dataset: {} scanpaths, columns [{}]", samples.len(), columns.join(", "));
        Ok(Dataset { samples, columns })
    }

    /// Word-level records of `measure`, optionally pooled across readers.
    pub fn records(&self, measure: MeasureKind, pool: bool) -> CliResult<Vec<AggregatedRecord>> {
        if self.layouts.is_none() {
            return Err(CliError::Usage("aggregation needs layouts".into()));
        }
        let sessions = self.annotate()?;
        let records = aggregate(&sessions, measure);
        Ok(if pool { pool_across_readers(&records)? } else { records })
    }

    /// Design for aggregated records: intercept, reader one-hots (unless
    /// pooled), word effects and their presence indicators.
    pub fn record_design(&self, records: &[AggregatedRecord], config: &Config) -> CliResult<DesignMatrix> {
        let sessions = self.annotate()?;
        let values = word_effects(&sessions, &self.effects);
        let mut readers: Vec<String> = records.iter().map(|r| r.reader_id.clone()).collect();
        readers.sort();
        readers.dedup();
        let encode = config.design.reader_encoding && !config.model.pool;
        let effects = &config.design.effects;
        let mut columns = vec![ColumnKind::Intercept];
        if encode {
            columns.extend(readers.iter().cloned().map(ColumnKind::Reader));
        }
        columns.extend(effects.iter().cloned().map(ColumnKind::Effect));
        columns.extend(effects.iter().cloned().map(ColumnKind::Presence));
        let rows = records
            .iter()
            .map(|r| {
                let mut row = if encode {
                    DesignMatrix::reader_row(&columns[..1 + readers.len()], &r.reader_id)
                } else {
                    vec![1.0]
                };
                let found = values.get(&(r.text_id.clone(), r.word_index));
                let present: Vec<Option<f64>> =
                    effects.iter().map(|e| found.and_then(|m| m.get(e)).copied()).collect();
                row.extend(present.iter().map(|v| v.unwrap_or(0.0)));
                row.extend(present.iter().map(|v| if v.is_some() { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        Ok(DesignMatrix::from_rows(columns, rows)?)
    }
}
