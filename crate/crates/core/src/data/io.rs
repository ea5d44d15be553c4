//! Delimited text formats for scanpaths, layouts, effects and aggregated
//! records.
//!
//! Scanpath files carry an optional `# unit=ms|s` pragma before the header
//! and the columns `reader_id,text_id,onset,duration,x,y`. Layout files carry
//! an optional `# screen=WIDTHxHEIGHT` pragma and the columns
//! `text_id,glyph,x0,y0,w,h,word_index,char_index,is_whitespace`. Effects
//! files have `reader_id,text_id,fixation_index,effect_name,value`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crate::data::{AggregatedRecord, AnnotatedFixation, Assignment, Fixation, GlyphBox, MeasureKind, Scanpath, TextLayout};
use crate::error::{Error, Result};
use crate::geometry::Rect;

pub const SCANPATH_COLUMNS: [&str; 6] = ["reader_id", "text_id", "onset", "duration", "x", "y"];
pub const LAYOUT_COLUMNS: [&str; 9] = [
    "text_id",
    "glyph",
    "x0",
    "y0",
    "w",
    "h",
    "word_index",
    "char_index",
    "is_whitespace",
];
pub const EFFECT_COLUMNS: [&str; 5] = ["reader_id", "text_id", "fixation_index", "effect_name", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Delimiter {
    #[default]
    Comma,
    Tab,
}

impl Delimiter {
    /// Tab for `.tsv`/`.tab` files, comma otherwise.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") => Delimiter::Tab,
            _ => Delimiter::Comma,
        }
    }

    fn byte(self) -> u8 {
        match self {
            Delimiter::Comma => b',',
            Delimiter::Tab => b'\t',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeUnit {
    #[default]
    Seconds,
    Milliseconds,
}

impl TimeUnit {
    fn scale(self) -> f64 {
        match self {
            TimeUnit::Seconds => 1.0,
            TimeUnit::Milliseconds => 1e-3,
        }
    }
}

/// Splits leading `#` pragma lines from the body and parses `key=value` pairs.
struct Pragmas {
    values: BTreeMap<String, (String, u64)>,
    lines: u64,
}

fn split_pragmas<'a>(text: &'a str, source: &str) -> Result<(Pragmas, &'a str)> {
    let mut values = BTreeMap::new();
    let mut rest = text;
    let mut lines = 0u64;
    loop {
        let trimmed = rest.trim_start_matches('\u{feff}');
        if !trimmed.starts_with('#') {
            break;
        }
        let (line, tail) = match trimmed.find('\n') {
            Some(i) => (&trimmed[..i], &trimmed[i + 1..]),
            None => (trimmed, ""),
        };
        lines += 1;
        for token in line.trim_start_matches('#').split_whitespace() {
            let Some((k, v)) = token.split_once('=') else {
                return Err(Error::parse(source, lines, format!("malformed pragma `{token}`")));
            };
            values.insert(k.trim().to_string(), (v.trim().to_string(), lines));
        }
        rest = tail;
    }
    Ok((Pragmas { values, lines }, rest))
}

struct Table<'a> {
    source: &'a str,
    offset: u64,
    index: Vec<usize>,
    reader: csv::Reader<&'a [u8]>,
}

impl<'a> Table<'a> {
    fn new(body: &'a str, source: &'a str, offset: u64, delimiter: Delimiter, columns: &[&str]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter.byte())
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(source, offset + 1, e.to_string()))?
            .clone();
        let mut index = Vec::with_capacity(columns.len());
        for c in columns {
            let pos = headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| Error::parse(source, offset + 1, format!("missing column `{c}`")))?;
            index.push(pos);
        }
        Ok(Self {
            source,
            offset,
            index,
            reader,
        })
    }

    /// Visits every row as `(file line, fields in requested column order)`.
    fn for_each(&mut self, mut f: impl FnMut(u64, &[&str]) -> Result<()>) -> Result<()> {
        let mut record = csv::StringRecord::new();
        loop {
            let more = self.reader.read_record(&mut record).map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::parse(self.source, self.offset + line, e.to_string())
            })?;
            if !more {
                return Ok(());
            }
            let line = self.offset + record.position().map_or(0, |p| p.line());
            let fields: Option<Vec<&str>> = self.index.iter().map(|&i| record.get(i)).collect();
            match fields {
                Some(fields) => f(line, &fields)?,
                None => return Err(Error::parse(self.source, line, "missing field")),
            }
        }
    }
}

fn num(source: &str, line: u64, name: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::parse(source, line, format!("column `{name}`: `{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(Error::parse(source, line, format!("column `{name}`: non-finite value")));
    }
    Ok(x)
}

fn index(source: &str, line: u64, name: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::parse(source, line, format!("column `{name}`: `{v}` is not an index")))
}

fn flag(source: &str, line: u64, name: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "t" | "yes" => Ok(true),
        "0" | "false" | "f" | "no" => Ok(false),
        _ => Err(Error::parse(source, line, format!("column `{name}`: `{v}` is not a boolean"))),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    BufReader::new(File::open(path)?).read_to_string(&mut s)?;
    Ok(s)
}

/// Parses scanpath text. Rows are grouped by `(reader_id, text_id)` in
/// order of first appearance; fixations keep file order.
pub fn parse_scanpaths(text: &str, source: &str, delimiter: Delimiter) -> Result<Vec<Scanpath>> {
    let (pragmas, body) = split_pragmas(text, source)?;
    let unit = match pragmas.values.get("unit") {
        None => TimeUnit::Seconds,
        Some((u, line)) => match u.as_str() {
            "s" => TimeUnit::Seconds,
            "ms" => TimeUnit::Milliseconds,
            other => return Err(Error::parse(source, *line, format!("unknown time unit `{other}`"))),
        },
    };
    let scale = unit.scale();
    let mut table = Table::new(body, source, pragmas.lines, delimiter, &SCANPATH_COLUMNS)?;
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<Fixation>> = BTreeMap::new();
    table.for_each(|line, f| {
        let onset = num(source, line, "onset", f[2])? * scale;
        let duration = num(source, line, "duration", f[3])? * scale;
        let x = num(source, line, "x", f[4])?;
        let y = num(source, line, "y", f[5])?;
        let key = (f[0].to_string(), f[1].to_string());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(Fixation::new(onset, x, y, duration));
        Ok(())
    })?;
    order
        .into_iter()
        .map(|key| {
            let fixations = groups.remove(&key).unwrap_or_default();
            Scanpath::new(key.0, key.1, fixations)
        })
        .collect()
}

pub fn load_scanpaths(path: &Path, delimiter: Delimiter) -> Result<Vec<Scanpath>> {
    let text = read_to_string(path)?;
    parse_scanpaths(&text, &path.display().to_string(), delimiter)
}

/// Writes the canonical form: `# unit=s` pragma, header, one row per
/// fixation with shortest round-trip decimals.
pub fn write_scanpaths<W: Write>(out: W, scanpaths: &[Scanpath], delimiter: Delimiter) -> Result<()> {
    let mut out = out;
    writeln!(out, "# unit=s")?;
    let mut w = csv::WriterBuilder::new().delimiter(delimiter.byte()).from_writer(out);
    w.write_record(SCANPATH_COLUMNS).map_err(csv_io)?;
    for sp in scanpaths {
        for f in &sp.fixations {
            w.write_record([
                sp.reader_id.as_str(),
                sp.text_id.as_str(),
                &f.onset.to_string(),
                &f.duration.to_string(),
                &f.location.x.to_string(),
                &f.location.y.to_string(),
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_scanpaths(path: &Path, scanpaths: &[Scanpath]) -> Result<()> {
    write_scanpaths(File::create(path)?, scanpaths, Delimiter::for_path(path))
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Parses layout text into one [`TextLayout`] per `text_id`.
///
/// Without a `# screen=WxH` pragma the screen is the smallest
/// origin-anchored rectangle covering every box.
pub fn parse_layouts(text: &str, source: &str, delimiter: Delimiter) -> Result<BTreeMap<String, TextLayout>> {
    let (pragmas, body) = split_pragmas(text, source)?;
    let screen = match pragmas.values.get("screen") {
        None => None,
        Some((v, line)) => {
            let parsed = v
                .split_once('x')
                .and_then(|(w, h)| Some((w.parse::<f64>().ok()?, h.parse::<f64>().ok()?)));
            match parsed {
                Some((w, h)) => Some(Rect::screen(w, h)),
                None => return Err(Error::parse(source, *line, format!("malformed screen `{v}`"))),
            }
        }
    };
    let mut table = Table::new(body, source, pragmas.lines, delimiter, &LAYOUT_COLUMNS)?;
    let mut boxes: BTreeMap<String, Vec<GlyphBox>> = BTreeMap::new();
    table.for_each(|line, f| {
        let rect = Rect::new(
            num(source, line, "x0", f[2])?,
            num(source, line, "y0", f[3])?,
            num(source, line, "w", f[4])?,
            num(source, line, "h", f[5])?,
        );
        boxes.entry(f[0].to_string()).or_default().push(GlyphBox {
            glyph: f[1].to_string(),
            rect,
            word_index: index(source, line, "word_index", f[6])?,
            char_index: index(source, line, "char_index", f[7])?,
            is_whitespace: flag(source, line, "is_whitespace", f[8])?,
        });
        Ok(())
    })?;
    boxes
        .into_iter()
        .map(|(text_id, boxes)| {
            let screen = screen.unwrap_or_else(|| {
                let w = boxes.iter().map(|b| b.rect.x1()).fold(0.0, f64::max);
                let h = boxes.iter().map(|b| b.rect.y1()).fold(0.0, f64::max);
                Rect::screen(w, h)
            });
            Ok((text_id.clone(), TextLayout::new(text_id, screen, boxes)?))
        })
        .collect()
}

pub fn load_layouts(path: &Path) -> Result<BTreeMap<String, TextLayout>> {
    let text = read_to_string(path)?;
    parse_layouts(&text, &path.display().to_string(), Delimiter::for_path(path))
}

/// Precomputed per-fixation predictor values, keyed by session.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EffectTable {
    /// `(reader_id, text_id)` → effect name → fixation index → value.
    pub sessions: BTreeMap<(String, String), BTreeMap<String, BTreeMap<usize, f64>>>,
}

impl EffectTable {
    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .sessions
            .values()
            .flat_map(|m| m.keys().cloned())
            .collect();
        names.sort();
        names.dedup();
        names
    }

    pub fn values(&self, reader_id: &str, text_id: &str, effect: &str) -> Option<&BTreeMap<usize, f64>> {
        self.sessions
            .get(&(reader_id.to_string(), text_id.to_string()))
            .and_then(|m| m.get(effect))
    }
}

pub fn parse_effects(text: &str, source: &str, delimiter: Delimiter) -> Result<EffectTable> {
    let (pragmas, body) = split_pragmas(text, source)?;
    let mut table = Table::new(body, source, pragmas.lines, delimiter, &EFFECT_COLUMNS)?;
    let mut effects = EffectTable::default();
    table.for_each(|line, f| {
        let idx = index(source, line, "fixation_index", f[2])?;
        let value = num(source, line, "value", f[4])?;
        let slot = effects
            .sessions
            .entry((f[0].to_string(), f[1].to_string()))
            .or_default()
            .entry(f[3].to_string())
            .or_default();
        if slot.insert(idx, value).is_some() {
            return Err(Error::parse(source, line, format!("duplicate value for `{}` at fixation {idx}", f[3])));
        }
        Ok(())
    })?;
    Ok(effects)
}

pub fn load_effects(path: &Path) -> Result<EffectTable> {
    let text = read_to_string(path)?;
    parse_effects(&text, &path.display().to_string(), Delimiter::for_path(path))
}

/// Writes annotated fixations with their box assignment.
pub fn write_annotated<W: Write>(out: W, sessions: &[(Scanpath, Vec<AnnotatedFixation>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "reader_id", "text_id", "fixation_index", "onset", "duration", "x", "y", "word_index", "char_index",
        "is_whitespace",
    ])
    .map_err(csv_io)?;
    for (sp, ann) in sessions {
        for a in ann {
            let f = &a.fixation;
            let (word, ch, ws) = match a.assignment {
                Assignment::Box {
                    word_index,
                    char_index,
                    is_whitespace,
                } => (word_index.to_string(), char_index.to_string(), is_whitespace.to_string()),
                Assignment::Outside => (String::new(), String::new(), String::new()),
            };
            w.write_record([
                sp.reader_id.clone(),
                sp.text_id.clone(),
                a.index.to_string(),
                f.onset.to_string(),
                f.duration.to_string(),
                f.location.x.to_string(),
                f.location.y.to_string(),
                word,
                ch,
                ws,
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_records<W: Write>(out: W, records: &[AggregatedRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["reader_id", "text_id", "word_index", "measure", "value"])
        .map_err(csv_io)?;
    for r in records {
        w.write_record([
            r.reader_id.clone(),
            r.text_id.clone(),
            r.word_index.to_string(),
            r.kind.name().to_string(),
            r.value.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_records(text: &str, source: &str) -> Result<Vec<AggregatedRecord>> {
    let (pragmas, body) = split_pragmas(text, source)?;
    let mut table = Table::new(
        body,
        source,
        pragmas.lines,
        Delimiter::Comma,
        &["reader_id", "text_id", "word_index", "measure", "value"],
    )?;
    let mut out = Vec::new();
    table.for_each(|line, f| {
        let kind: MeasureKind = f[3].parse().map_err(|e: Error| Error::parse(source, line, e.to_string()))?;
        let value = num(source, line, "value", f[4])?;
        if value <= 0.0 {
            return Err(Error::parse(source, line, "aggregated value must be positive"));
        }
        out.push(AggregatedRecord {
            reader_id: f[0].to_string(),
            text_id: f[1].to_string(),
            word_index: index(source, line, "word_index", f[2])?,
            kind,
            value,
        });
        Ok(())
    })?;
    Ok(out)
}
