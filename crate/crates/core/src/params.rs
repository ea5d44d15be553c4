//! Versioned plain-text parameter documents.
//!
//! ```text
//! # readpp-params v1
//! [model]
//! kind = saccade
//! variant = hawkes
//! columns = intercept,reader:a
//! [values]
//! base_rate = 2.5e-7
//! alpha[intercept] = 12.1
//! ```
//!
//! Values are keyed by parameter block and design-column name, so a document
//! fitted under one specification can seed another (warm starting).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::duration::{
    Distribution, DurationParams, DurationSpec, GammaKernel, KernelClock, MeanVariant, SpilloverSource,
};
use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::saccade::{Block, Link, MeanFn, SaccadeParams, SaccadeSpec, Variant};
use crate::scalar::inv_softplus;

pub const HEADER: &str = "# readpp-params v1";

const AXES: [&str; 2] = ["x", "y"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamDoc {
    pub meta: Vec<(String, String)>,
    pub values: Vec<(String, f64)>,
}

impl ParamDoc {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| Error::Validation(format!("parameter document lacks `{key}`")))
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn require(&self, key: &str) -> Result<f64> {
        self.get(key)
            .ok_or_else(|| Error::Validation(format!("parameter document lacks value `{key}`")))
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn set(&mut self, key: &str, value: f64) {
        match self.values.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.values.push((key.to_string(), value)),
        }
    }

    pub fn columns(&self) -> Vec<String> {
        split_list(self.meta("columns").unwrap_or(""))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\n[model]\n");
        for (k, v) in &self.meta {
            let _ = writeln!(out, "{k} = {v}");
        }
        out.push_str("[values]\n");
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v:?}");
        }
        out
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == HEADER => {}
            _ => return Err(Error::parse(source, 1, format!("expected `{HEADER}`"))),
        }
        let mut doc = ParamDoc::default();
        let mut section = "";
        for (i, raw) in lines {
            let line = raw.trim();
            let lineno = i as u64 + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[model]" || line == "[values]" {
                section = if line == "[model]" { "model" } else { "values" };
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::parse(source, lineno, "expected `key = value`"))?;
            match section {
                "model" => doc.meta.push((k.to_string(), v.to_string())),
                "values" => {
                    let x: f64 = v
                        .parse()
                        .map_err(|_| Error::parse(source, lineno, format!("`{v}` is not a number")))?;
                    if doc.get(k).is_some() {
                        return Err(Error::parse(source, lineno, format!("duplicate key `{k}`")));
                    }
                    doc.values.push((k.to_string(), x));
                }
                _ => return Err(Error::parse(source, lineno, "value outside a section")),
            }
        }
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}

fn parse_meta<T: for<'de> Deserialize<'de>>(doc: &ParamDoc, key: &str) -> Result<T> {
    let raw = doc.require_meta(key)?;
    serde_json::from_value(serde_json::Value::String(raw.to_string()))
        .map_err(|_| Error::Validation(format!("unknown {key} `{raw}`")))
}

fn meta_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("unit enum variants serialize as strings"),
    }
}

pub fn omega_text(omega: &Rect<f64>) -> String {
    format!("{:?},{:?},{:?},{:?}", omega.x0, omega.y0, omega.width, omega.height)
}

pub fn parse_omega(s: &str) -> Result<Rect<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Validation(format!("bad rectangle `{s}`")))?;
    match v[..] {
        [x0, y0, w, h] if w > 0.0 && h > 0.0 => Ok(Rect::new(x0, y0, w, h)),
        _ => Err(Error::Validation(format!("bad rectangle `{s}`"))),
    }
}

// --- saccade ---------------------------------------------------------------

pub fn saccade_keys(spec: &SaccadeSpec, columns: &[String]) -> Vec<String> {
    let mut keys = vec!["base_rate".to_string()];
    if spec.uses(Block::SpatialVar) {
        keys.push("spatial_var".into());
    }
    if spec.uses(Block::Excitation) {
        keys.extend(columns.iter().map(|c| format!("alpha[{c}]")));
        keys.extend(columns.iter().map(|c| format!("beta[{c}]")));
    }
    if spec.uses(Block::Transform) {
        for i in AXES {
            for j in AXES {
                keys.push(format!("A[{i},{j}]"));
            }
        }
        keys.extend(AXES.iter().map(|i| format!("b[{i}]")));
    }
    if spec.uses(Block::PredictorOffset) {
        for i in AXES {
            keys.extend(columns.iter().map(|c| format!("C[{i},{c}]")));
        }
    }
    keys
}

pub fn saccade_to_doc(spec: &SaccadeSpec, columns: &[String], params: &SaccadeParams<f64>) -> ParamDoc {
    let mut doc = ParamDoc::default();
    doc.set_meta("kind", "saccade");
    doc.set_meta("variant", meta_name(&spec.variant));
    doc.set_meta("mean_fn", meta_name(&spec.mean_fn));
    doc.set_meta("link", meta_name(&spec.link));
    doc.set_meta("columns", columns.join(","));
    for key in saccade_keys(spec, columns) {
        let v = saccade_value(params, columns, &key).expect("key generated from the same schema");
        doc.values.push((key, v));
    }
    doc
}

fn bracket(key: &str) -> Option<(&str, &str)> {
    let (head, rest) = key.split_once('[')?;
    Some((head, rest.strip_suffix(']')?))
}

fn axis(s: &str) -> Option<usize> {
    AXES.iter().position(|a| *a == s)
}

fn saccade_slot<'a>(params: &'a mut SaccadeParams<f64>, columns: &[String], key: &str) -> Option<&'a mut f64> {
    let col = |c: &str| columns.iter().position(|x| x == c);
    match key {
        "base_rate" => return Some(&mut params.base_rate),
        "spatial_var" => return Some(&mut params.spatial_var),
        _ => {}
    }
    let (head, inner) = bracket(key)?;
    match head {
        "alpha" => params.excitation.get_mut(col(inner)?),
        "beta" => params.decay.get_mut(col(inner)?),
        "b" => Some(&mut params.offset[axis(inner)?]),
        "A" => {
            let (i, j) = inner.split_once(',')?;
            Some(&mut params.transform[axis(i)?][axis(j)?])
        }
        "C" => {
            let (i, c) = inner.split_once(',')?;
            let i = axis(i)?;
            let c = col(c)?;
            params.predictor_offset[i].get_mut(c)
        }
        _ => None,
    }
}

fn saccade_value(params: &SaccadeParams<f64>, columns: &[String], key: &str) -> Option<f64> {
    let mut p = params.clone();
    saccade_slot(&mut p, columns, key).map(|v| *v)
}

pub fn saccade_from_doc(doc: &ParamDoc) -> Result<(SaccadeSpec, Vec<String>, SaccadeParams<f64>)> {
    if doc.require_meta("kind")? != "saccade" {
        return Err(Error::Validation("parameter document is not a saccade model".into()));
    }
    let spec = SaccadeSpec {
        variant: parse_meta::<Variant>(doc, "variant")?,
        mean_fn: parse_meta::<MeanFn>(doc, "mean_fn")?,
        link: parse_meta::<Link>(doc, "link")?,
    };
    let columns = doc.columns();
    let mut params = SaccadeParams::new(columns.len(), 0.0, 1.0, spec.link);
    for key in saccade_keys(&spec, &columns) {
        let v = doc.require(&key)?;
        *saccade_slot(&mut params, &columns, &key).expect("schema key") = v;
    }
    Ok((spec, columns, params))
}

// --- duration --------------------------------------------------------------

fn spill_name(src: &SpilloverSource, columns: &[String]) -> String {
    match src {
        SpilloverSource::Column(c) => columns[*c].clone(),
        SpilloverSource::Duration => "duration".into(),
    }
}

pub fn parse_spillover(names: &[String], columns: &[String]) -> Result<Vec<SpilloverSource>> {
    names
        .iter()
        .map(|n| {
            if n == "duration" {
                Ok(SpilloverSource::Duration)
            } else {
                columns
                    .iter()
                    .position(|c| c == n)
                    .map(SpilloverSource::Column)
                    .ok_or_else(|| Error::Usage(format!("spillover predictor `{n}` is not a design column")))
            }
        })
        .collect()
}

pub fn duration_to_doc(spec: &DurationSpec, columns: &[String], params: &DurationParams<f64>) -> ParamDoc {
    let mut doc = ParamDoc::default();
    doc.set_meta("kind", "duration");
    let (mean, lags) = match spec.mean {
        MeanVariant::Plain => ("plain", 0),
        MeanVariant::Convolution => ("convolution", 0),
        MeanVariant::Markov { lags } => ("markov", lags),
    };
    doc.set_meta("mean", mean);
    if let MeanVariant::Markov { .. } = spec.mean {
        doc.set_meta("lags", lags.to_string());
    }
    doc.set_meta("distribution", meta_name(&spec.distribution));
    doc.set_meta("clock", meta_name(&spec.clock));
    let spill: Vec<String> = spec.spillover.iter().map(|s| spill_name(s, columns)).collect();
    doc.set_meta("spillover", spill.join(","));
    doc.set_meta("columns", columns.join(","));

    for (c, &w) in columns.iter().zip(&params.weights) {
        doc.values.push((format!("w[{c}]"), w));
    }
    match spec.mean {
        MeanVariant::Plain => {}
        MeanVariant::Convolution => {
            for (k, name) in spill.iter().enumerate() {
                doc.values.push((format!("w'[{name}]"), params.spill_weights[k]));
                let kern = &params.kernels[k];
                doc.values.push((format!("kernel[{name}].alpha"), kern.shape));
                doc.values.push((format!("kernel[{name}].alpha.raw"), inv_softplus(kern.shape - 1.0)));
                doc.values.push((format!("kernel[{name}].beta"), kern.rate));
                doc.values.push((format!("kernel[{name}].beta.raw"), inv_softplus(kern.rate)));
                doc.values.push((format!("kernel[{name}].theta"), kern.shift));
                doc.values.push((format!("kernel[{name}].theta.raw"), inv_softplus(kern.shift)));
            }
        }
        MeanVariant::Markov { lags } => {
            for j in 0..lags {
                doc.values.push((format!("presence[lag{}]", j + 1), params.lag_presence[j]));
                for (k, name) in spill.iter().enumerate() {
                    doc.values.push((
                        format!("w'[lag{},{name}]", j + 1),
                        params.spill_weights[j * spill.len() + k],
                    ));
                }
            }
        }
    }
    match spec.distribution {
        Distribution::LogNormal => doc.values.push(("var".into(), params.var)),
        Distribution::Gamma => doc.values.push(("gamma_shape".into(), params.gamma_shape)),
    }
    doc
}

pub fn duration_from_doc(doc: &ParamDoc) -> Result<(DurationSpec, Vec<String>, DurationParams<f64>)> {
    if doc.require_meta("kind")? != "duration" {
        return Err(Error::Validation("parameter document is not a duration model".into()));
    }
    let columns = doc.columns();
    let mean = match doc.require_meta("mean")? {
        "plain" => MeanVariant::Plain,
        "convolution" => MeanVariant::Convolution,
        "markov" => {
            let lags = doc
                .require_meta("lags")?
                .parse()
                .map_err(|_| Error::Usage("Markov lag count must be a non-negative integer".into()))?;
            MeanVariant::Markov { lags }
        }
        other => return Err(Error::Validation(format!("unknown duration mean `{other}`"))),
    };
    let spill_names = split_list(doc.meta("spillover").unwrap_or(""));
    let spec = DurationSpec {
        mean,
        spillover: parse_spillover(&spill_names, &columns)?,
        distribution: parse_meta::<Distribution>(doc, "distribution")?,
        clock: parse_meta::<KernelClock>(doc, "clock")?,
    };
    let init = GammaKernel {
        shape: 2.0,
        rate: 1.0,
        shift: 0.0,
    };
    let mut params = DurationParams::new(columns.len(), &spec, init);
    for (i, c) in columns.iter().enumerate() {
        params.weights[i] = doc.require(&format!("w[{c}]"))?;
    }
    match spec.mean {
        MeanVariant::Plain => {}
        MeanVariant::Convolution => {
            for (k, name) in spill_names.iter().enumerate() {
                params.spill_weights[k] = doc.require(&format!("w'[{name}]"))?;
                params.kernels[k] = GammaKernel {
                    shape: doc.require(&format!("kernel[{name}].alpha"))?,
                    rate: doc.require(&format!("kernel[{name}].beta"))?,
                    shift: doc.require(&format!("kernel[{name}].theta"))?,
                };
            }
        }
        MeanVariant::Markov { lags } => {
            for j in 0..lags {
                params.lag_presence[j] = doc.require(&format!("presence[lag{}]", j + 1))?;
                for (k, name) in spill_names.iter().enumerate() {
                    params.spill_weights[j * spill_names.len() + k] =
                        doc.require(&format!("w'[lag{},{name}]", j + 1))?;
                }
            }
        }
    }
    match spec.distribution {
        Distribution::LogNormal => params.var = doc.require("var")?,
        Distribution::Gamma => params.gamma_shape = doc.require("gamma_shape")?,
    }
    params.validate(columns.len(), &spec)?;
    Ok((spec, columns, params))
}

/// Copies every value of `simple` whose key also exists in `complex`.
/// Raw (unconstrained) companions are skipped; they are implied by the
/// constrained values. Fails when the two documents share no value.
pub fn warm_start_doc(simple: &ParamDoc, complex: &ParamDoc) -> Result<ParamDoc> {
    if simple.meta("kind") != complex.meta("kind") {
        return Err(Error::Usage("cannot warm-start across model kinds".into()));
    }
    let mut out = complex.clone();
    let mut shared = 0;
    for (k, v) in &simple.values {
        if k.ends_with(".raw") {
            continue;
        }
        if let Some(slot) = out.values.iter_mut().find(|(key, _)| key == k) {
            slot.1 = *v;
            shared += 1;
        }
    }
    if shared == 0 {
        return Err(Error::Usage("warm start: the parameter schemas share no values".into()));
    }
    for (k, raw) in out.values.clone() {
        if let Some(base) = k.strip_suffix(".raw") {
            let c = out.get(base).unwrap_or(raw);
            let new_raw = match base.rsplit('.').next() {
                Some("alpha") => inv_softplus(c - 1.0),
                _ => inv_softplus(c),
            };
            out.set(&k, new_raw);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols() -> Vec<String> {
        vec!["intercept".into(), "reader:a".into(), "reader:b".into()]
    }

    #[test]
    fn saccade_round_trip() {
        let spec = SaccadeSpec::hawkes(MeanFn::Full);
        let mut p = SaccadeParams::new(3, 2.5e-7, 900.0, Link::Softplus);
        p.excitation = vec![10.0, 0.5, -0.25];
        p.transform[0][1] = 0.01;
        p.offset = [120.0, 3.0];
        p.predictor_offset[0][2] = 7.5;
        let doc = saccade_to_doc(&spec, &cols(), &p);
        let text = doc.to_text();
        let back = ParamDoc::parse(&text, "mem").unwrap();
        assert_eq!(back.to_text(), text);
        let (s2, c2, p2) = saccade_from_doc(&back).unwrap();
        assert_eq!((s2, c2, p2), (spec, cols(), p));
    }

    #[test]
    fn poisson_doc_has_only_the_base_rate() {
        let p = SaccadeParams::new(3, 1e-6, 1.0, Link::Softplus);
        let doc = saccade_to_doc(&SaccadeSpec::poisson(), &cols(), &p);
        assert_eq!(doc.values.len(), 1);
    }

    #[test]
    fn duration_round_trip_with_raw_values() {
        let c = cols();
        let spec = DurationSpec::convolution(vec![SpilloverSource::Column(1), SpilloverSource::Duration]);
        let mut p = DurationParams::new(3, &spec, GammaKernel::new(2.5, 4.0, 0.1).unwrap());
        p.weights = vec![-1.6, 0.1, 0.2];
        p.spill_weights = vec![0.3, -0.2];
        p.var = 0.12;
        let doc = duration_to_doc(&spec, &c, &p);
        assert!((doc.get("kernel[duration].alpha.raw").unwrap() - inv_softplus(1.5)).abs() < 1e-15);
        let (s2, _, p2) = duration_from_doc(&ParamDoc::parse(&doc.to_text(), "mem").unwrap()).unwrap();
        assert_eq!((s2, p2), (spec, p));
    }

    #[test]
    fn warm_start_copies_shared_keys() {
        let simple = saccade_to_doc(
            &SaccadeSpec::poisson(),
            &cols(),
            &SaccadeParams::new(3, 3e-7, 1.0, Link::Softplus),
        );
        let complex = saccade_to_doc(
            &SaccadeSpec::hawkes(MeanFn::Baseline),
            &cols(),
            &SaccadeParams::new(3, 1e-6, 400.0, Link::Softplus),
        );
        let w = warm_start_doc(&simple, &complex).unwrap();
        assert_eq!(w.get("base_rate"), Some(3e-7));
        assert_eq!(w.get("spatial_var"), Some(400.0));
        let other = duration_to_doc(
            &DurationSpec::plain(),
            &cols(),
            &DurationParams::new(3, &DurationSpec::plain(), GammaKernel::new(2.0, 1.0, 0.0).unwrap()),
        );
        assert!(warm_start_doc(&other, &complex).is_err());
    }

    #[test]
    fn bad_header_is_a_parse_error() {
        assert!(matches!(ParamDoc::parse("kind = x\n", "f"), Err(Error::Parse { line: 1, .. })));
    }
}
