use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

use readpp_core::data::io::{save_scanpaths, write_annotated, write_records, Delimiter};
use readpp_core::data::{ColumnKind, DesignMatrix, MeasureKind, Scanpath};
use readpp_core::duration::{fit_linear_aggregated, DurationParams, DurationSpec, MeanVariant};
use readpp_core::eval::{compare_fits, reports_csv, summary_csv, SuiteConfig};
use readpp_core::events::Events;
use readpp_core::fit::{default_kernel, grid_search, split_samples, train, DurationModel, FitResult, SaccadeModel};
use readpp_core::params::{
    duration_from_doc, duration_to_doc, omega_text, parse_omega, parse_spillover, saccade_from_doc, ParamDoc,
};
use readpp_core::plot::plot_intensity;
use readpp_core::saccade::SaccadeSpec;
use readpp_core::simulate::{sample_replicates, Generator, SimConfig};
use readpp_core::{Point, Rect};

use crate::config::{Config, MeanKind, ModelKind};
use crate::dataset::Corpus;
use crate::error::{CliError, CliResult};

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Writes annotated fixations, or the word-only scanpaths when filtering.
pub fn ingest(config: &Config, out: &Path) -> CliResult<()> {
    let corpus = Corpus::load(config)?;
    let annotated = corpus.annotate()?;
    if config.data.filtered {
        if corpus.layouts.is_none() {
            return Err(CliError::Usage("filtering needs layouts".into()));
        }
        let filtered: Vec<Scanpath> = annotated.iter().map(|a| a.filtered()).collect();
        let kept: usize = filtered.iter().map(Scanpath::len).sum();
        let total: usize = corpus.scanpaths.iter().map(Scanpath::len).sum();
        info!("kept {kept} of {total} fixations on words");
        save_scanpaths(out, &filtered)?;
        info!("wrote {}", out.display());
        return Ok(());
    }
    let sessions: Vec<_> = annotated.iter().map(|a| (a.scanpath(), a.fixations.clone())).collect();
    let mut buf = Vec::new();
    write_annotated(&mut buf, &sessions)?;
    write_file(out, &buf)
}

pub fn aggregate(config: &Config, out: &Path) -> CliResult<()> {
    let corpus = Corpus::load(config)?;
    let measure: MeasureKind = config.model.measure.parse()?;
    let records = corpus.records(measure, config.model.pool)?;
    info!("{} {} records", records.len(), measure);
    let mut buf = Vec::new();
    write_records(&mut buf, &records)?;
    write_file(out, &buf)
}

fn duration_spec(config: &Config, columns: &[String]) -> CliResult<DurationSpec> {
    let m = &config.model;
    let mean = match m.mean {
        MeanKind::Plain => MeanVariant::Plain,
        MeanKind::Convolution => MeanVariant::Convolution,
        MeanKind::Markov => MeanVariant::Markov { lags: m.lags },
    };
    Ok(DurationSpec {
        mean,
        spillover: parse_spillover(&m.spillover, columns)?,
        distribution: m.distribution,
        clock: m.clock,
    })
}

/// Closed-form fit of an aggregated measure.
#[derive(Debug, Serialize)]
struct AggregatedFit {
    params: ParamDoc,
    /// Columns dropped as collinear.
    dropped: Vec<String>,
    records: usize,
    loglik: f64,
}

pub fn fit(config: &Config, out: &Path) -> CliResult<()> {
    let corpus = Corpus::load(config)?;
    if config.model.kind == ModelKind::Aggregated {
        let measure: MeasureKind = config.model.measure.parse()?;
        let records = corpus.records(measure, config.model.pool)?;
        let design = corpus.record_design(&records, config)?;
        let columns = design.names();
        let spec = duration_spec(config, &columns)?;
        let fit = fit_linear_aggregated(&records, &design, &spec)?;
        let mut params = duration_to_doc(&spec, &columns, &fit.params);
        params.set_meta("measure", measure.name());
        let doc = AggregatedFit {
            params,
            dropped: fit.dropped,
            records: records.len(),
            loglik: fit.loglik,
        };
        info!("aggregated fit: {} records, loglik {}", doc.records, doc.loglik);
        let text = serde_json::to_string_pretty(&doc).expect("aggregated fit serializes") + "\n";
        return write_file(out, text.as_bytes());
    }

    let data = corpus.dataset(config)?;
    let columns = if config.model.columns.is_empty() {
        data.columns.clone()
    } else {
        config.model.columns.clone()
    };
    let samples = readpp_core::eval::project(&data.samples, &data.columns, &columns)?;
    let splits = split_samples(&samples, config.train.split, config.train.seed)?;
    info!(
        "split: {} train, {} validation, {} test scanpaths",
        splits.train.len(),
        splits.val.len(),
        splits.test.len()
    );
    let m = &config.model;
    let mut result = match m.kind {
        ModelKind::Saccade => {
            let spec = SaccadeSpec {
                variant: m.variant,
                mean_fn: m.mean_fn,
                link: m.link,
            };
            let model = SaccadeModel::new(spec, columns, &splits.train);
            match &config.grid {
                Some(g) => grid_search(&model, None, &splits, g, &config.train)?,
                None => train(&model, None, &splits, &config.train)?,
            }
        }
        ModelKind::Duration => {
            let spec = duration_spec(config, &columns)?;
            let model = DurationModel::new(spec, columns, m.kernel_init.clone())?;
            match &config.grid {
                Some(g) => grid_search(&model, None, &splits, g, &config.train)?,
                None => train(&model, None, &splits, &config.train)?,
            }
        }
        ModelKind::Aggregated => unreachable!("handled above"),
    };
    if let Some(s) = samples.first() {
        result.params.set_meta("omega", omega_text(&s.omega));
    }
    info!(
        "fit: train loss {:.6}, validation loss {:.6}, best epoch {}{}",
        result.train_loss,
        result.val_loss,
        result.best_epoch,
        if result.closed_form { " (closed form)" } else { "" }
    );
    write_file(out, result.to_json().as_bytes())
}

/// Evaluates serialized fits on the test split of the configured dataset.
pub fn eval(
    config: &Config,
    fits: &[(String, PathBuf)],
    baseline: &str,
    out: &Path,
    deltas: Option<&Path>,
    summary: Option<&Path>,
) -> CliResult<()> {
    if fits.is_empty() {
        return Err(CliError::Usage("no fits to evaluate".into()));
    }
    let loaded: Vec<(String, Result<FitResult, String>)> = fits
        .iter()
        .map(|(name, path)| {
            let fit = read_file(path).and_then(|t| Ok(FitResult::from_json(&t)?));
            match fit {
                Ok(f) => Ok((name.clone(), Ok(f))),
                Err(e) => {
                    warn!("{name}: {e}");
                    Ok((name.clone(), Err(e.to_string())))
                }
            }
        })
        .collect::<CliResult<_>>()?;
    let corpus = Corpus::load(config)?;
    let data = corpus.dataset(config)?;
    let splits = split_samples(&data.samples, config.train.split, config.train.seed)?;
    if splits.test.is_empty() {
        return Err(CliError::Usage("the test split is empty".into()));
    }
    let suite = SuiteConfig {
        train: config.train.clone(),
        grid: config.grid.clone(),
        bootstrap_replicates: config.eval.bootstrap_replicates,
        block_bootstrap: config.eval.block_bootstrap,
        variant: config.variant_tag(),
    };
    let reports = compare_fits(&loaded, baseline, &splits.test, &data.columns, &suite)?;
    for r in &reports {
        match (&r.ci, &r.error) {
            (Some(ci), _) => info!(
                "{} vs {}: mean Δ {:.6} [{:.6}, {:.6}] over {} fixations",
                r.model,
                r.baseline,
                ci.mean,
                ci.lower,
                ci.upper,
                r.deltas.len()
            ),
            (None, Some(e)) => warn!("{}: {e}", r.model),
            (None, None) => warn!("{}: no test fixations", r.model),
        }
    }
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n";
    write_file(out, json.as_bytes())?;
    if let Some(p) = deltas {
        write_file(p, reports_csv(&reports).as_bytes())?;
    }
    match summary {
        Some(p) => write_file(p, summary_csv(&reports).as_bytes())?,
        None => {
            let _ = std::io::stdout().write_all(summary_csv(&reports).as_bytes());
        }
    }
    Ok(())
}

/// A parameter document from either a fit-result JSON or a text document.
pub fn load_params(path: &Path) -> CliResult<ParamDoc> {
    let text = read_file(path)?;
    if text.trim_start().starts_with('{') {
        Ok(FitResult::from_json(&text)?.params)
    } else {
        Ok(ParamDoc::parse(&text, &path.display().to_string())?)
    }
}

fn omega_of(doc: &ParamDoc, flag: Option<&str>) -> CliResult<Rect> {
    match flag.or(doc.meta("omega")) {
        Some(s) => Ok(parse_omega(s)?),
        None => Err(CliError::Usage(
            "no observation window: pass --omega or use parameters that record one".into(),
        )),
    }
}

fn column_kinds(columns: &[String]) -> CliResult<Vec<ColumnKind>> {
    Ok(columns.iter().map(|c| ColumnKind::parse(c)).collect::<Result<_, _>>()?)
}

pub struct SimulateArgs<'a> {
    pub params: &'a Path,
    pub duration_params: Option<&'a Path>,
    pub horizon: f64,
    pub seed: u64,
    pub readers: Vec<String>,
    pub replicates: usize,
    pub omega: Option<&'a str>,
    pub max_events: usize,
    pub out: Option<&'a Path>,
}

/// Samples `replicates` scanpaths per reader. Reader `r`'s replicate `i`
/// draws from stream `i` of seed `seed + r`.
pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let doc = load_params(args.params)?;
    let (spec, columns, saccade) = saccade_from_doc(&doc)?;
    let omega = omega_of(&doc, args.omega)?;
    let kinds = column_kinds(&columns)?;
    let (duration_spec, duration) = match args.duration_params {
        Some(p) => {
            let (spec, dcols, params) = duration_from_doc(&load_params(p)?)?;
            if dcols != columns {
                return Err(CliError::Core(readpp_core::Error::Validation(format!(
                    "duration columns [{}] differ from saccade columns [{}]",
                    dcols.join(", "),
                    columns.join(", ")
                ))));
            }
            if !spec.spillover.is_empty() {
                return Err(CliError::Usage(
                    "simulation supports duration models without spillover".into(),
                ));
            }
            (spec, params)
        }
        None => {
            let spec = DurationSpec::plain();
            let mut d = DurationParams::new(columns.len(), &spec, default_kernel());
            if let Some(i) = kinds.iter().position(|k| *k == ColumnKind::Intercept) {
                d.weights[i] = 0.2f64.ln();
            }
            d.var = 0.1;
            (spec, d)
        }
    };
    let readers = if args.readers.is_empty() {
        let r: Vec<String> = kinds
            .iter()
            .filter_map(|k| match k {
                ColumnKind::Reader(r) => Some(r.clone()),
                _ => None,
            })
            .collect();
        if r.is_empty() {
            vec!["sim".to_string()]
        } else {
            r
        }
    } else {
        args.readers.clone()
    };
    info!(
        "simulating {} × {} scanpaths of {} s, seed {}",
        readers.len(),
        args.replicates,
        args.horizon,
        args.seed
    );
    let mut scanpaths = Vec::new();
    for (r, reader) in readers.iter().enumerate() {
        let x = DesignMatrix::reader_row(&kinds, reader);
        let row = move |_: Point| x.clone();
        let gen = Generator {
            saccade_spec: spec.clone(),
            saccade: saccade.clone(),
            duration_spec: duration_spec.clone(),
            duration: duration.clone(),
            row: &row,
        };
        let config = SimConfig {
            horizon: args.horizon,
            omega,
            seed: args.seed.wrapping_add(r as u64),
            max_events: args.max_events,
        };
        for s in sample_replicates(&gen, &config, reader, "sim", args.replicates)? {
            if s.truncated {
                warn!("{} hit the event cap before the horizon", s.scanpath.key());
            }
            scanpaths.push(s.scanpath);
        }
    }
    let delimiter = args.out.map_or(Delimiter::Comma, Delimiter::for_path);
    let mut buf = Vec::new();
    readpp_core::data::io::write_scanpaths(&mut buf, &scanpaths, delimiter)?;
    match args.out {
        Some(p) => write_file(p, &buf),
        None => std::io::stdout().write_all(&buf).map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

pub struct PlotArgs<'a> {
    pub params: &'a Path,
    pub history: &'a Path,
    pub scanpath: Option<&'a str>,
    pub times: Vec<f64>,
    pub resolution: (usize, usize),
    pub omega: Option<&'a str>,
    pub out_dir: &'a Path,
}

/// One SVG heatmap plus CSV grid per timestamp. Fixations carry the
/// effect-free design row of their reader.
pub fn plot(args: &PlotArgs) -> CliResult<()> {
    let doc = load_params(args.params)?;
    let (spec, columns, params) = saccade_from_doc(&doc)?;
    let omega = omega_of(&doc, args.omega)?;
    let kinds = column_kinds(&columns)?;
    let scanpaths = readpp_core::data::io::load_scanpaths(args.history, Delimiter::for_path(args.history))?;
    let scanpath = match args.scanpath {
        Some(key) => scanpaths.iter().find(|s| s.key() == key).ok_or_else(|| {
            CliError::Usage(format!("no scanpath `{key}` in {}", args.history.display()))
        })?,
        None => scanpaths
            .first()
            .ok_or_else(|| CliError::Usage(format!("{} holds no scanpaths", args.history.display())))?,
    };
    let row = DesignMatrix::reader_row(&kinds, &scanpath.reader_id);
    let design = DesignMatrix::from_rows(kinds, vec![row; scanpath.len()])?;
    let events = Events::new(scanpath, Some(&design))?;
    let snaps = plot_intensity(&spec, &params, &events, &omega, &args.times, args.resolution)?;
    for (i, s) in snaps.iter().enumerate() {
        let stem = format!("intensity_{i:03}");
        write_file(&args.out_dir.join(format!("{stem}.svg")), s.to_svg(&omega).as_bytes())?;
        write_file(&args.out_dir.join(format!("{stem}.csv")), s.to_csv().as_bytes())?;
        let peak = s.argmax();
        info!("t = {}: peak at ({}, {})", s.time, peak.x, peak.y);
    }
    Ok(())
}
