//! Shared fixtures: a three-reader ground-truth saccade model and the
//! scanpaths simulated from it.
#![allow(dead_code)]

pub mod quad;

use readpp_core::duration::{DurationParams, DurationSpec};
use readpp_core::events::Events;
use readpp_core::fit::Sample;
use readpp_core::geometry::{Point, Rect};
use readpp_core::saccade::{Link, MeanFn, SaccadeParams, SaccadeSpec};
use readpp_core::simulate::{sample_replicates, Generator, SimConfig};

pub const READERS: [&str; 3] = ["r1", "r2", "r3"];
pub const EXCITATION: [f64; 3] = [10.0, 13.0, 16.0];
pub const DECAY: [f64; 3] = [14.0, 17.0, 20.0];
pub const SHIFT: [[f64; 2]; 3] = [[120.0, 0.0], [135.0, 5.0], [150.0, -5.0]];
pub const SPATIAL_VAR: f64 = 900.0;
/// Background events per second over the whole screen.
pub const BACKGROUND: f64 = 0.5;

pub fn screen() -> Rect<f64> {
    Rect::screen(1920.0, 1080.0)
}

pub fn columns() -> Vec<String> {
    std::iter::once("intercept".to_string())
        .chain(READERS.iter().map(|r| format!("reader:{r}")))
        .collect()
}

pub fn reader_row(r: usize) -> Vec<f64> {
    let mut x = vec![1.0, 0.0, 0.0, 0.0];
    x[r + 1] = 1.0;
    x
}

pub fn rse_spec() -> SaccadeSpec {
    SaccadeSpec::hawkes(MeanFn::Full).with_link(Link::Softplus)
}

/// Reader effects live in the one-hot columns; the intercept column is zero.
pub fn rse_truth() -> SaccadeParams<f64> {
    let mut p = SaccadeParams::new(4, BACKGROUND / screen().area(), SPATIAL_VAR, Link::Softplus);
    p.excitation[0] = 0.0;
    p.decay[0] = 0.0;
    for r in 0..3 {
        p.excitation[r + 1] = Link::Softplus.inverse(EXCITATION[r]);
        p.decay[r + 1] = Link::Softplus.inverse(DECAY[r]);
        p.predictor_offset[0][r + 1] = SHIFT[r][0];
        p.predictor_offset[1][r + 1] = SHIFT[r][1];
    }
    p
}

pub fn duration_truth() -> (DurationSpec, DurationParams<f64>) {
    let spec = DurationSpec::plain();
    let mut d = DurationParams::new(4, &spec, readpp_core::fit::default_kernel());
    d.weights[0] = 0.2f64.ln();
    d.var = 0.1;
    (spec, d)
}

/// `per_reader` scanpaths of length `horizon` seconds for each reader.
pub fn simulate_with(
    spec: &SaccadeSpec,
    params: &SaccadeParams<f64>,
    per_reader: usize,
    horizon: f64,
    seed: u64,
) -> Vec<Sample> {
    let (duration_spec, duration) = duration_truth();
    let mut out = Vec::new();
    for r in 0..3 {
        let x = reader_row(r);
        let row = move |_: Point<f64>| x.clone();
        let gen = Generator {
            saccade_spec: spec.clone(),
            saccade: params.clone(),
            duration_spec: duration_spec.clone(),
            duration: duration.clone(),
            row: &row,
        };
        let config = SimConfig {
            horizon,
            omega: screen(),
            seed: seed.wrapping_mul(31).wrapping_add(r as u64),
            max_events: 100_000,
        };
        for sim in sample_replicates(&gen, &config, READERS[r], "text", per_reader).unwrap() {
            let mut events = Events::new(&sim.scanpath, None).unwrap();
            events.rows = sim.rows;
            out.push(Sample::new(events, screen()));
        }
    }
    out
}

pub fn simulate_rse(per_reader: usize, horizon: f64, seed: u64) -> Vec<Sample> {
    simulate_with(&rse_spec(), &rse_truth(), per_reader, horizon, seed)
}

pub fn fixation_count(samples: &[Sample]) -> usize {
    samples.iter().map(Sample::len).sum()
}
