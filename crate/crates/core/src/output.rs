//! CSV and JSON writers with fixed numeric formatting.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{AssimilationRecord, FilterKind};
use crate::harness::{Comparison, ForecastResult, SweepRow};
use crate::model::Dimension;
use crate::stats::PairedSummary;
use crate::truth::{ObservationSeries, TruthSeries};

/// Nine significant digits in scientific notation.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.8e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub const TRUTH_HEADER: [&str; 5] = ["week", "calendar_week", "true_incidence", "observed", "oev"];
pub const FIT_HEADER: [&str; 4] = ["week", "member_stat", "dimension", "value"];
pub const FORECAST_HEADER: [&str; 9] = ["scenario", "filter", "sr", "seed", "forecast_week", "pred_peak", "obs_peak", "accurate", "rms"];
pub const COMPARE_HEADER: [&str; 9] = ["forecast_week", "n", "delta_acc", "ci95_low", "ci95_high", "t", "p_one_sided", "p_two_sided", "zero_variance"];
pub const SWEEP_HEADER: [&str; 6] = ["axis", "value", "scenario", "seed", "rms", "accuracy"];

/// Truth and observations, one row per week.
pub fn write_truth_csv<W: Write>(out: W, truth: &TruthSeries, obs: &ObservationSeries, weeks_per_year: u32) -> Result<()> {
    if truth.incidence.len() != obs.len() {
        return Err(Error::LengthMismatch(truth.incidence.len(), obs.len()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRUTH_HEADER)?;
    for (k, (t, (z, v))) in truth.incidence.iter().zip(obs.observed.iter().zip(&obs.oev)).enumerate() {
        let cal = (obs.start_week - 1 + k as u32) % weeks_per_year + 1;
        w.write_record([k.to_string(), cal.to_string(), fmt_num(*t), fmt_num(*z), fmt_num(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-week prior and posterior ensemble summaries, then the season RMS.
pub fn write_fit_csv<W: Write>(out: W, records: &[AssimilationRecord], rms: f64) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIT_HEADER)?;
    for r in records {
        let week = r.week.to_string();
        w.write_record([week.as_str(), "observation", "incidence", &fmt_num(r.observation)])?;
        w.write_record([week.as_str(), "prior_mean", "incidence", &fmt_num(r.prior_values().mean())])?;
        w.write_record([week.as_str(), "posterior_mean", "incidence", &fmt_num(r.posterior_mean())])?;
        for (stat, summary) in [("prior", &r.prior_summary), ("posterior", &r.posterior_summary)] {
            for d in Dimension::ALL {
                w.write_record([week.as_str(), &format!("{stat}_mean"), d.name(), &fmt_num(summary.mean[d.index()])])?;
                w.write_record([week.as_str(), &format!("{stat}_sd"), d.name(), &fmt_num(summary.sd[d.index()])])?;
            }
        }
    }
    w.write_record(["all", "rms", "incidence", &fmt_num(rms)])?;
    w.flush()?;
    Ok(())
}

pub fn write_forecast_csv<W: Write>(out: W, results: &[ForecastResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FORECAST_HEADER)?;
    for r in results {
        w.write_record([
            r.scenario.clone(),
            r.kind.name().to_string(),
            if r.sr_enabled { "on" } else { "off" }.to_string(),
            r.seed.to_string(),
            r.forecast_week.to_string(),
            r.predicted_peak.to_string(),
            r.observed_peak.to_string(),
            r.accurate.to_string(),
            fmt_num(r.rms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_forecast_csv`]. Trajectories are not stored
/// and come back empty.
pub fn read_forecast_csv<R: Read>(input: R) -> Result<Vec<ForecastResult>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != FORECAST_HEADER {
        return Err(Error::Config { line: 1, msg: format!("unexpected forecast header `{}`", headers.iter().collect::<Vec<_>>().join(",")) });
    }
    let mut out = Vec::new();
    for (k, row) in rd.records().enumerate() {
        let row = row?;
        let line = k + 2;
        let bad = |field: &str| Error::Config { line, msg: format!("bad `{field}` value") };
        let get = |i: usize| row.get(i).unwrap_or("");
        out.push(ForecastResult {
            scenario: get(0).to_string(),
            kind: get(1).parse::<FilterKind>().map_err(|_| bad("filter"))?,
            sr_enabled: match get(2) {
                "on" => true,
                "off" => false,
                _ => return Err(bad("sr")),
            },
            seed: get(3).parse().map_err(|_| bad("seed"))?,
            forecast_week: get(4).parse().map_err(|_| bad("forecast_week"))?,
            predicted_peak: get(5).parse().map_err(|_| bad("pred_peak"))?,
            observed_peak: get(6).parse().map_err(|_| bad("obs_peak"))?,
            accurate: get(7).parse().map_err(|_| bad("accurate"))?,
            rms: get(8).parse().map_err(|_| bad("rms"))?,
            trajectory: Vec::new(),
        });
    }
    Ok(out)
}

fn summary_row(label: String, s: &PairedSummary) -> [String; 9] {
    [
        label,
        s.n.to_string(),
        fmt_num(s.mean_diff),
        fmt_num(s.ci95_low),
        fmt_num(s.ci95_high),
        fmt_opt(s.t),
        fmt_opt(s.p_one_sided),
        fmt_opt(s.p_two_sided),
        s.zero_variance.to_string(),
    ]
}

/// One row per forecast week, then `all` (every pair) and `cell_mean`.
pub fn write_compare_csv<W: Write>(out: W, cmp: &Comparison) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARE_HEADER)?;
    for wk in &cmp.per_week {
        w.write_record(summary_row(wk.forecast_week.to_string(), &wk.summary))?;
    }
    w.write_record(summary_row("all".into(), &cmp.overall))?;
    w.write_record(summary_row("cell_mean".into(), &cmp.cell_means))?;
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.axis.name().to_string(),
            r.value.clone(),
            r.scenario.clone(),
            r.seed.to_string(),
            fmt_num(r.fit_rms),
            fmt_num(r.accuracy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub command: String,
    pub version: String,
    /// Output file names relative to the output directory.
    pub outputs: Vec<String>,
    /// The only field that varies between identical runs.
    pub wall_clock_seconds: f64,
}
