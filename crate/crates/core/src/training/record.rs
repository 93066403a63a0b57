use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed leading columns of `run.csv`; one `kl_<context>` column per context
/// follows `kl_mean`, then the diversity snapshot.
pub const RUN_CSV_LEADING: [&str; 9] = [
    "iteration",
    "mean_d",
    "std_d",
    "mean_abs_dev",
    "mean_d_true",
    "disc_loss",
    "gen_loss",
    "clamped",
    "kl_mean",
];
pub const RUN_CSV_TRAILING: [&str; 3] = ["distinct", "coverage", "novel_ratio"];

/// One evaluation point of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iteration: usize,
    /// Mean of `D` over generated tokens of the probe batch.
    pub mean_d: f64,
    pub std_d: f64,
    /// Mean of `|D - 0.5|` over generated tokens of the probe batch.
    pub mean_abs_dev: f64,
    /// Mean of `D` over ground-truth tokens of the probe batch.
    pub mean_d_true: f64,
    /// Mean training losses since the previous evaluation point (0 at start).
    pub disc_loss: f64,
    pub gen_loss: f64,
    /// Clamped logarithms since the previous evaluation point.
    pub clamped: usize,
    pub kl: Vec<f64>,
    pub kl_mean: f64,
    pub distinct: usize,
    pub coverage: f64,
    pub novel_ratio: f64,
}

/// Training trajectory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunRecord {
    pub context_names: Vec<String>,
    pub points: Vec<EvalPoint>,
    /// Path of the final checkpoint, when one was written.
    pub checkpoint: Option<String>,
}

impl RunRecord {
    pub fn new(context_names: Vec<String>) -> Self {
        Self {
            context_names,
            points: Vec::new(),
            checkpoint: None,
        }
    }

    pub fn push(&mut self, point: EvalPoint) -> Result<()> {
        if let Some(last) = self.points.last() {
            if point.iteration <= last.iteration {
                return Err(Error::InvalidInput("evaluation iterations must increase".into()));
            }
        }
        if point.kl.len() != self.context_names.len() {
            return Err(Error::InvalidInput("one KL value per context expected".into()));
        }
        self.points.push(point);
        Ok(())
    }

    pub fn last(&self) -> Option<&EvalPoint> {
        self.points.last()
    }

    /// Points in the last `fraction` of `total` iterations, excluding the
    /// initial point.
    pub fn final_window(&self, total: usize, fraction: f64) -> Vec<&EvalPoint> {
        let start = total as f64 * (1.0 - fraction);
        self.points
            .iter()
            .filter(|p| p.iteration > 0 && p.iteration as f64 >= start)
            .collect()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = RUN_CSV_LEADING.iter().map(|s| s.to_string()).collect();
        h.extend(self.context_names.iter().map(|n| format!("kl_{n}")));
        h.extend(RUN_CSV_TRAILING.iter().map(|s| s.to_string()));
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for p in &self.points {
            let mut row = vec![
                p.iteration.to_string(),
                p.mean_d.to_string(),
                p.std_d.to_string(),
                p.mean_abs_dev.to_string(),
                p.mean_d_true.to_string(),
                p.disc_loss.to_string(),
                p.gen_loss.to_string(),
                p.clamped.to_string(),
                p.kl_mean.to_string(),
            ];
            row.extend(p.kl.iter().map(|v| v.to_string()));
            row.push(p.distinct.to_string());
            row.push(p.coverage.to_string());
            row.push(p.novel_ratio.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses and validates a `run.csv` document.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let lead = RUN_CSV_LEADING.len();
        let trail = RUN_CSV_TRAILING.len();
        let fmt = |m: String| Error::Format(format!("run.csv: {m}"));
        if header.len() < lead + trail
            || header[..lead] != RUN_CSV_LEADING
            || header[header.len() - trail..] != RUN_CSV_TRAILING
        {
            return Err(fmt("unexpected header".into()));
        }
        let names: Vec<String> = header[lead..header.len() - trail]
            .iter()
            .map(|h| h.strip_prefix("kl_").map(str::to_string).ok_or_else(|| fmt(format!("bad column {h}"))))
            .collect::<Result<_>>()?;
        let mut record = RunRecord::new(names);
        for (line, row) in r.records().enumerate() {
            let row = row?;
            let f = |i: usize| -> Result<f64> {
                row[i]
                    .parse::<f64>()
                    .map_err(|_| fmt(format!("row {}: column {} is not a number", line + 1, header[i])))
            };
            let u = |i: usize| -> Result<usize> {
                row[i]
                    .parse::<usize>()
                    .map_err(|_| fmt(format!("row {}: column {} is not a count", line + 1, header[i])))
            };
            let n = header.len();
            let point = EvalPoint {
                iteration: u(0)?,
                mean_d: f(1)?,
                std_d: f(2)?,
                mean_abs_dev: f(3)?,
                mean_d_true: f(4)?,
                disc_loss: f(5)?,
                gen_loss: f(6)?,
                clamped: u(7)?,
                kl_mean: f(8)?,
                kl: (lead..n - trail).map(f).collect::<Result<_>>()?,
                distinct: u(n - 3)?,
                coverage: f(n - 2)?,
                novel_ratio: f(n - 1)?,
            };
            if !(0.0..=1.0).contains(&point.mean_d) || !(0.0..=1.0).contains(&point.novel_ratio) {
                return Err(fmt(format!("row {}: value outside [0, 1]", line + 1)));
            }
            record.push(point).map_err(|e| fmt(e.to_string()))?;
        }
        Ok(record)
    }
}
