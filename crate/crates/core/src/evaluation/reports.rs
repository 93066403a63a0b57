//! CSV rows and JSON summaries for every report, with readers that validate
//! a document against its schema.
//!
//! CSV files always carry their header row, even when empty. JSON summaries
//! are wrapped as `{"schema": NAME, "version": REPORT_SCHEMA_VERSION,
//! "summary": {...}}`.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::correlation::CorrelationTriple;
use super::game::{GameTrajectory, GameVariant};
use crate::error::{Error, Result};
use crate::world::{TokenId, Vocabulary};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// A CSV row type with a fixed header.
pub trait CsvRow: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;
    const HEADER: &'static [&'static str];
}

pub fn write_csv<T: CsvRow, W: Write>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(T::HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a CSV document, rejecting any header other than `T::HEADER`.
pub fn read_csv<T: CsvRow, R: Read>(input: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<&str> = r.headers()?.iter().collect();
    if header != T::HEADER {
        return Err(Error::Format(format!("{}: unexpected CSV header {:?}", T::SCHEMA, header)));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Format(format!("{}: {e}", T::SCHEMA))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary<T> {
    pub schema: String,
    pub version: u32,
    pub summary: T,
}

pub fn write_json<T: Serialize, W: Write>(mut out: W, schema: &str, summary: &T) -> Result<()> {
    let doc = Summary {
        schema: schema.to_string(),
        version: REPORT_SCHEMA_VERSION,
        summary,
    };
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Parses a JSON summary and checks its schema name and version.
pub fn read_json<T: DeserializeOwned>(text: &str, schema: &str) -> Result<T> {
    let doc: Summary<T> = serde_json::from_str(text).map_err(|e| Error::Format(format!("{schema}: {e}")))?;
    if doc.schema != schema {
        return Err(Error::Format(format!("expected schema {schema}, found {}", doc.schema)));
    }
    if doc.version != REPORT_SCHEMA_VERSION {
        return Err(Error::Version {
            expected: REPORT_SCHEMA_VERSION,
            found: doc.version,
        });
    }
    Ok(doc.summary)
}

/// Space-separated token names.
pub fn render(vocab: &Vocabulary, tokens: &[TokenId]) -> String {
    tokens.iter().map(|&t| vocab.name(t)).collect::<Vec<_>>().join(" ")
}

/// Inverse of [`render`].
pub fn parse_tokens(vocab: &Vocabulary, text: &str) -> Result<Vec<TokenId>> {
    text.split_whitespace()
        .map(|w| vocab.id(w).ok_or_else(|| Error::InvalidInput(format!("unknown token '{w}'"))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactnessRow {
    pub sentence: usize,
    pub context: String,
    pub position: usize,
    pub original: String,
    pub replacement: String,
    pub delta: f64,
    pub distance: f64,
    pub same_class: bool,
}

impl CsvRow for CompactnessRow {
    const SCHEMA: &'static str = "compactness";
    const HEADER: &'static [&'static str] = &[
        "sentence",
        "context",
        "position",
        "original",
        "replacement",
        "delta",
        "distance",
        "same_class",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompactnessSummary {
    pub probes_same: usize,
    pub probes_different: usize,
    pub skipped: usize,
    pub same_class: Option<CorrelationTriple>,
    pub different_class: Option<CorrelationTriple>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityRow {
    pub index: usize,
    pub context: String,
    pub sequence: String,
    pub novel: bool,
}

impl CsvRow for DiversityRow {
    const SCHEMA: &'static str = "diversity";
    const HEADER: &'static [&'static str] = &["index", "context", "sequence", "novel"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisRow {
    pub index: usize,
    pub context: String,
    pub sequence: String,
    pub flagged: Option<usize>,
    pub rewrite: String,
    pub random_position: Option<usize>,
    pub random_rewrite: String,
    pub metric_original: f64,
    pub metric_rewrite: Option<f64>,
    pub metric_random: Option<f64>,
    pub delta_vs_random: Option<f64>,
}

impl CsvRow for DiagnosisRow {
    const SCHEMA: &'static str = "diagnosis";
    const HEADER: &'static [&'static str] = &[
        "index",
        "context",
        "sequence",
        "flagged",
        "rewrite",
        "random_position",
        "random_rewrite",
        "metric_original",
        "metric_rewrite",
        "metric_random",
        "delta_vs_random",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosisSummary {
    pub sequences: usize,
    pub flagged: usize,
    /// Fraction of flagged sequences flagged at the known corrupted position,
    /// when positions are known.
    pub precision: Option<f64>,
    pub mean_improvement: Option<f64>,
    pub mean_random_improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKRow {
    pub context: String,
    pub rank: usize,
    pub sequence: String,
    pub score: f64,
}

impl CsvRow for TopKRow {
    const SCHEMA: &'static str = "topk";
    const HEADER: &'static [&'static str] = &["context", "rank", "sequence", "score"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopKSummary {
    pub contexts: usize,
    pub k: usize,
    pub shortfall_contexts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlRow {
    pub context: String,
    pub kl: f64,
}

impl CsvRow for KlRow {
    const SCHEMA: &'static str = "kl";
    const HEADER: &'static [&'static str] = &["context", "kl"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlSummary {
    pub kl_mean: f64,
    pub kl_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSummary {
    pub variant: GameVariant,
    pub steps: usize,
    pub window_std_d: f64,
    pub window_mean_abs_dev: f64,
    pub final_pi: Vec<f64>,
    pub final_gen_grad_norm: f64,
}

impl GameSummary {
    pub fn of(t: &GameTrajectory) -> Self {
        Self {
            variant: t.variant,
            steps: t.rows.len() - 1,
            window_std_d: t.window_std_d(0.1),
            window_mean_abs_dev: t.window_mean_abs_dev(0.1),
            final_pi: t.last().pi.clone(),
            final_gen_grad_norm: t.last().gen_grad_norm,
        }
    }
}

/// `step, pi_0.., f_0.., d_0.., disc_grad_norm, gen_grad_norm`.
pub fn game_header(k: usize) -> Vec<String> {
    let mut h = vec!["step".to_string()];
    for prefix in ["pi", "f", "d"] {
        h.extend((0..k).map(|j| format!("{prefix}_{j}")));
    }
    h.push("disc_grad_norm".into());
    h.push("gen_grad_norm".into());
    h
}

pub fn write_game_csv<W: Write>(out: W, t: &GameTrajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(game_header(t.p_true.len()))?;
    for r in &t.rows {
        let mut rec = vec![r.step.to_string()];
        rec.extend(r.pi.iter().chain(&r.f).chain(&r.d).map(|v| v.to_string()));
        rec.push(r.disc_grad_norm.to_string());
        rec.push(r.gen_grad_norm.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a trajectory CSV into rows of numbers, checking the header and
/// that every row is complete and finite.
pub fn read_game_csv<R: Read>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let k = header.len().saturating_sub(3) / 3;
    if header.len() != 3 * k + 3 || header != game_header(k) {
        return Err(Error::Format("game: unexpected CSV header".into()));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            rec.iter()
                .map(|v| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| Error::Format(format!("game: bad value '{v}'")))
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub context: String,
    pub prefix: String,
    pub token: String,
    pub learned: f64,
    pub truth: f64,
}

impl CsvRow for RecoveryRow {
    const SCHEMA: &'static str = "recovery";
    const HEADER: &'static [&'static str] = &["context", "prefix", "token", "learned", "truth"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySummary {
    pub probes: usize,
    pub pearson: f64,
}
