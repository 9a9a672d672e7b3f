//! Dataset loading and result files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Example, Label, PointwiseSets};
use crate::error::{Error, Result};
use crate::harness::{SweepRow, TrialReport};
use crate::train::EpochRecord;

/// Assignment of original class tokens to the two classes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinarizationMap {
    tokens: BTreeMap<String, Label>,
}

impl BinarizationMap {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, Label)>,
        S: Into<String>,
    {
        Self {
            tokens: entries.into_iter().map(|(t, l)| (t.into(), l)).collect(),
        }
    }

    /// Even digits positive, odd digits negative.
    pub fn even_odd_digits() -> Self {
        Self::new((0..10).map(|d| {
            let label = if d % 2 == 0 {
                Label::Positive
            } else {
                Label::Negative
            };
            (d.to_string(), label)
        }))
    }

    /// Parses `even-odd` or a list such as `0:+1,1:-1,cat:-1`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec.eq_ignore_ascii_case("even-odd") {
            return Ok(Self::even_odd_digits());
        }
        let mut tokens = BTreeMap::new();
        for entry in spec.split(',').filter(|e| !e.trim().is_empty()) {
            let (token, label) = entry.rsplit_once(':').ok_or_else(|| {
                Error::InvalidArgument(format!("map entry {entry:?} is not token:label"))
            })?;
            let label = match label.trim() {
                "+1" | "1" | "+" | "pos" => Label::Positive,
                "-1" | "-" | "neg" => Label::Negative,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "map label {other:?} must be +1 or -1"
                    )))
                }
            };
            tokens.insert(token.trim().to_string(), label);
        }
        if tokens.is_empty() {
            return Err(Error::InvalidArgument("empty binarization map".into()));
        }
        Ok(Self { tokens })
    }

    pub fn get(&self, token: &str) -> Option<Label> {
        self.tokens.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Per-column standardization fitted on a training pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Constant columns get unit scale.
    pub fn fit(pool: &[Example]) -> Result<Self> {
        let dim = pool
            .first()
            .map(|e| e.features.len())
            .ok_or_else(|| Error::InvalidArgument("cannot normalize an empty pool".into()))?;
        let n = pool.len() as f64;
        let mut mean = vec![0.0; dim];
        for e in pool {
            for (m, x) in mean.iter_mut().zip(&e.features) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; dim];
        for e in pool {
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(&e.features) {
                *v += (x - m) * (x - m) / n;
            }
        }
        let std = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, examples: &mut [Example]) -> Result<()> {
        for e in examples {
            if e.features.len() != self.mean.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.mean.len(),
                    got: e.features.len(),
                });
            }
            for ((x, m), s) in e.features.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Creates `path` and any missing parent directories.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Reads a CSV whose header ends with a `label` column; the other columns
/// are real-valued features. With `normalize`, features are standardized
/// using the statistics of this file.
pub fn load_dataset(path: &Path, map: &BinarizationMap, normalize: bool) -> Result<Vec<Example>> {
    let mut examples = read_labeled_csv(open(path)?, path, map)?;
    if normalize {
        Normalizer::fit(&examples)?.apply(&mut examples)?;
    }
    Ok(examples)
}

/// Loads a training and a test file; when `normalize` is set both are
/// standardized with the training statistics.
pub fn load_train_test(
    train: &Path,
    test: &Path,
    map: &BinarizationMap,
    normalize: bool,
) -> Result<(Vec<Example>, Vec<Example>)> {
    let mut train_set = load_dataset(train, map, false)?;
    let mut test_set = load_dataset(test, map, false)?;
    if let (Some(a), Some(b)) = (train_set.first(), test_set.first()) {
        if a.features.len() != b.features.len() {
            return Err(Error::Parse {
                path: test.to_path_buf(),
                row: 1,
                message: format!(
                    "expected {} feature columns, found {}",
                    a.features.len(),
                    b.features.len()
                ),
            });
        }
    }
    if normalize {
        let norm = Normalizer::fit(&train_set)?;
        norm.apply(&mut train_set)?;
        norm.apply(&mut test_set)?;
    }
    Ok((train_set, test_set))
}

fn read_labeled_csv<R: Read>(input: R, path: &Path, map: &BinarizationMap) -> Result<Vec<Example>> {
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().next_back().map(str::trim) != Some("label") {
        return Err(parse_err(
            1,
            "the last header column must be `label`".into(),
        ));
    }
    let dim = header.len() - 1;
    let mut examples = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(parse_err(
                row,
                format!("expected {} columns, found {}", header.len(), record.len()),
            ));
        }
        let features = (0..dim)
            .map(|j| {
                let cell = record[j].trim();
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        parse_err(
                            row,
                            format!("column {:?}: {cell:?} is not a finite number", &header[j]),
                        )
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        let token = record[dim].trim();
        let label = map.get(token).ok_or_else(|| Error::UnmappedToken {
            path: path.to_path_buf(),
            row,
            token: token.to_string(),
        })?;
        examples.push(Example::new(features, label));
    }
    if examples.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    Ok(examples)
}

/// Reals are written with 17 significant digits so that they re-parse exactly.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub prior: f64,
    pub n: usize,
    pub seed: u64,
    pub accuracy: f64,
}

pub const RESULTS_HEADER: [&str; 5] = ["method", "prior", "n", "seed", "accuracy"];

pub fn result_rows(reports: &[TrialReport]) -> Vec<ResultRow> {
    reports
        .iter()
        .flat_map(|r| {
            r.seeds
                .iter()
                .zip(&r.accuracies)
                .map(|(&seed, &accuracy)| ResultRow {
                    method: r.method.clone(),
                    prior: r.prior,
                    n: r.n_pairs,
                    seed,
                    accuracy,
                })
        })
        .collect()
}

pub fn write_results_csv<W: Write>(out: W, reports: &[TrialReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for row in result_rows(reports) {
        w.write_record([
            row.method,
            format_real(row.prior),
            row.n.to_string(),
            row.seed.to_string(),
            format_real(row.accuracy),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<results>", e))?;
    Ok(())
}

pub fn read_results_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_reader(input);
    if reader.headers()?.iter().ne(RESULTS_HEADER) {
        return Err(results_parse_error(1, "unexpected header".into()));
    }
    reader
        .records()
        .map(|record| {
            let record = record?;
            let row = record.position().map_or(0, |p| p.line() as usize);
            let field = |j: usize| {
                record
                    .get(j)
                    .ok_or_else(|| results_parse_error(row, "missing column".into()))
            };
            let num = |j: usize| -> Result<f64> {
                field(j)?
                    .parse()
                    .map_err(|_| results_parse_error(row, format!("bad number in column {j}")))
            };
            let int = |j: usize| -> Result<u64> {
                field(j)?
                    .parse()
                    .map_err(|_| results_parse_error(row, format!("bad integer in column {j}")))
            };
            Ok(ResultRow {
                method: field(0)?.to_string(),
                prior: num(1)?,
                n: int(2)? as usize,
                seed: int(3)?,
                accuracy: num(4)?,
            })
        })
        .collect()
}

fn results_parse_error(row: usize, message: String) -> Error {
    Error::Parse {
        path: "<results>".into(),
        row,
        message,
    }
}

/// One JSON line per report.
pub fn write_summary_jsonl<W: Write>(mut out: W, reports: &[TrialReport]) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")
            .map_err(|e| Error::io("<summary>", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryLine {
    pub method: String,
    pub seed: u64,
    #[serde(flatten)]
    pub record: EpochRecord,
}

/// One JSON line per method, seed and epoch.
pub fn write_histories_jsonl<W: Write>(mut out: W, reports: &[TrialReport]) -> Result<()> {
    for r in reports {
        for (&seed, history) in r.seeds.iter().zip(&r.histories) {
            for record in &history.epochs {
                let line = HistoryLine {
                    method: r.method.clone(),
                    seed,
                    record: record.clone(),
                };
                serde_json::to_writer(&mut out, &line)?;
                out.write_all(b"\n")
                    .map_err(|e| Error::io("<histories>", e))?;
            }
        }
    }
    Ok(())
}

pub const SWEEP_HEADER: [&str; 6] = ["fraction", "method", "prior", "n", "mean", "std"];

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            format_real(r.fraction),
            r.method.clone(),
            format_real(r.prior),
            r.n.to_string(),
            format_real(r.mean),
            format_real(r.std),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<sweep>", e))?;
    Ok(())
}

/// Writes both noisy sets, one row per element: pair index, observed tag
/// (`+1` for first elements, `-1` for second), features and the true label
/// when known.
pub fn write_pointwise_csv<W: Write>(out: W, sets: &PointwiseSets) -> Result<()> {
    let dim = sets.dim().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["pair".to_string(), "observed".to_string()];
    header.extend((0..dim).map(|j| format!("x{j}")));
    header.push("latent_label".into());
    w.write_record(&header)?;
    let latent = |labels: &Option<Vec<Label>>, i: usize| {
        labels
            .as_ref()
            .map_or(String::new(), |l| format!("{:+}", l[i].as_i8()))
    };
    for i in 0..sets.len() {
        for (observed, x, labels) in [
            ("+1", &sets.noisy_pos[i], &sets.latent_pos),
            ("-1", &sets.noisy_neg[i], &sets.latent_neg),
        ] {
            let mut row = vec![i.to_string(), observed.to_string()];
            row.extend(x.iter().map(|v| format_real(*v)));
            row.push(latent(labels, i));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io("<pairs>", e))?;
    Ok(())
}

/// Inverse of [`write_pointwise_csv`].
pub fn read_pointwise_csv(path: &Path) -> Result<PointwiseSets> {
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut reader = csv::Reader::from_reader(open(path)?);
    let width = reader.headers()?.len();
    if width < 3 {
        return Err(parse_err(1, "too few columns".into()));
    }
    let mut sets = PointwiseSets {
        noisy_pos: Vec::new(),
        noisy_neg: Vec::new(),
        latent_pos: Some(Vec::new()),
        latent_neg: Some(Vec::new()),
    };
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(parse_err(
                row,
                format!("expected {width} columns, found {}", record.len()),
            ));
        }
        let features = (2..width - 1)
            .map(|j| {
                record[j]
                    .parse::<f64>()
                    .map_err(|_| parse_err(row, format!("bad number {:?}", &record[j])))
            })
            .collect::<Result<Vec<_>>>()?;
        let latent = match record[width - 1].trim() {
            "" => None,
            t => Some(
                t.parse::<i64>()
                    .ok()
                    .and_then(Label::from_i64)
                    .ok_or_else(|| parse_err(row, format!("bad label {t:?}")))?,
            ),
        };
        let (xs, labels) = match record[1].trim() {
            "+1" => (&mut sets.noisy_pos, &mut sets.latent_pos),
            "-1" => (&mut sets.noisy_neg, &mut sets.latent_neg),
            t => return Err(parse_err(row, format!("bad observed tag {t:?}"))),
        };
        xs.push(features);
        match (latent, labels.as_mut()) {
            (Some(l), Some(v)) => v.push(l),
            _ => *labels = None,
        }
    }
    sets.validate()?;
    Ok(sets)
}
