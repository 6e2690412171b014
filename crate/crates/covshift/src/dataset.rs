//! Data model, CSV ingestion, and the randomized sample splitting that feeds
//! the ranking minibatches.
//!
//! A [`LabeledSample`] is an n x p covariate matrix plus a response vector,
//! tagged with the population it was drawn from. [`plan_split`] produces the
//! index sets I11/I12/I21/I22 and the K disjoint ranking batches, driven
//! entirely by a recorded seed so every auxiliary randomization can be
//! replayed.

use std::fmt;
use std::io::Write as IoWrite;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, Stream};

/// Which population a sample was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Population {
    /// The training population P1.
    Train,
    /// The testing population P2.
    Test,
}

impl fmt::Display for Population {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Population::Train => write!(f, "train"),
            Population::Test => write!(f, "test"),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: response column '{name}' not found in header")]
    MissingResponse { path: String, name: String },
    #[error("{path}: row {row}, column '{column}': cannot parse '{value}' as a finite real")]
    BadCell {
        path: String,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{path}: no data rows")]
    Empty { path: String },
    #[error("sample must have n >= 1 and p >= 1, got n={n}, p={p}")]
    BadShape { n: usize, p: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
}

/// A matrix of covariates plus a response vector, all rows from one population.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    features: Array2<f64>,
    response: Array1<f64>,
    population: Population,
}

impl LabeledSample {
    /// Build a sample, rejecting empty shapes and non-finite entries.
    pub fn new(
        features: Array2<f64>,
        response: Array1<f64>,
        population: Population,
    ) -> Result<Self, DatasetError> {
        let (n, p) = features.dim();
        if n == 0 || p == 0 || response.len() != n {
            return Err(DatasetError::BadShape { n, p });
        }
        for ((i, j), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(DatasetError::NonFinite { row: i, col: j });
            }
        }
        for (i, v) in response.iter().enumerate() {
            if !v.is_finite() {
                return Err(DatasetError::NonFinite { row: i, col: p });
            }
        }
        // rows must be contiguous slices
        let features = if features.is_standard_layout() {
            features
        } else {
            features.as_standard_layout().into_owned()
        };
        Ok(Self {
            features,
            response,
            population,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn response(&self) -> &Array1<f64> {
        &self.response
    }

    pub fn population(&self) -> Population {
        self.population
    }

    /// Covariate row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        self.features
            .row(i)
            .to_slice()
            .expect("row-major feature storage")
    }

    /// New sample holding the given rows, in order.
    pub fn subset(&self, idx: &[usize]) -> LabeledSample {
        let p = self.p();
        let mut feats = Array2::zeros((idx.len(), p));
        let mut resp = Array1::zeros(idx.len());
        for (out, &i) in idx.iter().enumerate() {
            feats.row_mut(out).assign(&self.features.row(i));
            resp[out] = self.response[i];
        }
        LabeledSample {
            features: feats,
            response: resp,
            population: self.population,
        }
    }

    /// 64-bit FNV-1a over the shape and the exact bit patterns of all values.
    /// Reports embed this so aggregation can refuse mixed-provenance inputs.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(&(self.n() as u64).to_le_bytes());
        eat(&(self.p() as u64).to_le_bytes());
        for v in self.features.iter().chain(self.response.iter()) {
            eat(&v.to_bits().to_le_bytes());
        }
        h
    }
}

/// Read a labeled sample from a UTF-8, comma-separated file with one header
/// row. Every non-response column is taken as a covariate, in file order.
/// Any cell that does not parse as a finite real aborts the load with its
/// location; rows are never dropped silently.
pub fn load_csv(
    path: impl AsRef<Path>,
    response_column: &str,
    population: Population,
) -> Result<LabeledSample, DatasetError> {
    let path_str = path.as_ref().display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())
        .map_err(|e| csv_open_error(&path_str, e))?;

    let headers = reader
        .headers()
        .map_err(|e| DatasetError::Csv {
            path: path_str.clone(),
            source: e,
        })?
        .clone();
    let resp_idx = headers
        .iter()
        .position(|h| h == response_column)
        .ok_or_else(|| DatasetError::MissingResponse {
            path: path_str.clone(),
            name: response_column.to_string(),
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != resp_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut resp: Vec<f64> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DatasetError::Csv {
            path: path_str.clone(),
            source: e,
        })?;
        let mut row = Vec::with_capacity(feature_names.len());
        for (c, cell) in record.iter().enumerate() {
            let column = headers.get(c).unwrap_or("<extra>").to_string();
            let v: f64 = cell
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| DatasetError::BadCell {
                    path: path_str.clone(),
                    row: r + 2, // 1-based, counting the header
                    column,
                    value: cell.to_string(),
                })?;
            if c == resp_idx {
                resp.push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DatasetError::Empty { path: path_str });
    }

    let n = rows.len();
    let p = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let features = Array2::from_shape_vec((n, p), flat).expect("consistent row widths");
    LabeledSample::new(features, Array1::from_vec(resp), population)
}

fn csv_open_error(path: &str, e: csv::Error) -> DatasetError {
    if let csv::ErrorKind::Io(_) = e.kind() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => DatasetError::Io {
                path: path.to_string(),
                source: io,
            },
            _ => unreachable!(),
        }
    } else {
        DatasetError::Csv {
            path: path.to_string(),
            source: e,
        }
    }
}

/// Write a sample as CSV. Values use Rust's shortest round-trip formatting,
/// so `load_csv . write_csv` is the identity on the stored floats.
pub fn write_csv(
    sample: &LabeledSample,
    path: impl AsRef<Path>,
    response_column: &str,
) -> Result<(), DatasetError> {
    let path_str = path.as_ref().display().to_string();
    let io_err = |e: std::io::Error| DatasetError::Io {
        path: path_str.clone(),
        source: e,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref()).map_err(io_err)?);
    let io_err = |e: std::io::Error| DatasetError::Io {
        path: path_str.clone(),
        source: e,
    };
    let p = sample.p();
    let header: Vec<String> = (1..=p)
        .map(|j| format!("x{j}"))
        .chain(std::iter::once(response_column.to_string()))
        .collect();
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    for i in 0..sample.n() {
        let mut cells: Vec<String> = sample.row(i).iter().map(|v| format!("{v}")).collect();
        cells.push(format!("{}", sample.response()[i]));
        writeln!(out, "{}", cells.join(",")).map_err(io_err)?;
    }
    Ok(())
}

/// The index sets of Algorithm 1's sample split.
///
/// `fit_train_idx`/`fit_test_idx` (I11/I21) feed the density-ratio fits;
/// `rank_train_idx` (I12, size mK) is chopped into the K disjoint ranking
/// batches, and `rank_test_idx` (I22, size K) supplies one test point per
/// batch, paired in enumeration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "i11")]
    pub fit_train_idx: Vec<usize>,
    #[serde(rename = "i12")]
    pub rank_train_idx: Vec<usize>,
    #[serde(rename = "i21")]
    pub fit_test_idx: Vec<usize>,
    #[serde(rename = "i22")]
    pub rank_test_idx: Vec<usize>,
    pub batches: Vec<Vec<usize>>,
}

/// Uniformly random split of {0..n1} into I11 ∪ I12 with |I12| = mK, of
/// {0..n2} into I21 ∪ I22 with |I22| = K, and of I12 into K batches of m.
/// Deterministic in (n1, n2, m, k, seed); at least one point stays in each
/// fitting subsample.
pub fn plan_split(
    n1: usize,
    n2: usize,
    m: usize,
    k: usize,
    seed: u64,
) -> Result<SplitPlan, DatasetError> {
    if m < 1 || k < 1 {
        return Err(DatasetError::InfeasibleSplit(format!(
            "need m >= 1 and K >= 1, got m={m}, K={k}"
        )));
    }
    let mk = m
        .checked_mul(k)
        .ok_or_else(|| DatasetError::InfeasibleSplit("m*K overflows".into()))?;
    if n1 == 0 || mk > n1 - 1 {
        return Err(DatasetError::InfeasibleSplit(format!(
            "m*K = {mk} must be <= n1 - 1 = {}",
            n1.saturating_sub(1)
        )));
    }
    if n2 == 0 || k > n2 - 1 {
        return Err(DatasetError::InfeasibleSplit(format!(
            "K = {k} must be <= n2 - 1 = {}",
            n2.saturating_sub(1)
        )));
    }

    let mut rng = stream_rng(seed, Stream::Split);
    let mut train: Vec<usize> = (0..n1).collect();
    train.shuffle(&mut rng);
    let rank_train_idx: Vec<usize> = train[..mk].to_vec();
    let mut fit_train_idx: Vec<usize> = train[mk..].to_vec();
    fit_train_idx.sort_unstable();

    let mut test: Vec<usize> = (0..n2).collect();
    test.shuffle(&mut rng);
    let rank_test_idx: Vec<usize> = test[..k].to_vec();
    let mut fit_test_idx: Vec<usize> = test[k..].to_vec();
    fit_test_idx.sort_unstable();

    let batches: Vec<Vec<usize>> = rank_train_idx.chunks(m).map(|c| c.to_vec()).collect();

    Ok(SplitPlan {
        seed,
        m,
        k,
        fit_train_idx,
        rank_train_idx,
        fit_test_idx,
        rank_test_idx,
        batches,
    })
}

/// Default number of ranking minibatches: min(ceil(n2/ln n2), floor(n1/(2m))),
/// capped at n2 - 1 so the test fitting subsample stays non-empty.
pub fn default_k(n2: usize, n1: usize, m: usize) -> Result<usize, DatasetError> {
    if n2 < 3 {
        return Err(DatasetError::InfeasibleSplit(format!(
            "need n2 >= 3 for the K default, got {n2}"
        )));
    }
    if n1 < 2 * m + 1 {
        return Err(DatasetError::InfeasibleSplit(format!(
            "need n1 >= 2m + 1 = {} for the K default, got {n1}",
            2 * m + 1
        )));
    }
    let frac = (n2 as f64 / (n2 as f64).ln()).ceil() as usize;
    let cap = n1 / (2 * m);
    Ok(frac.min(cap).min(n2 - 1).max(1))
}
