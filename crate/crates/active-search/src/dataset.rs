//! Pool storage: point features and hidden ground-truth labels.
//!
//! A [`Dataset`] is a finite pool of `n` points identified by `0..n`. Features
//! are either dense real vectors or sparse sorted index sets (binary
//! fingerprints). The `truth` labels are hidden from policies; only the
//! simulation oracle in the experiment harness reads them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset must contain at least one point")]
    Empty,
    #[error("point {id}: feature row has {got} values, expected {expected}")]
    DimensionMismatch {
        id: usize,
        got: usize,
        expected: usize,
    },
    #[error("point {id}: sparse indices must be strictly increasing")]
    UnsortedIndices { id: usize },
    #[error("truth has {got} entries for {expected} points")]
    TruthLength { got: usize, expected: usize },
    #[error("point {id}: non-finite feature value")]
    NonFiniteFeature { id: usize },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Which feature representation a dataset uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Dense,
    Sparse,
}

#[derive(Debug, Clone)]
enum Features {
    /// Row-major `n x dim` matrix.
    Dense { dim: usize, values: Vec<f64> },
    /// Per-point sorted sets of active feature indices.
    Sparse { indices: Vec<Vec<u32>> },
}

/// A finite pool of points with features and hidden ground-truth labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    name: String,
    features: Features,
    truth: Vec<bool>,
}

impl Dataset {
    /// Builds a dense dataset from row vectors.
    pub fn dense(
        name: impl Into<String>,
        dim: usize,
        rows: Vec<Vec<f64>>,
        truth: Vec<bool>,
    ) -> Result<Self, DatasetError> {
        if rows.is_empty() {
            return Err(DatasetError::Empty);
        }
        if truth.len() != rows.len() {
            return Err(DatasetError::TruthLength {
                got: truth.len(),
                expected: rows.len(),
            });
        }
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (id, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(DatasetError::DimensionMismatch {
                    id,
                    got: row.len(),
                    expected: dim,
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::NonFiniteFeature { id });
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            name: name.into(),
            features: Features::Dense { dim, values },
            truth,
        })
    }

    /// Builds a sparse fingerprint dataset. Index lists must be strictly
    /// increasing.
    pub fn sparse(
        name: impl Into<String>,
        fingerprints: Vec<Vec<u32>>,
        truth: Vec<bool>,
    ) -> Result<Self, DatasetError> {
        if fingerprints.is_empty() {
            return Err(DatasetError::Empty);
        }
        if truth.len() != fingerprints.len() {
            return Err(DatasetError::TruthLength {
                got: truth.len(),
                expected: fingerprints.len(),
            });
        }
        for (id, fp) in fingerprints.iter().enumerate() {
            if fp.windows(2).any(|w| w[0] >= w[1]) {
                return Err(DatasetError::UnsortedIndices { id });
            }
        }
        Ok(Self {
            name: name.into(),
            features: Features::Sparse {
                indices: fingerprints,
            },
            truth,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn kind(&self) -> FeatureKind {
        match self.features {
            Features::Dense { .. } => FeatureKind::Dense,
            Features::Sparse { .. } => FeatureKind::Sparse,
        }
    }

    /// Hidden ground-truth labels; only the simulation oracle should read these.
    pub fn truth(&self) -> &[bool] {
        &self.truth
    }

    pub fn target_count(&self) -> usize {
        self.truth.iter().filter(|&&t| t).count()
    }

    /// Feature dimension for dense datasets.
    pub fn dim(&self) -> Option<usize> {
        match self.features {
            Features::Dense { dim, .. } => Some(dim),
            Features::Sparse { .. } => None,
        }
    }

    /// Dense feature row of a point. Panics if the dataset is sparse.
    pub fn dense_row(&self, id: usize) -> &[f64] {
        match &self.features {
            Features::Dense { dim, values } => &values[id * dim..(id + 1) * dim],
            Features::Sparse { .. } => panic!("dense_row on a sparse dataset"),
        }
    }

    /// Sparse fingerprint of a point. Panics if the dataset is dense.
    pub fn sparse_row(&self, id: usize) -> &[u32] {
        match &self.features {
            Features::Sparse { indices } => &indices[id],
            Features::Dense { .. } => panic!("sparse_row on a dense dataset"),
        }
    }

    /// Loads a dense dataset from CSV: header, then `id,label,f1,...,fd` rows.
    /// Ids must form a permutation of `0..n`.
    pub fn load_dense_csv(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = read_text(path)?;
        let pstr = path.display().to_string();
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse_err(&pstr, "empty file"))?;
        let header_cols: Vec<&str> = header.split(',').collect();
        if header_cols.len() < 3
            || header_cols[0].trim() != "id"
            || header_cols[1].trim() != "label"
        {
            return Err(parse_err(&pstr, "header must start with `id,label,`"));
        }
        let dim = header_cols.len() - 2;
        let mut rows: Vec<Option<(Vec<f64>, bool)>> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let id = parse_field::<usize>(&pstr, lineno, fields.next())?;
            let label = parse_label(&pstr, lineno, fields.next())?;
            let feats: Vec<f64> = fields
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| parse_err(&pstr, &format!("line {}: {e}", lineno + 2)))
                })
                .collect::<Result<_, _>>()?;
            if feats.len() != dim {
                return Err(parse_err(
                    &pstr,
                    &format!(
                        "line {}: expected {dim} features, got {}",
                        lineno + 2,
                        feats.len()
                    ),
                ));
            }
            place(&mut rows, id, (feats, label), &pstr)?;
        }
        let (rows, truth) = unzip_rows(rows, &pstr)?;
        Self::dense(pstr, dim, rows, truth)
    }

    /// Writes the dense CSV format read by [`Dataset::load_dense_csv`].
    pub fn save_dense_csv(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let dim = match &self.features {
            Features::Dense { dim, .. } => *dim,
            Features::Sparse { .. } => panic!("save_dense_csv on a sparse dataset"),
        };
        let mut out = String::from("id,label");
        for d in 0..dim {
            write!(out, ",f{}", d + 1).unwrap();
        }
        out.push('\n');
        for id in 0..self.len() {
            write!(out, "{id},{}", self.truth[id] as u8).unwrap();
            for v in self.dense_row(id) {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        write_text(path.as_ref(), &out)
    }

    /// Loads a sparse fingerprint file: one `id,label,i1 i2 i3 ...` line per
    /// point, indices sorted ascending. Ids must form a permutation of `0..n`.
    pub fn load_sparse(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = read_text(path)?;
        let pstr = path.display().to_string();
        let mut rows: Vec<Option<(Vec<u32>, bool)>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.splitn(3, ',');
            let id = parse_field::<usize>(&pstr, lineno.wrapping_sub(1), fields.next())?;
            let label = parse_label(&pstr, lineno.wrapping_sub(1), fields.next())?;
            let idx_part = fields.next().unwrap_or("");
            let indices: Vec<u32> = idx_part
                .split_whitespace()
                .map(|f| {
                    f.parse::<u32>()
                        .map_err(|e| parse_err(&pstr, &format!("line {}: {e}", lineno + 1)))
                })
                .collect::<Result<_, _>>()?;
            place(&mut rows, id, (indices, label), &pstr)?;
        }
        let (fps, truth) = unzip_rows(rows, &pstr)?;
        Self::sparse(pstr, fps, truth)
    }

    /// Writes the sparse format read by [`Dataset::load_sparse`].
    pub fn save_sparse(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let mut out = String::new();
        for id in 0..self.len() {
            write!(out, "{id},{},", self.truth[id] as u8).unwrap();
            let fp = self.sparse_row(id);
            for (j, ix) in fp.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                write!(out, "{ix}").unwrap();
            }
            out.push('\n');
        }
        write_text(path.as_ref(), &out)
    }
}

fn read_text(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), DatasetError> {
    fs::write(path, text).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_err(path: &str, msg: &str) -> DatasetError {
    DatasetError::Parse {
        path: path.to_string(),
        msg: msg.to_string(),
    }
}

fn parse_field<T: std::str::FromStr>(
    path: &str,
    lineno: usize,
    field: Option<&str>,
) -> Result<T, DatasetError>
where
    T::Err: std::fmt::Display,
{
    let f = field.ok_or_else(|| parse_err(path, &format!("line {}: missing field", lineno + 2)))?;
    f.trim()
        .parse::<T>()
        .map_err(|e| parse_err(path, &format!("line {}: {e}", lineno + 2)))
}

fn parse_label(path: &str, lineno: usize, field: Option<&str>) -> Result<bool, DatasetError> {
    match parse_field::<u8>(path, lineno, field)? {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(parse_err(
            path,
            &format!("line {}: label must be 0 or 1, got {other}", lineno + 2),
        )),
    }
}

fn place<T>(
    rows: &mut Vec<Option<T>>,
    id: usize,
    value: T,
    path: &str,
) -> Result<(), DatasetError> {
    if id >= rows.len() {
        rows.resize_with(id + 1, || None);
    }
    if rows[id].is_some() {
        return Err(parse_err(path, &format!("duplicate point id {id}")));
    }
    rows[id] = Some(value);
    Ok(())
}

fn unzip_rows<A>(
    rows: Vec<Option<(A, bool)>>,
    path: &str,
) -> Result<(Vec<A>, Vec<bool>), DatasetError> {
    let mut feats = Vec::with_capacity(rows.len());
    let mut truth = Vec::with_capacity(rows.len());
    for (id, slot) in rows.into_iter().enumerate() {
        match slot {
            Some((f, t)) => {
                feats.push(f);
                truth.push(t);
            }
            None => return Err(parse_err(path, &format!("missing point id {id}"))),
        }
    }
    if feats.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok((feats, truth))
}
