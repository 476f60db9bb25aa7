//! Monolingual word-vector sets: `.vec` I/O, preprocessing and lookup.
//!
//! The `.vec` text format is the fastText one: a `"<n> <d>"` header line
//! followed by one `"<token> <v1> ... <vd>"` line per word, most frequent
//! words first.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// A vocabulary and its row-per-word embedding matrix.
///
/// Immutable once built; every constructor checks that tokens are unique,
/// that there is at least one row and that all entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    words: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Array2<f64>,
    meta: String,
}

/// Side information collected while parsing a `.vec` stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    /// Header row count.
    pub declared_rows: usize,
    /// Lines after the first occurrence of an already seen token.
    pub duplicates_skipped: usize,
}

impl EmbeddingSet {
    pub fn new(words: Vec<String>, matrix: Array2<f64>, meta: impl Into<String>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::EmptyEmbeddings);
        }
        if words.len() != matrix.nrows() {
            return Err(Error::Shape(format!(
                "{} words but {} matrix rows",
                words.len(),
                matrix.nrows()
            )));
        }
        if matrix.ncols() == 0 {
            return Err(Error::InvalidDimensions("embedding dimension must be positive".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding matrix"));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Shape(format!("duplicate token {w:?}")));
            }
        }
        Ok(Self {
            words,
            index,
            matrix,
            meta: meta.into(),
        })
    }

    /// Parse a `.vec` stream, keeping at most `max_vocab` rows in file order.
    ///
    /// Repeated tokens keep their first (most frequent) occurrence.
    pub fn parse_vec<R: BufRead>(reader: R, max_vocab: usize) -> Result<(Self, ParseStats)> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::MalformedHeader("empty stream".into()))??;
        let fields: Vec<&str> = header.split_ascii_whitespace().collect();
        let (declared, dim) = match fields.as_slice() {
            [n, d] => (
                n.parse::<usize>()
                    .map_err(|_| Error::MalformedHeader(header.clone()))?,
                d.parse::<usize>()
                    .map_err(|_| Error::MalformedHeader(header.clone()))?,
            ),
            _ => return Err(Error::MalformedHeader(header.clone())),
        };
        if dim == 0 {
            return Err(Error::MalformedHeader(header));
        }

        let mut words = Vec::new();
        let mut seen = HashMap::new();
        let mut data = Vec::new();
        let mut stats = ParseStats {
            declared_rows: declared,
            duplicates_skipped: 0,
        };

        for (i, line) in lines.enumerate().take(declared) {
            if words.len() >= max_vocab {
                break;
            }
            let line = line?;
            let lineno = i + 2;
            let mut parts = line.split_ascii_whitespace();
            let Some(token) = parts.next() else {
                return Err(Error::DimensionMismatch {
                    line: lineno,
                    expected: dim,
                    found: 0,
                });
            };
            let values: Vec<&str> = parts.collect();
            if values.len() != dim {
                return Err(Error::DimensionMismatch {
                    line: lineno,
                    expected: dim,
                    found: values.len(),
                });
            }
            if seen.contains_key(token) {
                stats.duplicates_skipped += 1;
                continue;
            }
            for v in values {
                match v.parse::<f64>() {
                    Ok(x) if x.is_finite() => data.push(x),
                    _ => {
                        return Err(Error::BadValue {
                            line: lineno,
                            value: v.to_string(),
                        })
                    }
                }
            }
            seen.insert(token.to_string(), words.len());
            words.push(token.to_string());
        }

        if stats.duplicates_skipped > 0 {
            warn!("skipped {} duplicate tokens", stats.duplicates_skipped);
        }
        if words.is_empty() {
            return Err(Error::EmptyEmbeddings);
        }
        let matrix = Array2::from_shape_vec((words.len(), dim), data)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let set = Self {
            index: seen,
            words,
            matrix,
            meta: format!(".vec ({declared} x {dim} declared)"),
        };
        Ok((set, stats))
    }

    /// Write the set as `.vec` text with 6 significant digits per value.
    pub fn write_vec<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim())?;
        for (word, row) in self.words.iter().zip(self.matrix.rows()) {
            out.write_all(word.as_bytes())?;
            for v in row {
                out.write_all(b" ")?;
                out.write_all(format_g6(*v).as_bytes())?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Normalize every row, subtract the column mean, normalize again.
    pub fn preprocess(&self) -> Result<Self> {
        let mut m = self.matrix.clone();
        self.normalize_in_place(&mut m)?;
        let mean = m.mean_axis(Axis(0)).expect("at least one row");
        m -= &mean;
        self.normalize_in_place(&mut m)?;
        Ok(Self {
            words: self.words.clone(),
            index: self.index.clone(),
            matrix: m,
            meta: format!("{} | normalized, centered, normalized", self.meta),
        })
    }

    fn normalize_in_place(&self, m: &mut Array2<f64>) -> Result<()> {
        for (i, mut row) in m.rows_mut().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::ZeroNorm(self.words[i].clone()));
            }
            row.mapv_inplace(|x| x / norm);
        }
        Ok(())
    }

    /// Row index of `token`, byte-exact.
    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn row(&self, idx: usize) -> ArrayView1<'_, f64> {
        self.matrix.row(idx)
    }

    /// Gather the given rows into a new matrix, in order.
    pub fn rows(&self, indices: &[usize]) -> Array2<f64> {
        self.matrix.select(Axis(0), indices)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn meta(&self) -> &str {
        &self.meta
    }

    /// Keep only the first `n` rows.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        Self::new(
            self.words[..n].to_vec(),
            self.matrix.slice(ndarray::s![..n, ..]).to_owned(),
            self.meta.clone(),
        )
    }

    /// Column means; used by tests of the centering step.
    pub fn column_means(&self) -> Array1<f64> {
        self.matrix.mean_axis(Axis(0)).expect("at least one row")
    }
}

/// `printf("%g")`-style formatting with 6 significant digits.
pub fn format_g6(v: f64) -> String {
    const PRECISION: i32 = 6;
    if v == 0.0 {
        return "0".to_string();
    }
    // Round first so that the exponent reflects the rounded value (9.999999 -> 10).
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..PRECISION).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
