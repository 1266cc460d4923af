//! Sparse third-order tensors of observed interactions.
//!
//! A dynamic weighted network with node sets `I`, `J` and time slots `K` is
//! stored as a coordinate list of `(i, j, k, value)` observations. Indices are
//! 0-based everywhere, including on disk.
//!
//! The on-disk format is plain text with one observation per line:
//!
//! ```text
//! # dims 3 3 2
//! 0 1 0 3.5
//! 2 0 1 0.25
//! ```
//!
//! Lines starting with `#` are comments; the optional `# dims I J K` comment
//! declares the tensor shape.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed interaction `x_ijk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

impl Entry {
    pub fn new(i: usize, j: usize, k: usize, value: f64) -> Self {
        Entry { i, j, k, value }
    }

    pub fn key(&self) -> (usize, usize, usize) {
        (self.i, self.j, self.k)
    }
}

/// How the shape of an ingested tensor is determined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimSpec {
    /// Use the `# dims` header if present, otherwise `max index + 1` per mode.
    Infer,
    Fixed([usize; 3]),
}

/// Options for [`ingest`].
#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub dims: DimSpec,
    /// Replace earlier observations of a repeated key instead of failing.
    pub keep_last: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            dims: DimSpec::Infer,
            keep_last: false,
        }
    }
}

/// An immutable set of observed entries with declared bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor {
    dims: [usize; 3],
    entries: Vec<Entry>,
    normalized: bool,
}

impl SparseTensor {
    /// Builds a tensor, checking bounds, finiteness and key uniqueness.
    pub fn new(dims: [usize; 3], entries: Vec<Entry>) -> Result<Self> {
        check_dims(dims)?;
        let mut seen = HashMap::with_capacity(entries.len());
        for (n, e) in entries.iter().enumerate() {
            check_entry(e, dims, None)?;
            if let Some(first) = seen.insert(e.key(), n) {
                return Err(Error::DuplicateKey {
                    line: n + 1,
                    first_line: first + 1,
                    i: e.i,
                    j: e.j,
                    k: e.k,
                });
            }
        }
        Ok(SparseTensor {
            dims,
            entries,
            normalized: false,
        })
    }

    /// An observation set with no entries.
    pub fn empty(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, Vec::new())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Whether values are in the `ln(x + 1)` domain.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Marks the values as already being in the log domain, e.g. for
    /// synthetic data generated directly in that domain.
    pub fn assume_normalized(mut self) -> Self {
        self.normalized = true;
        self
    }

    /// Replaces every value `v` by `ln(v + 1)`.
    pub fn normalize(&self) -> Result<Self> {
        if self.normalized {
            return Err(Error::State("tensor is already normalized".into()));
        }
        if let Some(e) = self.entries.iter().find(|e| e.value < 0.0) {
            return Err(Error::Domain(format!(
                "negative value {} at ({}, {}, {}) cannot be log-normalized",
                e.value, e.i, e.j, e.k
            )));
        }
        Ok(self.map_values(f64::ln_1p, true))
    }

    /// Replaces every value `v` by `exp(v) - 1`.
    pub fn denormalize(&self) -> Result<Self> {
        if !self.normalized {
            return Err(Error::State("tensor is not normalized".into()));
        }
        Ok(self.map_values(f64::exp_m1, false))
    }

    fn map_values(&self, f: impl Fn(f64) -> f64, normalized: bool) -> Self {
        SparseTensor {
            dims: self.dims,
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    value: f(e.value),
                    ..*e
                })
                .collect(),
            normalized,
        }
    }

    /// Shuffles the entries with a seeded permutation and cuts them into
    /// train, validation and test sets sized by largest-remainder rounding.
    pub fn split(&self, spec: &SplitSpec) -> Result<(SparseTensor, SparseTensor, SparseTensor)> {
        spec.validate()?;
        if self.entries.is_empty() {
            return Err(Error::EmptyInput("cannot split a tensor with no entries".into()));
        }
        let sizes = spec.sizes(self.entries.len());
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        order.shuffle(&mut rng);

        let mut parts = order.iter().map(|&n| self.entries[n]);
        let mut take = |n: usize| SparseTensor {
            dims: self.dims,
            entries: parts.by_ref().take(n).collect(),
            normalized: self.normalized,
        };
        let train = take(sizes[0]);
        let valid = take(sizes[1]);
        let test = take(sizes[2]);
        Ok((train, valid, test))
    }

    /// Renders the COO text format, including a `# dims` header.
    pub fn to_coo_string(&self) -> String {
        let mut out = String::with_capacity(self.entries.len() * 24 + 32);
        let [di, dj, dk] = self.dims;
        let _ = writeln!(out, "# dims {di} {dj} {dk}");
        for e in &self.entries {
            let _ = writeln!(out, "{} {} {} {}", e.i, e.j, e.k, e.value);
        }
        out
    }

    pub fn write_coo(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_coo_string()).map_err(|e| Error::io(path, e))
    }
}

/// Train/validation/test ratios plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: [u32; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(ratios: [u32; 3], seed: u64) -> Self {
        SplitSpec { ratios, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().map(|&r| u64::from(r)).sum::<u64>() == 0 {
            return Err(Error::Parameter("split ratios must not all be zero".into()));
        }
        Ok(())
    }

    /// Part sizes for `n` entries: floor of each proportional share, with the
    /// leftover handed out by largest fractional remainder (earlier part wins ties).
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let total: u128 = self.ratios.iter().map(|&r| u128::from(r)).sum();
        let n128 = n as u128;
        let mut sizes = [0usize; 3];
        let mut rems = [0u128; 3];
        for p in 0..3 {
            let share = n128 * u128::from(self.ratios[p]);
            sizes[p] = (share / total) as usize;
            rems[p] = share % total;
        }
        let mut leftover = n - sizes.iter().sum::<usize>();
        let mut by_rem = [0usize, 1, 2];
        by_rem.sort_by(|&a, &b| rems[b].cmp(&rems[a]).then(a.cmp(&b)));
        for &p in by_rem.iter().cycle() {
            if leftover == 0 {
                break;
            }
            sizes[p] += 1;
            leftover -= 1;
        }
        sizes
    }
}

impl std::str::FromStr for SplitSpec {
    type Err = Error;

    /// Parses `"1:2:7"`; the seed defaults to 0.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Parameter(format!(
                "split must look like A:B:C, got {s:?}"
            )));
        }
        let mut ratios = [0u32; 3];
        for (r, p) in ratios.iter_mut().zip(&parts) {
            *r = p
                .trim()
                .parse()
                .map_err(|_| Error::Parameter(format!("bad split ratio {p:?}")))?;
        }
        let spec = SplitSpec { ratios, seed: 0 };
        spec.validate()?;
        Ok(spec)
    }
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::Parameter(format!(
            "tensor dims must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

fn check_entry(e: &Entry, dims: [usize; 3], line: Option<usize>) -> Result<()> {
    if e.i >= dims[0] || e.j >= dims[1] || e.k >= dims[2] {
        return Err(Error::OutOfBounds {
            i: e.i,
            j: e.j,
            k: e.k,
            dims,
            line,
        });
    }
    if !e.value.is_finite() {
        let message = format!("non-finite value {}", e.value);
        return Err(match line {
            Some(line) => Error::Parse { line, message },
            None => Error::Domain(message),
        });
    }
    Ok(())
}

/// Reads a COO text file.
pub fn ingest(path: impl AsRef<Path>, opts: IngestOptions) -> Result<SparseTensor> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_coo(&text, opts)
}

/// Parses COO text; see the module docs for the format.
///
/// With [`DimSpec::Infer`] and neither a header nor any entries, the shape
/// is `[1, 1, 1]`.
pub fn parse_coo(text: &str, opts: IngestOptions) -> Result<SparseTensor> {
    let mut header_dims = None;
    let mut raw: Vec<(usize, Entry)> = Vec::new();

    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if words.next() == Some("dims") {
                let vals: Vec<&str> = words.collect();
                header_dims = Some(parse_dims_header(&vals, line_no)?);
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 fields (i j k value), found {}", fields.len()),
            });
        }
        let idx = |f: &str, name: &str| -> Result<usize> {
            f.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("{name} index {f:?} is not a non-negative integer"),
            })
        };
        let value: f64 = fields[3].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("value {:?} is not a number", fields[3]),
        })?;
        let e = Entry::new(idx(fields[0], "i")?, idx(fields[1], "j")?, idx(fields[2], "k")?, value);
        raw.push((line_no, e));
    }

    let dims = match (opts.dims, header_dims) {
        (DimSpec::Fixed(d), _) => d,
        (DimSpec::Infer, Some(d)) => d,
        (DimSpec::Infer, None) => raw.iter().fold([1, 1, 1], |acc, (_, e)| {
            [acc[0].max(e.i + 1), acc[1].max(e.j + 1), acc[2].max(e.k + 1)]
        }),
    };
    check_dims(dims)?;

    let mut slot: HashMap<(usize, usize, usize), (usize, usize)> = HashMap::with_capacity(raw.len());
    let mut entries: Vec<Entry> = Vec::with_capacity(raw.len());
    for (line_no, e) in raw {
        check_entry(&e, dims, Some(line_no))?;
        match slot.get_mut(&e.key()) {
            Some((pos, first_line)) => {
                if !opts.keep_last {
                    return Err(Error::DuplicateKey {
                        line: line_no,
                        first_line: *first_line,
                        i: e.i,
                        j: e.j,
                        k: e.k,
                    });
                }
                entries[*pos] = e;
            }
            None => {
                slot.insert(e.key(), (entries.len(), line_no));
                entries.push(e);
            }
        }
    }

    Ok(SparseTensor {
        dims,
        entries,
        normalized: false,
    })
}

fn parse_dims_header(vals: &[&str], line: usize) -> Result<[usize; 3]> {
    let bad = || Error::Parse {
        line,
        message: "dims header must be '# dims I J K' with positive integers".into(),
    };
    if vals.len() != 3 {
        return Err(bad());
    }
    let mut dims = [0usize; 3];
    for (d, v) in dims.iter_mut().zip(vals) {
        *d = v.parse().map_err(|_| bad())?;
    }
    if dims.contains(&0) {
        return Err(bad());
    }
    Ok(dims)
}
