//! Tensor wheel decomposition parameters and reconstruction.
//!
//! An order-3 tensor of shape `|I| x |J| x |K|` is represented by a core
//! tensor `G` (`H1 x H2 x H3`) and three ring factors
//!
//! * `A`: `R3 x |I| x R1 x H1`
//! * `B`: `R1 x |J| x R2 x H2`
//! * `C`: `R2 x |K| x R3 x H3`
//!
//! Consecutive ring factors share a ring rank (`R1` links `A` to `B`, `R2`
//! links `B` to `C`, `R3` closes the ring back to `A`), and each factor is
//! attached to the core through its own core-link rank. One element is
//!
//! ```text
//! x[i,j,k] = sum over r1,r2,r3,h1,h2,h3 of
//!            g[h1,h2,h3] * a[r3,i,r1,h1] * b[r1,j,r2,h2] * c[r2,k,r3,h3]
//! ```
//!
//! All arrays are dense, row-major and `f64`.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Largest number of elements [`TwdFactors::reconstruct_full`] will materialize by default.
pub const DEFAULT_DENSE_CAP: usize = 10_000_000;

/// Ring ranks `(R1, R2, R3)` and core-link ranks `(H1, H2, H3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ranks {
    pub r: [usize; 3],
    pub h: [usize; 3],
}

impl Ranks {
    pub fn new(r: [usize; 3], h: [usize; 3]) -> Result<Self> {
        let ranks = Ranks { r, h };
        ranks.validate()?;
        Ok(ranks)
    }

    /// Maps a single latent dimension onto the wheel: ring ranks take the
    /// value, core-link ranks are fixed at 2.
    pub fn from_latent_dim(dim: usize) -> Result<Self> {
        Ranks::new([dim; 3], [2; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.r.contains(&0) || self.h.contains(&0) {
            return Err(Error::Parameter(format!(
                "ranks must be positive, got r={:?} h={:?}",
                self.r, self.h
            )));
        }
        Ok(())
    }
}

impl Default for Ranks {
    fn default() -> Self {
        Ranks {
            r: [5; 3],
            h: [2; 3],
        }
    }
}

impl std::str::FromStr for Ranks {
    type Err = Error;

    /// Parses `"R1,R2,R3,H1,H2,H3"`.
    fn from_str(s: &str) -> Result<Self> {
        let vals: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parameter(format!("ranks must be six integers R1,R2,R3,H1,H2,H3, got {s:?}")))?;
        if vals.len() != 6 {
            return Err(Error::Parameter(format!(
                "ranks must be six integers R1,R2,R3,H1,H2,H3, got {s:?}"
            )));
        }
        Ranks::new([vals[0], vals[1], vals[2]], [vals[3], vals[4], vals[5]])
    }
}

impl std::fmt::Display for Ranks {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [r1, r2, r3] = self.r;
        let [h1, h2, h3] = self.h;
        write!(f, "{r1},{r2},{r3},{h1},{h2},{h3}")
    }
}

/// A dense order-3 array, row-major in `(i, j, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl DenseTensor {
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dims[1] + j) * self.dims[2] + k]
    }
}

/// Core tensor and ring factors of a tensor wheel decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct TwdFactors {
    dims: [usize; 3],
    ranks: Ranks,
    g: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

fn shapes(dims: [usize; 3], ranks: Ranks) -> [usize; 4] {
    let [r1, r2, r3] = ranks.r;
    let [h1, h2, h3] = ranks.h;
    [
        h1 * h2 * h3,
        r3 * dims[0] * r1 * h1,
        r1 * dims[1] * r2 * h2,
        r2 * dims[2] * r3 * h3,
    ]
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::Parameter(format!("dims must be positive, got {dims:?}")));
    }
    Ok(())
}

impl TwdFactors {
    /// Draws every element independently from `U[0, scale)`.
    pub fn init(dims: [usize; 3], ranks: Ranks, seed: u64, scale: f64) -> Result<Self> {
        check_dims(dims)?;
        ranks.validate()?;
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::Parameter(format!("init scale must be finite and >= 0, got {scale}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [ng, na, nb, nc] = shapes(dims, ranks);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random::<f64>() * scale).collect() };
        let g = draw(ng);
        let a = draw(na);
        let b = draw(nb);
        let c = draw(nc);
        Ok(TwdFactors { dims, ranks, g, a, b, c })
    }

    /// Assembles factors from flat row-major arrays, validating their lengths.
    pub fn from_parts(
        dims: [usize; 3],
        ranks: Ranks,
        g: Vec<f64>,
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
    ) -> Result<Self> {
        check_dims(dims)?;
        ranks.validate()?;
        let expected = shapes(dims, ranks);
        for ((name, got), want) in ["g", "a", "b", "c"]
            .iter()
            .zip([g.len(), a.len(), b.len(), c.len()])
            .zip(expected)
        {
            if got != want {
                return Err(Error::Parameter(format!(
                    "factor {name} has {got} elements, expected {want}"
                )));
            }
        }
        let f = TwdFactors { dims, ranks, g, a, b, c };
        if !f.is_finite() {
            return Err(Error::Parameter("factor values must be finite".into()));
        }
        Ok(f)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn ranks(&self) -> Ranks {
        self.ranks
    }

    /// Core tensor, indexed `[h1][h2][h3]`.
    pub fn g(&self) -> &[f64] {
        &self.g
    }

    /// Factor `A`, indexed `[r3][i][r1][h1]`.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Factor `B`, indexed `[r1][j][r2][h2]`.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Factor `C`, indexed `[r2][k][r3][h3]`.
    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn g_mut(&mut self) -> &mut [f64] {
        &mut self.g
    }

    pub fn a_mut(&mut self) -> &mut [f64] {
        &mut self.a
    }

    pub fn b_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }

    pub fn c_mut(&mut self) -> &mut [f64] {
        &mut self.c
    }

    pub fn g_at(&self, h1: usize, h2: usize, h3: usize) -> f64 {
        let [_, eh2, eh3] = self.ranks.h;
        self.g[(h1 * eh2 + h2) * eh3 + h3]
    }

    pub fn a_at(&self, r3: usize, i: usize, r1: usize, h1: usize) -> f64 {
        self.a[((r3 * self.dims[0] + i) * self.ranks.r[0] + r1) * self.ranks.h[0] + h1]
    }

    pub fn b_at(&self, r1: usize, j: usize, r2: usize, h2: usize) -> f64 {
        self.b[((r1 * self.dims[1] + j) * self.ranks.r[1] + r2) * self.ranks.h[1] + h2]
    }

    pub fn c_at(&self, r2: usize, k: usize, r3: usize, h3: usize) -> f64 {
        self.c[((r2 * self.dims[2] + k) * self.ranks.r[2] + r3) * self.ranks.h[2] + h3]
    }

    pub fn num_params(&self) -> usize {
        self.g.len() + self.a.len() + self.b.len() + self.c.len()
    }

    pub fn is_finite(&self) -> bool {
        [&self.g, &self.a, &self.b, &self.c]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn check_index(&self, i: usize, j: usize, k: usize) -> Result<()> {
        if i >= self.dims[0] || j >= self.dims[1] || k >= self.dims[2] {
            return Err(Error::OutOfBounds {
                i,
                j,
                k,
                dims: self.dims,
                line: None,
            });
        }
        Ok(())
    }

    /// Reconstructs one element by staged contraction.
    pub fn reconstruct_entry(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        self.check_index(i, j, k)?;
        let mut ws = Contraction::new(self.ranks);
        Ok(ws.value(self, i, j, k))
    }

    /// Materializes the whole tensor, refusing shapes above [`DEFAULT_DENSE_CAP`].
    pub fn reconstruct_full(&self) -> Result<DenseTensor> {
        self.reconstruct_full_with_cap(DEFAULT_DENSE_CAP)
    }

    pub fn reconstruct_full_with_cap(&self, cap: usize) -> Result<DenseTensor> {
        let [di, dj, dk] = self.dims;
        let elements = di as u128 * dj as u128 * dk as u128;
        if elements > cap as u128 {
            return Err(Error::Size { elements, cap });
        }
        let mut ws = Contraction::new(self.ranks);
        let mut data = Vec::with_capacity(elements as usize);
        for i in 0..di {
            ws.load_a(self, i);
            for j in 0..dj {
                ws.load_b(self, j);
                ws.contract_ab_core(&self.g);
                for k in 0..dk {
                    ws.load_c(self, k);
                    data.push(ws.dot_c());
                }
            }
        }
        Ok(DenseTensor {
            dims: self.dims,
            data,
        })
    }

    /// Renders the text checkpoint: a `TWD v1 I J K R1 R2 R3 H1 H2 H3` header,
    /// then `g`, `a`, `b`, `c` flat and row-major, one factor per line.
    pub fn to_checkpoint_string(&self) -> String {
        let [di, dj, dk] = self.dims;
        let [r1, r2, r3] = self.ranks.r;
        let [h1, h2, h3] = self.ranks.h;
        let mut out = format!("TWD v1 {di} {dj} {dk} {r1} {r2} {r3} {h1} {h2} {h3}\n");
        for factor in [&self.g, &self.a, &self.b, &self.c] {
            let mut first = true;
            for v in factor.iter() {
                if !first {
                    out.push(' ');
                }
                first = false;
                // `{}` on f64 is the shortest representation that round-trips.
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if tokens.next() != Some("TWD") || tokens.next() != Some("v1") {
            return Err(bad("missing 'TWD v1' header"));
        }
        let mut header = [0usize; 9];
        for h in header.iter_mut() {
            *h = tokens
                .next()
                .ok_or_else(|| bad("truncated header"))?
                .parse()
                .map_err(|_| bad("header fields must be integers"))?;
        }
        let dims = [header[0], header[1], header[2]];
        let ranks = Ranks {
            r: [header[3], header[4], header[5]],
            h: [header[6], header[7], header[8]],
        };
        check_dims(dims).map_err(|e| bad(&e.to_string()))?;
        ranks.validate().map_err(|e| bad(&e.to_string()))?;
        let [ng, na, nb, nc] = shapes(dims, ranks);
        let mut read = |n: usize| -> Result<Vec<f64>> {
            (0..n)
                .map(|_| {
                    tokens
                        .next()
                        .ok_or_else(|| bad("truncated factor data"))?
                        .parse::<f64>()
                        .map_err(|_| bad("factor values must be numbers"))
                })
                .collect()
        };
        let g = read(ng)?;
        let a = read(na)?;
        let b = read(nb)?;
        let c = read(nc)?;
        if tokens.next().is_some() {
            return Err(bad("trailing data after factor c"));
        }
        TwdFactors::from_parts(dims, ranks, g, a, b, c).map_err(|e| bad(&e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_str(&text)
    }

    /// SHA-256 of the checkpoint text, hex encoded.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_checkpoint_string().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Scratch space for contracting one `(i, j, k)` position.
///
/// Local slice layouts (all row-major):
/// `a[r3][r1][h1]`, `b[r1][r2][h2]`, `c[r2][r3][h3]`.
/// Intermediates: `ab[r3][r2][h1][h2]`, `bc[r1][r3][h2][h3]`, `ca[r2][r1][h3][h1]`.
#[derive(Debug, Clone)]
pub(crate) struct Contraction {
    ranks: Ranks,
    pub(crate) a: Vec<f64>,
    pub(crate) b: Vec<f64>,
    pub(crate) c: Vec<f64>,
    ab: Vec<f64>,
    bc: Vec<f64>,
    ca: Vec<f64>,
    /// d x_hat / d c-slice, which is also the (A, B, G) contraction.
    pub(crate) grad_c: Vec<f64>,
    pub(crate) grad_g: Vec<f64>,
    pub(crate) grad_a: Vec<f64>,
    pub(crate) grad_b: Vec<f64>,
}

impl Contraction {
    pub(crate) fn new(ranks: Ranks) -> Self {
        let [r1, r2, r3] = ranks.r;
        let [h1, h2, h3] = ranks.h;
        Contraction {
            ranks,
            a: vec![0.0; r3 * r1 * h1],
            b: vec![0.0; r1 * r2 * h2],
            c: vec![0.0; r2 * r3 * h3],
            ab: vec![0.0; r3 * r2 * h1 * h2],
            bc: vec![0.0; r1 * r3 * h2 * h3],
            ca: vec![0.0; r2 * r1 * h3 * h1],
            grad_c: vec![0.0; r2 * r3 * h3],
            grad_g: vec![0.0; h1 * h2 * h3],
            grad_a: vec![0.0; r3 * r1 * h1],
            grad_b: vec![0.0; r1 * r2 * h2],
        }
    }

    pub(crate) fn load_a(&mut self, f: &TwdFactors, i: usize) {
        let block = self.ranks.r[0] * self.ranks.h[0];
        for r3 in 0..self.ranks.r[2] {
            let src = (r3 * f.dims[0] + i) * block;
            self.a[r3 * block..(r3 + 1) * block].copy_from_slice(&f.a[src..src + block]);
        }
    }

    pub(crate) fn load_b(&mut self, f: &TwdFactors, j: usize) {
        let block = self.ranks.r[1] * self.ranks.h[1];
        for r1 in 0..self.ranks.r[0] {
            let src = (r1 * f.dims[1] + j) * block;
            self.b[r1 * block..(r1 + 1) * block].copy_from_slice(&f.b[src..src + block]);
        }
    }

    pub(crate) fn load_c(&mut self, f: &TwdFactors, k: usize) {
        let block = self.ranks.r[2] * self.ranks.h[2];
        for r2 in 0..self.ranks.r[1] {
            let src = (r2 * f.dims[2] + k) * block;
            self.c[r2 * block..(r2 + 1) * block].copy_from_slice(&f.c[src..src + block]);
        }
    }

    /// Writes a slice-local update back into the factors.
    pub(crate) fn store_slices(&self, f: &mut TwdFactors, i: usize, j: usize, k: usize) {
        let [r1, r2, r3] = self.ranks.r;
        let [h1, h2, h3] = self.ranks.h;
        let (ba, bb, bcb) = (r1 * h1, r2 * h2, r3 * h3);
        for x in 0..r3 {
            let dst = (x * f.dims[0] + i) * ba;
            f.a[dst..dst + ba].copy_from_slice(&self.a[x * ba..(x + 1) * ba]);
        }
        for x in 0..r1 {
            let dst = (x * f.dims[1] + j) * bb;
            f.b[dst..dst + bb].copy_from_slice(&self.b[x * bb..(x + 1) * bb]);
        }
        for x in 0..r2 {
            let dst = (x * f.dims[2] + k) * bcb;
            f.c[dst..dst + bcb].copy_from_slice(&self.c[x * bcb..(x + 1) * bcb]);
        }
    }

    /// `ab = A_i . B_j` over `r1`, then `grad_c = G . ab` over `(h1, h2)`.
    pub(crate) fn contract_ab_core(&mut self, g: &[f64]) {
        let [r1n, r2n, r3n] = self.ranks.r;
        let [h1n, h2n, h3n] = self.ranks.h;
        self.ab.iter_mut().for_each(|x| *x = 0.0);
        for r3 in 0..r3n {
            for r1 in 0..r1n {
                for h1 in 0..h1n {
                    let av = self.a[(r3 * r1n + r1) * h1n + h1];
                    for r2 in 0..r2n {
                        let brow = &self.b[(r1 * r2n + r2) * h2n..(r1 * r2n + r2 + 1) * h2n];
                        let base = ((r3 * r2n + r2) * h1n + h1) * h2n;
                        for (h2, bv) in brow.iter().enumerate() {
                            self.ab[base + h2] += av * bv;
                        }
                    }
                }
            }
        }
        self.grad_c.iter_mut().for_each(|x| *x = 0.0);
        for r2 in 0..r2n {
            for r3 in 0..r3n {
                let out = (r2 * r3n + r3) * h3n;
                for h1 in 0..h1n {
                    for h2 in 0..h2n {
                        let m = self.ab[((r3 * r2n + r2) * h1n + h1) * h2n + h2];
                        let grow = &g[(h1 * h2n + h2) * h3n..(h1 * h2n + h2 + 1) * h3n];
                        for (h3, gv) in grow.iter().enumerate() {
                            self.grad_c[out + h3] += gv * m;
                        }
                    }
                }
            }
        }
    }

    /// `sum(grad_c * C_k)`: the reconstructed value once `contract_ab_core` ran.
    pub(crate) fn dot_c(&self) -> f64 {
        self.grad_c.iter().zip(&self.c).map(|(x, y)| x * y).sum()
    }

    pub(crate) fn value(&mut self, f: &TwdFactors, i: usize, j: usize, k: usize) -> f64 {
        self.load_a(f, i);
        self.load_b(f, j);
        self.load_c(f, k);
        self.contract_ab_core(&f.g);
        self.dot_c()
    }

    /// Loads the slices for `(i, j, k)` and fills all four partial
    /// derivatives of the reconstructed value. Returns the value.
    pub(crate) fn value_and_partials(&mut self, f: &TwdFactors, i: usize, j: usize, k: usize) -> f64 {
        let value = self.value(f, i, j, k);
        let g = &f.g;
        let [r1n, r2n, r3n] = self.ranks.r;
        let [h1n, h2n, h3n] = self.ranks.h;

        // d/dg[h1,h2,h3] = sum_{r3,r2} ab[r3,r2,h1,h2] * c[r2,r3,h3]
        self.grad_g.iter_mut().for_each(|x| *x = 0.0);
        for r3 in 0..r3n {
            for r2 in 0..r2n {
                let crow = &self.c[(r2 * r3n + r3) * h3n..(r2 * r3n + r3 + 1) * h3n];
                for h1 in 0..h1n {
                    for h2 in 0..h2n {
                        let m = self.ab[((r3 * r2n + r2) * h1n + h1) * h2n + h2];
                        let base = (h1 * h2n + h2) * h3n;
                        for (h3, cv) in crow.iter().enumerate() {
                            self.grad_g[base + h3] += m * cv;
                        }
                    }
                }
            }
        }

        // bc[r1,r3,h2,h3] = sum_r2 b[r1,r2,h2] * c[r2,r3,h3]
        self.bc.iter_mut().for_each(|x| *x = 0.0);
        for r1 in 0..r1n {
            for r2 in 0..r2n {
                for h2 in 0..h2n {
                    let bv = self.b[(r1 * r2n + r2) * h2n + h2];
                    for r3 in 0..r3n {
                        let crow = &self.c[(r2 * r3n + r3) * h3n..(r2 * r3n + r3 + 1) * h3n];
                        let base = ((r1 * r3n + r3) * h2n + h2) * h3n;
                        for (h3, cv) in crow.iter().enumerate() {
                            self.bc[base + h3] += bv * cv;
                        }
                    }
                }
            }
        }
        // d/da[r3,r1,h1] = sum_{h2,h3} g[h1,h2,h3] * bc[r1,r3,h2,h3]
        for r3 in 0..r3n {
            for r1 in 0..r1n {
                let bcs = &self.bc[(r1 * r3n + r3) * h2n * h3n..(r1 * r3n + r3 + 1) * h2n * h3n];
                for h1 in 0..h1n {
                    let gs = &g[h1 * h2n * h3n..(h1 + 1) * h2n * h3n];
                    self.grad_a[(r3 * r1n + r1) * h1n + h1] = gs.iter().zip(bcs).map(|(x, y)| x * y).sum();
                }
            }
        }

        // ca[r2,r1,h3,h1] = sum_r3 c[r2,r3,h3] * a[r3,r1,h1]
        self.ca.iter_mut().for_each(|x| *x = 0.0);
        for r2 in 0..r2n {
            for r3 in 0..r3n {
                for h3 in 0..h3n {
                    let cv = self.c[(r2 * r3n + r3) * h3n + h3];
                    for r1 in 0..r1n {
                        let arow = &self.a[(r3 * r1n + r1) * h1n..(r3 * r1n + r1 + 1) * h1n];
                        let base = ((r2 * r1n + r1) * h3n + h3) * h1n;
                        for (h1, av) in arow.iter().enumerate() {
                            self.ca[base + h1] += cv * av;
                        }
                    }
                }
            }
        }
        // d/db[r1,r2,h2] = sum_{h1,h3} g[h1,h2,h3] * ca[r2,r1,h3,h1]
        for r1 in 0..r1n {
            for r2 in 0..r2n {
                for h2 in 0..h2n {
                    let mut acc = 0.0;
                    for h3 in 0..h3n {
                        for h1 in 0..h1n {
                            acc += g[(h1 * h2n + h2) * h3n + h3] * self.ca[((r2 * r1n + r1) * h3n + h3) * h1n + h1];
                        }
                    }
                    self.grad_b[(r1 * r2n + r2) * h2n + h2] = acc;
                }
            }
        }

        value
    }
}

/// Naive six-fold loop over every rank index. Slow; kept as a reference
/// for checking the staged contraction.
pub fn oracle_entry(f: &TwdFactors, i: usize, j: usize, k: usize) -> Result<f64> {
    f.check_index(i, j, k)?;
    let [r1n, r2n, r3n] = f.ranks.r;
    let [h1n, h2n, h3n] = f.ranks.h;
    let mut sum = 0.0;
    for r1 in 0..r1n {
        for r2 in 0..r2n {
            for r3 in 0..r3n {
                for h1 in 0..h1n {
                    for h2 in 0..h2n {
                        for h3 in 0..h3n {
                            sum += f.g_at(h1, h2, h3)
                                * f.a_at(r3, i, r1, h1)
                                * f.b_at(r1, j, r2, h2)
                                * f.c_at(r2, k, r3, h3);
                        }
                    }
                }
            }
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(dims: [usize; 3], ranks: Ranks) -> TwdFactors {
        let [ng, na, nb, nc] = shapes(dims, ranks);
        TwdFactors::from_parts(dims, ranks, vec![1.0; ng], vec![1.0; na], vec![1.0; nb], vec![1.0; nc]).unwrap()
    }

    fn signed_random(dims: [usize; 3], ranks: Ranks, seed: u64) -> TwdFactors {
        let mut f = TwdFactors::init(dims, ranks, seed, 2.0).unwrap();
        for v in f.g.iter_mut().chain(&mut f.a).chain(&mut f.b).chain(&mut f.c) {
            *v -= 1.0;
        }
        f
    }

    #[test]
    fn zero_scale_gives_zero_factors() {
        let f = TwdFactors::init([2, 3, 4], Ranks::default(), 7, 0.0).unwrap();
        assert!(f.g().iter().chain(f.a()).chain(f.b()).chain(f.c()).all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_deterministic_and_in_range() {
        let r = Ranks::new([2, 3, 2], [1, 2, 2]).unwrap();
        let f1 = TwdFactors::init([3, 4, 5], r, 11, 0.5).unwrap();
        let f2 = TwdFactors::init([3, 4, 5], r, 11, 0.5).unwrap();
        let f3 = TwdFactors::init([3, 4, 5], r, 12, 0.5).unwrap();
        assert_eq!(f1, f2);
        assert_ne!(f1, f3);
        assert!(f1.a().iter().all(|&v| (0.0..0.5).contains(&v)));
    }

    #[test]
    fn factor_element_counts() {
        let r = Ranks::new([2, 2, 2], [2, 2, 2]).unwrap();
        let f = TwdFactors::init([3, 3, 3], r, 0, 1.0).unwrap();
        assert_eq!(f.a().len(), 2 * 3 * 2 * 2);
        assert_eq!(f.a().len(), 24);
        assert_eq!(f.g().len(), 8);

        let r = Ranks::new([2, 3, 4], [5, 6, 7]).unwrap();
        let f = TwdFactors::init([8, 9, 10], r, 0, 1.0).unwrap();
        assert_eq!(f.g().len(), 5 * 6 * 7);
        assert_eq!(f.a().len(), 4 * 8 * 2 * 5);
        assert_eq!(f.b().len(), 2 * 9 * 3 * 6);
        assert_eq!(f.c().len(), 3 * 10 * 4 * 7);
    }

    #[test]
    fn init_rejects_zero_dims_and_ranks() {
        assert!(matches!(TwdFactors::init([0, 1, 1], Ranks::default(), 0, 1.0), Err(Error::Parameter(_))));
        let bad = Ranks { r: [1, 0, 1], h: [1, 1, 1] };
        assert!(matches!(TwdFactors::init([1, 1, 1], bad, 0, 1.0), Err(Error::Parameter(_))));
        assert!(Ranks::new([1, 1, 1], [1, 1, 0]).is_err());
    }

    #[test]
    fn scalar_case_is_single_product() {
        let r = Ranks::new([1, 1, 1], [1, 1, 1]).unwrap();
        let f = TwdFactors::from_parts([1, 1, 1], r, vec![2.0], vec![3.0], vec![4.0], vec![5.0]).unwrap();
        assert_eq!(f.reconstruct_entry(0, 0, 0).unwrap(), 120.0);
        assert_eq!(f.reconstruct_full().unwrap().data, vec![120.0]);
    }

    #[test]
    fn zero_core_annihilates() {
        let r = Ranks::new([2, 2, 2], [2, 2, 2]).unwrap();
        let mut f = TwdFactors::init([3, 2, 2], r, 1, 1.0).unwrap();
        f.g_mut().iter_mut().for_each(|v| *v = 0.0);
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..2 {
                    assert_eq!(f.reconstruct_entry(i, j, k).unwrap(), 0.0);
                }
            }
        }
        assert!(f.reconstruct_full().unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oracle_counts_rank_combinations() {
        let f = ones([2, 2, 2], Ranks::new([1, 1, 1], [1, 1, 1]).unwrap());
        assert_eq!(oracle_entry(&f, 1, 0, 1).unwrap(), 1.0);
        let f = ones([2, 2, 2], Ranks::new([2, 2, 2], [1, 1, 1]).unwrap());
        assert_eq!(oracle_entry(&f, 0, 1, 1).unwrap(), 8.0);
        assert_eq!(f.reconstruct_entry(0, 1, 1).unwrap(), 8.0);
    }

    #[test]
    fn reconstruct_matches_oracle_on_random_333() {
        let r = Ranks::new([2, 2, 2], [2, 2, 2]).unwrap();
        let f = signed_random([3, 3, 3], r, 5);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let d = f.reconstruct_entry(i, j, k).unwrap() - oracle_entry(&f, i, j, k).unwrap();
                    assert!(d.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn full_reconstruction_matches_entries() {
        let r = Ranks::new([2, 3, 1], [2, 1, 3]).unwrap();
        let f = signed_random([4, 3, 2], r, 9);
        let full = f.reconstruct_full().unwrap();
        assert_eq!(full.data.len(), 24);
        for i in 0..4 {
            for j in 0..3 {
                for k in 0..2 {
                    assert_eq!(full.get(i, j, k), f.reconstruct_entry(i, j, k).unwrap());
                    assert!((full.get(i, j, k) - oracle_entry(&f, i, j, k).unwrap()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn full_reconstruction_respects_cap() {
        let f = TwdFactors::init([4, 3, 2], Ranks::default(), 0, 1.0).unwrap();
        assert!(matches!(f.reconstruct_full_with_cap(23), Err(Error::Size { elements: 24, .. })));
        assert!(f.reconstruct_full_with_cap(24).is_ok());
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        let f = TwdFactors::init([2, 2, 2], Ranks::default(), 0, 1.0).unwrap();
        assert!(matches!(f.reconstruct_entry(2, 0, 0), Err(Error::OutOfBounds { .. })));
        assert!(matches!(oracle_entry(&f, 0, 0, 2), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn checkpoint_round_trips_exactly() {
        let r = Ranks::new([2, 1, 3], [1, 2, 2]).unwrap();
        let f = signed_random([3, 2, 4], r, 21);
        let text = f.to_checkpoint_string();
        assert!(text.starts_with("TWD v1 3 2 4 2 1 3 1 2 2\n"));
        let back = TwdFactors::from_checkpoint_str(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.fingerprint(), f.fingerprint());
    }

    #[test]
    fn checkpoint_rejects_malformed_input() {
        assert!(TwdFactors::from_checkpoint_str("TWD v2 1 1 1 1 1 1 1 1 1 1 1 1 1").is_err());
        assert!(TwdFactors::from_checkpoint_str("TWD v1 1 1 1 1 1 1 1 1 1 1 1 1").is_err());
        assert!(TwdFactors::from_checkpoint_str("TWD v1 1 1 1 1 1 1 1 1 1 1 1 1 1 1").is_err());
        assert!(TwdFactors::from_checkpoint_str("TWD v1 1 1 1 1 1 1 1 1 1 1 1 1 x").is_err());
        assert!(TwdFactors::from_checkpoint_str("TWD v1 1 1 1 1 1 1 1 1 1 1 1 1 1").is_ok());
    }

    #[test]
    fn ranks_parse_and_default_mapping() {
        let r: Ranks = "1,2,3,4,5,6".parse().unwrap();
        assert_eq!(r.r, [1, 2, 3]);
        assert_eq!(r.h, [4, 5, 6]);
        assert_eq!(r.to_string(), "1,2,3,4,5,6");
        assert!("1,2,3".parse::<Ranks>().is_err());
        assert!("1,2,3,4,5,0".parse::<Ranks>().is_err());
        let d = Ranks::from_latent_dim(5).unwrap();
        assert_eq!(d, Ranks { r: [5; 3], h: [2; 3] });
        assert_eq!(d, Ranks::default());
    }
}
