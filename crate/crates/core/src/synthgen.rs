//! Planted-model synthetic tensors.
//!
//! A ground-truth [`TwdFactors`] is drawn with [`TwdFactors::init`], a
//! uniformly random subset of positions is observed, and Gaussian noise is
//! optionally added. Because the generating factors are known, recovery
//! quality on unobserved positions can be measured exactly.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_store::{Entry, SparseTensor};
use crate::twd::{Ranks, TwdFactors, DEFAULT_DENSE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dims: [usize; 3],
    pub ranks: Ranks,
    /// Fraction of all positions observed, in `(0, 1]`.
    pub density: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Planted factor entries are drawn from `U[0, value_scale)`.
    pub value_scale: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Parameter(format!("density must lie in (0, 1], got {}", self.density)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Parameter(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.value_scale.is_finite() && self.value_scale > 0.0) {
            return Err(Error::Parameter(format!("value scale must be positive, got {}", self.value_scale)));
        }
        Ok(())
    }

    /// `ceil(density * total)`, ignoring floating-point fuzz just above an integer.
    pub fn observed_count(&self, total: usize) -> usize {
        let exact = self.density * total as f64;
        let rounded = exact.round();
        let n = if (exact - rounded).abs() <= 1e-9 * exact.max(1.0) {
            rounded
        } else {
            exact.ceil()
        };
        (n as usize).clamp(1, total)
    }
}

/// Generated observations plus the factors that produced them.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub observed: SparseTensor,
    pub ground_truth: TwdFactors,
}

pub fn generate(spec: &SynthSpec) -> Result<Synthetic> {
    spec.validate()?;
    let [di, dj, dk] = spec.dims;
    let total = di as u128 * dj as u128 * dk as u128;
    if total > DEFAULT_DENSE_CAP as u128 {
        return Err(Error::Size {
            elements: total,
            cap: DEFAULT_DENSE_CAP,
        });
    }
    let total = total as usize;
    let truth = TwdFactors::init(spec.dims, spec.ranks, spec.seed, spec.value_scale)?;

    // stream 0 of the seed planted the factors; 2 samples positions, 3 draws noise
    let mut pos_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    pos_rng.set_stream(2);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(3);

    let count = spec.observed_count(total);
    let mut positions = index::sample(&mut pos_rng, total, count).into_vec();
    positions.sort_unstable();

    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::Parameter(format!("noise distribution: {e}")))?;
    let mut entries = Vec::with_capacity(count);
    for p in positions {
        let (i, rest) = (p / (dj * dk), p % (dj * dk));
        let (j, k) = (rest / dk, rest % dk);
        let mut value = truth.reconstruct_entry(i, j, k)?;
        if spec.noise_sigma > 0.0 {
            value += noise.sample(&mut noise_rng);
        }
        entries.push(Entry::new(i, j, k, value));
    }
    let observed = SparseTensor::new(spec.dims, entries)?.assume_normalized();
    Ok(Synthetic {
        observed,
        ground_truth: truth,
    })
}

/// Every position of `truth` not present in `observed`, valued by the
/// ground truth. Useful as a completion test set.
pub fn unobserved_truth(truth: &TwdFactors, observed: &SparseTensor) -> Result<SparseTensor> {
    let full = truth.reconstruct_full()?;
    let [di, dj, dk] = truth.dims();
    let mut seen = vec![false; di * dj * dk];
    for e in observed.entries() {
        seen[(e.i * dj + e.j) * dk + e.k] = true;
    }
    let entries = (0..di * dj * dk)
        .filter(|&p| !seen[p])
        .map(|p| Entry::new(p / (dj * dk), (p / dk) % dj, p % dk, full.data[p]))
        .collect();
    Ok(SparseTensor::new(truth.dims(), entries)?.assume_normalized())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twd::oracle_entry;
    use std::collections::HashSet;

    fn spec(density: f64, noise: f64) -> SynthSpec {
        SynthSpec {
            dims: [5, 4, 3],
            ranks: Ranks::new([2, 2, 2], [2, 2, 2]).unwrap(),
            density,
            noise_sigma: noise,
            seed: 17,
            value_scale: 1.0,
        }
    }

    #[test]
    fn full_noiseless_sampling_reproduces_tensor() {
        let s = generate(&spec(1.0, 0.0)).unwrap();
        let full = s.ground_truth.reconstruct_full().unwrap();
        assert_eq!(s.observed.len(), 60);
        for e in s.observed.entries() {
            assert_eq!(e.value, full.get(e.i, e.j, e.k));
        }
    }

    #[test]
    fn noiseless_values_match_oracle() {
        let s = generate(&spec(0.3, 0.0)).unwrap();
        for e in s.observed.entries() {
            let o = oracle_entry(&s.ground_truth, e.i, e.j, e.k).unwrap();
            assert!((e.value - o).abs() < 1e-12);
        }
    }

    #[test]
    fn positions_distinct_and_counted() {
        let s = generate(&spec(0.3, 0.5)).unwrap();
        assert_eq!(s.observed.len(), 18);
        let keys: HashSet<_> = s.observed.entries().iter().map(|e| e.key()).collect();
        assert_eq!(keys.len(), 18);
        assert_eq!(spec(0.31, 0.0).observed_count(60), 19);
        assert_eq!(spec(0.3, 0.0).observed_count(800), 240);
        assert_eq!(spec(1e-9, 0.0).observed_count(60), 1);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&spec(0.5, 0.1)).unwrap();
        let b = generate(&spec(0.5, 0.1)).unwrap();
        assert_eq!(a.observed, b.observed);
        assert_eq!(a.ground_truth, b.ground_truth);
        let c = generate(&SynthSpec { seed: 18, ..spec(0.5, 0.1) }).unwrap();
        assert_ne!(a.observed, c.observed);
    }

    #[test]
    fn noise_perturbs_values() {
        let s = generate(&spec(1.0, 0.5)).unwrap();
        let full = s.ground_truth.reconstruct_full().unwrap();
        assert!(s.observed.entries().iter().any(|e| e.value != full.get(e.i, e.j, e.k)));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate(&spec(0.0, 0.0)).is_err());
        assert!(generate(&spec(1.5, 0.0)).is_err());
        assert!(generate(&spec(0.5, -1.0)).is_err());
        let huge = SynthSpec { dims: [1000, 1000, 11], ..spec(0.1, 0.0) };
        assert!(matches!(generate(&huge), Err(Error::Size { .. })));
    }

    #[test]
    fn unobserved_complement() {
        let s = generate(&spec(0.3, 0.0)).unwrap();
        let rest = unobserved_truth(&s.ground_truth, &s.observed).unwrap();
        assert_eq!(rest.len() + s.observed.len(), 60);
        let obs: HashSet<_> = s.observed.entries().iter().map(|e| e.key()).collect();
        assert!(rest.entries().iter().all(|e| !obs.contains(&e.key())));
    }
}
