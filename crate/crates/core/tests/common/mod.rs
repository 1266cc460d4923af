#![allow(dead_code)]

use ptwd::pid_sgd::{Feedback, PidState, Trainer};
use ptwd::synthgen::{generate, SynthSpec, Synthetic};
use ptwd::{oracle_entry, sgd_step, Entry, HyperParams, Ranks, SparseTensor, SplitSpec, TwdFactors};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Flat positions of every parameter one observation touches, per factor.
pub struct Touched {
    pub g: Vec<usize>,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub c: Vec<usize>,
}

pub fn touched(f: &TwdFactors, e: &Entry) -> Touched {
    let [di, dj, dk] = f.dims();
    let [r1, r2, r3] = f.ranks().r;
    let [h1, h2, h3] = f.ranks().h;
    let mut t = Touched { g: (0..h1 * h2 * h3).collect(), a: vec![], b: vec![], c: vec![] };
    for x in 0..r3 {
        for y in 0..r1 {
            for h in 0..h1 {
                t.a.push(((x * di + e.i) * r1 + y) * h1 + h);
            }
        }
    }
    for x in 0..r1 {
        for y in 0..r2 {
            for h in 0..h2 {
                t.b.push(((x * dj + e.j) * r2 + y) * h2 + h);
            }
        }
    }
    for x in 0..r2 {
        for y in 0..r3 {
            for h in 0..h3 {
                t.c.push(((x * dk + e.k) * r3 + y) * h3 + h);
            }
        }
    }
    t
}

/// The per-observation regularized loss, evaluated with the naive oracle and
/// explicit element accessors only.
pub fn naive_sample_loss(f: &TwdFactors, e: &Entry, lambda: f64) -> f64 {
    let r = e.value - oracle_entry(f, e.i, e.j, e.k).unwrap();
    let [r1, r2, r3] = f.ranks().r;
    let [h1, h2, h3] = f.ranks().h;
    let g: f64 = f.g().iter().map(|v| v * v).sum();
    let mut a = 0.0;
    let mut b = 0.0;
    let mut c = 0.0;
    for x in 0..r3 {
        for y in 0..r1 {
            for h in 0..h1 {
                a += f.a_at(x, e.i, y, h).powi(2);
            }
        }
    }
    for x in 0..r1 {
        for y in 0..r2 {
            for h in 0..h2 {
                b += f.b_at(x, e.j, y, h).powi(2);
            }
        }
    }
    for x in 0..r2 {
        for y in 0..r3 {
            for h in 0..h3 {
                c += f.c_at(x, e.k, y, h).powi(2);
            }
        }
    }
    r * r + lambda * (g + a + b + c)
}

#[derive(Clone, Copy)]
pub enum Which {
    G,
    A,
    B,
    C,
}

fn slot(f: &mut TwdFactors, w: Which) -> &mut [f64] {
    match w {
        Which::G => f.g_mut(),
        Which::A => f.a_mut(),
        Which::B => f.b_mut(),
        Which::C => f.c_mut(),
    }
}

fn read(f: &TwdFactors, w: Which) -> &[f64] {
    match w {
        Which::G => f.g(),
        Which::A => f.a(),
        Which::B => f.b(),
        Which::C => f.c(),
    }
}

/// Applies one proportional-only step and compares every increment with
/// `-eta * 0.5 * dL/dp` from central differences (step `h`). Returns the
/// largest relative error; also checks untouched parameters stay put.
pub fn gradient_check(f: &TwdFactors, e: &Entry, eta: f64, lambda: f64, h: f64) -> f64 {
    let hp = HyperParams { eta, lambda, cp: 1.0, ci: 0.0, cd: 0.0, ..HyperParams::default() };
    let mut after = f.clone();
    sgd_step(&mut after, e, 0, &mut PidState::new(1), &hp).unwrap();
    let t = touched(f, e);
    let mut worst: f64 = 0.0;
    for (w, idx) in [(Which::G, &t.g), (Which::A, &t.a), (Which::B, &t.b), (Which::C, &t.c)] {
        for (p, (x, y)) in read(f, w).iter().zip(read(&after, w)).enumerate() {
            if !idx.contains(&p) {
                assert_eq!(x, y, "untouched parameter moved");
            }
        }
        for &p in idx {
            let mut plus = f.clone();
            slot(&mut plus, w)[p] += h;
            let mut minus = f.clone();
            slot(&mut minus, w)[p] -= h;
            let fd = (naive_sample_loss(&plus, e, lambda) - naive_sample_loss(&minus, e, lambda)) / (2.0 * h);
            let expected = -eta * 0.5 * fd;
            let inc = read(&after, w)[p] - read(f, w)[p];
            let rel = (inc - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Random factors with magnitudes in [0.1, 1] and an observation whose
/// residual is of order one.
pub fn gradient_case(seed: u64) -> (TwdFactors, Entry) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=4)];
    let mut rr = || rng.random_range(1..=3usize);
    let ranks = Ranks::new([rr(), rr(), rr()], [rr(), rr(), rr()]).unwrap();
    let mut f = TwdFactors::init(dims, ranks, seed, 1.0).unwrap();
    f.g_mut().iter_mut().for_each(|v| *v = 0.1 + 0.9 * *v);
    f.a_mut().iter_mut().for_each(|v| *v = 0.1 + 0.9 * *v);
    f.b_mut().iter_mut().for_each(|v| *v = 0.1 + 0.9 * *v);
    f.c_mut().iter_mut().for_each(|v| *v = 0.1 + 0.9 * *v);
    let (i, j, k) = (rng.random_range(0..dims[0]), rng.random_range(0..dims[1]), rng.random_range(0..dims[2]));
    let x_hat = f.reconstruct_entry(i, j, k).unwrap();
    let offset = rng.random_range(0.5..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
    (f, Entry::new(i, j, k, x_hat + offset))
}

/// The planted instance used by the recovery and ablation experiments.
pub fn planted(seed: u64) -> Synthetic {
    generate(&SynthSpec {
        dims: [10, 10, 8],
        ranks: planted_ranks(),
        density: 0.3,
        noise_sigma: 0.0,
        seed,
        value_scale: 0.7,
    })
    .unwrap()
}

pub fn planted_ranks() -> Ranks {
    Ranks::new([2, 2, 2], [2, 2, 2]).unwrap()
}

pub fn planted_split() -> [u32; 3] {
    [7, 1, 2]
}

pub fn split3(t: &SparseTensor, ratios: [u32; 3], seed: u64) -> (SparseTensor, SparseTensor, SparseTensor) {
    t.split(&SplitSpec::new(ratios, seed)).unwrap()
}

pub fn bits(f: &TwdFactors) -> Vec<u64> {
    f.g().iter().chain(f.a()).chain(f.b()).chain(f.c()).map(|v| v.to_bits()).collect()
}

/// Runs PID (1,0,0) and the plain-SGD path side by side; returns the first
/// epoch at which the factors differ in any bit, if any.
pub fn first_divergent_epoch(train: &SparseTensor, valid: &SparseTensor, ranks: Ranks, hp: HyperParams, epochs: usize) -> Option<usize> {
    let reduced = HyperParams { cp: 1.0, ci: 0.0, cd: 0.0, ..hp };
    let mut pid = Trainer::new(train, valid, ranks, reduced, Feedback::Pid).unwrap();
    let mut plain = Trainer::new(train, valid, ranks, reduced, Feedback::Plain).unwrap();
    if bits(pid.factors()) != bits(plain.factors()) {
        return Some(0);
    }
    for _ in 0..epochs {
        let a = pid.run_epoch().unwrap();
        let b = plain.run_epoch().unwrap();
        if bits(pid.factors()) != bits(plain.factors()) || a.loss.to_bits() != b.loss.to_bits() {
            return Some(a.epoch);
        }
    }
    None
}
