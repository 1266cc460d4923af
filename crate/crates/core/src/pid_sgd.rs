//! PID-controlled stochastic gradient descent for tensor wheel factors.
//!
//! Each visit to an observation `x_ijk` computes the instantaneous error
//! `e = x - x_hat` and feeds it through a PID law before it drives the
//! update:
//!
//! ```text
//! e~ = C_P * e_n + C_I * (e_1 + ... + e_n) + C_D * (e_n - e_{n-1})
//! ```
//!
//! where `n` counts visits to that particular observation (one per epoch)
//! and `e_0 = 0`. Every parameter `p` touched by the observation then moves
//! by `eta * (e~ * d x_hat / d p - lambda * p)`. With `C_P = 1, C_I = C_D = 0`
//! this is plain SGD on half the per-observation squared loss; `eta` absorbs
//! the factor of two.
//!
//! All four partial derivatives are taken at the pre-step parameters and
//! applied together.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::tensor_store::{Entry, SparseTensor};
use crate::twd::{Contraction, Ranks, TwdFactors};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub eta: f64,
    pub lambda: f64,
    pub cp: f64,
    pub ci: f64,
    pub cd: f64,
    pub max_epochs: usize,
    /// Validation epochs without improvement before training stops.
    pub patience: usize,
    /// Stop on validation plateaus; when false, always run `max_epochs`
    /// (the best-validation factors are still the ones returned).
    pub early_stopping: bool,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            eta: 0.01,
            lambda: 0.01,
            cp: 1.0,
            ci: 0.0,
            cd: 0.001,
            max_epochs: 1000,
            patience: 10,
            early_stopping: true,
            seed: 0,
            init_scale: 0.1,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Parameter(m));
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return fail(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return fail(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if ![self.cp, self.ci, self.cd].iter().all(|c| c.is_finite()) {
            return fail("PID coefficients must be finite".into());
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1".into());
        }
        if self.patience == 0 {
            return fail("patience must be at least 1".into());
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return fail(format!("init_scale must be positive, got {}", self.init_scale));
        }
        Ok(())
    }

    /// Same settings with the PID law reduced to the raw error.
    pub fn without_pid(&self) -> Self {
        HyperParams {
            cp: 1.0,
            ci: 0.0,
            cd: 0.0,
            ..*self
        }
    }
}

/// Per-observation PID memory, indexed by training-entry id.
#[derive(Debug, Clone, PartialEq)]
pub struct PidState {
    pub integral: Vec<f64>,
    pub prev_error: Vec<f64>,
    pub visit_count: Vec<u64>,
}

impl PidState {
    pub fn new(n: usize) -> Self {
        PidState {
            integral: vec![0.0; n],
            prev_error: vec![0.0; n],
            visit_count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.integral.len()
    }

    pub fn is_empty(&self) -> bool {
        self.integral.is_empty()
    }

    /// Records `e_n` for `entry_id` and returns the PID-adjusted error.
    pub fn pid_error(&mut self, entry_id: usize, e_n: f64, hp: &HyperParams) -> f64 {
        self.integral[entry_id] += e_n;
        let prev = self.prev_error[entry_id];
        self.prev_error[entry_id] = e_n;
        self.visit_count[entry_id] += 1;
        hp.cp * e_n + hp.ci * self.integral[entry_id] + hp.cd * (e_n - prev)
    }
}

/// Which signal drives the parameter updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Feedback {
    /// The PID law over `(cp, ci, cd)`.
    Pid,
    /// The raw residual, bypassing PID bookkeeping entirely.
    Plain,
}

/// What one update observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub residual: f64,
    pub signal: f64,
}

/// Regularized loss over `obs`: for each observation, the squared residual
/// plus `lambda` times the squared norms of `G` and of the `A`, `B`, `C`
/// slices it touches. With `lambda = 0` this is the plain sum of squares.
pub fn compute_loss(f: &TwdFactors, obs: &SparseTensor, lambda: f64) -> Result<f64> {
    let mut ws = Contraction::new(f.ranks());
    let g_sq: f64 = f.g().iter().map(|v| v * v).sum();
    let mut loss = 0.0;
    for e in obs.entries() {
        f.check_index(e.i, e.j, e.k)?;
        let r = e.value - ws.value(f, e.i, e.j, e.k);
        loss += r * r;
        if lambda != 0.0 {
            let sq = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
            loss += lambda * (g_sq + sq(&ws.a) + sq(&ws.b) + sq(&ws.c));
        }
    }
    Ok(loss)
}

/// Reusable buffers for [`sgd_step`]; one per trainer.
#[derive(Debug, Clone)]
pub struct Stepper {
    ws: Contraction,
    g_next: Vec<f64>,
}

impl Stepper {
    pub fn new(ranks: Ranks) -> Self {
        let [h1, h2, h3] = ranks.h;
        Stepper {
            ws: Contraction::new(ranks),
            g_next: vec![0.0; h1 * h2 * h3],
        }
    }

    /// One update for `entry`. Nothing is written if any updated value would
    /// be non-finite; the error then names `epoch` and `entry_id`.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        f: &mut TwdFactors,
        entry: &Entry,
        entry_id: usize,
        state: &mut PidState,
        hp: &HyperParams,
        feedback: Feedback,
        epoch: usize,
    ) -> Result<StepOutcome> {
        f.check_index(entry.i, entry.j, entry.k)?;
        let ws = &mut self.ws;
        let x_hat = ws.value_and_partials(f, entry.i, entry.j, entry.k);
        let residual = entry.value - x_hat;
        let signal = match feedback {
            Feedback::Pid => state.pid_error(entry_id, residual, hp),
            Feedback::Plain => residual,
        };

        let (eta, lambda) = (hp.eta, hp.lambda);
        let update = |p: f64, d: f64| p + eta * (signal * d - lambda * p);
        let mut finite = true;
        for ((out, &p), &d) in self.g_next.iter_mut().zip(f.g()).zip(&ws.grad_g) {
            *out = update(p, d);
            finite &= out.is_finite();
        }
        for (p, &d) in ws.a.iter_mut().zip(&ws.grad_a) {
            *p = update(*p, d);
            finite &= p.is_finite();
        }
        for (p, &d) in ws.b.iter_mut().zip(&ws.grad_b) {
            *p = update(*p, d);
            finite &= p.is_finite();
        }
        for (p, &d) in ws.c.iter_mut().zip(&ws.grad_c) {
            *p = update(*p, d);
            finite &= p.is_finite();
        }
        if !finite {
            return Err(Error::Divergence {
                epoch,
                entry: entry_id,
            });
        }
        f.g_mut().copy_from_slice(&self.g_next);
        ws.store_slices(f, entry.i, entry.j, entry.k);
        Ok(StepOutcome { residual, signal })
    }
}

/// A single PID-guided update; see [`Stepper::step`]. Divergence errors
/// from this entry point report epoch 0.
pub fn sgd_step(
    f: &mut TwdFactors,
    entry: &Entry,
    entry_id: usize,
    state: &mut PidState,
    hp: &HyperParams,
) -> Result<StepOutcome> {
    Stepper::new(f.ranks()).step(f, entry, entry_id, state, hp, Feedback::Pid, 0)
}

/// The seeded order in which training entries are visited, reshuffled
/// every epoch.
#[derive(Debug, Clone)]
pub struct VisitSchedule {
    order: Vec<usize>,
    rng: ChaCha8Rng,
}

impl VisitSchedule {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // factor initialization uses stream 0 of the same seed
        rng.set_stream(1);
        VisitSchedule {
            order: (0..n).collect(),
            rng,
        }
    }

    pub fn next_epoch(&mut self) -> &[usize] {
        self.order.shuffle(&mut self.rng);
        &self.order
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Regularized training loss after each epoch.
    pub loss_history: Vec<f64>,
    /// Validation RMSE after each epoch; `None` without a validation set.
    pub valid_rmse_history: Vec<Option<f64>>,
    pub epochs_run: usize,
    /// 1-based epoch whose factors were returned (best validation RMSE, or
    /// the last epoch without validation).
    pub converged_at: usize,
}

/// Per-epoch figures from [`Trainer::run_epoch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub valid_rmse: Option<f64>,
}

/// Epoch-by-epoch driver. [`train`] wraps it with early stopping; use it
/// directly to inspect factors or PID state between epochs.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    train_set: &'a SparseTensor,
    valid_set: &'a SparseTensor,
    hp: HyperParams,
    feedback: Feedback,
    factors: TwdFactors,
    state: PidState,
    schedule: VisitSchedule,
    stepper: Stepper,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(
        train_set: &'a SparseTensor,
        valid_set: &'a SparseTensor,
        ranks: Ranks,
        hp: HyperParams,
        feedback: Feedback,
    ) -> Result<Self> {
        hp.validate()?;
        if train_set.is_empty() {
            return Err(Error::Parameter("training set is empty".into()));
        }
        if valid_set.dims() != train_set.dims() {
            return Err(Error::Parameter(format!(
                "validation dims {:?} differ from training dims {:?}",
                valid_set.dims(),
                train_set.dims()
            )));
        }
        let factors = TwdFactors::init(train_set.dims(), ranks, hp.seed, hp.init_scale)?;
        Ok(Trainer {
            train_set,
            valid_set,
            hp,
            feedback,
            factors,
            state: PidState::new(train_set.len()),
            schedule: VisitSchedule::new(train_set.len(), hp.seed),
            stepper: Stepper::new(ranks),
            epoch: 0,
        })
    }

    pub fn factors(&self) -> &TwdFactors {
        &self.factors
    }

    pub fn into_factors(self) -> TwdFactors {
        self.factors
    }

    pub fn pid_state(&self) -> &PidState {
        &self.state
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// One pass over the training set in this epoch's shuffled order.
    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        self.epoch += 1;
        let entries = self.train_set.entries();
        let order = self.schedule.next_epoch();
        for &id in order {
            self.stepper.step(
                &mut self.factors,
                &entries[id],
                id,
                &mut self.state,
                &self.hp,
                self.feedback,
                self.epoch,
            )?;
        }
        let loss = compute_loss(&self.factors, self.train_set, self.hp.lambda)?;
        let valid_rmse = if self.valid_set.is_empty() {
            None
        } else {
            Some(metrics::evaluate(&self.factors, self.valid_set)?.rmse)
        };
        Ok(EpochStats {
            epoch: self.epoch,
            loss,
            valid_rmse,
        })
    }
}

/// Trains with the PID law from `hp`.
pub fn train(
    train_set: &SparseTensor,
    valid_set: &SparseTensor,
    ranks: Ranks,
    hp: &HyperParams,
) -> Result<(TwdFactors, TrainReport)> {
    train_with(train_set, valid_set, ranks, hp, Feedback::Pid)
}

/// Trains by plain SGD on the raw residual; `cp`, `ci`, `cd` are ignored.
pub fn train_plain(
    train_set: &SparseTensor,
    valid_set: &SparseTensor,
    ranks: Ranks,
    hp: &HyperParams,
) -> Result<(TwdFactors, TrainReport)> {
    train_with(train_set, valid_set, ranks, hp, Feedback::Plain)
}

pub fn train_with(
    train_set: &SparseTensor,
    valid_set: &SparseTensor,
    ranks: Ranks,
    hp: &HyperParams,
    feedback: Feedback,
) -> Result<(TwdFactors, TrainReport)> {
    let trainer = Trainer::new(train_set, valid_set, ranks, *hp, feedback)?;
    run_to_completion(trainer)
}

/// Runs a prepared trainer until `max_epochs` or the patience limit.
pub fn run_to_completion(mut trainer: Trainer<'_>) -> Result<(TwdFactors, TrainReport)> {
    let hp = trainer.hp;
    let mut report = TrainReport {
        loss_history: Vec::new(),
        valid_rmse_history: Vec::new(),
        epochs_run: 0,
        converged_at: 0,
    };
    let mut best: Option<(f64, TwdFactors)> = None;
    let mut stale = 0usize;

    while trainer.epochs_done() < hp.max_epochs {
        let stats = trainer.run_epoch()?;
        report.loss_history.push(stats.loss);
        report.valid_rmse_history.push(stats.valid_rmse);
        report.epochs_run = stats.epoch;

        let Some(rmse) = stats.valid_rmse else {
            report.converged_at = stats.epoch;
            continue;
        };
        let improved = best.as_ref().is_none_or(|(b, _)| rmse < *b);
        if improved {
            best = Some((rmse, trainer.factors().clone()));
            report.converged_at = stats.epoch;
            stale = 0;
        } else {
            stale += 1;
            if hp.early_stopping && stale >= hp.patience {
                break;
            }
        }
    }

    let factors = match best {
        Some((_, f)) => f,
        None => trainer.into_factors(),
    };
    Ok((factors, report))
}
