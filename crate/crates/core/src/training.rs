//! Adam optimization of the weighted PINN objective.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{self, Face, LossBreakdown, LossError, LossWeights};
use crate::network::{Mlp, NetworkError};
use crate::problems::ProblemSpec;
use crate::sampling::{CollocationSet, DomainBox, SamplingError, SamplingMode};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite gradient for parameter {index} at epoch {epoch}")]
    NonFiniteGradient { epoch: usize, index: usize },
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        report: Box<TrainReport>,
    },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps: DEFAULT_EPS,
        }
    }

    /// One bias-corrected Adam update. On a non-finite gradient nothing is
    /// modified and the offending parameter index is returned.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), usize> {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(i);
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// One Adam step per epoch on the weighted loss over all collocation points.
    #[default]
    FullBatch,
    /// Plain gradient steps on single random points, one per loss term.
    SgdSketch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    pub n_points: usize,
    pub sampling: SamplingMode,
    pub seed: u64,
    pub mode: TrainMode,
    /// Stop as soon as the total loss is at or below this value.
    pub stop_threshold: Option<f64>,
    pub report_every: usize,
}

impl TrainConfig {
    pub fn new(epochs: usize, learning_rate: f64, weights: LossWeights, n_points: usize) -> Self {
        Self {
            epochs,
            learning_rate,
            weights,
            n_points,
            sampling: SamplingMode::Grid,
            seed: 0,
            mode: TrainMode::FullBatch,
            stop_threshold: None,
            report_every: 1000,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(TrainError::InvalidConfig(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.report_every == 0 {
            return Err(TrainError::InvalidConfig("report_every must be >= 1".into()));
        }
        self.weights
            .validate()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))
    }
}

/// Per-epoch loss history.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub total: Vec<f64>,
    pub residual: Vec<f64>,
    pub initial: Vec<f64>,
    pub boundary: Vec<f64>,
    /// `(epoch, seconds)` for each completed reporting block.
    pub block_times: Vec<(usize, f64)>,
    pub wall_time: f64,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.total.len()
    }

    fn push(&mut self, b: &LossBreakdown) {
        self.total.push(b.total);
        self.residual.push(b.residual);
        self.initial.push(b.initial);
        self.boundary.push(b.boundary);
    }

    pub fn breakdown(&self, epoch_index: usize) -> Option<LossBreakdown> {
        Some(LossBreakdown {
            total: *self.total.get(epoch_index)?,
            residual: self.residual[epoch_index],
            initial: self.initial[epoch_index],
            boundary: self.boundary[epoch_index],
        })
    }

    pub fn last(&self) -> Option<LossBreakdown> {
        self.epochs().checked_sub(1).and_then(|i| self.breakdown(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Completed,
    Interrupted,
    ThresholdReached,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: Mlp,
    pub report: TrainReport,
    pub stop: StopReason,
}

/// Periodic progress notification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub epoch: usize,
    pub losses: LossBreakdown,
    pub block_seconds: f64,
}

/// `Epoch: 1000 - Loss: ..., Residual Loss: ..., Initial Loss: ..., Boundary Loss: ...`
pub fn format_progress(p: &Progress) -> String {
    format!(
        "Epoch: {} - Loss: {:.6}, Residual Loss: {:.6}, Initial Loss: {:.6}, Boundary Loss: {:.6}",
        p.epoch, p.losses.total, p.losses.residual, p.losses.initial, p.losses.boundary
    )
}

/// Per-epoch seed for resampled collocation points.
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct Trainer<'a> {
    problem: &'a ProblemSpec,
    domain: DomainBox,
    config: TrainConfig,
    interrupt: Option<&'a AtomicBool>,
    progress: Box<dyn FnMut(&Progress) + 'a>,
}

impl<'a> Trainer<'a> {
    pub fn new(problem: &'a ProblemSpec, domain: DomainBox, config: TrainConfig) -> Self {
        Self {
            problem,
            domain,
            config,
            interrupt: None,
            progress: Box::new(|_| {}),
        }
    }

    /// Stop cleanly (keeping the partial history) once `flag` becomes true.
    pub fn with_interrupt(mut self, flag: &'a AtomicBool) -> Self {
        self.interrupt = Some(flag);
        self
    }

    pub fn on_progress(mut self, callback: impl FnMut(&Progress) + 'a) -> Self {
        self.progress = Box::new(callback);
        self
    }

    /// Prints the standard progress line to stdout.
    pub fn print_progress(self) -> Self {
        self.on_progress(|p| println!("{}", format_progress(p)))
    }

    fn interrupted(&self) -> bool {
        self.interrupt.is_some_and(|f| f.load(Ordering::Relaxed))
    }

    pub fn train(mut self, net: Mlp) -> Result<TrainOutcome, TrainError> {
        self.config.validate()?;
        match self.config.mode {
            TrainMode::FullBatch => self.train_full_batch(net),
            TrainMode::SgdSketch => self.train_sketch(net),
        }
    }

    fn diverged(epoch: usize, reason: impl ToString, report: &TrainReport, start: Instant) -> TrainError {
        let mut report = report.clone();
        report.wall_time = start.elapsed().as_secs_f64();
        TrainError::Diverged {
            epoch,
            reason: reason.to_string(),
            report: Box::new(report),
        }
    }

    fn finish_epoch(&mut self, epoch: usize, losses: &LossBreakdown, report: &mut TrainReport, block: &mut Instant) {
        if epoch % self.config.report_every == 0 {
            let secs = block.elapsed().as_secs_f64();
            *block = Instant::now();
            report.block_times.push((epoch, secs));
            (self.progress)(&Progress {
                epoch,
                losses: *losses,
                block_seconds: secs,
            });
        }
    }

    fn train_full_batch(&mut self, mut net: Mlp) -> Result<TrainOutcome, TrainError> {
        let cfg = self.config.clone();
        let start = Instant::now();
        let mut block = Instant::now();
        let mut report = TrainReport::default();
        let mut adam = AdamState::new(net.num_params(), cfg.learning_rate);
        let fixed = match cfg.sampling {
            SamplingMode::Grid => Some(CollocationSet::generate(&self.domain, cfg.n_points, cfg.sampling, cfg.seed)?),
            SamplingMode::UniformRandom => None,
        };
        let mut stop = StopReason::Completed;
        for epoch in 1..=cfg.epochs {
            if self.interrupted() {
                stop = StopReason::Interrupted;
                break;
            }
            let resampled;
            let sets = match &fixed {
                Some(s) => s,
                None => {
                    resampled = CollocationSet::generate(
                        &self.domain,
                        cfg.n_points,
                        cfg.sampling,
                        epoch_seed(cfg.seed, epoch),
                    )?;
                    &resampled
                }
            };
            let (losses, grad) = match losses::total_loss(&net, self.problem, &cfg.weights, sets) {
                Ok(v) => v,
                Err(e) => return Err(Self::diverged(epoch, e, &report, start)),
            };
            if !losses.total.is_finite() {
                return Err(Self::diverged(epoch, "non-finite loss", &report, start));
            }
            if let Some(delta) = cfg.stop_threshold {
                if losses.total <= delta {
                    report.push(&losses);
                    stop = StopReason::ThresholdReached;
                    break;
                }
            }
            if let Err(index) = adam.step(net.params_mut(), &grad) {
                return Err(TrainError::NonFiniteGradient { epoch, index });
            }
            if let Err(NetworkError::NonFiniteParameter(i)) = net.check_finite() {
                return Err(Self::diverged(epoch, format!("parameter {i} became non-finite"), &report, start));
            }
            report.push(&losses);
            self.finish_epoch(epoch, &losses, &mut report, &mut block);
        }
        report.wall_time = start.elapsed().as_secs_f64();
        Ok(TrainOutcome { net, report, stop })
    }

    /// Stochastic sketch: per epoch one random interior, boundary and initial
    /// point, each followed by a plain gradient step on its own weighted term.
    /// The recorded losses are those single-point values.
    fn train_sketch(&mut self, mut net: Mlp) -> Result<TrainOutcome, TrainError> {
        let cfg = self.config.clone();
        let start = Instant::now();
        let mut block = Instant::now();
        let mut report = TrainReport::default();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let pool = CollocationSet::generate(&self.domain, cfg.n_points, cfg.sampling, cfg.seed)?;
        let mut stop = StopReason::Completed;

        let descend = |weight: f64, value: Result<losses::LossValue, LossError>, epoch: usize, net: &mut Mlp| {
            let value = value.map_err(|e| Self::diverged(epoch, e, &TrainReport::default(), start))?;
            if let Some(index) = value.gradient.iter().position(|g| !g.is_finite()) {
                return Err(TrainError::NonFiniteGradient { epoch, index });
            }
            for (p, g) in net.params_mut().iter_mut().zip(&value.gradient) {
                *p -= cfg.learning_rate * weight * g;
            }
            Ok(value.value)
        };

        for epoch in 1..=cfg.epochs {
            if self.interrupted() {
                stop = StopReason::Interrupted;
                break;
            }
            let p = pool.interior[rng.gen_range(0..pool.interior.len())];
            let residual = descend(
                cfg.weights.residual,
                losses::residual_loss(&net, self.problem, &[p]),
                epoch,
                &mut net,
            )?;
            let face = Face::ALL[rng.gen_range(0..4)];
            let face_points = face.points(&pool.boundary);
            let q = face_points[rng.gen_range(0..face_points.len())];
            let boundary = descend(
                cfg.weights.boundary,
                losses::face_loss(&net, self.problem.boundary, face, &[q]),
                epoch,
                &mut net,
            )?;
            let s = pool.initial[rng.gen_range(0..pool.initial.len())];
            let initial = descend(
                cfg.weights.initial,
                losses::initial_loss(&net, self.problem, &[s]),
                epoch,
                &mut net,
            )?;
            let losses = LossBreakdown {
                total: cfg.weights.combine(residual, initial, boundary),
                residual,
                initial,
                boundary,
            };
            if !losses.total.is_finite() || net.check_finite().is_err() {
                return Err(Self::diverged(epoch, "non-finite loss or parameter", &report, start));
            }
            report.push(&losses);
            self.finish_epoch(epoch, &losses, &mut report, &mut block);
            if cfg.stop_threshold.is_some_and(|d| losses.total <= d) {
                stop = StopReason::ThresholdReached;
                break;
            }
        }
        report.wall_time = start.elapsed().as_secs_f64();
        Ok(TrainOutcome { net, report, stop })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut adam = AdamState::new(3, 0.01);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_is_lr_sized() {
        let lr = 0.001;
        let mut adam = AdamState::new(1, lr);
        let mut p = vec![0.0];
        adam.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] + lr / (1.0 + DEFAULT_EPS)).abs() <= 1e-12);
    }

    #[test]
    fn first_step_opposes_gradient_sign() {
        let mut adam = AdamState::new(4, 0.1);
        let mut p = vec![0.0; 4];
        let g = [3.0, -0.2, 1e-3, -50.0];
        adam.step(&mut p, &g).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            assert_eq!(pi.signum(), -gi.signum());
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut adam = AdamState::new(2, 0.1);
        let mut p = vec![1.0, 1.0];
        assert_eq!(adam.step(&mut p, &[0.0, f64::NAN]), Err(1));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn progress_line_format() {
        let line = format_progress(&Progress {
            epoch: 1000,
            losses: LossBreakdown {
                total: 1.5,
                residual: 0.25,
                initial: 1.0,
                boundary: 0.0000004,
            },
            block_seconds: 0.1,
        });
        assert_eq!(
            line,
            "Epoch: 1000 - Loss: 1.500000, Residual Loss: 0.250000, Initial Loss: 1.000000, Boundary Loss: 0.000000"
        );
    }

    #[test]
    fn epoch_seeds_differ() {
        assert_ne!(epoch_seed(0, 1), epoch_seed(0, 2));
        assert_eq!(epoch_seed(5, 3), epoch_seed(5, 3));
    }
}
