use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{backward, forward_input, mse_loss};
use super::{Architecture, NetworkParams, Params, Scalar};
use crate::error::{Error, Result};
use crate::geometry::HomeVector;

/// Source of labelled training inputs, visited in index order.
pub trait TrainingSamples: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, index: usize) -> HomeVector;

    /// Writes the flattened input image of sample `index` into `buf`.
    fn input_into(&self, index: usize, buf: &mut Vec<f32>);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[derive(Default)]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Double,
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub init_seed: u64,
    pub precision: Precision,
    /// Steps per loss-trace entry.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 9e-4,
            batch_size: 1,
            epochs: 1,
            optimizer: OptimizerKind::Sgd,
            init_seed: 0,
            precision: Precision::Double,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be a non-negative number, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidArgument("log_every must be at least 1".into()));
        }
        match self.optimizer {
            OptimizerKind::Sgd => {}
            OptimizerKind::Momentum { beta } if (0.0..1.0).contains(&beta) => {}
            OptimizerKind::Adam { beta1, beta2, epsilon }
                if (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0 => {}
            other => {
                return Err(Error::InvalidArgument(format!(
                    "optimizer coefficients out of range: {other:?}"
                )))
            }
        }
        Ok(())
    }
}

/// Mean training loss per logging window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    /// `(step, mean loss over the window ending at step)`, steps 1-based.
    pub entries: Vec<(usize, f64)>,
    pub steps: usize,
    /// Mean loss over the whole run.
    pub mean_loss: f64,
}

impl LossTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (step, loss) in &self.entries {
            s.push_str(&format!("{step},{loss}\n"));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }

    fn record(&mut self, window: &mut (f64, usize), loss: f64, log_every: usize) {
        self.steps += 1;
        self.mean_loss += (loss - self.mean_loss) / self.steps as f64;
        window.0 += loss;
        window.1 += 1;
        if window.1 == log_every {
            self.entries.push((self.steps, window.0 / window.1 as f64));
            *window = (0.0, 0);
        }
    }
}

struct Optimizer<T> {
    kind: OptimizerKind,
    lr: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Optimizer<T> {
    fn new(kind: OptimizerKind, lr: f64, n: usize) -> Self {
        let (m, v) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Momentum { .. } => (vec![T::zero(); n], Vec::new()),
            OptimizerKind::Adam { .. } => (vec![T::zero(); n], vec![T::zero(); n]),
        };
        Optimizer { kind, lr: T::of(lr), m, v, t: 0 }
    }

    fn step(&mut self, params: &mut [T], grad: &[T]) {
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, &g) in params.iter_mut().zip(grad) {
                    *p = *p - lr * g;
                }
            }
            OptimizerKind::Momentum { beta } => {
                let beta = T::of(beta);
                for ((p, &g), m) in params.iter_mut().zip(grad).zip(&mut self.m) {
                    *m = beta * *m + g;
                    *p = *p - lr * *m;
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                self.t += 1;
                let c1 = T::of(1.0 - beta1.powi(self.t));
                let c2 = T::of(1.0 - beta2.powi(self.t));
                let (b1, b2, eps) = (T::of(beta1), T::of(beta2), T::of(epsilon));
                let one = T::one();
                for (((p, &g), m), v) in
                    params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v)
                {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    *p = *p - lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// One pass over `samples` in index order, updating after every batch.
pub fn train_epoch<T: Scalar, S: TrainingSamples + ?Sized>(
    params: Params<T>,
    samples: &S,
    config: &TrainConfig,
) -> Result<(Params<T>, LossTrace)> {
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, params.param_count());
    let mut trace = LossTrace::default();
    let params = run_epoch(params, samples, config, &mut opt, &mut trace, 0)?;
    Ok((params, trace))
}

fn run_epoch<T: Scalar, S: TrainingSamples + ?Sized>(
    mut params: Params<T>,
    samples: &S,
    config: &TrainConfig,
    opt: &mut Optimizer<T>,
    trace: &mut LossTrace,
    step_offset: usize,
) -> Result<Params<T>> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut raw = Vec::new();
    let mut input: Vec<T> = Vec::new();
    let mut window = (0.0, 0);
    let mut acc = vec![T::zero(); params.param_count()];
    let mut in_batch = 0usize;
    let n = samples.len();
    for i in 0..n {
        raw.clear();
        samples.input_into(i, &mut raw);
        input.clear();
        input.extend(raw.iter().map(|&v| T::of(v as f64)));
        let label = samples.label(i);
        let (pred, cache) = forward_input(&params, &input)?;
        let loss = mse_loss(pred, label);
        let step = step_offset + i;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        trace.record(&mut window, loss, config.log_every);
        let grad = backward(&params, &cache, label);
        if config.batch_size == 1 {
            opt.step(params.as_mut_slice(), grad.as_slice());
            continue;
        }
        for (a, &g) in acc.iter_mut().zip(grad.as_slice()) {
            *a = *a + g;
        }
        in_batch += 1;
        if in_batch == config.batch_size || i + 1 == n {
            let scale = T::of(1.0 / in_batch as f64);
            for a in acc.iter_mut() {
                *a = *a * scale;
            }
            opt.step(params.as_mut_slice(), &acc);
            acc.fill(T::zero());
            in_batch = 0;
        }
    }
    if window.1 > 0 {
        trace.entries.push((trace.steps, window.0 / window.1 as f64));
    }
    if !params.is_finite() {
        return Err(Error::NonFiniteLoss { step: step_offset + n });
    }
    Ok(params)
}

/// Initializes a network from `config.init_seed` and trains it for
/// `config.epochs` passes. Single precision runs in `f32` and is widened on
/// return.
pub fn train<S: TrainingSamples + ?Sized>(
    arch: Architecture,
    samples: &S,
    config: &TrainConfig,
) -> Result<(NetworkParams, LossTrace)> {
    config.validate()?;
    let init = NetworkParams::init(arch, config.init_seed)?;
    match config.precision {
        Precision::Double => train_from(init, samples, config),
        Precision::Single => {
            let (p, trace) = train_from(init.cast::<f32>(), samples, config)?;
            Ok((p.cast(), trace))
        }
    }
}

fn train_from<T: Scalar, S: TrainingSamples + ?Sized>(
    mut params: Params<T>,
    samples: &S,
    config: &TrainConfig,
) -> Result<(Params<T>, LossTrace)> {
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, params.param_count());
    let mut trace = LossTrace::default();
    for epoch in 0..config.epochs {
        params = run_epoch(params, samples, config, &mut opt, &mut trace, epoch * samples.len())?;
    }
    Ok((params, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed {
        inputs: Vec<Vec<f32>>,
        labels: Vec<HomeVector>,
    }

    impl TrainingSamples for Fixed {
        fn len(&self) -> usize {
            self.inputs.len()
        }
        fn label(&self, i: usize) -> HomeVector {
            self.labels[i]
        }
        fn input_into(&self, i: usize, buf: &mut Vec<f32>) {
            buf.extend_from_slice(&self.inputs[i]);
        }
    }

    fn image(seed: u32) -> Vec<f32> {
        (0..21 * 40)
            .map(|i| (((i as u32).wrapping_mul(2654435761u32) ^ seed.wrapping_mul(97)) % 1000) as f32 / 1000.0)
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let arch = Architecture::compact(21, 40);
        let p = Params::<f64>::init(arch, 1).unwrap();
        let data = Fixed {
            inputs: vec![image(1), image(2)],
            labels: vec![HomeVector::new(1.0, 0.0), HomeVector::new(0.0, -1.0)],
        };
        let cfg = TrainConfig { learning_rate: 0.0, ..Default::default() };
        let (q, trace) = train_epoch(p.clone(), &data, &cfg).unwrap();
        assert_eq!(p, q);
        assert_eq!(trace.steps, 2);
    }

    #[test]
    fn repeated_example_loss_never_increases() {
        let arch = Architecture::compact(21, 40);
        let p = Params::<f64>::init(arch, 7).unwrap();
        let data = Fixed {
            inputs: vec![image(3); 100],
            labels: vec![HomeVector::new(0.6, -0.8); 100],
        };
        let cfg = TrainConfig { learning_rate: 0.01, log_every: 1, ..Default::default() };
        let (_, trace) = train_epoch(p, &data, &cfg).unwrap();
        assert_eq!(trace.entries.len(), 100);
        for w in trace.entries.windows(2) {
            assert!(w[1].1 <= w[0].1, "{:?}", w);
        }
        assert!(trace.entries[99].1 < trace.entries[0].1);
    }

    #[test]
    fn training_is_deterministic_and_optimizers_run() {
        let data = Fixed {
            inputs: (0..20).map(image).collect(),
            labels: (0..20).map(|i| HomeVector::from_angle(i as f64)).collect(),
        };
        for optimizer in [
            OptimizerKind::Sgd,
            OptimizerKind::Momentum { beta: 0.9 },
            OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 },
        ] {
            let cfg = TrainConfig { optimizer, epochs: 2, batch_size: 3, ..Default::default() };
            let a = train(Architecture::compact(21, 40), &data, &cfg).unwrap();
            let b = train(Architecture::compact(21, 40), &data, &cfg).unwrap();
            assert_eq!(a.0, b.0);
            assert_eq!(a.1.steps, 40);
        }
        let single = TrainConfig { precision: Precision::Single, ..Default::default() };
        let (p, _) = train(Architecture::compact(21, 40), &data, &single).unwrap();
        assert!(p.is_finite());
    }

    #[test]
    fn divergence_reports_the_step() {
        let data = Fixed {
            inputs: vec![vec![f32::NAN; 21 * 40]],
            labels: vec![HomeVector::FORWARD],
        };
        let err = train(Architecture::compact(21, 40), &data, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { step: 0 }));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let data = Fixed { inputs: vec![], labels: vec![] };
        let arch = Architecture::compact(21, 40);
        assert!(train(arch.clone(), &data, &TrainConfig::default()).is_err());
        let bad = TrainConfig { batch_size: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { learning_rate: f64::NAN, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn trace_csv_has_header() {
        let t = LossTrace { entries: vec![(100, 0.5), (200, 0.25)], steps: 200, mean_loss: 0.375 };
        assert_eq!(t.to_csv(), "step,loss\n100,0.5\n200,0.25\n");
    }
}
