//! Supervised training and inference through clamping, teacher-student
//! datasets and learning curves.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::config_io::config::{ExperimentConfig, Overrides};
use crate::config_io::prng::Prng;
use crate::error::{Error, Result};
use crate::network::{ClampMap, Network, NetworkConfig, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeacherKind {
    /// `y = A relu(B x)`
    Relu,
    /// `y = A tanh(B x + b1) + b2`
    Tanh,
}

impl FromStr for TeacherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" | "relu_teacher" => Ok(Self::Relu),
            "tanh" | "tanh_teacher" => Ok(Self::Tanh),
            other => Err(Error::Config(format!("unknown teacher `{other}`"))),
        }
    }
}

impl TeacherKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Relu => "relu",
            Self::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherSpec {
    pub kind: TeacherKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub seed: u64,
    /// Teacher parameters are drawn from `[-weight_scale, weight_scale)`.
    pub weight_scale: f32,
}

/// A fixed teacher network. Matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Teacher {
    pub kind: TeacherKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    /// `hidden x input`
    pub b_mat: Vec<f32>,
    pub b1: Vec<f32>,
    /// `output x hidden`
    pub a_mat: Vec<f32>,
    pub b2: Vec<f32>,
}

impl Teacher {
    /// Draws `B`, then (tanh only) `b1`, then `A`, then (tanh only) `b2` from `rng`.
    pub fn draw(spec: &TeacherSpec, rng: &mut Prng) -> Self {
        let s = spec.weight_scale;
        let (i, h, o) = (spec.input_dim, spec.hidden_dim, spec.output_dim);
        let tanh = spec.kind == TeacherKind::Tanh;
        let b_mat = rng.uniform_vec(h * i, -s, s);
        let b1 = if tanh { rng.uniform_vec(h, -s, s) } else { vec![0.0; h] };
        let a_mat = rng.uniform_vec(o * h, -s, s);
        let b2 = if tanh { rng.uniform_vec(o, -s, s) } else { vec![0.0; o] };
        Self { kind: spec.kind, input_dim: i, hidden_dim: h, output_dim: o, b_mat, b1, a_mat, b2 }
    }

    /// Target for one input, evaluated in binary64 and rounded once.
    pub fn eval(&self, input: &[f32]) -> Vec<f32> {
        let hidden: Vec<f64> = self
            .b_mat
            .chunks_exact(self.input_dim)
            .zip(&self.b1)
            .map(|(row, &bias)| {
                let z = row.iter().zip(input).map(|(&w, &x)| w as f64 * x as f64).sum::<f64>();
                match self.kind {
                    TeacherKind::Relu => z.max(0.0),
                    TeacherKind::Tanh => (z + bias as f64).tanh(),
                }
            })
            .collect();
        self.a_mat
            .chunks_exact(self.hidden_dim)
            .zip(&self.b2)
            .map(|(row, &bias)| {
                let y = row.iter().zip(&hidden).map(|(&w, &h)| w as f64 * h).sum::<f64>() + bias as f64;
                y as f32
            })
            .collect()
    }

    /// `n` samples with inputs i.i.d. uniform in `[-1, 1)`.
    pub fn dataset(&self, n: usize, rng: &mut Prng) -> Dataset {
        let samples = (0..n)
            .map(|_| {
                let input = rng.uniform_vec(self.input_dim, -1.0, 1.0);
                let target = self.eval(&input);
                Sample { input, target }
            })
            .collect();
        Dataset { samples }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f32>,
    pub target: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(input_dim, output_dim)` of a non-empty, consistent dataset.
    pub fn dims(&self) -> Result<(usize, usize)> {
        let first = self.samples.first().ok_or_else(|| Error::Dataset("dataset is empty".into()))?;
        let dims = (first.input.len(), first.target.len());
        if self.samples.iter().any(|s| (s.input.len(), s.target.len()) != dims) {
            return Err(Error::Dataset("samples have inconsistent dimensions".into()));
        }
        Ok(dims)
    }

    fn check_against(&self, net: &Network) -> Result<()> {
        let (i, o) = self.dims()?;
        let sizes = &net.config().layer_sizes;
        let (top, bottom) = (sizes[0], sizes[sizes.len() - 1]);
        if (i, o) != (top, bottom) {
            return Err(Error::Dataset(format!(
                "dataset is {i} -> {o} but the network boundary layers are {top} -> {bottom}"
            )));
        }
        Ok(())
    }
}

/// Teacher drawn from `spec.seed`, followed by `n_samples` inputs from the same stream.
pub fn generate_dataset(spec: &TeacherSpec, n_samples: usize) -> Dataset {
    let mut rng = Prng::new(spec.seed);
    let teacher = Teacher::draw(spec, &mut rng);
    teacher.dataset(n_samples, &mut rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainProtocol {
    /// Ticks per sample with `alpha = 0`.
    pub infer_ticks: usize,
    /// Ticks per sample with the configured `alpha`.
    pub learn_ticks: usize,
    pub epochs: usize,
    /// Ticks per sample in the inference-only MSE pass.
    pub eval_ticks: usize,
    pub reset_between_samples: bool,
    pub schedule: Schedule,
}

impl Default for TrainProtocol {
    fn default() -> Self {
        Self {
            infer_ticks: 20,
            learn_ticks: 5,
            epochs: 25,
            eval_ticks: 100,
            reset_between_samples: true,
            schedule: Schedule::Sequential,
        }
    }
}

impl TrainProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.infer_ticks == 0 || self.epochs == 0 || self.eval_ticks == 0 {
            return Err(Error::Config("infer_ticks, epochs and eval_ticks must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-epoch MSE, entry 0 measured before any training.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningCurve {
    pub mse: Vec<f64>,
    pub diverged: Vec<bool>,
}

impl LearningCurve {
    pub fn any_diverged(&self) -> bool {
        self.diverged.iter().any(|&d| d)
    }

    pub fn initial(&self) -> f64 {
        self.mse[0]
    }

    pub fn last(&self) -> f64 {
        *self.mse.last().expect("curve holds epoch 0")
    }

    /// `epoch,mse` with six fractional digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mse\n");
        for (epoch, mse) in self.mse.iter().enumerate() {
            writeln!(out, "{epoch},{mse:.6}").expect("writing to a String");
        }
        out
    }
}

/// Inference-only MSE: per sample, reset, hard-clamp the input, run
/// `eval_ticks` ticks with `alpha = 0` and compare the free output layer with
/// the target in binary64. Weights are untouched.
pub fn evaluate_mse(net: &mut Network, ds: &Dataset, eval_ticks: usize) -> Result<f64> {
    ds.check_against(net)?;
    let alpha = net.config().alpha;
    let clamp_hard = net.config().clamp_hard;
    net.set_alpha(0.0);
    net.set_clamp_hard(true);

    let depth = net.depth();
    let bottom = depth - 1;
    let mut clamp = ClampMap::free(depth);
    let mut total = 0.0f64;
    let mut count = 0usize;
    let mut result = Ok(());
    'samples: for sample in &ds.samples {
        net.reset_states();
        clamp.set_layer(0, &sample.input);
        for _ in 0..eval_ticks {
            if let Err(e) = net.tick(&clamp) {
                result = Err(e);
                break 'samples;
            }
        }
        for (c, &y) in net.layers()[bottom].cores.iter().zip(&sample.target) {
            let d = c.state.x as f64 - y as f64;
            total += d * d;
            count += 1;
        }
    }
    net.reset_states();
    net.set_alpha(alpha);
    net.set_clamp_hard(clamp_hard);
    result?;
    Ok(total / count as f64)
}

/// Runs one epoch of clamped training over `ds`. Returns whether any tick
/// reported divergence.
pub fn train_epoch(net: &mut Network, ds: &Dataset, proto: &TrainProtocol, alpha: f32) -> Result<bool> {
    let depth = net.depth();
    let mut clamp = ClampMap::free(depth);
    let mut diverged = false;
    for sample in &ds.samples {
        if proto.reset_between_samples {
            net.reset_states();
        }
        clamp.set_layer(0, &sample.input).set_layer(depth - 1, &sample.target);
        net.set_alpha(0.0);
        for _ in 0..proto.infer_ticks {
            diverged |= net.tick(&clamp)?.diverged;
        }
        net.set_alpha(alpha);
        for _ in 0..proto.learn_ticks {
            diverged |= net.tick(&clamp)?.diverged;
        }
    }
    net.set_alpha(alpha);
    Ok(diverged)
}

/// Builds a network from `cfg` and trains it on `ds`, measuring MSE before
/// training and after each epoch.
pub fn train_supervised(cfg: &NetworkConfig, ds: &Dataset, proto: &TrainProtocol) -> Result<(Network, LearningCurve)> {
    proto.validate()?;
    let mut net = Network::build(cfg.clone())?;
    net.set_schedule(proto.schedule);
    ds.check_against(&net)?;
    let alpha = cfg.alpha;
    let mut curve = LearningCurve::default();

    let mse0 = evaluate_mse(&mut net, ds, proto.eval_ticks)?;
    curve.mse.push(mse0);
    curve.diverged.push(!mse0.is_finite());
    for epoch in 1..=proto.epochs {
        let diverged = train_epoch(&mut net, ds, proto, alpha)?;
        let mse = evaluate_mse(&mut net, ds, proto.eval_ticks)?;
        if diverged {
            log::warn!("divergence during epoch {epoch}");
        }
        curve.mse.push(mse);
        curve.diverged.push(diverged || !mse.is_finite() || !net.is_finite());
    }
    Ok((net, curve))
}

/// The five reproducible experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    ReluTs,
    TanhTs,
    ScaleSmall,
    ScaleMedium,
    ScaleLarge,
}

impl Experiment {
    pub const ALL: [Experiment; 5] =
        [Self::ReluTs, Self::TanhTs, Self::ScaleSmall, Self::ScaleMedium, Self::ScaleLarge];

    pub fn name(self) -> &'static str {
        match self {
            Self::ReluTs => "relu_ts",
            Self::TanhTs => "tanh_ts",
            Self::ScaleSmall => "scale_small",
            Self::ScaleMedium => "scale_medium",
            Self::ScaleLarge => "scale_large",
        }
    }

    /// Frozen default configuration, see `configs/*.cfg`.
    pub fn config_text(self) -> &'static str {
        match self {
            Self::ReluTs => include_str!("../configs/relu_ts.cfg"),
            Self::TanhTs => include_str!("../configs/tanh_ts.cfg"),
            Self::ScaleSmall => include_str!("../configs/scale_small.cfg"),
            Self::ScaleMedium => include_str!("../configs/scale_medium.cfg"),
            Self::ScaleLarge => include_str!("../configs/scale_large.cfg"),
        }
    }

    pub fn config(self) -> ExperimentConfig {
        ExperimentConfig::parse(self.config_text()).expect("bundled experiment configs are valid")
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub name: String,
    pub config: ExperimentConfig,
    pub curve: LearningCurve,
    pub network: Network,
}

impl ExperimentOutput {
    pub fn csv(&self) -> String {
        self.curve.to_csv()
    }
}

/// Generates the dataset described by `cfg` and trains on it.
pub fn run_config(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let ds = generate_dataset(&cfg.teacher, cfg.n_samples);
    let (network, curve) = train_supervised(&cfg.network, &ds, &cfg.protocol)?;
    Ok(ExperimentOutput { name: cfg.name.clone(), config: cfg.clone(), curve, network })
}

/// Runs a named experiment with its frozen defaults plus `overrides`.
pub fn run_experiment(name: &str, overrides: &Overrides) -> Result<ExperimentOutput> {
    let experiment: Experiment = name.parse()?;
    let mut cfg = experiment.config();
    overrides.apply(&mut cfg)?;
    run_config(&cfg)
}
