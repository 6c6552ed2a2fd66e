//! Layered composition of neural cores and the tick scheduler.
//!
//! Layers are stored top (input side) first. Layer `p` receives raw states from
//! layer `p - 1` and back products from layer `p + 1`. Both directions travel
//! over latched buses: during a tick every core reads only values latched at
//! the end of the previous tick, and all buses are swapped together once every
//! core has finished. Evaluation order inside a tick is therefore irrelevant.
//!
//! The downward bus carries each upper core's state register as it stood at
//! the end of the previous tick, which is the `x_out` that core presents during
//! the current one. The upward bus carries the BACKVEC products emitted during
//! the previous tick.

use rayon::prelude::*;

use crate::config_io::prng::Prng;
use crate::error::{Error, Result};
use crate::neural_core::{ClampSignal, CoreConfig, CoreTickInput, NeuralCore};
use crate::scalar::ActivationKind;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Layer widths, top (input) to bottom (output).
    pub layer_sizes: Vec<usize>,
    /// One activation per layer, same order as `layer_sizes`.
    pub activations: Vec<ActivationKind>,
    pub alpha: f32,
    pub gamma: f32,
    pub clamp_hard: bool,
    pub alpha_bias_scale: f32,
    pub bias_frozen: bool,
    pub seed: u64,
    pub init_scale: f32,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            layer_sizes: vec![2, 4, 3],
            activations: vec![ActivationKind::Identity, ActivationKind::Relu, ActivationKind::Identity],
            alpha: 0.01,
            gamma: 0.05,
            clamp_hard: true,
            alpha_bias_scale: 1.0,
            bias_frozen: false,
            seed: 0,
            init_scale: 0.5,
        }
    }
}

impl NetworkConfig {
    /// A config with the given sizes, identity activations and default rates.
    pub fn with_sizes(layer_sizes: &[usize]) -> Self {
        Self {
            activations: vec![ActivationKind::Identity; layer_sizes.len()],
            layer_sizes: layer_sizes.to_vec(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(format!("a network needs at least 2 layers, got {}", self.layer_sizes.len())));
        }
        if let Some(p) = self.layer_sizes.iter().position(|&n| n == 0) {
            return Err(Error::Config(format!("layer {p} has size 0")));
        }
        if self.activations.len() != self.layer_sizes.len() {
            return Err(Error::Config(format!(
                "{} activations given for {} layers",
                self.activations.len(),
                self.layer_sizes.len()
            )));
        }
        for (name, v) in [("alpha", self.alpha), ("gamma", self.gamma), ("alpha_bias_scale", self.alpha_bias_scale)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::Config("init_scale must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.layer_sizes.len()
    }

    /// Core parameters for layer `p`, wired to its neighbours.
    pub fn core_config(&self, p: usize) -> CoreConfig {
        let sizes = &self.layer_sizes;
        let has_upper = p > 0;
        CoreConfig {
            n_presyn: if has_upper { sizes[p - 1] } else { 0 },
            m_back: sizes.get(p + 1).copied().unwrap_or(0),
            activation: self.activations[p],
            presyn_activation: if has_upper { self.activations[p - 1] } else { ActivationKind::Identity },
            alpha: self.alpha,
            alpha_bias_scale: self.alpha_bias_scale,
            gamma: self.gamma,
            bias_frozen: self.bias_frozen,
            has_upper,
        }
    }

    /// Number of weight columns (presynaptic lanes plus bias) in layer `p`.
    pub fn weight_cols(&self, p: usize) -> usize {
        if p == 0 {
            1
        } else {
            self.layer_sizes[p - 1] + 1
        }
    }
}

/// Per-neuron observations for one tick. `None` leaves a layer free.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClampMap {
    pub layers: Vec<Option<Vec<ClampSignal>>>,
}

impl ClampMap {
    pub fn free(depth: usize) -> Self {
        Self { layers: vec![None; depth] }
    }

    /// Clamps every neuron of layer `p` to `values`.
    pub fn set_layer(&mut self, p: usize, values: &[f32]) -> &mut Self {
        self.layers[p] = Some(values.iter().map(|&v| ClampSignal::observe(v)).collect());
        self
    }

    pub fn clear_layer(&mut self, p: usize) -> &mut Self {
        self.layers[p] = None;
        self
    }

    fn signal(&self, p: usize, i: usize) -> ClampSignal {
        self.layers.get(p).and_then(Option::as_ref).map(|s| s[i]).unwrap_or(ClampSignal::FREE)
    }

    pub fn validate(&self, sizes: &[usize]) -> Result<()> {
        if self.layers.len() > sizes.len() {
            return Err(Error::Shape(format!(
                "clamp map has {} layers, network has {}",
                self.layers.len(),
                sizes.len()
            )));
        }
        for (p, layer) in self.layers.iter().enumerate() {
            if let Some(signals) = layer {
                if signals.len() != sizes[p] {
                    return Err(Error::Shape(format!(
                        "clamp for layer {p} has {} entries, layer has {}",
                        signals.len(),
                        sizes[p]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Order in which cores execute within a tick. All orders give identical
/// results; the choice exists to demonstrate that.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    #[default]
    Sequential,
    Reversed,
    /// Cores run on the current rayon pool.
    Parallel,
}

impl Schedule {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sequential => "sequential",
            Self::Reversed => "reversed",
            Self::Parallel => "parallel",
        }
    }
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sequential" => Ok(Self::Sequential),
            "reversed" => Ok(Self::Reversed),
            "parallel" => Ok(Self::Parallel),
            other => Err(Error::Config(format!("unknown schedule `{other}` (sequential, reversed, parallel)"))),
        }
    }
}

/// Outcome of one network tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickReport {
    /// Latency of the tick: the slowest core.
    pub network_cycles: u64,
    /// `per_core_cycles[p][i]` for core `i` of layer `p`.
    pub per_core_cycles: Vec<Vec<u64>>,
    /// Some state, error or weight became NaN or infinite.
    pub diverged: bool,
    pub states: Vec<Vec<f32>>,
    pub errors: Vec<Vec<f32>>,
}

/// A core scheduled for one tick: layer, index, the core and its two latches.
type Job<'a> = (usize, usize, &'a mut NeuralCore, &'a [f32], &'a [f32]);

/// One layer of cores with its incoming latched buses.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub cores: Vec<NeuralCore>,
    /// Raw upper-layer states, length `n_presyn`.
    pub states_down: Vec<f32>,
    /// Row-major `size x m_back`; entry `(i, k)` is the product emitted by core
    /// `k` of the layer below at presynaptic position `i`.
    pub back_up: Vec<f32>,
    m_back: usize,
}

impl Layer {
    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn back_for(&self, i: usize) -> &[f32] {
        &self.back_up[i * self.m_back..(i + 1) * self.m_back]
    }

    pub fn states(&self) -> Vec<f32> {
        self.cores.iter().map(|c| c.state.x).collect()
    }

    pub fn errors(&self) -> Vec<f32> {
        self.cores.iter().map(|c| c.state.eps).collect()
    }
}

/// Read-only copy of every state, error and weight.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSnapshot {
    pub layer_sizes: Vec<usize>,
    pub x: Vec<Vec<f32>>,
    pub eps: Vec<Vec<f32>>,
    /// Row-major `n_p x cols_p` with `cols_p = n_{p-1} + 1` (bias last); the
    /// top layer holds only its unused bias column.
    pub theta: Vec<Vec<f32>>,
    /// Latched upward products, row-major `n_p x n_{p+1}`.
    pub back_up: Vec<Vec<f32>>,
}

impl NetworkSnapshot {
    pub fn weight_cols(&self, p: usize) -> usize {
        if p == 0 {
            1
        } else {
            self.layer_sizes[p - 1] + 1
        }
    }

    /// Bit patterns of every value, for exact comparisons that also cover NaN.
    pub fn bits(&self) -> Vec<u32> {
        self.x.iter().chain(&self.eps).chain(&self.theta).chain(&self.back_up).flatten().map(|v| v.to_bits()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    cfg: NetworkConfig,
    layers: Vec<Layer>,
    ticks: u64,
    schedule: Schedule,
}

impl Network {
    /// Builds the network, drawing weights i.i.d. from `[-init_scale, init_scale)`
    /// layer by layer (top first), row-major, bias last. The top layer's unused
    /// bias is zero and consumes no draws.
    pub fn build(cfg: NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Prng::new(cfg.seed);
        let s = cfg.init_scale;
        let mut layers = Vec::with_capacity(cfg.depth());
        for (p, &n) in cfg.layer_sizes.iter().enumerate() {
            let core_cfg = cfg.core_config(p);
            let cols = cfg.weight_cols(p);
            let cores = (0..n)
                .map(|_| {
                    let w = if p == 0 { vec![0.0] } else { rng.uniform_vec(cols, -s, s) };
                    NeuralCore::new(core_cfg.clone(), w, 0.0)
                })
                .collect::<Result<Vec<_>>>()?;
            layers.push(Layer {
                cores,
                states_down: vec![0.0; core_cfg.n_presyn],
                back_up: vec![0.0; n * core_cfg.m_back],
                m_back: core_cfg.m_back,
            });
        }
        Ok(Self { cfg, layers, ticks: 0, schedule: Schedule::Sequential })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn core(&self, p: usize, i: usize) -> &NeuralCore {
        &self.layers[p].cores[i]
    }

    pub fn set_alpha(&mut self, alpha: f32) {
        self.cfg.alpha = alpha;
        self.for_each_core(|c| c.cfg.alpha = alpha);
    }

    pub fn set_gamma(&mut self, gamma: f32) {
        self.cfg.gamma = gamma;
        self.for_each_core(|c| c.cfg.gamma = gamma);
    }

    pub fn set_clamp_hard(&mut self, clamp_hard: bool) {
        self.cfg.clamp_hard = clamp_hard;
    }

    fn for_each_core(&mut self, mut f: impl FnMut(&mut NeuralCore)) {
        self.layers.iter_mut().flat_map(|l| l.cores.iter_mut()).for_each(&mut f);
    }

    /// Zeroes every state, error, bottom-up sum and latched bus. Weights are kept.
    pub fn reset_states(&mut self) {
        for layer in &mut self.layers {
            for c in &mut layer.cores {
                c.state.x = 0.0;
                c.state.eps = 0.0;
                c.state.b = 0.0;
            }
            layer.states_down.iter_mut().for_each(|v| *v = 0.0);
            layer.back_up.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Overwrites the states of layer `p` and refreshes the downward latch that
    /// mirrors them.
    pub fn set_layer_states(&mut self, p: usize, values: &[f32]) -> Result<()> {
        let n = self.cfg.layer_sizes[p];
        if values.len() != n {
            return Err(Error::Shape(format!("layer {p} has {n} neurons, got {} values", values.len())));
        }
        for (c, &v) in self.layers[p].cores.iter_mut().zip(values) {
            c.state.x = v;
        }
        if let Some(lower) = self.layers.get_mut(p + 1) {
            lower.states_down.copy_from_slice(values);
        }
        Ok(())
    }

    /// Replaces the weights of layer `p` (row-major, bias last).
    pub fn set_layer_weights(&mut self, p: usize, theta: &[f32]) -> Result<()> {
        let cols = self.cfg.weight_cols(p);
        let n = self.cfg.layer_sizes[p];
        if theta.len() != n * cols {
            return Err(Error::Shape(format!(
                "layer {p} expects {} weights ({n} x {cols}), got {}",
                n * cols,
                theta.len()
            )));
        }
        for (c, row) in self.layers[p].cores.iter_mut().zip(theta.chunks_exact(cols)) {
            c.state.theta.copy_from_slice(row);
        }
        Ok(())
    }

    /// Executes one tick on every core against the previous tick's latches,
    /// then swaps all buses at once.
    pub fn tick(&mut self, clamp: &ClampMap) -> Result<TickReport> {
        self.tick_with(clamp, self.schedule)
    }

    /// Schedule used by [`Network::tick`].
    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    pub fn set_schedule(&mut self, schedule: Schedule) {
        self.schedule = schedule;
    }

    pub fn tick_with(&mut self, clamp: &ClampMap, schedule: Schedule) -> Result<TickReport> {
        clamp.validate(&self.cfg.layer_sizes)?;
        let clamp_hard = self.cfg.clamp_hard;

        // Split each layer into its read-only latches and its cores so the
        // cores can run in any order.
        let mut jobs: Vec<Job<'_>> = Vec::new();
        for (p, layer) in self.layers.iter_mut().enumerate() {
            let m = layer.m_back;
            let Layer { cores, states_down, back_up, .. } = layer;
            for (i, core) in cores.iter_mut().enumerate() {
                jobs.push((p, i, core, states_down.as_slice(), &back_up[i * m..(i + 1) * m]));
            }
        }
        if schedule == Schedule::Reversed {
            jobs.reverse();
        }
        let run = |(p, i, core, presyn, back): Job<'_>| {
            let input = CoreTickInput { presyn, back, clamp: clamp.signal(p, i), clamp_hard };
            (p, i, core.tick(&input))
        };
        let mut outputs: Vec<_> = match schedule {
            Schedule::Parallel => jobs.into_par_iter().map(run).collect(),
            _ => jobs.into_iter().map(run).collect(),
        };
        outputs.sort_by_key(|&(p, i, _)| (p, i));

        let mut per_core_cycles: Vec<Vec<u64>> = self.layers.iter().map(|l| vec![0; l.len()]).collect();
        let mut new_back: Vec<Vec<f32>> = self.layers.iter().map(|l| vec![0.0; l.back_up.len()]).collect();
        for (p, i, out) in &outputs {
            per_core_cycles[*p][*i] = out.cycles;
            if *p > 0 {
                // core i of layer p feeds position i of every core j in layer p-1
                let m = self.layers[p - 1].m_back;
                for (j, &v) in out.backvec.iter().enumerate() {
                    new_back[p - 1][j * m + i] = v;
                }
            }
        }

        // Swap: every latch changes together.
        for (p, back) in new_back.into_iter().enumerate() {
            self.layers[p].back_up = back;
            if p > 0 {
                let states = self.layers[p - 1].states();
                self.layers[p].states_down = states;
            }
        }
        self.ticks += 1;

        let network_cycles = per_core_cycles.iter().flatten().copied().max().unwrap_or(0);
        let diverged = self.layers.iter().flat_map(|l| &l.cores).any(|c| !c.state.is_finite());
        Ok(TickReport {
            network_cycles,
            per_core_cycles,
            diverged,
            states: self.layers.iter().map(Layer::states).collect(),
            errors: self.layers.iter().map(Layer::errors).collect(),
        })
    }

    /// Per-core tick cycles without running a tick.
    pub fn cycle_table(&self) -> Vec<Vec<u64>> {
        self.layers.iter().map(|l| l.cores.iter().map(|c| c.cfg.tick_cycles()).collect()).collect()
    }

    /// Network tick latency: the slowest core.
    pub fn tick_latency(&self) -> u64 {
        self.cycle_table().into_iter().flatten().max().unwrap_or(0)
    }

    pub fn snapshot(&self) -> NetworkSnapshot {
        NetworkSnapshot {
            layer_sizes: self.cfg.layer_sizes.clone(),
            x: self.layers.iter().map(Layer::states).collect(),
            eps: self.layers.iter().map(Layer::errors).collect(),
            theta: self
                .layers
                .iter()
                .map(|l| l.cores.iter().flat_map(|c| c.state.theta.iter().copied()).collect())
                .collect(),
            back_up: self.layers.iter().map(|l| l.back_up.clone()).collect(),
        }
    }

    /// Diagnostic prediction-error energy in binary64, see [`energy_of`].
    pub fn energy(&self) -> f64 {
        energy_of(&self.snapshot(), &self.cfg.activations)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().flat_map(|l| &l.cores).all(|c| c.state.is_finite())
    }
}

/// `sum_{p>0} ||x_p - Theta_p f(x_{p-1}) - bias_p||^2` evaluated in binary64.
/// The top layer has no prediction and contributes nothing.
pub fn energy_of(snap: &NetworkSnapshot, activations: &[ActivationKind]) -> f64 {
    let mut total = 0.0f64;
    for p in 1..snap.layer_sizes.len() {
        let f = activations[p - 1];
        let upper: Vec<f64> = snap.x[p - 1].iter().map(|&v| activation_f64(f, v as f64)).collect();
        let cols = snap.weight_cols(p);
        for (i, row) in snap.theta[p].chunks_exact(cols).enumerate() {
            let (w, bias) = row.split_at(cols - 1);
            let mu: f64 = w.iter().zip(&upper).map(|(&w, &u)| w as f64 * u).sum::<f64>() + bias[0] as f64;
            let e = snap.x[p][i] as f64 - mu;
            total += e * e;
        }
    }
    total
}

fn activation_f64(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Identity => x,
        ActivationKind::Relu => {
            if x > 0.0 || x.is_nan() {
                x
            } else {
                0.0
            }
        }
        ActivationKind::Tanh => x.tanh(),
    }
}
