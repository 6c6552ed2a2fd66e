//! Dense reference evaluation of one network tick.
//!
//! The oracle works on whole layers at a time and shares no arithmetic with
//! the core simulator. Values are held in `f64`. In [`OracleMode::Bit32`] each
//! elementary operation is evaluated in binary64 and rounded once to binary32;
//! for `+ - *` on binary32 operands this equals the correctly rounded binary32
//! result, so the mode reproduces the simulator bit for bit when it follows the
//! same accumulation order. [`OracleMode::F64`] skips the rounding.
//!
//! Bottom-up sums read the products latched during the previous tick, the
//! same as the simulator's upward bus.

use crate::config_io::prng::Prng;
use crate::error::{Error, Result};
use crate::network::{ClampMap, Network, NetworkConfig, NetworkSnapshot};
use crate::neural_core::ClampSignal;
use crate::scalar::ActivationKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    Bit32,
    F64,
}

impl OracleMode {
    #[inline]
    fn r(self, v: f64) -> f64 {
        match self {
            Self::Bit32 => v as f32 as f64,
            Self::F64 => v,
        }
    }
}

/// Whole-network state as dense per-layer arrays, top layer first.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<ActivationKind>,
    pub x: Vec<Vec<f64>>,
    pub eps: Vec<Vec<f64>>,
    /// Row-major `n_p x (n_{p-1} + 1)`, bias column last; top layer `n_0 x 1`.
    pub theta: Vec<Vec<f64>>,
    /// Products latched from the layer below, row-major `n_p x n_{p+1}`.
    pub back_latch: Vec<Vec<f64>>,
    pub alpha: f64,
    pub gamma: f64,
    pub alpha_bias_scale: f64,
    pub bias_frozen: bool,
    pub clamp_hard: bool,
    pub clamps: Vec<Option<Vec<ClampSignal>>>,
}

impl DenseState {
    /// Captures a network's current state and step sizes.
    pub fn from_network(net: &Network) -> Self {
        Self::from_snapshot(&net.snapshot(), net.config())
    }

    pub fn from_snapshot(snap: &NetworkSnapshot, cfg: &NetworkConfig) -> Self {
        let widen =
            |v: &Vec<Vec<f32>>| -> Vec<Vec<f64>> { v.iter().map(|l| l.iter().map(|&x| x as f64).collect()).collect() };
        Self {
            layer_sizes: snap.layer_sizes.clone(),
            activations: cfg.activations.clone(),
            x: widen(&snap.x),
            eps: widen(&snap.eps),
            theta: widen(&snap.theta),
            back_latch: widen(&snap.back_up),
            alpha: cfg.alpha as f64,
            gamma: cfg.gamma as f64,
            alpha_bias_scale: cfg.alpha_bias_scale as f64,
            bias_frozen: cfg.bias_frozen,
            clamp_hard: cfg.clamp_hard,
            clamps: vec![None; snap.layer_sizes.len()],
        }
    }

    pub fn set_clamps(&mut self, clamp: &ClampMap) {
        let mut clamps = clamp.layers.clone();
        clamps.resize(self.layer_sizes.len(), None);
        self.clamps = clamps;
    }

    fn cols(&self, p: usize) -> usize {
        if p == 0 {
            1
        } else {
            self.layer_sizes[p - 1] + 1
        }
    }

    fn check_shapes(&self) -> Result<()> {
        let depth = self.layer_sizes.len();
        let bad = |what: &str| Err(Error::Shape(format!("dense state: {what}")));
        if depth < 2 {
            return bad("fewer than 2 layers");
        }
        if [
            self.x.len(),
            self.eps.len(),
            self.theta.len(),
            self.back_latch.len(),
            self.activations.len(),
            self.clamps.len(),
        ]
        .iter()
        .any(|&l| l != depth)
        {
            return bad("per-layer arrays disagree with layer count");
        }
        for (p, &n) in self.layer_sizes.iter().enumerate() {
            let below = self.layer_sizes.get(p + 1).copied().unwrap_or(0);
            if self.x[p].len() != n || self.eps[p].len() != n {
                return bad(&format!("layer {p} state length"));
            }
            if self.theta[p].len() != n * self.cols(p) {
                return bad(&format!("layer {p} weight matrix"));
            }
            if self.back_latch[p].len() != n * below {
                return bad(&format!("layer {p} back latch"));
            }
            if let Some(c) = &self.clamps[p] {
                if c.len() != n {
                    return bad(&format!("layer {p} clamp"));
                }
            }
        }
        Ok(())
    }

    /// Narrows back to binary32 arrays laid out like a [`NetworkSnapshot`].
    pub fn to_snapshot(&self) -> NetworkSnapshot {
        let narrow =
            |v: &Vec<Vec<f64>>| -> Vec<Vec<f32>> { v.iter().map(|l| l.iter().map(|&x| x as f32).collect()).collect() };
        NetworkSnapshot {
            layer_sizes: self.layer_sizes.clone(),
            x: narrow(&self.x),
            eps: narrow(&self.eps),
            theta: narrow(&self.theta),
            back_up: narrow(&self.back_latch),
        }
    }
}

fn act(mode: OracleMode, kind: ActivationKind, v: f64) -> f64 {
    match kind {
        ActivationKind::Identity => v,
        ActivationKind::Relu => {
            if v > 0.0 || v.is_nan() {
                v
            } else {
                0.0
            }
        }
        ActivationKind::Tanh => mode.r(v.tanh()),
    }
}

fn act_prime(mode: OracleMode, kind: ActivationKind, v: f64) -> f64 {
    match kind {
        ActivationKind::Identity => 1.0,
        ActivationKind::Relu => {
            if v.is_nan() {
                v
            } else if v > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        ActivationKind::Tanh => {
            let t = mode.r(v.tanh());
            mode.r(1.0 - mode.r(t * t))
        }
    }
}

/// Advances `s` by one tick.
pub fn oracle_tick(s: &DenseState, mode: OracleMode) -> Result<DenseState> {
    s.check_shapes()?;
    let r = |v: f64| mode.r(v);
    let depth = s.layer_sizes.len();
    let mut next = s.clone();

    for p in 0..depth {
        let n = s.layer_sizes[p];
        let cols = s.cols(p);
        let below = s.layer_sizes.get(p + 1).copied().unwrap_or(0);
        let f_up: Vec<f64> =
            if p == 0 { Vec::new() } else { s.x[p - 1].iter().map(|&v| act(mode, s.activations[p - 1], v)).collect() };
        let clamps = s.clamps[p].as_deref();

        for i in 0..n {
            let clamp = clamps.map(|c| c[i]).unwrap_or(ClampSignal::FREE);
            let x = s.x[p][i];
            let x_eff = if clamp.x_set_en { clamp.x_obs as f64 } else { x };
            let row = &s.theta[p][i * cols..(i + 1) * cols];

            // prediction, ascending lanes then bias
            let mu = if p == 0 {
                0.0
            } else {
                let mut acc = 0.0;
                for (w, u) in row[..cols - 1].iter().zip(&f_up) {
                    acc = r(r(w * u) + acc);
                }
                r(r(row[cols - 1] * 1.0) + acc)
            };
            let eps = r(x_eff - mu);

            let mut b = 0.0;
            for k in 0..below {
                b = r(b + s.back_latch[p][i * below + k]);
            }

            // products emitted upward, from pre-update weights
            if p > 0 {
                let up_below = n;
                for (j, w) in row[..cols - 1].iter().enumerate() {
                    next.back_latch[p - 1][j * up_below + i] = r(w * eps);
                }
            }

            if p > 0 {
                let new_row = &mut next.theta[p][i * cols..(i + 1) * cols];
                let gain = r(s.alpha * eps);
                for (j, u) in f_up.iter().enumerate() {
                    new_row[j] = r(r(gain * u) + row[j]);
                }
                if !s.bias_frozen {
                    let bias_gain = r(r(s.alpha * s.alpha_bias_scale) * eps);
                    new_row[cols - 1] = r(r(bias_gain * 1.0) + row[cols - 1]);
                }
            }

            next.x[p][i] = if s.clamp_hard && clamp.x_set_en {
                clamp.x_obs as f64
            } else {
                let gate = act_prime(mode, s.activations[p], x_eff);
                let drive = r(r(gate * b) + -eps);
                r(r(s.gamma * drive) + x)
            };
            next.eps[p][i] = eps;
        }
    }
    Ok(next)
}

/// Prediction-error energy of a dense state, from explicit error vectors.
pub fn dense_energy(s: &DenseState) -> f64 {
    (1..s.layer_sizes.len())
        .map(|p| {
            let cols = s.cols(p);
            let f_up: Vec<f64> = s.x[p - 1].iter().map(|&v| act(OracleMode::F64, s.activations[p - 1], v)).collect();
            let errors: Vec<f64> = s.theta[p]
                .chunks_exact(cols)
                .zip(&s.x[p])
                .map(|(row, &x)| {
                    let pred = f_up.iter().enumerate().fold(row[cols - 1], |acc, (j, u)| acc + row[j] * u);
                    x - pred
                })
                .collect();
            errors.iter().map(|e| e * e).sum::<f64>()
        })
        .sum()
}

/// Runs `ticks` network ticks and oracle ticks side by side under a fixed
/// clamp and returns the first tick at which they disagree in any bit.
pub fn first_divergence(net: &mut Network, clamp: &ClampMap, ticks: usize) -> Result<Option<usize>> {
    let mut dense = DenseState::from_network(net);
    dense.set_clamps(clamp);
    for t in 0..ticks {
        net.tick(clamp)?;
        dense = oracle_tick(&dense, OracleMode::Bit32)?;
        if net.snapshot().bits() != dense.to_snapshot().bits() {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// Outcome of [`verify_random_networks`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub nets: usize,
    pub ticks: usize,
    /// Values compared over all nets and ticks.
    pub values: usize,
    /// Description of the first mismatch, if any.
    pub mismatch: Option<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mismatch.is_none()
    }
}

/// Checks the simulator against [`OracleMode::Bit32`] on `nets` random
/// networks (2 to 4 layers, widths 1 to 16, random activations and initial
/// states) for `ticks` ticks each. Odd-numbered nets learn with
/// `alpha = 0.01`; every second pair is driven by fresh random clamps each tick.
pub fn verify_random_networks(nets: usize, ticks: usize, seed: u64) -> Result<VerifyReport> {
    let mut rng = Prng::new(seed);
    let below = |rng: &mut Prng, n: u64| (rng.next_u64() % n) as usize;
    let mut values = 0;
    for case in 0..nets {
        let depth = 2 + below(&mut rng, 3);
        let sizes: Vec<usize> = (0..depth).map(|_| 1 + below(&mut rng, 16)).collect();
        let cfg = NetworkConfig {
            activations: (0..depth).map(|_| ActivationKind::ALL[below(&mut rng, 3)]).collect(),
            layer_sizes: sizes.clone(),
            alpha: if case % 2 == 1 { 0.01 } else { 0.0 },
            gamma: 0.05,
            clamp_hard: below(&mut rng, 2) == 1,
            seed: rng.next_u64(),
            ..NetworkConfig::default()
        };
        let mut net = Network::build(cfg)?;
        for (p, &n) in sizes.iter().enumerate() {
            net.set_layer_states(p, &rng.uniform_vec(n, -1.0, 1.0))?;
        }
        let clamped = (case / 2) % 2 == 1;
        let mut dense = DenseState::from_network(&net);
        for t in 0..ticks {
            let mut clamp = ClampMap::free(depth);
            if clamped {
                for (p, &n) in sizes.iter().enumerate() {
                    if below(&mut rng, 2) == 1 {
                        clamp.set_layer(p, &rng.uniform_vec(n, -1.0, 1.0));
                    }
                }
            }
            net.tick(&clamp)?;
            dense.set_clamps(&clamp);
            dense = oracle_tick(&dense, OracleMode::Bit32)?;
            let (a, b) = (net.snapshot().bits(), dense.to_snapshot().bits());
            values += a.len();
            if a != b {
                let mismatch = Some(format!("net {case} with sizes {sizes:?} differs at tick {t}"));
                return Ok(VerifyReport { nets, ticks, values, mismatch });
            }
        }
    }
    Ok(VerifyReport { nets, ticks, values, mismatch: None })
}
