//! One neural core: local storage, the six-stage per-tick schedule, clamping
//! and cycle accounting.
//!
//! A tick runs `PRED -> ERR -> BACKSUM -> BACKVEC -> WUP -> STATE` on a single
//! sequential MAC datapath. Presynaptic sums run in ascending index order with
//! the bias lane last, starting from a zero accumulator.

use crate::error::{Error, Result};
use crate::scalar::{fp_mul_add, ActivationKind};

/// Static parameters of one core.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreConfig {
    /// Number of true presynaptic inputs `N` (bias lane excluded).
    pub n_presyn: usize,
    /// Number of incoming back-error products `M`.
    pub m_back: usize,
    /// This core's layer activation; its derivative gates the bottom-up term.
    pub activation: ActivationKind,
    /// Activation of the layer above, applied to received raw states.
    pub presyn_activation: ActivationKind,
    pub alpha: f32,
    pub alpha_bias_scale: f32,
    pub gamma: f32,
    pub bias_frozen: bool,
    /// False for topmost cores: no prediction is formed and no weight is
    /// updated, so PRED and WUP take zero cycles.
    pub has_upper: bool,
}

impl CoreConfig {
    pub fn new(n_presyn: usize, m_back: usize) -> Self {
        Self {
            n_presyn,
            m_back,
            activation: ActivationKind::Identity,
            presyn_activation: ActivationKind::Identity,
            alpha: 0.0,
            alpha_bias_scale: 1.0,
            gamma: 0.0,
            bias_frozen: false,
            has_upper: true,
        }
    }

    /// A topmost core: `N = 0`, prediction fixed at zero.
    pub fn top(m_back: usize) -> Self {
        Self { has_upper: false, ..Self::new(0, m_back) }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || !self.gamma.is_finite() || !self.alpha_bias_scale.is_finite() {
            return Err(Error::Config("alpha, gamma and alpha_bias_scale must be finite".into()));
        }
        if !self.has_upper && self.n_presyn != 0 {
            return Err(Error::Config("a core without an upper layer must have n_presyn = 0".into()));
        }
        Ok(())
    }

    /// Cycles for one tick: `(N+1) + 1 + M + N + (N+1) + 1`, with the PRED and
    /// WUP terms dropped for topmost cores.
    pub fn tick_cycles(&self) -> u64 {
        let n = self.n_presyn as u64;
        let m = self.m_back as u64;
        let lane = if self.has_upper { n + 1 } else { 0 };
        let pred = lane;
        let err = 1;
        let backsum = m;
        let backvec = n;
        let wup = lane;
        let state = 1;
        pred + err + backsum + backvec + wup + state
    }
}

/// Mutable per-core storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreState {
    pub x: f32,
    pub eps: f32,
    /// `N + 1` weights; index `N` is the bias lane.
    pub theta: Vec<f32>,
    pub b: f32,
    pub cycles_last_tick: u64,
}

impl CoreState {
    pub fn bias(&self) -> f32 {
        *self.theta.last().expect("theta always holds the bias lane")
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.eps.is_finite() && self.theta.iter().all(|w| w.is_finite())
    }
}

/// External observation for one tick. `x_obs` is ignored unless `x_set_en`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClampSignal {
    pub x_set_en: bool,
    pub x_obs: f32,
}

impl ClampSignal {
    pub const FREE: ClampSignal = ClampSignal { x_set_en: false, x_obs: 0.0 };

    pub fn observe(x_obs: f32) -> Self {
        Self { x_set_en: true, x_obs }
    }
}

/// Everything a core reads during one tick.
#[derive(Debug, Clone, Copy)]
pub struct CoreTickInput<'a> {
    /// Raw upper-layer states, length `N`.
    pub presyn: &'a [f32],
    /// Pre-multiplied products `theta_ki * eps_k` from the layer below, length `M`.
    pub back: &'a [f32],
    pub clamp: ClampSignal,
    pub clamp_hard: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreTickOutput {
    /// State held at the start of the tick (the registered downward output).
    pub x_out: f32,
    /// `theta_ij * eps` for every non-bias lane.
    pub backvec: Vec<f32>,
    pub eps_out: f32,
    pub cycles: u64,
}

/// A configured core with its state.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralCore {
    pub cfg: CoreConfig,
    pub state: CoreState,
}

impl NeuralCore {
    pub fn new(cfg: CoreConfig, init_weights: Vec<f32>, init_x: f32) -> Result<Self> {
        cfg.validate()?;
        if init_weights.len() != cfg.n_presyn + 1 {
            return Err(Error::Config(format!(
                "core with n_presyn = {} needs {} weights (incl. bias), got {}",
                cfg.n_presyn,
                cfg.n_presyn + 1,
                init_weights.len()
            )));
        }
        Ok(Self { cfg, state: CoreState { x: init_x, eps: 0.0, theta: init_weights, b: 0.0, cycles_last_tick: 0 } })
    }

    pub fn effective_state(&self, clamp: ClampSignal) -> f32 {
        if clamp.x_set_en {
            clamp.x_obs
        } else {
            self.state.x
        }
    }

    /// PRED: `mu = sum_j theta_ij f(presyn_j) + theta_iN`.
    pub fn stage_pred(&self, presyn: &[f32]) -> f32 {
        if !self.cfg.has_upper {
            return 0.0;
        }
        debug_assert_eq!(presyn.len(), self.cfg.n_presyn);
        let f = self.cfg.presyn_activation;
        let (weights, bias) = self.state.theta.split_at(self.cfg.n_presyn);
        let acc = weights.iter().zip(presyn).fold(0.0f32, |acc, (&w, &x)| fp_mul_add(w, f.apply(x), acc));
        fp_mul_add(bias[0], 1.0, acc)
    }

    /// ERR: stores and returns `eps = x_eff - mu`.
    pub fn stage_err(&mut self, x_eff: f32, mu: f32) -> f32 {
        self.state.eps = x_eff - mu;
        self.state.eps
    }

    /// BACKSUM: stores and returns `b = sum_k back_k`.
    pub fn stage_backsum(&mut self, back: &[f32]) -> f32 {
        debug_assert_eq!(back.len(), self.cfg.m_back);
        self.state.b = back.iter().fold(0.0f32, |acc, &v| acc + v);
        self.state.b
    }

    /// BACKVEC: `theta_ij * eps` for `j < N`.
    pub fn stage_backvec(&self) -> Vec<f32> {
        let eps = self.state.eps;
        self.state.theta[..self.cfg.n_presyn].iter().map(|&w| w * eps).collect()
    }

    /// WUP: `theta_ij += alpha * eps * f(presyn_j)`; bias lane uses the scaled
    /// rate unless frozen.
    pub fn stage_wup(&mut self, presyn: &[f32]) {
        if !self.cfg.has_upper {
            return;
        }
        let n = self.cfg.n_presyn;
        let f = self.cfg.presyn_activation;
        let eps = self.state.eps;
        let gain = self.cfg.alpha * eps;
        let (weights, bias) = self.state.theta.split_at_mut(n);
        for (w, &x) in weights.iter_mut().zip(presyn) {
            *w = fp_mul_add(gain, f.apply(x), *w);
        }
        if !self.cfg.bias_frozen {
            let bias_gain = (self.cfg.alpha * self.cfg.alpha_bias_scale) * eps;
            bias[0] = fp_mul_add(bias_gain, 1.0, bias[0]);
        }
    }

    /// STATE: hard clamp overwrites, otherwise one Euler step
    /// `x += gamma * (f'(x_eff) * b - eps)` from the stored (pre-tick) `x`.
    pub fn stage_state(&mut self, x_eff: f32, clamp: ClampSignal, clamp_hard: bool) {
        if clamp_hard && clamp.x_set_en {
            self.state.x = clamp.x_obs;
            return;
        }
        let gate = self.cfg.activation.derivative(x_eff);
        let drive = fp_mul_add(gate, self.state.b, -self.state.eps);
        self.state.x = fp_mul_add(self.cfg.gamma, drive, self.state.x);
    }

    /// Runs the full six-stage schedule once.
    pub fn tick(&mut self, input: &CoreTickInput<'_>) -> CoreTickOutput {
        debug_assert_eq!(input.presyn.len(), self.cfg.n_presyn);
        debug_assert_eq!(input.back.len(), self.cfg.m_back);
        let x_out = self.state.x;
        let x_eff = self.effective_state(input.clamp);

        let mu = self.stage_pred(input.presyn);
        self.stage_err(x_eff, mu);
        self.stage_backsum(input.back);
        let backvec = self.stage_backvec();
        self.stage_wup(input.presyn);
        self.stage_state(x_eff, input.clamp, input.clamp_hard);

        let cycles = self.cfg.tick_cycles();
        self.state.cycles_last_tick = cycles;
        CoreTickOutput { x_out, backvec, eps_out: self.state.eps, cycles }
    }
}
