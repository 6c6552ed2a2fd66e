//! Checks shared by the integration tests and the acceptance target. Each
//! check returns a short summary on success and a description of the first
//! failure otherwise.

#![allow(dead_code)]

use pcsub_core::network::energy_of;
use pcsub_core::oracle::dense_energy;
use pcsub_core::{
    fp_mul_add, oracle_tick, run_config, run_experiment, ActivationKind, ClampMap, ClampSignal, CoreConfig,
    CoreTickInput, DenseState, Experiment, LearningCurve, Network, NetworkConfig, NeuralCore, OracleMode, Overrides,
    Prng, Schedule,
};

pub type Check = Result<String, String>;

pub fn pick<T: Copy>(rng: &mut Prng, items: &[T]) -> T {
    items[(rng.next_u64() % items.len() as u64) as usize]
}

pub fn range(rng: &mut Prng, lo: usize, hi: usize) -> usize {
    lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize
}

pub fn coin(rng: &mut Prng) -> bool {
    rng.next_u64() & 1 == 1
}

/// A random network with 2 to `max_depth` layers of width 1 to `max_width`
/// and random initial states in `[-1, 1)`.
pub fn random_network(rng: &mut Prng, max_depth: usize, max_width: usize, alpha: f32, gamma: f32) -> Network {
    let depth = range(rng, 2, max_depth);
    let sizes: Vec<usize> = (0..depth).map(|_| range(rng, 1, max_width)).collect();
    let cfg = NetworkConfig {
        activations: (0..depth).map(|_| pick(rng, &ActivationKind::ALL)).collect(),
        layer_sizes: sizes.clone(),
        alpha,
        gamma,
        clamp_hard: coin(rng),
        alpha_bias_scale: pick(rng, &[1.0, 0.5]),
        bias_frozen: coin(rng),
        seed: rng.next_u64(),
        init_scale: 0.5,
    };
    let mut net = Network::build(cfg).expect("valid random config");
    for (p, &n) in sizes.iter().enumerate() {
        net.set_layer_states(p, &rng.uniform_vec(n, -1.0, 1.0)).expect("sizes agree");
    }
    net
}

/// Clamps each layer with probability one half to random values.
pub fn random_clamp(rng: &mut Prng, sizes: &[usize]) -> ClampMap {
    let mut clamp = ClampMap::free(sizes.len());
    for (p, &n) in sizes.iter().enumerate() {
        if coin(rng) {
            clamp.set_layer(p, &rng.uniform_vec(n, -1.0, 1.0));
        }
    }
    clamp
}

/// Network ticks against bit32 oracle ticks on `nets` random networks.
pub fn oracle_equivalence(nets: usize, ticks: usize) -> Check {
    let mut compared = 0usize;
    for case in 0..nets {
        let mut rng = Prng::new(1000 + case as u64);
        let alpha = [0.0, 0.01][case % 2];
        let clamped = (case / 2) % 2 == 1;
        let mut net = random_network(&mut rng, 4, 16, alpha, 0.05);
        let sizes = net.config().layer_sizes.clone();
        let mut dense = DenseState::from_network(&net);
        for t in 0..ticks {
            let clamp = if clamped { random_clamp(&mut rng, &sizes) } else { ClampMap::free(sizes.len()) };
            net.tick(&clamp).map_err(|e| e.to_string())?;
            dense.set_clamps(&clamp);
            dense = oracle_tick(&dense, OracleMode::Bit32).map_err(|e| e.to_string())?;
            let (a, b) = (net.snapshot().bits(), dense.to_snapshot().bits());
            compared += a.len();
            if a != b {
                return Err(format!(
                    "net {case} (sizes {sizes:?}, alpha {alpha}, clamped {clamped}) differs at tick {t}"
                ));
            }
        }
    }
    Ok(format!("{nets} nets x {ticks} ticks, {compared} values bit-identical"))
}

/// Per-core cycles against `3N + M + 4` (top cores `M + 2`) for N, M in
/// `[0, max]`, and network latency against the per-core maximum.
pub fn cycle_sweep(max: usize) -> Check {
    for n in 0..=max {
        for m in 0..=max {
            let got = CoreConfig::new(n, m).tick_cycles();
            let want = 3 * n as u64 + m as u64 + 4;
            if got != want {
                return Err(format!("core N={n} M={m}: {got} cycles, expected {want}"));
            }
            let top = CoreConfig::top(m).tick_cycles();
            if top != m as u64 + 2 {
                return Err(format!("top core M={m}: {top} cycles, expected {}", m + 2));
            }
        }
    }
    let mut nets = 0;
    for n in 1..=max {
        for m in 1..=max {
            let sizes = [n, 3, m];
            let mut net = Network::build(NetworkConfig::with_sizes(&sizes)).map_err(|e| e.to_string())?;
            let report = net.tick(&ClampMap::free(3)).map_err(|e| e.to_string())?;
            let want = [m_top(3), 3 * n as u64 + m as u64 + 4, 3 * 3 + 4];
            for (p, layer) in report.per_core_cycles.iter().enumerate() {
                if layer.iter().any(|&c| c != want[p]) {
                    return Err(format!("net {sizes:?} layer {p}: {layer:?}, expected {}", want[p]));
                }
            }
            let max_core = *want.iter().max().unwrap();
            if report.network_cycles != max_core || net.tick_latency() != max_core {
                return Err(format!("net {sizes:?}: latency {}, expected {max_core}", report.network_cycles));
            }
            nets += 1;
        }
    }
    Ok(format!("{} core shapes and {nets} networks match", 2 * (max + 1) * (max + 1)))
}

fn m_top(m: usize) -> u64 {
    m as u64 + 2
}

fn close(got: f64, want: f64, rel: f64, abs: f64) -> bool {
    (got - want).abs() <= rel * got.abs().max(want.abs()) + abs
}

fn central_diff(f: impl Fn(f64) -> f64, at: f64) -> f64 {
    let h = 1e-5 * at.abs().max(1.0);
    (f(at + h) - f(at - h)) / (2.0 * h)
}

fn act64(kind: ActivationKind, v: f64) -> f64 {
    match kind {
        ActivationKind::Identity => v,
        ActivationKind::Relu => v.max(0.0),
        ActivationKind::Tanh => v.tanh(),
    }
}

/// One random gradient-check case: a middle-layer core with `n` inputs and
/// `m` lower neurons whose errors are known in closed form.
struct GradCase {
    core: NeuralCore,
    presyn: Vec<f32>,
    back: Vec<f32>,
    /// Lower-layer weights onto this neuron, their states and the rest of
    /// their predictions.
    lower_w: Vec<f32>,
    lower_x: Vec<f32>,
    lower_rest: Vec<f32>,
}

fn grad_case(rng: &mut Prng) -> GradCase {
    let n = range(rng, 1, 8);
    let m = range(rng, 0, 8);
    let act = pick(rng, &ActivationKind::ALL);
    let cfg = CoreConfig {
        activation: act,
        presyn_activation: pick(rng, &ActivationKind::ALL),
        alpha: rng.uniform(0.005, 0.05),
        gamma: rng.uniform(0.05, 0.2),
        alpha_bias_scale: pick(rng, &[1.0, 0.5]),
        ..CoreConfig::new(n, m)
    };
    // keep clear of the relu kink and of near-total cancellation in eps
    let x = loop {
        let x = rng.uniform(-1.0, 1.0);
        if x.abs() > 0.05 {
            break x;
        }
    };
    let (core, presyn) = loop {
        let core = NeuralCore::new(cfg.clone(), rng.uniform_vec(n + 1, -0.5, 0.5), x).unwrap();
        let presyn = rng.uniform_vec(n, -1.0, 1.0);
        let mu = core.stage_pred(&presyn);
        if (x - mu).abs() > 0.05 {
            break (core, presyn);
        }
    };
    let lower_w = rng.uniform_vec(m, -0.5, 0.5);
    let lower_x = rng.uniform_vec(m, -1.0, 1.0);
    let lower_rest = rng.uniform_vec(m, -0.5, 0.5);
    let fx = act.apply(x);
    let back = (0..m)
        .map(|k| {
            let eps_k = lower_x[k] - (lower_w[k] * fx + lower_rest[k]);
            lower_w[k] * eps_k
        })
        .collect();
    GradCase { core, presyn, back, lower_w, lower_x, lower_rest }
}

impl GradCase {
    /// Local energy as a function of this neuron's state and weights.
    fn energy(&self, x: f64, theta: &[f64]) -> f64 {
        let cfg = &self.core.cfg;
        let n = cfg.n_presyn;
        let mu =
            theta[..n].iter().zip(&self.presyn).map(|(&w, &u)| w * act64(cfg.presyn_activation, u as f64)).sum::<f64>()
                + theta[n];
        let own = (x - mu).powi(2);
        let fx = act64(cfg.activation, x);
        let lower: f64 = (0..cfg.m_back)
            .map(|k| {
                let e = self.lower_x[k] as f64 - (self.lower_w[k] as f64 * fx + self.lower_rest[k] as f64);
                e * e
            })
            .sum();
        own + lower
    }
}

/// State and weight increments of one core tick against finite differences of
/// the local energy.
pub fn gradient_checks(cases: usize) -> Check {
    let mut rng = Prng::new(77);
    let mut compared = 0;
    for case in 0..cases {
        let g = grad_case(&mut rng);
        let x0 = g.core.state.x as f64;
        let theta0: Vec<f64> = g.core.state.theta.iter().map(|&w| w as f64).collect();
        let (gamma, alpha) = (g.core.cfg.gamma as f64, g.core.cfg.alpha as f64);

        let mut core = g.core.clone();
        core.tick(&CoreTickInput { presyn: &g.presyn, back: &g.back, clamp: ClampSignal::FREE, clamp_hard: true });

        let dx = core.state.x as f64 - x0;
        let grad_x = central_diff(|x| g.energy(x, &theta0), x0);
        let want = -(gamma / 2.0) * grad_x;
        if !close(dx, want, 1e-3, 1e-7) {
            return Err(format!("case {case}: state increment {dx:e}, finite differences {want:e}"));
        }
        compared += 1;

        let n = g.core.cfg.n_presyn;
        for j in 0..=n {
            let rate = if j == n { alpha * g.core.cfg.alpha_bias_scale as f64 } else { alpha };
            let dw = core.state.theta[j] as f64 - theta0[j];
            let grad_w = central_diff(
                |w| {
                    let mut t = theta0.clone();
                    t[j] = w;
                    g.energy(x0, &t)
                },
                theta0[j],
            );
            let want = -(rate / 2.0) * grad_w;
            if !close(dw, want, 1e-3, 1e-7) {
                return Err(format!("case {case}: weight {j} increment {dw:e}, finite differences {want:e}"));
            }
            compared += 1;
        }
    }
    Ok(format!("{cases} configurations, {compared} increments within 1e-3"))
}

fn random_core(rng: &mut Prng) -> (NeuralCore, Vec<f32>, Vec<f32>) {
    let n = range(rng, 0, 6);
    let m = range(rng, 0, 6);
    let cfg = CoreConfig {
        activation: pick(rng, &ActivationKind::ALL),
        presyn_activation: pick(rng, &ActivationKind::ALL),
        alpha: rng.uniform(0.0, 0.1),
        gamma: rng.uniform(0.0, 0.3),
        has_upper: n > 0 || coin(rng),
        ..CoreConfig::new(n, m)
    };
    let core = NeuralCore::new(cfg, rng.uniform_vec(n + 1, -1.0, 1.0), rng.uniform(-1.0, 1.0)).unwrap();
    (core, rng.uniform_vec(n, -1.0, 1.0), rng.uniform_vec(m, -1.0, 1.0))
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Hard and soft clamp properties on random cores and networks.
pub fn clamp_semantics(cases: usize) -> Check {
    let mut rng = Prng::new(4242);
    for case in 0..cases {
        let (core, presyn, back) = random_core(&mut rng);
        let x_obs = rng.uniform(-1.0, 1.0);
        let obs = ClampSignal::observe(x_obs);
        let input = |clamp, clamp_hard| CoreTickInput { presyn: &presyn, back: &back, clamp, clamp_hard };

        // A core whose register already holds x_obs, running free.
        let mut twin = core.clone();
        twin.state.x = x_obs;
        let twin_out = twin.tick(&input(ClampSignal::FREE, true));

        // Hard: the register is overwritten; everything else sees x_obs.
        let mut hard = core.clone();
        let mut hard_out = hard.tick(&input(obs, true));
        if hard.state.x.to_bits() != x_obs.to_bits() {
            return Err(format!("case {case}: hard clamp left x = {}, observed {x_obs}", hard.state.x));
        }
        if hard_out.eps_out.to_bits() != twin_out.eps_out.to_bits()
            || bits(&hard_out.backvec) != bits(&twin_out.backvec)
            || bits(&hard.state.theta) != bits(&twin.state.theta)
        {
            return Err(format!("case {case}: hard clamp tick differs from a core holding x_obs"));
        }
        // Absorption: further clamped ticks keep the register pinned.
        for _ in 0..3 {
            hard_out = hard.tick(&input(obs, true));
            if hard.state.x.to_bits() != x_obs.to_bits() {
                return Err(format!("case {case}: hard clamp not absorbing"));
            }
        }
        let _ = hard_out;

        // Soft: the tick computes with x_obs, the register integrates from its
        // stored value.
        let mut soft = core.clone();
        let soft_out = soft.tick(&input(obs, false));
        if soft_out.eps_out.to_bits() != twin_out.eps_out.to_bits()
            || bits(&soft_out.backvec) != bits(&twin_out.backvec)
            || bits(&soft.state.theta) != bits(&twin.state.theta)
        {
            return Err(format!("case {case}: soft clamp did not use x_obs during the tick"));
        }
        let drive = fp_mul_add(core.cfg.activation.derivative(x_obs), soft.state.b, -soft.state.eps);
        let want = fp_mul_add(core.cfg.gamma, drive, core.state.x);
        if soft.state.x.to_bits() != want.to_bits() {
            return Err(format!("case {case}: soft clamp state {} expected {want}", soft.state.x));
        }
        if soft_out.x_out.to_bits() != core.state.x.to_bits() {
            return Err(format!("case {case}: soft clamp changed the presented state"));
        }

        // Without x_set_en the clamp mode is irrelevant.
        let mut a = core.clone();
        let mut b = core.clone();
        let idle = ClampSignal { x_set_en: false, x_obs };
        a.tick(&input(idle, true));
        b.tick(&input(idle, false));
        let mut free = core.clone();
        free.tick(&input(ClampSignal::FREE, true));
        if a.state != b.state || a.state != free.state {
            return Err(format!("case {case}: disabled clamp changed the tick"));
        }
    }

    // Network level: hard-clamped layers hold their observations after a tick.
    for case in 0..cases / 4 {
        let mut net = random_network(&mut rng, 4, 8, 0.01, 0.1);
        net.set_clamp_hard(true);
        let sizes = net.config().layer_sizes.clone();
        let clamp = random_clamp(&mut rng, &sizes);
        let report = net.tick(&clamp).map_err(|e| e.to_string())?;
        for (p, layer) in clamp.layers.iter().enumerate() {
            if let Some(signals) = layer {
                let obs: Vec<f32> = signals.iter().map(|s| s.x_obs).collect();
                if bits(&report.states[p]) != bits(&obs) {
                    return Err(format!("network case {case}: layer {p} not pinned"));
                }
            }
        }
    }
    Ok(format!("{cases} random cores and {} networks", cases / 4))
}

/// Energy never rises by more than `slack` per tick on random 2-4-3 identity
/// networks with both boundaries hard-clamped.
pub fn energy_descent(nets: usize, ticks: usize, slack: f64) -> Check {
    let mut worst = f64::NEG_INFINITY;
    for case in 0..nets {
        let mut rng = Prng::new(9000 + case as u64);
        let cfg = NetworkConfig {
            alpha: 0.0,
            gamma: 0.01,
            clamp_hard: true,
            seed: rng.next_u64(),
            ..NetworkConfig::with_sizes(&[2, 4, 3])
        };
        let mut net = Network::build(cfg).map_err(|e| e.to_string())?;
        let mut clamp = ClampMap::free(3);
        clamp.set_layer(0, &rng.uniform_vec(2, -1.0, 1.0)).set_layer(2, &rng.uniform_vec(3, -1.0, 1.0));
        net.tick(&clamp).map_err(|e| e.to_string())?;
        let mut prev = net.energy();
        for t in 1..ticks {
            net.tick(&clamp).map_err(|e| e.to_string())?;
            let e = net.energy();
            worst = worst.max(e - prev);
            if e > prev + slack {
                return Err(format!("net {case}: energy rose {prev:.9} -> {e:.9} at tick {t}"));
            }
            prev = e;
        }
    }
    Ok(format!("{nets} nets x {ticks} ticks, largest step {worst:+.3e}"))
}

/// Network energy against the dense oracle's energy on random networks.
pub fn energy_matches_oracle(nets: usize) -> Check {
    let mut rng = Prng::new(31);
    for case in 0..nets {
        let mut net = random_network(&mut rng, 4, 16, 0.01, 0.05);
        let clamp = random_clamp(&mut rng, &net.config().layer_sizes.clone());
        for _ in 0..5 {
            net.tick(&clamp).map_err(|e| e.to_string())?;
        }
        let a = net.energy();
        let b = dense_energy(&DenseState::from_network(&net));
        let c = energy_of(&net.snapshot(), &net.config().activations);
        if !close(a, b, 1e-12, 1e-12) || a != c {
            return Err(format!("net {case}: energy {a} vs oracle {b}"));
        }
    }
    Ok(format!("{nets} nets"))
}

pub fn relative_drop(from: f64, to: f64) -> f64 {
    1.0 - to / from
}

pub fn curve(name: &str) -> Result<LearningCurve, String> {
    run_experiment(name, &Overrides::default()).map(|o| o.curve).map_err(|e| e.to_string())
}

pub fn relu_teacher_student() -> Check {
    let c = curve("relu_ts")?;
    let (e0, e) = (c.initial(), c.last());
    let drop = relative_drop(e0, e);
    let summary = format!("epoch 0 {e0:.6} -> epoch 25 {e:.6} ({:.1}% lower)", 100.0 * drop);
    if e < 0.05 && drop >= 0.90 && !c.any_diverged() {
        Ok(summary)
    } else {
        Err(summary)
    }
}

pub fn tanh_teacher_student() -> Check {
    let c = curve("tanh_ts")?;
    let peak = c.mse[0].max(c.mse[1]);
    let (best_epoch, best) =
        (1..=6).map(|k| (k, c.mse[k])).fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let summary = format!(
        "peak {peak:.6}, by epoch {best_epoch} {best:.6} ({:.0}x lower), epoch 25 {:.6}",
        peak / best,
        c.last()
    );
    if peak / best >= 100.0 && c.last() < 0.05 && !c.any_diverged() {
        Ok(summary)
    } else {
        Err(summary)
    }
}

pub fn scaling_sweep() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ["scale_small", "scale_medium", "scale_large"] {
        let c = curve(name)?;
        let drop1 = relative_drop(c.mse[0], c.mse[1]);
        ok &= drop1 >= 0.5 && c.last() <= 0.05 && !c.any_diverged();
        parts.push(format!("{name} {:.0}% by epoch 1, final {:.6}", 100.0 * drop1, c.last()));
    }
    let summary = parts.join("; ");
    if ok {
        Ok(summary)
    } else {
        Err(summary)
    }
}

/// CSV bytes for `name` with the given schedule inside a rayon pool of
/// `threads` workers.
pub fn csv_with(name: &str, schedule: Schedule, threads: usize) -> Result<String, String> {
    let exp = Experiment::ALL.into_iter().find(|e| e.name() == name).ok_or("unknown experiment")?;
    let mut cfg = exp.config();
    cfg.protocol.schedule = schedule;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
    pool.install(|| run_config(&cfg)).map(|o| o.csv()).map_err(|e| e.to_string())
}

pub fn determinism(name: &str) -> Check {
    let reference = csv_with(name, Schedule::Sequential, 1)?;
    let runs = [
        ("rerun", csv_with(name, Schedule::Sequential, 1)?),
        ("reversed", csv_with(name, Schedule::Reversed, 1)?),
        ("parallel x1", csv_with(name, Schedule::Parallel, 1)?),
        ("parallel x4", csv_with(name, Schedule::Parallel, 4)?),
    ];
    for (label, csv) in &runs {
        if csv != &reference {
            return Err(format!("{name}: {label} CSV differs"));
        }
    }
    Ok(format!("{name}: {} byte CSV identical over {} runs", reference.len(), runs.len() + 1))
}
