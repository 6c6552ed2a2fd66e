//! Line-oriented `key = value` configuration.
//!
//! ```text
//! # comment
//! layer_sizes = 2, 4, 3
//! activations = identity, relu, identity
//! gamma = 0.1
//! ```
//!
//! Lists are comma separated. Unknown keys, malformed values and constraint
//! violations are all reported together, each with its line number. Keys that
//! are absent take their defaults and are listed in a logged notice.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, ParseError, Result};
use crate::harness::{TeacherKind, TeacherSpec, TrainProtocol};
use crate::network::{NetworkConfig, Schedule};
use crate::scalar::ActivationKind;

pub const KEYS: &[&str] = &[
    "name",
    "layer_sizes",
    "activations",
    "alpha",
    "gamma",
    "clamp_hard",
    "alpha_bias_scale",
    "bias_frozen",
    "seed",
    "init_scale",
    "infer_ticks",
    "learn_ticks",
    "epochs",
    "eval_ticks",
    "reset_between_samples",
    "schedule",
    "teacher",
    "teacher_hidden",
    "teacher_seed",
    "weight_scale",
    "n_samples",
    "out_dir",
    "checkpoint",
];

/// A fully resolved configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub network: NetworkConfig,
    pub protocol: TrainProtocol,
    pub teacher: TeacherSpec,
    pub n_samples: usize,
    pub out_dir: Option<String>,
    pub checkpoint: Option<String>,
    /// Keys that were not given and took their default.
    pub defaulted: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let network = NetworkConfig::default();
        Self {
            name: "run".into(),
            teacher: TeacherSpec {
                kind: TeacherKind::Relu,
                input_dim: network.layer_sizes[0],
                hidden_dim: network.layer_sizes[1],
                output_dim: network.layer_sizes[2],
                seed: 1,
                weight_scale: 1.0,
            },
            network,
            protocol: TrainProtocol::default(),
            n_samples: 64,
            out_dir: None,
            checkpoint: None,
            defaulted: Vec::new(),
        }
    }
}

struct Entry {
    line: usize,
    value: String,
}

fn tokenize(text: &str, errors: &mut Vec<ParseError>) -> BTreeMap<String, Entry> {
    let mut entries = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            errors.push(ParseError { line, message: format!("expected `key = value`, got `{content}`") });
            continue;
        };
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            errors.push(ParseError { line, message: format!("unknown key `{key}`") });
            continue;
        }
        if let Some(prev) = entries.get(&key) {
            let prev: &Entry = prev;
            errors
                .push(ParseError { line, message: format!("duplicate key `{key}` (first set on line {})", prev.line) });
            continue;
        }
        entries.insert(key, Entry { line, value: value.trim().to_string() });
    }
    entries
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, got `{s}`")),
    }
}

fn parse_scalar<T: FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse::<T>().map_err(|_| format!("expected a {}, got `{s}`", std::any::type_name::<T>()))
}

fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',').map(|item| parse_scalar::<T>(item.trim())).collect()
}

struct Reader {
    entries: BTreeMap<String, Entry>,
    errors: Vec<ParseError>,
    defaulted: Vec<String>,
}

impl Reader {
    fn field<T>(&mut self, key: &str, target: &mut T, parse: impl Fn(&str) -> std::result::Result<T, String>) {
        match self.entries.get(key) {
            Some(entry) => match parse(&entry.value) {
                Ok(v) => *target = v,
                Err(message) => self.errors.push(ParseError { line: entry.line, message: format!("{key}: {message}") }),
            },
            None => self.defaulted.push(key.to_string()),
        }
    }

    fn check(&mut self, key: &str, ok: bool, message: &str) {
        if !ok {
            let line = self.entries.get(key).map(|e| e.line).unwrap_or(0);
            self.errors.push(ParseError { line, message: format!("{key}: {message}") });
        }
    }

    fn given(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }
}

impl ExperimentConfig {
    /// Parses and validates `text` on top of [`ExperimentConfig::default`].
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_onto(text, Self::default())
    }

    /// Parses `text`, overriding only the keys it sets on `base`.
    pub fn parse_onto(text: &str, base: Self) -> Result<Self> {
        let mut errors = Vec::new();
        let entries = tokenize(text, &mut errors);
        let mut r = Reader { entries, errors, defaulted: Vec::new() };
        let mut c = base;

        r.field("name", &mut c.name, |s| Ok(s.to_string()));
        r.field("layer_sizes", &mut c.network.layer_sizes, parse_list::<usize>);
        r.field("activations", &mut c.network.activations, |s| {
            s.split(',').map(|a| a.parse::<ActivationKind>().map_err(|e| e.to_string())).collect()
        });
        r.field("alpha", &mut c.network.alpha, parse_scalar::<f32>);
        r.field("gamma", &mut c.network.gamma, parse_scalar::<f32>);
        r.field("clamp_hard", &mut c.network.clamp_hard, parse_bool);
        r.field("alpha_bias_scale", &mut c.network.alpha_bias_scale, parse_scalar::<f32>);
        r.field("bias_frozen", &mut c.network.bias_frozen, parse_bool);
        r.field("seed", &mut c.network.seed, parse_scalar::<u64>);
        r.field("init_scale", &mut c.network.init_scale, parse_scalar::<f32>);
        r.field("infer_ticks", &mut c.protocol.infer_ticks, parse_scalar::<usize>);
        r.field("learn_ticks", &mut c.protocol.learn_ticks, parse_scalar::<usize>);
        r.field("epochs", &mut c.protocol.epochs, parse_scalar::<usize>);
        r.field("eval_ticks", &mut c.protocol.eval_ticks, parse_scalar::<usize>);
        r.field("reset_between_samples", &mut c.protocol.reset_between_samples, parse_bool);
        r.field("schedule", &mut c.protocol.schedule, |s| s.parse::<Schedule>().map_err(|e| e.to_string()));
        r.field("teacher", &mut c.teacher.kind, |s| s.parse::<TeacherKind>().map_err(|e| e.to_string()));
        r.field("teacher_hidden", &mut c.teacher.hidden_dim, parse_scalar::<usize>);
        r.field("teacher_seed", &mut c.teacher.seed, parse_scalar::<u64>);
        r.field("weight_scale", &mut c.teacher.weight_scale, parse_scalar::<f32>);
        r.field("n_samples", &mut c.n_samples, parse_scalar::<usize>);
        let mut out_dir = c.out_dir.clone().unwrap_or_default();
        r.field("out_dir", &mut out_dir, |s| Ok(s.to_string()));
        c.out_dir = (!out_dir.is_empty()).then_some(out_dir);
        let mut checkpoint = c.checkpoint.clone().unwrap_or_default();
        r.field("checkpoint", &mut checkpoint, |s| Ok(s.to_string()));
        c.checkpoint = (!checkpoint.is_empty()).then_some(checkpoint);

        // Activations follow the layer count when only sizes are given.
        let sizes = c.network.layer_sizes.clone();
        if r.given("layer_sizes") && !r.given("activations") && c.network.activations.len() != sizes.len() {
            c.network.activations = default_activations(sizes.len());
        }
        if !sizes.is_empty() {
            c.teacher.input_dim = sizes[0];
            c.teacher.output_dim = sizes[sizes.len() - 1];
            if r.given("layer_sizes") && !r.given("teacher_hidden") && sizes.len() > 2 {
                c.teacher.hidden_dim = sizes[1];
            }
        }

        let net = &c.network;
        r.check("layer_sizes", sizes.len() >= 2, "at least 2 layers are required");
        r.check("layer_sizes", sizes.iter().all(|&n| n >= 1), "every layer needs at least 1 neuron");
        r.check("activations", net.activations.len() == sizes.len(), "need one activation per layer");
        r.check("alpha", net.alpha.is_finite() && net.alpha >= 0.0, "must be finite and >= 0");
        r.check("gamma", net.gamma.is_finite() && net.gamma >= 0.0, "must be finite and >= 0");
        r.check("alpha_bias_scale", net.alpha_bias_scale.is_finite(), "must be finite");
        r.check("init_scale", net.init_scale.is_finite() && net.init_scale >= 0.0, "must be finite and >= 0");
        r.check("infer_ticks", c.protocol.infer_ticks >= 1, "must be >= 1");
        r.check("epochs", c.protocol.epochs >= 1, "must be >= 1");
        r.check("eval_ticks", c.protocol.eval_ticks >= 1, "must be >= 1");
        r.check("teacher_hidden", c.teacher.hidden_dim >= 1, "must be >= 1");
        r.check(
            "weight_scale",
            c.teacher.weight_scale.is_finite() && c.teacher.weight_scale >= 0.0,
            "must be finite and >= 0",
        );
        r.check("n_samples", c.n_samples >= 1, "must be >= 1");

        if !r.errors.is_empty() {
            r.errors.sort_by_key(|e| e.line);
            return Err(Error::Parse(r.errors));
        }
        if !r.defaulted.is_empty() {
            log::info!("config: using defaults for {}", r.defaulted.join(", "));
        }
        c.defaulted = r.defaulted;
        Ok(c)
    }

    /// Serializes every key, so `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let n = &self.network;
        let p = &self.protocol;
        let t = &self.teacher;
        let join = |v: Vec<String>| v.join(", ");
        let mut lines = vec![
            format!("name = {}", self.name),
            format!("layer_sizes = {}", join(n.layer_sizes.iter().map(ToString::to_string).collect())),
            format!("activations = {}", join(n.activations.iter().map(ToString::to_string).collect())),
            format!("alpha = {}", n.alpha),
            format!("gamma = {}", n.gamma),
            format!("clamp_hard = {}", n.clamp_hard),
            format!("alpha_bias_scale = {}", n.alpha_bias_scale),
            format!("bias_frozen = {}", n.bias_frozen),
            format!("seed = {}", n.seed),
            format!("init_scale = {}", n.init_scale),
            format!("infer_ticks = {}", p.infer_ticks),
            format!("learn_ticks = {}", p.learn_ticks),
            format!("epochs = {}", p.epochs),
            format!("eval_ticks = {}", p.eval_ticks),
            format!("reset_between_samples = {}", p.reset_between_samples),
            format!("schedule = {}", p.schedule),
            format!("teacher = {}", t.kind.name()),
            format!("teacher_hidden = {}", t.hidden_dim),
            format!("teacher_seed = {}", t.seed),
            format!("weight_scale = {}", t.weight_scale),
            format!("n_samples = {}", self.n_samples),
        ];
        if let Some(d) = &self.out_dir {
            lines.push(format!("out_dir = {d}"));
        }
        if let Some(c) = &self.checkpoint {
            lines.push(format!("checkpoint = {c}"));
        }
        lines.join("\n") + "\n"
    }
}

fn default_activations(depth: usize) -> Vec<ActivationKind> {
    (0..depth).map(|p| if p == 0 || p + 1 == depth { ActivationKind::Identity } else { ActivationKind::Relu }).collect()
}

/// Parses a configuration file's text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::parse(text)
}

/// Command-line adjustments applied on top of a loaded config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    /// Sets the network seed to `S` and the teacher seed to `S + 1`.
    pub seed: Option<u64>,
    /// Extra `key = value` lines in config syntax.
    pub settings: Vec<String>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if !self.settings.is_empty() {
            let text = self.settings.join("\n");
            let defaulted = std::mem::take(&mut cfg.defaulted);
            *cfg = ExperimentConfig::parse_onto(&text, cfg.clone())?;
            cfg.defaulted = defaulted;
        }
        if let Some(seed) = self.seed {
            cfg.network.seed = seed;
            cfg.teacher.seed = seed.wrapping_add(1);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_sizes_list() {
        let c = parse_config("layer_sizes = 2,4,3").unwrap();
        assert_eq!(c.network.layer_sizes, vec![2, 4, 3]);
        assert_eq!(c.network.activations.len(), 3);
    }

    #[test]
    fn negative_gamma_rejected() {
        let err = parse_config("gamma = -0.1").unwrap_err();
        let Error::Parse(errors) = err else { panic!("expected parse error") };
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].line, 1);
        assert!(errors[0].message.contains("gamma"));
    }

    #[test]
    fn empty_file_is_all_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.network, NetworkConfig::default());
        assert_eq!(c.defaulted.len(), KEYS.len());
        let c = parse_config("# only a comment\n\n").unwrap();
        assert_eq!(c.defaulted.len(), KEYS.len());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "alpha = 0.1\nbogus = 3\nepochs = many\nlayer_sizes = 2\nno equals sign\n";
        let Error::Parse(errors) = parse_config(text).unwrap_err() else { panic!() };
        let lines: Vec<usize> = errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3, 4, 5]);
        assert!(errors[0].message.contains("unknown key `bogus`"));
    }

    #[test]
    fn duplicate_key_rejected() {
        assert!(parse_config("seed = 1\nseed = 2").is_err());
    }

    #[test]
    fn comments_and_whitespace() {
        let c = parse_config("  alpha=0.25   # trailing\nclamp_hard = off\nactivations = identity, tanh, identity\n")
            .unwrap();
        assert_eq!(c.network.alpha, 0.25);
        assert!(!c.network.clamp_hard);
        assert_eq!(c.network.activations[1], ActivationKind::Tanh);
    }

    #[test]
    fn activation_count_must_match() {
        assert!(parse_config("layer_sizes = 2, 3\nactivations = identity").is_err());
    }

    #[test]
    fn text_round_trip() {
        let c = parse_config("name = x\nlayer_sizes = 4, 8, 4\nteacher = tanh\nout_dir = somewhere\n").unwrap();
        let again = parse_config(&c.to_text()).unwrap();
        assert_eq!(again.network, c.network);
        assert_eq!(again.teacher, c.teacher);
        assert_eq!(again.protocol, c.protocol);
        assert_eq!(again.out_dir.as_deref(), Some("somewhere"));
        assert!(again.defaulted.contains(&"checkpoint".to_string()));
    }

    #[test]
    fn teacher_dims_follow_network() {
        let c = parse_config("layer_sizes = 8, 16, 8").unwrap();
        assert_eq!((c.teacher.input_dim, c.teacher.hidden_dim, c.teacher.output_dim), (8, 16, 8));
    }

    #[test]
    fn overrides_apply() {
        let mut c = ExperimentConfig::default();
        Overrides { seed: Some(9), settings: vec!["gamma = 0.2".into()] }.apply(&mut c).unwrap();
        assert_eq!((c.network.seed, c.teacher.seed, c.network.gamma), (9, 10, 0.2));
        assert!(Overrides { seed: None, settings: vec!["nope = 1".into()] }.apply(&mut c).is_err());
    }
}
