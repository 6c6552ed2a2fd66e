//! `PCSUB1` checkpoints.
//!
//! Layout:
//!
//! ```text
//! PCSUB1 <L> <n_top> ... <n_bottom>\n
//! weights: little-endian binary32, layer-major from the top layer down,
//!          row-major within a layer (row = postsynaptic neuron,
//!          columns = presynaptic lanes then bias)
//! states:  little-endian binary32, layer-major from the top layer down
//! ```
//!
//! `L` is the number of layers below the top one, so the header lists `L + 1`
//! widths. The top layer has no presynaptic lanes and stores a single (unused)
//! bias column.
//! Values are copied bit for bit, NaN payloads included.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{Network, NetworkConfig};

pub const MAGIC: &str = "PCSUB1";

/// Encodes weights and states of `net`.
pub fn encode_checkpoint(net: &Network) -> Vec<u8> {
    let snap = net.snapshot();
    let sizes = &snap.layer_sizes;
    let mut header = format!("{MAGIC} {}", sizes.len() - 1);
    for n in sizes {
        header.push_str(&format!(" {n}"));
    }
    header.push('\n');

    let mut out = header.into_bytes();
    for v in snap.theta.iter().chain(&snap.x).flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decoded checkpoint contents.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointData {
    pub layer_sizes: Vec<usize>,
    pub theta: Vec<Vec<f32>>,
    pub x: Vec<Vec<f32>>,
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<CheckpointData> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint(format!("missing header line; expected magic `{MAGIC}`")))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::Checkpoint(format!("header is not text; expected magic `{MAGIC}`")))?;
    let mut fields = header.split_ascii_whitespace();
    match fields.next() {
        Some(MAGIC) => {}
        other => return Err(Error::Checkpoint(format!("bad magic {:?}; expected `{MAGIC}`", other.unwrap_or("")))),
    }
    let numbers = fields
        .map(|f| f.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Checkpoint("header dimensions are not integers".into()))?;
    let Some((&top, sizes)) = numbers.split_first() else {
        return Err(Error::Checkpoint("header lists no dimensions".into()));
    };
    if sizes.len() != top + 1 || sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::Checkpoint(format!("inconsistent header `{header}`")));
    }

    let cols = |p: usize| if p == 0 { 1 } else { sizes[p - 1] + 1 };
    let n_weights: usize = (0..sizes.len()).map(|p| sizes[p] * cols(p)).sum();
    let n_states: usize = sizes.iter().sum();
    let body = &bytes[newline + 1..];
    let expected = 4 * (n_weights + n_states);
    if body.len() != expected {
        return Err(Error::Checkpoint(format!(
            "body is {} bytes, header `{header}` needs {expected}{}",
            body.len(),
            if body.len() < expected { " (truncated)" } else { "" }
        )));
    }

    let mut values = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let theta = (0..sizes.len()).map(|p| values.by_ref().take(sizes[p] * cols(p)).collect()).collect();
    let x = sizes.iter().map(|&n| values.by_ref().take(n).collect()).collect();
    Ok(CheckpointData { layer_sizes: sizes.to_vec(), theta, x })
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(net))?;
    Ok(())
}

/// Loads a checkpoint into a network built from `cfg` (sizes must agree). With
/// no config the network gets identity activations and default rates. Errors,
/// bottom-up sums and latched products start at zero.
pub fn load_checkpoint(path: impl AsRef<Path>, cfg: Option<&NetworkConfig>) -> Result<Network> {
    let bytes = fs::read(path)?;
    network_from_checkpoint(&decode_checkpoint(&bytes)?, cfg)
}

pub fn network_from_checkpoint(data: &CheckpointData, cfg: Option<&NetworkConfig>) -> Result<Network> {
    let cfg = match cfg {
        Some(cfg) => {
            if cfg.layer_sizes != data.layer_sizes {
                return Err(Error::Checkpoint(format!(
                    "checkpoint layer sizes {:?} do not match configured {:?}",
                    data.layer_sizes, cfg.layer_sizes
                )));
            }
            cfg.clone()
        }
        None => NetworkConfig::with_sizes(&data.layer_sizes),
    };
    let mut net = Network::build(cfg)?;
    net.reset_states();
    for p in 0..data.layer_sizes.len() {
        net.set_layer_weights(p, &data.theta[p])?;
        net.set_layer_states(p, &data.x[p])?;
    }
    Ok(net)
}
