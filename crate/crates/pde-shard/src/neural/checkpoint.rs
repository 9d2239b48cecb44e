//! Network checkpoint files: architecture, weights, and optional optimizer
//! state, round-tripped bit-exactly.
//!
//! # Layout (version 1, little-endian)
//!
//! ```text
//! magic "PDSHNNET", u32 version
//! u32 layer count
//! per layer: u32 in_ch, u32 out_ch, u32 k,
//!            f64 weights[out*in*k*k], f64 bias[out]
//! u32 optimizer flag (0 = none, 1 = present)
//! if present: u64 t, f64 eta, rho1, rho2, eps,
//!             f64 m[param_count], f64 v[param_count]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{put_f64, put_u32, put_u64, Cursor};

use super::adam::{AdamConfig, AdamState};
use super::conv::{ConvLayer, ConvNet};

const CKPT_MAGIC: [u8; 8] = *b"PDSHNNET";
const CKPT_VERSION: u32 = 1;

/// A loaded checkpoint: the network and, when saved, its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: ConvNet,
    pub adam: Option<AdamState>,
}

pub fn write_checkpoint(
    path: impl AsRef<Path>,
    net: &ConvNet,
    adam: Option<&AdamState>,
) -> Result<()> {
    let path = path.as_ref();
    if let Some(state) = adam {
        if state.m.len() != net.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer state covers {} parameters, network has {}",
                state.m.len(),
                net.param_count()
            )));
        }
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(&CKPT_MAGIC);
    put_u32(&mut buf, CKPT_VERSION);
    put_u32(&mut buf, net.n_layers() as u32);
    for layer in net.layers() {
        put_u32(&mut buf, layer.in_ch() as u32);
        put_u32(&mut buf, layer.out_ch() as u32);
        put_u32(&mut buf, layer.k() as u32);
        for v in layer.weights() {
            put_f64(&mut buf, *v);
        }
        for v in layer.bias() {
            put_f64(&mut buf, *v);
        }
    }
    match adam {
        Some(state) => {
            put_u32(&mut buf, 1);
            put_u64(&mut buf, state.t);
            for v in [state.cfg.eta, state.cfg.rho1, state.cfg.rho2, state.cfg.eps] {
                put_f64(&mut buf, v);
            }
            for v in state.m.iter().chain(state.v.iter()) {
                put_f64(&mut buf, *v);
            }
        }
        None => put_u32(&mut buf, 0),
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(&buf).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut cur = Cursor {
        reader: &mut reader,
        path,
    };
    let mut magic = [0u8; 8];
    cur.exact(&mut magic)?;
    if magic != CKPT_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic,
            expected: CKPT_MAGIC,
        });
    }
    let version = cur.u32()?;
    if version != CKPT_VERSION {
        return Err(Error::BadVersion {
            path: path.to_path_buf(),
            found: version,
            expected: CKPT_VERSION,
        });
    }
    let n_layers = cur.u32()? as usize;
    if n_layers == 0 || n_layers > 1024 {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint declares {n_layers} layers"
        )));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let in_ch = cur.u32()? as usize;
        let out_ch = cur.u32()? as usize;
        let k = cur.u32()? as usize;
        let mut layer = ConvLayer::zeros(in_ch, out_ch, k)?;
        for i in 0..layer.weights().len() {
            layer.weights_mut()[i] = cur.f64()?;
        }
        for i in 0..layer.bias().len() {
            layer.bias_mut()[i] = cur.f64()?;
        }
        layers.push(layer);
    }
    let net = ConvNet::from_layers(layers)?;
    let adam = match cur.u32()? {
        0 => None,
        _ => {
            let t = cur.u64()?;
            let cfg = AdamConfig {
                eta: cur.f64()?,
                rho1: cur.f64()?,
                rho2: cur.f64()?,
                eps: cur.f64()?,
            };
            let mut state = AdamState::new(net.param_count(), cfg)?;
            state.t = t;
            for i in 0..state.m.len() {
                state.m[i] = cur.f64()?;
            }
            for i in 0..state.v.len() {
                state.v[i] = cur.f64()?;
            }
            Some(state)
        }
    };
    Ok(Checkpoint { net, adam })
}
