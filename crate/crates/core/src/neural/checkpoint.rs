//! Little-endian binary checkpoints.
//!
//! Layout: magic `CISE`, `u32` version, `u32` layer count, per layer
//! `(u32 in, u32 out, u32 kernel, u8 padding, u8 activation)`, `u64` rng seed,
//! `u8` optimizer flag (with `u64 step` and four `f64` hyper-parameters when set),
//! then every parameter as `f64` (weights then bias, layer by layer), followed by
//! the optimizer's first and second moments in the same order when present.
//! Values are widened to `f64`, so `f32` and `f64` networks both round-trip exactly.

use std::fs;
use std::path::Path;

use super::{Activation, AdamConfig, AdamState, LayerSpec, Network, Padding};
use crate::error::{ensure, Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"CISE";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub network: Network<T>,
    pub optimizer: Option<AdamState<T>>,
}

impl<T: Real> Checkpoint<T> {
    /// Copy the stored parameters into `net`, which must have the same layer structure.
    pub fn restore_into(&self, net: &mut Network<T>) -> Result<()> {
        ensure!(
            net.specs() == self.network.specs(),
            Error::Checkpoint(format!(
                "structural mismatch: checkpoint has {} layers {:?}, network has {} layers {:?}",
                self.network.layers().len(),
                self.network.specs(),
                net.layers().len(),
                net.specs()
            ))
        );
        *net = self.network.clone();
        Ok(())
    }
}

pub fn encode_checkpoint<T: Real>(net: &Network<T>, optimizer: Option<&AdamState<T>>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * net.param_count() * if optimizer.is_some() { 3 } else { 1 });
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for s in net.specs() {
        for v in [s.in_channels, s.out_channels, s.kernel] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.push(match s.padding {
            Padding::Causal => 0,
            Padding::Centered => 1,
        });
        out.push(match s.activation {
            Activation::Tanh => 0,
            Activation::Linear => 1,
        });
    }
    out.extend_from_slice(&net.rng_seed.to_le_bytes());
    out.push(u8::from(optimizer.is_some()));
    if let Some(opt) = optimizer {
        out.extend_from_slice(&opt.step.to_le_bytes());
        for v in [opt.config.lr, opt.config.beta1, opt.config.beta2, opt.config.epsilon] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut put = |values: &[T]| {
        for v in values {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    };
    for p in net.params() {
        put(p);
    }
    if let Some(opt) = optimizer {
        for group in opt.m.iter().chain(&opt.v) {
            put(group);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        ensure!(
            self.pos + n <= self.bytes.len(),
            Error::Checkpoint(format!("truncated file: need {} bytes at offset {}", n, self.pos))
        );
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn fill<T: Real>(&mut self, dst: &mut [T]) -> Result<()> {
        for d in dst {
            *d = T::lit(self.f64()?);
        }
        Ok(())
    }
}

/// Decode a checkpoint; returns it together with the number of bytes consumed.
pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<(Checkpoint<T>, usize)> {
    let mut r = Reader { bytes, pos: 0 };
    ensure!(r.take(4)? == MAGIC, Error::Checkpoint("bad magic bytes".into()));
    let version = r.u32()?;
    ensure!(
        version == VERSION,
        Error::Checkpoint(format!("unsupported version {version} (expected {VERSION})"))
    );
    let n_layers = r.u32()? as usize;
    ensure!(n_layers <= 4096, Error::Checkpoint(format!("implausible layer count {n_layers}")));
    let mut specs = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let (in_channels, out_channels, kernel) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let padding = match r.u8()? {
            0 => Padding::Causal,
            1 => Padding::Centered,
            p => return Err(Error::Checkpoint(format!("unknown padding tag {p}"))),
        };
        let activation = match r.u8()? {
            0 => Activation::Tanh,
            1 => Activation::Linear,
            a => return Err(Error::Checkpoint(format!("unknown activation tag {a}"))),
        };
        specs.push(LayerSpec { in_channels, out_channels, kernel, padding, activation });
    }
    let rng_seed = r.u64()?;
    let opt_header = match r.u8()? {
        0 => None,
        1 => {
            let step = r.u64()?;
            let config = AdamConfig { lr: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, epsilon: r.f64()? };
            Some((step, config))
        }
        f => return Err(Error::Checkpoint(format!("bad optimizer flag {f}"))),
    };

    let total: usize = specs.iter().map(|s| s.out_channels * (s.in_channels * s.kernel + 1)).sum();
    let needed = total * 8 * if opt_header.is_some() { 3 } else { 1 };
    ensure!(
        r.pos + needed <= bytes.len(),
        Error::Checkpoint(format!("truncated parameter block: need {needed} bytes, have {}", bytes.len() - r.pos))
    );

    let mut network = Network::from_specs(&specs, rng_seed).map_err(|e| Error::Checkpoint(e.to_string()))?;
    for p in network.params_mut() {
        r.fill(p)?;
    }
    let optimizer = match opt_header {
        None => None,
        Some((step, config)) => {
            let mut state = AdamState::new(&network.params(), config);
            state.step = step;
            for group in state.m.iter_mut().chain(state.v.iter_mut()) {
                r.fill(group)?;
            }
            Some(state)
        }
    };
    Ok((Checkpoint { network, optimizer }, r.pos))
}

pub fn checkpoint_save<T: Real>(net: &Network<T>, optimizer: Option<&AdamState<T>>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(net, optimizer)).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_load<T: Real>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (ckpt, used) = decode_checkpoint(&bytes)?;
    ensure!(
        used == bytes.len(),
        Error::Checkpoint(format!("{} trailing bytes after parameter block", bytes.len() - used))
    );
    Ok(ckpt)
}
