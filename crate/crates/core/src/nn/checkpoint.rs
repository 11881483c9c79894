use std::io::{Read, Write};

use super::mlp::{param_count, Mlp};
use super::NnError;

const MAGIC: &[u8; 8] = b"MSTDCKP1";

/// Serialized parameters of one network.
///
/// Layout (little endian): magic, `u32` layer count, `u32` per layer size,
/// `u64` seed, `u64` step, `u64` parameter count, then the flat `f64`
/// parameter array in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub layer_sizes: Vec<usize>,
    pub seed: u64,
    pub step: u64,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn of(net: &Mlp, seed: u64, step: u64) -> Self {
        Self {
            layer_sizes: net.sizes().to_vec(),
            seed,
            step,
            params: net.params().to_vec(),
        }
    }

    /// Copies the parameters into a network of matching architecture.
    pub fn restore_into(&self, net: &mut Mlp) -> Result<(), NnError> {
        if net.sizes() != self.layer_sizes.as_slice() {
            return Err(NnError::Architecture);
        }
        net.params_mut().copy_from_slice(&self.params);
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.layer_sizes.len() as u32).to_le_bytes())?;
        for &s in &self.layer_sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.step.to_le_bytes())?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let layers = u32::from_le_bytes(b4) as usize;
        if !(2..=64).contains(&layers) {
            return Err(NnError::Format(format!("implausible layer count {layers}")));
        }
        let mut layer_sizes = Vec::with_capacity(layers);
        for _ in 0..layers {
            r.read_exact(&mut b4)?;
            layer_sizes.push(u32::from_le_bytes(b4) as usize);
        }
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let step = u64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        if count != param_count(&layer_sizes) {
            return Err(NnError::Format(format!("{count} parameters for sizes {layer_sizes:?}")));
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b8)?;
            params.push(f64::from_le_bytes(b8));
        }
        Ok(Self {
            layer_sizes,
            seed,
            step,
            params,
        })
    }
}
