//! Versioned binary checkpoint: header {magic "WPRD", format version,
//! architecture descriptor string}, then parameter tensors and Adadelta
//! accumulators as little-endian f32, row-major, in flatten order.

use std::io::{Read, Write};
use std::path::Path;

use super::Network;
use crate::error::{Error, Result};
use crate::tensor::Tensor2;

const MAGIC: &[u8; 4] = b"WPRD";
const VERSION: u32 = 1;

pub fn save_checkpoint(net: &Network, descriptor: &str, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let desc = descriptor.as_bytes();
    buf.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    buf.extend_from_slice(desc);
    let params = net.params();
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in &params {
        write_tensor(&mut buf, p);
    }
    match &net.opt {
        Some(state) => {
            buf.push(1);
            for t in state.eg2.iter().chain(&state.edx2) {
                write_tensor(&mut buf, t);
            }
        }
        None => buf.push(0),
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&buf)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_tensor(buf: &mut Vec<u8>, t: &Tensor2) {
    buf.extend_from_slice(&(t.rows as u32).to_le_bytes());
    buf.extend_from_slice(&(t.cols as u32).to_le_bytes());
    for &v in &t.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub struct CheckpointData {
    pub descriptor: String,
    pub params: Vec<Tensor2>,
    pub opt: Option<(Vec<Tensor2>, Vec<Tensor2>)>,
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointData> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = Cursor { buf: &buf, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let desc_len = r.u32()? as usize;
    let descriptor = String::from_utf8(r.take(desc_len)?.to_vec())
        .map_err(|_| Error::Checkpoint("descriptor is not UTF-8".into()))?;
    let n_params = r.u32()? as usize;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        params.push(read_tensor(&mut r)?);
    }
    let has_opt = r.take(1)?[0];
    let opt = if has_opt == 1 {
        let mut eg2 = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            eg2.push(read_tensor(&mut r)?);
        }
        let mut edx2 = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            edx2.push(read_tensor(&mut r)?);
        }
        Some((eg2, edx2))
    } else {
        None
    };
    Ok(CheckpointData {
        descriptor,
        params,
        opt,
    })
}

fn read_tensor(r: &mut Cursor) -> Result<Tensor2> {
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let bytes = r.take(rows * cols * 4)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Tensor2 { rows, cols, data })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{adadelta_step, AdadeltaConfig, Dense, Layer};
    use rand::SeedableRng;

    #[test]
    fn roundtrip_with_optimizer_state() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut net = Network::new(vec![
            Layer::Dense(Dense::glorot(3, 2, &mut rng)),
            Layer::Relu,
            Layer::Dense(Dense::glorot(2, 1, &mut rng)),
        ]);
        let grads: Vec<Tensor2> = net
            .params()
            .iter()
            .map(|p| Tensor2 {
                rows: p.rows,
                cols: p.cols,
                data: p.data.iter().map(|v| v * 0.1 + 0.01).collect(),
            })
            .collect();
        adadelta_step(&mut net, &grads, &AdadeltaConfig::default()).unwrap();

        let path = std::env::temp_dir().join(format!("werpred-ckpt-{}.bin", std::process::id()));
        save_checkpoint(&net, "{\"arch\":\"test\"}", &path).unwrap();
        let data = load_checkpoint(&path).unwrap();
        assert_eq!(data.descriptor, "{\"arch\":\"test\"}");
        assert_eq!(data.params.len(), net.param_count());
        for (orig, loaded) in net.params().iter().zip(&data.params) {
            assert_eq!(orig.shape(), loaded.shape());
            for (a, b) in orig.data.iter().zip(&loaded.data) {
                assert!((a - b).abs() < 1e-6, "f32 roundtrip drift");
            }
        }
        assert!(data.opt.is_some());
        // two saves are byte-identical
        let path2 = std::env::temp_dir().join(format!("werpred-ckpt2-{}.bin", std::process::id()));
        save_checkpoint(&net, "{\"arch\":\"test\"}", &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
        let _ = std::fs::remove_file(&path);
        let _ = std::fs::remove_file(&path2);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let path = std::env::temp_dir().join(format!("werpred-badckpt-{}.bin", std::process::id()));
        std::fs::write(&path, b"NOPE0000").unwrap();
        assert!(load_checkpoint(&path).is_err());
        let _ = std::fs::remove_file(&path);
    }
}
