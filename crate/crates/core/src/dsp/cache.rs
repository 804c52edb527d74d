//! On-disk feature cache: one file per (utterance id, feature kind),
//! little-endian f32, header {magic "WPFC", version, rows, cols}.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

const MAGIC: &[u8; 4] = b"WPFC";
const VERSION: u32 = 1;

fn cache_path(dir: &Path, id: &str, kind: &str) -> PathBuf {
    dir.join(format!("{id}.{kind}.feat"))
}

pub fn write_cached(dir: &Path, id: &str, kind: &str, t: &Tensor2) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let path = cache_path(dir, id, kind);
    let mut buf = Vec::with_capacity(16 + t.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(t.rows as u32).to_le_bytes());
    buf.extend_from_slice(&(t.cols as u32).to_le_bytes());
    for &v in &t.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f =
        std::fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&buf)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Returns `Ok(None)` when no cache entry exists.
pub fn read_cached(dir: &Path, id: &str, kind: &str) -> Result<Option<Tensor2>> {
    let path = cache_path(dir, id, kind);
    let mut f = match std::fs::File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(path.display().to_string(), e)),
    };
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    if buf.len() < 16 || &buf[..4] != MAGIC {
        return Err(Error::Audio(format!("{}: bad cache header", path.display())));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Audio(format!(
            "{}: cache version {version} unsupported",
            path.display()
        )));
    }
    let rows = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
    if buf.len() != 16 + rows * cols * 4 {
        return Err(Error::Audio(format!("{}: truncated cache file", path.display())));
    }
    let data = buf[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Some(Tensor2 { rows, cols, data }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_through_f32() {
        let dir = std::env::temp_dir().join(format!("werpred-cache-{}", std::process::id()));
        let t = Tensor2::from_rows(vec![vec![1.5, -2.25], vec![0.0, 1e-3]]);
        write_cached(&dir, "u1", "mel", &t).unwrap();
        let back = read_cached(&dir, "u1", "mel").unwrap().unwrap();
        assert_eq!(back.shape(), (2, 2));
        for (a, b) in t.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(read_cached(&dir, "u2", "mel").unwrap().is_none());
        let _ = std::fs::remove_dir_all(&dir);
    }
}
