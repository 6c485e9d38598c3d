//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//! magic `SEGNET1\0`, u32 version, u32 in_h, u32 in_w, u32 n_classes,
//! u32 tensor count, then per tensor: u32 name length, name bytes,
//! u32 element count, raw f32 data. Round trips are bit-exact.

use super::model::{NetConfig, NetError, NetParams};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"SEGNET1\0";
const VERSION: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> NetError {
    NetError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_checkpoint(path: &Path, params: &NetParams<f32>) -> Result<(), NetError> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.config.in_h as u32).to_le_bytes());
    out.extend_from_slice(&(params.config.in_w as u32).to_le_bytes());
    out.extend_from_slice(&(params.config.n_classes as u32).to_le_bytes());
    let tensors = params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, data) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&out).map_err(|e| io_err(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<NetParams<f32>, NetError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| io_err(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| io_err(path, e))?;
    let bad = |m: &str| NetError::Checkpoint(format!("{}: {m}", path.display()));
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], NetError> {
        if *pos + n > bytes.len() {
            return Err(NetError::Checkpoint(format!(
                "{}: truncated at byte {}",
                path.display(),
                *pos
            )));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let u32_at = |pos: &mut usize| -> Result<u32, NetError> {
        let s = take(pos, 4)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    };
    if take(&mut pos, 8)? != MAGIC {
        return Err(bad("bad magic"));
    }
    if u32_at(&mut pos)? != VERSION {
        return Err(bad("unsupported version"));
    }
    let in_h = u32_at(&mut pos)? as usize;
    let in_w = u32_at(&mut pos)? as usize;
    let n_classes = u32_at(&mut pos)? as usize;
    let config = NetConfig::new(in_h, in_w, n_classes)
        .map_err(|e| NetError::Checkpoint(format!("{}: {e}", path.display())))?;
    let mut params = NetParams::<f32>::zeros(config);
    let n_tensors = u32_at(&mut pos)? as usize;
    let expected = params.tensors().len();
    if n_tensors != expected {
        return Err(bad("tensor count mismatch"));
    }
    for (name, tensor) in params.tensors_mut() {
        let name_len = u32_at(&mut pos)? as usize;
        let got_name = take(&mut pos, name_len)?.to_vec();
        if got_name != name.as_bytes() {
            return Err(NetError::Checkpoint(format!(
                "{}: expected tensor `{name}`, found `{}`",
                path.display(),
                String::from_utf8_lossy(&got_name)
            )));
        }
        let count = u32_at(&mut pos)? as usize;
        if count != tensor.len() {
            return Err(NetError::Checkpoint(format!(
                "{}: tensor `{name}` has {count} elements, expected {}",
                path.display(),
                tensor.len()
            )));
        }
        for v in tensor.iter_mut() {
            let s = take(&mut pos, 4)?;
            *v = f32::from_le_bytes([s[0], s[1], s[2], s[3]]);
        }
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_seed;

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let dir = std::env::temp_dir().join(format!("segloc_ckpt_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let config = NetConfig::new(16, 32, 5).unwrap();
        let params = NetParams::<f32>::init(config, derive_seed(3, "ckpt-test"));
        let path = dir.join("net.bin");
        save_checkpoint(&path, &params).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(params, loaded);
        // Binary is stable: saving again produces identical bytes.
        let path2 = dir.join("net2.bin");
        save_checkpoint(&path2, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let dir = std::env::temp_dir().join(format!("segloc_ckpt_bad_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.bin");
        std::fs::write(&path, b"NOTANET0rest").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
