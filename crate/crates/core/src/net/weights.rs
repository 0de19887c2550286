use std::io::{Read, Write};
use std::path::Path;

use super::{Network, NetworkConfig};
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"SSNW";
pub const WEIGHTS_VERSION: u16 = 1;

/// Serialises every parameter as little-endian f32, in store order.
pub fn write_weights<T: Scalar, W: Write>(store: &ParamStore<T>, mut w: W) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + store.numel() * 4);
    buf.extend_from_slice(WEIGHTS_MAGIC);
    buf.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    let count = u32::try_from(store.len()).map_err(|_| Error::Format("too many tensors".into()))?;
    buf.extend_from_slice(&count.to_le_bytes());
    for (name, t) in store.iter() {
        let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("name too long: {name}")))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        let rank = u8::try_from(t.rank()).map_err(|_| Error::Format(format!("rank too large: {name}")))?;
        buf.push(rank);
        for &d in t.dims() {
            let d = u32::try_from(d).map_err(|_| Error::Format(format!("dim too large: {name}")))?;
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| Error::Format(format!("write failed: {e}")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("slice of length N"))
    }
}

/// Parses a weight file into named f32 tensors.
pub fn read_weights<R: Read>(mut r: R) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::Format(format!("read failed: {e}")))?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if &c.array::<4>("magic")? != WEIGHTS_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes(c.array("version")?);
    if version != WEIGHTS_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(c.array("tensor count")?) as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = u16::from_le_bytes(c.array("name length")?) as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| Error::Format("name is not UTF-8".into()))?
            .to_string();
        let rank = c.take(1, "rank")?[0] as usize;
        let dims = (0..rank)
            .map(|_| Ok(u32::from_le_bytes(c.array("dims")?) as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = crate::tensor::numel(&dims).map_err(|_| Error::Format(format!("{name}: dims overflow")))?;
        let nbytes = n.checked_mul(4).ok_or_else(|| Error::Format(format!("{name}: payload overflow")))?;
        let payload = c.take(nbytes, "payload")?;
        let data = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
        out.push((name, Tensor::from_vec(&dims, data)?));
    }
    if c.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(out)
}

pub fn save_weights<T: Scalar>(net: &Network<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_weights(net.store(), &mut buf)?;
    crate::io::write_atomic(path, &buf)
}

/// Builds the architecture described by `config` and fills it from `path`.
/// Names, order and shapes must match exactly.
pub fn load_weights<T: Scalar>(config: &NetworkConfig, path: &Path) -> Result<Network<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let tensors = read_weights(std::io::BufReader::new(file))?;
    let mut net = Network::<T>::build(config)?;
    net.load_tensors(tensors)?;
    Ok(net)
}

impl<T: Scalar> Network<T> {
    /// Replaces every parameter with the given named tensors.
    pub fn load_tensors(&mut self, tensors: Vec<(String, Tensor<f32>)>) -> Result<()> {
        let store = self.store_mut();
        if tensors.len() != store.len() {
            return Err(Error::Format(format!(
                "file has {} tensors, architecture has {}",
                tensors.len(),
                store.len()
            )));
        }
        let ids: Vec<_> = store.ids().collect();
        for (id, (name, t)) in ids.into_iter().zip(tensors) {
            if store.name(id) != name {
                return Err(Error::Format(format!("expected tensor `{}`, found `{name}`", store.name(id))));
            }
            if store.get(id).dims() != t.dims() {
                return Err(Error::Format(format!(
                    "`{name}`: dims {:?} do not match architecture {:?}",
                    t.dims(),
                    store.get(id).dims()
                )));
            }
            store.set(id, t.cast::<T>())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Task;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = NetworkConfig::micro(Task::Lane13).with_seed(5);
        let net = Network::<f32>::build(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        save_weights(&net, &path).unwrap();
        let back = load_weights::<f32>(&cfg, &path).unwrap();
        for ((n1, t1), (n2, t2)) in net.store().iter().zip(back.store().iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.dims(), t2.dims());
            let b1: Vec<u32> = t1.data().iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u32> = t2.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let cfg = NetworkConfig::micro(Task::EdgeBinary);
        let net = Network::<f32>::build(&cfg).unwrap();
        let mut bytes = Vec::new();
        write_weights(net.store(), &mut bytes).unwrap();
        assert!(read_weights(&bytes[..]).is_ok());

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_weights(&bad[..]), Err(Error::Format(m)) if m.contains("magic")));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(read_weights(&bad[..]), Err(Error::Format(m)) if m.contains("version")));
        assert!(matches!(read_weights(&bytes[..bytes.len() - 3]), Err(Error::Format(m)) if m.contains("truncated")));
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(matches!(read_weights(&bad[..]), Err(Error::Format(m)) if m.contains("trailing")));
    }

    #[test]
    fn architecture_mismatch_rejected() {
        let a = Network::<f32>::build(&NetworkConfig::micro(Task::EdgeBinary)).unwrap();
        let mut bytes = Vec::new();
        write_weights(a.store(), &mut bytes).unwrap();
        let mut b = Network::<f32>::build(&NetworkConfig::micro(Task::EdgeMulti)).unwrap();
        assert!(matches!(b.load_tensors(read_weights(&bytes[..]).unwrap()), Err(Error::Format(_))));
    }
}
