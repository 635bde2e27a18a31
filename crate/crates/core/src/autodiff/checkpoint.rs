//! Binary container for named arrays plus string metadata.
//!
//! Layout (little-endian): magic `EVMFCKPT`, version byte, `u32` metadata
//! count, then `(key, value)` strings, `u32` array count, then per array its
//! name, `u32` rows, `u32` cols and `rows * cols` `f64` values. Strings are
//! a `u32` byte length followed by UTF-8.

use std::io::{Read, Write};

use super::{AdError, Array2D, ParamStore};

pub const MAGIC: &[u8; 8] = b"EVMFCKPT";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub metadata: Vec<(String, String)>,
    pub arrays: Vec<(String, Array2D)>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, metadata: Vec<(String, String)>) -> Self {
        Checkpoint {
            metadata,
            arrays: store
                .iter()
                .map(|(_, n, a)| (n.to_string(), a.clone()))
                .collect(),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Copies arrays into `store` by name. Every parameter of the store must
    /// be present with a matching shape.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<(), AdError> {
        for id in store.ids().collect::<Vec<_>>() {
            let name = store.name(id).to_string();
            let (_, a) = self
                .arrays
                .iter()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| AdError::Checkpoint(format!("missing array {name}")))?;
            let dst = store.get_mut(id);
            if dst.shape() != a.shape() {
                return Err(AdError::Checkpoint(format!(
                    "array {name}: expected {:?}, found {:?}",
                    dst.shape(),
                    a.shape()
                )));
            }
            *dst = a.clone();
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        fn string(w: &mut impl Write, s: &str) -> std::io::Result<()> {
            w.write_all(&(s.len() as u32).to_le_bytes())?;
            w.write_all(s.as_bytes())
        }
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&(self.metadata.len() as u32).to_le_bytes())?;
        for (k, v) in &self.metadata {
            string(w, k)?;
            string(w, v)?;
        }
        w.write_all(&(self.arrays.len() as u32).to_le_bytes())?;
        for (name, a) in &self.arrays {
            string(w, name)?;
            w.write_all(&(a.rows() as u32).to_le_bytes())?;
            w.write_all(&(a.cols() as u32).to_le_bytes())?;
            for v in a.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, AdError> {
        let bad = |m: &str| AdError::Checkpoint(m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version)
            .map_err(|_| bad("truncated header"))?;
        if version[0] != VERSION {
            return Err(AdError::Checkpoint(format!(
                "unsupported version {}",
                version[0]
            )));
        }
        fn u32_(r: &mut impl Read) -> Result<u32, AdError> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)
                .map_err(|_| AdError::Checkpoint("truncated".into()))?;
            Ok(u32::from_le_bytes(b))
        }
        fn string(r: &mut impl Read) -> Result<String, AdError> {
            let n = u32_(r)? as usize;
            let mut b = vec![0u8; n];
            r.read_exact(&mut b)
                .map_err(|_| AdError::Checkpoint("truncated".into()))?;
            String::from_utf8(b).map_err(|_| AdError::Checkpoint("invalid utf-8".into()))
        }
        let mut ck = Checkpoint::default();
        for _ in 0..u32_(r)? {
            let k = string(r)?;
            let v = string(r)?;
            ck.metadata.push((k, v));
        }
        for _ in 0..u32_(r)? {
            let name = string(r)?;
            let rows = u32_(r)? as usize;
            let cols = u32_(r)? as usize;
            let mut data = Vec::with_capacity(rows * cols);
            let mut b = [0u8; 8];
            for _ in 0..rows * cols {
                r.read_exact(&mut b).map_err(|_| bad("truncated array"))?;
                data.push(f64::from_le_bytes(b));
            }
            ck.arrays.push((name, Array2D::from_vec(rows, cols, data)));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), AdError> {
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| AdError::Checkpoint(e.to_string()))?,
        );
        self.write_to(&mut f)
            .and_then(|_| f.flush())
            .map_err(|e| AdError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, AdError> {
        let mut f = std::io::BufReader::new(
            std::fs::File::open(path).map_err(|e| AdError::Checkpoint(e.to_string()))?,
        );
        Self::read_from(&mut f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut store = ParamStore::new();
        store.add(
            "w",
            Array2D::from_rows(&[vec![1.5, -2.0], vec![0.0, 1e-300]]),
        );
        store.add("b", Array2D::row_vector(vec![f64::MAX]));
        let ck = Checkpoint::from_store(&store, vec![("d_model".into(), "32".into())]);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(buf[8], VERSION);
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta("d_model"), Some("32"));

        let mut other = ParamStore::new();
        other.add("w", Array2D::zeros(2, 2));
        other.add("b", Array2D::zeros(1, 1));
        back.restore_into(&mut other).unwrap();
        assert_eq!(
            other.get(other.id("w").unwrap()),
            store.get(store.id("w").unwrap())
        );
    }

    #[test]
    fn rejects_corruption() {
        assert!(Checkpoint::read_from(&mut &b"NOTACKPT\x01"[..]).is_err());
        let mut buf = Vec::new();
        Checkpoint::default().write_to(&mut buf).unwrap();
        buf[8] = 9;
        assert!(Checkpoint::read_from(&mut buf.as_slice()).is_err());
        let mut store = ParamStore::new();
        store.add("x", Array2D::zeros(1, 1));
        assert!(Checkpoint::default().restore_into(&mut store).is_err());
    }
}
