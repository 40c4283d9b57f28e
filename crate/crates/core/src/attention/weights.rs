//! Flat binary weight container.
//!
//! Layout (little-endian): magic `PVWT`, u32 version, u32 tensor count,
//! then per tensor a u32 name length, the UTF-8 name, a u32 rank and u32
//! dims; after all headers, every tensor's f32 values in header order.

use std::fmt::Write as _;

use super::{ACWeights, AMConfig, AMWeights, AttentionError, CAMWeights, ConvKernel, GroupNorm, SAMWeights};

const MAGIC: &[u8; 4] = b"PVWT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightStore {
    entries: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl WeightStore {
    pub fn insert(&mut self, name: &str, dims: Vec<usize>, values: Vec<f32>) {
        debug_assert_eq!(dims.iter().product::<usize>(), values.len());
        self.entries.push((name.to_string(), dims, values));
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[f32])> {
        self.entries
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, d, v)| (d.as_slice(), v.as_slice()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _, _)| n.as_str())
    }

    fn take(&self, name: &str, dims: &[usize]) -> Result<Vec<f64>, AttentionError> {
        let (d, v) = self
            .get(name)
            .ok_or_else(|| AttentionError::Weights(format!("missing tensor {name}")))?;
        if d != dims {
            return Err(AttentionError::Weights(format!("{name}: expected dims {dims:?}, found {d:?}")));
        }
        Ok(v.iter().map(|x| *x as f64).collect())
    }
}

pub fn write_weights(store: &WeightStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.entries.len() as u32).to_le_bytes());
    for (name, dims, _) in &store.entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
    }
    for (_, _, values) in &store.entries {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], AttentionError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| AttentionError::Weights(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, AttentionError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_weights(bytes: &[u8]) -> Result<WeightStore, AttentionError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(AttentionError::Weights("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(AttentionError::Weights(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut headers = Vec::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| AttentionError::Weights("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        headers.push((name, dims));
    }
    let mut store = WeightStore::default();
    for (name, dims) in headers {
        let n: usize = dims.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| AttentionError::Weights("tensor too large".into()))?)?;
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        store.entries.push((name, dims, values));
    }
    if r.pos != bytes.len() {
        return Err(AttentionError::Weights(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(store)
}

/// One `name dims` line per tensor, dims joined by `x`.
pub fn weights_manifest(store: &WeightStore) -> String {
    let mut out = String::new();
    for (name, dims, _) in &store.entries {
        let dims: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
        writeln!(out, "{name} {}", dims.join("x")).unwrap();
    }
    out
}

fn f32s(v: &[f64]) -> Vec<f32> {
    v.iter().map(|x| *x as f32).collect()
}

impl ConvKernel {
    pub fn store(&self, s: &mut WeightStore, name: &str) {
        s.insert(&format!("{name}.weight"), vec![self.kh, self.kw, self.cin, self.cout], f32s(&self.weights));
        s.insert(&format!("{name}.bias"), vec![self.cout], f32s(&self.bias));
    }

    pub fn load(
        s: &WeightStore,
        name: &str,
        dims: (usize, usize, usize, usize),
        dilation: usize,
    ) -> Result<Self, AttentionError> {
        let (kh, kw, cin, cout) = dims;
        let w = s.take(&format!("{name}.weight"), &[kh, kw, cin, cout])?;
        let b = s.take(&format!("{name}.bias"), &[cout])?;
        ConvKernel::new(dims, w, b, dilation)
    }
}

impl ACWeights {
    pub fn store(&self, s: &mut WeightStore, name: &str) {
        self.square.store(s, &format!("{name}.square"));
        self.horizontal.store(s, &format!("{name}.horizontal"));
        self.vertical.store(s, &format!("{name}.vertical"));
        s.insert(&format!("{name}.norm.gamma"), vec![self.norm.gamma.len()], f32s(&self.norm.gamma));
        s.insert(&format!("{name}.norm.beta"), vec![self.norm.beta.len()], f32s(&self.norm.beta));
    }

    pub fn load(
        s: &WeightStore,
        name: &str,
        k: usize,
        cin: usize,
        cout: usize,
        groups: usize,
    ) -> Result<Self, AttentionError> {
        Ok(ACWeights {
            square: ConvKernel::load(s, &format!("{name}.square"), (k, k, cin, cout), 1)?,
            horizontal: ConvKernel::load(s, &format!("{name}.horizontal"), (1, k, cin, cout), 1)?,
            vertical: ConvKernel::load(s, &format!("{name}.vertical"), (k, 1, cin, cout), 1)?,
            norm: GroupNorm {
                groups,
                gamma: s.take(&format!("{name}.norm.gamma"), &[cout])?,
                beta: s.take(&format!("{name}.norm.beta"), &[cout])?,
                epsilon: 1e-5,
            },
        })
    }
}

impl AMWeights {
    pub fn store(&self, s: &mut WeightStore, name: &str) {
        self.cam.compress.store(s, &format!("{name}.cam.compress"));
        self.cam.squeeze.store(s, &format!("{name}.cam.squeeze"));
        self.cam.expand.store(s, &format!("{name}.cam.expand"));
        for (i, k) in self.sam.pointwise.iter().enumerate() {
            k.store(s, &format!("{name}.sam.pointwise{}", i + 1));
        }
        for (i, k) in self.sam.dilated.iter().enumerate() {
            k.store(s, &format!("{name}.sam.dilated{}", i + 1));
        }
        self.spatial_compress.store(s, &format!("{name}.spatial_compress"));
        self.ac.store(s, &format!("{name}.ac"));
    }

    pub fn load(s: &WeightStore, name: &str, cfg: &AMConfig) -> Result<Self, AttentionError> {
        let (c, half, sq) = (cfg.channels, cfg.channels / 2, cfg.squeeze.width(cfg.channels));
        let pointwise = |i: usize| ConvKernel::load(s, &format!("{name}.sam.pointwise{}", i + 1), (1, 1, 2, 1), 1);
        let dilated = |i: usize| ConvKernel::load(s, &format!("{name}.sam.dilated{}", i + 1), (3, 3, 2, 1), i + 1);
        Ok(AMWeights {
            cam: CAMWeights {
                compress: ConvKernel::load(s, &format!("{name}.cam.compress"), (1, 1, c, half), 1)?,
                squeeze: ConvKernel::load(s, &format!("{name}.cam.squeeze"), (1, 1, half, sq), 1)?,
                expand: ConvKernel::load(s, &format!("{name}.cam.expand"), (1, 1, sq, half), 1)?,
            },
            sam: SAMWeights {
                pointwise: [pointwise(0)?, pointwise(1)?, pointwise(2)?],
                dilated: [dilated(0)?, dilated(1)?, dilated(2)?],
            },
            spatial_compress: ConvKernel::load(s, &format!("{name}.spatial_compress"), (1, 1, c, half), 1)?,
            ac: ACWeights::load(s, &format!("{name}.ac"), cfg.kernel, c, cfg.out_channels, cfg.groups)?,
        })
    }
}
