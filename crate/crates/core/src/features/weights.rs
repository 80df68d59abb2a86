//! CNSW weight container.
//!
//! Little-endian layout:
//!
//! ```text
//! "CNSW" | version u32 (=1) | conv count u32
//! per conv: name_len u16 | name utf8 | out u32 | in u32 | kh u32 | kw u32
//!           | weights f32[out*in*kh*kw] (out, in, kh, kw) | biases f32[out]
//! channels u32 | means f32[channels] | stds f32[channels]
//! ```

use std::io::{Cursor, Read};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::FeatureError;

pub const MAGIC: &[u8; 4] = b"CNSW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub name: String,
    pub out_ch: usize,
    pub in_ch: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    pub convs: Vec<ConvWeights>,
    pub means: Vec<f32>,
    pub stds: Vec<f32>,
    /// Where the bundle came from (file path or builtin name).
    pub source: String,
    pub version: u32,
}

impl WeightBundle {
    pub fn conv(&self, name: &str) -> Option<&ConvWeights> {
        self.convs.iter().find(|c| c.name == name)
    }
}

fn truncated(what: &str) -> impl Fn(std::io::Error) -> FeatureError + '_ {
    move |e| FeatureError::Format(format!("truncated while reading {what}: {e}"))
}

fn read_f32s(cur: &mut Cursor<&[u8]>, n: usize, what: &str) -> Result<Vec<f32>, FeatureError> {
    let remaining = cur.get_ref().len() as u64 - cur.position();
    if (n as u64).saturating_mul(4) > remaining {
        return Err(FeatureError::Format(format!(
            "truncated while reading {what}: need {n} floats, {remaining} bytes left"
        )));
    }
    let mut v = vec![0f32; n];
    cur.read_f32_into::<LittleEndian>(&mut v).map_err(truncated(what))?;
    Ok(v)
}

fn read_dim(cur: &mut Cursor<&[u8]>, what: &str) -> Result<usize, FeatureError> {
    Ok(cur.read_u32::<LittleEndian>().map_err(truncated(what))? as usize)
}

/// Parses and sanity-checks a CNSW byte stream. Shapes against a network
/// spec are checked later, when the network is assembled.
pub fn load_weights(bytes: &[u8]) -> Result<WeightBundle, FeatureError> {
    let mut cur = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic).map_err(truncated("magic"))?;
    if &magic != MAGIC {
        return Err(FeatureError::Format(format!("bad magic {magic:?}")));
    }
    let version = cur.read_u32::<LittleEndian>().map_err(truncated("version"))?;
    if version != FORMAT_VERSION {
        return Err(FeatureError::Format(format!("unsupported version {version}")));
    }
    let count = read_dim(&mut cur, "layer count")?;
    let mut convs = Vec::new();
    for i in 0..count {
        let name_len = cur.read_u16::<LittleEndian>().map_err(truncated("layer name"))? as usize;
        let mut name = vec![0u8; name_len];
        cur.read_exact(&mut name).map_err(truncated("layer name"))?;
        let name = String::from_utf8(name)
            .map_err(|_| FeatureError::Format(format!("layer {i} name is not UTF-8")))?;
        let out_ch = read_dim(&mut cur, &name)?;
        let in_ch = read_dim(&mut cur, &name)?;
        let k_h = read_dim(&mut cur, &name)?;
        let k_w = read_dim(&mut cur, &name)?;
        let n = out_ch
            .checked_mul(in_ch)
            .and_then(|v| v.checked_mul(k_h))
            .and_then(|v| v.checked_mul(k_w))
            .ok_or_else(|| FeatureError::Format(format!("layer {name}: shape overflows")))?;
        let weights = read_f32s(&mut cur, n, &name)?;
        let biases = read_f32s(&mut cur, out_ch, &name)?;
        if !weights.iter().chain(&biases).all(|v| v.is_finite()) {
            return Err(FeatureError::Data(name));
        }
        convs.push(ConvWeights {
            name,
            out_ch,
            in_ch,
            k_h,
            k_w,
            weights,
            biases,
        });
    }
    let channels = read_dim(&mut cur, "normalization")?;
    let means = read_f32s(&mut cur, channels, "normalization means")?;
    let stds = read_f32s(&mut cur, channels, "normalization stds")?;
    if !means.iter().chain(&stds).all(|v| v.is_finite()) || stds.iter().any(|&s| s <= 0.0) {
        return Err(FeatureError::Data("normalization".into()));
    }
    if cur.position() as usize != bytes.len() {
        return Err(FeatureError::Format(format!(
            "{} trailing bytes after normalization block",
            bytes.len() - cur.position() as usize
        )));
    }
    Ok(WeightBundle {
        convs,
        means,
        stds,
        source: String::new(),
        version,
    })
}

/// Serializes a bundle; `load_weights(&write_weights(b))` reproduces it bit-exactly.
pub fn write_weights(bundle: &WeightBundle) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let w = &mut out;
    w.write_u32::<LittleEndian>(FORMAT_VERSION).unwrap();
    w.write_u32::<LittleEndian>(bundle.convs.len() as u32).unwrap();
    for c in &bundle.convs {
        w.write_u16::<LittleEndian>(c.name.len() as u16).unwrap();
        w.extend_from_slice(c.name.as_bytes());
        for d in [c.out_ch, c.in_ch, c.k_h, c.k_w] {
            w.write_u32::<LittleEndian>(d as u32).unwrap();
        }
        for &v in c.weights.iter().chain(&c.biases) {
            w.write_f32::<LittleEndian>(v).unwrap();
        }
    }
    w.write_u32::<LittleEndian>(bundle.means.len() as u32).unwrap();
    for &v in bundle.means.iter().chain(&bundle.stds) {
        w.write_f32::<LittleEndian>(v).unwrap();
    }
    out
}
