use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::CorpusError;
use crate::numerics::Matrix;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn keyed_fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325 ^ splitmix64(seed);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Deterministic unit-norm pseudo-embedding of `text`.
///
/// The text is hashed with a seed-keyed 64-bit FNV-1a, each coordinate is
/// expanded from that hash with SplitMix64 into `[-1, 1)`, and the vector is
/// normalized.
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim >= 1, "embedding dimension must be positive");
    let h = keyed_fnv1a(seed, text.as_bytes());
    let mut v: Vec<f64> = (0..dim as u64)
        .map(|i| {
            let x = splitmix64(h ^ (i.wrapping_add(1)).wrapping_mul(GOLDEN));
            ((x >> 11) as f64) * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Source of text-node features.
pub trait FeatureProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, CorpusError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HashEmbed {
    pub dim: usize,
    pub seed: u64,
}

impl HashEmbed {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }
}

impl FeatureProvider for HashEmbed {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, CorpusError> {
        Ok(hash_embed(text, self.dim, self.seed))
    }
}

/// Text features looked up from an archive under `txt/<text>`, normalized to
/// unit length.
#[derive(Clone, Debug)]
pub struct FileBacked {
    archive: FeatureArchive,
}

impl FileBacked {
    pub fn new(archive: FeatureArchive) -> Self {
        Self { archive }
    }

    pub fn text_key(text: &str) -> String {
        format!("txt/{text}")
    }
}

impl FeatureProvider for FileBacked {
    fn dim(&self) -> usize {
        self.archive.dim()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, CorpusError> {
        let key = Self::text_key(text);
        let row = self
            .archive
            .get(&key)
            .ok_or(CorpusError::MissingKey { key })?;
        let mut v: Vec<f64> = row.iter().map(|&x| x as f64).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modality {
    Video,
    Audio,
}

impl Modality {
    pub fn tag(self) -> &'static str {
        match self {
            Modality::Video => "vid",
            Modality::Audio => "aud",
        }
    }
}

const MAGIC: &[u8; 4] = b"MGRF";

/// Binary feature archive: `MGRF`, u32 dim, u32 count, then per entry a u16
/// key length, the UTF-8 key and `dim` little-endian f32 values.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureArchive {
    dim: usize,
    entries: BTreeMap<String, Vec<f32>>,
    rows: HashMap<(String, Modality), usize>,
}

impl FeatureArchive {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
            rows: HashMap::new(),
        }
    }

    pub fn key(sample_id: &str, modality: Modality, utterance: usize) -> String {
        format!("{sample_id}/{}/{utterance}", modality.tag())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn insert(&mut self, key: &str, row: Vec<f32>) -> Result<(), CorpusError> {
        if row.len() != self.dim {
            return Err(CorpusError::Archive(format!(
                "entry {key:?} has {} values, archive dimension is {}",
                row.len(),
                self.dim
            )));
        }
        if key.len() > u16::MAX as usize {
            return Err(CorpusError::Archive(format!("key too long: {} bytes", key.len())));
        }
        if !row.iter().all(|v| v.is_finite()) {
            return Err(CorpusError::Archive(format!("entry {key:?} has non-finite values")));
        }
        if self.entries.insert(key.to_string(), row).is_some() {
            return Err(CorpusError::Archive(format!("duplicate key {key:?}")));
        }
        if let Some(slot) = parse_sample_key(key) {
            *self.rows.entry(slot).or_insert(0) += 1;
        }
        Ok(())
    }

    /// Number of per-utterance rows stored for a sample and modality.
    pub fn row_count(&self, sample_id: &str, modality: Modality) -> usize {
        self.rows
            .get(&(sample_id.to_string(), modality))
            .copied()
            .unwrap_or(0)
    }

    pub fn sample_matrix(
        &self,
        sample_id: &str,
        modality: Modality,
        n: usize,
    ) -> Result<Matrix, CorpusError> {
        let mut data = Vec::with_capacity(n * self.dim);
        for j in 0..n {
            let key = Self::key(sample_id, modality, j);
            let row = self.get(&key).ok_or(CorpusError::MissingKey { key })?;
            data.extend(row.iter().map(|&x| x as f64));
        }
        Ok(Matrix::from_vec(n, self.dim, data).expect("archive rows have archive width"))
    }

    /// Collects the video/audio rows of `samples`, narrowed to f32.
    pub fn from_samples(samples: &[super::Sample]) -> Result<Self, CorpusError> {
        let dim = samples.first().map_or(0, |s| s.video_feats.cols());
        let mut archive = Self::new(dim);
        for s in samples {
            for (modality, m) in [(Modality::Video, &s.video_feats), (Modality::Audio, &s.audio_feats)] {
                for j in 0..m.rows() {
                    let row = m.row(j).iter().map(|&x| x as f32).collect();
                    archive.insert(&Self::key(&s.id, modality, j), row)?;
                }
            }
        }
        Ok(archive)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.entries.len() * (16 + 4 * self.dim));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (key, row) in &self.entries {
            out.extend_from_slice(&(key.len() as u16).to_le_bytes());
            out.extend_from_slice(key.as_bytes());
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CorpusError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CorpusError::Archive("bad magic, expected MGRF".into()));
        }
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut archive = Self::new(dim);
        for _ in 0..count {
            let klen = r.u16()? as usize;
            let key = std::str::from_utf8(r.take(klen)?)
                .map_err(|e| CorpusError::Archive(format!("key is not UTF-8: {e}")))?
                .to_string();
            let payload = r.take(dim * 4)?;
            let row = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            archive.insert(&key, row)?;
        }
        if r.pos != bytes.len() {
            return Err(CorpusError::Archive(format!(
                "{} trailing bytes after {count} entries",
                bytes.len() - r.pos
            )));
        }
        Ok(archive)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn parse_sample_key(key: &str) -> Option<(String, Modality)> {
    let mut parts = key.rsplitn(3, '/');
    let idx = parts.next()?;
    let tag = parts.next()?;
    let id = parts.next()?;
    idx.parse::<usize>().ok()?;
    let modality = match tag {
        "vid" => Modality::Video,
        "aud" => Modality::Audio,
        _ => return None,
    };
    Some((id.to_string(), modality))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CorpusError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CorpusError::Archive(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CorpusError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, CorpusError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
