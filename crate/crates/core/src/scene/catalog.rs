//! Bundled asset catalog and the text embedder used for retrieval.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::plan::normalize;
use crate::task::{read_json, TaskError};

pub const EMBED_DIM: usize = 256;

/// Hashed bag of words, L2-normalized. Tokens are the normalized words.
pub fn embed(text: &str) -> Vec<f32> {
    let mut v = vec![0f32; EMBED_DIM];
    for token in normalize(text).split(' ').filter(|t| !t.is_empty()) {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in token.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        v[(h % EMBED_DIM as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn encode_vector(v: &[f32]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_vector(text: &str) -> Result<Vec<f32>, String> {
    let bytes = STANDARD.decode(text).map_err(|e| e.to_string())?;
    if bytes.len() % 4 != 0 {
        return Err("vector byte length is not a multiple of 4".into());
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetRecord {
    pub asset_id: String,
    pub description: String,
    /// Base64 of little-endian `f32`s.
    pub vector: String,
    /// Default bounding box `[width, height, depth]` in meters.
    pub bbox: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Asset {
    pub asset_id: String,
    pub description: String,
    pub vector: Vec<f32>,
    pub bbox: [f64; 3],
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CatalogError {
    #[error("asset catalog is empty")]
    EmptyCatalog,
    #[error("asset `{id}`: {message}")]
    BadRecord { id: String, message: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssetCatalog {
    pub assets: Vec<Asset>,
}

impl AssetCatalog {
    pub fn from_records(records: Vec<AssetRecord>) -> Result<Self, CatalogError> {
        let mut assets = Vec::with_capacity(records.len());
        for r in records {
            let bad = |message: String| CatalogError::BadRecord { id: r.asset_id.clone(), message };
            let vector = decode_vector(&r.vector).map_err(bad)?;
            if !r.bbox.iter().all(|s| s.is_finite() && *s > 0.0) {
                return Err(bad("bounding box must be positive".into()));
            }
            assets.push(Asset { asset_id: r.asset_id, description: r.description, vector, bbox: r.bbox });
        }
        if let Some(first) = assets.first() {
            let dim = first.vector.len();
            if let Some(odd) = assets.iter().find(|a| a.vector.len() != dim) {
                return Err(CatalogError::BadRecord { id: odd.asset_id.clone(), message: format!("vector dimension differs from {dim}") });
            }
        }
        Ok(Self { assets })
    }

    pub fn load(path: &Path) -> Result<Self, TaskError> {
        let records: Vec<AssetRecord> = read_json(path)?;
        Self::from_records(records).map_err(|e| TaskError::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn to_records(&self) -> Vec<AssetRecord> {
        self.assets
            .iter()
            .map(|a| AssetRecord {
                asset_id: a.asset_id.clone(),
                description: a.description.clone(),
                vector: encode_vector(&a.vector),
                bbox: a.bbox,
            })
            .collect()
    }
}

/// The asset whose vector is most similar to the embedded description. Equal
/// scores go to the smallest asset id.
pub fn retrieve_asset<'c>(
    catalog: &'c AssetCatalog,
    description: &str,
    embed: impl Fn(&str) -> Vec<f32>,
) -> Result<&'c Asset, CatalogError> {
    let query = embed(description);
    let mut best: Option<(&Asset, f64)> = None;
    for asset in &catalog.assets {
        let score = cosine(&query, &asset.vector);
        best = match best {
            Some((b, s)) if s > score || (s == score && b.asset_id <= asset.asset_id) => Some((b, s)),
            _ => Some((asset, score)),
        };
    }
    best.map(|(a, _)| a).ok_or(CatalogError::EmptyCatalog)
}
