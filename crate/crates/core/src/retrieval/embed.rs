use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError};

/// Dimensionality of the stub embedder.
pub const STUB_DIMS: usize = 256;
const NGRAM: usize = 3;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding provider failed: {0}")]
    Provider(#[from] GatewayError),
    #[error("provider returned a zero vector")]
    ZeroVector,
    #[error("expected {expected} dimensions, provider returned {actual}")]
    Dims { expected: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub normalized: bool,
}

impl EmbeddingVector {
    pub fn dims(&self) -> usize {
        self.values.len()
    }

    /// L2-normalizes `values`; a zero vector is rejected.
    pub fn normalized(values: Vec<f32>) -> Result<Self, EmbedError> {
        let norm = values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbedError::ZeroVector);
        }
        Ok(Self {
            values: values
                .iter()
                .map(|&v| (f64::from(v) / norm) as f32)
                .collect(),
            normalized: true,
        })
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Bucket indices of the character 3-grams of the lowercased text. Texts
/// shorter than three characters contribute one gram: the whole text.
pub fn stub_buckets(text: &str) -> Vec<usize> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let bucket = |gram: &[char]| {
        let s: String = gram.iter().collect();
        (fnv1a(s.as_bytes()) % STUB_DIMS as u64) as usize
    };
    if chars.len() < NGRAM {
        return if chars.is_empty() {
            Vec::new()
        } else {
            vec![bucket(&chars)]
        };
    }
    chars.windows(NGRAM).map(bucket).collect()
}

/// Hashed character-3-gram counts over [`STUB_DIMS`] buckets (unnormalized).
pub fn stub_embedding(text: &str) -> Vec<f32> {
    let mut v = vec![0.0f32; STUB_DIMS];
    for b in stub_buckets(text) {
        v[b] += 1.0;
    }
    v
}

pub(crate) fn stub_embed_response(payload: &str) -> Result<String, String> {
    serde_json::to_string(&stub_embedding(payload)).map_err(|e| e.to_string())
}

/// Embeds one text through the gateway and L2-normalizes the result.
pub fn embed(text: &str, gateway: &Gateway) -> Result<EmbeddingVector, EmbedError> {
    let mut v = embed_batch(&[text.to_string()], gateway)?;
    Ok(v.pop().expect("one vector per text"))
}

pub fn embed_batch(
    texts: &[String],
    gateway: &Gateway,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if texts.iter().any(|t| t.trim().is_empty()) {
        return Err(EmbedError::EmptyText);
    }
    let raw = gateway.embed(texts)?;
    let dims = raw.first().map_or(0, Vec::len);
    raw.into_iter()
        .map(|v| {
            if v.len() != dims {
                return Err(EmbedError::Dims {
                    expected: dims,
                    actual: v.len(),
                });
            }
            EmbeddingVector::normalized(v)
        })
        .collect()
}

/// Cosine similarity in f64; zero if either vector has zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}
