//! Embedding and labeled-batch containers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::numerics::l2_normalize_in_place;

/// Row norms of file-loaded batches may deviate from 1 by up to f32
/// quantization error.
pub const STORED_NORM_TOLERANCE: f64 = 1e-5;

/// A batch of unit-norm embedding vectors with a similarity temperature.
///
/// Similarity between rows `u` and `v` is `(u·v)/T`. Embeddings are always
/// stored unit-norm; the temperature is applied at similarity time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBatch {
    vectors: Matrix,
    temperature: f64,
}

impl EmbeddingBatch {
    /// Normalizes every row and wraps it with the given temperature.
    pub fn new(mut vectors: Matrix, temperature: f64) -> Result<Self> {
        Self::validate_shape(&vectors, temperature)?;
        for i in 0..vectors.rows() {
            l2_normalize_in_place(vectors.row_mut(i))?;
        }
        Ok(EmbeddingBatch {
            vectors,
            temperature,
        })
    }

    /// Wraps rows that are already unit norm (within f32 tolerance), without
    /// renormalizing. Used by the file loader so that read/write round-trips
    /// are bit-exact.
    pub fn from_unit_rows(vectors: Matrix, temperature: f64) -> Result<Self> {
        Self::validate_shape(&vectors, temperature)?;
        for i in 0..vectors.rows() {
            let r = vectors.row(i);
            let norm = dot(r, r).sqrt();
            if (norm - 1.0).abs() > STORED_NORM_TOLERANCE {
                return Err(Error::InvalidConfig(format!(
                    "row {i} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(EmbeddingBatch {
            vectors,
            temperature,
        })
    }

    fn validate_shape(vectors: &Matrix, temperature: f64) -> Result<()> {
        if vectors.rows() == 0 {
            return Err(Error::EmptyInput);
        }
        if vectors.cols() < 2 {
            return Err(Error::InvalidConfig(format!(
                "embedding dimension must be at least 2, got {}",
                vectors.cols()
            )));
        }
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive and finite, got {temperature}"
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.vectors.rows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    /// Selects a subset of rows, preserving order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyInput);
        }
        let rows: Vec<Vec<f64>> = indices.iter().map(|&i| self.row(i).to_vec()).collect();
        Ok(EmbeddingBatch {
            vectors: Matrix::from_rows(&rows),
            temperature: self.temperature,
        })
    }
}

/// Embeddings plus assigned labels and, optionally, the latent (true) labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBatch {
    pub embeddings: EmbeddingBatch,
    assigned: Vec<u32>,
    latent: Option<Vec<u32>>,
}

impl LabeledBatch {
    pub fn new(
        embeddings: EmbeddingBatch,
        assigned: Vec<u32>,
        latent: Option<Vec<u32>>,
    ) -> Result<Self> {
        if assigned.len() != embeddings.n() {
            return Err(Error::LengthMismatch {
                left: assigned.len(),
                right: embeddings.n(),
            });
        }
        if let Some(lat) = &latent {
            if lat.len() != embeddings.n() {
                return Err(Error::LengthMismatch {
                    left: lat.len(),
                    right: embeddings.n(),
                });
            }
        }
        Ok(LabeledBatch {
            embeddings,
            assigned,
            latent,
        })
    }

    pub fn n(&self) -> usize {
        self.embeddings.n()
    }

    pub fn assigned(&self) -> &[u32] {
        &self.assigned
    }

    pub fn latent(&self) -> Option<&[u32]> {
        self.latent.as_deref()
    }

    pub fn latent_required(&self) -> Result<&[u32]> {
        self.latent.as_deref().ok_or(Error::MissingLatentLabels)
    }

    /// Replaces the assigned labels, keeping embeddings and latents.
    pub fn with_assigned(&self, assigned: Vec<u32>) -> Result<Self> {
        LabeledBatch::new(self.embeddings.clone(), assigned, self.latent.clone())
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let embeddings = self.embeddings.select(indices)?;
        let assigned = indices.iter().map(|&i| self.assigned[i]).collect();
        let latent = self
            .latent
            .as_ref()
            .map(|lat| indices.iter().map(|&i| lat[i]).collect());
        LabeledBatch::new(embeddings, assigned, latent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_normalized_on_construction() {
        let b = EmbeddingBatch::new(Matrix::from_rows(&[vec![3.0, 4.0], vec![0.0, 2.0]]), 1.0)
            .unwrap();
        assert!((dot(b.row(0), b.row(0)).sqrt() - 1.0).abs() < 1e-12);
        assert_eq!(b.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn rejects_empty_and_thin_batches() {
        assert!(EmbeddingBatch::new(Matrix::zeros(0, 4), 1.0).is_err());
        assert!(EmbeddingBatch::new(Matrix::from_rows(&[vec![1.0]]), 1.0).is_err());
        assert!(EmbeddingBatch::new(Matrix::from_rows(&[vec![1.0, 0.0]]), 0.0).is_err());
    }

    #[test]
    fn label_lengths_are_checked() {
        let e = EmbeddingBatch::new(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]), 1.0)
            .unwrap();
        assert!(LabeledBatch::new(e.clone(), vec![0], None).is_err());
        assert!(LabeledBatch::new(e.clone(), vec![0, 1], Some(vec![0])).is_err());
        let b = LabeledBatch::new(e, vec![0, 1], Some(vec![0, 0])).unwrap();
        assert!(matches!(b.latent_required(), Ok(_)));
    }

    #[test]
    fn from_unit_rows_rejects_denormalized() {
        let m = Matrix::from_rows(&[vec![2.0, 0.0]]);
        assert!(EmbeddingBatch::from_unit_rows(m, 1.0).is_err());
    }
}
