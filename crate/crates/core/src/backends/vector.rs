use serde::{Deserialize, Serialize};

/// Tolerance on the Euclidean norm of a stored embedding.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VectorError {
    #[error("vector is empty")]
    Empty,
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("vector contains a non-finite component")]
    NonFinite,
    #[error("vector norm {0} is not 1")]
    NotUnit(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Scales `components` to unit norm.
    pub fn normalized(mut components: Vec<f64>) -> Result<Self, VectorError> {
        if components.is_empty() {
            return Err(VectorError::Empty);
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(VectorError::NonFinite);
        }
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(VectorError::ZeroNorm);
        }
        for c in &mut components {
            *c /= norm;
        }
        Ok(Self(components))
    }

    /// Wraps components that are already unit norm.
    pub fn from_unit(components: Vec<f64>) -> Result<Self, VectorError> {
        if components.is_empty() {
            return Err(VectorError::Empty);
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(VectorError::NonFinite);
        }
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(VectorError::NotUnit(norm));
        }
        Ok(Self(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = VectorError;

    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        Self::from_unit(value)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(value: EmbeddingVector) -> Self {
        value.0
    }
}

/// Cosine similarity of two unit vectors: their dot product, clamped to [-1, 1].
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, VectorError> {
    if u.dim() != v.dim() {
        return Err(VectorError::DimensionMismatch(u.dim(), v.dim()));
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(c: &[f64]) -> EmbeddingVector {
        EmbeddingVector::normalized(c.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(
            cosine(&v(&[1.0, 0.0, 0.0]), &v(&[1.0, 0.0, 0.0])).unwrap(),
            1.0
        );
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine(&v(&[0.6, 0.8]), &v(&[0.8, 0.6])).unwrap();
        assert!((c - 0.96).abs() < 1e-12);
        assert_eq!(
            cosine(&v(&[1.0, 0.0]), &v(&[1.0, 0.0, 0.0])).unwrap_err(),
            VectorError::DimensionMismatch(2, 3)
        );
    }

    #[test]
    fn rejects_degenerate_vectors() {
        assert_eq!(
            EmbeddingVector::normalized(vec![]).unwrap_err(),
            VectorError::Empty
        );
        assert_eq!(
            EmbeddingVector::normalized(vec![0.0, 0.0]).unwrap_err(),
            VectorError::ZeroNorm
        );
        assert_eq!(
            EmbeddingVector::normalized(vec![f64::NAN]).unwrap_err(),
            VectorError::NonFinite
        );
        assert!(matches!(
            EmbeddingVector::from_unit(vec![2.0]),
            Err(VectorError::NotUnit(_))
        ));
    }

    proptest! {
        #[test]
        fn self_similarity_and_symmetry(
            a in proptest::collection::vec(-10.0f64..10.0, 1..16),
            b in proptest::collection::vec(-10.0f64..10.0, 1..16),
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3));
            let u = v(&a);
            prop_assert!((cosine(&u, &u).unwrap() - 1.0).abs() <= 1e-9);
            if a.len() == b.len() && b.iter().any(|x| x.abs() > 1e-3) {
                let w = v(&b);
                let c = cosine(&u, &w).unwrap();
                prop_assert_eq!(c.to_bits(), cosine(&w, &u).unwrap().to_bits());
                prop_assert!((-1.0..=1.0).contains(&c));
            }
        }
    }
}
