use crate::error::{DcotError, Result};

/// Real-valued sparse vector with strictly increasing indices. Explicit
/// zeros are allowed (the dense segments of a flattened representation
/// keep them).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(DcotError::InvalidConfig(
                    "sparse indices must be strictly increasing".into(),
                ));
            }
        }
        if let Some(&(i, _)) = entries.last() {
            if i >= dim {
                return Err(DcotError::IndexOutOfRange { index: i, dim });
            }
        }
        Ok(SparseVector { dim, entries })
    }

    pub(crate) fn from_sorted_unchecked(dim: usize, entries: Vec<(usize, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        SparseVector { dim, entries }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, &v)| (i, v))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Euclidean distance, summed over the union of supports.
    pub fn euclidean(&self, other: &SparseVector) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < a.len() || j < b.len() {
            let diff = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) if x.0 == y.0 => {
                    i += 1;
                    j += 1;
                    x.1 - y.1
                }
                (Some(x), Some(y)) if x.0 < y.0 => {
                    i += 1;
                    x.1
                }
                (Some(x), None) => {
                    i += 1;
                    x.1
                }
                (_, Some(y)) => {
                    j += 1;
                    y.1
                }
                (None, None) => unreachable!(),
            };
            acc += diff * diff;
        }
        acc.sqrt()
    }

    /// `1 - cos(a, b)`; a zero vector is treated as orthogonal to everything.
    pub fn cosine_distance(&self, other: &SparseVector) -> f64 {
        let denom = (self.norm_sq() * other.norm_sq()).sqrt();
        if denom == 0.0 {
            return 1.0;
        }
        1.0 - self.dot(other) / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances_match_dense() {
        let a = SparseVector::from_dense(&[1.0, 0.0, 2.0, 0.0]);
        let b = SparseVector::from_dense(&[0.0, 3.0, 2.0, 1.0]);
        assert_eq!(a.dot(&b), 4.0);
        let e: f64 = [1.0f64, -3.0, 0.0, -1.0].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((a.euclidean(&b) - e).abs() < 1e-15);
        let cos = 4.0 / (5.0f64.sqrt() * 14.0f64.sqrt());
        assert!((a.cosine_distance(&b) - (1.0 - cos)).abs() < 1e-15);
        assert_eq!(a.cosine_distance(&SparseVector::from_dense(&[0.0; 4])), 1.0);
    }

    #[test]
    fn rejects_unsorted() {
        assert!(SparseVector::new(3, vec![(1, 1.0), (0, 1.0)]).is_err());
        assert!(SparseVector::new(3, vec![(3, 1.0)]).is_err());
    }
}
