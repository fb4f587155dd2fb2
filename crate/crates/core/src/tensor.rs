//! Dense rank-3 and rank-4 arrays with equal extents.

use serde::{Deserialize, Serialize};

/// Row-major d^rank array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub dim: usize,
    pub rank: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dim: usize, rank: usize) -> Self {
        Tensor {
            dim,
            rank,
            data: vec![0.0; dim.pow(rank as u32)],
        }
    }

    pub fn from_fn(dim: usize, rank: usize, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(dim, rank);
        let mut idx = vec![0usize; rank];
        for flat in 0..t.data.len() {
            let mut r = flat;
            for slot in (0..rank).rev() {
                idx[slot] = r % dim;
                r /= dim;
            }
            t.data[flat] = f(&idx);
        }
        t
    }

    #[inline]
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    #[inline]
    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    #[inline]
    pub fn at3(&self, i: usize, k: usize, l: usize) -> f64 {
        self.data[(i * self.dim + k) * self.dim + l]
    }

    #[inline]
    pub fn at4(&self, i: usize, k: usize, l: usize, m: usize) -> f64 {
        self.data[((i * self.dim + k) * self.dim + l) * self.dim + m]
    }

    pub fn from_vector(v: &[f64]) -> Self {
        Tensor {
            dim: v.len(),
            rank: 1,
            data: v.to_vec(),
        }
    }

    pub fn from_matrix(m: &nalgebra::DMatrix<f64>) -> Self {
        Tensor::from_fn(m.nrows(), 2, |i| m[(i[0], i[1])])
    }

    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        assert_eq!(self.rank, 2);
        nalgebra::DMatrix::from_fn(self.dim, self.dim, |i, k| self.data[i * self.dim + k])
    }

    pub fn amax(&self) -> f64 {
        crate::linalg::amax(&self.data)
    }

    /// Max |self − other|.
    pub fn max_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Max |T[idx] − T[perm(idx)]| over all indices.
    pub fn symmetry_defect(&self, perm: &[usize]) -> f64 {
        let mut worst = 0.0f64;
        let mut j = vec![0usize; self.rank];
        let t = Tensor::from_fn(self.dim, self.rank, |idx| {
            for (slot, &p) in perm.iter().enumerate() {
                j[slot] = idx[p];
            }
            self.get(&j)
        });
        for (a, b) in self.data.iter().zip(&t.data) {
            worst = worst.max((a - b).abs());
        }
        worst
    }
}
