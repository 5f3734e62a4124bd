use alloc::vec;
use alloc::vec::Vec;

use super::NnError;

/// Row-major `rows × cols` matrix of set-element features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NnError> {
        if data.len() != rows * cols {
            return Err(NnError::Shape { expected: (rows, cols), got: (data.len(), 1) });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NnError> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(NnError::Shape { expected: (rows.len(), cols), got: (rows.len(), r.len()) });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &FeatureGrid) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn transpose(&self) -> FeatureGrid {
        let mut out = FeatureGrid::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Rows reordered so that output row `i` is input row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> FeatureGrid {
        let mut out = FeatureGrid::zeros(perm.len(), self.cols);
        for (i, &p) in perm.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.row(p));
        }
        out
    }

    /// Side-by-side concatenation `[self ‖ other]`.
    pub fn concat_cols(&self, other: &FeatureGrid) -> FeatureGrid {
        debug_assert_eq!(self.rows, other.rows);
        let cols = self.cols + other.cols;
        let mut out = FeatureGrid::zeros(self.rows, cols);
        for r in 0..self.rows {
            out.data[r * cols..r * cols + self.cols].copy_from_slice(self.row(r));
            out.data[r * cols + self.cols..(r + 1) * cols].copy_from_slice(other.row(r));
        }
        out
    }

    /// Inverse of [`concat_cols`](Self::concat_cols).
    pub fn split_cols(&self, left: usize) -> (FeatureGrid, FeatureGrid) {
        let right = self.cols - left;
        let mut a = FeatureGrid::zeros(self.rows, left);
        let mut b = FeatureGrid::zeros(self.rows, right);
        for r in 0..self.rows {
            let row = self.row(r);
            a.row_mut(r).copy_from_slice(&row[..left]);
            b.row_mut(r).copy_from_slice(&row[left..]);
        }
        (a, b)
    }

    pub fn max_abs_diff(&self, other: &FeatureGrid) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// `out = a · b` with `a: r×k`, `b: k×c`.
pub fn matmul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), r * k);
    debug_assert_eq!(b.len(), k * c);
    debug_assert_eq!(out.len(), r * c);
    out.iter_mut().for_each(|v| *v = 0.0);
    if c == 0 {
        return;
    }
    // four output rows share each row of `b`
    let blocks = r / 4;
    for blk in 0..blocks {
        let i = 4 * blk;
        let (o0, rest) = out[i * c..(i + 4) * c].split_at_mut(c);
        let (o1, rest) = rest.split_at_mut(c);
        let (o2, o3) = rest.split_at_mut(c);
        for kk in 0..k {
            let (a0, a1, a2, a3) = (a[i * k + kk], a[(i + 1) * k + kk], a[(i + 2) * k + kk], a[(i + 3) * k + kk]);
            if a0 == 0.0 && a1 == 0.0 && a2 == 0.0 && a3 == 0.0 {
                continue;
            }
            let brow = &b[kk * c..(kk + 1) * c];
            for j in 0..c {
                let bv = brow[j];
                o0[j] += a0 * bv;
                o1[j] += a1 * bv;
                o2[j] += a2 * bv;
                o3[j] += a3 * bv;
            }
        }
    }
    for i in 4 * blocks..r {
        let orow = &mut out[i * c..(i + 1) * c];
        for (kk, &aik) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &b[kk * c..(kk + 1) * c];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

/// `out += aᵀ · b` with `a: r×ka`, `b: r×kb`, `out: ka×kb`.
pub fn matmul_tn_acc(a: &[f64], b: &[f64], r: usize, ka: usize, kb: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), r * ka);
    debug_assert_eq!(b.len(), r * kb);
    debug_assert_eq!(out.len(), ka * kb);
    for i in 0..r {
        let brow = &b[i * kb..(i + 1) * kb];
        for (p, &aip) in a[i * ka..(i + 1) * ka].iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let orow = &mut out[p * kb..(p + 1) * kb];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `out = a · bᵀ` with `a: r×k`, `b: c×k`.
pub fn matmul_nt(a: &[f64], b: &[f64], r: usize, k: usize, c: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), r * k);
    debug_assert_eq!(b.len(), c * k);
    debug_assert_eq!(out.len(), r * c);
    for i in 0..r {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..c {
            let brow = &b[j * k..(j + 1) * k];
            out[i * c + j] = dot(arow, brow);
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators; summation order is fixed so results are reproducible
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2×3
        let b = [1.0, 0.0, -1.0, 2.0, 0.5, 1.0]; // 3×2
        let mut ab = [0.0; 4];
        matmul(&a, &b, 2, 3, 2, &mut ab);
        assert_eq!(ab, [0.5, 7.0, 2.0, 16.0]);

        let bt = FeatureGrid::from_vec(3, 2, b.to_vec()).unwrap().transpose();
        let mut ab2 = [0.0; 4];
        matmul_nt(&a, bt.as_slice(), 2, 3, 2, &mut ab2);
        assert_eq!(ab, ab2);

        // aᵀ·a
        let mut ata = [0.0; 9];
        matmul_tn_acc(&a, &a, 2, 3, 3, &mut ata);
        assert_eq!(ata[0], 17.0);
        assert_eq!(ata[4], 29.0);
    }

    #[test]
    fn concat_split_roundtrip() {
        let a = FeatureGrid::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = FeatureGrid::from_vec(2, 1, vec![5.0, 6.0]).unwrap();
        let c = a.concat_cols(&b);
        assert_eq!(c.row(1), &[3.0, 4.0, 6.0]);
        let (x, y) = c.split_cols(2);
        assert_eq!((x, y), (a, b));
    }
}
