//! Minimal dense row-major matrix used by the recurrent model.

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// out += self · x
    pub fn addmv(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            *o += acc;
        }
    }

    /// out += selfᵀ · x
    pub fn addmv_t(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &xv) in x.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let row = self.row(r);
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * xv;
            }
        }
    }

    /// self += u · vᵀ
    pub fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        let cols = self.cols;
        for (r, &uv) in u.iter().enumerate() {
            if uv == 0.0 {
                continue;
            }
            let row = &mut self.data[r * cols..(r + 1) * cols];
            for (o, w) in row.iter_mut().zip(v) {
                *o += uv * w;
            }
        }
    }
}

pub fn add_assign(out: &mut [f64], x: &[f64]) {
    debug_assert_eq!(out.len(), x.len());
    for (o, v) in out.iter_mut().zip(x) {
        *o += v;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_transpose_agree_with_hand_case() {
        // A = [[1,2],[3,4],[5,6]]
        let a = Mat { rows: 3, cols: 2, data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0] };
        let mut y = vec![0.0; 3];
        a.addmv(&[1.0, -1.0], &mut y);
        assert_eq!(y, vec![-1.0, -1.0, -1.0]);
        let mut yt = vec![0.0; 2];
        a.addmv_t(&[1.0, 0.0, -1.0], &mut yt);
        assert_eq!(yt, vec![-4.0, -4.0]);
    }

    #[test]
    fn outer_product_accumulates() {
        let mut a = Mat::zeros(2, 3);
        a.add_outer(&[2.0, -1.0], &[1.0, 0.0, 3.0]);
        assert_eq!(a.data, vec![2.0, 0.0, 6.0, -1.0, 0.0, -3.0]);
    }

    #[test]
    fn softmax_is_shift_invariant_and_stable() {
        let p1 = softmax(&[1.0, 2.0, 3.0]);
        let p2 = softmax(&[101.0, 102.0, 103.0]);
        for (a, b) in p1.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-12);
        }
        let extreme = softmax(&[1e4, -1e4, 0.0]);
        assert!(extreme.iter().all(|p| p.is_finite() && *p >= 0.0));
        assert!((extreme.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
