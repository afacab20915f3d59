//! Shared Monte Carlo helpers for the integration tests.
#![allow(dead_code)]

use onebit_mimo::C64;

/// Entrywise running mean and standard error of `a·bᴴ`.
pub struct CrossMoment {
    rows: usize,
    cols: usize,
    sum: Vec<C64>,
    sq_re: Vec<f64>,
    sq_im: Vec<f64>,
    count: usize,
}

impl CrossMoment {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            sum: vec![C64::new(0.0, 0.0); rows * cols],
            sq_re: vec![0.0; rows * cols],
            sq_im: vec![0.0; rows * cols],
            count: 0,
        }
    }

    pub fn add(&mut self, a: &[C64], b: &[C64]) {
        assert_eq!((a.len(), b.len()), (self.rows, self.cols));
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                let v = ai * bj.conj();
                let idx = i * self.cols + j;
                self.sum[idx] += v;
                self.sq_re[idx] += v.re * v.re;
                self.sq_im[idx] += v.im * v.im;
            }
        }
        self.count += 1;
    }

    pub fn mean(&self, i: usize, j: usize) -> C64 {
        self.sum[i * self.cols + j] / self.count as f64
    }

    /// Standard errors of the real and imaginary parts of the mean.
    pub fn stderr(&self, i: usize, j: usize) -> (f64, f64) {
        let n = self.count as f64;
        let m = self.mean(i, j);
        let idx = i * self.cols + j;
        let var_re = ((self.sq_re[idx] / n - m.re * m.re) * n / (n - 1.0)).max(0.0);
        let var_im = ((self.sq_im[idx] / n - m.im * m.im) * n / (n - 1.0)).max(0.0);
        ((var_re / n).sqrt(), (var_im / n).sqrt())
    }

    /// Largest `|mean − expected|` in standard errors over all entries and
    /// both parts. Parts with zero spread must match to `1e-12`.
    pub fn worst_z(&self, expected: impl Fn(usize, usize) -> C64) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let d = self.mean(i, j) - expected(i, j);
                let (se_re, se_im) = self.stderr(i, j);
                for (dev, se) in [(d.re.abs(), se_re), (d.im.abs(), se_im)] {
                    let z = if se > 1e-300 {
                        dev / se
                    } else if dev < 1e-12 {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                    worst = worst.max(z);
                }
            }
        }
        worst
    }
}
