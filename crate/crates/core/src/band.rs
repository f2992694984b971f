//! Banded LU factorization with partial pivoting.
//!
//! The Newton linearizations live on a structured grid: with lexicographic
//! node numbering the stencil reaches at most one grid line away, so the
//! Jacobian has lower/upper bandwidth `ny + 1`. A direct banded factorization
//! is exact, deterministic, and fast at the grid sizes this crate targets.
//!
//! Storage follows the usual band layout with `kl` extra rows for pivoting
//! fill: entry `(i, j)` of the matrix lives at `work[kl + ku + i - j][j]`.

use crate::{Error, Result};

/// General banded matrix with `kl` sub- and `ku` super-diagonals.
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row-major band storage, `(2*kl + ku + 1) x n`.
    work: Vec<f64>,
    rows: usize,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> BandMatrix {
        let rows = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, work: vec![0.0; rows * n], rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(i + self.ku >= j && j + self.kl >= i, "({i}, {j}) outside band");
        let r = self.kl + self.ku + i - j;
        r * self.n + j
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.work[s] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.work[s] = v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + self.ku < j || j + self.kl < i {
            return 0.0;
        }
        self.work[self.slot(i, j)]
    }

    /// Factor in place (partial pivoting, row interchanges kept inside the
    /// band fill region). Returns the pivot permutation.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku;
        let kv = kl + ku; // row of the diagonal in work
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            // pivot search in column j among rows j..=min(j+kl, n-1)
            let reach = kl.min(n - 1 - j);
            let mut p = 0usize;
            let mut pmax = 0.0f64;
            for q in 0..=reach {
                let v = self.work[(kv + q) * n + j].abs();
                if v > pmax {
                    pmax = v;
                    p = q;
                }
            }
            if pmax == 0.0 {
                return Err(Error::Solver(format!(
                    "singular Jacobian: zero pivot column {j} of {n}"
                )));
            }
            ipiv[j] = j + p;
            if p != 0 {
                // swap rows j and j+p across their shared band columns
                let cmax = (j + kv).min(n - 1);
                for c in j..=cmax {
                    let a = (kv + j) - c;
                    let s1 = a * self.n + c;
                    let s2 = (a + p) * self.n + c;
                    self.work.swap(s1, s2);
                }
            }
            let diag = self.work[kv * n + j];
            for q in 1..=reach {
                let s = (kv + q) * n + j;
                let m = self.work[s] / diag;
                self.work[s] = m; // store multiplier
                if m != 0.0 {
                    let cmax = (j + kv).min(n - 1);
                    for c in (j + 1)..=cmax {
                        let a = (kv + j) - c;
                        let v = self.work[a * self.n + c];
                        if v != 0.0 {
                            self.work[(a + q) * self.n + c] -= m * v;
                        }
                    }
                }
            }
        }
        Ok(BandLu { n, kl, ku, work: self.work, ipiv, rows: self.rows })
    }
}

/// Factored banded matrix.
#[derive(Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    work: Vec<f64>,
    ipiv: Vec<usize>,
    #[allow(dead_code)]
    rows: usize,
}

impl BandLu {
    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) -> Result<()> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::Contract(format!(
                "rhs length {} does not match matrix order {n}",
                b.len()
            )));
        }
        let kl = self.kl;
        let kv = kl + self.ku;
        // forward: apply permutation + L
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let reach = kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                for q in 1..=reach {
                    b[j + q] -= self.work[(kv + q) * n + j] * bj;
                }
            }
        }
        // back substitution with U (bandwidth kv above the diagonal)
        for j in (0..n).rev() {
            let mut s = b[j];
            let cmax = (j + kv).min(n - 1);
            for c in (j + 1)..=cmax {
                let a = (kv + j) - c;
                s -= self.work[a * n + c] * b[c];
            }
            let diag = self.work[kv * n + j];
            b[j] = s / diag;
        }
        Ok(())
    }
}
