//! Pentadiagonal matrices and a banded LU solver with partial pivoting.
//!
//! The systems solved here are the implicit-midpoint Newton matrices
//! `I + (dt^2/4) A + diagonal terms` and the stationary Jacobians
//! `A + diag(G'(u))`, both pentadiagonal. Pivoting is confined to the
//! band: with two sub- and two super-diagonals, row swaps widen the
//! upper bandwidth to at most four, so each row carries a seven-entry
//! window.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("right-hand side length {got} does not match system size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("numerically singular pivot in column {column} (|pivot| = {magnitude:e})")]
    SingularPivot { column: usize, magnitude: f64 },
}

/// Pentadiagonal matrix stored by diagonals (offsets -2..=2).
#[derive(Debug, Clone)]
pub struct PentaMatrix {
    n: usize,
    pub sub2: Vec<f64>,
    pub sub1: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup1: Vec<f64>,
    pub sup2: Vec<f64>,
}

impl PentaMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1);
        PentaMatrix {
            n,
            sub2: vec![0.0; n.saturating_sub(2)],
            sub1: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            sup1: vec![0.0; n.saturating_sub(1)],
            sup2: vec![0.0; n.saturating_sub(2)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        m.diag.iter_mut().for_each(|d| *d = 1.0);
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Entry (i, j); zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match j as isize - i as isize {
            -2 => self.sub2[j],
            -1 => self.sub1[j],
            0 => self.diag[i],
            1 => self.sup1[i],
            2 => self.sup2[i],
            _ => 0.0,
        }
    }

    /// `scale * self` with `extra[i]` added to the diagonal.
    ///
    /// This is the shape of every Newton system in the integrator:
    /// the off-diagonal structure comes from the stiffness operator,
    /// the state-dependent part is purely diagonal.
    pub fn scaled_with_diagonal(&self, scale: f64, extra: &[f64]) -> PentaMatrix {
        assert_eq!(extra.len(), self.n);
        let mut out = self.clone();
        for v in out
            .sub2
            .iter_mut()
            .chain(out.sub1.iter_mut())
            .chain(out.sup1.iter_mut())
            .chain(out.sup2.iter_mut())
        {
            *v *= scale;
        }
        for (d, e) in out.diag.iter_mut().zip(extra) {
            *d = *d * scale + e;
        }
        out
    }

    /// Matrix-vector product.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n);
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * u[i];
            if i >= 1 {
                s += self.sub1[i - 1] * u[i - 1];
            }
            if i >= 2 {
                s += self.sub2[i - 2] * u[i - 2];
            }
            if i + 1 < n {
                s += self.sup1[i] * u[i + 1];
            }
            if i + 2 < n {
                s += self.sup2[i] * u[i + 2];
            }
            out[i] = s;
        }
        out
    }

    /// Matrix-vector product with a compensated row sum (fma product
    /// errors folded into a Neumaier accumulator). Used for iterative
    /// refinement residuals, where naive evaluation at stiff scales
    /// (entries ~ h^-4) would drown the true residual.
    pub fn apply_compensated(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n);
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = CompensatedSum::default();
            acc.add_product(self.diag[i], u[i]);
            if i >= 1 {
                acc.add_product(self.sub1[i - 1], u[i - 1]);
            }
            if i >= 2 {
                acc.add_product(self.sub2[i - 2], u[i - 2]);
            }
            if i + 1 < n {
                acc.add_product(self.sup1[i], u[i + 1]);
            }
            if i + 2 < n {
                acc.add_product(self.sup2[i], u[i + 2]);
            }
            out[i] = acc.value();
        }
        out
    }
}

/// Neumaier compensated accumulator; `add_product` also captures the
/// rounding error of the multiplication via fused multiply-add.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let err = a.mul_add(b, -p);
        self.add(p);
        self.comp += err;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

const BAND_WIDTH: usize = 7; // columns i-2 ..= i+4 after pivoting fill

/// LU factorization of a pentadiagonal matrix with partial pivoting.
#[derive(Debug)]
pub struct BandedLu {
    n: usize,
    /// Row-major windows over columns i-2 ..= i+4 holding U.
    rows: Vec<[f64; BAND_WIDTH]>,
    /// Pivot row chosen at each elimination column.
    pivots: Vec<usize>,
    /// Elimination multipliers for the (up to two) rows below each pivot.
    multipliers: Vec<[f64; 2]>,
}

impl BandedLu {
    pub fn factor(m: &PentaMatrix) -> Result<BandedLu, SolveError> {
        let n = m.n;
        let mut rows = vec![[0.0; BAND_WIDTH]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            // slot s holds column i - 2 + s
            if i >= 2 {
                row[0] = m.sub2[i - 2];
            }
            if i >= 1 {
                row[1] = m.sub1[i - 1];
            }
            row[2] = m.diag[i];
            if i + 1 < n {
                row[3] = m.sup1[i];
            }
            if i + 2 < n {
                row[4] = m.sup2[i];
            }
        }
        let mut pivots = vec![0usize; n];
        let mut multipliers = vec![[0.0; 2]; n];

        let slot = |row: usize, col: usize| col + 2 - row;
        for k in 0..n {
            let last_row = (k + 2).min(n - 1);
            let mut p = k;
            let mut best = rows[k][slot(k, k)].abs();
            for r in (k + 1)..=last_row {
                let v = rows[r][slot(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(SolveError::SingularPivot {
                    column: k,
                    magnitude: best,
                });
            }
            pivots[k] = p;
            let last_col = (k + 4).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (sk, sp) = (slot(k, j), slot(p, j));
                    let tmp = rows[k][sk];
                    rows[k][sk] = rows[p][sp];
                    rows[p][sp] = tmp;
                }
            }
            let pivot = rows[k][slot(k, k)];
            for r in (k + 1)..=last_row {
                let mul = rows[r][slot(r, k)] / pivot;
                multipliers[k][r - k - 1] = mul;
                rows[r][slot(r, k)] = 0.0;
                for j in (k + 1)..=last_col {
                    rows[r][slot(r, j)] -= mul * rows[k][slot(k, j)];
                }
            }
        }
        Ok(BandedLu {
            n,
            rows,
            pivots,
            multipliers,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
        if rhs.len() != self.n {
            return Err(SolveError::LengthMismatch {
                expected: self.n,
                got: rhs.len(),
            });
        }
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        let slot = |row: usize, col: usize| col + 2 - row;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let last_row = (k + 2).min(n - 1);
            for r in (k + 1)..=last_row {
                x[r] -= self.multipliers[k][r - k - 1] * x[k];
            }
        }
        for i in (0..n).rev() {
            let last_col = (i + 4).min(n - 1);
            let mut s = x[i];
            for j in (i + 1)..=last_col {
                s -= self.rows[i][slot(i, j)] * x[j];
            }
            x[i] = s / self.rows[i][2];
        }
    }
}

/// Factor and solve, then polish with iterative refinement against the
/// compensated residual, keeping the best iterate found.
///
/// For well-conditioned systems the raw solve already has a relative
/// residual near machine epsilon; refinement matters for the stiff
/// stationary systems where the achievable residual is limited by the
/// representability of the solution itself.
pub fn banded_solve(m: &PentaMatrix, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
    if rhs.len() != m.n {
        return Err(SolveError::LengthMismatch {
            expected: m.n,
            got: rhs.len(),
        });
    }
    let lu = BandedLu::factor(m)?;
    let mut best = lu.solve(rhs)?;
    let residual = |x: &[f64]| -> (Vec<f64>, f64) {
        let ax = m.apply_compensated(x);
        let r: Vec<f64> = ax.iter().zip(rhs).map(|(a, b)| a - b).collect();
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        (r, norm)
    };
    let (mut r, mut best_norm) = residual(&best);
    for _ in 0..3 {
        if best_norm == 0.0 {
            break;
        }
        let mut corr = r.clone();
        lu.solve_in_place(&mut corr);
        let candidate: Vec<f64> = best.iter().zip(&corr).map(|(x, c)| x - c).collect();
        let (cr, cn) = residual(&candidate);
        if cn < best_norm {
            best = candidate;
            r = cr;
            best_norm = cn;
        } else {
            break;
        }
    }
    Ok(best)
}
