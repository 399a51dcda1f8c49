//! Discrete biharmonic operator with hinged boundary conditions,
//! discrete norms, sine transforms, and the discrete embedding constants.
//!
//! The hinged conditions u = 0, u_xx = 0 at both endpoints are encoded by
//! the ghost reflection u_{-1} = -u_1: combined with u_0 = 0 the discrete
//! second difference vanishes at the boundary, so the interior stencil
//! (1, -4, 6, -4, 1)/h^4 collapses to (5, -4, 1)/h^4 on the first and last
//! rows. This choice keeps the operator symmetric and makes the sine modes
//! sin(k pi (x - c)/L) exact eigenvectors with eigenvalues
//! lambda_k^2 = (4 sin^2(k pi h / (2L)) / h^2)^2.

use crate::banded::{CompensatedSum, PentaMatrix};
use crate::problem::Grid;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("vector length {got} does not match interior size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("lm norm requires exponent m >= 1 (got {0})")]
    ExponentBelowOne(f64),
}

/// The discrete biharmonic with hinged boundary rows.
#[derive(Debug, Clone)]
pub struct BandedOperator {
    n: usize,
    h: f64,
    h4: f64,
    mat: PentaMatrix,
}

/// Assemble the hinged-beam biharmonic on the interior nodes of `grid`.
pub fn assemble_biharmonic(grid: &Grid) -> BandedOperator {
    let n = grid.interior_len();
    let h = grid.spacing();
    let h4 = h.powi(4);
    let mut mat = PentaMatrix::zeros(n);
    for i in 0..n {
        mat.diag[i] = if i == 0 || i == n - 1 {
            5.0 / h4
        } else {
            6.0 / h4
        };
    }
    for i in 0..n - 1 {
        mat.sub1[i] = -4.0 / h4;
        mat.sup1[i] = -4.0 / h4;
    }
    for i in 0..n.saturating_sub(2) {
        mat.sub2[i] = 1.0 / h4;
        mat.sup2[i] = 1.0 / h4;
    }
    BandedOperator { n, h, h4, mat }
}

impl BandedOperator {
    pub fn interior_len(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// The stored diagonals, for building Newton systems.
    pub fn matrix(&self) -> &PentaMatrix {
        &self.mat
    }

    /// Apply the operator. The stencil combination is accumulated with a
    /// compensated sum before the single division by h^4; every product
    /// in the combination (1, 2, 4 times a node value) is exact, so the
    /// result carries relative rounding only. Naive evaluation would
    /// leave absolute noise of order |u| eps / h^4, which is what the
    /// energy identity and stationary residuals are measured against.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>, OperatorError> {
        if u.len() != self.n {
            return Err(OperatorError::LengthMismatch {
                expected: self.n,
                got: u.len(),
            });
        }
        let mut out = vec![0.0; self.n];
        self.apply_into(u, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(u.len(), n);
        debug_assert_eq!(out.len(), n);
        for i in 0..n {
            let mut acc = CompensatedSum::default();
            acc.add(4.0 * u[i]);
            if i == 0 || i == n - 1 {
                acc.add(u[i]);
            } else {
                acc.add(2.0 * u[i]);
            }
            if i >= 2 {
                acc.add(u[i - 2]);
            }
            if i >= 1 {
                acc.add(-4.0 * u[i - 1]);
            }
            if i + 1 < n {
                acc.add(-4.0 * u[i + 1]);
            }
            if i + 2 < n {
                acc.add(u[i + 2]);
            }
            out[i] = acc.value() / self.h4;
        }
    }

    /// Quadratic form (Au, u)_h; this is the squared discrete bending
    /// seminorm, the backbone of the solution energy.
    pub fn quadratic_form(&self, u: &[f64]) -> Result<f64, OperatorError> {
        let au = self.apply(u)?;
        Ok(self.h * au.iter().zip(u).map(|(a, b)| a * b).sum::<f64>())
    }
}

/// Discrete embedding constants for the hinged space.
///
/// `b` is the discrete Poincare constant: ||u||_2 <= b ||u||_{H2*} holds
/// exactly on the interior vectors, with equality at the first sine mode.
/// It exceeds the continuum (L/pi)^2 at finite N, so certified envelopes
/// remain valid for the computed trajectory.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteConstants {
    /// Poincare constant 1/lambda_1.
    pub b: f64,
    /// Sup-norm embedding: ||u||_inf <= k_inf ||u||_{H2*}.
    pub k_inf: f64,
    /// Smallest biharmonic eigenvalue lambda_1^2.
    pub mu1: f64,
}

pub fn discrete_constants(grid: &Grid) -> DiscreteConstants {
    let lambda1 = second_difference_eigenvalue(grid, 1);
    let b = 1.0 / lambda1;
    DiscreteConstants {
        b,
        k_inf: (grid.length().sqrt() / 2.0) * b.sqrt(),
        mu1: lambda1 * lambda1,
    }
}

/// k-th eigenvalue of the second-difference operator on the interior grid:
/// 4 sin^2(k pi h / (2L)) / h^2.
pub fn second_difference_eigenvalue(grid: &Grid, k: usize) -> f64 {
    let h = grid.spacing();
    let s = (k as f64 * std::f64::consts::PI * h / (2.0 * grid.length())).sin();
    4.0 * s * s / (h * h)
}

/// k-th eigenvalue of the discrete biharmonic (= lambda_k^2).
pub fn biharmonic_eigenvalue(grid: &Grid, k: usize) -> f64 {
    let l = second_difference_eigenvalue(grid, k);
    l * l
}

#[derive(Debug, Clone, Copy)]
pub struct Norms {
    pub l2: f64,
    pub h2star: f64,
    pub sup: f64,
    pub lm: f64,
}

pub fn l2_norm(u: &[f64], h: f64) -> f64 {
    (h * u.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

pub fn sup_norm(u: &[f64]) -> f64 {
    u.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn lm_norm(u: &[f64], h: f64, m: f64) -> Result<f64, OperatorError> {
    if m < 1.0 {
        return Err(OperatorError::ExponentBelowOne(m));
    }
    Ok((h * u.iter().map(|x| x.abs().powf(m)).sum::<f64>()).powf(1.0 / m))
}

pub fn h2star_norm(op: &BandedOperator, u: &[f64]) -> Result<f64, OperatorError> {
    Ok(op.quadratic_form(u)?.max(0.0).sqrt())
}

/// All four norms at once, with `m` the damping exponent for the lm norm.
pub fn norms(op: &BandedOperator, u: &[f64], m: f64) -> Result<Norms, OperatorError> {
    if u.len() != op.interior_len() {
        return Err(OperatorError::LengthMismatch {
            expected: op.interior_len(),
            got: u.len(),
        });
    }
    Ok(Norms {
        l2: l2_norm(u, op.spacing()),
        h2star: h2star_norm(op, u)?,
        sup: sup_norm(u),
        lm: lm_norm(u, op.spacing(), m)?,
    })
}

/// Discrete sine transform (direct O(N^2) evaluation): coefficients c_k
/// such that u_i = sum_k c_k sin(k pi i / N), k = 1..N-1.
pub fn dst(u: &[f64]) -> Vec<f64> {
    let n = u.len() + 1; // subdivision count N
    let scale = 2.0 / n as f64;
    (1..n)
        .map(|k| {
            let mut acc = CompensatedSum::default();
            for (i, ui) in u.iter().enumerate() {
                let arg = std::f64::consts::PI * (k * (i + 1)) as f64 / n as f64;
                acc.add(ui * arg.sin());
            }
            scale * acc.value()
        })
        .collect()
}

/// Inverse of [`dst`]: synthesize nodal values from sine coefficients.
pub fn idst(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len() + 1;
    (1..n)
        .map(|i| {
            let mut acc = CompensatedSum::default();
            for (k, ck) in coeffs.iter().enumerate() {
                let arg = std::f64::consts::PI * ((k + 1) * i) as f64 / n as f64;
                acc.add(ck * arg.sin());
            }
            acc.value()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{BeamDomain, Grid};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn pi_grid(n: usize) -> Grid {
        Grid::new(&BeamDomain::new(0.0, PI).unwrap(), n).unwrap()
    }

    fn sine_mode(grid: &Grid, k: usize) -> Vec<f64> {
        grid.nodes()
            .map(|x| (k as f64 * PI * (x - grid.left()) / grid.length()).sin())
            .collect()
    }

    /// Dense symmetric eigenvalues via nalgebra, as an independent check
    /// of the analytic eigenvalue formula.
    fn dense_eigenvalues(op: &BandedOperator) -> Vec<f64> {
        let n = op.interior_len();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| op.matrix().get(i, j));
        let mut eig: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        eig
    }

    #[test]
    fn boundary_rows_carry_ghost_reflection() {
        let grid = pi_grid(8);
        let op = assemble_biharmonic(&grid);
        let h4 = grid.spacing().powi(4);
        assert_relative_eq!(op.matrix().get(0, 0), 5.0 / h4);
        assert_relative_eq!(op.matrix().get(0, 1), -4.0 / h4);
        assert_relative_eq!(op.matrix().get(0, 2), 1.0 / h4);
        assert_relative_eq!(op.matrix().get(3, 3), 6.0 / h4);
        assert_relative_eq!(op.matrix().get(6, 6), 5.0 / h4);
    }

    #[test]
    fn zero_vector_maps_to_zero() {
        let op = assemble_biharmonic(&pi_grid(16));
        let out = op.apply(&[0.0; 15]).unwrap();
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sine_mode_is_eigenvector_at_n4() {
        // N = 4, L = pi: lambda_1 = 4 sin^2(pi/8)/(pi/4)^2, eigenvalue lambda_1^2
        let grid = pi_grid(4);
        let op = assemble_biharmonic(&grid);
        let lambda1 = second_difference_eigenvalue(&grid, 1);
        assert_relative_eq!(lambda1, 0.9496412035517837, max_relative = 1e-13);
        let mu1 = lambda1 * lambda1;
        assert_relative_eq!(mu1, 0.9018184154832803, max_relative = 1e-13);
        let u = sine_mode(&grid, 1);
        let au = op.apply(&u).unwrap();
        for (a, x) in au.iter().zip(&u) {
            assert_relative_eq!(*a, mu1 * x, max_relative = 1e-12);
        }
        // cross-check against a dense eigensolve
        let eig = dense_eigenvalues(&op);
        assert_relative_eq!(eig[0], mu1, max_relative = 1e-12);
    }

    #[test]
    fn all_sine_modes_are_eigenvectors() {
        let grid = pi_grid(16);
        let op = assemble_biharmonic(&grid);
        for k in 1..16 {
            let mu = biharmonic_eigenvalue(&grid, k);
            let u = sine_mode(&grid, k);
            let au = op.apply(&u).unwrap();
            for (a, x) in au.iter().zip(&u) {
                assert!((a - mu * x).abs() <= 1e-9 * (1.0 + mu), "k={k}");
            }
        }
    }

    #[test]
    fn dense_eigenvalues_match_analytic_up_to_n12() {
        for n in [4usize, 7, 12] {
            let grid = pi_grid(n);
            let op = assemble_biharmonic(&grid);
            let eig = dense_eigenvalues(&op);
            for k in 1..n {
                let mu = biharmonic_eigenvalue(&grid, k);
                assert!(
                    (eig[k - 1] - mu).abs() <= 1e-10 * mu,
                    "N={n} k={k}: {} vs {}",
                    eig[k - 1],
                    mu
                );
            }
        }
    }

    #[test]
    fn smallest_eigenvalue_near_continuum_at_n64() {
        let grid = pi_grid(64);
        let mu1 = biharmonic_eigenvalue(&grid, 1);
        // continuum value is 1 for L = pi
        assert!((mu1 - 1.0).abs() < 0.002, "mu1 = {mu1}");
    }

    #[test]
    fn apply_is_symmetric_and_positive() {
        let grid = pi_grid(24);
        let op = assemble_biharmonic(&grid);
        let h = grid.spacing();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let u: Vec<f64> = (0..23).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..23).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let au = op.apply(&u).unwrap();
            let aw = op.apply(&w).unwrap();
            let lhs = h * au.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let rhs = h * aw.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            assert!(op.quadratic_form(&u).unwrap() > 0.0);
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let op = assemble_biharmonic(&pi_grid(8));
        assert!(matches!(
            op.apply(&[1.0; 3]),
            Err(OperatorError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn discrete_constants_formulas() {
        let grid = pi_grid(4);
        let c = discrete_constants(&grid);
        assert_relative_eq!(c.b, 1.0530292875455147, max_relative = 1e-13);
        assert_relative_eq!(c.mu1, 0.9018184154832803, max_relative = 1e-13);
        assert_relative_eq!(
            c.k_inf,
            (PI.sqrt() / 2.0) * c.b.sqrt(),
            max_relative = 1e-14
        );

        // continuum limits: B -> (L/pi)^2
        let fine = Grid::new(&BeamDomain::new(0.0, PI).unwrap(), 4096).unwrap();
        assert_relative_eq!(discrete_constants(&fine).b, 1.0, max_relative = 1e-6);
        let two_pi = Grid::new(&BeamDomain::new(0.0, 2.0 * PI).unwrap(), 4096).unwrap();
        assert_relative_eq!(discrete_constants(&two_pi).b, 4.0, max_relative = 1e-6);
    }

    #[test]
    fn poincare_and_sup_embedding_hold_on_random_fields() {
        let grid = pi_grid(48);
        let op = assemble_biharmonic(&grid);
        let c = discrete_constants(&grid);
        let h = grid.spacing();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let u: Vec<f64> = (0..47).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let l2 = l2_norm(&u, h);
            let h2 = h2star_norm(&op, &u).unwrap();
            assert!(l2 <= c.b * h2 * (1.0 + 1e-12));
            assert!(sup_norm(&u) <= c.k_inf * h2 * (1.0 + 1e-12));
        }
        // equality at the first sine mode
        let u = sine_mode(&grid, 1);
        let l2 = l2_norm(&u, h);
        let h2 = h2star_norm(&op, &u).unwrap();
        assert_relative_eq!(l2, c.b * h2, max_relative = 1e-10);
    }

    #[test]
    fn norms_of_sine_mode() {
        let grid = pi_grid(64);
        let op = assemble_biharmonic(&grid);
        let u = sine_mode(&grid, 1);
        let nm = norms(&op, &u, 2.0).unwrap();
        // h * sum sin^2 = L/2 exactly on the uniform grid
        assert_relative_eq!(nm.l2, (PI / 2.0).sqrt(), epsilon = 1e-3);
        assert_relative_eq!(nm.l2, 1.2533141373155001, max_relative = 1e-12);
        let mu1 = biharmonic_eigenvalue(&grid, 1);
        assert_relative_eq!(nm.h2star, mu1.sqrt() * nm.l2, max_relative = 1e-12);
        assert_relative_eq!(nm.sup, sup_norm(&u), max_relative = 1e-15);
        // zero vector: everything zero
        let z = norms(&op, &[0.0; 63], 3.0).unwrap();
        assert_eq!((z.l2, z.h2star, z.sup, z.lm), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn lm_norm_rejects_small_exponent() {
        assert!(matches!(
            lm_norm(&[1.0], 0.1, 0.5),
            Err(OperatorError::ExponentBelowOne(_))
        ));
    }

    #[test]
    fn dst_picks_out_single_modes() {
        let grid = pi_grid(16);
        let u = sine_mode(&grid, 1);
        let c = dst(&u);
        assert_relative_eq!(c[0], 1.0, max_relative = 1e-12);
        for ck in &c[1..] {
            assert!(ck.abs() < 1e-12);
        }
    }

    #[test]
    fn dst_of_mode_mixture() {
        // sin(2x) + 0.5 sin(3x) on L = pi
        let grid = pi_grid(16);
        let u: Vec<f64> = grid
            .nodes()
            .map(|x| (2.0 * x).sin() + 0.5 * (3.0 * x).sin())
            .collect();
        let c = dst(&u);
        assert!(c[0].abs() < 1e-12);
        assert_relative_eq!(c[1], 1.0, max_relative = 1e-12);
        assert_relative_eq!(c[2], 0.5, max_relative = 1e-12);
        for ck in &c[3..] {
            assert!(ck.abs() < 1e-12);
        }
    }

    #[test]
    fn dst_roundtrip_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [3usize, 15, 63] {
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let back = idst(&dst(&u));
            let worst = u
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-10, "n={n} worst={worst:e}");
        }
    }
}
