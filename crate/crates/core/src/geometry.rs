//! KL divergence in contribution coordinates and the Fisher metric of the
//! class distribution as a function of the contribution matrix.
//!
//! Logits are assembled as `z = z* + 1ᵀC`, so the distribution is an
//! exponential family in `vec(C)` whose Jacobian `∂z_j / ∂C_{p,k} = δ_jk`
//! is a 0/1 assignment. The Fisher matrix is therefore
//! `Jᵀ (diag π − ππᵀ) J`, a block matrix whose `(j, k)` block is the constant
//! `F_jk`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::numeric::{compensated_sum, log_softmax, log_sum_exp, softmax};

/// Probabilities below this are raised to it before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

/// Largest `m · c` for which the Fisher matrix is materialized densely.
pub const DENSE_FISHER_LIMIT: usize = 2_000;

/// `KL(p ‖ q) = Σ p log(p / q)`. Fails when `q` is exactly zero where `p`
/// is not.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dim(format!("KL between lengths {} and {}", p.len(), q.len())));
    }
    let mut terms = Vec::with_capacity(p.len());
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi <= 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::InfiniteKl { index: i });
        }
        let pi = pi.max(PROB_FLOOR);
        terms.push(pi * (pi.ln() - qi.max(PROB_FLOOR).ln()));
    }
    Ok(compensated_sum(terms).max(0.0))
}

/// `KL(softmax(a) ‖ softmax(b))` computed through log-softmax, so it stays
/// finite for any finite logits.
pub fn kl_from_logits(a: &[f64], b: &[f64]) -> f64 {
    let la = log_softmax(a);
    let lb = log_softmax(b);
    let p = softmax(a);
    compensated_sum((0..a.len()).map(|j| p[j] * (la[j] - lb[j]))).max(0.0)
}

fn assemble(base: &[f64], contributions: &Matrix) -> Vec<f64> {
    (0..base.len())
        .map(|j| base[j] + compensated_sum((0..contributions.rows()).map(|p| contributions[(p, j)])))
        .collect()
}

/// Logits written in contribution coordinates: `z_j = z*_j + Σ_p C_{p,j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReparamLogits {
    pub base: Vec<f64>,
    pub contributions: Matrix,
}

impl ReparamLogits {
    pub fn new(base: Vec<f64>, contributions: Matrix) -> Result<Self> {
        if contributions.cols() != base.len() {
            return Err(Error::dim(format!(
                "{} base logits but {} contribution columns",
                base.len(),
                contributions.cols()
            )));
        }
        Ok(Self { base, contributions })
    }

    pub fn logits(&self) -> Vec<f64> {
        assemble(&self.base, &self.contributions)
    }

    pub fn distribution(&self) -> Vec<f64> {
        softmax(&self.logits())
    }
}

/// `KL(Pr(G1) ‖ Pr(G0))` from contribution matrices sharing one path index:
///
/// `E_{j∼π1}[1ᵀ(C1 − C0)_{:j}] − log Z(G1) + log Σ_j exp(z*_j + 1ᵀC0_{:j})`
pub fn kl_decomposed(c0: &Matrix, c1: &Matrix, z_star: &[f64]) -> Result<f64> {
    if c0.rows() != c1.rows() || c0.cols() != c1.cols() || c1.cols() != z_star.len() {
        return Err(Error::dim("contribution matrices and base logits disagree".to_string()));
    }
    let z0 = assemble(z_star, c0);
    let z1 = assemble(z_star, c1);
    let pi1 = softmax(&z1);
    let shift: Vec<f64> = (0..z_star.len())
        .map(|j| compensated_sum((0..c1.rows()).map(|p| c1[(p, j)] - c0[(p, j)])))
        .collect();
    let expected = compensated_sum(pi1.iter().zip(&shift).map(|(p, s)| p * s));
    Ok(expected - log_sum_exp(&z1) + log_sum_exp(&z0))
}

/// Fisher information of `softmax(z* + 1ᵀC)` with respect to `vec(C)`,
/// kept in factored form. `vec` stacks columns: entry `(p, j)` sits at
/// index `j · m + p`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    paths: usize,
    probs: Vec<f64>,
}

impl FisherMatrix {
    pub fn num_paths(&self) -> usize {
        self.paths
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `diag π − ππᵀ`, the Fisher matrix in logit space.
    pub fn logit_fisher(&self) -> Matrix {
        let c = self.probs.len();
        let mut f = Matrix::zeros(c, c);
        for a in 0..c {
            for b in 0..c {
                f[(a, b)] = if a == b { self.probs[a] } else { 0.0 } - self.probs[a] * self.probs[b];
            }
        }
        f
    }

    /// `δᵀ I δ`, by collapsing `δ` onto per-class sums first.
    pub fn quadratic_form(&self, delta: &[f64]) -> Result<f64> {
        let (m, c) = (self.paths, self.probs.len());
        if delta.len() != m * c {
            return Err(Error::dim(format!("direction has length {}, expected {}", delta.len(), m * c)));
        }
        let s: Vec<f64> = (0..c).map(|j| compensated_sum(delta[j * m..(j + 1) * m].iter().copied())).collect();
        let mean = compensated_sum(self.probs.iter().zip(&s).map(|(p, v)| p * v));
        Ok(compensated_sum(self.probs.iter().zip(&s).map(|(p, v)| p * v * v)) - mean * mean)
    }

    /// The full `(mc) × (mc)` matrix, when small enough to materialize.
    pub fn dense(&self) -> Option<Matrix> {
        let (m, c) = (self.paths, self.probs.len());
        if m * c > DENSE_FISHER_LIMIT {
            return None;
        }
        let f = self.logit_fisher();
        let mut out = Matrix::zeros(m * c, m * c);
        for a in 0..m * c {
            for b in 0..m * c {
                out[(a, b)] = f[(a / m, b / m)];
            }
        }
        Some(out)
    }

    /// Smallest eigenvalue of the dense matrix.
    pub fn min_eigenvalue(&self) -> Option<f64> {
        let dense = self.dense()?;
        let n = dense.rows();
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, dense.as_slice()));
        eig.eigenvalues.iter().copied().reduce(f64::min)
    }
}

/// Fisher matrix at `C1` with base logits `z*`.
pub fn fisher_information(c1: &Matrix, z_star: &[f64]) -> Result<FisherMatrix> {
    let reparam = ReparamLogits::new(z_star.to_vec(), c1.clone())?;
    Ok(FisherMatrix {
        paths: c1.rows(),
        probs: reparam.distribution(),
    })
}

/// Second-order KL estimate `½ δᵀ I δ` for a perturbation `δ = vec(ΔC)`.
pub fn quadratic_kl_approx(fisher: &FisherMatrix, delta: &[f64]) -> Result<f64> {
    Ok(0.5 * fisher.quadratic_form(delta)?)
}
