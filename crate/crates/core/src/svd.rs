//! Bag-of-words baseline: one-hot presence matrix, truncated SVD via a cyclic
//! Jacobi eigendecomposition of the Gram matrix.
//!
//! Alphabets and sample counts are desk-scale here, so a dependency-free
//! dense routine is plenty; Jacobi on the symmetric Gram matrix gives the
//! right singular vectors directly and is deterministic.

use serde::{Deserialize, Serialize};

use crate::num::Real;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors)` sorted by descending eigenvalue;
/// `eigenvectors[j]` is the unit eigenvector for `eigenvalues[j]`.
pub fn jacobi_eigh<F: Real>(matrix: &[Vec<F>]) -> (Vec<F>, Vec<Vec<F>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<F>> = matrix.to_vec();
    debug_assert!(a.iter().all(|r| r.len() == n), "matrix must be square");
    let mut v: Vec<Vec<F>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { F::one() } else { F::zero() })
                .collect()
        })
        .collect();

    let norm: F = matrix
        .iter()
        .flat_map(|r| r.iter())
        .map(|&x| x * x)
        .sum::<F>()
        .sqrt();
    let tiny = (norm + F::one()) * F::of(1e-14);

    for _sweep in 0..100 {
        let mut off = F::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off.sqrt() <= tiny {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.abs() <= tiny * F::of(1e-2) {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (F::of(2.0) * apq);
                let t = {
                    let root = (theta * theta + F::one()).sqrt();
                    if theta >= F::zero() {
                        F::one() / (theta + root)
                    } else {
                        F::one() / (theta - root)
                    }
                };
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;

                let app = a[p][p];
                let aqq = a[q][q];
                a[p][p] = app - t * apq;
                a[q][q] = aqq + t * apq;
                a[p][q] = F::zero();
                a[q][p] = F::zero();
                for r in 0..n {
                    if r != p && r != q {
                        let arp = a[r][p];
                        let arq = a[r][q];
                        a[r][p] = c * arp - s * arq;
                        a[p][r] = a[r][p];
                        a[r][q] = s * arp + c * arq;
                        a[q][r] = a[r][q];
                    }
                }
                for row in v.iter_mut() {
                    let vrp = row[p];
                    let vrq = row[q];
                    row[p] = c * vrp - s * vrq;
                    row[q] = s * vrp + c * vrq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j][j]
            .partial_cmp(&a[i][i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let eigenvalues: Vec<F> = order.iter().map(|&i| a[i][i]).collect();
    let mut eigenvectors: Vec<Vec<F>> = order
        .iter()
        .map(|&col| (0..n).map(|r| v[r][col]).collect())
        .collect();
    // Sign convention: the largest-magnitude component is positive, so the
    // decomposition is reproducible bit-for-bit.
    for vec in &mut eigenvectors {
        let lead = vec
            .iter()
            .enumerate()
            .max_by(|(i, x), (j, y)| {
                x.abs()
                    .partial_cmp(&y.abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(j.cmp(i))
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        if vec[lead] < F::zero() {
            for x in vec.iter_mut() {
                *x = -*x;
            }
        }
    }
    (eigenvalues, eigenvectors)
}

/// Frozen projection basis fitted on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BowBasis<F> {
    /// `components` unit vectors of length `w_total`; rows past the matrix
    /// rank are zero.
    pub vectors: Vec<Vec<F>>,
    pub w_total: usize,
}

fn presence(seq: &[usize], w_total: usize) -> Vec<bool> {
    let mut row = vec![false; w_total];
    for &tok in seq {
        row[tok] = true;
    }
    row
}

/// Fit the rank-`components` basis: one-hot encode every sequence into an
/// N x W binary presence matrix and keep the dominant right singular
/// vectors. If `components` exceeds the alphabet, the extra vectors are zero.
pub fn fit_bow_basis<F: Real>(
    sequences: &[Vec<usize>],
    w_total: usize,
    components: usize,
) -> BowBasis<F> {
    let mut gram = vec![vec![F::zero(); w_total]; w_total];
    for seq in sequences {
        let row = presence(seq, w_total);
        let on: Vec<usize> = (0..w_total).filter(|&w| row[w]).collect();
        for &w1 in &on {
            for &w2 in &on {
                gram[w1][w2] += F::one();
            }
        }
    }
    let (_, eigenvectors) = jacobi_eigh(&gram);
    let mut vectors: Vec<Vec<F>> = eigenvectors.into_iter().take(components).collect();
    while vectors.len() < components {
        vectors.push(vec![F::zero(); w_total]);
    }
    BowBasis { vectors, w_total }
}

impl<F: Real> BowBasis<F> {
    pub fn components(&self) -> usize {
        self.vectors.len()
    }

    /// Project a sequence's presence vector onto the basis. Tokens outside
    /// the training alphabet are ignored (their one-hot column never
    /// existed).
    pub fn project(&self, seq: &[usize]) -> Vec<F> {
        let row = presence(
            &seq.iter()
                .copied()
                .filter(|&t| t < self.w_total)
                .collect::<Vec<_>>(),
            self.w_total,
        );
        self.vectors
            .iter()
            .map(|vec| {
                (0..self.w_total)
                    .filter(|&w| row[w])
                    .map(|w| vec[w])
                    .sum()
            })
            .collect()
    }

    /// Squared Frobenius error of reconstructing the presence matrix from
    /// its projection, `||X - X B Bᵀ||²`.
    pub fn reconstruction_error_sq(&self, sequences: &[Vec<usize>]) -> F {
        let mut err = F::zero();
        for seq in sequences {
            let row = presence(seq, self.w_total);
            let proj = self.project(seq);
            for w in 0..self.w_total {
                let recon: F = self
                    .vectors
                    .iter()
                    .zip(&proj)
                    .map(|(vec, &p)| vec[w] * p)
                    .sum();
                let x = if row[w] { F::one() } else { F::zero() };
                let d = x - recon;
                err += d * d;
            }
        }
        err
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn basis_gram_identity(basis: &BowBasis<f64>, rank: usize) {
        for (i, vi) in basis.vectors.iter().take(rank).enumerate() {
            for (j, vj) in basis.vectors.iter().take(rank).enumerate() {
                let dot: f64 = vi.iter().zip(vj).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-8, "b{i}.b{j} = {dot}");
            }
        }
    }

    #[test]
    fn jacobi_recovers_a_known_spectrum() {
        // diag(5, 2) conjugated by a rotation of pi/6.
        let (c, s) = (3.0f64.sqrt() / 2.0, 0.5f64);
        let m = vec![
            vec![5.0 * c * c + 2.0 * s * s, (5.0 - 2.0) * c * s],
            vec![(5.0 - 2.0) * c * s, 5.0 * s * s + 2.0 * c * c],
        ];
        let (vals, vecs) = jacobi_eigh(&m);
        assert!((vals[0] - 5.0).abs() < 1e-12);
        assert!((vals[1] - 2.0).abs() < 1e-12);
        assert!((vecs[0][0].abs() - c).abs() < 1e-12);
    }

    #[test]
    fn identical_sequences_make_a_rank_one_basis()
    {
        let sequences: Vec<Vec<usize>> = (0..10).map(|_| vec![0, 2]).collect();
        let basis = fit_bow_basis::<f64>(&sequences, 4, 3);
        let p = basis.project(&[0, 2]);
        assert!(p[0].abs() > 1.0);
        assert!(p[1].abs() < 1e-9 && p[2].abs() < 1e-9);
        assert!(basis.reconstruction_error_sq(&sequences) < 1e-18);
    }

    #[test]
    fn basis_is_orthonormal() {
        let mut rng = StdRng::seed_from_u64(21);
        let sequences: Vec<Vec<usize>> = (0..20)
            .map(|_| (0..6).map(|_| rng.random_range(0..8)).collect())
            .collect();
        let basis = fit_bow_basis::<f64>(&sequences, 8, 5);
        basis_gram_identity(&basis, 5);
    }

    #[test]
    fn reconstruction_error_matches_residual_eigenvalue_mass() {
        let mut rng = StdRng::seed_from_u64(33);
        let sequences: Vec<Vec<usize>> = (0..20)
            .map(|_| (0..5).map(|_| rng.random_range(0..8)).collect())
            .collect();
        for k in [2usize, 4, 6] {
            let basis = fit_bow_basis::<f64>(&sequences, 8, k);
            let err = basis.reconstruction_error_sq(&sequences);

            // Oracle: total mass minus the top-k Gram eigenvalues, computed
            // with power iteration + deflation rather than Jacobi.
            let mut gram = vec![vec![0.0f64; 8]; 8];
            let mut total = 0.0;
            for seq in &sequences {
                let row = presence(seq, 8);
                for w1 in 0..8 {
                    if row[w1] {
                        total += 1.0;
                        for w2 in 0..8 {
                            if row[w2] {
                                gram[w1][w2] += 1.0;
                            }
                        }
                    }
                }
            }
            let mut kept = 0.0;
            for _ in 0..k {
                let (val, vec) = power_iteration(&gram);
                kept += val;
                for (i, row) in gram.iter_mut().enumerate() {
                    for (j, g) in row.iter_mut().enumerate() {
                        *g -= val * vec[i] * vec[j];
                    }
                }
            }
            let oracle = total - kept;
            assert!(
                (err - oracle).abs() < 1e-6,
                "rank {k}: {err} vs oracle {oracle}"
            );
        }
    }

    fn power_iteration(m: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let n = m.len();
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) * 0.1).collect();
        let mut val = 0.0;
        for _ in 0..20_000 {
            let mut next = vec![0.0; n];
            for (i, row) in m.iter().enumerate() {
                next[i] = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            }
            let norm: f64 = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                return (0.0, v);
            }
            for x in &mut next {
                *x /= norm;
            }
            val = norm;
            v = next;
        }
        (val, v)
    }

    #[test]
    fn rank_deficient_request_zero_pads() {
        let sequences = vec![vec![0usize], vec![1]];
        let basis = fit_bow_basis::<f64>(&sequences, 2, 5);
        assert_eq!(basis.components(), 5);
        assert!(basis.vectors[2].iter().all(|&x| x == 0.0));
        assert!(basis.vectors[4].iter().all(|&x| x == 0.0));
        // Two distinct rows, rank 2: perfect reconstruction.
        assert!(basis.reconstruction_error_sq(&sequences) < 1e-16);
    }

    #[test]
    fn oov_tokens_project_to_nothing_new() {
        let sequences = vec![vec![0usize, 1], vec![1, 2]];
        let basis = fit_bow_basis::<f64>(&sequences, 3, 2);
        let with_oov = basis.project(&[0, 1, 7]);
        let without = basis.project(&[0, 1]);
        assert_eq!(with_oov, without);
    }
}
