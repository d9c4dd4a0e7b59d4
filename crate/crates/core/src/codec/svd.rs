//! Singular value decomposition of small complex matrices by one-sided
//! (Hestenes) Jacobi rotations.

use num_complex::Complex64;

use super::matrix::CMatrix;
use crate::error::{Error, Result};

pub const MAX_DIM: usize = 8;
const MAX_SWEEPS: usize = 64;

/// H = U·diag(S)·Vᴴ with U (M×M) and V (N×N) unitary and S descending.
///
/// `s` has min(M, N) entries.
#[derive(Debug, Clone)]
pub struct SvdTriple {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

impl SvdTriple {
    /// U·diag(S)·Vᴴ restricted to the min(M, N) leading singular triples.
    pub fn recompose(&self) -> CMatrix {
        let (m, n) = (self.u.rows(), self.v.rows());
        CMatrix::from_fn(m, n, |r, c| {
            self.s
                .iter()
                .enumerate()
                .map(|(j, &s)| self.u[(r, j)] * s * self.v[(c, j)].conj())
                .sum()
        })
    }
}

pub fn svd_small(h: &CMatrix) -> Result<SvdTriple> {
    let (m, n) = (h.rows(), h.cols());
    if m == 0 || n == 0 || m > MAX_DIM || n > MAX_DIM {
        return Err(Error::invalid(format!(
            "svd_small supports 1..={MAX_DIM} rows and columns, got {m}x{n}"
        )));
    }
    if !h.is_finite() {
        return Err(Error::invalid("svd_small input has non-finite entries"));
    }
    if m < n {
        // H = (Hᴴ)ᴴ = (U' S V'ᴴ)ᴴ = V' S U'ᴴ
        let t = jacobi_tall(&h.adjoint());
        return Ok(SvdTriple {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    Ok(jacobi_tall(h))
}

// Requires rows >= cols.
fn jacobi_tall(h: &CMatrix) -> SvdTriple {
    let (m, n) = (h.rows(), h.cols());
    let mut a = h.clone();
    let mut v = CMatrix::identity(n);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = Complex64::new(0.0, 0.0);
                for r in 0..m {
                    alpha += a[(r, p)].norm_sqr();
                    beta += a[(r, q)].norm_sqr();
                    gamma += a[(r, p)].conj() * a[(r, q)];
                }
                let g = gamma.norm();
                if g <= f64::EPSILON * (alpha * beta).sqrt() || g == 0.0 {
                    continue;
                }
                rotated = true;
                // phase-align column q, then a real symmetric Jacobi rotation
                let phase = Complex64::new(gamma.re / g, -gamma.im / g); // e^{-iθ}
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut a, p, q, c, s, phase);
                rotate_columns(&mut v, p, q, c, s, phase);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = (0..n)
        .map(|c| (0..m).map(|r| a[(r, c)].norm_sqr()).sum::<f64>().sqrt())
        .collect();

    // selection sort keeps the column swaps in lock step
    for i in 0..n {
        let j = (i..n)
            .max_by(|&x, &y| sigma[x].total_cmp(&sigma[y]).then(y.cmp(&x)))
            .unwrap();
        if j != i {
            sigma.swap(i, j);
            a.swap_columns(i, j);
            v.swap_columns(i, j);
        }
    }

    let scale = sigma.first().copied().unwrap_or(0.0);
    let tiny = scale * 1e-13;
    let mut u = CMatrix::zeros(m, m);
    let mut filled = 0;
    for c in 0..n {
        if sigma[c] > tiny && sigma[c] > 0.0 {
            for r in 0..m {
                u[(r, c)] = a[(r, c)] / sigma[c];
            }
            filled += 1;
        } else {
            break;
        }
    }
    complete_unitary(&mut u, filled);
    SvdTriple { u, s: sigma, v }
}

// [x_p, x_q] ← [c·x_p − s·e^{−iθ}·x_q, s·x_p + c·e^{−iθ}·x_q]
fn rotate_columns(m: &mut CMatrix, p: usize, q: usize, c: f64, s: f64, phase: Complex64) {
    for r in 0..m.rows() {
        let xp = m[(r, p)];
        let xq = m[(r, q)] * phase;
        m[(r, p)] = xp * c - xq * s;
        m[(r, q)] = xp * s + xq * c;
    }
}

// Fills columns `filled..` of `u` with an orthonormal completion of the first
// `filled` columns, drawing candidates from the standard basis.
fn complete_unitary(u: &mut CMatrix, filled: usize) {
    let m = u.rows();
    let mut next = filled;
    let mut basis = 0;
    while next < m && basis < m {
        let mut cand: Vec<Complex64> = (0..m)
            .map(|r| Complex64::new(if r == basis { 1.0 } else { 0.0 }, 0.0))
            .collect();
        // two passes of Gram–Schmidt for stability
        for _ in 0..2 {
            for c in 0..next {
                let dot: Complex64 = (0..m).map(|r| u[(r, c)].conj() * cand[r]).sum();
                for r in 0..m {
                    cand[r] -= u[(r, c)] * dot;
                }
            }
        }
        let norm = cand.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            for r in 0..m {
                u[(r, next)] = cand[r] / norm;
            }
            next += 1;
        }
        basis += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random(m: usize, n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        CMatrix::from_fn(m, n, |_, _| {
            Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
        })
    }

    fn check(h: &CMatrix, t: &SvdTriple) {
        let scale = h.frobenius_norm().max(1e-300);
        assert!(h.sub(&t.recompose()).frobenius_norm() <= 1e-10 * scale);
        assert!(t.u.gram_deviation() < 1e-10);
        assert!(t.v.gram_deviation() < 1e-10);
        assert!(t.s.windows(2).all(|w| w[0] >= w[1]));
        assert!(t.s.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn diagonal_input() {
        let h = CMatrix::from_rows(3, 2, vec![c(2.0), c(0.0), c(0.0), c(1.0), c(0.0), c(0.0)]);
        let t = svd_small(&h).unwrap();
        assert!((t.s[0] - 2.0).abs() < 1e-15 && (t.s[1] - 1.0).abs() < 1e-15);
        check(&h, &t);
    }

    #[test]
    fn zero_matrix_gives_identities() {
        let t = svd_small(&CMatrix::zeros(3, 2)).unwrap();
        assert_eq!(t.s, vec![0.0, 0.0]);
        assert_eq!(t.u, CMatrix::identity(3));
        assert_eq!(t.v, CMatrix::identity(2));
    }

    #[test]
    fn random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (m, n) in [(3, 2), (2, 3), (1, 1), (4, 4), (8, 3), (3, 8), (8, 8)] {
            for _ in 0..20 {
                let h = random(m, n, &mut rng);
                check(&h, &svd_small(&h).unwrap());
            }
        }
    }

    #[test]
    fn rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random(3, 1, &mut rng);
        let b = random(1, 2, &mut rng);
        let h = a.matmul(&b);
        let t = svd_small(&h).unwrap();
        check(&h, &t);
        assert!(t.s[1] < 1e-12 * t.s[0]);
    }

    #[test]
    fn rejects_bad_input() {
        let mut h = CMatrix::zeros(2, 2);
        h[(0, 0)] = Complex64::new(f64::NAN, 0.0);
        assert!(svd_small(&h).is_err());
        assert!(svd_small(&CMatrix::zeros(9, 2)).is_err());
    }
}
