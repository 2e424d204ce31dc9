//! Kaiser-normalized varimax rotation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RotationResult {
    /// Orthogonal `m × m` matrix with `rotated = loadings · gamma`.
    pub gamma: DMatrix<f64>,
    pub rotated: DMatrix<f64>,
    /// Varimax criterion of the normalized rotated loadings.
    pub criterion: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// Sum over factors of the variance of squared (normalized) loadings.
pub fn varimax_criterion(normalized: &DMatrix<f64>) -> f64 {
    let p = normalized.nrows() as f64;
    normalized
        .column_iter()
        .map(|c| {
            let sq: Vec<f64> = c.iter().map(|v| v * v).collect();
            let mean = sq.iter().sum::<f64>() / p;
            sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / p
        })
        .sum()
}

/// Rotate `loadings` by cycling planar rotations over all column pairs until
/// the largest angle in a sweep drops below `tol`.
///
/// The output columns are signed to have a non-negative sum and sorted by
/// decreasing sum of squares; `gamma` carries the same permutation and signs.
pub fn varimax(loadings: &DMatrix<f64>, tol: f64, max_sweeps: usize) -> Result<RotationResult> {
    let (p, m) = loadings.shape();
    if m == 0 {
        return Err(Error::InvalidParameter("cannot rotate zero factors".into()));
    }
    let h: Vec<f64> = loadings.row_iter().map(|r| r.norm()).collect();
    if let Some(j) = h.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::ZeroCommunality(j));
    }
    let mut x = DMatrix::from_fn(p, m, |i, k| loadings[(i, k)] / h[i]);
    let mut gamma = DMatrix::<f64>::identity(m, m);
    let mut sweeps = 0;
    let mut converged = m == 1;
    let pf = p as f64;
    while !converged && sweeps < max_sweeps {
        sweeps += 1;
        let mut largest = 0.0f64;
        for a in 0..m - 1 {
            for b in a + 1..m {
                let (mut sa, mut sb, mut sc, mut sd) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..p {
                    let (u0, v0) = (x[(i, a)], x[(i, b)]);
                    let u = u0 * u0 - v0 * v0;
                    let v = 2.0 * u0 * v0;
                    sa += u;
                    sb += v;
                    sc += u * u - v * v;
                    sd += 2.0 * u * v;
                }
                let num = sd - 2.0 * sa * sb / pf;
                let den = sc - (sa * sa - sb * sb) / pf;
                let phi = 0.25 * num.atan2(den);
                largest = largest.max(phi.abs());
                if phi.abs() < 1e-15 {
                    continue;
                }
                let (s, c) = phi.sin_cos();
                rotate_columns(&mut x, a, b, c, s);
                rotate_columns(&mut gamma, a, b, c, s);
            }
        }
        if largest < tol {
            converged = true;
        }
    }

    let criterion = varimax_criterion(&x);
    // sign and order conventions
    let mut rotated = loadings * &gamma;
    for k in 0..m {
        if rotated.column(k).sum() < 0.0 {
            rotated.column_mut(k).neg_mut();
            gamma.column_mut(k).neg_mut();
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    let ss: Vec<f64> = rotated.column_iter().map(|c| c.norm_squared()).collect();
    order.sort_by(|&i, &j| ss[j].total_cmp(&ss[i]));
    let rotated = rotated.select_columns(&order);
    let gamma = gamma.select_columns(&order);
    Ok(RotationResult {
        gamma,
        rotated,
        criterion,
        sweeps,
        converged,
    })
}

fn rotate_columns(x: &mut DMatrix<f64>, a: usize, b: usize, c: f64, s: f64) {
    for i in 0..x.nrows() {
        let (u, v) = (x[(i, a)], x[(i, b)]);
        x[(i, a)] = c * u + s * v;
        x[(i, b)] = -s * u + c * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_orthogonal(m: usize, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(m, m, |_, _| StandardNormal.sample(rng));
        a.qr().q()
    }

    fn normalized(l: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = l.clone();
        for mut r in x.row_iter_mut() {
            let n = r.norm();
            r /= n;
        }
        x
    }

    #[test]
    fn single_factor_is_unchanged() {
        let l = DMatrix::from_column_slice(4, 1, &[0.5, 0.6, -0.2, 0.7]);
        let r = varimax(&l, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        assert_eq!(r.gamma.abs(), DMatrix::identity(1, 1));
        assert_eq!(r.rotated, l);
        let neg = varimax(&(-&l), DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        assert_eq!(neg.rotated, l);
    }

    #[test]
    fn simple_structure_is_a_fixed_point() {
        let mut l = DMatrix::zeros(6, 2);
        for i in 0..3 {
            l[(i, 0)] = 0.7;
            l[(i + 3, 1)] = 0.7;
        }
        let r = varimax(&l, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        assert!((r.criterion - varimax_criterion(&normalized(&l))).abs() < 1e-8);
        for v in r.gamma.iter() {
            assert!(v.abs() < 1e-8 || (v.abs() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn optimum_does_not_depend_on_start() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut l = DMatrix::zeros(12, 3);
        for i in 0..12 {
            l[(i, i / 4)] = 0.6 + 0.02 * i as f64;
            for k in 0..3 {
                let e: f64 = StandardNormal.sample(&mut rng);
                l[(i, k)] += 0.1 * e;
            }
        }
        let q = random_orthogonal(3, &mut rng);
        let a = varimax(&l, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        let b = varimax(&(&l * q), DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        assert!((a.criterion - b.criterion).abs() < 1e-6);
        assert!((&a.rotated - &b.rotated).amax() < 1e-4);
    }

    #[test]
    fn rotation_preserves_communalities_and_orthogonality() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let l = DMatrix::from_fn(15, 4, |_, _| {
            0.4 * Distribution::<f64>::sample(&StandardNormal, &mut rng)
        });
        let r = varimax(&l, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        assert!((r.gamma.transpose() * &r.gamma - DMatrix::identity(4, 4)).amax() < 1e-10);
        assert!((&r.rotated * r.rotated.transpose() - &l * l.transpose()).amax() < 1e-10);
        assert!((&l * &r.gamma - &r.rotated).amax() < 1e-12);
        let ss: Vec<f64> = r.rotated.column_iter().map(|c| c.norm_squared()).collect();
        assert!(ss.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.rotated.column_iter().all(|c| c.sum() >= 0.0));
    }

    #[test]
    fn criterion_increases() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let l = DMatrix::from_fn(10, 3, |_, _| {
            0.5 * Distribution::<f64>::sample(&StandardNormal, &mut rng)
        });
        let before = varimax_criterion(&normalized(&l));
        let r = varimax(&l, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        assert!(r.criterion >= before - 1e-12);
        // further sweeps cannot improve a converged solution
        let again = varimax(&r.rotated, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        assert!((again.criterion - r.criterion).abs() < 1e-9);
    }

    #[test]
    fn zero_row_is_rejected() {
        let l = DMatrix::from_row_slice(3, 2, &[0.5, 0.1, 0.0, 0.0, 0.3, 0.6]);
        assert!(matches!(
            varimax(&l, DEFAULT_TOL, DEFAULT_MAX_SWEEPS),
            Err(Error::ZeroCommunality(1))
        ));
    }
}
