use nalgebra::DMatrix;

use super::KernelSpec;
use crate::error::{Error, Result};
use crate::geometry::Particle;

/// Default size limit of the dense oracle.
pub const DEFAULT_ORACLE_MAX: usize = 16384;

/// Environment variable overriding [`DEFAULT_ORACLE_MAX`].
pub const ORACLE_MAX_ENV: &str = "H2FMM_ORACLE_MAX";

/// Current oracle size limit, honouring `H2FMM_ORACLE_MAX`.
pub fn oracle_max() -> usize {
    std::env::var(ORACLE_MAX_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_ORACLE_MAX)
}

fn check_guard(n: usize) -> Result<()> {
    let max = oracle_max();
    if n > max {
        return Err(Error::OracleGuard { n, max });
    }
    Ok(())
}

/// The full kernel matrix `A[i][j] = K(p_i, p_j)` in input order.
pub fn dense_matrix(particles: &[Particle], kernel: &KernelSpec) -> Result<DMatrix<f64>> {
    check_guard(particles.len())?;
    kernel.validate()?;
    let pts: Vec<[f64; 3]> = particles.iter().map(|p| p.position).collect();
    let n = pts.len();
    let mut a = DMatrix::zeros(n, n);
    // column j holds K(p_i, p_j) for all i
    kernel.fill(&pts, &pts, a.as_mut_slice());
    Ok(a)
}

/// `A x` without storing `A`; subject to the same size guard as [`dense_matrix`].
pub fn dense_matvec(particles: &[Particle], kernel: &KernelSpec, x: &[f64]) -> Result<Vec<f64>> {
    check_guard(particles.len())?;
    kernel.validate()?;
    let n = particles.len();
    if x.len() != n {
        return Err(Error::Dimension { expected: n, got: x.len() });
    }
    let pts: Vec<[f64; 3]> = particles.iter().map(|p| p.position).collect();
    let mut row = vec![0.0; n];
    let mut y = vec![0.0; n];
    for (i, p) in pts.iter().enumerate() {
        kernel.fill(std::slice::from_ref(p), &pts, &mut row);
        y[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate, DistributionKind, DistributionSpec};
    use crate::h2core::KernelKind;

    #[test]
    fn one_kernel_gives_all_ones() {
        let ps = generate(&DistributionSpec::new(DistributionKind::RandomCube, 10, 1)).unwrap();
        let a = dense_matrix(&ps, &KernelSpec::new(KernelKind::One)).unwrap();
        assert!(a.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn laplace_pair_at_distance_two() {
        let ps = vec![Particle::new(0, [0.0, 0.0, 0.0]), Particle::new(1, [0.0, 2.0, 0.0])];
        let a = dense_matrix(&ps, &KernelSpec::new(KernelKind::Laplace3d)).unwrap();
        assert_eq!(a[(0, 1)], 0.5);
        assert_eq!(a[(1, 0)], 0.5);
        assert_eq!(a[(0, 0)], 0.0);
    }

    #[test]
    fn gaussian_symmetric() {
        let ps = generate(&DistributionSpec::new(DistributionKind::RandomCube, 64, 2)).unwrap();
        let a = dense_matrix(&ps, &KernelSpec::new(KernelKind::Gaussian).with_sigma(1.0)).unwrap();
        assert!((&a - a.transpose()).amax() <= 1e-15);
    }

    #[test]
    fn matvec_matches_matrix() {
        let ps = generate(&DistributionSpec::new(DistributionKind::Plummer, 50, 2)).unwrap();
        let k = KernelSpec::new(KernelKind::Laplace3d);
        let a = dense_matrix(&ps, &k).unwrap();
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let y = dense_matvec(&ps, &k, &x).unwrap();
        let expect = &a * nalgebra::DVector::from_column_slice(&x);
        for i in 0..50 {
            assert!((y[i] - expect[i]).abs() <= 1e-12 * expect[i].abs().max(1.0));
        }
        assert!(matches!(dense_matvec(&ps, &k, &x[1..]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn guard_refuses_large_n() {
        let n = DEFAULT_ORACLE_MAX + 1;
        let ps: Vec<Particle> = (0..n).map(|i| Particle::new(i as u64, [0.5; 3])).collect();
        if std::env::var(ORACLE_MAX_ENV).is_err() {
            assert!(matches!(
                dense_matrix(&ps, &KernelSpec::new(KernelKind::One)),
                Err(Error::OracleGuard { .. })
            ));
        }
    }
}
