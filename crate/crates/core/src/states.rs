//! State vectors and density matrices.
//!
//! Both types validate their invariants on construction, so the rest of the
//! crate can assume normalized vectors and Hermitian, unit-trace, positive
//! semidefinite density matrices.

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, real, C64, ComplexMatrix, ComplexVector, HERMITIAN_TOL};

pub const NORM_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue a density matrix may have at construction.
pub const PSD_TOL: f64 = 1e-9;
/// Relaxed bound used for integrated trajectories.
pub const TRAJECTORY_PSD_TOL: f64 = 1e-6;

/// A normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amplitudes: ComplexVector,
}

impl PureState {
    pub fn new(amplitudes: ComplexVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { amplitudes })
    }

    pub fn from_amplitudes(amplitudes: &[C64]) -> Result<Self> {
        Self::new(ComplexVector::new(amplitudes.to_vec())?)
    }

    /// Normalizes any nonzero vector.
    pub fn normalize(v: ComplexVector) -> Result<Self> {
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self {
            amplitudes: v.normalized(),
        })
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        Self {
            amplitudes: ComplexVector::basis(dim, index),
        }
    }

    /// `|+>`, the +1 eigenstate of sigma_z.
    pub fn plus() -> Self {
        Self::basis(2, 0)
    }

    /// `|->`, the -1 eigenstate of sigma_z.
    pub fn minus() -> Self {
        Self::basis(2, 1)
    }

    /// `|+_x> = (|+> + |->)/sqrt 2`
    pub fn plus_x() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            amplitudes: ComplexVector::from_real(&[s, s]),
        }
    }

    /// `|-_x> = (|+> - |->)/sqrt 2`
    pub fn minus_x() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            amplitudes: ComplexVector::from_real(&[s, -s]),
        }
    }

    /// Two-qubit singlet `(|+-> - |-+>)/sqrt 2`, ordered `|s1 s2>`.
    pub fn singlet() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            amplitudes: ComplexVector::from_real(&[0.0, s, -s, 0.0]),
        }
    }

    /// `(1/2)|s1> + (sqrt 3/2)|s2>`, the flash/no-flash superposition.
    pub fn wigner_friend() -> Self {
        Self {
            amplitudes: ComplexVector::from_real(&[0.5, 3f64.sqrt() / 2.0]),
        }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.dim()
    }

    pub fn amplitudes(&self) -> &ComplexVector {
        &self.amplitudes
    }

    pub fn amplitude(&self, n: usize) -> C64 {
        self.amplitudes[n]
    }

    /// `<self|other>`
    pub fn overlap(&self, other: &PureState) -> C64 {
        self.amplitudes.inner(&other.amplitudes)
    }

    /// `<psi|S|psi>`
    pub fn expectation(&self, obs: &ComplexMatrix) -> Result<f64> {
        check_observable(obs, self.dim())?;
        Ok(self.amplitudes.inner(&obs.apply(&self.amplitudes)).re)
    }

    pub fn density(&self) -> DensityMatrix {
        density_from_pure(self)
    }
}

/// A Hermitian, unit-trace, positive semidefinite operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_psd_tolerance(matrix, PSD_TOL)
    }

    /// Validates with a custom bound on the smallest eigenvalue (`>= -psd_tol`).
    pub fn with_psd_tolerance(matrix: ComplexMatrix, psd_tol: f64) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(Error::NonFinite);
        }
        matrix.require_hermitian(HERMITIAN_TOL)?;
        let tr = matrix.trace();
        if (tr - real(1.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
        }
        let min = hermitian_eig(&matrix)?.min_value();
        if min < -psd_tol {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        Ok(Self { matrix })
    }

    /// Skips validation. Callers guarantee the invariants hold by construction.
    pub(crate) fn from_trusted(matrix: ComplexMatrix) -> Self {
        Self { matrix }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn population(&self, n: usize) -> f64 {
        self.matrix[(n, n)].re
    }

    pub fn expectation(&self, obs: &ComplexMatrix) -> Result<f64> {
        expectation(self, obs)
    }

    pub fn purity(&self) -> f64 {
        purity(self)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eig(&self.matrix.hermitian_part())
            .map(|e| e.values)
            .unwrap_or_default()
    }
}

/// Convex combination of pure states.
#[derive(Clone, Debug)]
pub struct MixtureSpec {
    components: Vec<(f64, PureState)>,
}

impl MixtureSpec {
    pub fn new(components: Vec<(f64, PureState)>) -> Result<Self> {
        let Some(dim) = components.first().map(|(_, s)| s.dim()) else {
            return Err(Error::ProbabilityNotNormalized { sum: 0.0 });
        };
        if components.iter().any(|(_, s)| s.dim() != dim) {
            return Err(Error::DimensionMismatch(
                "mixture components of different dimension".into(),
            ));
        }
        if let Some((p, _)) = components.iter().find(|(p, _)| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidProbability(format!("weight {p} outside [0, 1]")));
        }
        let sum: f64 = components.iter().map(|(p, _)| p).sum();
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(Error::ProbabilityNotNormalized { sum });
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[(f64, PureState)] {
        &self.components
    }
}

/// `|psi><psi|`
pub fn density_from_pure(psi: &PureState) -> DensityMatrix {
    DensityMatrix::from_trusted(psi.amplitudes.projector())
}

/// `sum_i p_i |psi_i><psi_i|`
pub fn density_from_mixture(mix: &MixtureSpec) -> DensityMatrix {
    let dim = mix.components[0].1.dim();
    let mut m = ComplexMatrix::zeros(dim, dim);
    for (p, psi) in &mix.components {
        m += &psi.amplitudes.projector().scale_real(*p);
    }
    DensityMatrix::from_trusted(m)
}

fn check_observable(obs: &ComplexMatrix, dim: usize) -> Result<()> {
    if obs.rows() != dim || obs.cols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} observable on a {dim}-dimensional state",
            obs.rows(),
            obs.cols()
        )));
    }
    obs.require_hermitian(HERMITIAN_TOL)
}

/// `Tr(rho S)`; the (rounding-level) imaginary part is discarded.
pub fn expectation(rho: &DensityMatrix, obs: &ComplexMatrix) -> Result<f64> {
    check_observable(obs, rho.dim())?;
    Ok(trace_of_product(&rho.matrix, obs).re)
}

/// `Tr(A B)` without forming the product.
pub fn trace_of_product(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    let n = a.rows();
    let mut t = C64::default();
    for i in 0..n {
        for k in 0..a.cols() {
            t += a[(i, k)] * b[(k, i)];
        }
    }
    t
}

/// `Tr(rho^2)`
pub fn purity(rho: &DensityMatrix) -> f64 {
    trace_of_product(&rho.matrix, &rho.matrix).re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;
    use proptest::prelude::*;

    fn sigma_z() -> ComplexMatrix {
        ComplexMatrix::pauli_z()
    }

    #[test]
    fn pure_basis_state() {
        let rho = density_from_pure(&PureState::plus());
        assert_eq!(rho.matrix(), &ComplexMatrix::from_real_diagonal(&[1.0, 0.0]));
        assert!((purity(&rho) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_superposition() {
        let rho = density_from_pure(&PureState::plus_x());
        for z in rho.matrix().entries() {
            assert!((z - real(0.5)).norm() < 1e-15);
        }
    }

    #[test]
    fn wigner_friend_populations() {
        let rho = density_from_pure(&PureState::wigner_friend());
        assert!((rho.population(0) - 0.25).abs() < 1e-15);
        assert!((rho.population(1) - 0.75).abs() < 1e-15);
        let s1 = PureState::basis(2, 0).amplitudes().projector();
        assert!((expectation(&rho, &s1).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mixtures() {
        let single = MixtureSpec::new(vec![(1.0, PureState::plus_x())]).unwrap();
        assert_eq!(
            density_from_mixture(&single),
            density_from_pure(&PureState::plus_x())
        );

        let equal =
            MixtureSpec::new(vec![(0.5, PureState::plus()), (0.5, PureState::minus())]).unwrap();
        let rho = density_from_mixture(&equal);
        assert_eq!(rho, DensityMatrix::maximally_mixed(2));
        assert!((purity(&rho) - 0.5).abs() < 1e-15);
        assert!(expectation(&rho, &sigma_z()).unwrap().abs() < 1e-15);

        let skew =
            MixtureSpec::new(vec![(0.25, PureState::plus()), (0.75, PureState::minus())]).unwrap();
        let rho = density_from_mixture(&skew);
        let oracle = 0.25 - 0.75;
        assert!((expectation(&rho, &sigma_z()).unwrap() - oracle).abs() < 1e-15);
    }

    #[test]
    fn mixture_rejects_bad_weights() {
        let r = MixtureSpec::new(vec![(0.5, PureState::plus()), (0.4, PureState::minus())]);
        assert!(matches!(r, Err(Error::ProbabilityNotNormalized { .. })));
    }

    #[test]
    fn decohered_wigner_friend_purity() {
        let rho = DensityMatrix::new(ComplexMatrix::from_real_diagonal(&[0.25, 0.75])).unwrap();
        assert!((purity(&rho) - 0.625).abs() < 1e-15);
    }

    #[test]
    fn expectation_errors() {
        let rho = DensityMatrix::maximally_mixed(2);
        let not_herm = ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert!(matches!(
            expectation(&rho, &not_herm),
            Err(Error::NotHermitian { .. })
        ));
        assert!(matches!(
            expectation(&rho, &ComplexMatrix::identity(3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn density_validation() {
        let neg = ComplexMatrix::from_real_diagonal(&[1.5, -0.5]);
        assert!(matches!(
            DensityMatrix::new(neg),
            Err(Error::NotPositive { .. })
        ));
        let tr = ComplexMatrix::from_real_diagonal(&[0.5, 0.4]);
        assert!(DensityMatrix::new(tr).is_err());
        let nh = ComplexMatrix::from_rows(&[
            vec![real(0.5), c64(0.1, 0.0)],
            vec![c64(0.2, 0.0), real(0.5)],
        ]);
        assert!(matches!(
            DensityMatrix::new(nh),
            Err(Error::NotHermitian { .. })
        ));
        assert!(PureState::from_amplitudes(&[real(1.0), real(1.0)]).is_err());
    }

    #[test]
    fn singlet_is_normalized() {
        assert!((PureState::singlet().amplitudes().norm() - 1.0).abs() < 1e-15);
    }

    fn state_strategy(dim: usize) -> impl Strategy<Value = PureState> {
        prop::collection::vec(-1.0f64..1.0, 2 * dim).prop_filter_map("zero", move |v| {
            let amps: Vec<C64> = v.chunks(2).map(|p| c64(p[0], p[1])).collect();
            PureState::normalize(ComplexVector::new(amps).ok()?).ok()
        })
    }

    fn mixture_strategy(dim: usize) -> impl Strategy<Value = MixtureSpec> {
        prop::collection::vec((0.01f64..1.0, state_strategy(dim)), 1..5).prop_map(|parts| {
            let total: f64 = parts.iter().map(|(w, _)| w).sum();
            let comps = parts.into_iter().map(|(w, s)| (w / total, s)).collect();
            MixtureSpec::new(comps).unwrap()
        })
    }

    proptest! {
        #[test]
        fn pure_density_is_rank_one(psi in state_strategy(4)) {
            let rho = density_from_pure(&psi);
            let ev = rho.eigenvalues();
            prop_assert!((ev[3] - 1.0).abs() < 1e-9);
            prop_assert!(ev[..3].iter().all(|x| x.abs() < 1e-9));
            prop_assert!(DensityMatrix::new(rho.matrix().clone()).is_ok());
        }

        #[test]
        fn mixture_expectation_is_weighted_average(mix in mixture_strategy(3), h in state_strategy(3)) {
            // Observable: a random rank-1 projector plus a diagonal part.
            let obs = &h.amplitudes().projector()
                + &ComplexMatrix::from_real_diagonal(&[0.3, -1.1, 2.0]);
            let rho = density_from_mixture(&mix);
            let direct = expectation(&rho, &obs).unwrap();
            let averaged: f64 = mix
                .components()
                .iter()
                .map(|(p, s)| p * s.expectation(&obs).unwrap())
                .sum();
            prop_assert!((direct - averaged).abs() < 1e-10);
        }

        #[test]
        fn purity_bounds_and_convexity(mix in mixture_strategy(3)) {
            let rho = density_from_mixture(&mix);
            let p = purity(&rho);
            prop_assert!((1.0 / 3.0 - 1e-9..=1.0 + 1e-9).contains(&p));
            let max_component = mix
                .components()
                .iter()
                .map(|(_, s)| purity(&density_from_pure(s)))
                .fold(0.0, f64::max);
            prop_assert!(p <= max_component + 1e-9);
        }
    }
}
