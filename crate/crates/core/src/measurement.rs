//! Projective measurements, POVMs and Kraus channels.
//!
//! Also contains the constructive pieces that back the formalism: the
//! positive square-root split of an effect, the two-detector POVM and its
//! optimum, quantum non-demolition certification, Kraus operators derived
//! from a system-environment unitary, and the A/B/C decomposition of an
//! observable.

use crate::error::{Error, Result};
use crate::linalg::{
    c64, expm, hermitian_eig, partial_trace, real, tensor_product, ComplexMatrix, ComplexVector,
    Keep, HERMITIAN_TOL,
};
use crate::states::{trace_of_product, DensityMatrix, PureState};

/// Default tolerance for completeness, orthogonality, idempotence and positivity.
pub const MEASUREMENT_TOL: f64 = 1e-9;
/// Kraus operators with Frobenius norm below this are dropped.
pub const KRAUS_DROP_TOL: f64 = 1e-12;

/// A Hermitian idempotent operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    matrix: ComplexMatrix,
}

impl Projector {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        matrix.require_hermitian(HERMITIAN_TOL)?;
        let residual = (&(&matrix * &matrix) - &matrix).frobenius_norm();
        if residual >= MEASUREMENT_TOL {
            return Err(Error::NotProjector { residual });
        }
        Ok(Self { matrix })
    }

    pub fn onto(state: &PureState) -> Self {
        Self {
            matrix: state.amplitudes().projector(),
        }
    }

    /// Rank-1 projectors onto the computational basis of dimension `dim`.
    pub fn computational_basis(dim: usize) -> Vec<Projector> {
        (0..dim).map(|n| Self::onto(&PureState::basis(dim, n))).collect()
    }

    /// Spectral projectors of a Hermitian observable, one per distinct
    /// eigenvalue (eigenvalues closer than `tol` are merged).
    pub fn spectral(obs: &ComplexMatrix, tol: f64) -> Result<Vec<(f64, Projector)>> {
        let eig = hermitian_eig(obs)?;
        let mut out: Vec<(f64, ComplexMatrix)> = Vec::new();
        for (k, &value) in eig.values.iter().enumerate() {
            let p = eig.vector(k).projector();
            match out.last_mut() {
                Some((v, acc)) if (value - *v).abs() <= tol => *acc += &p,
                _ => out.push((value, p)),
            }
        }
        Ok(out
            .into_iter()
            .map(|(v, matrix)| (v, Projector { matrix }))
            .collect())
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }
}

/// A positive operator.
#[derive(Clone, Debug, PartialEq)]
pub struct PovmEffect {
    matrix: ComplexMatrix,
}

impl PovmEffect {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        matrix.require_hermitian(HERMITIAN_TOL)?;
        let min = hermitian_eig(&matrix)?.min_value();
        if min < -MEASUREMENT_TOL {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

impl From<Projector> for PovmEffect {
    fn from(p: Projector) -> Self {
        Self { matrix: p.matrix }
    }
}

/// A positive-operator valued measure: effects summing to the identity.
#[derive(Clone, Debug)]
pub struct Povm {
    effects: Vec<PovmEffect>,
    labels: Vec<String>,
}

impl Povm {
    pub fn new(effects: Vec<PovmEffect>, labels: Vec<String>) -> Result<Self> {
        Self::with_tolerance(effects, labels, MEASUREMENT_TOL)
    }

    pub fn with_tolerance(effects: Vec<PovmEffect>, labels: Vec<String>, tol: f64) -> Result<Self> {
        if effects.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} effects but {} labels",
                effects.len(),
                labels.len()
            )));
        }
        let dim = effects.first().map_or(0, PovmEffect::dim);
        if effects.iter().any(|e| e.dim() != dim) {
            return Err(Error::DimensionMismatch("effects of different dimension".into()));
        }
        let residual = completeness_residual(effects.iter().map(|e| e.matrix.clone()), dim);
        if residual > tol {
            return Err(Error::NotComplete { residual });
        }
        Ok(Self { effects, labels })
    }

    pub fn effects(&self) -> &[PovmEffect] {
        &self.effects
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probabilities(&self, rho: &DensityMatrix) -> Result<Vec<f64>> {
        self.effects.iter().map(|e| born_probability(rho, e)).collect()
    }
}

/// Max entry of `sum_n A_n - I`.
fn completeness_residual(ops: impl Iterator<Item = ComplexMatrix>, dim: usize) -> f64 {
    let mut sum = ComplexMatrix::zeros(dim, dim);
    for op in ops {
        sum += &op;
    }
    (sum - &ComplexMatrix::identity(dim)).max_abs()
}

/// Kraus operators with `sum K^dagger K = I`.
#[derive(Clone, Debug)]
pub struct KrausSet {
    operators: Vec<ComplexMatrix>,
}

impl KrausSet {
    pub fn new(operators: Vec<ComplexMatrix>) -> Result<Self> {
        let dim = operators.first().map_or(0, ComplexMatrix::cols);
        if operators.iter().any(|k| k.shape() != (dim, dim)) {
            return Err(Error::DimensionMismatch(
                "Kraus operators must be square and of equal size".into(),
            ));
        }
        let set = Self { operators };
        let residual = set.completeness_residual();
        if set.operators.is_empty() || residual > MEASUREMENT_TOL {
            return Err(Error::IncompleteKrausSet { residual });
        }
        Ok(set)
    }

    /// Single unitary operator.
    pub fn unitary(u: ComplexMatrix) -> Result<Self> {
        Self::new(vec![u])
    }

    pub fn from_projectors(projectors: &[Projector]) -> Result<Self> {
        Self::new(projectors.iter().map(|p| p.matrix.clone()).collect())
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.operators
    }

    pub fn dim(&self) -> usize {
        self.operators.first().map_or(0, ComplexMatrix::rows)
    }

    /// Max entry of `sum K^dagger K - I`.
    pub fn completeness_residual(&self) -> f64 {
        completeness_residual(
            self.operators.iter().map(|k| &k.adjoint() * k),
            self.dim(),
        )
    }

    /// The effects `K^dagger K` of the associated POVM.
    pub fn effects(&self) -> Vec<ComplexMatrix> {
        self.operators.iter().map(|k| &k.adjoint() * k).collect()
    }
}

fn check_dim(rho: &DensityMatrix, dim: usize) -> Result<()> {
    if rho.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "{dim}-dimensional operator on a {}-dimensional state",
            rho.dim()
        )));
    }
    Ok(())
}

/// `Tr(A rho)`, clamped into `[0, 1]`.
pub fn born_probability(rho: &DensityMatrix, effect: &PovmEffect) -> Result<f64> {
    check_dim(rho, effect.dim())?;
    let p = trace_of_product(effect.matrix(), rho.matrix()).re;
    Ok(p.clamp(0.0, 1.0))
}

/// Non-selective projective update `rho -> sum_n P_n rho P_n`.
pub fn projective_update(rho: &DensityMatrix, projectors: &[Projector]) -> Result<DensityMatrix> {
    projective_update_with_tol(rho, projectors, MEASUREMENT_TOL)
}

pub fn projective_update_with_tol(
    rho: &DensityMatrix,
    projectors: &[Projector],
    tol: f64,
) -> Result<DensityMatrix> {
    let dim = rho.dim();
    for p in projectors {
        if p.matrix.rows() != dim {
            return Err(Error::DimensionMismatch(format!(
                "{}-dimensional projector on a {dim}-dimensional state",
                p.matrix.rows()
            )));
        }
    }
    for (i, a) in projectors.iter().enumerate() {
        for (j, b) in projectors.iter().enumerate().skip(i + 1) {
            let residual = (&a.matrix * &b.matrix).max_abs();
            if residual > tol {
                return Err(Error::NotOrthogonal { i, j, residual });
            }
        }
    }
    let residual = completeness_residual(projectors.iter().map(|p| p.matrix.clone()), dim);
    if residual > tol {
        return Err(Error::NotComplete { residual });
    }
    let mut out = ComplexMatrix::zeros(dim, dim);
    for p in projectors {
        out += &(&(&p.matrix * rho.matrix()) * &p.matrix);
    }
    Ok(DensityMatrix::from_trusted(out))
}

/// Positive square root `sqrt(A)` of a Hermitian positive operator, so that
/// `K^dagger K = A` with `K = sqrt(A)`.
pub fn positive_sqrt(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = hermitian_eig(a)?;
    let min = eig.min_value();
    if min < -MEASUREMENT_TOL {
        return Err(Error::NotPositive { min_eigenvalue: min });
    }
    Ok(eig.map_spectrum(|x| real(x.max(0.0).sqrt())))
}

/// Splits an effect as `A = K^dagger K`. All free phases are fixed to zero,
/// which yields the unique positive square root.
pub fn split_positive(effect: &PovmEffect) -> Result<ComplexMatrix> {
    positive_sqrt(effect.matrix())
}

/// The faulty-detector POVM `{p_z |+><+|, p_x |+_x><+_x|, I - A1 - A2}`.
pub fn two_detector_povm(p_z: f64, p_x: f64) -> Result<Povm> {
    for (name, p) in [("p_z", p_z), ("p_x", p_x)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability(format!("{name} = {p}")));
        }
    }
    let a1 = PureState::plus().amplitudes().projector().scale_real(p_z);
    let a2 = PureState::plus_x().amplitudes().projector().scale_real(p_x);
    let a3 = ComplexMatrix::identity(2) - &a1 - &a2;
    let effects = vec![PovmEffect::new(a1)?, PovmEffect::new(a2)?, PovmEffect::new(a3)?];
    let labels = ["z-detector", "x-detector", "no-detection"]
        .into_iter()
        .map(String::from)
        .collect();
    Povm::new(effects, labels)
}

/// Smallest eigenvalue of the no-detection effect for equal detector efficiencies.
pub fn no_detection_min_eigenvalue(p: f64) -> f64 {
    let a1 = PureState::plus().amplitudes().projector();
    let a2 = PureState::plus_x().amplitudes().projector();
    let a3 = ComplexMatrix::identity(2) - &(&a1 + &a2).scale_real(p);
    hermitian_eig(&a3)
        .map(|e| e.min_value())
        .unwrap_or(f64::NEG_INFINITY)
}

/// Largest equal detection probability `p_z = p_x` that still admits a POVM,
/// found by bisection on the positivity boundary of the no-detection effect.
pub fn max_equal_detection_probability() -> f64 {
    // p = 0 gives A3 = I, always valid; p = 1 is not.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if no_detection_min_eigenvalue(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Outcome of the non-demolition conditions.
#[derive(Clone, Debug)]
pub struct QndReport {
    /// `||[S x I, Delta] (I x |m0>)||_F`, necessary and sufficient.
    pub ready_state_residual: f64,
    pub ready_state_condition: bool,
    /// `||[S x I, Delta]||_F`, sufficient.
    pub commutator_residual: f64,
    pub commutator_condition: bool,
    /// `||[S x I, H]||_F`, sufficient; `None` without a Hamiltonian.
    pub hamiltonian_residual: Option<f64>,
    pub hamiltonian_condition: Option<bool>,
}

impl QndReport {
    pub fn all_pass(&self) -> bool {
        self.ready_state_condition
            && self.commutator_condition
            && self.hamiltonian_condition.unwrap_or(true)
    }
}

/// Checks the quantum non-demolition conditions for measuring `obs` (acting on
/// the system factor) through the joint `evolution` with the meter prepared in
/// `meter_ready`. The optional `hamiltonian` generates `evolution` on the joint
/// space.
pub fn qnd_check(
    obs: &ComplexMatrix,
    evolution: &ComplexMatrix,
    meter_ready: &ComplexVector,
    hamiltonian: Option<&ComplexMatrix>,
) -> Result<QndReport> {
    let ds = obs.require_square()?;
    let dm = meter_ready.dim();
    if evolution.shape() != (ds * dm, ds * dm) {
        return Err(Error::DimensionMismatch(format!(
            "evolution is {}x{}, expected {}",
            evolution.rows(),
            evolution.cols(),
            ds * dm
        )));
    }
    if let Some(h) = hamiltonian {
        if h.shape() != evolution.shape() {
            return Err(Error::DimensionMismatch("Hamiltonian and evolution differ in size".into()));
        }
    }
    let residual = evolution.unitarity_residual();
    if residual > MEASUREMENT_TOL {
        return Err(Error::NotUnitary { residual });
    }
    let lifted = tensor_product(obs, &ComplexMatrix::identity(dm));
    let comm = lifted.commutator(evolution);
    let ready = tensor_product(
        &ComplexMatrix::identity(ds),
        &ComplexMatrix::from_columns(std::slice::from_ref(meter_ready)),
    );
    let ready_state_residual = (&comm * &ready).frobenius_norm();
    let commutator_residual = comm.frobenius_norm();
    let hamiltonian_residual = hamiltonian.map(|h| lifted.commutator(h).frobenius_norm());
    Ok(QndReport {
        ready_state_residual,
        ready_state_condition: ready_state_residual < MEASUREMENT_TOL,
        commutator_residual,
        commutator_condition: commutator_residual < MEASUREMENT_TOL,
        hamiltonian_residual,
        hamiltonian_condition: hamiltonian_residual.map(|r| r < MEASUREMENT_TOL),
    })
}

/// Discrete von Neumann interaction `sum_{n,p} |s_n>|m_{n+p}><s_n|<m_p|` with
/// the meter index taken modulo `dim`. System and meter share the dimension.
pub fn von_neumann_shift(dim: usize) -> ComplexMatrix {
    let mut u = ComplexMatrix::zeros(dim * dim, dim * dim);
    for n in 0..dim {
        for p in 0..dim {
            u[(n * dim + (n + p) % dim, n * dim + p)] = real(1.0);
        }
    }
    u
}

/// Hermitian generator `P` of the cyclic meter shift: `exp(-i (2 pi/dim) P)`
/// maps `|m_p>` to `|m_{p+1}>`.
pub fn meter_shift_generator(dim: usize) -> ComplexMatrix {
    let omega = 2.0 * std::f64::consts::PI / dim as f64;
    let norm = 1.0 / (dim as f64).sqrt();
    let mut p = ComplexMatrix::zeros(dim, dim);
    for k in 0..dim {
        // Eigenvector of the shift with eigenvalue e^{i omega k}.
        let v = ComplexVector::new(
            (0..dim)
                .map(|q| c64(0.0, -omega * (k * q) as f64).exp() * norm)
                .collect(),
        )
        .expect("finite");
        p += &v.projector().scale_real(-(k as f64));
    }
    p
}

/// The discrete coupling `H = eps N x P` with `N = diag(0, 1, ..., dim-1)`,
/// together with `Delta = exp(-i H tau)` for `eps tau = 2 pi / dim`, which
/// reproduces [`von_neumann_shift`].
#[derive(Clone, Debug)]
pub struct DiscreteCoupling {
    pub hamiltonian: ComplexMatrix,
    pub evolution: ComplexMatrix,
}

pub fn discrete_von_neumann_coupling(dim: usize) -> Result<DiscreteCoupling> {
    let tau = 2.0 * std::f64::consts::PI / dim as f64;
    let index: Vec<f64> = (0..dim).map(|n| n as f64).collect();
    let hamiltonian = tensor_product(
        &ComplexMatrix::from_real_diagonal(&index),
        &meter_shift_generator(dim),
    );
    let evolution = expm(&hamiltonian.scale(c64(0.0, -tau)))?;
    Ok(DiscreteCoupling {
        hamiltonian,
        evolution,
    })
}

/// Kraus operators `K_{k,m} = sum_{j,r,s} U_{(j,k),(r,s)} <e_s|sqrt(rho_E)|e_m> |s_j><s_r|`
/// of the reduced dynamics `Tr_E[U (rho_S x rho_E) U^dagger]`. Vanishing
/// operators are dropped.
pub fn kraus_from_unitary(
    u: &ComplexMatrix,
    rho_env: &DensityMatrix,
    dims: (usize, usize),
) -> Result<KrausSet> {
    let (ds, de) = dims;
    if u.shape() != (ds * de, ds * de) || rho_env.dim() != de {
        return Err(Error::DimensionMismatch(format!(
            "unitary {}x{} with environment of dimension {} for dims ({ds}, {de})",
            u.rows(),
            u.cols(),
            rho_env.dim()
        )));
    }
    let residual = u.unitarity_residual();
    if residual > MEASUREMENT_TOL {
        return Err(Error::NotUnitary { residual });
    }
    let sqrt_env = positive_sqrt(rho_env.matrix())?;
    let mut operators = Vec::with_capacity(de * de);
    for k in 0..de {
        for m in 0..de {
            let mut op = ComplexMatrix::zeros(ds, ds);
            for j in 0..ds {
                for r in 0..ds {
                    op[(j, r)] = (0..de)
                        .map(|s| u[(j * de + k, r * de + s)] * sqrt_env[(s, m)])
                        .sum();
                }
            }
            if op.frobenius_norm() >= KRAUS_DROP_TOL {
                operators.push(op);
            }
        }
    }
    KrausSet::new(operators)
}

/// `Tr_E[U (rho_S x rho_E) U^dagger]`, the reference the Kraus form reproduces.
pub fn reduced_unitary_dynamics(
    u: &ComplexMatrix,
    rho_sys: &DensityMatrix,
    rho_env: &DensityMatrix,
) -> Result<DensityMatrix> {
    let joint = tensor_product(rho_sys.matrix(), rho_env.matrix());
    if u.shape() != joint.shape() {
        return Err(Error::DimensionMismatch("unitary does not match joint space".into()));
    }
    let evolved = u.sandwich(&joint);
    let reduced = partial_trace(&evolved, (rho_sys.dim(), rho_env.dim()), Keep::First)?;
    Ok(DensityMatrix::from_trusted(reduced.hermitian_part()))
}

/// `rho -> sum K rho K^dagger`
pub fn apply_channel(kraus: &KrausSet, rho: &DensityMatrix) -> Result<DensityMatrix> {
    check_dim(rho, kraus.dim())?;
    let mut out = ComplexMatrix::zeros(rho.dim(), rho.dim());
    for k in kraus.operators() {
        out += &k.sandwich(rho.matrix());
    }
    Ok(DensityMatrix::from_trusted(out.hermitian_part()))
}

/// `Q = sum_m Q_mm A_m + sum_{m>n} (b_mn B_mn + c_mn C_mn)` with
/// `A_m = |m><m|`, `B_mn = |m><n| + |n><m|`, `C_mn = i|m><n| - i|n><m|`,
/// `b_mn = (Q_mn + Q_nm)/2` and `c_mn = -i (Q_mn - Q_nm)/2`.
#[derive(Clone, Debug)]
pub struct ObservableDecomposition {
    pub dim: usize,
    /// `(m, Q_mm)`
    pub diagonal: Vec<(usize, f64)>,
    /// `((m, n), b_mn)` for `m > n`
    pub symmetric: Vec<((usize, usize), f64)>,
    /// `((m, n), c_mn)` for `m > n`
    pub antisymmetric: Vec<((usize, usize), f64)>,
}

impl ObservableDecomposition {
    pub fn a_operator(&self, m: usize) -> ComplexMatrix {
        let mut a = ComplexMatrix::zeros(self.dim, self.dim);
        a[(m, m)] = real(1.0);
        a
    }

    pub fn b_operator(&self, m: usize, n: usize) -> ComplexMatrix {
        let mut b = ComplexMatrix::zeros(self.dim, self.dim);
        b[(m, n)] = real(1.0);
        b[(n, m)] = real(1.0);
        b
    }

    pub fn c_operator(&self, m: usize, n: usize) -> ComplexMatrix {
        let mut c = ComplexMatrix::zeros(self.dim, self.dim);
        c[(m, n)] = c64(0.0, 1.0);
        c[(n, m)] = c64(0.0, -1.0);
        c
    }

    pub fn a_operators(&self) -> Vec<ComplexMatrix> {
        self.diagonal.iter().map(|&(m, _)| self.a_operator(m)).collect()
    }

    pub fn b_operators(&self) -> Vec<ComplexMatrix> {
        self.symmetric
            .iter()
            .map(|&((m, n), _)| self.b_operator(m, n))
            .collect()
    }

    pub fn c_operators(&self) -> Vec<ComplexMatrix> {
        self.antisymmetric
            .iter()
            .map(|&((m, n), _)| self.c_operator(m, n))
            .collect()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut q = ComplexMatrix::zeros(self.dim, self.dim);
        for &(m, coeff) in &self.diagonal {
            q += &self.a_operator(m).scale_real(coeff);
        }
        for &((m, n), coeff) in &self.symmetric {
            q += &self.b_operator(m, n).scale_real(coeff);
        }
        for &((m, n), coeff) in &self.antisymmetric {
            q += &self.c_operator(m, n).scale_real(coeff);
        }
        q
    }

    /// `<Q>` assembled from the expectation values of the A, B and C observables.
    pub fn expectation(&self, rho: &DensityMatrix) -> Result<f64> {
        check_dim(rho, self.dim)?;
        let r = rho.matrix();
        let mut total = 0.0;
        for &(m, coeff) in &self.diagonal {
            total += coeff * r[(m, m)].re;
        }
        for &((m, n), coeff) in &self.symmetric {
            // <B_mn> = rho_nm + rho_mn
            total += coeff * (r[(n, m)] + r[(m, n)]).re;
        }
        for &((m, n), coeff) in &self.antisymmetric {
            // <C_mn> = i rho_nm - i rho_mn
            total += coeff * (c64(0.0, 1.0) * (r[(n, m)] - r[(m, n)])).re;
        }
        Ok(total)
    }
}

pub fn observable_decomposition(q: &ComplexMatrix) -> Result<ObservableDecomposition> {
    q.require_hermitian(HERMITIAN_TOL)?;
    let dim = q.rows();
    let diagonal = (0..dim).map(|m| (m, q[(m, m)].re)).collect();
    let mut symmetric = Vec::new();
    let mut antisymmetric = Vec::new();
    for m in 0..dim {
        for n in 0..m {
            let b = (q[(m, n)] + q[(n, m)]) * 0.5;
            let c = c64(0.0, -1.0) * (q[(m, n)] - q[(n, m)]) * 0.5;
            symmetric.push(((m, n), b.re));
            antisymmetric.push(((m, n), c.re));
        }
    }
    Ok(ObservableDecomposition {
        dim,
        diagonal,
        symmetric,
        antisymmetric,
    })
}
