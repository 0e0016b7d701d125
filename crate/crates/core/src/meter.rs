//! Von Neumann / Bohm measurement model with a sampled meter.
//!
//! A discrete system is coupled impulsively to a continuous meter coordinate.
//! The meter wave function lives on a uniform grid; each system eigenvalue
//! gets its own branch meter, either displaced (momentum coupling) or phase
//! imprinted (general coupling `eps S f(M)`). Integrals use the trapezoid rule.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{c64, real, C64, ComplexMatrix};
use crate::states::{DensityMatrix, PureState};

pub const DEFAULT_GRID_POINTS: usize = 2048;
pub const DEFAULT_GRID_HALF_WIDTH: f64 = 20.0;
const MIN_GRID_POINTS: usize = 16;
const NORM_TOL: f64 = 1e-6;

/// Uniform sampling of the meter coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeterGrid {
    q_min: f64,
    q_max: f64,
    n_points: usize,
}

impl MeterGrid {
    pub fn new(q_min: f64, q_max: f64, n_points: usize) -> Result<Self> {
        if n_points < MIN_GRID_POINTS {
            return Err(Error::InvalidGrid(format!(
                "{n_points} points, need at least {MIN_GRID_POINTS}"
            )));
        }
        if !(q_max > q_min) || !q_min.is_finite() || !q_max.is_finite() {
            return Err(Error::InvalidGrid(format!("range [{q_min}, {q_max}]")));
        }
        Ok(Self {
            q_min,
            q_max,
            n_points,
        })
    }

    pub fn q_min(&self) -> f64 {
        self.q_min
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn spacing(&self) -> f64 {
        (self.q_max - self.q_min) / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.q_min + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// Trapezoid rule over the samples `f`.
    pub fn integrate<T>(&self, f: &[T]) -> T
    where
        T: Copy + std::iter::Sum<T> + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        assert_eq!(f.len(), self.n_points, "sample count does not match grid");
        let inner: T = f.iter().copied().sum();
        let ends = f[0] + f[self.n_points - 1];
        (inner + ends * -0.5) * self.spacing()
    }
}

impl Default for MeterGrid {
    /// 2048 points over `[-20, 20]`.
    fn default() -> Self {
        Self {
            q_min: -DEFAULT_GRID_HALF_WIDTH,
            q_max: DEFAULT_GRID_HALF_WIDTH,
            n_points: DEFAULT_GRID_POINTS,
        }
    }
}

/// `int dq phi_a(q) conj(phi_b(q))`
fn overlap_integral(grid: &MeterGrid, a: &[C64], b: &[C64]) -> C64 {
    let prod: Vec<C64> = a.iter().zip(b).map(|(x, y)| x * y.conj()).collect();
    grid.integrate(&prod)
}

fn norm_sqr(grid: &MeterGrid, values: &[C64]) -> f64 {
    let dens: Vec<f64> = values.iter().map(|z| z.norm_sqr()).collect();
    grid.integrate(&dens)
}

/// A normalized meter wave function sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MeterWaveFunction {
    grid: MeterGrid,
    values: Vec<C64>,
}

impl MeterWaveFunction {
    pub fn new(grid: MeterGrid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples on a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        let n = norm_sqr(&grid, &values);
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm: n.sqrt() });
        }
        Ok(Self { grid, values })
    }

    /// Rescales arbitrary nonzero samples to unit norm.
    pub fn normalized(grid: MeterGrid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples on a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        let n = norm_sqr(&grid, &values);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::NotNormalized { norm: n.sqrt() });
        }
        let s = 1.0 / n.sqrt();
        Ok(Self {
            grid,
            values: values.into_iter().map(|z| z * s).collect(),
        })
    }

    /// Gaussian whose density `|phi|^2` has standard deviation `sigma`,
    /// cut to zero outside `[center - b, center + b]` and renormalized.
    pub fn truncated_gaussian(grid: MeterGrid, center: f64, sigma: f64, b: f64) -> Result<Self> {
        if !(sigma > 0.0) || !(b > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma = {sigma}, b = {b}")));
        }
        let values = grid
            .points()
            .into_iter()
            .map(|q| {
                let x = q - center;
                if x.abs() <= b {
                    real((-x * x / (4.0 * sigma * sigma)).exp())
                } else {
                    real(0.0)
                }
            })
            .collect();
        Self::normalized(grid, values)
    }

    /// The default pointer: `sigma = 1`, `b = 4 sigma`, centered at 0 on the
    /// default grid.
    pub fn default_pointer() -> Self {
        Self::truncated_gaussian(MeterGrid::default(), 0.0, 1.0, 4.0)
            .expect("default pointer is valid")
    }

    pub fn grid(&self) -> &MeterGrid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.grid, &self.values)
    }

    /// `int q |phi|^2 dq`
    pub fn centroid(&self) -> f64 {
        centroid(&self.grid, &self.values)
    }

    /// `int phi conj(other)`
    pub fn overlap(&self, other: &MeterWaveFunction) -> Result<C64> {
        if self.grid != other.grid {
            return Err(Error::DimensionMismatch("meters on different grids".into()));
        }
        Ok(overlap_integral(&self.grid, &self.values, &other.values))
    }

    /// Index range of nonzero samples, `None` for the zero function.
    fn support(&self) -> Option<(usize, usize)> {
        let first = self.values.iter().position(|z| z.norm_sqr() > 0.0)?;
        let last = self.values.iter().rposition(|z| z.norm_sqr() > 0.0)?;
        Some((first, last))
    }

    /// `phi(q - shift)` by linear interpolation, renormalized. Fails if the
    /// displaced support leaves the grid.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        Self::normalized(self.grid, shift_samples(&self.grid, &self.values, shift)?)
    }

    /// `exp(-i phase_scale f(q)) phi(q)`
    pub fn phase_imprinted(&self, phase_scale: f64, f: &dyn Fn(f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, z)| z * c64(0.0, -phase_scale * f(self.grid.point(i))).exp())
            .collect();
        Self {
            grid: self.grid,
            values,
        }
    }

    /// Samples of the conjugate-momentum amplitude
    /// `(2 pi)^{-1/2} int dq e^{-ipq} phi(q)` at the requested momenta.
    pub fn momentum_amplitudes(&self, momenta: &[f64]) -> Vec<C64> {
        momentum_amplitudes(&self.grid, &self.values, momenta)
    }
}

fn centroid(grid: &MeterGrid, values: &[C64]) -> f64 {
    let dens: Vec<f64> = values.iter().map(|z| z.norm_sqr()).collect();
    let first: Vec<f64> = dens
        .iter()
        .enumerate()
        .map(|(i, d)| grid.point(i) * d)
        .collect();
    grid.integrate(&first) / grid.integrate(&dens)
}

fn momentum_amplitudes(grid: &MeterGrid, values: &[C64], momenta: &[f64]) -> Vec<C64> {
    let scale = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    momenta
        .iter()
        .map(|&p| {
            let integrand: Vec<C64> = values
                .iter()
                .enumerate()
                .map(|(i, z)| z * c64(0.0, -p * grid.point(i)).exp())
                .collect();
            grid.integrate(&integrand) * scale
        })
        .collect()
}

fn shift_samples(grid: &MeterGrid, values: &[C64], shift: f64) -> Result<Vec<C64>> {
    let first = values.iter().position(|z| z.norm_sqr() > 0.0);
    let last = values.iter().rposition(|z| z.norm_sqr() > 0.0);
    if let (Some(first), Some(last)) = (first, last) {
        let lo = grid.point(first) + shift;
        let hi = grid.point(last) + shift;
        let slack = 1e-9 * grid.spacing();
        if lo < grid.q_min() - slack || hi > grid.q_max() + slack || !shift.is_finite() {
            return Err(Error::ShiftOutOfGrid { shift });
        }
    }
    let h = grid.spacing();
    let n = grid.len();
    Ok((0..n)
        .map(|i| {
            let u = (grid.point(i) - shift - grid.q_min()) / h;
            if u < 0.0 || u > (n - 1) as f64 {
                return real(0.0);
            }
            let i0 = (u.floor() as usize).min(n - 1);
            let t = u - i0 as f64;
            if i0 + 1 >= n || t == 0.0 {
                values[i0]
            } else {
                values[i0] * (1.0 - t) + values[i0 + 1] * t
            }
        })
        .collect())
}

/// How the system eigenvalue acts on the meter.
#[derive(Clone)]
pub enum CouplingMode {
    /// `H = eps S P`: branch `n` is displaced by `eps tau s_n`.
    MomentumDisplacement,
    /// `H = eps S f(M)`: branch `n` picks up `exp(-i eps tau s_n f(m))`.
    PhaseImprint(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for CouplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MomentumDisplacement => write!(f, "MomentumDisplacement"),
            Self::PhaseImprint(_) => write!(f, "PhaseImprint(<fn>)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CouplingSpec {
    epsilon: f64,
    tau: f64,
    mode: CouplingMode,
}

impl CouplingSpec {
    pub fn new(epsilon: f64, tau: f64, mode: CouplingMode) -> Result<Self> {
        if !(tau >= 0.0) || !epsilon.is_finite() || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "coupling epsilon = {epsilon}, tau = {tau}"
            )));
        }
        Ok(Self { epsilon, tau, mode })
    }

    pub fn momentum(epsilon: f64, tau: f64) -> Result<Self> {
        Self::new(epsilon, tau, CouplingMode::MomentumDisplacement)
    }

    pub fn phase(
        epsilon: f64,
        tau: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(epsilon, tau, CouplingMode::PhaseImprint(Arc::new(f)))
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn strength(&self) -> f64 {
        self.epsilon * self.tau
    }

    pub fn mode(&self) -> &CouplingMode {
        &self.mode
    }

    /// Same coupling with a different duration.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.epsilon, tau, self.mode.clone())
    }

    fn apply(&self, meter: &MeterWaveFunction, eigenvalue: f64) -> Result<MeterWaveFunction> {
        let kick = self.strength() * eigenvalue;
        match &self.mode {
            CouplingMode::MomentumDisplacement => {
                if kick == 0.0 {
                    Ok(meter.clone())
                } else {
                    meter.shifted(kick)
                }
            }
            CouplingMode::PhaseImprint(f) => Ok(meter.phase_imprinted(kick, f.as_ref())),
        }
    }
}

/// One term `c_n |s_n> |m_n>` of the entangled system-meter state.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub amplitude: C64,
    pub eigenvalue: f64,
    pub meter: MeterWaveFunction,
}

/// `sum_n c_n |s_n> |m_n>`
#[derive(Clone, Debug, PartialEq)]
pub struct BranchState {
    branches: Vec<Branch>,
}

impl BranchState {
    pub fn new(branches: Vec<Branch>) -> Result<Self> {
        let total: f64 = branches.iter().map(|b| b.amplitude.norm_sqr()).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized { norm: total.sqrt() });
        }
        if let Some(first) = branches.first() {
            if branches.iter().any(|b| b.meter.grid != first.meter.grid) {
                return Err(Error::DimensionMismatch("branch meters on different grids".into()));
            }
        }
        Ok(Self { branches })
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    /// Branches with nonzero amplitude.
    pub fn effective_branches(&self) -> usize {
        self.branches
            .iter()
            .filter(|b| b.amplitude.norm_sqr() > 0.0)
            .count()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.amplitude.norm_sqr()).collect()
    }
}

/// `sum_n c_n |s_n> |m_0>`: every branch starts with the same meter.
pub fn pre_measurement(
    system: &PureState,
    eigenvalues: &[f64],
    meter0: &MeterWaveFunction,
) -> Result<BranchState> {
    if eigenvalues.len() != system.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} eigenvalues for a {}-dimensional system",
            eigenvalues.len(),
            system.dim()
        )));
    }
    let branches = eigenvalues
        .iter()
        .enumerate()
        .map(|(n, &s)| Branch {
            amplitude: system.amplitude(n),
            eigenvalue: s,
            meter: meter0.clone(),
        })
        .collect();
    BranchState::new(branches)
}

/// Applies the impulsive interaction to every branch; amplitudes are untouched.
pub fn evolve_impulsive(state: &BranchState, coupling: &CouplingSpec) -> Result<BranchState> {
    let branches = state
        .branches
        .iter()
        .map(|b| {
            Ok(Branch {
                amplitude: b.amplitude,
                eigenvalue: b.eigenvalue,
                meter: coupling.apply(&b.meter, b.eigenvalue)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BranchState { branches })
}

/// `int dm phi_n(m) conj(phi_n'(m))`
pub fn branch_overlap(state: &BranchState, n: usize, n_prime: usize) -> Result<C64> {
    let len = state.branches.len();
    for index in [n, n_prime] {
        if index >= len {
            return Err(Error::IndexOutOfRange { index, len });
        }
    }
    state.branches[n].meter.overlap(&state.branches[n_prime].meter)
}

/// Reduced density matrix of the system after tracing out the meter:
/// `rho_{n,n'} = c_n conj(c_n') <m_n'|m_n>`, with populations `|c_n|^2`.
pub fn reduced_system_density(state: &BranchState) -> DensityMatrix {
    let d = state.branches.len();
    let mut rho = ComplexMatrix::zeros(d, d);
    for n in 0..d {
        rho[(n, n)] = real(state.branches[n].amplitude.norm_sqr());
        for np in 0..n {
            let (a, b) = (&state.branches[n], &state.branches[np]);
            // <m_n'|m_n> = int phi_n conj(phi_n')
            let g = overlap_integral(&a.meter.grid, &a.meter.values, &b.meter.values);
            let entry = a.amplitude * b.amplitude.conj() * g;
            rho[(n, np)] = entry;
            rho[(np, n)] = entry.conj();
        }
    }
    DensityMatrix::from_trusted(rho)
}

/// Overlap `int |phi_0|^2 exp(-i tau k f(m)) dm` between two phase-imprinted
/// branches whose eigenvalues differ by `k / eps`, for each `tau`.
pub fn phase_overlap_curve(
    meter0: &MeterWaveFunction,
    coupling_gap: f64,
    f: &dyn Fn(f64) -> f64,
    taus: &[f64],
) -> Vec<C64> {
    taus.iter()
        .map(|&tau| {
            let a = meter0.phase_imprinted(tau * coupling_gap, f);
            overlap_integral(&meter0.grid, &a.values, &meter0.values)
        })
        .collect()
}

/// Unnormalized meter samples on a grid (e.g. after post-selection).
#[derive(Clone, Debug)]
pub struct MeterSamples {
    pub grid: MeterGrid,
    pub values: Vec<C64>,
}

impl MeterSamples {
    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.grid, &self.values)
    }

    pub fn centroid(&self) -> f64 {
        centroid(&self.grid, &self.values)
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Grid point of the largest `|phi|^2`.
    pub fn peak(&self) -> f64 {
        let (i, _) = self
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .expect("nonempty grid");
        self.grid.point(i)
    }

    pub fn momentum_amplitudes(&self, momenta: &[f64]) -> Vec<C64> {
        momentum_amplitudes(&self.grid, &self.values, momenta)
    }
}

impl MeterWaveFunction {
    /// Outermost grid points with nonzero amplitude.
    pub fn support_range(&self) -> Option<(f64, f64)> {
        self.support()
            .map(|(a, b)| (self.grid.point(a), self.grid.point(b)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pointer() -> MeterWaveFunction {
        MeterWaveFunction::default_pointer()
    }

    fn wigner_branches() -> BranchState {
        pre_measurement(&PureState::wigner_friend(), &[1.0, -1.0], &pointer()).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(MeterGrid::new(-1.0, 1.0, 8).is_err());
        assert!(MeterGrid::new(1.0, -1.0, 64).is_err());
        let g = MeterGrid::default();
        assert_eq!(g.len(), 2048);
        assert!((g.point(2047) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn pointer_is_normalized_and_truncated() {
        let m = pointer();
        assert!((m.norm_sqr() - 1.0).abs() < 1e-12);
        let (lo, hi) = m.support_range().unwrap();
        assert!(lo >= -4.0 && hi <= 4.0 && lo < -3.95 && hi > 3.95);
        assert!(m.centroid().abs() < 1e-12);
        let mut bad = m.values().to_vec();
        bad[1000] *= 3.0;
        assert!(MeterWaveFunction::new(*m.grid(), bad).is_err());
    }

    #[test]
    fn pre_measurement_examples() {
        let s1 = pre_measurement(&PureState::basis(2, 0), &[1.0, -1.0], &pointer()).unwrap();
        assert_eq!(s1.effective_branches(), 1);

        let wf = wigner_branches();
        let w = wf.weights();
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
        assert_eq!(wf.branches()[0].meter.values(), wf.branches()[1].meter.values());

        assert!(matches!(
            pre_measurement(&PureState::wigner_friend(), &[1.0], &pointer()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn zero_coupling_is_identity() {
        let state = wigner_branches();
        for coupling in [
            CouplingSpec::momentum(1.0, 0.0).unwrap(),
            CouplingSpec::phase(0.0, 3.0, |m| m).unwrap(),
        ] {
            assert_eq!(evolve_impulsive(&state, &coupling).unwrap(), state);
        }
    }

    #[test]
    fn displaced_branches_are_centered_at_shift() {
        let state = wigner_branches();
        let out = evolve_impulsive(&state, &CouplingSpec::momentum(1.0, 3.0).unwrap()).unwrap();
        let centers: Vec<f64> = out.branches().iter().map(|b| b.meter.centroid()).collect();
        assert!((centers[0] - 3.0).abs() < 1e-4, "{centers:?}");
        assert!((centers[1] + 3.0).abs() < 1e-4, "{centers:?}");
        for b in out.branches() {
            let peak = MeterSamples {
                grid: *b.meter.grid(),
                values: b.meter.values().to_vec(),
            }
            .peak();
            assert!((peak - 3.0 * b.eigenvalue).abs() <= b.meter.grid().spacing());
        }
        // Truncated supports [-1, 7] and [-7, 1] share only [-1, 1]:
        // erf(1/sqrt2) exp(-9/2) / erf(2 sqrt2).
        let expected = 0.682_689_492_137_085_9 * (-4.5f64).exp() / 0.999_936_657_516_334_2;
        let g = branch_overlap(&out, 0, 1).unwrap();
        assert!((g.re - expected).abs() < 1e-4 && g.im.abs() < 1e-12, "{g}");
    }

    #[test]
    fn phase_mode_preserves_modulus() {
        let state = wigner_branches();
        let out = evolve_impulsive(&state, &CouplingSpec::phase(1.0, 2.5, |m| m).unwrap()).unwrap();
        for (a, b) in state.branches().iter().zip(out.branches()) {
            for (x, y) in a.meter.values().iter().zip(b.meter.values()) {
                assert!((x.norm() - y.norm()).abs() < 1e-15);
            }
            assert!((b.meter.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_off_grid_is_an_error() {
        let state = wigner_branches();
        let r = evolve_impulsive(&state, &CouplingSpec::momentum(1.0, 17.0).unwrap());
        assert!(matches!(r, Err(Error::ShiftOutOfGrid { .. })));
    }

    #[test]
    fn overlap_examples() {
        let state = wigner_branches();
        for n in 0..2 {
            assert!((branch_overlap(&state, n, n).unwrap() - real(1.0)).norm() < 1e-6);
        }
        assert!(matches!(
            branch_overlap(&state, 0, 2),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
        // Separation 2 eps tau = 10 exceeds the support width 8.
        let far = evolve_impulsive(&state, &CouplingSpec::momentum(1.0, 5.0).unwrap()).unwrap();
        assert!(branch_overlap(&far, 0, 1).unwrap().norm() < 0.05);
    }

    #[test]
    fn phase_overlap_vanishes_beyond_support_scale() {
        // eps (s_n - s_n') = 1 with eigenvalues +-1/2 and eps = 1.
        let state = pre_measurement(&PureState::plus_x(), &[0.5, -0.5], &pointer()).unwrap();
        let mut previous = f64::INFINITY;
        for k in 0..=80 {
            let tau = k as f64 * 0.1;
            let coupling = CouplingSpec::phase(1.0, tau, |m| m).unwrap();
            let out = evolve_impulsive(&state, &coupling).unwrap();
            let g = branch_overlap(&out, 0, 1).unwrap().norm();
            // Gaussian characteristic function exp(-tau^2 sigma^2 / 2).
            assert!((g - (-tau * tau / 2.0).exp()).abs() < 1e-3, "tau {tau}: {g}");
            if tau > 4.0 {
                assert!(g < 0.05);
            }
            previous = previous.min(g);
        }
        assert!(previous < 1e-3);
    }

    #[test]
    fn reduced_density_examples() {
        let state = wigner_branches();
        let rho = reduced_system_density(&state);
        let pure = PureState::wigner_friend().density();
        assert!((rho.matrix() - pure.matrix()).max_abs() < 1e-6);

        let far = evolve_impulsive(&state, &CouplingSpec::momentum(1.0, 5.0).unwrap()).unwrap();
        let rho = reduced_system_density(&far);
        assert!(branch_overlap(&far, 0, 1).unwrap().norm() < 1e-6);
        assert!((rho.matrix() - &ComplexMatrix::from_real_diagonal(&[0.25, 0.75])).max_abs() < 1e-9);
        assert!((rho.purity() - 0.625).abs() < 1e-9);
    }

    #[test]
    fn partial_overlap_matches_discretized_partial_trace() {
        let amps = [c64(0.6, 0.0), c64(0.0, 0.8)];
        let psi = PureState::from_amplitudes(&amps).unwrap();
        let state = pre_measurement(&psi, &[1.0, -1.0], &pointer()).unwrap();
        // Phase coupling gives a complex overlap, so index order matters.
        let coupling = CouplingSpec::phase(1.0, 0.7, |m| m + 0.3 * m * m).unwrap();
        let out = evolve_impulsive(&state, &coupling).unwrap();
        let rho = reduced_system_density(&out);
        let g = branch_overlap(&out, 0, 1).unwrap();
        assert!(g.norm() > 0.05 && g.norm() < 0.95);
        assert!(g.im.abs() > 1e-3);
        assert!((rho.matrix()[(0, 1)].norm() - 0.48 * g.norm()).abs() < 1e-12);

        // Oracle: joint vector Psi[n, i] = c_n phi_n(q_i) sqrt(w_i), trace over i.
        let grid = *pointer().grid();
        let h = grid.spacing();
        let weights: Vec<f64> = (0..grid.len())
            .map(|i| if i == 0 || i == grid.len() - 1 { h / 2.0 } else { h })
            .collect();
        let mut oracle = ComplexMatrix::zeros(2, 2);
        for n in 0..2 {
            for np in 0..2 {
                let (a, b) = (&out.branches()[n], &out.branches()[np]);
                oracle[(n, np)] = (0..grid.len())
                    .map(|i| {
                        a.amplitude * a.meter.values()[i] * (b.amplitude * b.meter.values()[i]).conj()
                            * weights[i]
                    })
                    .sum();
            }
        }
        assert!((rho.matrix()[(0, 1)] - oracle[(0, 1)]).norm() < 1e-12);
        assert!((rho.matrix()[(1, 0)] - oracle[(1, 0)]).norm() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn evolution_preserves_norms(strength in -6.0f64..6.0, theta in 0.0f64..3.0) {
            let psi = PureState::from_amplitudes(&[real(theta.cos()), real(theta.sin())]).unwrap();
            let state = pre_measurement(&psi, &[1.0, -1.0], &pointer()).unwrap();
            for coupling in [
                CouplingSpec::momentum(1.0, strength.abs()).unwrap(),
                CouplingSpec::phase(strength, 1.0, |m| m).unwrap(),
            ] {
                let out = evolve_impulsive(&state, &coupling).unwrap();
                let w: f64 = out.weights().iter().sum();
                prop_assert_eq!(out.weights(), state.weights());
                prop_assert!((w - 1.0).abs() < 1e-12);
                for b in out.branches() {
                    prop_assert!((b.meter.norm_sqr() - 1.0).abs() < 1e-6);
                }
                let rho = reduced_system_density(&out);
                prop_assert!(DensityMatrix::new(rho.matrix().clone()).is_ok());
            }
        }

        #[test]
        fn displacement_is_additive(t1 in 0.0f64..3.0, t2 in 0.0f64..3.0) {
            let state = wigner_branches();
            let c = CouplingSpec::momentum(1.0, t1).unwrap();
            let two_step = evolve_impulsive(
                &evolve_impulsive(&state, &c).unwrap(),
                &c.with_tau(t2).unwrap(),
            ).unwrap();
            let one_step = evolve_impulsive(&state, &c.with_tau(t1 + t2).unwrap()).unwrap();
            // L2 distance, since resampling smears the truncation edge pointwise.
            for (a, b) in two_step.branches().iter().zip(one_step.branches()) {
                let diff: Vec<C64> = a.meter.values().iter().zip(b.meter.values())
                    .map(|(x, y)| x - y)
                    .collect();
                let err = norm_sqr(a.meter.grid(), &diff).sqrt();
                prop_assert!(err < 1e-3, "{}", err);
            }
        }
    }
}
