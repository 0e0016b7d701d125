//! Master equations for open and continuously measured systems, fixed-step
//! integrators, and the quantum Zeno experiments.
//!
//! Vectorized density matrices are row-major: `vec(rho)[i d + j] = rho[i][j]`,
//! so that `vec(A rho B) = (A (x) B^T) vec(rho)`. For a qubit this orders the
//! components as `(rho_{++}, rho_{+-}, rho_{-+}, rho_{--})`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{c64, expm, expm_taylor, hermitian_eig, real, ComplexMatrix, C64, HERMITIAN_TOL};
use crate::measurement::{KrausSet, Projector, MEASUREMENT_TOL};
use crate::states::{trace_of_product, DensityMatrix, PureState, TRAJECTORY_PSD_TOL};

/// Largest tolerated `|Tr rho - 1|` along a trajectory.
pub const TRACE_DRIFT_TOL: f64 = 1e-6;
pub const MAX_STEPS: usize = 10_000_000;
pub const SURVIVAL: &str = "survival";

/// `H`, jump operators `L_j`, and a common rate `gamma`.
#[derive(Clone, Debug)]
pub struct LindbladSpec {
    hamiltonian: ComplexMatrix,
    jump_ops: Vec<ComplexMatrix>,
    rate: f64,
}

impl LindbladSpec {
    pub fn new(hamiltonian: ComplexMatrix, jump_ops: Vec<ComplexMatrix>, rate: f64) -> Result<Self> {
        let d = hamiltonian.require_square()?;
        hamiltonian.require_hermitian(HERMITIAN_TOL)?;
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParameter(format!("rate {rate} must be >= 0")));
        }
        if let Some(bad) = jump_ops.iter().find(|l| l.shape() != (d, d)) {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} jump operator for a {d}-dimensional system",
                bad.rows(),
                bad.cols()
            )));
        }
        Ok(Self {
            hamiltonian,
            jump_ops,
            rate,
        })
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn jump_ops(&self) -> &[ComplexMatrix] {
        &self.jump_ops
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.rows()
    }
}

/// Uniform time grid from `t0` to `t1`.
///
/// The number of steps is `ceil((t1 - t0) / dt)`; the actual step is shrunk so
/// that the last point lands exactly on `t1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    dt: f64,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, dt: f64) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite() && dt.is_finite()) {
            return Err(Error::InvalidTimeGrid("non-finite bounds".into()));
        }
        if !(t1 > t0) {
            return Err(Error::InvalidTimeGrid(format!("t1 = {t1} must exceed t0 = {t0}")));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidTimeGrid(format!("dt = {dt} must be positive")));
        }
        if (t1 - t0) / dt > MAX_STEPS as f64 {
            return Err(Error::InvalidTimeGrid(format!(
                "more than {MAX_STEPS} steps requested"
            )));
        }
        Ok(Self { t0, t1, dt })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        (((self.t1 - self.t0) / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn step(&self) -> f64 {
        (self.t1 - self.t0) / self.steps() as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let (n, h) = (self.steps(), self.step());
        (0..=n)
            .map(|k| if k == n { self.t1 } else { self.t0 + k as f64 * h })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub observables: BTreeMap<String, Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Records `Tr{obs rho(t)}` at every time under `name`.
    pub fn record_expectation(&mut self, name: &str, obs: &ComplexMatrix) {
        let series = self
            .states
            .iter()
            .map(|rho| trace_of_product(obs, rho.matrix()).re)
            .collect();
        self.observables.insert(name.to_string(), series);
    }

    pub fn observable(&self, name: &str) -> Option<&[f64]> {
        self.observables.get(name).map(Vec::as_slice)
    }

    /// Linear interpolation of a recorded series, exact at grid points.
    pub fn value_at(&self, name: &str, t: f64) -> Option<f64> {
        let series = self.observables.get(name)?;
        let (first, last) = (*self.times.first()?, *self.times.last()?);
        if t < first || t > last {
            return None;
        }
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            return Some(series[0]);
        }
        let i = k - 1;
        if i + 1 >= self.times.len() || self.times[i] == t {
            return Some(series[i]);
        }
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        Some(series[i] * (1.0 - w) + series[i + 1] * w)
    }
}

/// A master equation with its parameters bound.
#[derive(Clone, Debug)]
pub enum MasterEquation {
    /// `-i [H, rho]`
    Liouville { hamiltonian: ComplexMatrix },
    /// `-i [H, rho] + gamma sum_j (L rho L^dagger - {L^dagger L, rho} / 2)`
    Lindblad(LindbladSpec),
    /// `-i [H, rho] + lambda (sum_i K rho K^dagger - rho)`
    Measurement {
        hamiltonian: ComplexMatrix,
        kraus: KrausSet,
        lambda: f64,
    },
}

impl MasterEquation {
    pub fn liouville(hamiltonian: ComplexMatrix) -> Result<Self> {
        hamiltonian.require_square()?;
        hamiltonian.require_hermitian(HERMITIAN_TOL)?;
        Ok(Self::Liouville { hamiltonian })
    }

    pub fn measurement(hamiltonian: ComplexMatrix, kraus: KrausSet, lambda: f64) -> Result<Self> {
        let d = hamiltonian.require_square()?;
        hamiltonian.require_hermitian(HERMITIAN_TOL)?;
        if kraus.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "{}-dimensional Kraus set for a {d}-dimensional Hamiltonian",
                kraus.dim()
            )));
        }
        let residual = kraus.completeness_residual();
        if residual > MEASUREMENT_TOL {
            return Err(Error::IncompleteKrausSet { residual });
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda {lambda} must be >= 0")));
        }
        Ok(Self::Measurement {
            hamiltonian,
            kraus,
            lambda,
        })
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        match self {
            Self::Liouville { hamiltonian } | Self::Measurement { hamiltonian, .. } => hamiltonian,
            Self::Lindblad(spec) => &spec.hamiltonian,
        }
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian().rows()
    }

    /// `d rho / dt` for an arbitrary square matrix of the right size.
    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let h = self.hamiltonian();
        let mut out = h.commutator(rho).scale(c64(0.0, -1.0));
        match self {
            Self::Liouville { .. } => {}
            Self::Lindblad(spec) => {
                for l in &spec.jump_ops {
                    let ldl = &l.adjoint() * l;
                    let term = &l.sandwich(rho) - &ldl.anticommutator(rho).scale_real(0.5);
                    out += &term.scale_real(spec.rate);
                }
            }
            Self::Measurement { kraus, lambda, .. } => {
                let mut jumped = ComplexMatrix::zeros(rho.rows(), rho.cols());
                for k in kraus.operators() {
                    jumped += &k.sandwich(rho);
                }
                out += &(jumped - rho).scale_real(*lambda);
            }
        }
        out
    }

    /// The `d^2 x d^2` generator acting on row-major `vec(rho)`.
    pub fn superoperator(&self) -> ComplexMatrix {
        let d = self.dim();
        let id = ComplexMatrix::identity(d);
        let h = self.hamiltonian();
        let mut gen = (&h.kron(&id) - &id.kron(&h.transpose())).scale(c64(0.0, -1.0));
        match self {
            Self::Liouville { .. } => {}
            Self::Lindblad(spec) => {
                for l in &spec.jump_ops {
                    let ldl = &l.adjoint() * l;
                    let dissipator = &(&l.kron(&l.conj()) - &ldl.kron(&id).scale_real(0.5))
                        - &id.kron(&ldl.transpose()).scale_real(0.5);
                    gen += &dissipator.scale_real(spec.rate);
                }
            }
            Self::Measurement { kraus, lambda, .. } => {
                let mut jump = ComplexMatrix::zeros(d * d, d * d);
                for k in kraus.operators() {
                    jump += &k.kron(&k.conj());
                }
                gen += &(jump - &ComplexMatrix::identity(d * d)).scale_real(*lambda);
            }
        }
        gen
    }

    fn check_state(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}-dimensional state for a {}-dimensional equation",
                rho.dim(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// `-i [H, rho]`
pub fn liouville_rhs(h: &ComplexMatrix, rho: &DensityMatrix) -> Result<ComplexMatrix> {
    let eq = MasterEquation::liouville(h.clone())?;
    eq.check_state(rho)?;
    Ok(eq.apply(rho.matrix()))
}

pub fn lindblad_rhs(spec: &LindbladSpec, rho: &DensityMatrix) -> Result<ComplexMatrix> {
    let eq = MasterEquation::Lindblad(spec.clone());
    eq.check_state(rho)?;
    Ok(eq.apply(rho.matrix()))
}

/// `-i [H, rho] + lambda (sum_i K_i rho K_i^dagger - rho)`
pub fn measurement_rhs(
    h: &ComplexMatrix,
    kraus: &KrausSet,
    lambda: f64,
    rho: &DensityMatrix,
) -> Result<ComplexMatrix> {
    let eq = MasterEquation::measurement(h.clone(), kraus.clone(), lambda)?;
    eq.check_state(rho)?;
    Ok(eq.apply(rho.matrix()))
}

/// `U rho U^dagger` with `U = exp(-i H t)`.
pub fn unitary_evolve(h: &ComplexMatrix, rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    let d = h.require_square()?;
    h.require_hermitian(HERMITIAN_TOL)?;
    if rho.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "{}-dimensional state for a {d}-dimensional Hamiltonian",
            rho.dim()
        )));
    }
    let u = expm(&h.scale(c64(0.0, -t)))?;
    Ok(DensityMatrix::from_trusted(u.sandwich(rho.matrix()).hermitian_part()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Classical fixed-step fourth-order Runge-Kutta on the matrix ODE.
    Rk4,
    /// `vec(rho) <- exp(L h) vec(rho)` with the generator built once.
    SuperoperatorExponential,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Self::Rk4),
            "superoperator-exponential" | "expm" => Ok(Self::SuperoperatorExponential),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

fn rk4_step(eq: &MasterEquation, rho: &ComplexMatrix, h: f64) -> ComplexMatrix {
    let k1 = eq.apply(rho);
    let k2 = eq.apply(&(rho + &k1.scale_real(h / 2.0)));
    let k3 = eq.apply(&(rho + &k2.scale_real(h / 2.0)));
    let k4 = eq.apply(&(rho + &k3.scale_real(h)));
    let mut incr = k1;
    incr += &k2.scale_real(2.0);
    incr += &k3.scale_real(2.0);
    incr += &k4;
    rho + &incr.scale_real(h / 6.0)
}

fn vectorize(rho: &ComplexMatrix) -> Vec<C64> {
    rho.entries().to_vec()
}

fn validate_step(m: ComplexMatrix, time: f64) -> Result<DensityMatrix> {
    if !m.is_finite() {
        return Err(Error::StepTooLarge {
            time,
            reason: "non-finite state".into(),
        });
    }
    let m = m.hermitian_part();
    let drift = (m.trace() - real(1.0)).norm();
    if drift > TRACE_DRIFT_TOL {
        return Err(Error::StepTooLarge {
            time,
            reason: format!("trace drift {drift:e}"),
        });
    }
    let min = hermitian_eig(&m)?.min_value();
    if min < -TRAJECTORY_PSD_TOL {
        return Err(Error::StepTooLarge {
            time,
            reason: format!("min eigenvalue {min:e}"),
        });
    }
    Ok(DensityMatrix::from_trusted(m))
}

/// Integrates `eq` from `rho0` over `grid`. Every stored state is checked for
/// trace drift and positivity; violations abort with `StepTooLarge`.
pub fn integrate(
    eq: &MasterEquation,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    method: Method,
) -> Result<Trajectory> {
    eq.check_state(rho0)?;
    let times = grid.times();
    let h = grid.step();
    let d = eq.dim();
    let mut states = Vec::with_capacity(times.len());
    states.push(rho0.clone());
    let mut current = rho0.matrix().clone();
    let propagator = match method {
        Method::Rk4 => None,
        Method::SuperoperatorExponential => Some(expm_taylor(&eq.superoperator().scale_real(h))),
    };
    for &t in &times[1..] {
        current = match &propagator {
            None => rk4_step(eq, &current, h),
            Some(p) => {
                let v = vectorize(&current);
                let next: Vec<C64> = (0..d * d)
                    .map(|r| (0..d * d).map(|c| p[(r, c)] * v[c]).sum())
                    .collect();
                ComplexMatrix::new(d, d, next)?
            }
        };
        let state = validate_step(current, t)?;
        current = state.matrix().clone();
        states.push(state);
    }
    Ok(Trajectory {
        times,
        states,
        observables: BTreeMap::new(),
    })
}

/// Survival after `n` equally spaced projective checks of `psi0` during
/// `total_time`: `[Tr{Pi U rho U^dagger}]^n` with `U = exp(-i H T/n)`.
pub fn zeno_projective(h: &ComplexMatrix, psi0: &PureState, total_time: f64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let single = zeno_interval_survival(h, psi0, total_time / n as f64)?;
    Ok(single.powf(n as f64))
}

/// `Tr{Pi U(t) rho0 U(t)^dagger}` with `Pi = |psi0><psi0|`.
pub fn zeno_interval_survival(h: &ComplexMatrix, psi0: &PureState, t: f64) -> Result<f64> {
    let rho = unitary_evolve(h, &psi0.density(), t)?;
    let pi = Projector::onto(psi0);
    Ok(trace_of_product(pi.matrix(), rho.matrix()).re.clamp(0.0, 1.0))
}

/// `H = omega0 sigma_x`, Kraus set `{|+><+|, |-><-|}`, at measurement rate
/// `lambda`.
pub fn zeno_equation(omega0: f64, lambda: f64) -> Result<MasterEquation> {
    if !(omega0 > 0.0) {
        return Err(Error::InvalidParameter(format!("omega0 {omega0} must be > 0")));
    }
    let kraus = KrausSet::from_projectors(&Projector::computational_basis(2))?;
    MasterEquation::measurement(ComplexMatrix::pauli_x().scale_real(omega0), kraus, lambda)
}

/// Continuously monitored spin flip starting in `|+>`, with the
/// `"survival"` series `<+|rho(t)|+>`.
pub fn zeno_continuous(omega0: f64, lambda: f64, grid: &TimeGrid) -> Result<Trajectory> {
    zeno_continuous_with(omega0, lambda, grid, Method::SuperoperatorExponential)
}

pub fn zeno_continuous_with(
    omega0: f64,
    lambda: f64,
    grid: &TimeGrid,
    method: Method,
) -> Result<Trajectory> {
    let eq = zeno_equation(omega0, lambda)?;
    let mut traj = integrate(&eq, &PureState::plus().density(), grid, method)?;
    traj.record_expectation(SURVIVAL, &ComplexMatrix::from_real_diagonal(&[1.0, 0.0]));
    Ok(traj)
}
