//! Weak values under pre- and post-selection, and a classical coin analogue.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{c64, hermitian_eig, real, ComplexMatrix, C64, HERMITIAN_TOL};
use crate::meter::{CouplingMode, CouplingSpec, MeterSamples, MeterWaveFunction};
use crate::states::PureState;

pub const SELECTION_TOL: f64 = 1e-12;
const NORMALIZATION_TOL: f64 = 1e-10;
pub const MIN_COIN_TRIALS: usize = 1000;

/// A pre-selected state `|phi(0)>` and a post-selected state `|Phi_out>`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrePostPair {
    pre: PureState,
    post: PureState,
}

impl PrePostPair {
    pub fn new(pre: PureState, post: PureState) -> Result<Self> {
        if pre.dim() != post.dim() {
            return Err(Error::DimensionMismatch(format!(
                "pre-selection has dimension {}, post-selection {}",
                pre.dim(),
                post.dim()
            )));
        }
        Ok(Self { pre, post })
    }

    /// Spin-1/2 pair with
    /// `pre = ((cos t + sin t)|+> + (cos t - sin t)|->) / sqrt 2`
    /// and `post = (|+> + |->) / sqrt 2`, for which
    /// `(sx, sy, sz)_w = (1, i tan t, tan t)`.
    pub fn tilted_spin(theta: f64) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let pre = PureState::from_amplitudes(&[
            real(s * (theta.cos() + theta.sin())),
            real(s * (theta.cos() - theta.sin())),
        ])
        .expect("tilted pre-selection is normalized");
        Self {
            pre,
            post: PureState::plus_x(),
        }
    }

    pub fn pre(&self) -> &PureState {
        &self.pre
    }

    pub fn post(&self) -> &PureState {
        &self.post
    }

    /// `<post|pre>`
    pub fn overlap(&self) -> C64 {
        self.post.overlap(&self.pre)
    }

    fn checked_overlap(&self) -> Result<C64> {
        let z = self.overlap();
        if z.norm() <= SELECTION_TOL {
            return Err(Error::OrthogonalSelection { overlap: z.norm() });
        }
        Ok(z)
    }

    fn check_observable(&self, obs: &ComplexMatrix) -> Result<()> {
        let d = obs.require_square()?;
        if d != self.pre.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{d}x{d} observable for a {}-dimensional system",
                self.pre.dim()
            )));
        }
        obs.require_hermitian(HERMITIAN_TOL)
    }
}

/// `S_w` together with the higher orders `(S^n)_w`, indexed by `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakValue {
    pub value: C64,
    pub order_n_values: Vec<C64>,
}

/// `(S^n)_w = <post| S^n |pre> / <post|pre>`; `n = 0` gives 1.
pub fn weak_value(pair: &PrePostPair, obs: &ComplexMatrix, n: u32) -> Result<C64> {
    pair.check_observable(obs)?;
    let denom = pair.checked_overlap()?;
    if n == 0 {
        return Ok(real(1.0));
    }
    let moved = obs.powi(n).apply(pair.pre.amplitudes());
    Ok(pair.post.amplitudes().inner(&moved) / denom)
}

/// Weak values of orders `0..=max_order` (at least up to 1).
pub fn weak_value_orders(pair: &PrePostPair, obs: &ComplexMatrix, max_order: u32) -> Result<WeakValue> {
    let order_n_values = (0..=max_order.max(1))
        .map(|n| weak_value(pair, obs, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(WeakValue {
        value: order_n_values[1],
        order_n_values,
    })
}

/// `sqrt |(S^2)_w - S_w^2|`
pub fn weak_uncertainty(pair: &PrePostPair, obs: &ComplexMatrix) -> Result<f64> {
    let w = weak_value_orders(pair, obs, 2)?;
    Ok((w.order_n_values[2] - w.value * w.value).norm().sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinWeakRow {
    pub observable: &'static str,
    pub weak_value: C64,
    pub pre_expectation: f64,
    pub post_expectation: f64,
}

/// Rows for `sigma_x`, `sigma_y`, `sigma_z`, in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinWeakTable {
    pub rows: [SpinWeakRow; 3],
}

/// Closed-form spin-1/2 weak values and expectations for
/// `pre = a+|+> + a-|->` and `post = b+|+> + b-|->`.
pub fn spin_weak_table(a_plus: C64, a_minus: C64, b_plus: C64, b_minus: C64) -> Result<SpinWeakTable> {
    for norm in [
        (a_plus.norm_sqr() + a_minus.norm_sqr()).sqrt(),
        (b_plus.norm_sqr() + b_minus.norm_sqr()).sqrt(),
    ] {
        if (norm - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized { norm });
        }
    }
    let denom = a_plus * b_plus.conj() + a_minus * b_minus.conj();
    if denom.norm() <= SELECTION_TOL {
        return Err(Error::OrthogonalSelection {
            overlap: denom.norm(),
        });
    }
    let i = c64(0.0, 1.0);
    let aa = a_plus * a_minus.conj();
    let bb = b_plus * b_minus.conj();
    Ok(SpinWeakTable {
        rows: [
            SpinWeakRow {
                observable: "sigma_x",
                weak_value: (a_minus * b_plus.conj() + a_plus * b_minus.conj()) / denom,
                pre_expectation: 2.0 * aa.re,
                post_expectation: 2.0 * bb.re,
            },
            SpinWeakRow {
                observable: "sigma_y",
                weak_value: i * (a_plus * b_minus.conj() - a_minus * b_plus.conj()) / denom,
                pre_expectation: -2.0 * aa.im,
                post_expectation: -2.0 * bb.im,
            },
            SpinWeakRow {
                observable: "sigma_z",
                weak_value: (a_plus * b_plus.conj() - a_minus * b_minus.conj()) / denom,
                pre_expectation: a_plus.norm_sqr() - a_minus.norm_sqr(),
                post_expectation: b_plus.norm_sqr() - b_minus.norm_sqr(),
            },
        ],
    })
}

/// Exact meter after the impulsive coupling and post-selection.
#[derive(Clone, Debug)]
pub struct PostSelectedMeter {
    /// `<post| U |pre>|phi_0>`, unnormalized.
    pub meter: MeterSamples,
    /// `int |meter|^2`
    pub success_probability: f64,
    /// `S_w`, absent when the selections are orthogonal.
    pub weak_value: Option<C64>,
    /// First-order pointer position `eps tau Re S_w`.
    pub predicted_center: Option<f64>,
}

/// Expands `pre` in the eigenbasis of `obs`, displaces each branch meter by
/// `eps tau s_n`, and contracts with `post`.
pub fn post_selected_meter(
    meter0: &MeterWaveFunction,
    coupling: &CouplingSpec,
    pair: &PrePostPair,
    obs: &ComplexMatrix,
) -> Result<PostSelectedMeter> {
    if !matches!(coupling.mode(), CouplingMode::MomentumDisplacement) {
        return Err(Error::InvalidParameter(
            "post-selected meter needs a momentum-displacement coupling".into(),
        ));
    }
    pair.check_observable(obs)?;
    let eig = hermitian_eig(obs)?;
    let grid = *meter0.grid();
    let mut values = vec![real(0.0); grid.len()];
    for (k, &s) in eig.values.iter().enumerate() {
        let v = eig.vector(k);
        let amp = pair.post.amplitudes().inner(&v) * v.inner(pair.pre.amplitudes());
        if amp.norm() == 0.0 {
            continue;
        }
        let shift = coupling.strength() * s;
        let branch = if shift == 0.0 {
            meter0.clone()
        } else {
            meter0.shifted(shift)?
        };
        for (acc, z) in values.iter_mut().zip(branch.values()) {
            *acc += amp * z;
        }
    }
    let meter = MeterSamples { grid, values };
    let success_probability = meter.norm_sqr();
    let weak = weak_value(pair, obs, 1).ok();
    Ok(PostSelectedMeter {
        meter,
        success_probability,
        weak_value: weak,
        predicted_center: weak.map(|w| coupling.strength() * w.re),
    })
}

/// Ferrie-Combes coin: a reliable observer records `phi` then `Phi`; an
/// unreliable one records `Q` (wrong with probability `(1 - strength)/2`) and
/// flips the coin with probability `1 - delta/(1 + Q strength)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoinModelSpec {
    strength: f64,
    delta: f64,
    seed: u64,
    trials: usize,
}

impl CoinModelSpec {
    pub fn new(strength: f64, delta: f64, seed: u64, trials: usize) -> Result<Self> {
        if !(strength > 0.0 && strength < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "coin strength {strength} outside (0, 1)"
            )));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidParameter(format!("coin delta {delta} outside [0, 1)")));
        }
        let spec = Self {
            strength,
            delta,
            seed,
            trials,
        };
        for q in [1.0, -1.0] {
            let p = spec.flip_probability(q);
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidProbability(format!(
                    "flip probability 1 - {delta}/(1 {} {strength}) = {p}",
                    if q > 0.0 { '+' } else { '-' }
                )));
            }
        }
        Ok(spec)
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    /// `1 - delta / (1 + q strength)`
    pub fn flip_probability(&self, q: f64) -> f64 {
        1.0 - self.delta / (1.0 + q * self.strength)
    }

    /// `p(Q = q, Phi = -1 | phi = 1) = (1 + q strength)/2 * flip(q)`
    pub fn joint_probability(&self, q: f64) -> f64 {
        (1.0 + q * self.strength) / 2.0 * self.flip_probability(q)
    }
}

/// `sum_Q (Q / strength) p(Q, Phi=-1 | phi=1) / p(Phi=-1 | phi=1)`, which is
/// `1 / (1 - delta)`.
pub fn coin_weak_value_analytic(spec: &CoinModelSpec) -> Result<f64> {
    let p_plus = spec.joint_probability(1.0);
    let p_minus = spec.joint_probability(-1.0);
    let p_post = p_plus + p_minus;
    if !(p_post > 0.0) {
        return Err(Error::InvalidProbability(format!(
            "post-selection probability {p_post}"
        )));
    }
    Ok((p_plus - p_minus) / (spec.strength * p_post))
}

/// Monte Carlo estimate of the coin weak value and its standard error.
///
/// One `ChaCha8Rng` seeded with `seed_from_u64(seed)` drives all trials in
/// order; each trial draws two uniforms on `[0, 1)`: the first decides whether
/// `Q` equals `phi = 1`, the second whether the coin is flipped. Trials ending
/// with `Phi = -1` are kept, and the estimate is `mean(Q) / strength` over them.
pub fn coin_weak_value_monte_carlo(spec: &CoinModelSpec) -> Result<(f64, f64)> {
    if spec.trials < MIN_COIN_TRIALS {
        return Err(Error::InvalidParameter(format!(
            "{} coin trials, need at least {MIN_COIN_TRIALS}",
            spec.trials
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p_correct = (1.0 + spec.strength) / 2.0;
    let flip = [spec.flip_probability(1.0), spec.flip_probability(-1.0)];
    let (mut accepted, mut sum_q) = (0u64, 0i64);
    for _ in 0..spec.trials {
        let q: i64 = if rng.gen::<f64>() < p_correct { 1 } else { -1 };
        let flipped = rng.gen::<f64>() < flip[usize::from(q < 0)];
        if flipped {
            accepted += 1;
            sum_q += q;
        }
    }
    if accepted == 0 {
        return Err(Error::NoPostSelectedSamples);
    }
    let n = accepted as f64;
    let mean = sum_q as f64 / n;
    // Q^2 = 1, so the sample variance is n/(n-1) (1 - mean^2).
    let var = if accepted > 1 {
        (1.0 - mean * mean) * n / (n - 1.0)
    } else {
        0.0
    };
    Ok((mean / spec.strength, (var / n).sqrt() / spec.strength))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ComplexVector;
    use crate::meter::MeterGrid;
    use crate::states::density_from_pure;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> PureState {
        let v: Vec<C64> = (0..dim)
            .map(|_| c64(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        PureState::normalize(ComplexVector::new(v).unwrap()).unwrap()
    }

    #[test]
    fn tilted_pair_weak_values() {
        for theta in [0.1 * PI, 0.35 * PI, 0.45 * PI] {
            let pair = PrePostPair::tilted_spin(theta);
            let sx = weak_value(&pair, &ComplexMatrix::pauli_x(), 1).unwrap();
            let sy = weak_value(&pair, &ComplexMatrix::pauli_y(), 1).unwrap();
            let sz = weak_value(&pair, &ComplexMatrix::pauli_z(), 1).unwrap();
            let t = theta.tan();
            assert!((sx - real(1.0)).norm() < 1e-12);
            assert!((sy - c64(0.0, t)).norm() < 1e-12 * t.max(1.0));
            assert!((sz - real(t)).norm() < 1e-12 * t.max(1.0));
        }
    }

    #[test]
    fn anomalous_angle_gives_one_hundred() {
        let pair = PrePostPair::tilted_spin(89.427f64.to_radians());
        let sz = weak_value(&pair, &ComplexMatrix::pauli_z(), 1).unwrap();
        assert!((sz.re - 100.0).abs() < 0.5 && sz.im.abs() < 1e-9, "{sz}");
    }

    #[test]
    fn order_zero_and_orthogonal_selection() {
        let pair = PrePostPair::tilted_spin(0.2);
        assert_eq!(weak_value(&pair, &ComplexMatrix::pauli_z(), 0).unwrap(), real(1.0));
        let w = weak_value_orders(&pair, &ComplexMatrix::pauli_z(), 3).unwrap();
        assert_eq!(w.order_n_values[1], w.value);
        assert_eq!(w.order_n_values.len(), 4);

        let orth = PrePostPair::new(PureState::plus(), PureState::minus()).unwrap();
        assert!(matches!(
            weak_value(&orth, &ComplexMatrix::pauli_x(), 1),
            Err(Error::OrthogonalSelection { .. })
        ));
        let t = spin_weak_table(real(1.0), real(0.0), real(0.0), real(1.0));
        assert!(matches!(t, Err(Error::OrthogonalSelection { .. })));
    }

    #[test]
    fn table_examples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = (c64(0.6, 0.0), c64(0.0, 0.8));
        let t = spin_weak_table(a.0, a.1, a.0, a.1).unwrap();
        for row in &t.rows {
            assert!((row.weak_value - real(row.pre_expectation)).norm() < 1e-12);
        }
        let theta = 0.35 * PI;
        let t = spin_weak_table(
            real(s * (theta.cos() + theta.sin())),
            real(s * (theta.cos() - theta.sin())),
            real(s),
            real(s),
        )
        .unwrap();
        let tan = theta.tan();
        assert!((t.rows[0].weak_value - real(1.0)).norm() < 1e-12);
        assert!((t.rows[1].weak_value - c64(0.0, tan)).norm() < 1e-12);
        assert!((t.rows[2].weak_value - real(tan)).norm() < 1e-12);
        assert!(spin_weak_table(real(1.0), real(1.0), real(1.0), real(0.0)).is_err());
    }

    #[test]
    fn table_matches_general_ratio_for_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let paulis = [
            ComplexMatrix::pauli_x(),
            ComplexMatrix::pauli_y(),
            ComplexMatrix::pauli_z(),
        ];
        for _ in 0..1000 {
            let pre = random_state(&mut rng, 2);
            let post = random_state(&mut rng, 2);
            let table = spin_weak_table(
                pre.amplitude(0),
                pre.amplitude(1),
                post.amplitude(0),
                post.amplitude(1),
            )
            .unwrap();
            let pair = PrePostPair::new(pre.clone(), post.clone()).unwrap();
            for (row, obs) in table.rows.iter().zip(&paulis) {
                let w = weak_value(&pair, obs, 1).unwrap();
                let scale = w.norm().max(1.0);
                assert!((row.weak_value - w).norm() < 1e-12 * scale, "{} {w}", row.observable);
                assert!((row.pre_expectation - pre.expectation(obs).unwrap()).abs() < 1e-12);
                assert!((row.post_expectation - post.expectation(obs).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weak_uncertainty_examples() {
        let up = PrePostPair::new(PureState::plus(), PureState::plus()).unwrap();
        assert!(weak_uncertainty(&up, &ComplexMatrix::pauli_z()).unwrap() < 1e-12);
        for theta in [0.1, 0.3, 0.6, 1.2] {
            let pair = PrePostPair::tilted_spin(theta);
            let u = weak_uncertainty(&pair, &ComplexMatrix::pauli_z()).unwrap();
            let expected = (1.0 - theta.tan().powi(2)).abs().sqrt();
            assert!((u - expected).abs() < 1e-7, "{u} vs {expected}");
        }
        let quarter = PrePostPair::tilted_spin(PI / 4.0);
        assert!(weak_uncertainty(&quarter, &ComplexMatrix::pauli_z()).unwrap() < 1e-7);
    }

    #[test]
    fn eigenstate_selection_shifts_pointer() {
        let meter0 = MeterWaveFunction::default_pointer();
        let pair = PrePostPair::new(PureState::plus(), PureState::plus()).unwrap();
        let coupling = CouplingSpec::momentum(1.0, 2.0).unwrap();
        let out = post_selected_meter(&meter0, &coupling, &pair, &ComplexMatrix::pauli_z()).unwrap();
        assert!((out.success_probability - 1.0).abs() < 1e-9);
        let expected = meter0.shifted(2.0).unwrap();
        let err = out
            .meter
            .values
            .iter()
            .zip(expected.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn weak_regime_pointer_exceeds_eigenvalue_range() {
        let meter0 = MeterWaveFunction::default_pointer();
        let theta = 0.35 * PI;
        let pair = PrePostPair::tilted_spin(theta);
        let et = 0.02;
        let coupling = CouplingSpec::momentum(1.0, et).unwrap();
        let out = post_selected_meter(&meter0, &coupling, &pair, &ComplexMatrix::pauli_z()).unwrap();
        let predicted = out.predicted_center.unwrap();
        assert!((predicted - et * theta.tan()).abs() < 1e-12);
        let centroid = out.meter.centroid();
        assert!(((centroid - predicted) / predicted).abs() < 0.1, "{centroid} vs {predicted}");
        assert!(centroid > et);
        assert!((out.meter.peak() - predicted).abs() < 2.0 * meter0.grid().spacing());
    }

    #[test]
    fn strong_regime_resolves_two_peaks() {
        let meter0 = MeterWaveFunction::default_pointer();
        let theta = 0.35 * PI;
        let pair = PrePostPair::tilted_spin(theta);
        let coupling = CouplingSpec::momentum(1.0, 6.0).unwrap();
        let out = post_selected_meter(&meter0, &coupling, &pair, &ComplexMatrix::pauli_z()).unwrap();
        // Supports [2, 10] and [-10, -2] are disjoint, so weights add.
        let w_plus = ((theta.cos() + theta.sin()) / 2.0).powi(2);
        let w_minus = ((theta.cos() - theta.sin()) / 2.0).powi(2);
        assert!((out.success_probability - (w_plus + w_minus)).abs() < 1e-9);
        let grid = out.meter.grid;
        let dens = out.meter.density();
        let half = |positive: bool| -> f64 {
            let part: Vec<f64> = dens
                .iter()
                .enumerate()
                .map(|(i, d)| if (grid.point(i) > 0.0) == positive { *d } else { 0.0 })
                .collect();
            grid.integrate(&part)
        };
        assert!((half(true) - w_plus).abs() < 1e-9);
        assert!((half(false) - w_minus).abs() < 1e-9);
    }

    #[test]
    fn phase_coupling_is_rejected() {
        let meter0 = MeterWaveFunction::default_pointer();
        let coupling = CouplingSpec::phase(1.0, 1.0, |m| m).unwrap();
        let pair = PrePostPair::tilted_spin(0.3);
        assert!(matches!(
            post_selected_meter(&meter0, &coupling, &pair, &ComplexMatrix::pauli_z()),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn imaginary_weak_value_tilts_momentum_distribution() {
        // Coupling to sigma_y gives S_w = i tan(theta); the momentum density
        // of the post-selected meter picks up a factor ~ exp(2 p eps tau Im S_w).
        let grid = MeterGrid::new(-12.0, 12.0, 1024).unwrap();
        let meter0 = MeterWaveFunction::truncated_gaussian(grid, 0.0, 1.0, 4.0).unwrap();
        let pair = PrePostPair::tilted_spin(0.3 * PI);
        let et = 0.01;
        let coupling = CouplingSpec::momentum(1.0, et).unwrap();
        let out = post_selected_meter(&meter0, &coupling, &pair, &ComplexMatrix::pauli_y()).unwrap();
        let im = out.weak_value.unwrap().im;
        assert!((im - (0.3 * PI).tan()).abs() < 1e-12);
        let ps = [-0.5, 0.5];
        let amps = out.meter.momentum_amplitudes(&ps);
        let base = meter0.momentum_amplitudes(&ps);
        let ratio = |k: usize| amps[k].norm_sqr() / base[k].norm_sqr();
        let tilt = (ratio(1) / ratio(0)).ln() / (ps[1] - ps[0]);
        assert!(((tilt - 2.0 * et * im) / (2.0 * et * im)).abs() < 0.05, "{tilt}");
    }

    #[test]
    fn coin_analytic_examples() {
        for (delta, expected) in [(0.0, 1.0), (0.5, 2.0), (0.9, 10.0), (0.99, 100.0)] {
            let spec = CoinModelSpec::new(0.01, delta, 0, 1000).unwrap();
            let w = coin_weak_value_analytic(&spec).unwrap();
            assert!((w - expected).abs() < 1e-9 * expected, "{delta}: {w}");
        }
        // Two-term sum written out separately for delta = 0.5, strength 0.2.
        let (s, d) = (0.2, 0.5);
        let p_plus = (1.0 + s - d) / 2.0;
        let p_minus = (1.0 - s - d) / 2.0;
        let by_hand = p_plus / (s * (1.0 - d)) - p_minus / (s * (1.0 - d));
        let spec = CoinModelSpec::new(s, d, 0, 1000).unwrap();
        assert!((coin_weak_value_analytic(&spec).unwrap() - by_hand).abs() < 1e-12);
        assert!((by_hand - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_coin_specs() {
        assert!(matches!(
            CoinModelSpec::new(0.2, 0.9, 0, 1000),
            Err(Error::InvalidProbability(_))
        ));
        assert!(CoinModelSpec::new(0.0, 0.5, 0, 1000).is_err());
        assert!(CoinModelSpec::new(0.1, 1.0, 0, 1000).is_err());
        let few = CoinModelSpec::new(0.1, 0.5, 0, 999).unwrap();
        assert!(matches!(
            coin_weak_value_monte_carlo(&few),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn coin_monte_carlo_examples() {
        let spec = CoinModelSpec::new(0.1, 0.5, 11, 1_000_000).unwrap();
        let (est, se) = coin_weak_value_monte_carlo(&spec).unwrap();
        assert!((est - 2.0).abs() < 3.0 * se, "{est} +- {se}");
        assert_eq!(coin_weak_value_monte_carlo(&spec).unwrap(), (est, se));

        for strength in [0.05, 0.3] {
            let spec = CoinModelSpec::new(strength, 0.0, 3, 200_000).unwrap();
            let (est, se) = coin_weak_value_monte_carlo(&spec).unwrap();
            assert!((est - 1.0).abs() < 3.0 * se, "{est} +- {se}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn self_selection_gives_expectation(
            re in proptest::collection::vec(-1.0f64..1.0, 3),
            im in proptest::collection::vec(-1.0f64..1.0, 3),
            h in proptest::collection::vec(-1.0f64..1.0, 9),
        ) {
            let v: Vec<C64> = re.iter().zip(&im).map(|(a, b)| c64(*a, *b)).collect();
            prop_assume!(v.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3);
            let psi = PureState::normalize(ComplexVector::new(v).unwrap()).unwrap();
            let m = ComplexMatrix::new(3, 3, h.iter().zip(h.iter().rev()).map(|(a, b)| c64(*a, *b)).collect()).unwrap();
            let obs = m.hermitian_part();
            let pair = PrePostPair::new(psi.clone(), psi.clone()).unwrap();
            let w = weak_value(&pair, &obs, 1).unwrap();
            let e = crate::states::expectation(&density_from_pure(&psi), &obs).unwrap();
            prop_assert!((w.re - e).abs() < 1e-12 && w.im.abs() < 1e-12);
        }

        #[test]
        fn success_probability_bounds(theta in 0.0f64..3.0, strength in 0.0f64..3.0) {
            let meter0 = MeterWaveFunction::default_pointer();
            let pair = PrePostPair::tilted_spin(theta);
            let c = CouplingSpec::momentum(1.0, strength).unwrap();
            let out = post_selected_meter(&meter0, &c, &pair, &ComplexMatrix::pauli_z()).unwrap();
            prop_assert!(out.success_probability >= -1e-9 && out.success_probability <= 1.0 + 1e-9);
            let c0 = CouplingSpec::momentum(1.0, 0.0).unwrap();
            let out0 = post_selected_meter(&meter0, &c0, &pair, &ComplexMatrix::pauli_z()).unwrap();
            prop_assert!((out0.success_probability - pair.overlap().norm_sqr()).abs() < 1e-9);
        }

        #[test]
        fn first_order_centroid_in_weak_regime(theta in 0.05f64..1.3, strength in 0.001f64..0.05) {
            let meter0 = MeterWaveFunction::default_pointer();
            let pair = PrePostPair::tilted_spin(theta);
            let obs = ComplexMatrix::pauli_z();
            prop_assume!(strength * weak_uncertainty(&pair, &obs).unwrap() <= 0.05);
            let c = CouplingSpec::momentum(1.0, strength).unwrap();
            let out = post_selected_meter(&meter0, &c, &pair, &obs).unwrap();
            let predicted = out.predicted_center.unwrap();
            prop_assert!(((out.meter.centroid() - predicted) / predicted).abs() < 0.1);
        }
    }
}
