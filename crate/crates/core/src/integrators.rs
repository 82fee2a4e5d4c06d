//! Rational-approximation time steppers for the reduced systems.
//!
//! One step of the reduced heat equation multiplies each modal coefficient
//! by R(tau * lambda_k); one step of the (damped) wave equation multiplies
//! each modal pair (w_k, dw_k) by the 2x2 matrix R(tau * A_k) with
//! A_k = [[0, 1], [lambda_k, -psi]]. R is either the first-order theta
//! family R(z) = (1 + (1-a)z) / (1 - a z) or Twizell's second-order
//! l0-stable scheme R(z) = (1 + (1-a)z) / ((1 - r1 z)(1 - r2 z)).
//! The l0 property |R(z)| -> 0 as z -> -inf is what keeps large time
//! steps from exciting spurious oscillations; Crank-Nicolson lacks it.

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::spectrum::SpectralBasis;

/// Default epsilon in the Twizell parameter a = 2 - sqrt(2) - epsilon.
/// Small enough to sit at the l0 boundary, large enough to keep the two
/// real roots r1, r2 distinct in double precision (discriminant ~ 2.8e-6).
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// A one-step scheme, identified by its rational amplification function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeSpec {
    /// R(z) = (1 + (1-a)z) / (1 - a z); a = 0 explicit Euler,
    /// a = 1/2 Crank-Nicolson, a = 1 implicit Euler.
    Theta { a: f64 },
    /// R(z) = (1 + (1-a)z) / ((1 - r1 z)(1 - r2 z)) with
    /// r_{1,2} = (a -+ sqrt(a^2 - 4a + 2)) / 2.
    TwizellL0 { a: f64, r1: f64, r2: f64 },
}

impl SchemeSpec {
    pub const fn explicit_euler() -> Self {
        SchemeSpec::Theta { a: 0.0 }
    }

    pub const fn crank_nicolson() -> Self {
        SchemeSpec::Theta { a: 0.5 }
    }

    pub const fn implicit_euler() -> Self {
        SchemeSpec::Theta { a: 1.0 }
    }

    /// The l0-stable second-order scheme with a = 2 - sqrt(2) - epsilon.
    pub fn twizell(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!(
                "twizell epsilon must be positive, got {epsilon}"
            )));
        }
        let a = 2.0 - std::f64::consts::SQRT_2 - epsilon;
        Self::twizell_from_a(a)
    }

    /// Twizell scheme for an explicit a; requires two real non-negative
    /// roots so the denominator (1 - r1 z)(1 - r2 z) has no zero on the
    /// decaying half-axis z < 0. That pins a to [1/2, 2 - sqrt(2)].
    pub fn twizell_from_a(a: f64) -> Result<Self> {
        let disc = a * a - 4.0 * a + 2.0;
        if !(0.5..=2.0 - std::f64::consts::SQRT_2).contains(&a) || disc < 0.0 {
            return Err(Error::Config(format!(
                "twizell parameter a = {a} is outside [1/2, 2 - sqrt(2)]; \
                 the scheme needs two real non-negative roots"
            )));
        }
        let s = disc.sqrt();
        let r1 = (a - s) / 2.0;
        let r2 = (a + s) / 2.0;
        debug_assert!((r1 + r2 - a).abs() <= 1e-14);
        debug_assert!((r1 * r2 - (a - 0.5)).abs() <= 1e-14);
        Ok(SchemeSpec::TwizellL0 { a, r1, r2 })
    }

    /// Scalar amplification factor R(z).
    pub fn amp(&self, z: f64) -> f64 {
        match *self {
            SchemeSpec::Theta { a } => amp_theta(z, a),
            tw @ SchemeSpec::TwizellL0 { .. } => amp_twizell(z, &tw),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            SchemeSpec::Theta { a } if a == 0.0 => "explicit-euler".into(),
            SchemeSpec::Theta { a } if a == 0.5 => "crank-nicolson".into(),
            SchemeSpec::Theta { a } if a == 1.0 => "implicit-euler".into(),
            SchemeSpec::Theta { a } => format!("theta({a})"),
            SchemeSpec::TwizellL0 { .. } => "twizell".into(),
        }
    }
}

/// First-order theta-family amplification: (1 + (1-a)z) / (1 - a z).
pub fn amp_theta(z: f64, a: f64) -> f64 {
    (1.0 + (1.0 - a) * z) / (1.0 - a * z)
}

/// Twizell amplification: (1 + (1-a)z) / ((1 - r1 z)(1 - r2 z)).
/// Degenerates to the theta family for r1 = a, r2 = 0.
pub fn amp_twizell(z: f64, scheme: &SchemeSpec) -> f64 {
    match *scheme {
        SchemeSpec::TwizellL0 { a, r1, r2 } => {
            (1.0 + (1.0 - a) * z) / ((1.0 - r1 * z) * (1.0 - r2 * z))
        }
        SchemeSpec::Theta { .. } => {
            panic!("amp_twizell called with a theta-family scheme")
        }
    }
}

/// The PDE being integrated, in the normalized combined form
/// phi * u_tt + psi * u_t = Delta u.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    /// Second-order coefficient; 0 (parabolic) or 1 (hyperbolic).
    pub phi: f64,
    /// First-order (damping) coefficient.
    pub psi: f64,
}

impl ModelSpec {
    pub const fn heat() -> Self {
        ModelSpec { phi: 0.0, psi: 1.0 }
    }

    pub const fn wave() -> Self {
        ModelSpec { phi: 1.0, psi: 0.0 }
    }

    pub fn damped_wave(psi: f64) -> Result<Self> {
        if !(psi > 0.0) {
            return Err(Error::Config(format!(
                "damped wave requires positive damping psi, got {psi}"
            )));
        }
        Ok(ModelSpec { phi: 1.0, psi })
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi != 0.0 && self.phi != 1.0 {
            return Err(Error::Config(format!(
                "model phi must be 0 or 1 (normalized form), got {}",
                self.phi
            )));
        }
        if self.phi == 0.0 && self.psi == 0.0 {
            return Err(Error::Config("model with phi = 0 and psi = 0 is static".into()));
        }
        Ok(())
    }

    /// True for the first-order (heat) reduction.
    pub fn is_first_order(&self) -> bool {
        self.phi == 0.0
    }

    pub fn label(&self) -> String {
        if self.phi == 0.0 {
            "heat".into()
        } else if self.psi == 0.0 {
            "wave".into()
        } else {
            format!("dampedwave(psi={})", self.psi)
        }
    }
}

/// Uniform time grid 0 = t_0 < ... < t_M = t*.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    /// Rescaled horizon; equals tau * m bit-exactly.
    pub t_star: f64,
    /// Number of steps M.
    pub m: usize,
    /// Step size tau = t* / M.
    pub tau: f64,
    /// Time-step scaling factor c (M = round(M0 / c)).
    pub c: f64,
    /// Base horizon t_M the rescaling starts from.
    pub t_m: f64,
}

impl TimeGrid {
    /// Grid over the model-dependent horizon t*, with M = round(M0 / c).
    pub fn from_horizon(
        model: &ModelSpec,
        t_m: f64,
        lambda_max_abs: f64,
        lambda_r_abs: f64,
        m0: usize,
        c: f64,
    ) -> Result<Self> {
        if !(t_m > 0.0) {
            return Err(Error::Config(format!("base horizon t_M must be positive, got {t_m}")));
        }
        if !(c > 0.0) {
            return Err(Error::Config(format!("scaling factor c must be positive, got {c}")));
        }
        if m0 == 0 {
            return Err(Error::Config("base iteration count M0 must be positive".into()));
        }
        let m = (m0 as f64 / c).round() as usize;
        if m == 0 {
            return Err(Error::Config(format!(
                "M = round({m0} / {c}) is zero; reduce c or raise M0"
            )));
        }
        let horizon = time_horizon(model, t_m, lambda_max_abs, lambda_r_abs)?;
        let tau = horizon / m as f64;
        Ok(TimeGrid {
            t_star: tau * m as f64,
            m,
            tau,
            c,
            t_m,
        })
    }

    /// Sample time t_k = k * tau.
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.tau
    }
}

/// Rescaled temporal horizon: the heat kernel collapses like sqrt(|lambda|)
/// and the wave kernel like its fourth root, so the horizon stretches by
/// the matching power of |lambda_N| / |lambda_r|.
pub fn time_horizon(
    model: &ModelSpec,
    t_m: f64,
    lambda_max_abs: f64,
    lambda_r_abs: f64,
) -> Result<f64> {
    if !(lambda_r_abs > 0.0) {
        return Err(Error::Config(
            "time horizon needs |lambda_r| > 0; retain at least two modes (r >= 2)".into(),
        ));
    }
    if !(lambda_max_abs > 0.0) {
        return Err(Error::Config("time horizon needs a positive |lambda_N| estimate".into()));
    }
    let ratio = lambda_max_abs / lambda_r_abs;
    let factor = if model.is_first_order() {
        ratio.sqrt()
    } else {
        ratio.sqrt().sqrt()
    };
    Ok(t_m * factor)
}

/// Per-mode amplification factors for one heat step: factor_k = R(tau * lambda_k).
/// Logs a warning when a conditionally stable theta scheme is run outside
/// its stability interval.
pub fn heat_step_factors(basis: &SpectralBasis, grid: &TimeGrid, scheme: &SchemeSpec) -> Vec<f64> {
    warn_if_unstable(basis, grid, scheme);
    basis
        .eigenvalues
        .iter()
        .map(|&l| scheme.amp(grid.tau * l))
        .collect()
}

/// Exact per-mode heat factors e^{tau * lambda_k}. Test hook for oracle
/// comparisons; the CLI never routes through it.
pub fn exact_heat_factors(basis: &SpectralBasis, grid: &TimeGrid) -> Vec<f64> {
    basis
        .eigenvalues
        .iter()
        .map(|&l| (grid.tau * l).exp())
        .collect()
}

fn warn_if_unstable(basis: &SpectralBasis, grid: &TimeGrid, scheme: &SchemeSpec) {
    if let SchemeSpec::Theta { a } = *scheme {
        if a < 0.5 {
            let limit = 2.0 / (1.0 - 2.0 * a);
            let worst = grid.tau * basis.lambda_r_abs();
            if worst > limit {
                log::warn!(
                    "theta scheme a = {a} is unstable here: tau * |lambda_r| = {worst:.3e} \
                     exceeds the stability bound {limit:.3e}; expect blow-up"
                );
            }
        }
    }
}

/// Per-mode 2x2 step matrices R(tau * A_k) for the second-order models,
/// A_k = [[0, 1], [lambda_k, -psi]]. The reduced 2r x 2r system of the
/// wave equation is block-diagonal in the modal basis, so one step is r
/// independent 2x2 multiplies.
pub fn wave_step_matrices(
    basis: &SpectralBasis,
    model: &ModelSpec,
    grid: &TimeGrid,
    scheme: &SchemeSpec,
) -> Result<Vec<Matrix2<f64>>> {
    if model.is_first_order() {
        return Err(Error::Config(
            "wave stepping requires a second-order model (phi = 1)".into(),
        ));
    }
    basis
        .eigenvalues
        .iter()
        .map(|&l| mode_step_matrix(l, model.psi, grid.tau, scheme))
        .collect()
}

/// R(tau * A) for a single mode. det(I - c tau A) = 1 + c tau psi - (c tau)^2 lambda
/// >= 1 for lambda <= 0, psi >= 0, c >= 0, so the resolvents exist.
fn mode_step_matrix(lambda: f64, psi: f64, tau: f64, scheme: &SchemeSpec) -> Result<Matrix2<f64>> {
    let a_mat = Matrix2::new(0.0, 1.0, lambda, -psi);
    let id = Matrix2::identity();
    let resolvent = |coeff: f64| -> Result<Matrix2<f64>> {
        (id - coeff * tau * a_mat).try_inverse().ok_or_else(|| {
            Error::Numerical(format!(
                "singular resolvent for lambda = {lambda}, psi = {psi}, tau = {tau}, coeff = {coeff}"
            ))
        })
    };
    match *scheme {
        SchemeSpec::Theta { a } => {
            let forward = id + (1.0 - a) * tau * a_mat;
            if a == 0.0 {
                Ok(forward)
            } else {
                Ok(resolvent(a)? * forward)
            }
        }
        SchemeSpec::TwizellL0 { a, r1, r2 } => {
            let forward = id + (1.0 - a) * tau * a_mat;
            Ok(resolvent(r1)? * resolvent(r2)? * forward)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn twizell_default() -> SchemeSpec {
        SchemeSpec::twizell(DEFAULT_EPSILON).unwrap()
    }

    /// Basis stub: integrator code only reads eigenvalues and the extremes.
    fn basis_with_eigenvalues(eigenvalues: Vec<f64>) -> SpectralBasis {
        let r = eigenvalues.len();
        SpectralBasis {
            eigenvalues,
            vectors: vec![0.0; r],
            mass: vec![1.0],
            lambda_max_abs: 1.0,
            n: 1,
            r,
        }
    }

    #[test]
    fn theta_amplification_hand_values() {
        assert_eq!(amp_theta(-1.0, 1.0), 0.5);
        assert_eq!(amp_theta(-2.0, 0.5), 0.0);
        approx::assert_relative_eq!(amp_theta(-100.0, 0.5), -49.0 / 51.0, max_relative = 1e-15);
        assert_eq!(amp_theta(0.0, 0.3), 1.0);
    }

    #[test]
    fn twizell_roots_satisfy_vieta() {
        let SchemeSpec::TwizellL0 { a, r1, r2 } = twizell_default() else {
            panic!("wrong variant");
        };
        assert!((r1 + r2 - a).abs() <= 1e-14);
        assert!((r1 * r2 - (a - 0.5)).abs() <= 1e-14);
        assert!(r1 > 0.0 && r2 > 0.0 && r1 < r2);
        assert!(SchemeSpec::twizell_from_a(0.7).is_err()); // disc < 0
        assert!(SchemeSpec::twizell(-1.0).is_err());
    }

    #[test]
    fn l0_stability_split() {
        let z = -1e6;
        assert!(SchemeSpec::implicit_euler().amp(z).abs() < 1e-5);
        assert!(twizell_default().amp(z).abs() < 1e-5);
        assert!(SchemeSpec::crank_nicolson().amp(z).abs() > 0.99);
        // CN goes negative past z = -2: the oscillation mechanism
        for z in [-2.5, -10.0, -1e3] {
            assert!(SchemeSpec::crank_nicolson().amp(z) < 0.0);
        }
    }

    #[test]
    fn a_stability_on_log_grid() {
        let schemes = [
            SchemeSpec::crank_nicolson(),
            SchemeSpec::implicit_euler(),
            SchemeSpec::Theta { a: 0.75 },
            twizell_default(),
        ];
        for scheme in schemes {
            assert!(scheme.amp(0.0) == 1.0);
            let mut z = -1e-8;
            while z >= -1e8 {
                let r = scheme.amp(z);
                assert!(
                    r.abs() <= 1.0 + 1e-14,
                    "{}: |R({z:.3e})| = {} > 1",
                    scheme.label(),
                    r.abs()
                );
                z *= 10.0;
            }
        }
    }

    #[test]
    fn order_of_accuracy_slopes() {
        // scalar decay dz/dt = -z over [0,1]; fitted log-log error slope
        let slope = |scheme: &SchemeSpec| -> f64 {
            let mut points = Vec::new();
            for p in 3..=9 {
                let steps = 1usize << p;
                let tau = 1.0 / steps as f64;
                let factor = scheme.amp(-tau);
                let mut w = 1.0;
                for _ in 0..steps {
                    w *= factor;
                }
                let err = (w - (-1.0f64).exp()).abs();
                points.push((tau.ln(), err.ln()));
            }
            let n = points.len() as f64;
            let (sx, sy): (f64, f64) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
            let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
            (n * sxy - sx * sy) / (n * sxx - sx * sx)
        };
        let ie = slope(&SchemeSpec::implicit_euler());
        let cn = slope(&SchemeSpec::crank_nicolson());
        let tw = slope(&twizell_default());
        assert!((ie - 1.0).abs() <= 0.15, "implicit euler slope {ie}");
        assert!((cn - 2.0).abs() <= 0.15, "crank-nicolson slope {cn}");
        assert!((tw - 2.0).abs() <= 0.15, "twizell slope {tw}");
    }

    #[test]
    fn twizell_series_matches_exponential_to_second_order() {
        // 6th-order finite-difference stencils at h = 0.02 resolve the
        // first two derivatives of R at 0 to ~1e-11
        let scheme = twizell_default();
        let f = |z: f64| scheme.amp(z);
        let h = 0.02;
        let d1 = (-f(-3.0 * h) + 9.0 * f(-2.0 * h) - 45.0 * f(-h) + 45.0 * f(h)
            - 9.0 * f(2.0 * h)
            + f(3.0 * h))
            / (60.0 * h);
        let d2 = (2.0 * f(-3.0 * h) - 27.0 * f(-2.0 * h) + 270.0 * f(-h) - 490.0 * f(0.0)
            + 270.0 * f(h)
            - 27.0 * f(2.0 * h)
            + 2.0 * f(3.0 * h))
            / (180.0 * h * h);
        assert!((f(0.0) - 1.0).abs() <= 1e-15);
        assert!((d1 - 1.0).abs() <= 1e-10, "R'(0) = {d1}");
        assert!((d2 / 2.0 - 0.5).abs() <= 1e-10, "R''(0)/2 = {}", d2 / 2.0);
    }

    #[test]
    fn twizell_tail_magnitude() {
        // |R(-1e6)| ~ (1-a) / (r1 r2 * 1e6)
        let scheme = twizell_default();
        let SchemeSpec::TwizellL0 { a, r1, r2 } = scheme else { unreachable!() };
        let asymptotic = (1.0 - a) / (r1 * r2 * 1e6);
        approx::assert_relative_eq!(scheme.amp(-1e6).abs(), asymptotic, max_relative = 1e-4);
    }

    #[test]
    fn theta_is_degenerate_twizell() {
        for a in [0.0, 0.3, 0.5, 1.0] {
            let degenerate = SchemeSpec::TwizellL0 { a, r1: a, r2: 0.0 };
            for z in [-0.1, -1.0, -17.5, -1e4] {
                approx::assert_relative_eq!(
                    amp_theta(z, a),
                    amp_twizell(z, &degenerate),
                    max_relative = 1e-14
                );
            }
        }
    }

    #[test]
    fn heat_factors_are_modewise_amp() {
        let basis = basis_with_eigenvalues(vec![0.0, -1.0, -5.0, -40.0]);
        let grid = TimeGrid {
            t_star: 2.0,
            m: 4,
            tau: 0.5,
            c: 1.0,
            t_m: 1.0,
        };
        for scheme in [
            SchemeSpec::implicit_euler(),
            SchemeSpec::crank_nicolson(),
            twizell_default(),
        ] {
            let factors = heat_step_factors(&basis, &grid, &scheme);
            assert_eq!(factors[0], 1.0); // kernel mode untouched
            for (k, &l) in basis.eigenvalues.iter().enumerate() {
                assert_eq!(factors[k], scheme.amp(0.5 * l));
                assert!(factors[k].abs() <= 1.0);
            }
        }
        // implicit Euler at tau * lambda = -1
        let factors = heat_step_factors(
            &basis_with_eigenvalues(vec![-2.0]),
            &TimeGrid { t_star: 1.0, m: 2, tau: 0.5, c: 1.0, t_m: 1.0 },
            &SchemeSpec::implicit_euler(),
        );
        assert_eq!(factors[0], 0.5);
    }

    #[test]
    fn time_horizon_hand_values() {
        let heat = ModelSpec::heat();
        let wave = ModelSpec::wave();
        assert_eq!(time_horizon(&heat, 1.0, 7.5, 7.5).unwrap(), 1.0);
        assert_eq!(time_horizon(&wave, 1.0, 7.5, 7.5).unwrap(), 1.0);
        approx::assert_relative_eq!(
            time_horizon(&heat, 1.0, 100.0, 1.0).unwrap(),
            10.0,
            max_relative = 1e-15
        );
        approx::assert_relative_eq!(
            time_horizon(&wave, 1.0, 16.0, 1.0).unwrap(),
            2.0,
            max_relative = 1e-15
        );
        assert!(time_horizon(&heat, 1.0, 10.0, 0.0).is_err());
    }

    #[test]
    fn grid_iteration_counts_follow_c() {
        let basis = basis_with_eigenvalues(vec![0.0, -4.0]);
        let mk = |c: f64| {
            TimeGrid::from_horizon(&ModelSpec::heat(), 1.0, 16.0, 4.0, 100, c).unwrap()
        };
        assert_eq!(mk(1.0).m, 100);
        assert_eq!(mk(5.0).m, 20);
        assert_eq!(mk(10.0).m, 10);
        let g = mk(3.0);
        assert_eq!(g.m, 33);
        // tau * M = t* bit-exactly by construction
        assert_eq!(g.tau * g.m as f64, g.t_star);
        assert!(TimeGrid::from_horizon(&ModelSpec::heat(), 1.0, 16.0, 4.0, 100, 1e9).is_err());
        drop(basis);
    }

    #[test]
    fn free_drift_of_the_kernel_mode() {
        let tau = 0.37;
        let m = mode_step_matrix(0.0, 0.0, tau, &SchemeSpec::implicit_euler()).unwrap();
        approx::assert_relative_eq!(m[(0, 0)], 1.0, max_relative = 1e-14);
        approx::assert_relative_eq!(m[(0, 1)], tau, max_relative = 1e-14);
        assert!(m[(1, 0)].abs() <= 1e-15);
        approx::assert_relative_eq!(m[(1, 1)], 1.0, max_relative = 1e-14);

        // zero-velocity kernel state is a fixed point of every scheme
        for scheme in [
            SchemeSpec::explicit_euler(),
            SchemeSpec::crank_nicolson(),
            SchemeSpec::implicit_euler(),
            twizell_default(),
        ] {
            let m = mode_step_matrix(0.0, 0.0, tau, &scheme).unwrap();
            let state = m * nalgebra::Vector2::new(3.25, 0.0);
            approx::assert_relative_eq!(state.x, 3.25, max_relative = 1e-14);
            assert!(state.y.abs() <= 1e-14);
        }
    }

    #[test]
    fn per_mode_stepping_equals_dense_reduced_system() {
        // Eq.-level oracle: the full 2r x 2r rational step applied densely
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..6 {
            let r = 2 + (trial % 4);
            let psi = if trial % 2 == 0 { 0.0 } else { 0.35 };
            let tau = 0.05 + 0.1 * rng.random::<f64>();
            let mut lambdas: Vec<f64> = (0..r)
                .map(|_| -(10.0f64.powf(rng.random::<f64>() * 3.0 - 1.0)))
                .collect();
            lambdas[0] = 0.0;
            let schemes = [
                SchemeSpec::implicit_euler(),
                SchemeSpec::crank_nicolson(),
                twizell_default(),
            ];
            for scheme in schemes {
                // dense H_r = [[0, I], [Lambda, -psi I]]
                let mut h = DMatrix::<f64>::zeros(2 * r, 2 * r);
                for k in 0..r {
                    h[(k, r + k)] = 1.0;
                    h[(r + k, k)] = lambdas[k];
                    h[(r + k, r + k)] = -psi;
                }
                let id = DMatrix::<f64>::identity(2 * r, 2 * r);
                let dense_step = match scheme {
                    SchemeSpec::Theta { a } => {
                        let inv = (&id - a * tau * &h).try_inverse().unwrap();
                        inv * (&id + (1.0 - a) * tau * &h)
                    }
                    SchemeSpec::TwizellL0 { a, r1, r2 } => {
                        let inv1 = (&id - r1 * tau * &h).try_inverse().unwrap();
                        let inv2 = (&id - r2 * tau * &h).try_inverse().unwrap();
                        inv1 * inv2 * (&id + (1.0 - a) * tau * &h)
                    }
                };

                let basis = basis_with_eigenvalues(lambdas.clone());
                let grid = TimeGrid { t_star: tau * 100.0, m: 100, tau, c: 1.0, t_m: 1.0 };
                let model = if psi == 0.0 {
                    ModelSpec::wave()
                } else {
                    ModelSpec::damped_wave(psi).unwrap()
                };
                let mats = wave_step_matrices(&basis, &model, &grid, &scheme).unwrap();

                let mut dense_state = DMatrix::<f64>::zeros(2 * r, 1);
                let mut mode_state: Vec<(f64, f64)> = Vec::new();
                for k in 0..r {
                    let w0 = rng.random::<f64>() - 0.5;
                    let v0 = rng.random::<f64>() - 0.5;
                    dense_state[(k, 0)] = w0;
                    dense_state[(r + k, 0)] = v0;
                    mode_state.push((w0, v0));
                }
                for _ in 0..100 {
                    dense_state = &dense_step * dense_state;
                    for (k, s) in mode_state.iter_mut().enumerate() {
                        let v = mats[k] * nalgebra::Vector2::new(s.0, s.1);
                        *s = (v.x, v.y);
                    }
                }
                for k in 0..r {
                    assert!(
                        (dense_state[(k, 0)] - mode_state[k].0).abs() <= 1e-12,
                        "{} displacement mode {k}: {} vs {}",
                        scheme.label(),
                        dense_state[(k, 0)],
                        mode_state[k].0
                    );
                    assert!(
                        (dense_state[(r + k, 0)] - mode_state[k].1).abs() <= 1e-12,
                        "{} velocity mode {k}",
                        scheme.label()
                    );
                }
            }
        }
    }

    #[test]
    fn wave_energy_conserved_by_cn_dissipated_by_l0_schemes() {
        let lambda: f64 = -4.0;
        let tau = 0.1;
        let energy = |w: f64, v: f64| v * v + lambda.abs() * w * w;
        for (scheme, conserves) in [
            (SchemeSpec::crank_nicolson(), true),
            (SchemeSpec::implicit_euler(), false),
            (twizell_default(), false),
        ] {
            let m = mode_step_matrix(lambda, 0.0, tau, &scheme).unwrap();
            let mut state = nalgebra::Vector2::new(1.0, 0.5);
            let e0 = energy(state.x, state.y);
            let mut prev = e0;
            for _ in 0..200 {
                state = m * state;
                let e = energy(state.x, state.y);
                if conserves {
                    assert!((e - e0).abs() <= 1e-10 * e0, "CN drifted: {e} vs {e0}");
                } else {
                    assert!(e <= prev * (1.0 + 1e-12), "energy grew: {e} > {prev}");
                }
                prev = e;
            }
            if !conserves {
                assert!(prev < e0, "{} never dissipated", scheme.label());
            }
        }
    }

    #[test]
    fn wave_matrices_reject_first_order_model() {
        let basis = basis_with_eigenvalues(vec![0.0, -1.0]);
        let grid = TimeGrid { t_star: 1.0, m: 10, tau: 0.1, c: 1.0, t_m: 1.0 };
        assert!(wave_step_matrices(&basis, &ModelSpec::heat(), &grid, &SchemeSpec::implicit_euler()).is_err());
    }

    #[test]
    fn model_presets_and_validation() {
        assert!(ModelSpec::heat().validate().is_ok());
        assert!(ModelSpec::wave().validate().is_ok());
        assert!(ModelSpec::damped_wave(0.5).unwrap().validate().is_ok());
        assert!(ModelSpec::damped_wave(0.0).is_err());
        assert!(ModelSpec { phi: 0.0, psi: 0.0 }.validate().is_err());
        assert!(ModelSpec { phi: 2.0, psi: 0.0 }.validate().is_err());
    }
}
