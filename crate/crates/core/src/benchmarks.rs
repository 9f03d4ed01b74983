//! The two test systems (UNGM and the falling body tracked by radar) and the
//! zero-mean Gaussian-mixture noise used to drive them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemModel;

/// `0.5x + 25x/(1+x²) + 8cos(1.2(k-1))`: the UNGM state at step `k` given `x(k-1)`.
pub fn ungm_process(x: f64, k: usize) -> f64 {
    0.5 * x + 25.0 * x / (1.0 + x * x) + 8.0 * (1.2 * (k as f64 - 1.0)).cos()
}

/// `x²/20`.
pub fn ungm_measure(x: f64) -> f64 {
    x * x / 20.0
}

/// Univariate nonstationary growth model with filter-side noise variances.
#[derive(Debug, Clone)]
pub struct Ungm {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl Ungm {
    pub fn new(process_variance: f64, measurement_variance: f64) -> Self {
        Self {
            q: DMatrix::from_element(1, 1, process_variance),
            r: DMatrix::from_element(1, 1, measurement_variance),
        }
    }
}

impl SystemModel for Ungm {
    fn state_dim(&self) -> usize {
        1
    }

    fn measurement_dim(&self) -> usize {
        1
    }

    fn process(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, ungm_process(x[0], k))
    }

    fn measure(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, ungm_measure(x[0]))
    }

    fn process_noise(&self) -> &DMatrix<f64> {
        &self.q
    }

    fn measurement_noise(&self) -> &DMatrix<f64> {
        &self.r
    }

    fn process_jacobian(&self, _k: usize, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let x = x[0];
        let d = 1.0 + x * x;
        Some(DMatrix::from_element(1, 1, 0.5 + 25.0 * (1.0 - x * x) / (d * d)))
    }

    fn measurement_jacobian(&self, _k: usize, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, x[0] / 10.0))
    }
}

/// Constants of the falling-body model (feet, seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallingBodyParams {
    /// Air density constant ρ₀.
    pub rho0: f64,
    /// Density-altitude scale `a`.
    pub density_scale: f64,
    pub gravity: f64,
    /// Radar altitude `H`.
    pub radar_altitude: f64,
    /// Horizontal body-radar range `b`.
    pub horizontal_range: f64,
    /// Integration step ΔT.
    pub dt: f64,
    /// Integration steps per measurement.
    pub substeps: usize,
}

impl Default for FallingBodyParams {
    fn default() -> Self {
        Self {
            rho0: 2.0,
            density_scale: 20_000.0,
            gravity: 32.2,
            radar_altitude: 100_000.0,
            horizontal_range: 100_000.0,
            dt: 0.001,
            substeps: 100,
        }
    }
}

impl FallingBodyParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.rho0,
            self.density_scale,
            self.gravity,
            self.radar_altitude,
            self.horizontal_range,
            self.dt,
        ];
        if positive.iter().all(|v| *v > 0.0 && v.is_finite()) && self.substeps > 0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "falling-body parameters must be strictly positive".into(),
            ))
        }
    }

    fn drag_factor(&self, altitude: f64) -> f64 {
        self.dt * self.rho0 * (-altitude / self.density_scale).exp()
    }

    /// One rectangle-rule integration step.
    pub fn substep(&self, x: [f64; 3]) -> [f64; 3] {
        let [pos, vel, ballistic] = x;
        let drag = self.drag_factor(pos) * vel * vel * ballistic / 2.0;
        [
            pos + self.dt * vel,
            vel + drag - self.dt * self.gravity,
            ballistic,
        ]
    }

    /// Jacobian of [`Self::substep`] at `x`.
    fn substep_jacobian(&self, x: [f64; 3]) -> DMatrix<f64> {
        let [pos, vel, ballistic] = x;
        let c = self.drag_factor(pos);
        DMatrix::from_row_slice(
            3,
            3,
            &[
                1.0,
                self.dt,
                0.0,
                -c * vel * vel * ballistic / (2.0 * self.density_scale),
                1.0 + c * vel * ballistic,
                c * vel * vel / 2.0,
                0.0,
                0.0,
                1.0,
            ],
        )
    }
}

fn as_array(x: &DVector<f64>) -> [f64; 3] {
    [x[0], x[1], x[2]]
}

/// Advances the falling-body state by one measurement interval (`substeps` steps).
pub fn falling_body_process(x: &DVector<f64>, params: &FallingBodyParams) -> Result<DVector<f64>> {
    if x.len() != 3 {
        return Err(Error::DimensionMismatch {
            context: "falling-body state",
            expected: 3,
            actual: x.len(),
        });
    }
    let mut s = as_array(x);
    for _ in 0..params.substeps {
        s = params.substep(s);
    }
    if s.iter().all(|v| v.is_finite()) {
        Ok(DVector::from_column_slice(&s))
    } else {
        Err(Error::NonFiniteState("falling-body integration"))
    }
}

/// Radar range `√(b² + (x₁ - H)²)`.
pub fn falling_body_measure(x: &DVector<f64>, params: &FallingBodyParams) -> f64 {
    params.horizontal_range.hypot(x[0] - params.radar_altitude)
}

/// Falling body observed by radar, with zero process noise on the filter side.
#[derive(Debug, Clone)]
pub struct FallingBody {
    pub params: FallingBodyParams,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl FallingBody {
    pub fn new(params: FallingBodyParams, measurement_variance: f64) -> Self {
        Self {
            params,
            q: DMatrix::zeros(3, 3),
            r: DMatrix::from_element(1, 1, measurement_variance),
        }
    }
}

impl SystemModel for FallingBody {
    fn state_dim(&self) -> usize {
        3
    }

    fn measurement_dim(&self) -> usize {
        1
    }

    /// Non-finite integration results are passed through; the filters reject them.
    fn process(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        falling_body_process(x, &self.params)
            .unwrap_or_else(|_| DVector::from_element(3, f64::NAN))
    }

    fn measure(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, falling_body_measure(x, &self.params))
    }

    fn process_noise(&self) -> &DMatrix<f64> {
        &self.q
    }

    fn measurement_noise(&self) -> &DMatrix<f64> {
        &self.r
    }

    fn process_jacobian(&self, _k: usize, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut s = as_array(x);
        let mut jac = DMatrix::identity(3, 3);
        for _ in 0..self.params.substeps {
            jac = self.params.substep_jacobian(s) * jac;
            s = self.params.substep(s);
        }
        Some(jac)
    }

    fn measurement_jacobian(&self, _k: usize, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let dz = x[0] - self.params.radar_altitude;
        let range = self.params.horizontal_range.hypot(dz);
        Some(DMatrix::from_row_slice(1, 3, &[dz / range, 0.0, 0.0]))
    }
}

/// Zero-mean Gaussian mixture `Σ wⱼ N(0, vⱼ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedGaussian {
    components: Vec<(f64, f64)>,
}

impl MixedGaussian {
    pub fn new(components: Vec<(f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyInput);
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        if components
            .iter()
            .any(|(w, v)| !(*w >= 0.0) || !(*v >= 0.0) || !v.is_finite())
        {
            return Err(Error::InvalidParameter(
                "mixture weights and variances must be non-negative".into(),
            ));
        }
        Ok(Self { components })
    }

    pub fn gaussian(variance: f64) -> Result<Self> {
        Self::new(vec![(1.0, variance)])
    }

    /// Degenerate distribution at 0.
    pub fn zero() -> Self {
        Self {
            components: vec![(1.0, 0.0)],
        }
    }

    pub fn components(&self) -> &[(f64, f64)] {
        &self.components
    }

    /// `Σ wⱼ vⱼ`.
    pub fn variance(&self) -> f64 {
        self.components.iter().map(|(w, v)| w * v).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.variance() == 0.0
    }

    /// Picks a component by weight, then draws from it. Always consumes one
    /// uniform and one normal variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let z: f64 = rng.sample(StandardNormal);
        let mut acc = 0.0;
        let mut variance = self.components.last().map_or(0.0, |c| c.1);
        for (w, v) in &self.components {
            acc += w;
            if u < acc {
                variance = *v;
                break;
            }
        }
        z * variance.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ungm_examples() {
        assert_eq!(ungm_process(0.0, 1), 8.0);
        assert_eq!(ungm_measure(10.0), 5.0);
        assert_relative_eq!(ungm_process(1.0, 2), 13.0 + 8.0 * 1.2f64.cos(), epsilon = 1e-14);
    }

    #[test]
    fn ungm_depends_on_step_only_through_cosine() {
        for x in [-3.0, 0.5, 12.0] {
            for k in 1..10 {
                let base = ungm_process(x, k) - 8.0 * (1.2 * (k as f64 - 1.0)).cos();
                assert_relative_eq!(base, 0.5 * x + 25.0 * x / (1.0 + x * x), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn falling_body_single_substep_without_velocity() {
        let p = FallingBodyParams::default();
        let s = p.substep([250_000.0, 0.0, 0.7]);
        assert_eq!(s[0], 250_000.0);
        assert_relative_eq!(s[1], -0.0322, epsilon = 1e-15);
        assert_eq!(s[2], 0.7);
    }

    #[test]
    fn falling_body_initial_drag_term() {
        let p = FallingBodyParams::default();
        let x = [300_000.0, -20_000.0, 1.0 / 1000.0];
        let s = p.substep(x);
        let drag = 0.001 * 2.0 * (-15.0f64).exp() * 4e8 * 0.001 / 2.0;
        assert_relative_eq!(s[1] - x[1] + 0.001 * 32.2, drag, epsilon = 1e-12);
        assert_eq!(s[0], 300_000.0 - 20.0);
    }

    #[test]
    fn falling_body_range_at_radar_altitude() {
        let p = FallingBodyParams::default();
        let x = DVector::from_vec(vec![p.radar_altitude, -5.0, 1e-3]);
        assert_eq!(falling_body_measure(&x, &p), 100_000.0);
    }

    #[test]
    fn ballistic_coefficient_is_constant() {
        let p = FallingBodyParams::default();
        let x = DVector::from_vec(vec![300_000.0, -20_000.0, 1e-3]);
        let next = falling_body_process(&x, &p).unwrap();
        assert_eq!(next[2], 1e-3);
        assert!(next[0] < x[0]);
    }

    #[test]
    fn falling_body_non_finite_is_reported() {
        let p = FallingBodyParams::default();
        let x = DVector::from_vec(vec![-1e9, -1e6, 1.0]);
        assert!(matches!(
            falling_body_process(&x, &p),
            Err(Error::NonFiniteState(_))
        ));
    }

    #[test]
    fn falling_body_jacobian_matches_finite_differences() {
        let fb = FallingBody::new(FallingBodyParams::default(), 1e4);
        let x = DVector::from_vec(vec![200_000.0, -6_000.0, 1.1e-3]);
        let jac = fb.process_jacobian(1, &x).unwrap();
        let scales = [1.0, 0.1, 1e-6];
        let central = |j: usize, h: f64| {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[j] += h;
            dn[j] -= h;
            (fb.process(1, &up) - fb.process(1, &dn)) / (2.0 * h)
        };
        for j in 0..3 {
            // Richardson extrapolation removes the O(h²) term
            let col = (central(j, scales[j] / 2.0) * 4.0 - central(j, scales[j])) / 3.0;
            for i in 0..3 {
                let tol = 1e-5 * jac[(i, j)].abs().max(1e-8);
                assert!((col[i] - jac[(i, j)]).abs() <= tol, "({i},{j}): {} vs {}", col[i], jac[(i, j)]);
            }
        }
    }

    #[test]
    fn ungm_jacobians_match_finite_differences() {
        let model = Ungm::new(1.0, 1.0);
        for x0 in [-4.0, -0.3, 0.0, 2.5, 11.0] {
            let x = DVector::from_element(1, x0);
            let h = 1e-6;
            let fd = (ungm_process(x0 + h, 3) - ungm_process(x0 - h, 3)) / (2.0 * h);
            assert_relative_eq!(model.process_jacobian(3, &x).unwrap()[(0, 0)], fd, epsilon = 1e-6);
            let fd = (ungm_measure(x0 + h) - ungm_measure(x0 - h)) / (2.0 * h);
            assert_relative_eq!(model.measurement_jacobian(3, &x).unwrap()[(0, 0)], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn mixture_validation() {
        assert!(MixedGaussian::new(vec![]).is_err());
        assert!(MixedGaussian::new(vec![(0.5, 1.0), (0.4, 2.0)]).is_err());
        assert!(MixedGaussian::new(vec![(1.0, -1.0)]).is_err());
        assert_relative_eq!(
            MixedGaussian::new(vec![(0.8, 1.0), (0.2, 400.0)]).unwrap().variance(),
            80.8,
            epsilon = 1e-12
        );
    }

    fn sample_variance(dist: &MixedGaussian, n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    }

    #[test]
    fn single_component_variance() {
        let v = sample_variance(&MixedGaussian::gaussian(1.0).unwrap(), 100_000, 1);
        assert!((v - 1.0).abs() <= 0.03, "{v}");
    }

    #[test]
    fn impulsive_measurement_mixture_variance() {
        let d = MixedGaussian::new(vec![(0.8, 1.0), (0.2, 400.0)]).unwrap();
        let v = sample_variance(&d, 1_000_000, 2);
        assert!((v - 80.8).abs() <= 1.5, "{v}");
    }

    #[test]
    fn radar_mixture_variance() {
        let d = MixedGaussian::new(vec![(0.7, 1000.0), (0.3, 100_000.0)]).unwrap();
        let v = sample_variance(&d, 1_000_000, 3);
        assert!((v - 30_700.0).abs() <= 600.0, "{v}");
    }

    #[test]
    fn zero_mixture_samples_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(MixedGaussian::zero().sample(&mut rng), 0.0);
    }
}
