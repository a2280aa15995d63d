//! Verification harness: histograms against the invariant density, ergodic
//! time averages, the Fokker–Planck stationarity residual, conservation of
//! the `γ = 0` integral of motion, and quadrature means of theta-expressions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::models::{integral_of_motion, theta_env_general, EnvironmentModel, GrowthModel};
use crate::quadrature::{integrate, support_bracket, GaussHermite};

/// Default number of histogram bins.
pub const DEFAULT_BINS: usize = 50;
/// Default burn-in fraction dropped before histogramming.
pub const DEFAULT_BURN_IN: f64 = 0.1;
/// Number of batches used for batch-means standard errors.
pub const BATCHES: usize = 20;

// Log-integrand cut-off: e^-60 relative to the peak is far below f64 noise
// in the integrals we take.
const LOG_DROP: f64 = 60.0;
const QUAD_ABS: f64 = 1e-15;
const QUAD_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Probability density per bin, normalized over in-range samples.
    pub densities: Vec<f64>,
    /// Samples falling inside the range.
    pub n_samples: usize,
    pub n_below: usize,
    pub n_above: usize,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.densities.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn total(&self) -> usize {
        self.n_samples + self.n_below + self.n_above
    }

    /// Fraction of all samples that fell inside the range.
    pub fn in_range_fraction(&self) -> f64 {
        self.n_samples as f64 / self.total() as f64
    }
}

/// Density-normalized histogram on `n_bins` uniform bins over `[lo, hi)`.
/// The last bin is closed on the right. Samples outside are counted in
/// `n_below`/`n_above` and excluded from the densities.
pub fn histogram(samples: &[f64], n_bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::param("range", hi - lo, "requires finite hi > lo"));
    }
    if n_bins == 0 {
        return Err(Error::param("bins", 0.0, "must be >= 1"));
    }
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    let (mut below, mut above) = (0, 0);
    for &s in samples {
        if s < lo {
            below += 1;
        } else if s > hi || s.is_nan() {
            above += 1;
        } else {
            let i = (((s - lo) / width) as usize).min(n_bins - 1);
            counts[i] += 1;
        }
    }
    let inside: usize = counts.iter().sum();
    if inside == 0 {
        return Err(Error::EmptySamples);
    }
    let edges: Vec<f64> = (0..=n_bins)
        .map(|i| if i == n_bins { hi } else { lo + width * i as f64 })
        .collect();
    let densities = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, w)| c as f64 / (inside as f64 * (w[1] - w[0])))
        .collect();
    Ok(Histogram {
        edges,
        densities,
        n_samples: inside,
        n_below: below,
        n_above: above,
    })
}

/// Normalized population density `exp(-h(x)/θ) / Z` on `(0, ∞)`.
///
/// `Z` is computed in log-x coordinates, where the integrand
/// `exp(u - h(e^u)/θ)` is smooth and decays on both sides.
#[derive(Debug, Clone, Copy)]
pub struct PopulationDensity {
    pub model: GrowthModel,
    pub theta: f64,
    log_z: f64,
    u_lo: f64,
    u_hi: f64,
}

impl PopulationDensity {
    pub fn new(model: &GrowthModel, theta: f64) -> Result<Self> {
        model.validate()?;
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::param("theta", theta, "density requires theta > 0"));
        }
        let log_f = |u: f64| u - model.h_unchecked(u.exp()) / theta;
        let lk = model.k.ln();
        let (u_lo, u_hi, peak) = support_bracket(log_f, lk - 60.0, lk + 12.0, LOG_DROP)?;
        let (mass, _) = integrate(|u| (log_f(u) - peak).exp(), u_lo, u_hi, QUAD_ABS, QUAD_REL)
            .map_err(|e| Error::Quadrature(format!("normalizing {model:?} at theta={theta}: {e}")))?;
        Ok(Self {
            model: *model,
            theta,
            log_z: peak + mass.ln(),
            u_lo,
            u_hi,
        })
    }

    /// `ln Z` for the unnormalized density `exp(-h(x)/θ)`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_z
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        (-self.model.h_unchecked(x) / self.theta - self.log_z).exp()
    }

    /// `E{f(X)}` by adaptive quadrature in `u = ln x`.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let (v, _) = integrate(
            |u| {
                let x = u.exp();
                f(x) * (u - self.model.h_unchecked(x) / self.theta - self.log_z).exp()
            },
            self.u_lo,
            self.u_hi,
            QUAD_ABS,
            QUAD_REL,
        )?;
        Ok(v)
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        let u = x.ln();
        if u <= self.u_lo {
            return Ok(0.0);
        }
        if u >= self.u_hi {
            return Ok(1.0);
        }
        let (v, _) = integrate(
            |u| (u - self.model.h_unchecked(u.exp()) / self.theta - self.log_z).exp(),
            self.u_lo,
            u,
            QUAD_ABS,
            QUAD_REL,
        )?;
        Ok(v.min(1.0))
    }
}

/// Normalized `exp(-h(x)/θ)` evaluated on `grid`.
pub fn theoretical_density(model: &GrowthModel, theta: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if grid.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::param("grid", 0.0, "grid points must be > 0"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("grid", 0.0, "grid must be strictly increasing"));
    }
    let density = PopulationDensity::new(model, theta)?;
    Ok(grid.iter().map(|&x| density.pdf(x)).collect())
}

/// Empirical histogram against the theoretical population density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub histogram: Histogram,
    /// Theoretical density at bin centers.
    pub theoretical: Vec<f64>,
    /// `Σ |p̂ᵢ - pᵢ| wᵢ`, with `p̂` rescaled to the fraction of all samples.
    pub l1_distance: f64,
    /// Largest gap between the binned empirical and theoretical CDFs.
    pub ks_distance: f64,
}

impl DensityReport {
    /// Distances between a histogram and theoretical bin-center densities.
    /// `mass_below` is the theoretical probability below the first edge.
    pub fn from_parts(histogram: Histogram, theoretical: Vec<f64>, mass_below: f64) -> Self {
        let scale = histogram.in_range_fraction();
        let below = histogram.n_below as f64 / histogram.total() as f64;
        let widths = histogram.widths();
        let mut l1 = 0.0;
        let mut ks: f64 = (below - mass_below).abs();
        let (mut cum_e, mut cum_t) = (below, mass_below);
        for ((&e, &t), &w) in histogram.densities.iter().zip(&theoretical).zip(&widths) {
            let e = e * scale;
            l1 += (e - t).abs() * w;
            cum_e += e * w;
            cum_t += t * w;
            ks = ks.max((cum_e - cum_t).abs());
        }
        DensityReport {
            histogram,
            theoretical,
            l1_distance: l1,
            ks_distance: ks.min(1.0),
        }
    }
}

/// Histogram of `samples` (after dropping the leading `burn_in` fraction)
/// compared with the normalized population density.
pub fn compare_density(
    samples: &[f64],
    model: &GrowthModel,
    theta: f64,
    n_bins: usize,
    range: (f64, f64),
    burn_in: f64,
) -> Result<DensityReport> {
    if !(0.0..1.0).contains(&burn_in) {
        return Err(Error::param("burn_in", burn_in, "must lie in [0, 1)"));
    }
    let skip = (samples.len() as f64 * burn_in).floor() as usize;
    let hist = histogram(&samples[skip..], n_bins, range)?;
    let density = PopulationDensity::new(model, theta)?;
    let theoretical = hist.centers().iter().map(|&x| density.pdf(x)).collect();
    let mass_below = density.cdf(range.0)?;
    Ok(DensityReport::from_parts(hist, theoretical, mass_below))
}

/// Mean with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeAverage {
    pub mean: f64,
    pub stderr: f64,
}

impl TimeAverage {
    /// `|mean| < k · stderr`.
    pub fn is_zero_within(&self, k: f64) -> bool {
        self.mean.abs() < k * self.stderr
    }
}

/// Mean of `values` and the standard error estimated from `n_batches`
/// equal, contiguous batches.
pub fn batch_means(values: &[f64], n_batches: usize) -> TimeAverage {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let size = n / n_batches.max(1);
    if size == 0 || n_batches < 2 {
        return TimeAverage {
            mean,
            stderr: f64::NAN,
        };
    }
    let means: Vec<f64> = values
        .chunks_exact(size)
        .take(n_batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let b = means.len() as f64;
    let grand = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b - 1.0);
    TimeAverage {
        mean,
        stderr: (var / b).sqrt(),
    }
}

const MIN_RECORDS: usize = 1000;

fn check_length(trajectory: &Trajectory) -> Result<()> {
    if trajectory.len() < MIN_RECORDS {
        return Err(Error::param(
            "trajectory",
            trajectory.len() as f64,
            "time averages need at least 1000 records",
        ));
    }
    Ok(())
}

/// Time average of the environment theta-expression along `trajectory.ys`.
pub fn time_average_theta_expression(
    trajectory: &Trajectory,
    env: &EnvironmentModel,
    theta: f64,
    lambda: f64,
    gamma: f64,
) -> Result<TimeAverage> {
    check_length(trajectory)?;
    let values: Vec<f64> = trajectory
        .ys
        .iter()
        .map(|&y| theta_env_general(env, y, theta, lambda, gamma))
        .collect();
    Ok(batch_means(&values, BATCHES))
}

/// Time average of `x h'(x) - θ` along `trajectory.xs`.
pub fn time_average_population_theta(
    trajectory: &Trajectory,
    model: &GrowthModel,
    theta: f64,
) -> Result<TimeAverage> {
    check_length(trajectory)?;
    let values: Vec<f64> = trajectory
        .xs
        .iter()
        .map(|&x| model.x_h_prime_unchecked(x) - theta)
        .collect();
    Ok(batch_means(&values, BATCHES))
}

/// Rectangular `(x, y)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Grid2 {
    pub fn uniform(x_range: (f64, f64), nx: usize, y_range: (f64, f64), ny: usize) -> Self {
        let line = |(a, b): (f64, f64), n: usize| -> Vec<f64> {
            if n == 1 {
                return vec![a];
            }
            (0..n)
                .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                .collect()
        };
        Self {
            xs: line(x_range, nx),
            ys: line(y_range, ny),
        }
    }
}

/// Log density with the analytic partial derivatives the Fokker–Planck
/// operator needs.
pub trait LogDensity {
    fn value(&self, x: f64, y: f64) -> f64;
    fn d_dx(&self, x: f64, y: f64) -> f64;
    fn d_dy(&self, x: f64, y: f64) -> f64;
    fn d2_dy2(&self, x: f64, y: f64) -> f64;
}

/// `-(h(x) + h*(y))/θ`.
#[derive(Debug, Clone, Copy)]
pub struct InvariantLogDensity {
    pub model: GrowthModel,
    pub env: EnvironmentModel,
    pub theta: f64,
}

impl LogDensity for InvariantLogDensity {
    fn value(&self, x: f64, y: f64) -> f64 {
        -(self.model.h_unchecked(x) + self.env.h(y)) / self.theta
    }
    fn d_dx(&self, x: f64, _y: f64) -> f64 {
        -self.model.h_prime_unchecked(x) / self.theta
    }
    fn d_dy(&self, _x: f64, y: f64) -> f64 {
        -self.env.h_prime(y) / self.theta
    }
    fn d2_dy2(&self, _x: f64, y: f64) -> f64 {
        -self.env.h_second(y) / self.theta
    }
}

/// Invariant density tilted by `exp(-slope·x/θ)`; a negative control that
/// is not stationary.
#[derive(Debug, Clone, Copy)]
pub struct TiltedLogDensity {
    pub base: InvariantLogDensity,
    pub slope: f64,
}

impl LogDensity for TiltedLogDensity {
    fn value(&self, x: f64, y: f64) -> f64 {
        self.base.value(x, y) - self.slope * x / self.base.theta
    }
    fn d_dx(&self, x: f64, y: f64) -> f64 {
        self.base.d_dx(x, y) - self.slope / self.base.theta
    }
    fn d_dy(&self, x: f64, y: f64) -> f64 {
        self.base.d_dy(x, y)
    }
    fn d2_dy2(&self, x: f64, y: f64) -> f64 {
        self.base.d2_dy2(x, y)
    }
}

/// Parameters of the uncoupled Fokker–Planck operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FokkerPlanck {
    pub model: GrowthModel,
    pub env: EnvironmentModel,
    pub theta: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl FokkerPlanck {
    fn y_drift(&self, x: f64, y: f64) -> f64 {
        -self.lambda * (self.model.x_h_prime_unchecked(x) - self.theta)
            - self.gamma * self.env.h_prime(y)
    }

    /// `F*σ / σ` from analytic derivatives of `ln σ`:
    ///
    /// ```text
    /// F*σ = -∂x[λ x g σ] - ∂y[A σ] + γθ ∂²y σ,   g = h*'(y), A = -λ(xh' - θ) - γ g
    /// F*σ/σ = -λ g (1 + x ℓx) + γ g' - A ℓy + γθ (ℓyy + ℓy²)
    /// ```
    pub fn relative_generator<D: LogDensity>(&self, density: &D, x: f64, y: f64) -> f64 {
        let g = self.env.h_prime(y);
        let dg = self.env.h_second(y);
        let lx = density.d_dx(x, y);
        let ly = density.d_dy(x, y);
        let lyy = density.d2_dy2(x, y);
        -self.lambda * g * (1.0 + x * lx) + self.gamma * dg - self.y_drift(x, y) * ly
            + self.gamma * self.theta * (lyy + ly * ly)
    }

    /// `max |F*σ| / max |λσ|` over the grid using analytic derivatives.
    pub fn residual<D: LogDensity>(&self, density: &D, grid: &Grid2) -> f64 {
        let peak = max_log(density, grid);
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for &x in &grid.xs {
            for &y in &grid.ys {
                let sigma = (density.value(x, y) - peak).exp();
                worst = worst.max((self.relative_generator(density, x, y) * sigma).abs());
                scale = scale.max((self.lambda * sigma).abs());
            }
        }
        worst / scale
    }

    /// Same ratio as [`FokkerPlanck::residual`] with second-order central
    /// differences of step `step` applied to `σ` itself.
    pub fn residual_fd<D: LogDensity>(&self, density: &D, grid: &Grid2, step: f64) -> f64 {
        let peak = max_log(density, grid);
        let sigma = |x: f64, y: f64| (density.value(x, y) - peak).exp();
        let flux_x = |x: f64, y: f64| self.lambda * x * self.env.h_prime(y) * sigma(x, y);
        let flux_y = |x: f64, y: f64| self.y_drift(x, y) * sigma(x, y);
        let diff = self.gamma * self.theta;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for &x in &grid.xs {
            for &y in &grid.ys {
                let s = sigma(x, y);
                let dfx = (flux_x(x + step, y) - flux_x(x - step, y)) / (2.0 * step);
                let dfy = (flux_y(x, y + step) - flux_y(x, y - step)) / (2.0 * step);
                let lap = (sigma(x, y + step) - 2.0 * s + sigma(x, y - step)) / (step * step);
                worst = worst.max((-dfx - dfy + diff * lap).abs());
                scale = scale.max((self.lambda * s).abs());
            }
        }
        worst / scale
    }
}

fn max_log<D: LogDensity>(density: &D, grid: &Grid2) -> f64 {
    grid.xs
        .iter()
        .flat_map(|&x| grid.ys.iter().map(move |&y| density.value(x, y)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Relative Fokker–Planck residual of the invariant density
/// `exp(-(h(x) + h*(y))/θ)` on `grid`, with analytic derivatives.
pub fn fp_residual(
    model: &GrowthModel,
    env: &EnvironmentModel,
    theta: f64,
    lambda: f64,
    gamma: f64,
    grid: &Grid2,
) -> Result<f64> {
    model.validate()?;
    env.validate()?;
    if !(theta > 0.0) {
        return Err(Error::param("theta", theta, "must be > 0"));
    }
    if grid.xs.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::param("grid", 0.0, "x nodes must be > 0"));
    }
    let op = FokkerPlanck {
        model: *model,
        env: *env,
        theta,
        lambda,
        gamma,
    };
    let density = InvariantLogDensity {
        model: *model,
        env: *env,
        theta,
    };
    Ok(op.residual(&density, grid))
}

/// Explicit one-step rule for the noise-free `γ = 0` system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OdeMethod {
    Euler,
    Rk4,
}

/// Worst drift `max |I(t) - I(0)|` of `I = h(x) - θ ln x + h*(y)` along the
/// noise-free `γ = 0` flow `ẋ = λ x h*'(y)`, `ẏ = -λ[x h'(x) - θ]`.
#[allow(clippy::too_many_arguments)]
pub fn conservation_check(
    model: &GrowthModel,
    env: &EnvironmentModel,
    theta: f64,
    lambda: f64,
    x0: f64,
    y0: f64,
    dt: f64,
    t_max: f64,
    method: OdeMethod,
) -> Result<f64> {
    model.validate()?;
    env.validate()?;
    let i0 = integral_of_motion(model, env, x0, y0, theta)?;
    let f = |x: f64, y: f64| {
        (
            lambda * x * env.h_prime(y),
            -lambda * (model.x_h_prime_unchecked(x) - theta),
        )
    };
    let n = (t_max / dt).round() as u64;
    let (mut x, mut y) = (x0, y0);
    let mut worst: f64 = 0.0;
    for step in 1..=n {
        match method {
            OdeMethod::Euler => {
                let (a, b) = f(x, y);
                x += dt * a;
                y += dt * b;
            }
            OdeMethod::Rk4 => {
                let (k1x, k1y) = f(x, y);
                let (k2x, k2y) = f(x + 0.5 * dt * k1x, y + 0.5 * dt * k1y);
                let (k3x, k3y) = f(x + 0.5 * dt * k2x, y + 0.5 * dt * k2y);
                let (k4x, k4y) = f(x + dt * k3x, y + dt * k3y);
                x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
                y += dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            }
        }
        if !(x > 0.0 && x.is_finite() && y.is_finite()) {
            return Err(Error::NonFinite { step, x, y });
        }
        worst = worst.max((integral_of_motion(model, env, x, y, theta)? - i0).abs());
    }
    Ok(worst)
}

/// Invariant measure a theta-expression is averaged against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measure {
    /// `∝ exp(-h(x)/θ)` on `(0, ∞)`.
    Population(GrowthModel),
    /// `∝ exp(-h*(y)/θ)` on the real line.
    Environment(EnvironmentModel),
}

/// Number of Gauss–Hermite nodes used for Gaussian environment means.
const HERMITE_NODES: usize = 64;

/// `E_θ{expr}` under `measure`, by quadrature.
pub fn zero_mean_quadrature<F: Fn(f64) -> f64>(expr: F, measure: &Measure, theta: f64) -> Result<f64> {
    match measure {
        Measure::Population(model) => PopulationDensity::new(model, theta)?.expectation(expr),
        Measure::Environment(EnvironmentModel::Gaussian) => {
            if !(theta > 0.0) {
                return Err(Error::param("theta", theta, "must be > 0"));
            }
            Ok(GaussHermite::new(HERMITE_NODES).gaussian_mean(theta, expr))
        }
        Measure::Environment(env) => {
            env.validate()?;
            if !(theta > 0.0) {
                return Err(Error::param("theta", theta, "must be > 0"));
            }
            let log_f = |y: f64| -env.h(y) / theta;
            let (lo, hi, peak) = support_bracket(log_f, -30.0, 30.0, LOG_DROP)?;
            let (z, _) = integrate(|y| (log_f(y) - peak).exp(), lo, hi, QUAD_ABS, QUAD_REL)?;
            let (m, _) = integrate(|y| expr(y) * (log_f(y) - peak).exp(), lo, hi, QUAD_ABS, QUAD_REL)?;
            Ok(m / z)
        }
    }
}
