//! Time stepping for the coupled population–environment system
//!
//! ```text
//! ẋ = λ x h*'(y)
//! ẏ = -λ [x h'(x) - θ] - γ h*'(y) + √(2γθ) ξ(t)
//! ```
//!
//! and for the deterministic growth laws it reduces to when `γ ≫ 1`, `θ → 0`.
//!
//! `x` carries no noise, so it is advanced with the exact exponential map of
//! its drift for `y` frozen over the step; positivity is structural. `y` is
//! advanced explicitly with additive noise of amplitude `√(2γθ dt)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{CouplingRule, EnvironmentModel, GrowthKind, GrowthModel};

/// Explicit update rule for the environment variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `y' = y + f dt + σ ξₙ`.
    EulerMaruyama,
    /// `y' = y + f dt + σ (ξₙ + ξₙ₊₁)/2` (Leimkuhler–Matthews). Same cost and
    /// same deterministic part as Euler–Maruyama, but the stationary variance
    /// of a linear restoring force is exact instead of `θ/(1 - γdt/2)`.
    #[default]
    LeimkuhlerMatthews,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub lambda: f64,
    pub gamma: f64,
    pub theta: f64,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    pub x0: f64,
    pub y0: f64,
    pub record_stride: u64,
    #[serde(default)]
    pub scheme: Scheme,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            gamma: 50.0,
            theta: 0.001,
            dt: 0.001,
            t_max: 20.0,
            seed: 0,
            x0: 0.01,
            y0: 0.0,
            record_stride: 1,
            scheme: Scheme::default(),
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, v, "must be finite and > 0"))
            }
        };
        let non_negative = |name, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, v, "must be finite and >= 0"))
            }
        };
        positive("lambda", self.lambda)?;
        non_negative("gamma", self.gamma)?;
        non_negative("theta", self.theta)?;
        positive("dt", self.dt)?;
        positive("t_max", self.t_max)?;
        positive("x0", self.x0)?;
        if !self.y0.is_finite() {
            return Err(Error::param("y0", self.y0, "must be finite"));
        }
        if self.record_stride == 0 {
            return Err(Error::param("record_stride", 0.0, "must be >= 1"));
        }
        if self.dt * self.gamma >= 0.5 {
            return Err(Error::param(
                "dt",
                self.dt,
                "explicit stepping requires dt * gamma < 0.5",
            ));
        }
        Ok(())
    }

    /// Growth rate of the Kramers-limit ODE, `r = λ²/γ`.
    pub fn rate(&self) -> Option<f64> {
        (self.gamma > 0.0).then(|| self.lambda * self.lambda / self.gamma)
    }

    /// Number of steps needed to reach `t_max`.
    pub fn n_steps(&self) -> u64 {
        step_count(self.t_max, self.dt)
    }

    /// Noise increment scale `√(2γθ dt)`.
    pub fn noise_amplitude(&self) -> f64 {
        (2.0 * self.gamma * self.theta * self.dt).sqrt()
    }
}

fn step_count(t_max: f64, dt: f64) -> u64 {
    let q = t_max / dt;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * q.max(1.0) {
        r as u64
    } else {
        q.ceil() as u64
    }
}

/// Recorded time series plus everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub params: SimParams,
    pub model: GrowthModel,
    pub env: EnvironmentModel,
    pub rule: CouplingRule,
    /// Generator stream; run `i` of an ensemble uses stream `i`.
    pub stream: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Copy with the leading `fraction` of records dropped.
    pub fn skip_fraction(&self, fraction: f64) -> Trajectory {
        let skip = ((self.len() as f64) * fraction.clamp(0.0, 1.0)).floor() as usize;
        Trajectory {
            times: self.times[skip..].to_vec(),
            xs: self.xs[skip..].to_vec(),
            ys: self.ys[skip..].to_vec(),
            ..self.clone()
        }
    }
}

/// Deterministic right-hand side of the coupled system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drift {
    pub dx_dt: f64,
    pub dy_dt: f64,
    /// `ẋ / x = λ h*'(y)`.
    pub growth_rate: f64,
}

/// Drift of the coupled system. With an active coupling rule the carrying
/// capacity inside `x h'(x)` is `K[y]`.
pub fn drift(
    model: &GrowthModel,
    env: &EnvironmentModel,
    rule: &CouplingRule,
    x: f64,
    y: f64,
    params: &SimParams,
) -> Result<Drift> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::domain("x", x, "population density must be finite and > 0"));
    }
    Ok(drift_unchecked(
        model,
        env,
        rule,
        x,
        y,
        params.lambda,
        params.gamma,
        params.theta,
    ))
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn drift_unchecked(
    model: &GrowthModel,
    env: &EnvironmentModel,
    rule: &CouplingRule,
    x: f64,
    y: f64,
    lambda: f64,
    gamma: f64,
    theta: f64,
) -> Drift {
    let g = env.h_prime(y);
    let k = rule.effective_k(model.k, y);
    let xhp = model.with_capacity(k).x_h_prime_unchecked(x);
    let growth_rate = lambda * g;
    Drift {
        dx_dt: growth_rate * x,
        dy_dt: -lambda * (xhp - theta) - gamma * g,
        growth_rate,
    }
}

/// One Euler–Maruyama step. `noise` is a standard normal deviate.
pub fn em_step(state: (f64, f64), drift: &Drift, params: &SimParams, noise: f64) -> (f64, f64) {
    let (x, y) = state;
    let dt = params.dt;
    (
        x * (drift.growth_rate * dt).exp(),
        y + drift.dy_dt * dt + params.noise_amplitude() * noise,
    )
}

/// One Leimkuhler–Matthews step: the noise increment is the mean of the
/// current and the next standard normal deviate.
pub fn lm_step(
    state: (f64, f64),
    drift: &Drift,
    params: &SimParams,
    noise: f64,
    next_noise: f64,
) -> (f64, f64) {
    em_step(state, drift, params, 0.5 * (noise + next_noise))
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulate one trajectory on generator stream 0.
pub fn simulate(
    model: &GrowthModel,
    env: &EnvironmentModel,
    rule: &CouplingRule,
    params: &SimParams,
) -> Result<Trajectory> {
    simulate_stream(model, env, rule, params, 0)
}

/// Simulate one trajectory on an explicit generator stream.
pub fn simulate_stream(
    model: &GrowthModel,
    env: &EnvironmentModel,
    rule: &CouplingRule,
    params: &SimParams,
    stream: u64,
) -> Result<Trajectory> {
    model.validate()?;
    env.validate()?;
    rule.validate()?;
    params.validate()?;

    let n = params.n_steps();
    let stride = params.record_stride;
    let capacity = (n / stride + 1) as usize;
    let mut times = Vec::with_capacity(capacity);
    let mut xs = Vec::with_capacity(capacity);
    let mut ys = Vec::with_capacity(capacity);

    let (lambda, gamma, theta, dt) = (params.lambda, params.gamma, params.theta, params.dt);
    let sigma = params.noise_amplitude();
    let mut rng = rng_for(params.seed, stream);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let (mut x, mut y) = (params.x0, params.y0);
    times.push(0.0);
    xs.push(x);
    ys.push(y);

    let mut xi = match params.scheme {
        Scheme::EulerMaruyama => 0.0,
        Scheme::LeimkuhlerMatthews => normal(),
    };
    for step in 1..=n {
        let d = drift_unchecked(model, env, rule, x, y, lambda, gamma, theta);
        let next = normal();
        let increment = match params.scheme {
            Scheme::EulerMaruyama => next,
            Scheme::LeimkuhlerMatthews => {
                let inc = 0.5 * (xi + next);
                xi = next;
                inc
            }
        };
        x *= (d.growth_rate * dt).exp();
        y += d.dy_dt * dt + sigma * increment;
        if !(x.is_finite() && y.is_finite() && x > 0.0) {
            return Err(Error::NonFinite { step, x, y });
        }
        if step % stride == 0 {
            times.push(step as f64 * dt);
            xs.push(x);
            ys.push(y);
        }
    }

    Ok(Trajectory {
        times,
        xs,
        ys,
        params: *params,
        model: *model,
        env: *env,
        rule: *rule,
        stream,
    })
}

/// `n_runs` independent trajectories sharing `params.seed`; run `i` uses
/// generator stream `i`. Output order is run order.
pub fn ensemble(
    model: &GrowthModel,
    env: &EnvironmentModel,
    rule: &CouplingRule,
    params: &SimParams,
    n_runs: usize,
) -> Result<Vec<Trajectory>> {
    (0..n_runs as u64)
        .into_par_iter()
        .map(|i| simulate_stream(model, env, rule, params, i))
        .collect()
}

/// Pointwise mean of population densities over an ensemble with identical
/// record times.
pub fn ensemble_mean(runs: &[Trajectory]) -> Vec<f64> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let n = runs.len() as f64;
    (0..first.len())
        .map(|i| runs.iter().map(|r| r.xs[i]).sum::<f64>() / n)
        .collect()
}

/// Deterministic growth curve sampled every `record_stride` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCurve {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub model: GrowthModel,
    pub rate: f64,
}

/// Classical RK4 solution of `ẋ = r x (1 - x/K)` (logistic) or
/// `ẋ = -r x ln(x/K)` (Gompertz).
pub fn simulate_deterministic(
    model: &GrowthModel,
    rate: f64,
    x0: f64,
    dt: f64,
    t_max: f64,
    record_stride: u64,
) -> Result<GrowthCurve> {
    model.validate()?;
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::param("x0", x0, "must be > 0"));
    }
    if !(dt > 0.0 && t_max > 0.0) {
        return Err(Error::param("dt", dt, "dt and t_max must be > 0"));
    }
    if record_stride == 0 {
        return Err(Error::param("record_stride", 0.0, "must be >= 1"));
    }
    let k = model.k;
    let f = |x: f64| match model.kind {
        GrowthKind::Logistic => rate * x * (1.0 - x / k),
        GrowthKind::Gompertz => -rate * x * (x / k).ln(),
    };
    let n = step_count(t_max, dt);
    let mut times = vec![0.0];
    let mut xs = vec![x0];
    let mut x = x0;
    for step in 1..=n {
        let k1 = f(x);
        let k2 = f(x + 0.5 * dt * k1);
        let k3 = f(x + 0.5 * dt * k2);
        let k4 = f(x + dt * k3);
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if step % record_stride == 0 {
            times.push(step as f64 * dt);
            xs.push(x);
        }
    }
    Ok(GrowthCurve {
        times,
        xs,
        model: *model,
        rate,
    })
}

/// Closed-form logistic solution `K x0 e^{rt} / (K + x0 (e^{rt} - 1))`.
pub fn logistic_closed_form(x0: f64, rate: f64, k: f64, t: f64) -> f64 {
    let e = (rate * t).exp_m1();
    k * x0 * (e + 1.0) / (k + x0 * e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fig1() -> SimParams {
        SimParams {
            lambda: 1.0,
            gamma: 50.0,
            theta: 0.001,
            dt: 0.001,
            t_max: 20.0,
            seed: 7,
            x0: 0.01,
            y0: 0.0,
            record_stride: 100,
            scheme: Scheme::default(),
        }
    }

    const LOGISTIC: GrowthModel = GrowthModel {
        kind: GrowthKind::Logistic,
        k: 1.0,
    };
    const GAUSS: EnvironmentModel = EnvironmentModel::Gaussian;

    #[test]
    fn drift_examples() {
        let mut p = fig1();
        p.theta = 0.0;
        let d = drift(&LOGISTIC, &GAUSS, &CouplingRule::Fixed, 1.0, 0.0, &p).unwrap();
        assert_eq!((d.dx_dt, d.dy_dt), (0.0, 0.0));

        let d = drift(&LOGISTIC, &GAUSS, &CouplingRule::Fixed, 0.01, 0.0, &fig1()).unwrap();
        assert_eq!(d.dx_dt, 0.0);
        assert_relative_eq!(d.dy_dt, 0.991, epsilon = 1e-14);

        let env = EnvironmentModel::SymmetricBimodal { m: 0.5 };
        let y = 0.5f64.sqrt();
        let d = drift(&LOGISTIC, &env, &CouplingRule::Fixed, 1.0, y, &p).unwrap();
        // x h'(x) - θ = 0 at x = K, θ = 0, so only -γ h*'(y) remains
        assert!(d.dy_dt.abs() < 1e-12);

        assert!(drift(&LOGISTIC, &GAUSS, &CouplingRule::Fixed, 0.0, 0.0, &p).is_err());
    }

    #[test]
    fn drift_matches_stochastic_logistic_form() {
        let p = SimParams {
            lambda: 1.7,
            gamma: 3.0,
            theta: 0.2,
            ..fig1()
        };
        for (x, y) in [(0.3, -0.4), (1.0, 0.0), (2.5, 1.2)] {
            let d = drift(&GrowthModel::logistic(1.0), &GAUSS, &CouplingRule::Fixed, x, y, &p).unwrap();
            let expect = -1.7 * ((x - 1.0) - 0.2) - 3.0 * y;
            assert_relative_eq!(d.dy_dt, expect, epsilon = 1e-13);
            assert_relative_eq!(d.dx_dt, 1.7 * x * y, epsilon = 1e-13);
        }
    }

    #[test]
    fn coupled_drift_uses_shifted_capacity() {
        let p = SimParams { theta: 0.0, ..fig1() };
        let rule = CouplingRule::heaviside(0.0);
        // y >= 0 selects K = 2, so x = 2 is the population equilibrium
        let d = drift(&LOGISTIC, &GAUSS, &rule, 2.0, 0.0, &p).unwrap();
        assert_eq!(d.dy_dt, 0.0);
        let d = drift(&LOGISTIC, &GAUSS, &rule, 1.0, -1e-9, &p).unwrap();
        assert_relative_eq!(d.dy_dt, 50.0 * 1e-9, epsilon = 1e-18);
    }

    #[test]
    fn em_step_examples() {
        let p = fig1();
        let d = drift(&LOGISTIC, &GAUSS, &CouplingRule::Fixed, 0.01, 0.0, &p).unwrap();
        let (x, y) = em_step((0.01, 0.0), &d, &p, 0.0);
        assert_eq!(x, 0.01);
        assert_relative_eq!(y, 0.000991, epsilon = 1e-15);

        let d = drift(&LOGISTIC, &GAUSS, &CouplingRule::Fixed, 1.0, 0.0, &p).unwrap();
        assert_eq!(em_step((1.0, 0.0), &d, &p, 2.5).0, 1.0);

        let (_, y) = lm_step((0.01, 0.0), &drift(&LOGISTIC, &GAUSS, &CouplingRule::Fixed, 0.01, 0.0, &p).unwrap(), &p, 1.0, -1.0);
        assert_relative_eq!(y, 0.000991, epsilon = 1e-15);
    }

    #[test]
    fn noise_free_reduces_to_deterministic_euler() {
        for scheme in [Scheme::EulerMaruyama, Scheme::LeimkuhlerMatthews] {
            let p = SimParams {
                lambda: 1.3,
                gamma: 0.0,
                theta: 0.0,
                dt: 1e-3,
                t_max: 1.0,
                x0: 0.4,
                y0: 0.2,
                record_stride: 1,
                scheme,
                ..fig1()
            };
            let traj = simulate(&LOGISTIC, &GAUSS, &CouplingRule::Fixed, &p).unwrap();
            assert_eq!(traj.len(), 1001);
            let (mut lx, mut y) = (0.4f64.ln(), 0.2);
            for i in 1..=1000 {
                let x = lx.exp();
                let (dl, dy) = (1.3 * y, -1.3 * (x - 1.0));
                lx += dl * 1e-3;
                y += dy * 1e-3;
                assert_relative_eq!(traj.xs[i], lx.exp(), max_relative = 1e-12);
                assert_relative_eq!(traj.ys[i], y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn first_step_from_rest_leaves_x_unchanged() {
        let p = SimParams {
            gamma: 0.0,
            theta: 0.0,
            y0: 0.0,
            x0: 0.3,
            record_stride: 1,
            ..fig1()
        };
        let t = simulate(&LOGISTIC, &GAUSS, &CouplingRule::Fixed, &p).unwrap();
        assert_eq!(t.xs[1], 0.3);
        assert!(t.xs[2] > 0.3);
    }

    #[test]
    fn record_layout() {
        let p = SimParams {
            t_max: 1.0,
            dt: 0.01,
            gamma: 10.0,
            record_stride: 10,
            ..fig1()
        };
        let t = simulate(&LOGISTIC, &GAUSS, &CouplingRule::Fixed, &p).unwrap();
        assert_eq!(t.len(), 11);
        for (i, w) in t.times.windows(2).enumerate() {
            assert!(w[1] > w[0], "record {i}");
            assert_relative_eq!(w[1] - w[0], 0.1, epsilon = 1e-12);
        }
        assert_relative_eq!(*t.times.last().unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn same_seed_same_trajectory_and_streams_differ() {
        let p = fig1();
        let a = simulate(&LOGISTIC, &GAUSS, &CouplingRule::Fixed, &p).unwrap();
        let b = simulate(&LOGISTIC, &GAUSS, &CouplingRule::Fixed, &p).unwrap();
        assert_eq!(a, b);
        let runs = ensemble(&LOGISTIC, &GAUSS, &CouplingRule::Fixed, &p, 3).unwrap();
        assert_eq!(runs[0], a);
        assert_ne!(runs[1].xs, runs[2].xs);
        assert_eq!(runs[2].stream, 2);
    }

    #[test]
    fn stability_guard_and_validation() {
        let bad = SimParams { dt: 0.01, ..fig1() };
        assert!(matches!(
            simulate(&LOGISTIC, &GAUSS, &CouplingRule::Fixed, &bad),
            Err(Error::InvalidParameter { name: "dt", .. })
        ));
        for p in [
            SimParams { theta: -1.0, ..fig1() },
            SimParams { x0: 0.0, ..fig1() },
            SimParams { lambda: 0.0, ..fig1() },
            SimParams { record_stride: 0, ..fig1() },
            SimParams { t_max: 0.0, ..fig1() },
        ] {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn non_finite_state_aborts_with_step() {
        // a very stiff quartic environment blows up under explicit stepping
        let env = EnvironmentModel::SymmetricBimodal { m: 0.5 };
        let p = SimParams {
            gamma: 0.0,
            theta: 0.0,
            lambda: 1.0,
            dt: 0.1,
            y0: 100.0,
            x0: 1.0,
            ..fig1()
        };
        match simulate(&LOGISTIC, &env, &CouplingRule::Fixed, &p) {
            Err(Error::NonFinite { step, .. }) => assert!(step >= 1),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(logistic_closed_form(0.3, 1.0, 1.0, 0.0), 0.3);
        for t in [0.0, 1.0, 17.0] {
            assert_relative_eq!(logistic_closed_form(2.0, 0.7, 2.0, t), 2.0, epsilon = 1e-15);
        }
        assert_relative_eq!(logistic_closed_form(0.5, 1.0, 1.0, 3f64.ln()), 0.75, epsilon = 1e-15);
        assert_relative_eq!(logistic_closed_form(0.01, 1.0, 1.0, 99f64.ln()), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn rk4_matches_logistic_closed_form() {
        let c = simulate_deterministic(&LOGISTIC, 1.0, 0.01, 1e-3, 20.0, 1).unwrap();
        let err = c
            .times
            .iter()
            .zip(&c.xs)
            .map(|(&t, &x)| (x - logistic_closed_form(0.01, 1.0, 1.0, t)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "max error {err:e}");
        // saturation is monotone
        assert!(c.xs.windows(2).all(|w| w[1] >= w[0]));
        assert!((c.xs.last().unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rk4_matches_gompertz_closed_form() {
        let g = GrowthModel::gompertz(1.5);
        let c = simulate_deterministic(&g, 0.8, 0.05, 1e-3, 10.0, 10).unwrap();
        for (&t, &x) in c.times.iter().zip(&c.xs) {
            let exact = 1.5 * ((0.05f64 / 1.5).ln() * (-0.8 * t).exp()).exp();
            assert_relative_eq!(x, exact, max_relative = 1e-9);
        }
    }

    #[test]
    fn deterministic_fixed_point() {
        for model in [GrowthModel::logistic(2.0), GrowthModel::gompertz(2.0)] {
            let c = simulate_deterministic(&model, 1.0, 2.0, 0.01, 5.0, 1).unwrap();
            assert!(c.xs.iter().all(|&x| x == 2.0));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn population_stays_positive(seed in any::<u64>(), theta in 0.0f64..3.0, x0 in 1e-4f64..10.0, y0 in -2.0f64..2.0) {
            let p = SimParams { seed, theta, x0, y0, t_max: 5.0, dt: 1e-3, record_stride: 5, ..fig1() };
            for env in [GAUSS, EnvironmentModel::AsymmetricBimodal { d: 4.0, a: 0.25 }] {
                let t = simulate(&LOGISTIC, &env, &CouplingRule::heaviside(0.0), &p).unwrap();
                prop_assert!(t.xs.iter().all(|&x| x > 0.0));
            }
        }
    }
}
