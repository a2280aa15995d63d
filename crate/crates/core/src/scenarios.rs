//! Named presets for the four numerical experiments and the Gompertz system,
//! their orchestration, and a hysteresis detector for population transitions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{
    ensemble, ensemble_mean, simulate_deterministic, GrowthCurve, Scheme, SimParams, Trajectory,
};
use crate::models::{CouplingRule, EnvironmentModel, GrowthModel};
use crate::verify::{compare_density, DensityReport, DEFAULT_BINS, DEFAULT_BURN_IN};

pub const PRESET_NAMES: [&str; 8] = [
    "fig1a",
    "fig1b",
    "fig2",
    "fig3",
    "fig3-coupled",
    "fig4",
    "fig4-coupled",
    "gompertz",
];

/// Number of disjoint windows used for the windowed-mean summary.
pub const SUMMARY_WINDOWS: usize = 20;
/// Leading fraction of a run treated as transient.
pub const TRANSIENT_FRACTION: f64 = 0.1;
/// `|x - K[y]|` below which a coupled population counts as synchronized.
pub const SYNC_TOLERANCE: f64 = 0.3;
/// Time skipped before comparing against the deterministic curve.
pub const COMPARISON_TRANSIENT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Comparison {
    None,
    DeterministicLogistic { rate: f64 },
    DeterministicGompertz { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityCheck {
    pub bins: usize,
    pub range: (f64, f64),
    pub burn_in: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionCheck {
    pub low: f64,
    pub high: f64,
    pub window: f64,
}

impl Default for TransitionCheck {
    fn default() -> Self {
        Self {
            low: 1.2,
            high: 1.8,
            window: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub model: GrowthModel,
    pub env: EnvironmentModel,
    pub rule: CouplingRule,
    pub params: SimParams,
    pub comparison: Comparison,
    /// Independent runs; run `i` uses generator stream `i`.
    pub runs: usize,
    pub density: Option<DensityCheck>,
    pub transitions: Option<TransitionCheck>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.env.validate()?;
        self.rule.validate()?;
        self.params.validate()?;
        if self.runs == 0 {
            return Err(Error::param("runs", 0.0, "must be >= 1"));
        }
        if let Some(t) = &self.transitions {
            if !(t.high > t.low) {
                return Err(Error::param("high", t.high, "must exceed low"));
            }
        }
        Ok(())
    }
}

/// Frozen preset by name.
pub fn preset(name: &str) -> Result<ScenarioSpec> {
    let sqrt50 = 50f64.sqrt();
    let logistic = GrowthModel::logistic(1.0);
    let fig1 = |theta: f64| SimParams {
        lambda: 1.0,
        gamma: 50.0,
        theta,
        dt: 0.001,
        t_max: 500.0,
        seed: 0,
        x0: 0.01,
        y0: 0.0,
        record_stride: 100,
        scheme: Scheme::LeimkuhlerMatthews,
    };
    let bimodal = |theta: f64, t_max: f64, record_stride: u64| SimParams {
        lambda: sqrt50,
        gamma: 50.0,
        theta,
        dt: 0.001,
        t_max,
        seed: 0,
        x0: 1.0,
        y0: 0.0,
        record_stride,
        scheme: Scheme::LeimkuhlerMatthews,
    };
    let base = |name: &str, model, env, rule, params: SimParams| ScenarioSpec {
        name: name.to_string(),
        model,
        env,
        rule,
        params,
        comparison: Comparison::None,
        runs: 1,
        density: None,
        transitions: None,
    };
    let symmetric = EnvironmentModel::SymmetricBimodal { m: 0.5 };
    let asymmetric = EnvironmentModel::AsymmetricBimodal { d: 4.0, a: 0.25 };

    let spec = match name {
        "fig1a" | "fig1b" => {
            let theta = if name == "fig1a" { 0.001 } else { 0.005 };
            let p = fig1(theta);
            ScenarioSpec {
                comparison: Comparison::DeterministicLogistic {
                    rate: p.rate().expect("gamma > 0"),
                },
                runs: 10,
                ..base(name, logistic, EnvironmentModel::Gaussian, CouplingRule::Fixed, p)
            }
        }
        "fig2" => {
            let p = SimParams {
                theta: 0.5,
                t_max: 1e4,
                record_stride: 10,
                ..fig1(0.5)
            };
            ScenarioSpec {
                density: Some(DensityCheck {
                    bins: DEFAULT_BINS,
                    range: (0.0, 4.0 * logistic.k),
                    burn_in: DEFAULT_BURN_IN,
                }),
                ..base(name, logistic, EnvironmentModel::Gaussian, CouplingRule::Fixed, p)
            }
        }
        "fig3" | "fig3-coupled" => {
            let rule = if name == "fig3" {
                CouplingRule::Fixed
            } else {
                CouplingRule::heaviside(0.0)
            };
            ScenarioSpec {
                transitions: Some(TransitionCheck::default()),
                ..base(name, logistic, symmetric, rule, bimodal(0.01, 200.0, 10))
            }
        }
        "fig4" | "fig4-coupled" => {
            let rule = if name == "fig4" {
                CouplingRule::Fixed
            } else {
                CouplingRule::heaviside(0.25)
            };
            ScenarioSpec {
                runs: 5,
                transitions: Some(TransitionCheck::default()),
                ..base(name, logistic, asymmetric, rule, bimodal(0.001, 1e4, 100))
            }
        }
        "gompertz" => {
            let p = fig1(0.001);
            ScenarioSpec {
                comparison: Comparison::DeterministicGompertz {
                    rate: p.rate().expect("gamma > 0"),
                },
                runs: 10,
                ..base(
                    name,
                    GrowthModel::gompertz(1.0),
                    EnvironmentModel::Gaussian,
                    CouplingRule::Fixed,
                    p,
                )
            }
        }
        _ => {
            return Err(Error::UnknownPreset {
                name: name.to_string(),
                available: PRESET_NAMES.join(", "),
            })
        }
    };
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Center of the averaging window at the moment of crossing.
    pub time: f64,
    pub direction: Direction,
}

/// Hysteresis detector on the trailing windowed mean of `x`.
///
/// An upward event fires when the windowed mean rises above `high` after
/// having been below `low`; downward events mirror this. The first window
/// only establishes the starting level.
pub fn detect_transitions(
    trajectory: &Trajectory,
    low: f64,
    high: f64,
    window: f64,
) -> Result<Vec<Transition>> {
    if !(high > low) {
        return Err(Error::param("high", high, "must exceed low"));
    }
    let duration = trajectory.duration();
    if !(window > 0.0) || window > duration || trajectory.len() < 2 {
        return Err(Error::WindowTooLong { window, duration });
    }
    let record_dt = duration / (trajectory.len() - 1) as f64;
    let w = ((window / record_dt).round() as usize).max(1);

    let mut prefix = Vec::with_capacity(trajectory.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &x in &trajectory.xs {
        acc += x;
        prefix.push(acc);
    }

    #[derive(PartialEq)]
    enum Level {
        Unknown,
        Low,
        High,
    }
    let mut level = Level::Unknown;
    let mut events = Vec::new();
    for end in w..=trajectory.len() {
        let mean = (prefix[end] - prefix[end - w]) / w as f64;
        let time = trajectory.times[end - 1] - 0.5 * window;
        if mean < low {
            if level == Level::High {
                events.push(Transition {
                    time,
                    direction: Direction::Down,
                });
            }
            level = Level::Low;
        } else if mean > high {
            if level == Level::Low {
                events.push(Transition {
                    time,
                    direction: Direction::Up,
                });
            }
            level = Level::High;
        }
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMean {
    pub t_start: f64,
    pub t_end: f64,
    pub mean_x: f64,
    pub mean_y: f64,
}

/// Means over `n` disjoint, contiguous windows covering all records.
pub fn windowed_means(trajectory: &Trajectory, n: usize) -> Vec<WindowMean> {
    let len = trajectory.len();
    let n = n.clamp(1, len.max(1));
    (0..n)
        .map(|i| {
            let (a, b) = (i * len / n, (i + 1) * len / n);
            let count = (b - a) as f64;
            WindowMean {
                t_start: trajectory.times[a],
                t_end: trajectory.times[b - 1],
                mean_x: trajectory.xs[a..b].iter().sum::<f64>() / count,
                mean_y: trajectory.ys[a..b].iter().sum::<f64>() / count,
            }
        })
        .collect()
}

/// Post-transient fraction of records with `|x - K[y]| < tolerance`.
pub fn sync_fraction(trajectory: &Trajectory, tolerance: f64, transient: f64) -> f64 {
    let skip = (trajectory.len() as f64 * transient).floor() as usize;
    let k = trajectory.model.k;
    let rule = trajectory.rule;
    let total = trajectory.len() - skip;
    let hits = trajectory.xs[skip..]
        .iter()
        .zip(&trajectory.ys[skip..])
        .filter(|(&x, &y)| (x - rule.effective_k(k, y)).abs() < tolerance)
        .count();
    hits as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub trajectory: Trajectory,
    pub transitions: Vec<Transition>,
    pub windowed_means: Vec<WindowMean>,
    pub final_window_mean: f64,
    /// Only for runs with an active coupling rule.
    pub sync_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub spec: ScenarioSpec,
    pub runs: Vec<RunReport>,
    pub comparison: Option<GrowthCurve>,
    /// Pointwise mean of `x` over runs, on the shared record times.
    pub ensemble_mean: Vec<f64>,
    /// `sup |mean x - comparison|` after [`COMPARISON_TRANSIENT`].
    pub comparison_gap: Option<f64>,
    /// Density comparison of the first run.
    pub density: Option<DensityReport>,
}

/// Execute a scenario. `seed` replaces the preset's seed when given.
pub fn run_scenario(spec: &ScenarioSpec, seed: Option<u64>) -> Result<ScenarioReport> {
    let mut spec = spec.clone();
    if let Some(s) = seed {
        spec.params.seed = s;
    }
    spec.validate()?;
    let p = &spec.params;

    let trajectories = ensemble(&spec.model, &spec.env, &spec.rule, p, spec.runs)?;
    let mean = ensemble_mean(&trajectories);

    let comparison = match spec.comparison {
        Comparison::None => None,
        Comparison::DeterministicLogistic { rate } => Some(simulate_deterministic(
            &GrowthModel::logistic(spec.model.k),
            rate,
            p.x0,
            p.dt,
            p.t_max,
            p.record_stride,
        )?),
        Comparison::DeterministicGompertz { rate } => Some(simulate_deterministic(
            &GrowthModel::gompertz(spec.model.k),
            rate,
            p.x0,
            p.dt,
            p.t_max,
            p.record_stride,
        )?),
    };
    let comparison_gap = comparison.as_ref().map(|curve| {
        curve
            .times
            .iter()
            .zip(curve.xs.iter().zip(&mean))
            .filter(|(&t, _)| t >= COMPARISON_TRANSIENT)
            .map(|(_, (&c, &m))| (m - c).abs())
            .fold(0.0, f64::max)
    });

    let density = match spec.density {
        Some(d) => Some(compare_density(
            &trajectories[0].xs,
            &spec.model,
            p.theta,
            d.bins,
            d.range,
            d.burn_in,
        )?),
        None => None,
    };

    let runs = trajectories
        .into_iter()
        .map(|trajectory| {
            let transitions = match spec.transitions {
                Some(t) => detect_transitions(&trajectory, t.low, t.high, t.window)?,
                None => Vec::new(),
            };
            let windowed_means = windowed_means(&trajectory, SUMMARY_WINDOWS);
            let final_window_mean = windowed_means.last().map_or(f64::NAN, |w| w.mean_x);
            let sync_fraction = spec
                .rule
                .is_active()
                .then(|| sync_fraction(&trajectory, SYNC_TOLERANCE, TRANSIENT_FRACTION));
            Ok(RunReport {
                trajectory,
                transitions,
                windowed_means,
                final_window_mean,
                sync_fraction,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ScenarioReport {
        spec,
        runs,
        comparison,
        ensemble_mean: mean,
        comparison_gap,
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(times: Vec<f64>, xs: Vec<f64>) -> Trajectory {
        let n = xs.len();
        Trajectory {
            times,
            xs,
            ys: vec![0.0; n],
            params: SimParams::default(),
            model: GrowthModel::logistic(1.0),
            env: EnvironmentModel::Gaussian,
            rule: CouplingRule::Fixed,
            stream: 0,
        }
    }

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * dt).collect()
    }

    #[test]
    fn preset_examples() {
        assert_eq!(preset("fig1a").unwrap().params.theta, 0.001);
        assert_eq!(preset("fig1b").unwrap().params.theta, 0.005);
        assert_eq!(
            preset("fig4").unwrap().env,
            EnvironmentModel::AsymmetricBimodal { d: 4.0, a: 0.25 }
        );
        assert_eq!(
            preset("fig3-coupled").unwrap().rule,
            CouplingRule::HeavisideShift {
                threshold: 0.0,
                base: 1.0,
                increment: 1.0
            }
        );
        let f4 = preset("fig4-coupled").unwrap();
        assert_eq!(f4.rule, CouplingRule::heaviside(0.25));
        assert_eq!(f4.params.lambda, 50f64.sqrt());
        assert!((f4.params.rate().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(preset("gompertz").unwrap().model, GrowthModel::gompertz(1.0));
        assert_eq!(preset("fig2").unwrap().params.t_max, 1e4);
    }

    #[test]
    fn every_preset_is_valid_and_round_trips() {
        for name in PRESET_NAMES {
            let spec = preset(name).unwrap();
            spec.validate().unwrap();
            let json = serde_json::to_string(&spec).unwrap();
            let back: ScenarioSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back, spec, "{name}");
        }
    }

    #[test]
    fn unknown_preset_lists_names() {
        match preset("fig9") {
            Err(Error::UnknownPreset { available, .. }) => {
                for n in PRESET_NAMES {
                    assert!(available.contains(n));
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_do_not_touch_presets() {
        let mut spec = preset("fig1a").unwrap();
        spec.params.theta = 0.3;
        assert_eq!(preset("fig1a").unwrap().params.theta, 0.001);
    }

    #[test]
    fn constant_series_has_no_transitions() {
        let t = synthetic(grid(1001, 0.1), vec![1.0; 1001]);
        assert!(detect_transitions(&t, 1.2, 1.8, 5.0).unwrap().is_empty());
    }

    #[test]
    fn step_gives_one_upward_event() {
        let times = grid(1001, 0.1);
        let xs = times.iter().map(|&t| if t < 50.0 { 1.0 } else { 2.0 }).collect();
        let t = synthetic(times, xs);
        let ev = detect_transitions(&t, 1.2, 1.8, 5.0).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].direction, Direction::Up);
        assert!((ev[0].time - 50.0).abs() <= 5.0, "{}", ev[0].time);
    }

    #[test]
    fn square_wave_alternates() {
        let times = grid(2001, 0.1);
        let xs = times
            .iter()
            .map(|&t| if (t / 10.0).floor() as i64 % 2 == 0 { 1.0 } else { 2.0 })
            .collect();
        let t = synthetic(times, xs);
        let ev = detect_transitions(&t, 1.2, 1.8, 5.0).unwrap();
        assert!(ev.len() >= 18, "{}", ev.len());
        for pair in ev.windows(2) {
            assert_ne!(pair[0].direction, pair[1].direction);
        }
        assert_eq!(ev[0].direction, Direction::Up);
    }

    #[test]
    fn window_longer_than_run_is_an_error() {
        let t = synthetic(grid(11, 0.1), vec![1.0; 11]);
        assert!(matches!(
            detect_transitions(&t, 1.2, 1.8, 5.0),
            Err(Error::WindowTooLong { .. })
        ));
        assert!(detect_transitions(&t, 1.8, 1.2, 0.5).is_err());
    }

    #[test]
    fn windowed_means_cover_the_run() {
        let t = synthetic(grid(1000, 1.0), (0..1000).map(f64::from).collect());
        let w = windowed_means(&t, 20);
        assert_eq!(w.len(), 20);
        assert_eq!(w[0].t_start, 0.0);
        assert_eq!(w[19].t_end, 999.0);
        assert_eq!(w[0].mean_x, 24.5);
        for pair in w.windows(2) {
            assert!(pair[1].t_start > pair[0].t_end);
        }
    }

    #[test]
    fn short_fig1_run_tracks_logistic() {
        let mut spec = preset("fig1a").unwrap();
        spec.params.t_max = 50.0;
        spec.runs = 3;
        let r = run_scenario(&spec, Some(11)).unwrap();
        assert_eq!(r.runs.len(), 3);
        assert_eq!(r.spec.params.seed, 11);
        assert!(r.comparison_gap.unwrap() < 0.05);
        assert!(r.density.is_none());
        assert!(r.runs.iter().all(|run| run.sync_fraction.is_none()));
    }

    #[test]
    fn coupled_run_reports_sync_fraction() {
        let mut spec = preset("fig3-coupled").unwrap();
        spec.params.t_max = 20.0;
        let r = run_scenario(&spec, None).unwrap();
        let s = r.runs[0].sync_fraction.unwrap();
        assert!((0.0..=1.0).contains(&s));
    }
}
