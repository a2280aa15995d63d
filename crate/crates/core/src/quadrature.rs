//! Adaptive Gauss–Kronrod and Gauss–Hermite quadrature.

use crate::error::{Error, Result};

// 15-point Kronrod extension of the 7-point Gauss rule (abscissae on [0, 1]).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    magnitude: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut magnitude = fc.abs() * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (l, r) = (f(center - dx), f(center + dx));
        let s = l + r;
        kronrod += WGK[j] * s;
        magnitude += WGK[j] * (l.abs() + r.abs());
        // odd indices are the embedded Gauss nodes
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
        magnitude: magnitude * half,
    }
}

/// Globally adaptive G7–K15 integration of `f` over the finite interval
/// `[a, b]`. Returns `(value, error_estimate)`.
///
/// The relative tolerance applies to `∫|f|`, so integrals that cancel to
/// zero still terminate.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    const MAX_SEGMENTS: usize = 2000;
    if !(a.is_finite() && b.is_finite()) || b <= a {
        return Err(Error::Quadrature(format!("bad interval [{a}, {b}]")));
    }
    let mut segments = vec![gk15(&f, a, b)];
    loop {
        let value: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        let magnitude: f64 = segments.iter().map(|s| s.magnitude).sum();
        if !value.is_finite() {
            return Err(Error::Quadrature(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if error <= abs_tol.max(rel_tol * magnitude) {
            return Ok((value, error));
        }
        if segments.len() >= MAX_SEGMENTS {
            return Err(Error::Quadrature(format!(
                "{MAX_SEGMENTS} segments on [{a}, {b}], value {value:e}, error estimate {error:e}"
            )));
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|l, r| l.1.error.total_cmp(&r.1.error))
            .expect("non-empty");
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        segments.push(gk15(&f, s.a, mid));
        segments.push(gk15(&f, mid, s.b));
    }
}

/// Gauss–Hermite rule for the weight `exp(-t²)` on the real line.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// `n`-point rule, exact for polynomials of degree `2n - 1`.
    ///
    /// Roots are found by Newton iteration on the orthonormal Hermite
    /// recurrence, starting from the usual asymptotic guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "at least one node");
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        let m = n.div_ceil(2);
        let mut z: f64 = 0.0;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let jf = j as f64;
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Self { nodes, weights }
    }

    /// `E{f(Y)}` for `Y ~ N(0, variance)`.
    pub fn gaussian_mean<F: Fn(f64) -> f64>(&self, variance: f64, f: F) -> f64 {
        let scale = (2.0 * variance).sqrt();
        let norm = std::f64::consts::PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(scale * t))
            .sum::<f64>()
            / norm
    }
}

/// Bracket of `[lo, hi]` outside which `log_f` is more than `drop` below its
/// maximum on a uniform scan of `[scan_lo, scan_hi]`.
pub(crate) fn support_bracket<F: Fn(f64) -> f64>(
    log_f: F,
    scan_lo: f64,
    scan_hi: f64,
    drop: f64,
) -> Result<(f64, f64, f64)> {
    const N: usize = 4000;
    let step = (scan_hi - scan_lo) / N as f64;
    let values: Vec<f64> = (0..=N).map(|i| log_f(scan_lo + step * i as f64)).collect();
    let max = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Quadrature(
            "log-integrand is nowhere finite on the scan range".into(),
        ));
    }
    let first = values.iter().position(|&v| v > max - drop).unwrap_or(0);
    let last = values.iter().rposition(|&v| v > max - drop).unwrap_or(N);
    let lo = scan_lo + step * first.saturating_sub(1) as f64;
    let hi = scan_lo + step * (last + 1).min(N) as f64;
    Ok((lo, hi, max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kronrod_integrates_smooth_functions() {
        let (v, _) = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-14, 1e-14).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-13);
        let (v, _) = integrate(|x: f64| (-x * x).exp(), -10.0, 10.0, 1e-15, 1e-14).unwrap();
        assert_relative_eq!(v, std::f64::consts::PI.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn kronrod_handles_sharp_peaks() {
        let w = 0.05;
        let (v, _) = integrate(|x: f64| (-(x - 0.3).powi(2) / (2.0 * w * w)).exp(), -1.0, 1.0, 1e-16, 1e-12)
            .unwrap();
        assert_relative_eq!(v, w * (2.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn bad_interval_is_an_error() {
        assert!(integrate(|x| x, 1.0, 0.0, 1e-10, 1e-10).is_err());
        assert!(integrate(|_| f64::NAN, 0.0, 1.0, 1e-10, 1e-10).is_err());
    }

    #[test]
    fn hermite_rule_reproduces_gaussian_moments() {
        let gh = GaussHermite::new(40);
        let var = 0.37;
        assert_relative_eq!(gh.gaussian_mean(var, |_| 1.0), 1.0, epsilon = 1e-14);
        assert!(gh.gaussian_mean(var, |y| y).abs() < 1e-15);
        assert_relative_eq!(gh.gaussian_mean(var, |y| y * y), var, epsilon = 1e-14);
        assert_relative_eq!(gh.gaussian_mean(var, |y| y.powi(4)), 3.0 * var * var, epsilon = 1e-14);
        assert_relative_eq!(gh.gaussian_mean(var, |y| y.powi(6)), 15.0 * var.powi(3), epsilon = 1e-14);
    }

    #[test]
    fn small_hermite_rule_matches_known_nodes() {
        // n = 2: ±1/√2, weights √π/2
        let gh = GaussHermite::new(2);
        assert_relative_eq!(gh.nodes[0], 0.5f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(gh.weights[0], std::f64::consts::PI.sqrt() / 2.0, epsilon = 1e-14);
    }
}
