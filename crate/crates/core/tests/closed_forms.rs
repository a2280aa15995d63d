//! Invariant densities against closed-form distributions from `statrs`.

use coevo::models::GrowthModel;
use coevo::verify::PopulationDensity;
use statrs::distribution::{Continuous, ContinuousCDF, Gamma, LogNormal};

#[test]
fn logistic_density_is_gamma() {
    for (k, theta) in [(1.0, 0.5), (1.0, 0.1), (2.5, 0.05), (0.3, 1.0)] {
        let d = PopulationDensity::new(&GrowthModel::logistic(k), theta).unwrap();
        let gamma = Gamma::new(1.0 / theta + 1.0, 1.0 / (k * theta)).unwrap();
        for i in 1..80 {
            let x = k * i as f64 * 0.05;
            let (a, b) = (d.pdf(x), gamma.pdf(x));
            assert!((a - b).abs() <= 1e-9 * b.max(1e-12), "K={k} θ={theta} x={x}: {a} vs {b}");
        }
        for x in [0.5 * k, k, 1.5 * k] {
            assert!((d.cdf(x).unwrap() - gamma.cdf(x)).abs() < 1e-10);
        }
    }
}

#[test]
fn gompertz_density_is_lognormal() {
    for (k, theta) in [(1.0, 0.5), (1.0, 0.01), (3.0, 0.2)] {
        let d = PopulationDensity::new(&GrowthModel::gompertz(k), theta).unwrap();
        let ln = LogNormal::new(k.ln() + theta, theta.sqrt()).unwrap();
        for i in 1..80 {
            let x = k * i as f64 * 0.04;
            let (a, b) = (d.pdf(x), ln.pdf(x));
            assert!((a - b).abs() <= 1e-9 * b.max(1e-12), "K={k} θ={theta} x={x}: {a} vs {b}");
        }
        let mean = d.expectation(|x| x).unwrap();
        assert!((mean - (k.ln() + 1.5 * theta).exp()).abs() < 1e-10);
    }
}
