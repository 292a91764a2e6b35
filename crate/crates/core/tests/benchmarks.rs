//! Convergence on standard test problems with known Pareto fronts.

use fzmoo::nsga::{self, associate, das_dennis, Algorithm, GaConfig};
use fzmoo::objectives::ObjectiveVector;
use fzmoo::space::{ParameterSpace, ParameterSpec};
use fzmoo::Result;

fn unit_box(n: usize) -> ParameterSpace {
    ParameterSpace::new((0..n).map(|i| ParameterSpec::continuous(&format!("v{i}"), 0.0, 1.0, "-")).collect()).unwrap()
}

/// ZDT1 distance function; the optimal front has g = 1.
fn zdt1_g(x: &[f64]) -> f64 {
    1.0 + 9.0 * x[1..].iter().sum::<f64>() / (x.len() - 1) as f64
}

fn zdt1(x: &[f64]) -> Result<ObjectiveVector> {
    let g = zdt1_g(x);
    Ok(ObjectiveVector::feasible(vec![x[0], g * (1.0 - (x[0] / g).sqrt())]))
}

/// DTLZ2 distance function over the last `n - 2` variables; zero on the front.
fn dtlz2_g(x: &[f64]) -> f64 {
    x[2..].iter().map(|v| (v - 0.5).powi(2)).sum()
}

fn dtlz2(x: &[f64]) -> Result<ObjectiveVector> {
    let g = dtlz2_g(x);
    let (a, b) = (x[0] * std::f64::consts::FRAC_PI_2, x[1] * std::f64::consts::FRAC_PI_2);
    let r = 1.0 + g;
    Ok(ObjectiveVector::feasible(vec![
        r * a.cos() * b.cos(),
        r * a.cos() * b.sin(),
        r * a.sin(),
    ]))
}

#[test]
fn nsga2_approaches_the_zdt1_front() {
    let config = GaConfig {
        population: 100,
        generations: 100,
        crossover_prob: 0.9,
        mutation_prob: 1.0 / 30.0,
        algorithm: Algorithm::Nsga2,
        seed: 11,
        ..GaConfig::default()
    };
    let result = nsga::run(&config, &unit_box(30), 2, &zdt1).unwrap();
    let gs: Vec<f64> = result.population.iter().map(|i| zdt1_g(&i.genome)).collect();
    let mean = gs.iter().sum::<f64>() / gs.len() as f64;
    assert!(mean < 1.1, "mean g {mean}");
    // The front should be covered, not collapsed onto one end.
    let f1: Vec<f64> = result.population.iter().map(|i| i.genome[0]).collect();
    let spread = f1.iter().copied().fold(f64::MIN, f64::max) - f1.iter().copied().fold(f64::MAX, f64::min);
    assert!(spread > 0.8, "f1 spread {spread}");
}

#[test]
fn nsga3_spreads_over_the_dtlz2_sphere() {
    let granularity = 12;
    let refs = das_dennis(3, granularity).unwrap();
    assert_eq!(refs.len(), 91);
    let config = GaConfig {
        population: 92,
        generations: 200,
        crossover_prob: 1.0,
        mutation_prob: 1.0 / 12.0,
        eta_c: 30.0,
        algorithm: Algorithm::Nsga3,
        granularity,
        seed: 5,
        ..GaConfig::default()
    };
    let result = nsga::run(&config, &unit_box(12), 3, &dtlz2).unwrap();
    let gs: Vec<f64> = result.population.iter().map(|i| dtlz2_g(&i.genome)).collect();
    let mean = gs.iter().sum::<f64>() / gs.len() as f64;
    assert!(mean < 0.01, "mean g {mean}");

    // The front is the positive unit sphere octant, so the objective vectors
    // are already normalised and can be matched to the lattice directly.
    let objs: Vec<Vec<f64>> = result.population.iter().map(|i| i.objectives.values.clone()).collect();
    let mut niches: Vec<usize> = objs.iter().map(|o| associate(o, &refs).0).collect();
    niches.sort_unstable();
    niches.dedup();
    assert!(niches.len() >= 80, "{} distinct niches", niches.len());
}
