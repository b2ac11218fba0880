use dgsm_core::sampling::generate;
use dgsm_core::{Generator, InputDistribution, InputSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn catalogue() -> Vec<InputDistribution> {
    let n01 = InputDistribution::normal(0.0, 1.0).unwrap();
    vec![
        InputDistribution::uniform(-1.0, 3.0).unwrap(),
        InputDistribution::normal(0.5, 2.0).unwrap(),
        InputDistribution::exponential(1.5).unwrap(),
        InputDistribution::gumbel(1.0, 0.7).unwrap(),
        InputDistribution::weibull(2.5, 1.3).unwrap(),
        InputDistribution::weibull(1.0, 0.8).unwrap(),
        InputDistribution::truncated(n01.clone(), -0.5, 1.5).unwrap(),
        InputDistribution::truncated(InputDistribution::exponential(1.0).unwrap(), 0.2, 3.0).unwrap(),
    ]
}

#[test]
fn sample_moments_match_within_four_standard_errors() {
    let n = 1_000_000;
    for (k, dist) in catalogue().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let xs: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let nf = n as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
        let se_mean = (m2 / nf).sqrt();
        let se_var = ((m4 - m2 * m2) / nf).sqrt();
        assert!(
            (mean - dist.mean()).abs() <= 4.0 * se_mean,
            "{dist}: mean {mean} vs {}",
            dist.mean()
        );
        assert!(
            (m2 - dist.variance()).abs() <= 4.0 * se_var,
            "{dist}: variance {m2} vs {}",
            dist.variance()
        );
    }
}

#[test]
fn quantile_transformed_samples_pass_kolmogorov_smirnov() {
    let n = 100_000;
    // Two-sided critical value at alpha = 0.001.
    let critical = 1.949 / (n as f64).sqrt();
    for (k, dist) in catalogue().into_iter().enumerate() {
        let space = InputSpace::new(vec![dist.clone()]).unwrap();
        let design = generate(&space, n, Generator::Pseudo { seed: 7 + k as u64 }).unwrap();
        let mut xs = design.points.column(0).to_vec();
        xs.sort_by(f64::total_cmp);
        let stat = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = dist.cdf(x);
                (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
            })
            .fold(0.0, f64::max);
        assert!(stat < critical, "{dist}: KS statistic {stat} >= {critical}");
    }
}

#[test]
fn pdf_and_cdf_are_consistent() {
    for dist in catalogue() {
        let mut last = 0.0;
        for k in 1..200 {
            let p = k as f64 / 200.0;
            let x = dist.quantile(p).unwrap();
            let c = dist.cdf(x);
            assert!(c >= last, "{dist}: cdf decreasing");
            last = c;
            assert!(dist.pdf(x) >= 0.0);
            let h = 1e-6 * (1.0 + x.abs());
            let slope = (dist.cdf(x + h) - dist.cdf(x - h)) / (2.0 * h);
            assert!((slope - dist.pdf(x)).abs() <= 1e-5 * (1.0 + dist.pdf(x)), "{dist}: pdf at {x}");
        }
    }
}

#[test]
fn poincare_rules_follow_priority() {
    use dgsm_core::PoincareRule;
    let (_, rule) = InputDistribution::gumbel(0.0, 1.0).unwrap().poincare_constant_with_rule().unwrap();
    assert_eq!(rule, PoincareRule::Tabulated);
    let t = InputDistribution::truncated(InputDistribution::normal(0.0, 1.0).unwrap(), -1.0, 2.0).unwrap();
    let (c, rule) = t.poincare_constant_with_rule().unwrap();
    assert_eq!(rule, PoincareRule::TruncatedLogConcave);
    // A truncated normal is more concentrated than the base.
    assert!(c > 0.0 && c < 1.0 * 3.0f64.powi(2));
    let n = InputDistribution::normal(0.0, 1.0).unwrap();
    assert!(n.cheeger_constant().unwrap() >= 1.0);
    assert!((InputDistribution::uniform(0.0, 1.0).unwrap().poincare_constant().unwrap()
        - 1.0 / std::f64::consts::PI.powi(2))
    .abs()
        < 1e-15);
    assert_eq!(InputDistribution::normal(0.0, 3.0).unwrap().poincare_constant().unwrap(), 9.0);
    assert!((InputDistribution::weibull(1.0, 1.0).unwrap().poincare_constant().unwrap() - 4.0).abs() < 1e-12);
}
