use fairrsa::traffic::{peak_demand, random_model_parameters, sample_fluctuations, TrafficModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// E[min(exp(mu + sigma z) / 2, cap)] for standard normal z, by composite
/// Simpson integration over z in [-12, 12].
fn truncated_scaled_mean(mu: f64, sigma2: f64, cap: f64) -> f64 {
    let sigma = sigma2.sqrt();
    let (lo, hi, steps) = (-12.0, 12.0, 20_000);
    let h = (hi - lo) / steps as f64;
    let f = |z: f64| {
        let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        ((mu + sigma * z).exp() / 2.0).min(cap) * density
    };
    let mut sum = f(lo) + f(hi);
    for k in 1..steps {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(lo + k as f64 * h);
    }
    sum * h / 3.0
}

#[test]
fn empirical_mean_matches_quadrature() {
    let model = TrafficModel::new(3.5, 0.5).with_cap(100.0);
    let f = sample_fluctuations(&[model], 100_000, 11).unwrap();
    let expected = truncated_scaled_mean(3.5, 0.5, 100.0);
    let got = f.mean(0);
    assert!((got - expected).abs() / expected < 0.02, "{got} vs {expected}");
}

#[test]
fn saturating_model_matches_quadrature() {
    let model = TrafficModel::new(4.5, 1.0).with_cap(100.0);
    let f = sample_fluctuations(&[model], 100_000, 12).unwrap();
    let expected = truncated_scaled_mean(4.5, 1.0, 100.0);
    assert!((f.mean(0) - expected).abs() / expected < 0.02);
}

#[test]
fn samples_stay_in_range_and_under_the_peak() {
    let models: Vec<TrafficModel> = (0..6)
        .map(|i| TrafficModel::new(2.5 + 0.4 * i as f64, 0.2 + 0.15 * i as f64).with_cap(100.0))
        .collect();
    let f = sample_fluctuations(&models, 1000, 3).unwrap();
    for i in 0..models.len() {
        let peak = peak_demand(f.column(i), 100).unwrap();
        for &x in f.column(i) {
            assert!(x > 0.0 && x <= 100.0);
            assert!(x <= f64::from(peak));
        }
    }
}

#[test]
fn streams_do_not_depend_on_connection_count() {
    let a = TrafficModel::new(3.0, 0.4).with_cap(100.0);
    let b = TrafficModel::new(4.0, 0.9).with_cap(100.0);
    let one = sample_fluctuations(&[a], 500, 21).unwrap();
    let two = sample_fluctuations(&[a, b], 500, 21).unwrap();
    assert_eq!(one.column(0), two.column(0));
    let again = sample_fluctuations(&[a, b], 500, 21).unwrap();
    assert_eq!(two, again);
}

#[test]
fn generated_parameters_stay_in_their_ranges() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut lo_mu, mut hi_mu, mut lo_s, mut hi_s) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for _ in 0..10_000 {
        let (mu, sigma2) = random_model_parameters(&mut rng);
        assert!((2.5..=4.5).contains(&mu));
        assert!(sigma2 > 0.0 && sigma2 <= 1.0);
        lo_mu = lo_mu.min(mu);
        hi_mu = hi_mu.max(mu);
        lo_s = lo_s.min(sigma2);
        hi_s = hi_s.max(sigma2);
    }
    // The draws cover the ranges, not just a corner of them.
    assert!(lo_mu < 2.51 && hi_mu > 4.49 && lo_s < 0.01 && hi_s > 0.99);
}
