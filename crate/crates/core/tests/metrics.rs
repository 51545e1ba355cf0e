use fairrsa::metrics::{coefficient_of_variation, profile_for_sizes, provisioning};
use fairrsa::traffic::FluctuationSet;
use proptest::prelude::*;

proptest! {
    #[test]
    fn excess_minus_shortfall_is_size_minus_mean(
        samples in prop::collection::vec(0.001f64..100.0, 1..300),
        size in 0u32..=100,
    ) {
        let size = f64::from(size);
        let (plus, minus) = provisioning(size, &samples);
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        prop_assert!(plus >= 0.0 && minus >= 0.0);
        let scale = size.max(mean).max(1.0);
        prop_assert!(((plus - minus) - (size - mean)).abs() <= 1e-12 * scale);
    }

    #[test]
    fn larger_allocation_means_more_excess_and_less_shortfall(
        samples in prop::collection::vec(0.001f64..100.0, 1..300),
        a in 0u32..=100,
        b in 0u32..=100,
    ) {
        let (lo, hi) = (f64::from(a.min(b)), f64::from(a.max(b)));
        let (p_lo, m_lo) = provisioning(lo, &samples);
        let (p_hi, m_hi) = provisioning(hi, &samples);
        prop_assert!(p_hi >= p_lo && m_hi <= m_lo);
    }

    #[test]
    fn cv_is_scale_invariant(
        values in prop::collection::vec(0.0f64..100.0, 2..20),
        scale in 0.01f64..100.0,
    ) {
        prop_assume!(values.iter().sum::<f64>() > 1e-6);
        let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
        let (a, b) = (
            coefficient_of_variation(&values).unwrap(),
            coefficient_of_variation(&scaled).unwrap(),
        );
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn totals_are_additive_over_connections(
        columns in prop::collection::vec(prop::collection::vec(0.01f64..100.0, 50), 1..6),
        sizes in prop::collection::vec(0u32..=100, 6),
    ) {
        let n = columns.len();
        let f = FluctuationSet::from_columns(columns.clone(), 0).unwrap();
        let profile = profile_for_sizes(&sizes[..n], &f).unwrap();
        let (mut cop, mut cup) = (0.0, 0.0);
        for i in 0..n {
            let (p, m) = provisioning(f64::from(sizes[i]), &columns[i]);
            cop += p;
            cup += m;
        }
        prop_assert!((profile.cop() - cop).abs() <= 1e-9 * cop.max(1.0));
        prop_assert!((profile.cup() - cup).abs() <= 1e-9 * cup.max(1.0));
    }
}

#[test]
fn blocked_connection_is_fully_unserved() {
    let f = FluctuationSet::from_columns(vec![vec![5.0, 7.0], vec![3.0, 3.0]], 0).unwrap();
    let profile = profile_for_sizes(&[0, 3], &f).unwrap();
    assert_eq!(profile.u_plus, vec![0.0, 0.0]);
    assert_eq!(profile.u_minus, vec![6.0, 0.0]);
}
