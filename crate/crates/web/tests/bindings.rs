use delay_bsvie_web::{delay_comparison, girsanov_weights, resolvent_curve};

#[test]
fn constant_resolvent_curve_tracks_its_closed_form() {
    let v = resolvent_curve("constant", 1.0, 100).unwrap();
    assert_eq!(v.len(), 3 * 101);
    for row in v.chunks(3) {
        assert!((row[1] - row[2]).abs() < 1e-4 * row[2], "{row:?}");
    }
    let ex = resolvent_curve("example", 0.0, 200).unwrap();
    let last = &ex[ex.len() - 3..];
    assert!((last[1] - 0.432332).abs() < 1e-5);
    assert!(resolvent_curve("cauchy", 1.0, 10).is_err());
    assert!(resolvent_curve("constant", 1.0, 10_000).is_err());
}

#[test]
fn delay_comparison_separates_the_two_equations() {
    let v = delay_comparison(0.0, 0.0, 0.5, 50).unwrap();
    let sups = &v[v.len() - 4..];
    assert!(sups.iter().all(|s| *s < 1e-8), "{sups:?}");
    let v = delay_comparison(-0.3, 0.5, 0.5, 50).unwrap();
    let sups = &v[v.len() - 4..];
    // The explicit profile solves the reduced equation, the Picard one the delayed equation.
    assert!(sups[1] < 1e-3 && sups[2] < 1e-8);
    assert!(sups[0] > 0.05 && sups[3] > 0.05, "{sups:?}");
    assert!(delay_comparison(-0.3, 1.5, 0.5, 50).is_err());
}

#[test]
fn girsanov_histogram_counts_every_path() {
    let v = girsanov_weights(1.0, 20_000, 3, 16).unwrap();
    assert!((v[0] - 1.0).abs() <= 3.0 * v[1]);
    assert_eq!(v[4..].iter().sum::<f64>(), 20_000.0);
    let flat = girsanov_weights(0.0, 100, 3, 4).unwrap();
    assert_eq!(&flat[..4], &[1.0, 0.0, 1.0, 1.0]);
    assert_eq!(flat[4], 100.0);
}
