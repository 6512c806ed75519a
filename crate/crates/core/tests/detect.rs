use fdl_core::data::gen_power_law_gaussian;
use fdl_core::detect::{
    cv_accuracy, featurize, fit_power_law, permutation_test, rank_frequency, run_detection, Band, DetectionConfig,
};
use fdl_core::rng::{normal, seeded, stream};
use fdl_core::spectral::Shape;

/// Two-sided 97.5% Student-t quantile for 126 degrees of freedom.
const T_975_DF126: f64 = 1.979;

#[test]
fn slope_confidence_interval_covers_truth() {
    let d = 256;
    let band = Band::high(0.5);
    let (start, end) = band.ranks(d).unwrap();
    let f_lo = rank_frequency(start, d);
    let xs: Vec<f64> = (start..end).map(|r| (rank_frequency(r, d) / f_lo).ln()).collect();
    let n = xs.len() as f64;
    assert_eq!(xs.len(), 128);
    let mx = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let mut rng = seeded(41);
    let trials = 1000;
    let mut covered = 0;
    for _ in 0..trials {
        let m: Vec<f64> = (0..d)
            .map(|r| 2.0 * (rank_frequency(r, d) / f_lo).powf(-1.0) * (0.1 * normal::<f64, _>(&mut rng)).exp())
            .collect();
        let fit = fit_power_law(&m, band).unwrap();
        // OLS standard error of the slope from the fitted residuals
        let rss: f64 = xs
            .iter()
            .zip(&m[start..end])
            .map(|(x, v)| (v.ln() - fit.a.ln() - fit.b * x).powi(2))
            .sum();
        let se = (rss / (n - 2.0) / sxx).sqrt();
        if (fit.b + 1.0).abs() <= T_975_DF126 * se {
            covered += 1;
        }
    }
    assert!(covered as f64 / trials as f64 >= 0.93, "coverage {covered}/{trials}");
}

#[test]
fn null_features_give_chance_accuracy() {
    let mut inside = 0;
    for seed in 0..100 {
        let mut rng = seeded(seed);
        let feats: Vec<[f64; 2]> = (0..200).map(|_| [normal(&mut rng), normal(&mut rng)]).collect();
        let labels: Vec<bool> = (0..200).map(|i| i % 2 == 0).collect();
        let acc = cv_accuracy(&feats, &labels).unwrap();
        if (0.4..=0.6).contains(&acc) {
            inside += 1;
        }
    }
    assert!(inside >= 95, "{inside}/100 runs inside [0.4, 0.6]");
}

#[test]
fn null_permutation_rejection_rate_is_nominal() {
    let mut rejected = 0;
    for split in 0..100 {
        let mut rng = stream(42, split);
        let feats: Vec<[f64; 2]> = (0..40).map(|_| [normal(&mut rng), normal(&mut rng)]).collect();
        let labels: Vec<bool> = (0..40).map(|i| i < 20).collect();
        let r = permutation_test(&feats, &labels, 200, &mut rng).unwrap();
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        if r.p_value <= 0.05 {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / 100.0;
    assert!((0.01..=0.10).contains(&rate), "rejection rate {rate}");
}

#[test]
fn featurize_is_row_wise() {
    let (ds, _) = gen_power_law_gaussian::<f64, _>(30, &Shape::d2(8, 8), 1.0, 2.0, &mut seeded(43)).unwrap();
    let mut doubled = ds.items().to_vec();
    doubled.extend_from_slice(ds.items());
    let f = featurize(&doubled, Band::high(0.25)).unwrap();
    assert_eq!(f.len(), 60);
    assert_eq!(&f[..30], &f[30..]);
}

fn power_law_set(exponent: f64, seed: u64, n: usize) -> Vec<fdl_core::RealField> {
    gen_power_law_gaussian(n, &Shape::d2(16, 16), 1.0, exponent, &mut seeded(seed))
        .unwrap()
        .0
        .into_items()
}

#[test]
fn detection_null_and_power_at_small_scale() {
    let cfg = DetectionConfig {
        splits: 20,
        permutations: 200,
        seed: 44,
    };
    let bands = [Band::high(0.15)];
    let n = 20 * cfg.splits;
    let real = power_law_set(2.0, 45, n);
    let null = run_detection(&real, &power_law_set(2.0, 46, n), &bands, &cfg).unwrap();
    assert!(null[0].tp_rate_05 <= 0.10, "null TP {}", null[0].tp_rate_05);
    let alt = run_detection(&real, &power_law_set(2.5, 47, n), &bands, &cfg).unwrap();
    assert!(alt[0].mean_accuracy >= 0.9, "accuracy {}", alt[0].mean_accuracy);
    assert!(alt[0].tp_rate_05 >= 0.95, "TP {}", alt[0].tp_rate_05);

    // swapping the sets only perturbs rounding, which can move a row to
    // another fold
    let swapped = run_detection(&power_law_set(2.5, 47, n), &real, &bands, &cfg).unwrap();
    assert!((swapped[0].mean_accuracy - alt[0].mean_accuracy).abs() <= 0.02);
}
