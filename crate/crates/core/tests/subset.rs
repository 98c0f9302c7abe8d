use slm_core::subset::*;
use slm_core::Prior;

fn config(complement: Prior, m: usize, trials: usize) -> SubsetConfig {
    SubsetConfig { subset_prior: Prior::binary(), complement_prior: complement, n: 12, m, k: 1, trials, seed: 31 }
}

#[test]
fn identities_hold_on_every_trial() {
    let e = subset_experiment(&config(Prior::binary(), 18, 100)).unwrap();
    assert!(e.max_orthogonality_residual < 1e-10);
    assert!(e.max_factorization_residual < 1e-10);
    assert!(e.max_identity_residual < 1e-10);
}

#[test]
fn complement_is_independent_of_subset_signal() {
    let trials = 2000;
    let e = subset_experiment(&config(Prior::binary(), 18, trials)).unwrap();
    let threshold = 3.0 / (trials as f64).sqrt();
    let ind = e.independence().unwrap();
    let control = e.positive_control().unwrap();
    assert!(ind < threshold, "{ind} >= {threshold}");
    assert!(control > threshold, "{control}");
    assert!(e.noise_variance_deviation() < 5.0 / (trials as f64).sqrt());
    let d = &e.diagnostics().unwrap()[0];
    assert!(d.variance > 1.0);
    assert_eq!(e.to_table().header(), ["trial", "z_1", "v_1"]);
}

#[test]
fn no_interference_leaves_pure_noise() {
    let zero = Prior::finite_atoms(vec![0.0], vec![1.0]).unwrap();
    let e = subset_experiment(&config(zero, 18, 1000)).unwrap();
    // v is exactly the rotated noise coordinate
    assert!((e.v.column(0) - e.w_tilde.column(0)).amax() < 1e-14);
    let d = &e.diagnostics().unwrap()[0];
    assert!((d.variance - 1.0).abs() < 5.0 / 1000f64.sqrt());
    assert!(!d.flagged());
}

#[test]
fn many_rows_resolve_the_interference() {
    let e = subset_experiment(&config(Prior::binary(), 120, 600)).unwrap();
    let d = &e.diagnostics().unwrap()[0];
    assert!((d.variance - 1.0).abs() < 0.15, "{}", d.variance);
}

#[test]
fn same_seed_same_samples() {
    let a = subset_experiment(&config(Prior::binary(), 18, 50)).unwrap();
    let b = subset_experiment(&config(Prior::binary(), 18, 50)).unwrap();
    assert_eq!(a.to_table().to_csv(), b.to_table().to_csv());
}
