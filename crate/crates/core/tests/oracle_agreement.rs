use std::collections::BTreeMap;

use lapse_urn::limits::{lln_limit, Preset};
use lapse_urn::montecarlo::{final_reds, run_ensemble, EnsembleConfig, Execution};
use lapse_urn::oracle::{
    exact_distribution, exact_distribution_rational, exact_moments, iid_closed_form, mean_recursion,
};
use lapse_urn::{Model, ModelParams, Probability, ReplacementMatrix};

/// Law of `R_n` by walking all `2^n` column sequences with the coin
/// integrated out.
fn enumerate(model: &Model, n: u32) -> BTreeMap<i64, f64> {
    let m = model.matrix();
    let (p, theta) = (model.p(), model.theta());
    let mut law = BTreeMap::new();
    for mask in 0u32..(1 << n) {
        let (mut r, mut t, mut prob) = (model.params().r0, model.t0(), 1.0);
        for i in 0..n {
            let q = 1.0 - p + theta * (2.0 * p - 1.0) * r as f64 / t as f64;
            if mask >> i & 1 == 1 {
                prob *= q;
                r += m.a;
            } else {
                prob *= 1.0 - q;
                r += m.c;
            }
            t += m.k();
        }
        *law.entry(r).or_insert(0.0) += prob;
    }
    law
}

fn by_red(model: &Model, n: u64) -> BTreeMap<i64, f64> {
    let d = exact_distribution(model, n).unwrap();
    d.support.into_iter().zip(d.probs).collect()
}

fn presets() -> [Preset; 5] {
    [Preset::Krw, Preset::A3c1, Preset::A2c0, Preset::Pure(1), Preset::Pure(3)]
}

#[test]
fn dp_matches_path_enumeration() {
    for preset in presets() {
        for (p, theta) in [(0.2, 0.7), (0.9, 1.0), (0.5, 0.3), (1.0, 0.4)] {
            let model = preset.model(p, theta).unwrap();
            for n in [0u32, 1, 3, 10] {
                let brute = enumerate(&model, n);
                let dp = by_red(&model, n as u64);
                assert_eq!(brute.keys().collect::<Vec<_>>(), dp.keys().collect::<Vec<_>>());
                for (r, q) in &brute {
                    assert!((q - dp[r]).abs() < 1e-14, "{preset} p={p} theta={theta} n={n} r={r}");
                }
            }
        }
    }
}

#[test]
fn iid_case_matches_binomial_pointwise() {
    for preset in presets() {
        for p in [0.0, 0.1, 0.35, 0.5, 0.8, 1.0] {
            let model = preset.model(p, Probability::ratio(0, 1)).unwrap();
            for n in [0u64, 1, 7, 64, 250, 500] {
                let dp = exact_distribution(&model, n).unwrap();
                let closed = iid_closed_form(&model, n).unwrap();
                assert_eq!(dp.support, closed.support);
                let gap = dp.max_abs_diff_by_red(&closed).unwrap();
                assert!(gap < 1e-12, "{preset} p={p} n={n} gap={gap:e}");
            }
        }
    }
}

#[test]
fn mass_is_conserved() {
    for preset in presets() {
        let model = preset.model(0.65, 0.8).unwrap();
        let d = exact_distribution(&model, 3000).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        assert!(d.probs.iter().all(|&q| q >= 0.0));
        let steps: Vec<i64> = d.support.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(steps.iter().all(|&s| s == steps[0] && s != 0));
    }
}

#[test]
fn column_swap_symmetry() {
    for preset in presets() {
        let m = preset.matrix();
        for (p, theta) in [(0.1, 0.9), (0.3, 0.3), (0.75, 1.0)] {
            let model = Model::new(ModelParams::new(m, p, theta, 2, 3)).unwrap();
            let swapped = Model::new(ModelParams::new(m.swapped(), 1.0 - p, theta, 2, 3)).unwrap();
            for n in [1u64, 10, 50] {
                let x = exact_distribution(&model, n).unwrap();
                let y = exact_distribution(&swapped, n).unwrap();
                assert!(x.max_abs_diff_by_red(&y).unwrap() < 1e-12);
            }
        }
    }
}

#[test]
fn column_swap_symmetry_is_exact_in_rationals() {
    let m = ReplacementMatrix::new(3, 1, 0, 4);
    let p = Probability::ratio(2, 7);
    let theta = Probability::ratio(5, 9);
    let model = Model::new(ModelParams::new(m, p, theta, 1, 2)).unwrap();
    let swapped = Model::new(ModelParams::new(m.swapped(), Probability::ratio(5, 7), theta, 1, 2)).unwrap();
    let x = exact_distribution_rational(&model, 20).unwrap();
    let y = exact_distribution_rational(&swapped, 20).unwrap();
    let mut lhs: Vec<_> = x.support.iter().zip(&x.probs).collect();
    let mut rhs: Vec<_> = y.support.iter().zip(&y.probs).collect();
    lhs.sort_by_key(|e| e.0);
    rhs.sort_by_key(|e| e.0);
    assert_eq!(lhs, rhs);
}

#[test]
fn half_makes_theta_irrelevant() {
    for preset in presets() {
        let reference = exact_distribution(&preset.model(0.5, 0.0).unwrap(), 50).unwrap();
        for theta in [0.3, 0.7, 1.0] {
            let d = exact_distribution(&preset.model(0.5, theta).unwrap(), 50).unwrap();
            assert!(d.max_abs_diff_by_red(&reference).unwrap() < 1e-12);
        }
    }
}

#[test]
fn mean_recursion_matches_dp_and_lln() {
    for preset in presets() {
        for (p, theta) in [(0.75, 0.5), (0.25, 0.5), (0.6, 1.0), (0.9, 0.2)] {
            let model = preset.model(p, theta).unwrap();
            let rec = mean_recursion(&model, 400);
            for n in [0u64, 1, 17, 400] {
                let dp = exact_distribution(&model, n).unwrap().mean();
                assert!((rec[n as usize] - dp).abs() < 1e-10 * (1.0 + dp), "{preset} {p} {theta} {n}");
            }
            if let Ok(rho) = lln_limit(&model) {
                let n = 10_000;
                let e = *mean_recursion(&model, n).last().unwrap();
                assert!((e / model.total_at(n) as f64 - rho[0]).abs() < 1e-2);
            }
        }
    }
}

#[test]
fn exact_covariance_rows_sum_to_zero() {
    let m = exact_moments(&Preset::A2c0.model(0.3, 0.6).unwrap(), 200).unwrap();
    assert_eq!(m.cov.get(0, 0) + m.cov.get(0, 1), 0.0);
    assert_eq!(m.cov.get(1, 0) + m.cov.get(1, 1), 0.0);
    assert!((m.mean[0] + m.mean[1] - (3.0 * 200.0 + 2.0)).abs() < 1e-9);
}

#[test]
fn ensemble_moments_agree_with_oracle() {
    for (preset, p, theta, n) in [
        (Preset::Krw, 0.8, 0.7, 300u64),
        (Preset::A3c1, 0.2, 0.5, 1000),
        (Preset::A2c0, 0.7, 1.0, 500),
        (Preset::Pure(1), 0.75, 1.0, 800),
        (Preset::Pure(2), 0.5, 0.4, 200),
    ] {
        let model = preset.model(p, theta).unwrap();
        let stats = run_ensemble(&model, &EnsembleConfig::new(n, 20_000, 17)).unwrap();
        let exact = exact_moments(&model, n).unwrap();
        let i = stats.final_index();
        let z_mean = (stats.red_mean[i] - exact.mean[0]) / stats.red_mean_se[i];
        let z_var = (stats.red_variance[i] - exact.cov.get(0, 0)) / stats.red_variance_se[i];
        assert!(z_mean.abs() < 4.0, "{preset} mean z = {z_mean}");
        assert!(z_var.abs() < 4.0, "{preset} variance z = {z_var}");
        assert!(stats.row_sum_defect[i] <= 1e-9 * stats.scaled_fluctuation_cov[i].get(0, 0).max(1.0));
    }
}

/// Dvoretzky–Kiefer–Wolfowitz band: `sup |F_n - F| <= sqrt(ln(2/alpha) / 2N)`.
#[test]
fn empirical_cdf_within_dkw_band() {
    let model = Preset::A3c1.model(0.7, 0.6).unwrap();
    let n = 200;
    let reps = 100_000;
    let reds = final_reds(&model, n, reps, 5, Execution::Auto).unwrap();
    let exact = exact_distribution(&model, n).unwrap();
    let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
    for r in reds {
        *counts.entry(r).or_default() += 1;
    }
    let band = ((2.0f64 / 1e-3).ln() / (2.0 * reps as f64)).sqrt();
    let (mut emp, mut worst) = (0.0, 0.0f64);
    for (r, _) in exact.sorted_by_red() {
        emp += counts.get(&r).copied().unwrap_or(0) as f64 / reps as f64;
        worst = worst.max((emp - exact.cdf(r as f64)).abs());
    }
    assert!(worst < band, "sup gap {worst} vs band {band}");
}
