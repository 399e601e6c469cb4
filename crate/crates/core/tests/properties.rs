use lapse_urn::limits::{
    fclt_kernel, fclt_kernel_matrix_exp, lln_limit, omegas, sigma_diffusive, Preset,
};
use lapse_urn::montecarlo::Moments;
use lapse_urn::oracle::{exact_distribution, exact_moments};
use lapse_urn::spectral::{eigen, regime, residuals};
use lapse_urn::urn::{conditional_red_probability, extract_lapses, marginal_red_probability, simulate};
use lapse_urn::{Model, ModelParams, RegimeTag, ReplacementMatrix, UrnError};
use proptest::prelude::*;

/// Tenable balanced matrices with `K <= 6`.
fn matrix() -> impl Strategy<Value = ReplacementMatrix> {
    (1i64..=6)
        .prop_flat_map(|k| (Just(k), 0..=k, 0..=k))
        .prop_filter("a != c", |(_, a, c)| a != c)
        .prop_map(|(k, a, c)| ReplacementMatrix::new(a, k - a, c, k - c))
}

fn model() -> impl Strategy<Value = Model> {
    (matrix(), 0.0..=1.0f64, 0.0..=1.0f64, 0i64..4, 0i64..4)
        .prop_filter("T0 > 0", |(_, _, _, r0, b0)| r0 + b0 > 0)
        .prop_map(|(m, p, theta, r0, b0)| Model::new(ModelParams::new(m, p, theta, r0, b0)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn totals_are_deterministic(model in model(), n in 0u64..300, seed: u64) {
        let traj = simulate(&model, n, seed);
        prop_assert_eq!(traj.states.len() as u64, n + 1);
        for s in &traj.states {
            prop_assert_eq!(s.r + s.b, s.t);
            prop_assert_eq!(s.t, model.total_at(s.n));
            prop_assert!(s.r >= 0 && s.b >= 0);
        }
    }

    #[test]
    fn step_probabilities_are_probabilities(t in 1i64..1000, frac in 0.0..=1.0f64, p in 0.0..=1.0f64, theta in 0.0..=1.0f64, y: bool) {
        let r = (frac * t as f64).floor() as i64;
        let q = conditional_red_probability(r, t, y, p).unwrap();
        prop_assert!((-1e-15..=1.0 + 1e-15).contains(&q));
        let marginal = marginal_red_probability(r, t, p, theta).unwrap();
        let mixed = theta * conditional_red_probability(r, t, true, p).unwrap()
            + (1.0 - theta) * conditional_red_probability(r, t, false, p).unwrap();
        prop_assert!((marginal - mixed).abs() < 1e-14);
    }

    #[test]
    fn lapses_partition_the_zeros(y in proptest::collection::vec(any::<bool>(), 0..200)) {
        let lapses = extract_lapses(&y);
        let zeros = y.iter().filter(|v| !**v).count();
        prop_assert_eq!(lapses.iter().map(|l| l.length).sum::<usize>(), zeros);
        for l in &lapses {
            prop_assert!(l.length >= 1);
            prop_assert!(y[l.start..l.start + l.length].iter().all(|v| !v));
            prop_assert!(l.start == 0 || y[l.start - 1]);
            prop_assert!(l.start + l.length == y.len() || y[l.start + l.length]);
        }
        for w in lapses.windows(2) {
            prop_assert!(w[0].start + w[0].length < w[1].start);
        }
    }

    #[test]
    fn spectral_identities_hold(model in model()) {
        match eigen(&model) {
            Ok(sd) => {
                let r = residuals(&sd);
                let k = model.k() as f64;
                prop_assert!(r.eigen_residual < 1e-12 * (1.0 + k));
                prop_assert!(r.second_eigen_residual < 1e-12 * (1.0 + k));
                prop_assert!(r.left_eigen_residual < 1e-12 * (1.0 + k * k));
                prop_assert!(r.v1_sum_error < 1e-14);
                prop_assert!(r.b_decomposition < 1e-12 * (1.0 + k * k));
                prop_assert!(r.numeric_eigen_gap < 1e-10 * (1.0 + k));
                prop_assert!(r.u1_v2.abs() < 1e-14);
                let o = omegas(&model);
                prop_assert!((o.omega1 - (sd.u2[0] - sd.u2[1])).abs() < 1e-12 * (1.0 + k));
                prop_assert!((o.omega2 - sd.u2[1]).abs() < 1e-12 * (1.0 + k));
            }
            Err(e) => prop_assert!(matches!(e, UrnError::DegenerateNormalization)),
        }
    }

    #[test]
    fn lln_components_sum_to_one(model in model()) {
        if let Ok(rho) = lln_limit(&model) {
            prop_assert!((rho[0] + rho[1] - 1.0).abs() < 1e-14);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&rho[0]));
        }
    }

    #[test]
    fn diffusive_covariances_are_rank_one(model in model()) {
        if let Ok(s) = sigma_diffusive(&model) {
            for sigma in [s.paper, s.sign_corrected] {
                prop_assert!(sigma.is_symmetric(0.0));
                prop_assert_eq!(sigma.get(0, 0), -sigma.get(0, 1));
                prop_assert_eq!(sigma.get(0, 0), sigma.get(1, 1));
            }
            prop_assert!(s.sign_corrected.get(0, 0) >= -1e-12);
        }
    }

    #[test]
    fn kernel_closed_form_matches_matrix_exponential(model in model(), s in 0.05..1.0f64, dt in 0.0..2.0f64) {
        let t = s + dt;
        if matches!(regime(&model).tag, RegimeTag::Diffusive | RegimeTag::Degenerate) {
            let closed = fclt_kernel(&model, s, t).unwrap();
            let numeric = fclt_kernel_matrix_exp(&model, s, t).unwrap();
            let scale = closed.get(0, 0).abs().max(1.0);
            prop_assert!(closed.max_abs_diff(&numeric) < 1e-10 * scale);
            prop_assert!(closed.is_symmetric(1e-12 * scale));
        }
    }

    #[test]
    fn exact_law_is_a_distribution(model in model(), n in 0u64..120) {
        let d = exact_distribution(&model, n).unwrap();
        prop_assert!((d.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!(d.probs.iter().all(|q| *q >= 0.0));
        let m = exact_moments(&model, n).unwrap();
        prop_assert!((m.mean[0] + m.mean[1] - model.total_at(n) as f64).abs() < 1e-9 * (1.0 + n as f64));
    }

    #[test]
    fn moment_merge_is_split_invariant(xs in proptest::collection::vec(-1e3..1e3f64, 4..200), cut in 0usize..200) {
        let cut = cut.min(xs.len());
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let (mut a, mut b) = (Moments::default(), Moments::default());
        xs[..cut].iter().for_each(|&x| a.push(x));
        xs[cut..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        prop_assert_eq!(a.count, whole.count);
        prop_assert!((a.mean - whole.mean).abs() <= 1e-9 * (1.0 + whole.mean.abs()));
        prop_assert!((a.m2 - whole.m2).abs() <= 1e-9 * (1.0 + whole.m2));
        prop_assert!((a.m4 - whole.m4).abs() <= 1e-8 * (1.0 + whole.m4));
    }
}

/// Sigma_1 diverges as `2 lambda2` rises to `K` along `theta = 1`.
#[test]
fn sigma_blows_up_towards_critical_curve() {
    let mut last = 0.0;
    for p in [0.70, 0.72, 0.74, 0.745, 0.749, 0.7499] {
        let s = sigma_diffusive(&Preset::Pure(1).model(p, 1.0).unwrap()).unwrap().paper.get(0, 0);
        assert!(s > last, "{p}: {s} <= {last}");
        last = s;
    }
    assert!(last > 1e2);
}
