//! Property-based checks of structural invariants on randomly generated
//! domains, data sets, and parameters.

use lrm_core::domain::{build_offset_matching_set, DomainSpec, StatePoint, StateSet};
use lrm_core::lrm::{
    build_quadratic_seq, conjugate_update, lrm_divergence_exact, lrm_loss_direct, GaussianPrior,
    QuadraticLoss, WeightFunction,
};
use lrm_core::models::{CmpUnivariate, ExpFamily};
use lrm_core::pmf::{fit_empirical, smooth, BasePmf, FinitePmf, SmoothedPmf};
use lrm_core::samplers::{sample_cmp_rejection, RngSpec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn chain_domain(states: usize) -> DomainSpec {
    DomainSpec::finite_product(vec![StateSet::range(0, states as i64 - 1).unwrap()]).unwrap()
}

fn random_pmf(domain: &DomainSpec, seed: u64) -> FinitePmf {
    let mut rng = RngSpec::new(seed).rng().unwrap();
    let n = domain.size().unwrap() as usize;
    // Masses bounded away from zero so log-ratios stay moderate.
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    FinitePmf::from_weights(domain, &weights).unwrap()
}

fn cmp_dataset(theta1: f64, theta2: f64, n: usize, seed: u64) -> Vec<StatePoint> {
    let mut rng = RngSpec::new(seed).rng().unwrap();
    sample_cmp_rejection(theta1, theta2, n, &mut rng)
        .unwrap()
        .into_iter()
        .map(StatePoint::scalar)
        .collect()
}

fn smoothed(samples: &[StatePoint], alpha: f64) -> SmoothedPmf {
    let counts = fit_empirical(samples).unwrap();
    let base = if alpha > 0.0 {
        Some(BasePmf::mixture_for_counts(samples, 0.01).unwrap())
    } else {
        None
    };
    smooth(counts, alpha, base).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// The divergence is nonnegative, vanishes at equality, and separates
    /// clearly distinct PMFs whenever the matching graph is connected.
    #[test]
    fn divergence_nonnegative_and_separating(
        states in 2usize..=60,
        seed_q in 0u64..1_000_000,
        seed_p in 1_000_000u64..2_000_000,
    ) {
        let domain = chain_domain(states);
        // Bidirectional steps keep every state's matching set nonempty on a
        // finite range, and the induced graph is a connected chain.
        let m = build_offset_matching_set(&[-1, 1], &domain).unwrap();
        let q = random_pmf(&domain, seed_q);
        let p = random_pmf(&domain, seed_p);

        let self_div = lrm_divergence_exact(&q, &q, &m).unwrap();
        prop_assert!(self_div.abs() <= 1e-12, "self-divergence {self_div}");

        let div = lrm_divergence_exact(&q, &p, &m).unwrap();
        prop_assert!(div >= 0.0, "negative divergence {div}");

        let max_gap = domain
            .enumerate(1 << 20)
            .unwrap()
            .iter()
            .map(|x| (q.mass(x) - p.mass(x)).abs())
            .fold(0.0f64, f64::max);
        if max_gap > 1e-2 {
            prop_assert!(div > 1e-12, "divergence {div} too small for gap {max_gap}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// The quadratic-form matrix is a weighted sum of outer products, so it
    /// must be positive semidefinite for any data set and matching set.
    #[test]
    fn quadratic_matrix_is_positive_semidefinite(
        theta1 in 1.0f64..6.0,
        theta2 in 0.6f64..2.0,
        n in 30usize..200,
        seed in 0u64..10_000,
        offsets in prop_oneof![Just(vec![1i64]), Just(vec![-1, 1]), Just(vec![1, 2])],
        alpha in prop_oneof![Just(0.0f64), Just(0.5f64)],
    ) {
        let model = CmpUnivariate::new();
        let samples = cmp_dataset(theta1, theta2, n, seed);
        let qhat = smoothed(&samples, alpha);
        let m = build_offset_matching_set(&offsets, model.domain()).unwrap();
        let Ok(loss) = build_quadratic_seq(&model, &samples, &m, &qhat, &WeightFunction::Constant)
        else {
            // α = 0 with a tiny support can drop every term; not this
            // property's concern.
            return Ok(());
        };
        let eigs = loss.lambda().clone().symmetric_eigen().eigenvalues;
        let max_eig = eigs.iter().fold(0.0f64, |a, &b| a.max(b));
        let floor = -1e-10 * max_eig.max(1.0);
        for &e in eigs.iter() {
            prop_assert!(e >= floor, "eigenvalue {e} below {floor}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// The assembled quadratic form equals the loss evaluated straight from
    /// its definition, at arbitrary parameter values — the constant term
    /// included.
    #[test]
    fn quadratic_form_matches_direct_loss(
        theta1 in 1.5f64..6.0,
        theta2 in 0.5f64..1.8,
        n in 30usize..150,
        seed in 0u64..10_000,
        eta1 in -1.0f64..2.5,
        eta2 in -0.5f64..2.0,
        alpha in prop_oneof![Just(0.0f64), Just(1.0f64)],
    ) {
        let model = CmpUnivariate::new();
        let samples = cmp_dataset(theta1, theta2, n, seed);
        let qhat = smoothed(&samples, alpha);
        let m = build_offset_matching_set(&[-1, 1], model.domain()).unwrap();
        let w = WeightFunction::Constant;
        let loss = build_quadratic_seq(&model, &samples, &m, &qhat, &w).unwrap();
        let eta = DVector::from_vec(vec![eta1, eta2]);
        let direct = lrm_loss_direct(&model, &eta, &samples, &m, &qhat, &w).unwrap();
        let quad = loss.eval(&eta);
        let scale = direct.abs().max(1.0);
        prop_assert!(
            (direct - quad).abs() <= 1e-10 * scale,
            "direct {direct} vs quadratic {quad}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Conditioning can only sharpen a Gaussian: the posterior covariance is
    /// dominated by the prior covariance in the Loewner order for any
    /// positive semidefinite quadratic form and any β > 0.
    #[test]
    fn posterior_covariance_dominated_by_prior(
        p in 1usize..=4,
        seed in 0u64..100_000,
        beta in 1e-3f64..50.0,
        n in 1u64..2000,
    ) {
        let mut rng = RngSpec::new(seed).rng().unwrap();
        let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        let sigma = &a * a.transpose() + DMatrix::identity(p, p) * 0.5;
        let mu = DVector::from_fn(p, |_, _| rng.random_range(-2.0..2.0));
        let prior = GaussianPrior::new(mu, sigma.clone()).unwrap();

        let k = rng.random_range(1..=p);
        let b = DMatrix::from_fn(p, k, |_, _| rng.random_range(-1.0..1.0));
        let lambda = &b * b.transpose();
        let nu = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
        let loss = QuadraticLoss::new(lambda, nu, 0.0, n).unwrap();

        let posterior = conjugate_update(&prior, &loss, beta).unwrap();
        let gap = &sigma - posterior.sigma();
        let eigs = gap.symmetric_eigen().eigenvalues;
        let sigma_scale = sigma.diagonal().amax();
        for &e in eigs.iter() {
            prop_assert!(e >= -1e-9 * sigma_scale, "Loewner gap eigenvalue {e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Smoothed PMFs stay normalised on finite domains for any smoothing
    /// strength, and the log-ratio of a state with itself is exactly zero.
    #[test]
    fn smoothed_pmf_normalises_and_self_ratio_vanishes(
        states in 2usize..=40,
        raw_counts in prop::collection::vec(0u32..20, 2..=40),
        alpha in 0.0f64..10.0,
    ) {
        let domain = chain_domain(states);
        let values: Vec<i64> = (0..states as i64).collect();
        let mut samples = Vec::new();
        for (i, &c) in raw_counts.iter().enumerate() {
            let v = values[i % states];
            samples.extend(std::iter::repeat_n(StatePoint::scalar(v), c as usize));
        }
        prop_assume!(!samples.is_empty());

        let counts = fit_empirical(&samples).unwrap();
        let base = BasePmf::uniform(&domain).unwrap();
        let pmf = smooth(counts, alpha, Some(base)).unwrap();

        let grid = domain.enumerate(1 << 20).unwrap();
        let total: f64 = grid.iter().map(|x| pmf.mass(x)).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "mass sums to {total}");

        for x in &grid {
            if pmf.mass(x) > 0.0 {
                let r = pmf.log_ratio(x, x).unwrap().value().unwrap();
                prop_assert_eq!(r, 0.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Every neighbour produced by an offset matching set lies inside the
    /// domain, and the reported neighbour count matches the realised list.
    #[test]
    fn offset_neighbours_stay_inside_the_domain(
        lo in -3i64..=0,
        span in 3i64..=12,
        offsets in prop::collection::btree_set(-3i64..=3, 1..4),
    ) {
        let offsets: Vec<i64> = offsets.into_iter().filter(|&o| o != 0).collect();
        prop_assume!(!offsets.is_empty());
        let domain =
            DomainSpec::finite_product(vec![StateSet::range(lo, lo + span).unwrap()]).unwrap();
        // One-sided offset sets can orphan a boundary state, which the
        // constructor rightly refuses; only valid sets are in scope here.
        let Ok(m) = build_offset_matching_set(&offsets, &domain) else {
            return Ok(());
        };
        for x in domain.enumerate(1 << 20).unwrap() {
            let nb = m.neighbours(&domain, &x);
            prop_assert_eq!(nb.len(), m.neighbour_count(&domain, &x));
            for y in nb {
                prop_assert!(domain.contains(&y), "neighbour {:?} escapes", y);
            }
        }
    }
}
