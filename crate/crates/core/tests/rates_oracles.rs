mod common;

use common::*;
use ios_bc::channel::EffectiveChannels;
use ios_bc::linalg::{c, min_eigenvalue, CMat};
use ios_bc::rates::{bc_user_rates, mac_sum_rate, mac_to_bc, CovarianceKind, CovarianceSet, UserOrdering};
use proptest::prelude::*;

fn scalar(v: f64) -> CMat {
    CMat::from_element(1, 1, c(v, 0.0))
}

fn eff(h: Vec<CMat>) -> EffectiveChannels {
    EffectiveChannels { h }
}

/// Per-user DPC rates from eigenvalue log-dets, user `order[i]` seeing
/// interference from `order[j]`, `j > i`.
fn bc_oracle(h: &[CMat], s: &[CMat], order: &[usize]) -> Vec<f64> {
    let nt = h[0].ncols();
    let mut rates = vec![0.0; h.len()];
    for (i, &k) in order.iter().enumerate() {
        let mut after = CMat::zeros(nt, nt);
        for &j in &order[i + 1..] {
            after += &s[j];
        }
        let with = &after + &s[k];
        let nr = h[k].nrows();
        let num = CMat::identity(nr, nr) + &h[k] * with * h[k].adjoint();
        let den = CMat::identity(nr, nr) + &h[k] * after * h[k].adjoint();
        rates[k] = log2_det_eig(&num) - log2_det_eig(&den);
    }
    rates
}

#[test]
fn mac_examples() {
    let h = eff(vec![scalar(1.0)]);
    assert_eq!(mac_sum_rate(&h, &CovarianceSet::mac_dual(vec![scalar(0.0)])).unwrap(), 0.0);
    let r = mac_sum_rate(&h, &CovarianceSet::mac_dual(vec![scalar(3.0)])).unwrap();
    assert!((r - 2.0).abs() < 1e-15);
    let h2 = eff(vec![scalar(1.0), scalar(1.0)]);
    let r = mac_sum_rate(&h2, &CovarianceSet::mac_dual(vec![scalar(1.0), scalar(1.0)])).unwrap();
    assert!((r - 3f64.log2()).abs() < 1e-15);
    assert!((r - 1.58496).abs() < 1e-5);
}

#[test]
fn mac_rejects_wrong_kind_and_non_psd() {
    let h = eff(vec![scalar(1.0)]);
    assert!(mac_sum_rate(&h, &CovarianceSet::broadcast(vec![scalar(1.0)])).is_err());
    assert!(mac_sum_rate(&h, &CovarianceSet::mac_dual(vec![scalar(-0.5)])).is_err());
}

#[test]
fn mac_matches_eigen_oracle() {
    let mut r = rng(10);
    for _ in 0..20 {
        let h: Vec<CMat> = (0..3).map(|_| rand_mat(&mut r, 2, 4, 1.0)).collect();
        let s = random_covs(&mut r, 3, 2, 1.0);
        let got = mac_sum_rate(&eff(h.clone()), &CovarianceSet::mac_dual(s.clone())).unwrap();
        assert!((got - mac_rate_oracle(&h, &s)).abs() < 1e-10);
    }
}

#[test]
fn bc_examples() {
    let h = eff(vec![scalar(1.0), scalar(1.0)]);
    let rates = bc_user_rates(
        &h,
        &CovarianceSet::broadcast(vec![scalar(1.0), scalar(1.0)]),
        &UserOrdering::identity(2),
    )
    .unwrap();
    assert!((rates[0] - 1.5f64.log2()).abs() < 1e-15);
    assert!((rates[1] - 1.0).abs() < 1e-15);

    let zero = bc_user_rates(
        &h,
        &CovarianceSet::zeros(CovarianceKind::Broadcast, 2, 1),
        &UserOrdering::identity(2),
    )
    .unwrap();
    assert_eq!(zero, vec![0.0, 0.0]);
}

#[test]
fn single_user_bc_rate_is_plain_log_det() {
    let mut r = rng(11);
    let h = rand_mat(&mut r, 2, 3, 1.0);
    let s = rand_psd(&mut r, 3, 1.0);
    let rates = bc_user_rates(
        &eff(vec![h.clone()]),
        &CovarianceSet::broadcast(vec![s.clone()]),
        &UserOrdering::identity(1),
    )
    .unwrap();
    let want = log2_det_eig(&(CMat::identity(2, 2) + &h * &s * h.adjoint()));
    assert!((rates[0] - want).abs() < 1e-12);
}

#[test]
fn bc_matches_oracle_under_permutations() {
    let mut r = rng(12);
    for order in [vec![0, 1, 2], vec![2, 0, 1], vec![1, 2, 0]] {
        let h: Vec<CMat> = (0..3).map(|_| rand_mat(&mut r, 2, 3, 1.0)).collect();
        let s: Vec<CMat> = (0..3).map(|_| rand_psd(&mut r, 3, 1.0)).collect();
        let got = bc_user_rates(
            &eff(h.clone()),
            &CovarianceSet::broadcast(s.clone()),
            &UserOrdering::new(order.clone()).unwrap(),
        )
        .unwrap();
        let want = bc_oracle(&h, &s, &order);
        for k in 0..3 {
            assert!((got[k] - want[k]).abs() < 1e-10, "{order:?} user {k}");
        }
    }
}

#[test]
fn invalid_orderings_are_rejected() {
    assert!(UserOrdering::new(vec![0, 0]).is_err());
    assert!(UserOrdering::new(vec![1, 2]).is_err());
}

#[test]
fn single_user_duality() {
    let mut r = rng(13);
    let h = rand_mat(&mut r, 3, 3, 1.0);
    let sbar = rand_psd(&mut r, 3, 1.0);
    let e = eff(vec![h.clone()]);
    let bc = mac_to_bc(&e, &CovarianceSet::mac_dual(vec![sbar.clone()]), &UserOrdering::identity(1)).unwrap();
    let rate = bc_user_rates(&e, &bc, &UserOrdering::identity(1)).unwrap()[0];
    let mac = log2_det_eig(&(CMat::identity(3, 3) + h.adjoint() * &sbar * &h));
    assert!((rate - mac).abs() < 1e-10 * mac);
}

#[test]
fn zero_dual_covariances_map_to_zero() {
    let mut r = rng(14);
    let h: Vec<CMat> = (0..2).map(|_| rand_mat(&mut r, 2, 3, 1.0)).collect();
    let bc = mac_to_bc(
        &eff(h),
        &CovarianceSet::zeros(CovarianceKind::MacDual, 2, 2),
        &UserOrdering::identity(2),
    )
    .unwrap();
    assert_eq!(bc.kind, CovarianceKind::Broadcast);
    for s in &bc.s {
        assert!(s.norm() < 1e-14);
    }
}

#[test]
fn three_user_duality_and_power() {
    let mut r = rng(15);
    let h: Vec<CMat> = (0..3).map(|_| rand_mat(&mut r, 2, 4, 1.0)).collect();
    let s = random_covs(&mut r, 3, 2, 1.0);
    let e = eff(h);
    let mac = mac_sum_rate(&e, &CovarianceSet::mac_dual(s.clone())).unwrap();
    let order = UserOrdering::identity(3);
    let bc = mac_to_bc(&e, &CovarianceSet::mac_dual(s.clone()), &order).unwrap();
    let sum: f64 = bc_user_rates(&e, &bc, &order).unwrap().iter().sum();
    assert!((sum - mac).abs() / mac < 1e-8);
    let p_mac: f64 = s.iter().map(|m| m.trace().re).sum();
    assert!((bc.total_power() - p_mac).abs() < 1e-8);
}

fn dims() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 1usize..=2, 1usize..=4).prop_flat_map(|(seed, nr, k)| (Just(seed), nr..=6usize, Just(nr), Just(k)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn duality_power_and_psd((seed, nt, nr, k) in dims(), perm_seed in 0usize..24) {
        let mut r = rng(seed);
        let h: Vec<CMat> = (0..k).map(|_| rand_mat(&mut r, nr, nt, 2.0)).collect();
        let s = random_covs(&mut r, k, nr, 1.0);
        let mut pi: Vec<usize> = (0..k).collect();
        // deterministic permutation from perm_seed
        for i in (1..k).rev() {
            pi.swap(i, perm_seed % (i + 1));
        }
        let order = UserOrdering::new(pi).unwrap();
        let e = eff(h);
        let mac = mac_sum_rate(&e, &CovarianceSet::mac_dual(s.clone())).unwrap();
        let bc = mac_to_bc(&e, &CovarianceSet::mac_dual(s.clone()), &order).unwrap();
        let sum: f64 = bc_user_rates(&e, &bc, &order).unwrap().iter().sum();
        prop_assert!((sum - mac).abs() <= 1e-8 * mac.max(1e-300));
        let p_mac: f64 = s.iter().map(|m| m.trace().re).sum();
        prop_assert!((bc.total_power() - p_mac).abs() <= 1e-8 * p_mac);
        for m in &bc.s {
            prop_assert!((m - m.adjoint()).norm() <= 1e-9);
            prop_assert!(min_eigenvalue(m) >= -1e-9);
        }
    }

    #[test]
    fn mac_rate_is_monotone_in_each_covariance(seed in any::<u64>(), user in 0usize..3) {
        let mut r = rng(seed);
        let h: Vec<CMat> = (0..3).map(|_| rand_mat(&mut r, 2, 3, 1.0)).collect();
        let s = random_covs(&mut r, 3, 2, 1.0);
        let e = eff(h);
        let base = mac_sum_rate(&e, &CovarianceSet::mac_dual(s.clone())).unwrap();
        let mut bigger = s;
        bigger[user] += rand_psd(&mut r, 2, 0.5);
        let more = mac_sum_rate(&e, &CovarianceSet::mac_dual(bigger)).unwrap();
        prop_assert!(more >= base - 1e-12);
    }
}
