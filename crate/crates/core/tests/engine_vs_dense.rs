use proptest::prelude::*;
use qca_core::evolution::{step, EvolutionConfig, InitialState, SvdSweepCompressor};
use qca_core::mps::DoubledStateMps;
use qca_core::oracle::dense::{dense_reduced_evolve, dense_reduced_evolve_from, master_equation};
use qca_core::registry::{build_update, LocalUpdate, RuleParams};
use qca_core::{evolve, init_seed};

fn family(name: &str, p1: f64, p2: f64) -> LocalUpdate {
    build_update(name, &RuleParams { p1: Some(p1), p2: Some(p2), ..Default::default() }).unwrap()
}

fn mps_rows(u: &LocalUpdate, occ: &[bool], steps: usize) -> Vec<DoubledStateMps> {
    let lam = u.lambda(occ.len());
    let mut s = DoubledStateMps::classical(occ);
    let mut out = vec![s.clone()];
    for _ in 1..steps {
        s = step(&s, &lam, 256, 0.0, &SvdSweepCompressor).unwrap().0;
        out.push(s.clone());
    }
    out
}

fn max_rho_diff(u: &LocalUpdate, occ: &[bool], steps: usize) -> f64 {
    let dense = dense_reduced_evolve_from(u, occ, steps).unwrap();
    let mps = mps_rows(u, occ, steps);
    dense
        .iter()
        .zip(&mps)
        .map(|(d, m)| d.rho.max_abs_diff(&m.to_dense_matrix()))
        .fold(0.0, f64::max)
}

fn seed(l: usize) -> Vec<bool> {
    (0..l).map(|k| k == l / 2).collect()
}

#[test]
fn dkca_matches_dense_oracle() {
    let u = family("dkca", 0.645, 0.874);
    assert!(max_rho_diff(&u, &seed(6), 6) < 1e-10);
}

#[test]
fn bbr_matches_dense_oracle() {
    let u = family("bbr", 0.61, 0.2);
    assert!(max_rho_diff(&u, &seed(5), 5) < 1e-10);
}

#[test]
fn unitary_limit_matches_dense_oracle() {
    let u = build_update("unitary", &RuleParams { dt: Some(0.3), ..Default::default() }).unwrap();
    let d = max_rho_diff(&u, &seed(5), 5);
    assert!(d < 1e-10, "{d}");
}

#[test]
fn mps_diagonal_is_master_equation() {
    let u = family("dkca", 0.6, 0.874);
    let occ = seed(7);
    let me = master_equation(u.rule().unwrap(), &occ, 5).unwrap();
    for (m, p) in mps_rows(&u, &occ, 5).iter().zip(&me) {
        let rho = m.to_dense_matrix();
        for (i, pi) in p.iter().enumerate() {
            assert!((rho.get(&[i, i]).re - pi).abs() < 1e-12);
        }
    }
}

#[test]
fn dkca_second_row_analytics() {
    let (p1, p2) = (0.645, 0.874);
    let series = evolve(&family("dkca", p1, p2), &EvolutionConfig::new(7, 2, 16), &SvdSweepCompressor).unwrap();
    let r = &series.records[1];
    let g_cl = (p1 * p1 + (1.0 - p1) * (1.0 - p1)).powi(2);
    assert!((r.gamma - 1.0).abs() < 1e-12);
    assert!((r.gamma_cl - g_cl).abs() < 1e-12);
    assert!((r.c2 - (1.0 - g_cl)).abs() < 1e-12);
    assert!((r.s2_cl + g_cl.ln()).abs() < 1e-12);
}

#[test]
fn dense_seed_helper_uses_floor_center() {
    let u = family("dkca", 0.5, 0.5);
    let rows = dense_reduced_evolve(&u, 4, 1).unwrap();
    assert_eq!(rows[0].densities(), vec![0.0, 0.0, 1.0, 0.0]);
    let s = InitialState::SeedAt(2).build(4).unwrap();
    assert!(s.to_dense_matrix().max_abs_diff(&rows[0].rho) == 0.0);
    assert!(init_seed(4).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5))]

    #[test]
    fn random_dkca_matches_dense(p1 in 0.0f64..1.0, p2 in 0.0f64..1.0) {
        let u = family("dkca", p1, p2);
        prop_assert!(max_rho_diff(&u, &seed(5), 5) < 1e-10);
    }

    #[test]
    fn random_bbr_matches_dense(p1 in 0.0f64..1.0, p2 in 0.0f64..1.0) {
        let u = family("bbr", p1, p2);
        prop_assert!(max_rho_diff(&u, &seed(5), 5) < 1e-10);
    }
}
