use boundreg_core::bounded::{bounded_regression, solve_fixed_gamma, SolverConfig};
use boundreg_core::oracle::{oracle_bounded_regression, oracle_fixed_gamma, random_instance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fixed_gamma_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = SolverConfig::default();
    let mut compared = 0;
    for _ in 0..300 {
        let inst = random_instance(&mut rng, 8, 3).unwrap();
        let Ok((w, _)) = solve_fixed_gamma(&inst.alpha, &inst.loadings, &inst.z, &inst.bounds, &cfg) else {
            continue;
        };
        let o = oracle_fixed_gamma(&inst.alpha, &inst.loadings, &inst.z, &inst.bounds).unwrap();
        let d = (&w - &o.weights).amax();
        assert!(d <= 1e-8, "discrepancy {d:e} on {inst:?}");
        compared += 1;
    }
    assert!(compared >= 250, "only {compared} instances compared");
}

#[test]
fn bounded_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = SolverConfig::default();
    let mut compared = 0;
    for _ in 0..200 {
        let inst = random_instance(&mut rng, 8, 3).unwrap();
        let s = bounded_regression(&inst.alpha, &inst.loadings, &inst.z, &inst.bounds, &cfg);
        let o = oracle_bounded_regression(&inst.alpha, &inst.loadings, &inst.z, &inst.bounds);
        match (s, o) {
            (Ok(w), Ok(wo)) => {
                let d = (&w - &wo).amax();
                assert!(d <= 1e-8, "discrepancy {d:e} on {inst:?}");
                compared += 1;
            }
            (Ok(_), Err(e)) | (Err(e), Ok(_)) => panic!("only one side converged ({e}) on {inst:?}"),
            _ => {}
        }
    }
    assert!(compared >= 150, "only {compared} instances compared");
}
