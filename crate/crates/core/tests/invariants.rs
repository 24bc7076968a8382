use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hamflow_core::boundary::{boundary_data, ShootingOptions};
use hamflow_core::matlib::{sym_eig, SymMatrix};
use hamflow_core::sflow::{sfl_crossing, sfl_eigcount, CrossingControl, HomoclinicPath, MatrixPath, PartitionControl};
use hamflow_core::systems::{example_family, FamilyConfig, HamiltonianFamily, TorusPath, TorusPoint};

fn affine(seed: u64, n: usize) -> Option<MatrixPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sym = |s: f64| SymMatrix::symmetrize(&DMatrix::from_fn(n, n, |_, _| rng.gen_range(-s..s)));
    let (base, slope) = (sym(1.0), sym(2.0));
    let ok = [-1.0, 1.0].iter().all(|&s| sym_eig(&base.axpy(s, &slope)).min_abs() > 1e-3);
    ok.then(|| MatrixPath::affine(base, slope, -1.0, 1.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn engines_agree_and_reversal_negates(seed in any::<u64>(), n in 2usize..6) {
        if let Some(p) = affine(seed, n) {
            let count = sfl_eigcount(&p, &PartitionControl::default()).unwrap().value;
            let cross = sfl_crossing(&p, &CrossingControl { grid: 512, tol: 1e-6 }).unwrap().value;
            prop_assert_eq!(count, cross);
            prop_assert_eq!(sfl_eigcount(&p.reversed(), &PartitionControl::default()).unwrap().value, -count);
            let morse = sym_eig(&p.value(-1.0)).count_negative() as i64 - sym_eig(&p.value(1.0)).count_negative() as i64;
            prop_assert_eq!(count, morse);
        }
    }

    #[test]
    fn complexified_flow_doubles(seed in any::<u64>(), n in 1usize..5) {
        if let Some(p) = affine(seed, n) {
            let s = sfl_eigcount(&p, &PartitionControl::default()).unwrap().value;
            prop_assert_eq!(sfl_eigcount(&p.complexified(), &PartitionControl::default()).unwrap().value, 2 * s);
        }
    }
}

fn loop_flow(family: &dyn HamiltonianFamily, path: TorusPath, grid: usize) -> i64 {
    let hp = HomoclinicPath::new(family, path, ShootingOptions::default()).unwrap();
    sfl_crossing(&hp, &CrossingControl { grid, tol: 1e-6 }).unwrap().value
}

#[test]
fn loop_flow_survives_reparametrization_and_reverses() {
    let f = example_family(2).unwrap();
    let lp = TorusPath::coordinate_loop(&TorusPoint::new(&[0.0, 0.4]), 0, 0.0);
    assert_eq!(loop_flow(&f, lp.clone(), 48), -1);
    assert_eq!(loop_flow(&f, lp.reversed(), 48), 1);

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..3 {
        let mut params: Vec<f64> = (0..12).map(|_| rng.gen_range(-PI..PI)).collect();
        params.sort_by(f64::total_cmp);
        params.insert(0, -PI);
        params.push(PI);
        assert_eq!(loop_flow(&f, lp.regridded(&params).unwrap(), 64), -1);
    }
}

#[test]
fn diagonal_waypoint_path() {
    // s ∈ [0, 1] ↦ Θ₁ = Θ₂ = 2s - 1: the angle sum moves at rate 4, which scales the form
    let f = example_family(2).unwrap();
    let path = TorusPath::from_waypoints(&[vec![-1.0, -1.0], vec![1.0, 1.0]]).unwrap();
    let hp = HomoclinicPath::new(&f, path, ShootingOptions::default()).unwrap();
    let r = sfl_crossing(&hp, &CrossingControl { grid: 32, tol: 1e-6 }).unwrap();
    assert_eq!(r.value, -1);
    let gamma = r.crossings[0].form.as_matrix()[(0, 0)];
    assert!((gamma + 4.0 * 0.255_286_962_3).abs() < 1e-3, "Γ = {gamma}");
}

#[test]
fn composed_config_reproduces_the_example() {
    let text = r#"
        kind = "composed"
        k = 2
        n = 1

        [[terms]]
        profile = "arctan"
        support = "positive"
        matrix = { type = "j-s-theta", weights = [1.0, 1.0] }

        [[terms]]
        profile = "arctan"
        support = "negative"
        matrix = { type = "j-s-theta", weights = [0.0, 0.0] }
    "#;
    let cfg: FamilyConfig = toml::from_str(text).unwrap();
    let composed = cfg.build().unwrap();
    let example = example_family(2).unwrap();
    let opts = ShootingOptions::default();
    for angles in [[0.3, -1.2], [2.0, 2.5], [-0.1, 0.1]] {
        let lam = TorusPoint::new(&angles);
        let a = boundary_data(composed.as_ref(), &lam, &opts).unwrap().gap();
        let b = boundary_data(&example, &lam, &opts).unwrap().gap();
        assert!((a - b).abs() < 1e-8, "{angles:?}: {a} vs {b}");
    }
    let lp = TorusPath::coordinate_loop(&TorusPoint::zero(2), 1, 0.0);
    assert_eq!(loop_flow(composed.as_ref(), lp, 32), -1);
}
