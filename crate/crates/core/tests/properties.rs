use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use srcseek::field::{random_edges, random_spd, FieldGraph, ScalarField};
use srcseek::linalg;
use srcseek::sim::{simulate, FrictionVehicle, NoiseMode, NoisePolicy, SimConfig};
use srcseek::statespace::{
    augment_with_filter, check_equilibrium_family, stack_agents, tracking_loop, ParamGrid, ParamStateSpace,
    Realization, Scheduling,
};
use srcseek::zf::{build_multiplier, build_variable_constraints, BETA};

fn matrix(rows: usize, cols: usize, vals: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| vals[(i * cols + j) % vals.len()] * (1.0 + (i + 2 * j) as f64 / 7.0))
}

// A model whose equilibrium output depends on ρ: no common equilibrium.
fn varying_gain_model(lo: f64, hi: f64) -> ParamStateSpace {
    let grid = ParamGrid::uniform(&[lo], &[hi], 3).unwrap();
    let reals = grid
        .points()
        .iter()
        .map(|p| {
            Realization::new(
                DMatrix::from_element(1, 1, -1.0),
                DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
                DMatrix::from_element(1, 1, 1.0 + p[0]),
                DMatrix::zeros(1, 2),
            )
        })
        .collect();
    ParamStateSpace::new(1, grid, reals).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn model_file_round_trip_is_exact(
        n_x in 0usize..4,
        d in 1usize..3,
        points in 1usize..4,
        vals in prop::collection::vec(-1e3f64..1e3, 1..40),
        lo in -2.0f64..0.0,
        width in 0.1f64..5.0,
        scheduled in any::<bool>(),
    ) {
        let grid = if points == 1 { ParamGrid::lti() } else { ParamGrid::uniform(&[lo], &[lo + width], points).unwrap() };
        let reals: Vec<Realization> = (0..grid.len())
            .map(|k| {
                let shift: Vec<f64> = vals.iter().map(|v| v / 3.0 + k as f64).collect();
                Realization::new(
                    matrix(n_x, n_x, &shift),
                    matrix(n_x, 2 * d, &vals),
                    matrix(d, n_x, &shift),
                    matrix(d, 2 * d, &vals),
                )
            })
            .collect();
        let mut model = ParamStateSpace::new(d, grid, reals).unwrap();
        if scheduled && n_x > 0 && points > 1 {
            model = model.with_scheduling(Scheduling { state_index: vec![n_x - 1] }).unwrap();
        }
        let back = ParamStateSpace::from_model_str(&model.to_model_string()).unwrap();
        prop_assert_eq!(back, model);
    }

    #[test]
    fn equilibrium_check_survives_coordinate_changes(
        k_x in 0.5f64..8.0,
        k_v in 0.5f64..8.0,
        k_d in 0.5f64..20.0,
        t_vals in prop::collection::vec(-0.3f64..0.3, 16),
        holds_case in any::<bool>(),
    ) {
        let base = if holds_case { tracking_loop(k_x, k_v) } else { varying_gain_model(0.0, k_x) };
        let plant = augment_with_filter(&base, 1.0, k_d).unwrap();
        let n = plant.n_states();
        let t = DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |i, j| t_vals[(i * n + j) % 16]);
        prop_assume!(linalg::spd_condition(&(t.transpose() * &t)) < 1e4);
        let mut moved = plant.clone();
        moved.aug = plant.aug.similarity(&t).unwrap();
        let a = check_equilibrium_family(&plant);
        let b = check_equilibrium_family(&moved);
        prop_assert_eq!(a.holds, holds_case);
        prop_assert_eq!(a.holds, b.holds);
        if a.holds {
            let mapped = &t * &a.witness;
            prop_assert!((mapped - &b.witness).abs().max() <= 1e-8 * (1.0 + b.witness.abs().max()));
        }
    }

    #[test]
    fn stacked_blocks_recover_agent_realizations(assignment in prop::collection::vec(0usize..11, 1..5)) {
        let plant = FrictionVehicle::default().plant(1.0, 9.0).unwrap();
        let stacked = stack_agents(&plant, &assignment).unwrap();
        let s = &stacked.realizations()[0];
        let (n, d) = (plant.n_states(), plant.d());
        for (i, &k) in assignment.iter().enumerate() {
            let r = &plant.aug.realizations()[k];
            prop_assert_eq!(s.a.view((i * n, i * n), (n, n)).into_owned(), r.a.clone());
            prop_assert_eq!(s.b.view((i * n, i * d), (n, d)).into_owned(), r.b.clone());
            prop_assert_eq!(s.c.view((i * d, i * n), (d, n)).into_owned(), r.c.clone());
        }
    }

    #[test]
    fn multiplier_dimensions_and_poles(nu in 1usize..5, d in 1usize..4, alpha in 0.0f64..0.5) {
        let z = build_multiplier(nu, alpha, 1.0, 10.0, d).unwrap();
        let r = &z.realization;
        prop_assert_eq!(r.n_x(), 2 * nu * d);
        prop_assert_eq!(r.n_u(), 2 * d);
        prop_assert_eq!(r.n_y(), 2 * (nu + 1) * d);
        // Lower-triangular Jordan chains: the poles sit on the diagonal.
        for i in 0..r.n_x() {
            prop_assert_eq!(r.a[(i, i)], BETA - 2.0 * alpha);
            for j in (i + 1)..r.n_x() {
                prop_assert_eq!(r.a[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn middle_matrix_structure(nu in 1usize..5, h in -5.0f64..5.0, p in prop::collection::vec(-5.0f64..5.0, 8)) {
        let set = build_variable_constraints(nu).unwrap();
        let pm = set.assemble_p(h, &p[..nu], &p[4..4 + nu]);
        let half = nu + 1;
        prop_assert_eq!(pm.clone(), pm.transpose());
        prop_assert!(pm.view((0, 0), (half, half)).iter().all(|&v| v == 0.0));
        prop_assert!(pm.view((half, half), (half, half)).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn certified_sector_is_tight(seed in any::<u64>(), n in 2usize..8, m_psi in 0.5f64..5.0, span in 1.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = random_edges(n, 0.5, &mut rng);
        let field = ScalarField::radial(DVector::zeros(1), 1.0, m_psi, m_psi * span).unwrap();
        let informed: Vec<usize> = (0..n).filter(|i| i % 2 == 0).collect();
        let g = FieldGraph::new(n, edges, informed, DVector::zeros(n), field).unwrap();
        let (m, l) = g.sector_bounds();
        prop_assume!(m > 1e-6);
        prop_assert!(g.certify_sector(m, l));
        prop_assert!(!g.certify_sector(m + 1e-6, l));
        prop_assert!(!g.certify_sector(m, l - 1e-6));
    }

    #[test]
    fn composite_gradient_respects_sector(seed in any::<u64>(), n in 2usize..6, d in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_spd(d, 1.0, 8.0, &mut rng);
        let field = ScalarField::quadratic_centered(h, DVector::from_element(d, 1.5)).unwrap();
        let mut edges = random_edges(n, 0.4, &mut rng);
        edges.extend((1..n).map(|i| (i - 1, i)));
        let r = DVector::from_fn(n * d, |i, _| (i as f64).sin());
        let g = FieldGraph::new(n, edges, vec![0], r, field).unwrap();
        let (m, l) = g.sector_bounds();
        for _ in 0..200 {
            use rand::Rng;
            let y1 = DVector::from_fn(n * d, |_, _| rng.gen_range(-10.0..10.0));
            let y2 = DVector::from_fn(n * d, |_, _| rng.gen_range(-10.0..10.0));
            let dy = &y1 - &y2;
            let s = (g.grad_f(&y1) - g.grad_f(&y2)).dot(&dy);
            let n2 = dy.norm_squared();
            prop_assert!(s >= m * n2 * (1.0 - 1e-9) && s <= l * n2 * (1.0 + 1e-9));
        }
        let y_star = g.minimize_f().unwrap();
        prop_assert!(g.grad_f(&y_star).norm() <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn noise_never_exceeds_its_bound(seed in any::<u64>(), delta in 0.0f64..0.9, random_mode in any::<bool>()) {
        let field = ScalarField::quadratic_centered(DMatrix::from_element(1, 1, 4.0), DVector::from_element(1, 2.0)).unwrap();
        let g = FieldGraph::new(3, vec![(0, 1), (1, 2)], vec![0], DVector::zeros(3), field).unwrap();
        let plant = FrictionVehicle::default().plant(1.0, 9.0).unwrap();
        let mode = if random_mode { NoiseMode::PiecewiseRandom } else { NoiseMode::Opposing };
        let noise = NoisePolicy { mode, delta, period: 0.3, seed };
        let eta0 = DVector::from_fn(12, |i, _| 0.1 * i as f64);
        let cfg = SimConfig { t_end: 3.0, dt: 1e-2, sample_every: 1 };
        let traj = simulate(&g, &plant, &noise, &eta0, &cfg, 0).unwrap();
        for (e, u) in traj.e.iter().zip(&traj.u) {
            prop_assert!(e.norm() <= delta * u.norm() + 1e-12);
        }
    }
}
