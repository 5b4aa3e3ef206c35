use lgk_core::dynamics::{simulate, SimParams};
use lgk_core::harness::{mean_and_stderr, parse_csv, write_csv, ComparisonRow};
use lgk_core::lattice::{exact_mass_momentum, read_snapshot, Configuration, Torus};
use lgk_core::measure::{sample, FourierField, FourierMode, PotentialField};
use lgk_core::micro::{h_alpha, k_move};
use lgk_core::pde::{PdeState64, DEFAULT_CFL};
use lgk_core::rng::stream;
use lgk_core::theta;
use lgk_core::velocity::presets::{model_one, root_two};
use num_rational::BigRational;
use proptest::prelude::*;
use rand::Rng;

fn random_config(vs_len: usize, d: usize, n: usize, seed: u64) -> Configuration {
    let torus = Torus::new(d, n).unwrap();
    let mut rng = stream(seed, "prop.config", 0, 0);
    let mut c = Configuration::empty(torus, vs_len);
    for x in 0..c.torus().sites() {
        for v in 0..vs_len {
            c.set(x, v, rng.random::<bool>());
        }
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn local_moves_conserve_mass_momentum(seed in any::<u64>(), moves in 1usize..200) {
        let vs = root_two();
        let mut c = random_config(vs.len(), 1, 6, seed);
        let start = c.totals_exact(&vs);
        let mut rng = stream(seed, "prop.moves", 0, 0);
        for _ in 0..moves {
            let x = rng.random_range(0..6);
            if rng.random::<bool>() {
                let y = c.torus().neighbor(x, rng.random_range(0..2));
                c.apply_swap(x, y, rng.random_range(0..vs.len())).unwrap();
            } else {
                let q = vs.collision_set()[rng.random_range(0..vs.collision_set().len())];
                let _ = c.apply_collision(x, q);
            }
        }
        prop_assert_eq!(c.totals_exact(&vs), start);
        prop_assert!(c.verify_totals());
    }

    #[test]
    fn simulated_trajectories_conserve(seed in any::<u64>()) {
        let vs = model_one(2);
        let params = SimParams::new(&vs, 4, 0.5, 0.01, vec![0.005, 0.01]).unwrap();
        let init = random_config(vs.len(), 2, 4, seed);
        let mut rng = stream(seed, "prop.sim", 0, 0);
        let traj = simulate(&params, &init, &mut rng).unwrap();
        for (_, c) in &traj.snapshots {
            prop_assert_eq!(c.totals_exact(&vs), init.totals_exact(&vs));
        }
    }

    #[test]
    fn snapshot_round_trip(seed in any::<u64>(), n in 2usize..9) {
        let vs = root_two();
        let c = random_config(vs.len(), 1, n, seed);
        let mut buf = Vec::new();
        c.write_snapshot(&vs, &mut buf).unwrap();
        let (back, labels) = read_snapshot(buf.as_slice()).unwrap();
        prop_assert_eq!(back, c);
        prop_assert_eq!(labels.len(), vs.len());
    }

    #[test]
    fn k_moves_conserve_totals(k in prop::collection::vec(0u32..=5, 4), ch in 0usize..64) {
        let vs = root_two();
        let q = vs.collision_set()[ch % vs.collision_set().len()];
        let (next, p) = k_move(&k, q, 5);
        let before: Vec<u64> = k.iter().map(|&x| x as u64).collect();
        let after: Vec<u64> = next.iter().map(|&x| x as u64).collect();
        prop_assert_eq!(exact_mass_momentum(&vs, &before), exact_mass_momentum(&vs, &after));
        let expect = k[q.v] as u64 * k[q.w] as u64 * (5 - k[q.v_out] as u64) * (5 - k[q.w_out] as u64);
        prop_assert_eq!(p, expect);
        prop_assert_eq!(p == 0, next == k);
    }

    #[test]
    fn h_alpha_is_positive_inside_domain(l in 2usize..12, alpha in -3i64..=3, k in 0i64..12) {
        let li = l as i64;
        let inside = k < li && k - alpha + 1 >= 0 && k - alpha < li && li - k > 0 && li - k + alpha > 0;
        match h_alpha(l, alpha, k) {
            Ok(h) => {
                prop_assert!(inside);
                let num = (k + 1) * (k - alpha + 1);
                let den = (li - k) * (li - k + alpha);
                prop_assert_eq!(h * BigRational::from_integer(den.into()), BigRational::from_integer(num.into()));
            }
            Err(_) => prop_assert!(!inside),
        }
    }

    #[test]
    fn theta_symmetry(x in -30.0f64..30.0) {
        prop_assert!((theta(x) + theta(-x) - 1.0).abs() < 1e-15);
        prop_assert!(theta(x) > 0.0 && theta(x) < 1.0);
    }

    #[test]
    fn lambda_of_p_inverts_big_p(l0 in -0.8f64..0.8, l1 in -0.8f64..0.8) {
        let vs = root_two();
        let p = vs.big_p(&[l0, l1]);
        let back = vs.lambda_of_p(&p).unwrap();
        prop_assert!((back[0] - l0).abs() < 1e-9 && (back[1] - l1).abs() < 1e-9);
    }

    #[test]
    fn sampling_is_reproducible(seed in any::<u64>(), r in 0u64..8) {
        let vs = root_two();
        let field = PotentialField::constant(Torus::new(1, 16).unwrap(), &[0.1, -0.2]);
        let a = sample(&field, &vs, &mut stream(seed, "prop.sample", 0, r));
        let b = sample(&field, &vs, &mut stream(seed, "prop.sample", 0, r));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec(
        (3usize..512, 0.0f64..1.0, "[a-z_]{1,8}", -1e3f64..1e3, 1e-9f64..1.0, -1e3f64..1e3), 0..20)
    ) {
        let rows: Vec<ComparisonRow> =
            rows.into_iter().map(|(n, t, id, m, se, p)| ComparisonRow::new(n, t, id, m, se, p)).collect();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        prop_assert_eq!(parse_csv(std::str::from_utf8(&buf).unwrap()).unwrap(), rows);
    }

    #[test]
    fn stderr_is_shift_invariant(xs in prop::collection::vec(-10.0f64..10.0, 2..40), shift in -5.0f64..5.0) {
        let (m, se) = mean_and_stderr(&xs);
        let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let (m2, se2) = mean_and_stderr(&shifted);
        prop_assert!((m2 - m - shift).abs() < 1e-9);
        prop_assert!((se2 - se).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn pde_conserves_means(a in -0.5f64..0.5, b in -0.5f64..0.5, c in -0.5f64..0.5) {
        let vs = model_one(1);
        let phi = FourierField::new(vec![
            FourierMode { k: vec![0], re: vec![c, 0.1], im: vec![0.0, 0.0] },
            FourierMode { k: vec![1], re: vec![a, b], im: vec![b, a] },
        ]);
        let mut s = PdeState64::new(&vs, 32, &phi).unwrap();
        let before = [s.mean(0), s.mean(1)];
        s.advance(0.02, DEFAULT_CFL).unwrap();
        prop_assert!((s.mean(0) - before[0]).abs() < 1e-12);
        prop_assert!((s.mean(1) - before[1]).abs() < 1e-12);
    }
}
