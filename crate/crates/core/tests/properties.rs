use cfqp_core::linalg::Matrix;
use cfqp_core::model_io::{deserialize, serialize};
use cfqp_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    problem: MpQpProblem,
    rng: ChaCha8Rng,
}

fn random_case(seed: u64, n: usize, m1: usize, m2: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = |rng: &mut ChaCha8Rng, r: usize, c: usize| -> Vec<Vec<f64>> {
        (0..r)
            .map(|_| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    };
    let l = g(&mut rng, n, n);
    let q = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..n).map(|k| l[i][k] * l[j][k]).sum::<f64>() + if i == j { 0.5 } else { 0.0 }
                })
                .collect()
        })
        .collect();
    let c = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let a_e = g(&mut rng, m1, n);
    let b_e = (0..m1).map(|_| rng.random_range(-0.5..0.5)).collect();
    let a_c = g(&mut rng, m2, n);
    let b_c = (0..m2).map(|_| rng.random_range(-1.5..-0.1)).collect();
    let problem = MpQpProblem::new(ProblemData {
        q,
        c,
        c0: 0.0,
        a_e,
        b_e,
        a_c,
        b_c,
        groups: vec![],
    })
    .unwrap();
    Case { problem, rng }
}

impl Case {
    fn theta(&mut self, scale: f64) -> ParameterPoint {
        let d = self.problem.d();
        let v = (0..d)
            .map(|_| self.rng.random_range(-scale..scale))
            .collect();
        ParameterPoint::from_stacked(&self.problem, v).unwrap()
    }

    fn active_set(&mut self) -> ActiveSet {
        let p = &self.problem;
        let cap = p.n() - p.m1();
        let mut rows: Vec<usize> = (1..=p.m2()).collect();
        for i in (1..rows.len()).rev() {
            rows.swap(i, self.rng.random_range(0..=i));
        }
        let k = self.rng.random_range(0..=cap.min(p.m2()));
        ActiveSet::new(rows[..k].to_vec(), p.m2()).unwrap()
    }
}

fn dims() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 2usize..6)
        .prop_flat_map(|(s, n)| (Just(s), Just(n), 0..2usize.min(n), 0usize..7))
}

fn identity_error(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    let prod = a.mul_mat(b);
    let mut worst = 0.0f64;
    for i in 0..prod.rows() {
        for j in 0..prod.cols() {
            let e = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - e).abs());
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn active_jacobian_is_symmetric_and_invertible((seed, n, m1, m2) in dims()) {
        let mut case = random_case(seed, n, m1, m2);
        let set = case.active_set();
        let j: Matrix<f64> = solve::assemble_active_jacobian(&case.problem, &set);
        prop_assert!(j.is_symmetric(0.0));
        let f = factorize(&j).unwrap();
        prop_assert!(identity_error(&j, &f.inverse()) <= 1e-10);
    }

    #[test]
    fn active_set_solution_is_stationary((seed, n, m1, m2) in dims()) {
        let mut case = random_case(seed, n, m1, m2);
        let set = case.active_set();
        let theta = case.theta(1.0);
        let p = &case.problem;
        let s = solve_active_set::<f64>(p, &set, &theta).unwrap();
        let g = lagrangian_gradients(p, &s, &theta);
        let scale = 1.0 + s.x.iter().chain(&s.lambda).chain(&s.mu).fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(g.dl_dx.iter().all(|v| v.abs() <= 1e-10 * scale));
        prop_assert!(g.dl_dlambda.iter().all(|v| v.abs() <= 1e-10 * scale));
        for k in set.rows() {
            prop_assert!(g.dl_dmu[k].abs() <= 1e-10 * scale);
        }
        for k in (0..p.m2()).filter(|&k| !set.contains_row(k)) {
            prop_assert_eq!(s.mu[k], 0.0);
        }
    }

    #[test]
    fn region_map_is_linear_and_padded((seed, n, m1, m2) in dims()) {
        let mut case = random_case(seed, n, m1, m2);
        let set = case.active_set();
        let (a, b) = (case.theta(1.0), case.theta(1.0));
        let p = &case.problem;
        let slopes = region_slopes::<f64>(p, &set).unwrap();
        for k in (0..p.m2()).filter(|&k| !set.contains_row(k)) {
            prop_assert!((0..p.d()).all(|c| slopes.grad_mu[(k, c)] == 0.0));
        }
        for k in (0..p.m2()).filter(|&k| !set.contains_row(k)) {
            let col = p.ineq_column(k);
            prop_assert!((0..p.n()).all(|r| slopes.grad_x[(r, col)] == 0.0));
        }
        for w in [0.0, 0.3, 1.0] {
            let t = a.lerp(&b, w);
            let direct = solve_active_set::<f64>(p, &set, &t).unwrap();
            let (x, lambda, mu) = slopes.evaluate(&t.model_input::<f64>(p));
            let close = |u: &[f64], v: &[f64]| u.iter().zip(v).all(|(p, q)| (p - q).abs() <= 1e-9 * (1.0 + q.abs()));
            prop_assert!(close(&x, &direct.x) && close(&lambda, &direct.lambda) && close(&mu, &direct.mu));
        }
    }

    #[test]
    fn oracle_solution_satisfies_kkt((seed, n, m1, m2) in dims()) {
        let mut case = random_case(seed, n, m1, m2);
        let theta = case.theta(0.5);
        let p = &case.problem;
        let o = match brute_force_solve(p, &theta) {
            Ok(o) => o,
            Err(Error::Infeasible) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        prop_assert!(o.solution.mu.iter().all(|&m| m >= 0.0));
        let r = &o.report;
        let scale = 1.0 + o.solution.mu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(r.kkt2_ineq.iter().all(|&v| v <= 1e-8 * scale));
        prop_assert!(r.kkt4.iter().all(|&v| v <= 1e-14 * scale * scale), "{:?}", r.kkt4);
        for k in 0..p.m2() {
            if !o.active_set.contains_row(k) {
                prop_assert_eq!(o.solution.mu[k], 0.0);
            }
        }
    }

    #[test]
    fn oracle_beats_every_feasible_active_set((seed, n, m1, m2) in dims()) {
        let mut case = random_case(seed, n, m1, m2);
        let theta = case.theta(0.5);
        let p = case.problem.clone();
        let p = &p;
        let Ok(o) = brute_force_solve(p, &theta) else { return Ok(()) };
        for _ in 0..8 {
            let set = case.active_set();
            let s = solve_active_set::<f64>(p, &set, &theta).unwrap();
            let g = lagrangian_gradients(p, &s, &theta);
            if g.dl_dmu.iter().all(|&v| v <= 1e-9) {
                prop_assert!(o.solution.objective <= s.objective + 1e-9 * (1.0 + s.objective.abs()));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn serialized_models_round_trip_bit_exact((seed, n, m1, m2) in dims(), expansions in 0usize..4) {
        let mut case = random_case(seed, n, m1, m2);
        let t0 = case.theta(1.0);
        let p = case.problem.clone();
        let mut model = init_model::<f64>(&p, &ActiveSet::empty(), &t0).unwrap();
        for _ in 0..expansions {
            let parent = case.rng.random_range(0..model.len());
            let set = case.active_set();
            let probe = case.theta(1.0);
            let _ = model.expand(&p, parent, &set, &probe);
        }
        let back: ClosedFormModel<f64> = deserialize(&serialize(&model), &p).unwrap();
        prop_assert_eq!(&back, &model);
        let single: ClosedFormModel<f32> = model.cast();
        let back32: ClosedFormModel<f32> = deserialize(&serialize(&single), &p).unwrap();
        prop_assert_eq!(&back32, &single);
        let t = case.theta(1.0);
        let (a, b) = (back.forward(&t), model.forward(&t));
        prop_assert!(a.x.iter().zip(&b.x).all(|(u, v)| u.to_bits() == v.to_bits()));
        prop_assert!(a.mu.iter().zip(&b.mu).all(|(u, v)| u.to_bits() == v.to_bits()));

        let bytes = serialize(&model);
        let cut = case.rng.random_range(0..bytes.len());
        prop_assert!(deserialize::<f64>(&bytes[..cut], &p).is_err());
        let mut c = p.c().to_vec();
        c[0] += 1.0;
        let other = MpQpProblem::new(ProblemData {
            q: p.q().to_rows(),
            c,
            c0: p.c0(),
            a_e: p.a_e().to_rows(),
            b_e: p.b_e().to_vec(),
            a_c: p.a_c().to_rows(),
            b_c: p.b_c().to_vec(),
            groups: vec![],
        })
        .unwrap();
        let is_digest_mismatch = matches!(deserialize::<f64>(&bytes, &other), Err(Error::DigestMismatch { .. }));
        prop_assert!(is_digest_mismatch);
    }
}
