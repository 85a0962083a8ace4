//! Property tests of the invariants each module must keep.

use proptest::prelude::*;
use sbpcht::assembly::{BlockSpec, CoupledSystem, GeometrySpec, SatParams, Subdomain};
use sbpcht::geometry::Mapping;
use sbpcht::linalg::{lu_factor, scaled_residual, weighted_norm_sq, DenseMatrix, SparseMatrix};
use sbpcht::physics::{Domain, ExactSolution, LinearSolution, ManufacturedSolution, PdeParams};
use sbpcht::sbp::{build_sbp_1d, min_nodes, Face};
use sbpcht::spectral::{build_iteration_matrix, propagate};
use sbpcht::timeloop::{
    extrapolate, initial_state, run, select_parameters, solution_error, CoupledState, Scheme, Stepper, TimeConfig,
};

fn boxes(width_left: f64, width_right: f64, height: f64) -> ([f64; 2], [f64; 2], [f64; 2], [f64; 2]) {
    ([-width_left, 0.0], [0.0, height], [0.0, 0.0], [width_right, height])
}

fn geometry(degree: usize, n: usize, perturbed: bool, dims: (f64, f64, f64)) -> GeometrySpec {
    let (l0, l1, r0, r1) = boxes(dims.0, dims.1, dims.2);
    let map = |lo: [f64; 2], hi: [f64; 2]| {
        if perturbed {
            Mapping::perturbed(lo, hi).unwrap()
        } else {
            Mapping::affine(&lo, &hi).unwrap()
        }
    };
    GeometrySpec {
        degree,
        left: BlockSpec { map: map(l0, l1), counts: vec![n, n] },
        right: BlockSpec { map: map(r0, r1), counts: vec![n, n] },
    }
}

fn degree_and_nodes() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=3).prop_flat_map(|p| (Just(p), min_nodes(p).unwrap()..min_nodes(p).unwrap() + 12))
}

fn random_sparse(n: usize) -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    prop::collection::vec((0..n, 0..n, -1.0f64..1.0), 0..3 * n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sparse_matvec_matches_dense(entries in random_sparse(7), x in prop::collection::vec(-1.0f64..1.0, 7)) {
        let a = SparseMatrix::from_triplets(7, 7, &entries).unwrap();
        let dense = a.to_dense();
        let reference: Vec<f64> = (0..7).map(|i| (0..7).map(|j| dense.get(i, j) * x[j]).sum()).collect();
        for (y, z) in [a.matvec(&x), a.matvec_accurate(&x)].iter().flat_map(|v| v.iter().zip(&reference)) {
            prop_assert!((y - z).abs() <= 1e-14);
        }
        let att = a.transpose().transpose();
        prop_assert_eq!(att.to_dense(), dense);
    }

    #[test]
    fn lu_solves_diagonally_dominant_systems(entries in random_sparse(9), b in prop::collection::vec(-1.0f64..1.0, 9)) {
        let off = SparseMatrix::from_triplets(9, 9, &entries).unwrap();
        let a = off.add(&SparseMatrix::identity(9).scaled(1.0 + 3.0 * 9.0));
        let x = lu_factor(&a).unwrap().solve(&b);
        prop_assert!(scaled_residual(&a, &x, &b) <= 1e-13);
    }

    #[test]
    fn dense_matmul_is_associative_with_matvec(seed in prop::collection::vec(-1.0f64..1.0, 16), x in prop::collection::vec(-1.0f64..1.0, 4)) {
        let a = DenseMatrix::from_row_major(4, 4, seed.clone()).unwrap();
        let b = a.transpose();
        let left = a.matmul(&b).matvec(&x);
        let right = a.matvec(&b.matvec(&x));
        for (l, r) in left.iter().zip(&right) {
            prop_assert!((l - r).abs() <= 1e-13);
        }
    }

    #[test]
    fn sbp_operators_differentiate_polynomials_exactly(
        (p, n) in degree_and_nodes(),
        a in -2.0f64..0.0,
        width in 0.5f64..3.0,
        coeffs in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let op = build_sbp_1d(p, n, a, a + width).unwrap();
        let x = op.nodes();
        let poly = |t: f64| (0..=p).map(|k| coeffs[k] * t.powi(k as i32)).sum::<f64>();
        let dpoly = |t: f64| (1..=p).map(|k| k as f64 * coeffs[k] * t.powi(k as i32 - 1)).sum::<f64>();
        let u: Vec<f64> = x.iter().map(|&t| poly(t)).collect();
        let du = op.d().matvec(&u);
        for (d, &t) in du.iter().zip(x) {
            prop_assert!((d - dpoly(t)).abs() <= 1e-10 * (1.0 + dpoly(t).abs()));
        }
        prop_assert!(op.sbp_residual() <= 1e-13);
        let total: f64 = op.p().iter().sum();
        prop_assert!((total - width).abs() <= 1e-12 * width);
        prop_assert!(op.p().iter().all(|w| *w > 0.0));
    }

    #[test]
    fn affine_blocks_satisfy_metric_and_trace_bounds(
        (p, n) in degree_and_nodes(),
        width in 0.3f64..2.0,
        height in 0.3f64..2.0,
        perturbed in any::<bool>(),
        z_seed in prop::collection::vec(-1.0f64..1.0, 1..64),
    ) {
        let (lo, hi, ..) = boxes(width, 1.0, height);
        let map = if perturbed { Mapping::perturbed(lo, hi).unwrap() } else { Mapping::affine(&lo, &hi).unwrap() };
        let sub = Subdomain::new(Domain::Left, p, &BlockSpec { map, counts: vec![n, n] }).unwrap();
        prop_assert!(sub.metrics.metric_identity_residual(&sub.ops) <= 1e-11);
        let area: f64 = sub.mass.iter().sum();
        if !perturbed {
            prop_assert!((area - width * height).abs() <= 1e-12 * width * height);
        }
        let rho = sub.trace.rho;
        prop_assert!(rho > 0.0);
        let z: Vec<f64> = (0..sub.len()).map(|i| z_seed[i % z_seed.len()]).collect();
        let volume = weighted_norm_sq(&z, &sub.mass) / rho;
        for face in Face::all(2) {
            let trace: Vec<f64> = sub.ops.face_nodes(face).iter().map(|&j| z[j]).collect();
            prop_assert!(volume - weighted_norm_sq(&trace, &sub.surface_weight(face)) >= -1e-12 * volume.max(1.0));
        }
    }

    #[test]
    fn manufactured_derivatives_match_finite_differences(
        x in -1.0f64..1.2,
        y in -1.0f64..1.0,
        t in 0.0f64..2.0,
        eps in 0.2f64..2.0,
        kappa in 0.2f64..2.0,
    ) {
        let sol = ManufacturedSolution::new(&PdeParams::new(eps, kappa, vec![0.0, 1.0]));
        let h = 1e-4;
        for domain in [Domain::Left, Domain::Right] {
            let u = |a: f64, b: f64, s: f64| sol.value(domain, &[a, b], s);
            let grad = sol.gradient(domain, &[x, y], t);
            let gx = (u(x + h, y, t) - u(x - h, y, t)) / (2.0 * h);
            let gy = (u(x, y + h, t) - u(x, y - h, t)) / (2.0 * h);
            let ut = (u(x, y, t + h) - u(x, y, t - h)) / (2.0 * h);
            let lap = (u(x + h, y, t) + u(x - h, y, t) + u(x, y + h, t) + u(x, y - h, t) - 4.0 * u(x, y, t)) / (h * h);
            let scale = 1.0 + u(x, y, t).abs() * 50.0;
            prop_assert!((grad[0] - gx).abs() <= 1e-6 * scale);
            prop_assert!((grad[1] - gy).abs() <= 1e-6 * scale);
            prop_assert!((sol.time_derivative(domain, &[x, y], t) - ut).abs() <= 1e-6 * scale);
            prop_assert!((sol.laplacian(domain, &[x, y], t) - lap).abs() <= 1e-3 * scale);
        }
    }

    #[test]
    fn second_order_extrapolation_is_exact_for_linear_histories(
        a in prop::collection::vec(-1.0f64..1.0, 1..10),
        slope in -1.0f64..1.0,
    ) {
        let previous: Vec<f64> = a.iter().map(|v| v - slope).collect();
        let guess = extrapolate(&a, &previous, 2, 3);
        for (g, v) in guess.iter().zip(&a) {
            prop_assert!((g - (v + slope)).abs() <= 1e-14);
        }
        prop_assert_eq!(extrapolate(&a, &previous, 2, 0), a.clone());
        prop_assert_eq!(extrapolate(&a, &previous, 1, 3), a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn every_scheme_preserves_a_steady_linear_field(
        p in 1usize..=3,
        perturbed in any::<bool>(),
        diffusivity in 0.5f64..2.0,
        advection in -1.0f64..1.0,
        slope in prop::collection::vec(-1.0f64..1.0, 2),
        dt in 1e-3f64..1e-1,
        gamma1 in 5.0f64..200.0,
    ) {
        let advection = if perturbed { vec![0.0, 0.0] } else { vec![0.0, advection] };
        let params = PdeParams::new(diffusivity, diffusivity, advection);
        let n = min_nodes(p).unwrap() + 2;
        let system = CoupledSystem::build(&geometry(p, n, perturbed, (1.0, 1.2, 2.0)), params, SatParams { gamma1, gamma2_left: 0.0, gamma2_right: 0.0 }).unwrap();
        let sol = LinearSolution { offset: 0.3, rate: 0.0, slope };
        for scheme in Scheme::ALL {
            let cfg = TimeConfig::new(dt, 5, scheme, 1);
            let out = run(&system, &cfg, initial_state(&system, Some(&sol)), Some(&sol), None).unwrap();
            prop_assert!(out.error.unwrap() <= 1e-10, "{} error {:e}", scheme, out.error.unwrap());
        }
    }

    #[test]
    fn monolithic_schemes_reproduce_fields_linear_in_time(
        p in 1usize..=3,
        perturbed in any::<bool>(),
        rate in -1.0f64..1.0,
        slope in prop::collection::vec(-1.0f64..1.0, 2),
        dt in 1e-3f64..1e-1,
    ) {
        let advection = if perturbed { vec![0.0, 0.0] } else { vec![0.0, 1.0] };
        let params = PdeParams::new(1.0, 1.0, advection);
        let n = min_nodes(p).unwrap() + 2;
        let system = CoupledSystem::build(&geometry(p, n, perturbed, (1.0, 1.2, 2.0)), params, SatParams { gamma1: 50.0, gamma2_left: 0.0, gamma2_right: 0.0 }).unwrap();
        let sol = LinearSolution { offset: -0.2, rate, slope };
        for scheme in [Scheme::MonolithicBe, Scheme::MonolithicBefe] {
            let cfg = TimeConfig::new(dt, 6, scheme, 1);
            let out = run(&system, &cfg, initial_state(&system, Some(&sol)), Some(&sol), None).unwrap();
            let err = solution_error(&system, &sol, &out.state.w, &out.state.v, out.state.time);
            prop_assert!(err <= 1e-10, "{} error {:e}", scheme, err);
        }
    }

    #[test]
    fn homogeneous_energy_does_not_grow_under_selected_parameters(
        p in 1usize..=2,
        gamma2 in 0.0f64..0.2,
        data in prop::collection::vec(-1.0f64..1.0, 1..50),
    ) {
        let params = PdeParams::default();
        let n = min_nodes(p).unwrap() + 3;
        let probe = CoupledSystem::build(&geometry(p, n, true, (1.0, 1.2, 2.0)), params.clone(), SatParams { gamma1: 1.0, gamma2_left: 0.0, gamma2_right: 0.0 }).unwrap();
        let sel = select_parameters(&probe.left.trace, &probe.right.trace, &params, 1.0, gamma2);
        let system = probe.with_sat(sel.sat).unwrap();
        let w: Vec<f64> = (0..system.left.len()).map(|i| data[i % data.len()]).collect();
        let v: Vec<f64> = (0..system.right.len()).map(|i| data[(i * 7) % data.len()]).collect();
        let cfg = TimeConfig::new(sel.dt_max, 40, Scheme::BeExt1, 1);
        let out = run(&system, &cfg, CoupledState::new(w, v), None, None).unwrap();
        for pair in out.ledger.records.windows(2) {
            prop_assert!(pair[1].total <= pair[0].total * (1.0 + 1e-12) + 1e-14);
        }
    }

    #[test]
    fn iteration_matrix_reproduces_the_stepper(
        gamma1 in 1.0f64..500.0,
        dt in 1e-4f64..1e-1,
        data in prop::collection::vec(-1.0f64..1.0, 1..40),
    ) {
        let params = PdeParams::default();
        let system = CoupledSystem::build(&geometry(1, 6, true, (1.0, 1.2, 2.0)), params, SatParams { gamma1, gamma2_left: 0.0, gamma2_right: 0.0 }).unwrap();
        let w0: Vec<f64> = (0..system.left.len()).map(|i| data[i % data.len()]).collect();
        let v0: Vec<f64> = (0..system.right.len()).map(|i| data[(3 * i + 1) % data.len()]).collect();
        let steps = 8;
        let stepper = Stepper::new(&system, TimeConfig::new(dt, steps, Scheme::BeExt2, 1)).unwrap();
        let mut state = CoupledState::new(w0.clone(), v0.clone());
        for _ in 0..steps {
            stepper.step(&mut state, None).unwrap();
        }
        let it = build_iteration_matrix(&system.blocks, dt).unwrap();
        let (w, v) = propagate(&it, &w0, &v0, steps);
        let scale = state.w.iter().chain(&state.v).fold(1.0f64, |m, x| m.max(x.abs()));
        for (a, b) in w.iter().zip(&state.w).chain(v.iter().zip(&state.v)) {
            prop_assert!((a - b).abs() <= 1e-10 * scale);
        }
    }
}
