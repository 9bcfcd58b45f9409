use std::f64::consts::PI;

use besovlab::besov::{besov_norm, BesovParams};
use besovlab::decay::fit_rate;
use besovlab::linalg::{expm_eigen, matrix_exponential, relative_error, CMatrix};
use besovlab::littlewood_paley::{BlockTables, DyadicCutoffs};
use besovlab::solver::{evolve_linear, weighted_block_energy};
use besovlab::spectral::fractional_derivative;
use besovlab::systems::{builtin, BUILTIN_MODELS};
use besovlab::{forward_transform, inverse_transform, GridSpec, RealField, SpectralField};
use num_complex::Complex64;
use proptest::prelude::*;

fn real_field(n: usize, len: f64, nc: usize) -> impl Strategy<Value = RealField> {
    prop::collection::vec(-10.0f64..10.0, n * nc)
        .prop_map(move |v| RealField::new(GridSpec::new(n, len, nc).unwrap(), v).unwrap())
}

fn smooth_field(n: usize, len: f64, nc: usize) -> impl Strategy<Value = SpectralField> {
    real_field(n, len, nc).prop_map(|f| {
        let g = forward_transform(&f);
        g.apply_real(|xi| (-(xi * xi) / 4.0).exp())
    })
}

fn complex_matrix(n: usize, scale: f64) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-scale..scale, -scale..scale), n * n)
        .prop_map(move |v| CMatrix::from_iterator(n, n, v.into_iter().map(|(a, b)| Complex64::new(a, b))))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transform_round_trip(f in real_field(64, 10.0, 2)) {
        let back = inverse_transform(&forward_transform(&f)).unwrap();
        for (a, b) in f.samples().iter().zip(back.samples()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn parseval(f in real_field(128, 7.0, 1)) {
        let g = forward_transform(&f);
        prop_assert!((f.l2_norm() - g.l2_norm()).abs() <= 1e-12 * f.l2_norm().max(1.0));
    }

    #[test]
    fn blocks_reassemble_the_field(f in real_field(256, 50.0, 1)) {
        let g = forward_transform(&f);
        let tables = BlockTables::new(*g.grid(), DyadicCutoffs::default());
        let mut sum = SpectralField::zeros(*g.grid());
        for j in tables.inhomogeneous_indices() {
            sum = sum.axpby(1.0, &tables.block(&g, j, false).unwrap(), 1.0).unwrap();
        }
        prop_assert!(sum.axpby(1.0, &g, -1.0).unwrap().l2_norm() <= 1e-12 * g.l2_norm().max(1.0));
    }

    #[test]
    fn besov_norm_is_a_norm(f in smooth_field(256, 40.0, 1), g in smooth_field(256, 40.0, 1),
                            lambda in -5.0f64..5.0, s in -1.0f64..2.0) {
        let tables = BlockTables::new(*f.grid(), DyadicCutoffs::default());
        for r in [1.0, 2.0, f64::INFINITY] {
            let p = BesovParams::inhomogeneous(s, 2.0, r).unwrap();
            let nf = besov_norm(&f, &p, &tables).unwrap().value;
            let ng = besov_norm(&g, &p, &tables).unwrap().value;
            let nl = besov_norm(&f.scale(lambda), &p, &tables).unwrap().value;
            let ns = besov_norm(&f.axpby(1.0, &g, 1.0).unwrap(), &p, &tables).unwrap().value;
            prop_assert!((nl - lambda.abs() * nf).abs() <= 1e-10 * nf.max(1e-300) * (1.0 + lambda.abs()));
            prop_assert!(ns <= (nf + ng) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn fractional_derivatives_compose(f in smooth_field(128, 30.0, 1), a in 0.0f64..2.0, b in 0.0f64..2.0) {
        let ab = fractional_derivative(&fractional_derivative(&f, a).unwrap(), b).unwrap();
        let direct = fractional_derivative(&f, a + b).unwrap();
        prop_assert!(ab.axpby(1.0, &direct, -1.0).unwrap().l2_norm() <= 1e-10 * direct.l2_norm().max(1e-300));
    }

    #[test]
    fn expm_matches_eigen_oracle(m in complex_matrix(4, 3.0), t in 0.0f64..4.0) {
        let e = matrix_exponential(&m, t).unwrap();
        if let Some(oracle) = expm_eigen(&m, t).unwrap() {
            prop_assert!(relative_error(&e, &oracle) <= 1e-7);
        }
        let inv = matrix_exponential(&m, -t).unwrap();
        let id = CMatrix::identity(4, 4);
        prop_assert!(relative_error(&(&e * &inv), &id) <= 1e-8 * (1.0 + e.norm() * inv.norm()));
    }

    #[test]
    fn symbol_semigroup(xi in -50.0f64..50.0, t in 0.0f64..20.0, s in 0.0f64..20.0, k in 0usize..3) {
        let spec = builtin(BUILTIN_MODELS[k]).unwrap();
        let phi = spec.symbol(xi);
        let a = matrix_exponential(&phi, t + s).unwrap();
        let b = matrix_exponential(&phi, t).unwrap() * matrix_exponential(&phi, s).unwrap();
        prop_assert!((&a - &b).norm() <= 1e-9 * (1.0 + a.norm()));
    }

    #[test]
    fn symbol_is_conjugate_symmetric(xi in -100.0f64..100.0, k in 0usize..3) {
        let spec = builtin(BUILTIN_MODELS[k]).unwrap();
        let d = spec.symbol(-xi) - spec.symbol(xi).map(|z| z.conj());
        prop_assert!(d.norm() == 0.0);
    }

    #[test]
    fn linear_evolution_keeps_hermitian_and_dissipates(f in smooth_field(128, 60.0, 4), k in 0usize..3,
                                                       t in 0.1f64..5.0) {
        let spec = builtin(BUILTIN_MODELS[k]).unwrap();
        let nc = spec.dim_state();
        let grid = GridSpec::new(128, 60.0, nc).unwrap();
        let z0 = SpectralField::new(grid, f.coefficients()[..128 * nc].to_vec()).unwrap();
        let mut z0 = z0;
        z0.symmetrize();
        let traj = evolve_linear(&spec, &z0, &[t, 2.0 * t]).unwrap();
        let tables = BlockTables::new(grid, DyadicCutoffs::default());
        for z in &traj.snapshots {
            prop_assert!(z.hermitian_defect() <= 1e-12 * z.max_abs().max(1.0));
        }
        for j in tables.range().iter() {
            let e: Vec<f64> = traj.snapshots.iter().map(|z| weighted_block_energy(&spec, z, j, &tables).unwrap()).collect();
            prop_assert!(e[1] <= e[0] * (1.0 + 1e-10) + 1e-14);
            prop_assert!(e[2] <= e[1] * (1.0 + 1e-10) + 1e-14, "model {} j {} energies {:?} t {}", k, j, e, t);
        }
    }

    #[test]
    fn rate_fit_recovers_power_laws(p in -3.0f64..0.5, c in 0.1f64..10.0) {
        let series: Vec<(f64, f64)> = (0..20).map(|k| {
            let t = 10.0 * 1.3f64.powi(k);
            (t, c * (1.0 + t).powf(p))
        }).collect();
        let fit = fit_rate(&series, (0.0, 1e6)).unwrap();
        prop_assert!((fit.slope - p).abs() <= 1e-9);
    }

    #[test]
    fn tones_move_at_block_scale(k in 1i64..200) {
        let grid = GridSpec::new(1024, 2.0 * PI * 20.0, 1).unwrap();
        let tables = BlockTables::new(grid, DyadicCutoffs::default());
        let mut f = SpectralField::zeros(grid);
        let i = grid.index_of(k);
        f.mode_mut(i)[0] = Complex64::new(1.0, 0.0);
        f.mode_mut(grid.partner(i))[0] = Complex64::new(1.0, 0.0);
        let xi = grid.xi(i);
        for j in tables.range().iter() {
            let b = tables.block(&f, j, true).unwrap().l2_norm();
            let support = xi >= 0.75 * 2f64.powi(j) && xi <= (8.0 / 3.0) * 2f64.powi(j);
            if !support {
                prop_assert!(b <= 1e-13);
            }
        }
    }
}
