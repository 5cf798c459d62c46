mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rigidity_core::graph::laplacian;
use rigidity_core::rigidity::{
    algebraic_connectivity, null_basis, rigidity_function, rigidity_index, rigidity_laplacian,
    rigidity_laplacian_matrix, rigidity_matrix, rigidity_rank,
};
use rigidity_core::{Dim, Framework};

use common::{framework, laman_framework, proximity_framework};

fn dims() -> impl Strategy<Value = Dim> {
    prop_oneof![Just(Dim::Planar), Just(Dim::Spatial)]
}

fn any_framework() -> impl Strategy<Value = Framework> {
    dims().prop_flat_map(|d| framework(d, 2..9))
}

fn perturbed(f: &Framework, node: usize, axis: usize, h: f64) -> Framework {
    let mut pos = f.positions().to_vec();
    pos[node][axis] += h;
    f.with_positions(pos).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rigidity_matrix_is_the_jacobian(f in any_framework()) {
        prop_assume!(f.m() > 0);
        let r = rigidity_matrix(&f);
        let h = 1e-6 * 10.0;
        let d = f.dim().d();
        for i in 0..f.n() {
            for a in 0..d {
                let up = rigidity_function(&perturbed(&f, i, a, h));
                let dn = rigidity_function(&perturbed(&f, i, a, -h));
                for e in 0..f.m() {
                    let fd = (up[e] - dn[e]) / (2.0 * h);
                    let an = r[(e, i * d + a)];
                    prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "entry ({e}, {i}.{a}): {an} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn laplacian_matches_product_form(f in any_framework()) {
        let model = rigidity_laplacian(&f);
        let w = DMatrix::from_diagonal(&DVector::from_column_slice(f.graph().weights()));
        let product = model.rigidity_matrix.transpose() * &w * &model.rigidity_matrix;
        let factored = model.edge_matrix.transpose() * &model.lifted_incidence;
        prop_assert!((&product - &model.rigidity_laplacian).amax() <= 1e-10 * product.amax().max(1.0));
        prop_assert!((factored - &model.rigidity_matrix).amax() <= 1e-12);
        prop_assert_eq!(model.laplacian, laplacian(f.graph()));
    }

    #[test]
    fn laplacian_and_rigidity_matrix_share_a_kernel(f in any_framework()) {
        let r = rigidity_matrix(&f);
        if f.m() == 0 {
            prop_assert_eq!(rigidity_rank(&f), 0);
            prop_assert_eq!(rigidity_laplacian_matrix(&f).amax(), 0.0);
            return Ok(());
        }
        let sv = r.clone().svd(false, false).singular_values;
        let top = sv.iter().copied().fold(0.0, f64::max);
        // Skip configurations whose rank is ambiguous at any tolerance.
        prop_assume!(sv.iter().all(|&s| s <= 1e-9 * top || s >= 1e-3 * top));
        let rank_r = rigidity_rank(&f);
        let e = rigidity_laplacian_matrix(&f);
        let ev = e.symmetric_eigenvalues();
        let emax = ev.iter().copied().fold(0.0, f64::max);
        let null_e = ev.iter().filter(|&&x| x <= 1e-9 * emax.max(f64::MIN_POSITIVE)).count();
        prop_assert_eq!(null_e, r.ncols() - rank_r);
    }

    #[test]
    fn quadratic_form_is_the_projected_edge_sum(
        f in any_framework(),
        us in prop::collection::vec(-1.0..1.0f64, 24),
    ) {
        let d = f.dim().d();
        let u = DVector::from_column_slice(&us[..d * f.n()]);
        prop_assume!(u.norm() > 1e-3);
        let u = u.normalize();
        let quad = u.dot(&(rigidity_laplacian_matrix(&f) * &u));
        let mut sum = 0.0;
        for (k, e) in f.edges().iter().enumerate() {
            let z = f.edge_vector(k);
            let proj: f64 = (0..d).map(|a| z[a] * (u[e.sink * d + a] - u[e.source * d + a])).sum();
            sum += f.graph().weights()[k] * proj * proj;
        }
        prop_assert!((quad - sum).abs() <= 1e-10 * sum.abs().max(1e-300) + 1e-12);
    }

    #[test]
    fn orientation_flips_leave_laplacian_unchanged(
        f in any_framework(),
        flips in prop::collection::vec(any::<bool>(), 36),
    ) {
        let flipped = f.reoriented(&flips[..f.m()]);
        let diff = (rigidity_laplacian_matrix(&f) - rigidity_laplacian_matrix(&flipped)).amax();
        prop_assert!(diff <= 1e-14);
    }

    #[test]
    fn null_vectors_are_in_the_kernel(f in any_framework()) {
        let e = rigidity_laplacian_matrix(&f);
        let scale = e.amax().max(1.0);
        let basis = null_basis(&f);
        prop_assert_eq!(basis.vectors.len(), f.dim().trivial_motions());
        for v in &basis.vectors {
            prop_assert!((&e * v).amax() <= 1e-10 * scale * v.amax().max(1.0));
        }
    }

    #[test]
    fn positive_index_implies_connectivity(f in prop_oneof![any_framework(), proximity_framework(2..9)]) {
        prop_assume!(f.n() > f.dim().d());
        let l4 = rigidity_index(&f).unwrap().value;
        if l4 > 1e-6 {
            prop_assert!(algebraic_connectivity(&f).unwrap() > 1e-9);
        }
    }

    /// A zero edge vector removes one independent row from `R`; for a
    /// minimally rigid graph that is enough to lose rigidity. Over-braced
    /// graphs can stay rigid with a coincident pair.
    #[test]
    fn coincident_pair_breaks_minimally_rigid_frameworks(
        f in laman_framework(3..9),
        pick in any::<prop::sample::Index>(),
    ) {
        let e = f.edges()[pick.index(f.m())];
        let mut pos = f.positions().to_vec();
        pos[e.sink] = pos[e.source];
        let g = f.with_positions(pos).unwrap();
        prop_assert!(rigidity_index(&g).unwrap().value < 1e-9);
    }

    #[test]
    fn translation_leaves_spectrum_unchanged(
        f in proximity_framework(4..8),
        shift in (-50.0..50.0f64, -50.0..50.0f64),
    ) {
        let pos = f.positions().iter().map(|p| p + common::p2(shift.0, shift.1)).collect();
        let g = f.with_positions(pos).unwrap();
        let a = rigidity_index(&f).unwrap().spectrum.eigenvalues;
        let b = rigidity_index(&g).unwrap().spectrum.eigenvalues;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9 * a.last().unwrap().max(1.0));
        }
    }
}

#[test]
fn over_braced_framework_stays_rigid_with_a_coincident_pair() {
    use common::p2;
    let pos = vec![p2(0.0, 0.0), p2(0.0, 0.0), p2(1.0, 0.0), p2(0.0, 1.0)];
    let f = Framework::unit(
        Dim::Planar,
        pos,
        &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
    )
    .unwrap();
    assert!((rigidity_index(&f).unwrap().value - 1.0).abs() < 1e-12);
}
