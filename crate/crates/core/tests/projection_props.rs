use nalgebra::DMatrix;
use proptest::prelude::*;
use trichotomy_core::projections::{
    check_range_orthogonality, check_st_identities, four_to_tri, make_s, make_t, reconstruct_p3, tri_to_four,
    tri_to_two, two_to_tri, validate_di, validate_orthogonal_pair, validate_quad, validate_tri,
};
use trichotomy_core::{DiProjectionFamily, ProjectionFamily, TriProjectionFamily};

/// Projections onto blocks of columns of `v` along the remaining columns.
fn split(v: &DMatrix<f64>, sizes: [usize; 3]) -> [DMatrix<f64>; 3] {
    let d = v.nrows();
    let inv = v.clone().try_inverse().unwrap();
    let mut start = 0;
    sizes.map(|s| {
        let mut e = DMatrix::zeros(d, d);
        for i in start..start + s {
            e[(i, i)] = 1.0;
        }
        start += s;
        v * e * &inv
    })
}

fn well_conditioned(d: usize, entries: Vec<f64>) -> Option<DMatrix<f64>> {
    let v = DMatrix::from_row_slice(d, d, &entries) + DMatrix::identity(d, d) * 2.0;
    let sv = v.singular_values();
    let (max, min) = (sv.max(), sv.min());
    (min > 0.3 && max / min < 20.0).then_some(v)
}

fn family_strategy(orthogonal: bool) -> impl Strategy<Value = TriProjectionFamily> {
    (2usize..=5)
        .prop_flat_map(|d| (Just(d), 0..=d, 0..=d, 1usize..5))
        .prop_flat_map(move |(d, s1, s2, len)| {
            let s2 = s2.min(d - s1);
            let sizes = [s1, s2, d - s1 - s2];
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d * d), len).prop_filter_map(
                "conditioning",
                move |mats| {
                    let steps = mats
                        .into_iter()
                        .map(|m| {
                            let v = well_conditioned(d, m)?;
                            let v = if orthogonal { v.qr().q() } else { v };
                            Some(split(&v, sizes))
                        })
                        .collect::<Option<Vec<_>>>()?;
                    Some(TriProjectionFamily::new(d, steps).unwrap())
                },
            )
        })
}

fn max_dev<F: ProjectionFamily>(a: &F, b: &F) -> f64 {
    (0..a.len())
        .flat_map(|n| {
            a.components(n)
                .iter()
                .zip(b.components(n))
                .map(|(x, y)| (x - y).abs().max())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conversions_preserve_validity(fam in family_strategy(false)) {
        prop_assert!(validate_tri(&fam, 1e-12).pass);
        prop_assert!(validate_di(&tri_to_two(&fam).unwrap(), 1e-12).pass);
        prop_assert!(validate_quad(&tri_to_four(&fam).unwrap(), 1e-12).pass);
        prop_assert!(validate_di(&make_t(&fam).unwrap(), 1e-12).pass);
    }

    #[test]
    fn four_way_round_trip(fam in family_strategy(false)) {
        let quad = tri_to_four(&fam).unwrap();
        let back = four_to_tri(&quad).unwrap();
        prop_assert!(max_dev(&back, &fam) <= 1e-14);
        let again = tri_to_four(&back).unwrap();
        prop_assert!(max_dev(&again, &quad) <= 1e-14);
    }

    #[test]
    fn st_identities_and_reconstruction(fam in family_strategy(false)) {
        let s = make_s(&fam).unwrap();
        let t = make_t(&fam).unwrap();
        let v = check_st_identities(&s, &t, 1e-12).unwrap();
        prop_assert!(v.pass, "{:?}", v.failing());
        let back = reconstruct_p3(&s, &t, 1e-12).unwrap();
        prop_assert!(max_dev(&back, &fam) <= 1e-12);
    }

    #[test]
    fn two_way_form_biconditional(fam in family_strategy(false), bump in 0usize..3, size in -0.3f64..0.3) {
        let pairs: Vec<[DMatrix<f64>; 2]> = fam.steps().iter().map(|[p1, p2, _]| [p1.clone(), p2.clone()]).collect();
        let mut pair = DiProjectionFamily::new(fam.dim(), pairs).unwrap();
        if bump > 0 && size.abs() > 0.05 {
            let mut q = pair.step(0)[bump - 1].clone();
            q[(0, 1)] += size;
            pair.set(0, bump - 1, q).unwrap();
        }
        let two_ok = validate_orthogonal_pair(&pair, 1e-9).pass;
        let tri_ok = validate_tri(&two_to_tri(&pair).unwrap(), 1e-9).pass;
        prop_assert_eq!(two_ok, tri_ok);
    }

    #[test]
    fn pythagoras_for_self_adjoint_families(fam in family_strategy(true)) {
        let r = check_range_orthogonality(&fam, 1e-12);
        prop_assert!(r.pythagoras.pass, "{:?}", r.pythagoras);
        prop_assert!(r.ranges.pass);
    }
}

#[test]
fn incompatible_splitting_is_refused() {
    let d = |v: [f64; 2]| DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&v));
    let s = DiProjectionFamily::constant([d([1.0, 0.0]), d([0.0, 1.0])], 2).unwrap();
    let t1 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
    let t2 = DMatrix::identity(2, 2) - &t1;
    let t = DiProjectionFamily::constant([t1, t2], 2).unwrap();
    assert!(validate_di(&t, 1e-12).pass);
    assert!(!check_st_identities(&s, &t, 1e-12).unwrap().pass);
    assert!(reconstruct_p3(&s, &t, 1e-12).is_err());
}
