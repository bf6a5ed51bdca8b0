//! Property tests for the structural invariants: generator determinism and
//! symmetry, subcube combinatorics, the quadratic form identity on trivial
//! blocks, norm dualities, Parseval, snapshot round-trips, and scaling
//! covariance of the coarse matrix.

use cglab_core::coarsegrain::{coarse_matrix, eval_j, eval_j_star, extract_blocks, CoarseBlocks};
use cglab_core::fem::SolveConfig;
use cglab_core::geometry::AdaptedGeometry;
use cglab_core::sobolev::{l2_cell_mean, neg_sobolev_seminorm, NormConfig, RectGrid};
use cglab_core::{fieldgen, snapshot, DMat, DVec};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    /// Same parameters, same bytes: generation is a pure function of the
    /// seed, and cell draws are stream-keyed rather than sequence-dependent.
    #[test]
    fn checkerboard_is_deterministic(seed in 0u64..1000, p in 0.0f64..=1.0) {
        let a = fieldgen::checkerboard(2, 9, 1.0, 9.0, p, seed).unwrap();
        let b = fieldgen::checkerboard(2, 9, 1.0, 9.0, p, seed).unwrap();
        prop_assert_eq!(snapshot::to_bytes(&a), snapshot::to_bytes(&b));
    }

    #[test]
    fn poisson_is_deterministic_and_symmetric(seed in 0u64..1000) {
        let a = fieldgen::poisson_inclusions(2, 27, 0.02, 2.0, 1.0, 25.0, seed).unwrap();
        let b = fieldgen::poisson_inclusions(2, 27, 0.02, 2.0, 1.0, 25.0, seed).unwrap();
        prop_assert_eq!(snapshot::to_bytes(&a), snapshot::to_bytes(&b));
        prop_assert!(a.is_symmetric_field());
        let (lo, hi) = a.ellipticity();
        prop_assert!(lo >= 1.0 - 1e-12 && hi <= 25.0 + 1e-12);
    }

    /// A level-m cube of any admissible geometry splits into exactly
    /// 3^(d (m - n)) level-n subcubes, and its raster has 3^(d m) cells.
    #[test]
    fn subcube_counts(m in 1u32..=3, d in 1usize..=2) {
        let geom = AdaptedGeometry::identity(d).unwrap();
        let cube = geom.cube(m, [0, 0]).unwrap();
        prop_assert_eq!(geom.cube_cells(&cube).len(), 3usize.pow(d as u32 * m));
        for n in 0..=m {
            let subs = geom.enumerate_subcubes(&cube, n).unwrap();
            prop_assert_eq!(subs.len(), 3usize.pow(d as u32 * (m - n)));
        }
    }

    /// With identity blocks the duality gap is the explicit square
    /// J(p, q) = J*(p, q) = |p - q|^2 / 2.
    #[test]
    fn j_identity_blocks_closed_form(
        p0 in -3.0f64..3.0, p1 in -3.0f64..3.0,
        q0 in -3.0f64..3.0, q1 in -3.0f64..3.0,
    ) {
        let blocks = CoarseBlocks {
            s: DMat::identity(2, 2),
            s_star: DMat::identity(2, 2),
            k: DMat::zeros(2, 2),
        };
        let p = DVec::from_vec(vec![p0, p1]);
        let q = DVec::from_vec(vec![q0, q1]);
        let expected = 0.5 * ((p0 - q0).powi(2) + (p1 - q1).powi(2));
        let j = eval_j(&blocks, &p, &q).unwrap();
        let js = eval_j_star(&blocks, &p, &q).unwrap();
        prop_assert!((j - expected).abs() <= 1e-12 * (1.0 + expected));
        prop_assert!((js - expected).abs() <= 1e-12 * (1.0 + expected));
    }

    /// On a unit-volume domain every spectral weight rho_k is at most one, so
    /// the negative seminorm never exceeds the plain cell-mean norm.
    #[test]
    fn neg_norm_below_l2(values in prop::collection::vec(-5.0f64..5.0, 81),
                         s in 0.05f64..0.95) {
        let grid = RectGrid::new(2, [9, 9], [1.0 / 9.0, 1.0 / 9.0]).unwrap();
        let cfg = NormConfig::full(s).unwrap();
        let sv = neg_sobolev_seminorm(&grid, &values, &cfg).unwrap();
        prop_assert!(sv.value <= l2_cell_mean(&values) * (1.0 + 1e-12));
    }

    /// Orthonormality of the cosine basis: the summed squared coefficients
    /// equal the mean squared cell mass.
    #[test]
    fn parseval(values in prop::collection::vec(-5.0f64..5.0, 27)) {
        let grid = RectGrid::new(1, [27, 1], [1.0, 1.0]).unwrap();
        let coeffs = grid.transform(&values).unwrap();
        let lhs: f64 = coeffs.iter().map(|c| c * c).sum();
        let rhs = l2_cell_mean(&values).powi(2);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs));
    }

    /// Snapshot encoding is lossless for every generator parameterization.
    #[test]
    fn snapshot_roundtrip(seed in 0u64..500, p in 0.1f64..0.9) {
        let field = fieldgen::checkerboard(2, 9, 0.5, 50.0, p, seed).unwrap();
        let bytes = snapshot::to_bytes(&field);
        let back = snapshot::from_bytes(&bytes).unwrap();
        prop_assert_eq!(snapshot::to_bytes(&back), bytes);
    }
}

/// Multiplying the coefficient field by alpha multiplies both coarse blocks
/// s and s* by alpha and leaves k scaled by alpha as well; checked through
/// the full variational solve rather than algebra on the companion.
#[test]
fn coarse_blocks_scale_covariantly() {
    let alpha = 3.7;
    let field = fieldgen::checkerboard(2, 9, 1.0, 9.0, 0.5, 11).unwrap();
    let scaled = field.scaled(alpha).unwrap();
    let geom = AdaptedGeometry::identity(2).unwrap();
    let cube = geom.cube(2, [0, 0]).unwrap();
    let cfg = SolveConfig::default();
    let base = extract_blocks(&coarse_matrix(&field, &geom, &cube, &cfg).unwrap().m).unwrap();
    let big = extract_blocks(&coarse_matrix(&scaled, &geom, &cube, &cfg).unwrap().m).unwrap();
    let rel = |a: &DMat, b: &DMat| {
        let denom = a.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1e-30);
        (a - b).iter().map(|v| v.abs()).fold(0.0f64, f64::max) / denom
    };
    assert!(rel(&(&base.s * alpha), &big.s) < 1e-8, "s block not covariant");
    assert!(rel(&(&base.s_star * alpha), &big.s_star) < 1e-8, "s* block not covariant");
}

/// d = 1 sanity: the coarse symmetric block of any field is the harmonic
/// mean of the cell coefficients, independent of the level.
#[test]
fn d1_coarse_is_harmonic_mean() {
    let field = fieldgen::checkerboard(1, 9, 1.0, 100.0, 0.5, 3).unwrap();
    let geom = AdaptedGeometry::identity(1).unwrap();
    let cube = geom.cube(2, [0, 0]).unwrap();
    let cfg = SolveConfig::default();
    let blocks = extract_blocks(&coarse_matrix(&field, &geom, &cube, &cfg).unwrap().m).unwrap();
    let cells = geom.cube_cells(&cube);
    let hmean = cells.len() as f64 / cells.iter().map(|z| 1.0 / field.s_at(*z)[0]).sum::<f64>();
    assert!(
        (blocks.s[(0, 0)] - hmean).abs() < 1e-8 * hmean,
        "got {} want {hmean}",
        blocks.s[(0, 0)]
    );
}
