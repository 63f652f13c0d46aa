//! Randomized property tests for the core library.

use proptest::prelude::*;

use otpatch_core::ot::{self, SolverConfig};
use otpatch_core::patch::{make_patch_grid, max_offset};
use otpatch_core::volume::Volume;

fn voxels(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // every voxel belongs to exactly one patch for any admissible offset
    #[test]
    fn patches_partition_the_volume(
        off in (0usize..=2, 0usize..=2, 0usize..=2),
        dims in prop_oneof![Just((4usize, 4usize, 4usize)), Just((8, 4, 4)), Just((8, 8, 8))],
    ) {
        let n = 4;
        prop_assume!(off.0 <= max_offset(n) && off.1 <= max_offset(n) && off.2 <= max_offset(n));
        let grid = make_patch_grid(dims, n, off).unwrap();
        let total = dims.0 * dims.1 * dims.2;
        let mut seen = vec![0usize; total];
        for i in 0..grid.num_patches() {
            for idx in grid.patch_indices(i) {
                seen[idx] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    // q95 normalization is scale-equivariant: normalize(c*v) == normalize(v)
    #[test]
    fn normalization_is_scale_equivariant(vals in voxels(64), scale in 0.1f64..10.0) {
        prop_assume!(vals.iter().any(|&v| v > 1e-6));
        let v = Volume::new((4, 4, 4), vals.clone()).unwrap();
        let scaled = Volume::new((4, 4, 4), vals.iter().map(|x| x * scale).collect()).unwrap();
        let a = v.normalize().unwrap();
        let b = scaled.normalize().unwrap();
        for (x, y) in a.voxels().iter().zip(b.voxels()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    // the exact 1-D solver only sees the sorted values
    #[test]
    fn exact_value_is_permutation_invariant(vals in voxels(27), swap in (0usize..27, 0usize..27)) {
        let target: Vec<f64> = (0..27).map(|i| i as f64 / 27.0).collect();
        let (w0, _) = ot::exact_ot_1d(&vals, &target, 1).unwrap();
        let mut perm = vals.clone();
        perm.swap(swap.0, swap.1);
        let (w1, _) = ot::exact_ot_1d(&perm, &target, 1).unwrap();
        prop_assert_eq!(w0, w1);
    }

    // every solver returns a feasible plan with full mass
    #[test]
    fn plans_are_feasible(
        seed_vals in voxels(128),
        m in prop_oneof![Just(1usize), Just(8), Just(27), Just(64)],
        which in 0usize..3,
    ) {
        let a = &seed_vals[..m];
        let b = &seed_vals[64..64 + m];
        let cfg = match which {
            0 => SolverConfig::exact(),
            1 => SolverConfig::ipot(50, 2),
            _ => SolverConfig::sinkhorn(ot::EpsilonRule::MaxCostOverTen, 500),
        };
        let (w, plan) = ot::solve(a, b, 1, &cfg).unwrap();
        prop_assert!(w >= 0.0);
        prop_assert!(plan.marginal_error() <= 1e-5, "marginal err {}", plan.marginal_error());
        prop_assert!((plan.total_mass() - 1.0).abs() <= 1e-9);
    }
}
