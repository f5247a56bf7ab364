mod common;

use std::sync::Arc;

use miniamr::arena::ArenaHandle;
use miniamr::kernels::{Backend, OptionTable, ReduceOp, SpecializedKernel};
use miniamr::mesh::{BoxArray, DistributionMapping, MultiFab};
use miniamr::tools::bench::{triad_fused, triad_per_box};
use miniamr::{IndexBox, IntVect, Real};
use proptest::prelude::*;

fn layout(n: IntVect, mgs: i32) -> (Arc<BoxArray>, Arc<DistributionMapping>) {
    let ba = Arc::new(BoxArray::from_domain(IndexBox::from_size(n), IntVect::splat(mgs)).unwrap());
    let dm = Arc::new(DistributionMapping::all_on(ba.len(), 0, 1).unwrap());
    (ba, dm)
}

fn filled(ba: &Arc<BoxArray>, dm: &Arc<DistributionMapping>, f: impl Fn(IntVect) -> Real) -> MultiFab {
    let mut mf = MultiFab::define(ba, dm, 1, IntVect::zero(), 0, &ArenaHandle::system()).unwrap();
    for (_, fab) in mf.local_fabs_mut() {
        let bx = fab.bx();
        for iv in bx.cells() {
            fab.set(iv, 0, f(iv));
        }
    }
    mf
}

fn backends() -> Vec<Backend> {
    vec![Backend::serial(), Backend::cpu_parallel(1), Backend::cpu_parallel(3)]
}

#[test]
fn fused_is_one_launch_and_matches_per_box() {
    let (ba, dm) = layout(IntVect::new(24, 16, 8), 8);
    assert_eq!(ba.len(), 6);
    let b = filled(&ba, &dm, |iv| (iv[0] * 7 + iv[1] - iv[2]) as Real * 0.25);
    let c = filled(&ba, &dm, |iv| 1.0 / (1 + iv[0] + iv[1] + iv[2]) as Real);
    for be in backends() {
        let mut fused = b.define_like(1, IntVect::zero()).unwrap();
        let mut per_box = b.define_like(1, IntVect::zero()).unwrap();
        let l0 = be.launches();
        triad_fused(&be, &mut fused, &b, &c, 3.0);
        let l1 = be.launches();
        triad_per_box(&be, &mut per_box, &b, &c, 3.0).unwrap();
        let l2 = be.launches();
        assert_eq!((l1 - l0, l2 - l1), (1, 6));
        for ((_, f), (_, p)) in fused.local_fabs().zip(per_box.local_fabs()) {
            assert_eq!(f.data(), p.data());
        }
        for (i, fab) in fused.local_fabs() {
            for iv in ba.get(i).cells() {
                let want = b.fab(i).unwrap().get(iv, 0) + 3.0 * c.fab(i).unwrap().get(iv, 0);
                assert_eq!(fab.get(iv, 0).to_bits(), want.to_bits());
            }
        }
    }
}

#[test]
fn serial_and_parallel_agree_bitwise() {
    let (ba, dm) = layout(IntVect::new(17, 9, 5), 6);
    let mut outs = Vec::new();
    for be in backends() {
        let mut mf = filled(&ba, &dm, |iv| iv[0] as Real);
        be.parallel_for_fused(&mut mf, |l, iv, mut cell| {
            let v = cell.get(0);
            cell.set(0, (v + 0.1).sin() * (l as Real + 1.0) + iv[2] as Real);
        });
        outs.push(mf.fabs().iter().flat_map(|f| f.data().to_vec()).collect::<Vec<_>>());
    }
    assert!(outs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn regions_reject_overlap_and_escape() {
    let (ba, dm) = layout(IntVect::splat(8), 8);
    let mut mf = filled(&ba, &dm, |_| 0.0);
    let be = Backend::serial();
    let a = IndexBox::new(IntVect::zero(), IntVect::splat(3));
    let b = IndexBox::new(IntVect::splat(2), IntVect::splat(5));
    assert!(be.parallel_for_regions(mf.fabs_mut(), &[(0, a), (0, b)], |_, _, _| {}).is_err());
    let out = IndexBox::new(IntVect::zero(), IntVect::splat(8));
    assert!(be.parallel_for_regions(mf.fabs_mut(), &[(0, out)], |_, _, _| {}).is_err());
    assert_eq!(be.launches(), 0);
}

fn probe<const A: i32, const B: i32>(ctx: &i32, start: usize, out: &mut [i32]) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = ctx + 10 * A + B + 100 * (start + k) as i32;
    }
}

#[test]
fn every_specialized_variant_runs() {
    let variants: Vec<SpecializedKernel<i32, i32>> =
        miniamr::specialized_variants!(probe: SpecializedKernel<i32, i32>; [0, 1, 2, 3], [0, 1]);
    let mut table = OptionTable::new(vec![vec![0, 1, 2, 3], vec![0, 1]]);
    assert_eq!(table.num_variants(), 8);
    let mut seen = std::collections::BTreeSet::new();
    for be in backends() {
        for a in 0..4 {
            for b in 0..2 {
                table.select(&[a, b]);
                let mut out = vec![0; 53];
                let case = be.dispatch_specialized(&table, &variants, &7, &mut out).unwrap();
                seen.insert(case);
                assert_eq!(table.case_values(case), vec![a, b]);
                assert!(out.iter().enumerate().all(|(k, &v)| v == 7 + 10 * a + b + 100 * k as i32));
            }
        }
    }
    assert_eq!(seen.len(), 8);
}

#[test]
fn reductions_over_empty_and_single_cells() {
    let be = Backend::cpu_parallel(4);
    let r = be.reduce_regions(&[], [ReduceOp::Sum, ReduceOp::Min, ReduceOp::Max], |_, _| [1.0; 3]);
    assert_eq!(r, [0.0, Real::INFINITY, Real::NEG_INFINITY]);
    let one = IndexBox::new(IntVect::splat(5), IntVect::splat(5));
    let r = be.reduce_regions(&[one], [ReduceOp::Sum, ReduceOp::Min, ReduceOp::Max], |_, iv| [iv[0] as Real; 3]);
    assert_eq!(r, [5.0; 3]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mixed_reduction_matches_serial_oracle(
        n in prop::array::uniform3(1i32..=32),
        seed in any::<u64>(),
        nworkers in 1usize..=4,
        serial in any::<bool>(),
    ) {
        let be = if serial { Backend::serial() } else { Backend::cpu_parallel(nworkers) };
        let out = common::run_reduce(&common::ReduceCase { n_cell: n, seed, nworkers }, &be).unwrap();
        prop_assert!(out.nboxes <= 8);
        prop_assert_eq!(out.launches, 1);
        prop_assert!(out.min_max_exact(), "{:?}", out);
        prop_assert!(out.sum_rel_err() <= common::TOL, "{:?}", out);
    }
}
