mod common;

use miniamr::amr::{AmrConfig, AmrMesh, TagField};
use miniamr::arena::ArenaHandle;
use miniamr::comm::RankRuntime;
use miniamr::mesh::MultiFab;
use miniamr::IntVect;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn average_down_conserves(seed in any::<u64>(), nranks in 1usize..=3) {
        let m = common::average_down_mismatch(seed, nranks).unwrap();
        prop_assert!(m <= common::TOL, "mismatch {m}");
    }

    #[test]
    fn linear_interp_reproduces_linear_fields(seed in any::<u64>(), nranks in 1usize..=3) {
        let e = common::linear_interp_error(seed, nranks).unwrap();
        prop_assert!(e <= common::TOL, "error {e}");
    }

    #[test]
    fn regrid_covers_tags_and_nests(seed in any::<u64>(), ntags in 1usize..40, nranks in 1usize..=3) {
        let cfg = AmrConfig { n_cell: IntVect::splat(32), blocking_factor: 8, max_grid_size: 16, ..AmrConfig::default() };
        let mut mesh = AmrMesh::new(cfg, [0.0; 3], [1.0; 3], [true; 3], nranks).unwrap();
        let mut r = common::rng(seed);
        let tags: Vec<IntVect> = (0..ntags).map(|_| IntVect(std::array::from_fn(|_| r.random_range(0..32)))).collect();
        let ba0 = mesh.boxarray(0).clone();
        let dm0 = mesh.dm(0).clone();
        let outs = RankRuntime::new(nranks)
            .run(|comm| {
                let mf = MultiFab::define(&ba0, &dm0, 1, IntVect::zero(), comm.rank(), &ArenaHandle::system()).unwrap();
                let mut t = TagField::new(&mf);
                for &iv in &tags {
                    if mf.local_indices().iter().any(|&i| mf.valid_box(i).contains(iv)) {
                        t.set(iv).unwrap();
                    }
                }
                mesh.regrid(comm, 0, &t).unwrap()
            })
            .unwrap();
        prop_assert!(outs.windows(2).all(|w| w[0].boxes() == w[1].boxes()));
        let ba = outs.into_iter().next().unwrap();
        let crse = ba.coarsen(2).unwrap();
        for iv in &tags {
            prop_assert!(crse.find(*iv).is_some(), "tag {iv:?} uncovered");
        }
        for b in ba.iter() {
            prop_assert!(b.is_coarsenable(8));
            prop_assert!(b.length().all_le(IntVect::splat(16)));
        }
        prop_assert!(ba.is_disjoint());
        mesh.set_level(1, ba).unwrap();
        prop_assert!(mesh.is_properly_nested(1));
    }
}

#[test]
fn improperly_nested_level_is_rejected() {
    let cfg = AmrConfig { max_level: 2, n_cell: IntVect::splat(16), blocking_factor: 4, max_grid_size: 16, ..AmrConfig::default() };
    let mut mesh = AmrMesh::new(cfg, [0.0; 3], [1.0; 3], [false; 3], 1).unwrap();
    let l1 = miniamr::IndexBox::new(IntVect::splat(8), IntVect::splat(15));
    mesh.set_level(1, miniamr::mesh::BoxArray::new(vec![l1]).unwrap()).unwrap();
    let bad = miniamr::IndexBox::new(IntVect::splat(16), IntVect::splat(23));
    assert!(mesh.set_level(2, miniamr::mesh::BoxArray::new(vec![bad]).unwrap()).is_err());
    assert_eq!(mesh.finest_level(), 1);
    let good = miniamr::IndexBox::new(IntVect::splat(20), IntVect::splat(27));
    mesh.set_level(2, miniamr::mesh::BoxArray::new(vec![good]).unwrap()).unwrap();
    assert_eq!(mesh.finest_level(), 2);
}
