//! Scenario runners shared by the integration tests and the acceptance
//! harness. Every runner checks against an independent oracle and returns
//! counts instead of panicking, so callers decide how to report.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use miniamr::arena::{async_scope, ArenaHandle, AsyncArena};
use miniamr::comm::{fill_boundary, Comm, RankRuntime};
use miniamr::kernels::{Backend, ReduceOp};
use miniamr::mesh::{BoxArray, DistributionMapping, MultiFab};
use miniamr::particles::{ComponentRegistry, ParticleContainer, ParticleId, ParticleLevel};
use miniamr::{Geometry, IndexBox, IntVect, Real, SPACEDIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Roundoff tolerance of the oracle comparisons for the active `Real`.
pub const TOL: Real = if cfg!(feature = "single-precision") { 1e-5 } else { 1e-12 };

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Uniform in [-1, 1) from a hash.
pub fn unit_hash(x: u64) -> Real {
    (splitmix(x) >> 11) as Real / (1u64 << 52) as Real - 1.0
}

// ---------------------------------------------------------------- halo

#[derive(Clone, Debug)]
pub struct HaloCase {
    pub n_cell: [i32; SPACEDIM],
    pub max_grid: [i32; SPACEDIM],
    /// Boxes of the chopped domain to keep, cycled.
    pub keep: Vec<bool>,
    /// Owner of each kept box, cycled.
    pub owners: Vec<usize>,
    pub nranks: usize,
    pub ngrow: i32,
    pub periodic: [bool; SPACEDIM],
    pub ncomp: usize,
}

impl HaloCase {
    pub fn boxes(&self) -> Vec<IndexBox> {
        let dom = IndexBox::from_size(IntVect(self.n_cell));
        let all = dom.tiles(IntVect(self.max_grid));
        let mut kept: Vec<IndexBox> =
            all.iter().enumerate().filter(|(i, _)| self.keep[i % self.keep.len()]).map(|(_, b)| *b).collect();
        if kept.is_empty() {
            kept.push(all[0]);
        }
        kept
    }

    /// Valid when the layout has at most `max_boxes` boxes, none thinner
    /// than the ghost width.
    pub fn is_valid(&self, max_boxes: usize) -> bool {
        let b = self.boxes();
        b.len() <= max_boxes && b.iter().all(|bx| bx.length().all_ge(IntVect::splat(self.ngrow)))
    }

    pub fn random(r: &mut impl Rng, max_boxes: usize, max_ranks: usize) -> HaloCase {
        loop {
            let n_cell: [i32; 3] = std::array::from_fn(|_| r.random_range(2..=16));
            let max_grid: [i32; 3] = std::array::from_fn(|d| r.random_range(2..=n_cell[d].max(2)));
            let nboxes: usize = (0..3).map(|d| (n_cell[d] + max_grid[d] - 1) / max_grid[d]).product::<i32>() as usize;
            let keep = (0..nboxes).map(|_| r.random_bool(0.8)).collect();
            let nranks = r.random_range(1..=max_ranks);
            let owners = (0..nboxes).map(|_| r.random_range(0..nranks)).collect();
            let case = HaloCase {
                n_cell,
                max_grid,
                keep,
                owners,
                nranks,
                ngrow: r.random_range(1..=2),
                periodic: std::array::from_fn(|_| r.random_bool(0.5)),
                ncomp: r.random_range(1..=2),
            };
            if case.is_valid(max_boxes) {
                return case;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HaloOutcome {
    pub checked: usize,
    pub mismatches: usize,
    pub max_per_pair: u64,
    pub builds: u64,
}

pub fn halo_value(iv: IntVect, c: usize) -> Real {
    (iv[0] + 100 * iv[1] + 10_000 * iv[2]) as Real + 1e6 * c as Real
}

const UNFILLED: Real = -1.0;

/// Oracle value of cell `iv`: the valid value at its periodic image, or
/// untouched if no box owns that image.
fn halo_expected(iv: IntVect, c: usize, dom: &IndexBox, periodic: [bool; 3], valid: &BoxArray) -> Real {
    let mut w = iv;
    for d in 0..SPACEDIM {
        if periodic[d] {
            let n = dom.length()[d];
            w[d] = (iv[d] - dom.lo()[d]).rem_euclid(n) + dom.lo()[d];
        }
    }
    if dom.contains(w) && valid.find(w).is_some() {
        halo_value(w, c)
    } else {
        UNFILLED
    }
}

/// Fills ghosts twice and compares every local cell against the global
/// array oracle.
pub fn run_halo(case: &HaloCase) -> miniamr::Result<HaloOutcome> {
    let boxes = case.boxes();
    let ba = Arc::new(BoxArray::new(boxes.clone())?);
    let owners: Vec<usize> = (0..boxes.len()).map(|i| case.owners[i % case.owners.len()]).collect();
    let dm = Arc::new(DistributionMapping::new(owners, case.nranks)?);
    let geom = Geometry::unit_cube(IntVect(case.n_cell), case.periodic)?;
    let rt = RankRuntime::new(case.nranks);
    let outs = rt.run(|comm| -> miniamr::Result<HaloOutcome> {
        let mut mf =
            MultiFab::define(&ba, &dm, case.ncomp, IntVect::splat(case.ngrow), comm.rank(), &ArenaHandle::system())?;
        mf.setval(UNFILLED);
        for &i in &mf.local_indices().to_vec() {
            let vb = mf.valid_box(i);
            let fab = mf.fab_mut(i)?;
            for iv in vb.cells() {
                for c in 0..case.ncomp {
                    fab.set(iv, c, halo_value(iv, c));
                }
            }
        }
        let mut out = HaloOutcome::default();
        for _ in 0..2 {
            comm.barrier();
            let before = comm.message_stats();
            comm.barrier();
            fill_boundary(comm, &mut mf, &geom)?;
            comm.barrier();
            let delta = comm.message_stats().since(&before);
            comm.barrier();
            out.max_per_pair = out.max_per_pair.max(delta.max_per_pair());
        }
        let dom = geom.domain();
        for (i, fab) in mf.local_fabs() {
            for iv in mf.fab_box(i).cells() {
                for c in 0..case.ncomp {
                    out.checked += 1;
                    let want = halo_expected(iv, c, &dom, case.periodic, &ba);
                    if fab.get(iv, c).to_bits() != want.to_bits() {
                        out.mismatches += 1;
                    }
                }
            }
        }
        out.builds = mf.plans().build_count();
        Ok(out)
    })?;
    let mut total = HaloOutcome::default();
    for o in outs {
        let o = o?;
        total.checked += o.checked;
        total.mismatches += o.mismatches;
        total.max_per_pair = total.max_per_pair.max(o.max_per_pair);
        total.builds = total.builds.max(o.builds);
    }
    Ok(total)
}

// ----------------------------------------------------------- reductions

#[derive(Clone, Debug)]
pub struct ReduceCase {
    pub n_cell: [i32; SPACEDIM],
    pub seed: u64,
    pub nworkers: usize,
}

impl ReduceCase {
    /// Domains up to 32x32x32 chopped at 16: at most 8 boxes of at most 16^3.
    pub fn random(r: &mut impl Rng) -> ReduceCase {
        ReduceCase {
            n_cell: std::array::from_fn(|_| r.random_range(1..=32)),
            seed: r.random(),
            nworkers: r.random_range(1..=4),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReduceOutcome {
    pub got: [Real; 3],
    pub oracle: [Real; 3],
    pub abs_sum: Real,
    pub launches: u64,
    pub nboxes: usize,
}

impl ReduceOutcome {
    pub fn min_max_exact(&self) -> bool {
        self.got[1].to_bits() == self.oracle[1].to_bits() && self.got[2].to_bits() == self.oracle[2].to_bits()
    }

    /// Sum error relative to the sum of magnitudes.
    pub fn sum_rel_err(&self) -> Real {
        if self.abs_sum == 0.0 {
            (self.got[0] - self.oracle[0]).abs()
        } else {
            (self.got[0] - self.oracle[0]).abs() / self.abs_sum
        }
    }
}

pub fn run_reduce(case: &ReduceCase, backend: &Backend) -> miniamr::Result<ReduceOutcome> {
    let dom = IndexBox::from_size(IntVect(case.n_cell));
    let ba = Arc::new(BoxArray::from_domain(dom, IntVect::splat(16))?);
    let dm = Arc::new(DistributionMapping::all_on(ba.len(), 0, 1)?);
    let mut mf = MultiFab::define(&ba, &dm, 1, IntVect::unit(), 0, &ArenaHandle::system())?;
    let mut r = rng(case.seed);
    for (_, fab) in mf.local_fabs_mut() {
        for v in fab.data_mut() {
            *v = r.random_range(-1e3..1e3);
        }
    }
    // serial oracle, box by box in valid-cell order
    let (mut s, mut lo, mut hi, mut abs) = (0.0 as Real, Real::INFINITY, Real::NEG_INFINITY, 0.0 as Real);
    for (i, fab) in mf.local_fabs() {
        for iv in mf.valid_box(i).cells() {
            let v = fab.get(iv, 0);
            s += v;
            abs += v.abs();
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let views: Vec<_> = mf.fabs().iter().map(|f| f.view()).collect();
    let before = backend.launches();
    let got = backend.reduce_multifab(&mf, [ReduceOp::Sum, ReduceOp::Min, ReduceOp::Max], |l, iv| {
        let v = views[l].get(iv, 0);
        [v, v, v]
    });
    Ok(ReduceOutcome { got, oracle: [s, lo, hi], abs_sum: abs, launches: backend.launches() - before, nboxes: ba.len() })
}

// ------------------------------------------------------------ particles

#[derive(Clone, Debug)]
pub struct ParticleCase {
    pub nranks: usize,
    pub per_rank: usize,
    pub cycles: usize,
    pub added_per_cycle: usize,
    /// One in `invalidate_one_in` particles is invalidated per cycle.
    pub invalidate_one_in: u64,
    pub step: Real,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParticleOutcome {
    pub cycles: usize,
    pub peak_particles: usize,
    pub final_particles: usize,
    pub duplicate_ids: usize,
    pub misplaced: usize,
    pub payload_errors: usize,
    pub multiset_mismatches: usize,
    pub staged_after_redistribute: usize,
}

fn pkey(id: ParticleId) -> u64 {
    (id.rank() << 40) | id.local()
}

fn payload(key: u64) -> Real {
    unit_hash(key ^ 0xABCD)
}

/// Adds, moves, invalidates and redistributes particles on a periodic
/// 32^3 mesh chopped into 8 boxes, checking every invariant each cycle.
pub fn run_particles(case: &ParticleCase) -> miniamr::Result<ParticleOutcome> {
    let geom = Geometry::unit_cube(IntVect::splat(32), [true; 3])?;
    let ba = Arc::new(BoxArray::from_domain(geom.domain(), IntVect::splat(16))?);
    let dm = Arc::new(DistributionMapping::round_robin(ba.len(), case.nranks)?);
    let rt = RankRuntime::new(case.nranks);
    let outs = rt.run(|comm| -> miniamr::Result<ParticleOutcome> {
        let level = ParticleLevel::new(geom.clone(), ba.clone(), dm.clone())?;
        let reg = ComponentRegistry::new(&["w"], &["origin"])?;
        let mut pc = ParticleContainer::new(vec![level], comm.rank(), reg, &ArenaHandle::system())?;
        let mut r = rng(case.seed ^ (comm.rank() as u64) << 32);
        let add = |pc: &mut ParticleContainer, n: usize, r: &mut ChaCha8Rng| -> miniamr::Result<Vec<u64>> {
            let pos: Vec<[Real; 3]> = (0..n).map(|_| std::array::from_fn(|_| r.random_range(0.0..1.0))).collect();
            let ids = pc.add_particles(&pos, &[], &[])?;
            let keys: Vec<u64> = ids.iter().map(|&id| pkey(id)).collect();
            Ok(keys)
        };
        let mut out = ParticleOutcome::default();
        let mut created: Vec<u64> = add(&mut pc, case.per_rank, &mut r)?;
        let mut invalidated: Vec<u64> = Vec::new();
        // payloads are keyed by id so they survive any number of moves
        pc.apply(comm.backend(), |p| {
            let k = pkey(p.id());
            p.set_real(0, payload(k));
            p.set_int(0, comm.rank() as i32);
        });
        for cycle in 0..case.cycles {
            let inv = Mutex::new(Vec::new());
            let (step, one_in) = (case.step, case.invalidate_one_in);
            pc.apply(comm.backend(), |p| {
                if !p.is_valid() {
                    return;
                }
                let k = pkey(p.id());
                if splitmix(k ^ (cycle as u64) << 48).is_multiple_of(one_in) {
                    p.invalidate();
                    inv.lock().unwrap().push(k);
                    return;
                }
                for d in 0..SPACEDIM {
                    let x = p.pos(d) + step * unit_hash(k ^ ((cycle * 3 + d) as u64) << 50);
                    p.set_pos(d, x);
                }
            });
            invalidated.extend(inv.into_inner().unwrap());
            if case.added_per_cycle > 0 {
                let fresh = add(&mut pc, case.added_per_cycle, &mut r)?;
                let set: std::collections::HashSet<u64> = fresh.iter().copied().collect();
                pc.apply(comm.backend(), |p| {
                    let k = pkey(p.id());
                    if set.contains(&k) {
                        p.set_real(0, payload(k));
                        p.set_int(0, comm.rank() as i32);
                    }
                });
                created.extend(fresh);
            }
            pc.redistribute(comm)?;
            out.staged_after_redistribute += pc.staging().len();

            let mut local_keys = Vec::new();
            for t in pc.tiles(0) {
                let tb = pc.tile_box(t.key);
                let owner_ok = dm.rank_of(t.key.grid) == comm.rank();
                let ids = t.ids();
                let w = t.real("w")?;
                let origin = t.int("origin")?;
                for i in 0..t.len() {
                    let id = ParticleId::from_raw(ids[i]);
                    if !id.is_valid() {
                        out.misplaced += 1;
                        continue;
                    }
                    let k = pkey(id);
                    local_keys.push(k);
                    let x = t.tile.position(i);
                    if !owner_ok || !tb.contains(geom.cell_of(x)) || x.iter().any(|&v| !(0.0..1.0).contains(&v)) {
                        out.misplaced += 1;
                    }
                    if w[i].to_bits() != payload(k).to_bits() || origin[i] as u64 != id.rank() {
                        out.payload_errors += 1;
                    }
                }
            }
            let mut all: Vec<u64> = comm.allgather(local_keys).into_iter().flatten().collect();
            all.sort_unstable();
            let n = all.len();
            all.dedup();
            out.duplicate_ids += n - all.len();
            let mut expect: Vec<u64> = comm
                .allgather((created.clone(), invalidated.clone()))
                .into_iter()
                .fold(BTreeMap::new(), |mut m, (c, i)| {
                    for k in c {
                        *m.entry(k).or_insert(0i32) += 1;
                    }
                    for k in i {
                        *m.entry(k).or_insert(0) -= 1;
                    }
                    m
                })
                .into_iter()
                .filter(|&(_, v)| v > 0)
                .map(|(k, _)| k)
                .collect();
            expect.sort_unstable();
            if expect != all {
                out.multiset_mismatches += 1;
            }
            out.peak_particles = out.peak_particles.max(n);
            out.final_particles = n;
            out.cycles += 1;
        }
        Ok(out)
    })?;
    let mut first = outs.into_iter().collect::<miniamr::Result<Vec<_>>>()?;
    let mut o = first.swap_remove(0);
    for x in first {
        o.misplaced += x.misplaced;
        o.payload_errors += x.payload_errors;
        o.staged_after_redistribute += x.staged_after_redistribute;
    }
    Ok(o)
}

// ---------------------------------------------------------- async arena

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ArenaStressOutcome {
    pub scopes: usize,
    pub canary_violations: usize,
    pub early_recycles: u64,
    pub accounting_violations: usize,
    pub leaked_bytes: usize,
}

/// Scopes that fill a temporary with a per-scope canary, hand it to a task
/// that sleeps a random time before checking it, and exit immediately.
pub fn run_arena_stress(scopes: usize, max_delay_us: u64, seed: u64) -> miniamr::Result<ArenaStressOutcome> {
    let arena = Arc::new(AsyncArena::new(1 << 20)?.with_poison(true));
    let backend = Backend::cpu_parallel(4);
    let violations = Arc::new(std::sync::atomic::AtomicUsize::new(0));
    let mut r = rng(seed);
    let mut out = ArenaStressOutcome { scopes, ..Default::default() };
    let done = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let sampler = {
        let (arena, done) = (arena.clone(), done.clone());
        std::thread::spawn(move || {
            let mut bad = 0;
            while !done.load(std::sync::atomic::Ordering::Relaxed) {
                let (st, outstanding) = arena.accounting();
                if st.in_use_bytes != outstanding || st.in_use_bytes > st.reserved_bytes {
                    bad += 1;
                }
                std::thread::yield_now();
            }
            bad
        })
    };
    let mut tokens = Vec::with_capacity(scopes);
    for s in 0..scopes {
        let n = r.random_range(1..=512usize);
        let delay = r.random_range(0..=max_delay_us);
        let canary = splitmix(s as u64);
        let v = violations.clone();
        let token = async_scope(&arena, &backend, |sc| -> miniamr::Result<_> {
            let mut t = sc.alloc::<u64>(n)?;
            t.get_mut().expect("sole handle").fill(canary);
            let t2 = t.clone();
            Ok(sc.launch(move || {
                std::thread::sleep(Duration::from_micros(delay));
                if t2.iter().any(|&x| x != canary) {
                    v.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                }
            }))
        })?;
        tokens.push(token);
        let (st, outstanding) = arena.accounting();
        if st.in_use_bytes != outstanding || st.in_use_bytes > st.reserved_bytes || st.alloc_calls < st.free_calls {
            out.accounting_violations += 1;
        }
        if s % 64 == 0 {
            arena.reclaim();
        }
    }
    for t in &tokens {
        t.wait();
    }
    done.store(true, std::sync::atomic::Ordering::Relaxed);
    out.accounting_violations += sampler.join().expect("sampler thread");
    arena.reclaim();
    let (st, outstanding) = arena.accounting();
    if st.alloc_calls != st.free_calls || st.in_use_bytes != outstanding {
        out.accounting_violations += 1;
    }
    out.leaked_bytes = st.in_use_bytes;
    out.canary_violations = violations.load(std::sync::atomic::Ordering::Relaxed);
    out.early_recycles = arena.async_stats().early_recycles;
    Ok(out)
}

pub fn solo() -> Comm {
    Comm::solo(Backend::cpu_parallel(2))
}

// ------------------------------------------------------------------ amr

/// Refined boxes of a random subset of the 8^3 tiles of a 32^3 domain.
pub fn random_fine_boxes(r: &mut impl Rng, ratio: i32) -> Vec<IndexBox> {
    let tiles = IndexBox::from_size(IntVect::splat(32)).tiles(IntVect::splat(8));
    let mut out: Vec<IndexBox> =
        tiles.iter().filter(|_| r.random_bool(0.3)).map(|b| b.refine(ratio).expect("cell box")).collect();
    if out.is_empty() {
        out.push(tiles[r.random_range(0..tiles.len())].refine(ratio).expect("cell box"));
    }
    out
}

/// Relative mismatch between the fine integral and the integral of the
/// covered coarse cells after averaging down.
pub fn average_down_mismatch(seed: u64, nranks: usize) -> miniamr::Result<Real> {
    use miniamr::amr::average_down;
    let mut r = rng(seed);
    let ratio = 2;
    let cgeom = Geometry::unit_cube(IntVect::splat(32), [true; 3])?;
    let fgeom = cgeom.refine(ratio)?;
    let cba = Arc::new(BoxArray::from_domain(cgeom.domain(), IntVect::splat(16))?);
    let fba = Arc::new(BoxArray::new(random_fine_boxes(&mut r, ratio))?);
    let cdm = Arc::new(DistributionMapping::round_robin(cba.len(), nranks)?);
    let fdm = Arc::new(DistributionMapping::knapsack(&fba, nranks)?);
    let covered = fba.coarsen(ratio)?;
    let outs = RankRuntime::new(nranks).run(|comm| -> miniamr::Result<Real> {
        let mut crse = MultiFab::define(&cba, &cdm, 2, IntVect::zero(), comm.rank(), &ArenaHandle::system())?;
        let mut fine = MultiFab::define(&fba, &fdm, 2, IntVect::unit(), comm.rank(), &ArenaHandle::system())?;
        for (i, fab) in fine.local_fabs_mut() {
            for (k, v) in fab.data_mut().iter_mut().enumerate() {
                *v = unit_hash(seed ^ ((i as u64) << 40) ^ k as u64) * 100.0 + 1.0;
            }
        }
        crse.setval(-7.0);
        average_down(comm, &fine, &mut crse, ratio, 0, 2)?;
        let fv: Vec<_> = fine.fabs().iter().map(|f| f.view()).collect();
        let cv: Vec<_> = crse.fabs().iter().map(|f| f.view()).collect();
        let mut worst: Real = 0.0;
        for c in 0..2 {
            let [sf, af] = comm.backend().reduce_multifab(&fine, [ReduceOp::Sum, ReduceOp::Sum], |l, iv| {
                let v = fv[l].get(iv, c);
                [v, v.abs()]
            });
            let [sc] = comm.backend().reduce_multifab(&crse, [ReduceOp::Sum], |l, iv| {
                [if covered.find(iv).is_some() { cv[l].get(iv, c) } else { 0.0 }]
            });
            let [sf, af, sc] = comm.allreduce([ReduceOp::Sum; 3], [sf, af, sc])?;
            let (vf, vc) = (fgeom.cell_volume(), cgeom.cell_volume());
            worst = worst.max((sf * vf - sc * vc).abs() / (af * vf));
        }
        Ok(worst)
    })?;
    outs.into_iter().try_fold(0.0 as Real, |m, x| Ok(m.max(x?)))
}

/// Largest error of linear interpolation of a linear coarse field onto a
/// random fine level, valid and in-domain ghost cells included.
pub fn linear_interp_error(seed: u64, nranks: usize) -> miniamr::Result<Real> {
    use miniamr::amr::{fill_coarse_patch, InterpScheme};
    let mut r = rng(seed);
    let ratio = 2;
    let periodic = [false, r.random_bool(0.5), false];
    let cgeom = Geometry::unit_cube(IntVect::splat(32), [false; 3])?;
    let cgeom = Geometry::new(cgeom.domain(), cgeom.prob_lo(), cgeom.prob_hi(), periodic)?;
    let fgeom = cgeom.refine(ratio)?;
    let a: Real = r.random_range(-1.0..1.0);
    let g: [Real; 3] = std::array::from_fn(|d| if periodic[d] { 0.0 } else { r.random_range(-2.0..2.0) });
    let field = move |x: [Real; 3]| a + g[0] * x[0] + g[1] * x[1] + g[2] * x[2];
    let cba = Arc::new(BoxArray::from_domain(cgeom.domain(), IntVect::splat(16))?);
    let fba = Arc::new(BoxArray::new(random_fine_boxes(&mut r, ratio))?);
    let cdm = Arc::new(DistributionMapping::round_robin(cba.len(), nranks)?);
    let fdm = Arc::new(DistributionMapping::knapsack(&fba, nranks)?);
    let outs = RankRuntime::new(nranks).run(|comm| -> miniamr::Result<Real> {
        let mut crse = MultiFab::define(&cba, &cdm, 1, IntVect::zero(), comm.rank(), &ArenaHandle::system())?;
        comm.backend().parallel_for_fused(&mut crse, |_, iv, mut cell| cell.set(0, field(cgeom.cell_center(iv))));
        let mut fine = MultiFab::define(&fba, &fdm, 1, IntVect::splat(2), comm.rank(), &ArenaHandle::system())?;
        fine.setval(Real::NAN);
        fill_coarse_patch(comm, &mut fine, &crse, &cgeom, ratio, InterpScheme::Linear)?;
        let dom = fgeom.domain();
        let mut worst: Real = 0.0;
        for (i, fab) in fine.local_fabs() {
            for iv in fine.fab_box(i).cells() {
                if dom.contains(iv) {
                    let e = (fab.get(iv, 0) - field(fgeom.cell_center(iv))).abs();
                    worst = if e.is_nan() { Real::INFINITY } else { worst.max(e) };
                }
            }
        }
        let [w] = comm.allreduce([ReduceOp::Max], [worst])?;
        Ok(w)
    })?;
    outs.into_iter().try_fold(0.0 as Real, |m, x| Ok(m.max(x?)))
}

/// Uniform heat run at an explicit step count.
pub fn heat_uniform(n: i32, nsteps: usize) -> miniamr::Result<miniamr::tools::HeatReport> {
    let mut cfg = miniamr::tools::HeatConfig::uniform(n);
    cfg.cfl = 0.25;
    cfg.nsteps = Some(nsteps);
    Ok(miniamr::tools::run_heat_demo(&cfg)?.0)
}
