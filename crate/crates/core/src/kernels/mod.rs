//! Launch backend: element-wise loops over boxes, fused loops over every fab
//! of a multifab, specialized dispatch and single-pass mixed reductions.
//!
//! Every public launch increments the backend's launch counter exactly once.
//! Work is split into contiguous chunks of a flattened index space; the
//! chunking depends only on the backend kind and worker count, so results are
//! reproducible for a fixed configuration. Without the `parallel` feature the
//! CPU-parallel backend runs the same chunks one after another.

mod reduce;
mod specialize;
mod token;

use std::fmt;
use std::marker::PhantomData;
use std::ops::{Index, IndexMut, Range};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
#[cfg(feature = "parallel")]
use std::sync::Arc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub use reduce::ReduceOp;
pub use specialize::{OptionTable, SpecializedKernel};
pub use token::CompletionToken;

use crate::error::{Error, Result};
use crate::index_space::{IndexBox, IntVect};
use crate::mesh::{Fab, FabViewMut, MultiFab};
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BackendKind {
    Serial,
    CpuParallel,
}

impl FromStr for BackendKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "serial" => Ok(BackendKind::Serial),
            "parallel" | "cpu_parallel" => Ok(BackendKind::CpuParallel),
            _ => Err(Error::InputsValue { key: "backend".into(), message: format!("unknown backend `{s}`") }),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Serial => "serial",
            BackendKind::CpuParallel => "parallel",
        })
    }
}

/// Number of hardware threads, at least 1.
pub fn hardware_parallelism() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

pub struct Backend {
    kind: BackendKind,
    nworkers: usize,
    launches: AtomicU64,
    #[cfg(feature = "parallel")]
    pool: Option<Arc<rayon::ThreadPool>>,
}

/// Raw pointer that may cross threads. Users guarantee disjoint access.
#[derive(Clone, Copy)]
struct SyncPtr(*mut Real);
// SAFETY: only used for writes to provably disjoint elements.
unsafe impl Send for SyncPtr {}
unsafe impl Sync for SyncPtr {}

/// Write access to all components of one cell during a launch.
pub struct CellMut<'a> {
    ptr: *mut Real,
    stride: usize,
    ncomp: usize,
    _marker: PhantomData<&'a mut Real>,
}

impl CellMut<'_> {
    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    #[inline]
    pub fn get(&self, c: usize) -> Real {
        self[c]
    }

    #[inline]
    pub fn set(&mut self, c: usize, v: Real) {
        self[c] = v;
    }
}

impl Index<usize> for CellMut<'_> {
    type Output = Real;
    #[inline]
    fn index(&self, c: usize) -> &Real {
        assert!(c < self.ncomp, "component {c} out of range");
        // SAFETY: c < ncomp keeps the offset inside the fab.
        unsafe { &*self.ptr.add(c * self.stride) }
    }
}

impl IndexMut<usize> for CellMut<'_> {
    #[inline]
    fn index_mut(&mut self, c: usize) -> &mut Real {
        assert!(c < self.ncomp, "component {c} out of range");
        // SAFETY: as above; the launch hands out each cell once.
        unsafe { &mut *self.ptr.add(c * self.stride) }
    }
}

/// Destination fab of a fused launch, by raw parts.
#[derive(Clone, Copy)]
struct Target {
    ptr: SyncPtr,
    bx: IndexBox,
    ncomp: usize,
}

impl Target {
    fn of(view: &mut FabViewMut<'_>) -> Target {
        Target { ptr: SyncPtr(view.as_mut_ptr()), bx: view.bx(), ncomp: view.ncomp() }
    }

    #[inline]
    fn cell(&self, iv: IntVect) -> CellMut<'_> {
        let off = self.bx.offset(iv);
        CellMut {
            // SAFETY: iv lies in bx, checked when the launch was set up.
            ptr: unsafe { self.ptr.0.add(off) },
            stride: self.bx.num_pts(),
            ncomp: self.ncomp,
            _marker: PhantomData,
        }
    }
}

fn chunk_bounds(total: usize, nchunks: usize, c: usize) -> Range<usize> {
    let lo = (total as u128 * c as u128 / nchunks as u128) as usize;
    let hi = (total as u128 * (c + 1) as u128 / nchunks as u128) as usize;
    lo..hi
}

/// Prefix sums of segment lengths with chunk-to-segment lookup.
struct Segments {
    starts: Vec<usize>,
}

impl Segments {
    fn new(lens: impl IntoIterator<Item = usize>) -> Segments {
        let mut starts = vec![0];
        for n in lens {
            starts.push(starts.last().unwrap() + n);
        }
        Segments { starts }
    }

    fn total(&self) -> usize {
        *self.starts.last().unwrap()
    }

    /// Calls `f(segment, local range)` for every piece of `range`.
    fn visit(&self, range: Range<usize>, mut f: impl FnMut(usize, Range<usize>)) {
        if range.is_empty() {
            return;
        }
        let mut s = self.starts.partition_point(|&st| st <= range.start) - 1;
        let mut pos = range.start;
        while pos < range.end {
            let seg_end = self.starts[s + 1];
            let end = seg_end.min(range.end);
            if end > pos {
                f(s, pos - self.starts[s]..end - self.starts[s]);
            }
            pos = end;
            s += 1;
        }
    }
}

impl Backend {
    pub fn serial() -> Backend {
        Backend {
            kind: BackendKind::Serial,
            nworkers: 1,
            launches: AtomicU64::new(0),
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// CPU-parallel backend with its own pool of `nworkers` threads
    /// (0 selects [`hardware_parallelism`]).
    pub fn cpu_parallel(nworkers: usize) -> Backend {
        let nworkers = if nworkers == 0 { hardware_parallelism() } else { nworkers };
        Backend {
            kind: BackendKind::CpuParallel,
            nworkers,
            launches: AtomicU64::new(0),
            #[cfg(feature = "parallel")]
            pool: rayon::ThreadPoolBuilder::new()
                .num_threads(nworkers)
                .thread_name(|i| format!("miniamr-worker-{i}"))
                .build()
                .ok()
                .map(Arc::new),
        }
    }

    pub fn new(kind: BackendKind, nworkers: usize) -> Backend {
        match kind {
            BackendKind::Serial => Backend::serial(),
            BackendKind::CpuParallel => Backend::cpu_parallel(nworkers),
        }
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    pub fn nworkers(&self) -> usize {
        self.nworkers
    }

    /// Number of launches so far.
    pub fn launches(&self) -> u64 {
        self.launches.load(Ordering::Relaxed)
    }

    fn count_launch(&self) {
        self.launches.fetch_add(1, Ordering::Relaxed);
    }

    fn elementwise_chunks(&self, total: usize) -> usize {
        match self.kind {
            BackendKind::Serial => 1,
            BackendKind::CpuParallel => (self.nworkers * 4).min(total).max(1),
        }
    }

    fn reduce_chunks(&self) -> usize {
        match self.kind {
            BackendKind::Serial => 1,
            BackendKind::CpuParallel => self.nworkers,
        }
    }

    fn map_chunks<T: Send>(&self, nchunks: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
        #[cfg(feature = "parallel")]
        if let (BackendKind::CpuParallel, Some(pool), true) = (self.kind, &self.pool, nchunks > 1) {
            return pool.install(|| (0..nchunks).into_par_iter().map(&f).collect());
        }
        (0..nchunks).map(f).collect()
    }

    fn for_each_item<T: Send>(&self, items: &mut [T], f: impl Fn(usize, &mut T) + Sync) {
        #[cfg(feature = "parallel")]
        if let (BackendKind::CpuParallel, Some(pool), true) = (self.kind, &self.pool, items.len() > 1) {
            pool.install(|| items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t)));
            return;
        }
        for (i, t) in items.iter_mut().enumerate() {
            f(i, t);
        }
    }

    fn run_segments(&self, segs: &Segments, f: impl Fn(usize, Range<usize>) + Sync) {
        let total = segs.total();
        let n = self.elementwise_chunks(total);
        self.map_chunks(n, |c| segs.visit(chunk_bounds(total, n, c), &f));
    }

    fn reduce_over<const N: usize>(
        &self,
        segs: &Segments,
        ops: [ReduceOp; N],
        f: impl Fn(usize, Range<usize>, &mut [Real; N]) + Sync,
    ) -> [Real; N] {
        let total = segs.total();
        let n = self.reduce_chunks();
        let partials = self.map_chunks(n, |c| {
            let mut acc = ReduceOp::identities(ops);
            segs.visit(chunk_bounds(total, n, c), |s, r| f(s, r, &mut acc));
            acc
        });
        let mut out = ReduceOp::identities(ops);
        for p in &partials {
            ReduceOp::combine_all(&ops, &mut out, p);
        }
        out
    }

    /// Calls `f(i)` for every `i < n`.
    pub fn parallel_for_n(&self, n: usize, f: impl Fn(usize) + Sync) {
        self.count_launch();
        self.run_segments(&Segments::new([n]), |_, r| r.for_each(&f));
    }

    /// Flattens segments of the given lengths into one index space and calls
    /// `f(segment, range)` on contiguous pieces of it. One launch.
    pub fn parallel_for_segments(&self, lens: &[usize], f: impl Fn(usize, Range<usize>) + Sync) {
        self.count_launch();
        self.run_segments(&Segments::new(lens.iter().copied()), f);
    }

    /// Calls `f(iv)` for every cell of `bx`.
    pub fn parallel_for_box(&self, bx: IndexBox, f: impl Fn(IntVect) + Sync) {
        self.count_launch();
        self.run_segments(&Segments::new([bx.num_pts()]), |_, r| bx.visit_range(r.start, r.end, &f));
    }

    /// Calls `f(iv, cell)` for every cell of `bx`, with write access to the
    /// cell of `dst`.
    pub fn parallel_for_box_mut(
        &self,
        bx: IndexBox,
        dst: &mut FabViewMut<'_>,
        f: impl Fn(IntVect, CellMut<'_>) + Sync,
    ) -> Result<()> {
        if !bx.is_empty() && !dst.bx().contains_box(&bx) {
            return Err(Error::RegionOutside { region: bx, container: dst.bx() });
        }
        let t = Target::of(dst);
        self.count_launch();
        self.run_segments(&Segments::new([bx.num_pts()]), |_, r| {
            bx.visit_range(r.start, r.end, |iv| f(iv, t.cell(iv)))
        });
        Ok(())
    }

    /// One launch over the valid cells of every local fab of `mf`. The body
    /// gets the local fab index, the cell and write access to that cell.
    pub fn parallel_for_fused(&self, mf: &mut MultiFab, f: impl Fn(usize, IntVect, CellMut<'_>) + Sync) {
        let regions: Vec<(usize, IndexBox)> =
            mf.local_indices().iter().enumerate().map(|(l, &i)| (l, mf.valid_box(i))).collect();
        self.parallel_for_regions(mf.fabs_mut(), &regions, f).expect("valid boxes lie in their fabs");
    }

    /// One launch over `(fab, region)` pairs. Regions of one fab must be
    /// disjoint and inside the fab.
    pub fn parallel_for_regions(
        &self,
        fabs: &mut [Fab],
        regions: &[(usize, IndexBox)],
        f: impl Fn(usize, IntVect, CellMut<'_>) + Sync,
    ) -> Result<()> {
        for (k, (l, r)) in regions.iter().enumerate() {
            let fb = fabs[*l].bx();
            if !r.is_empty() && !fb.contains_box(r) {
                return Err(Error::RegionOutside { region: *r, container: fb });
            }
            if regions[k + 1..].iter().any(|(l2, r2)| l2 == l && r.intersects(r2)) {
                return Err(Error::NotDisjoint);
            }
        }
        let targets: Vec<Target> = fabs.iter_mut().map(|fab| Target::of(&mut fab.view_mut())).collect();
        self.count_launch();
        let segs = Segments::new(regions.iter().map(|(_, r)| r.num_pts()));
        self.run_segments(&segs, |s, range| {
            let (l, r) = regions[s];
            let t = targets[l];
            r.visit_range(range.start, range.end, |iv| f(l, iv, t.cell(iv)));
        });
        Ok(())
    }

    /// Calls `f(i, item)` for every item, in parallel. One launch.
    pub fn for_each_mut<T: Send>(&self, items: &mut [T], f: impl Fn(usize, &mut T) + Sync) {
        self.count_launch();
        self.for_each_item(items, f);
    }

    /// Single-pass reduction of `f(i)` over `i < n`.
    pub fn reduce_n<const N: usize>(
        &self,
        n: usize,
        ops: [ReduceOp; N],
        f: impl Fn(usize) -> [Real; N] + Sync,
    ) -> [Real; N] {
        self.count_launch();
        self.reduce_over(&Segments::new([n]), ops, |_, r, acc| {
            for i in r {
                ReduceOp::combine_all(&ops, acc, &f(i));
            }
        })
    }

    /// Single-pass reduction of `f(segment, i)` over flattened segments.
    pub fn reduce_segments<const N: usize>(
        &self,
        lens: &[usize],
        ops: [ReduceOp; N],
        f: impl Fn(usize, usize) -> [Real; N] + Sync,
    ) -> [Real; N] {
        self.count_launch();
        self.reduce_over(&Segments::new(lens.iter().copied()), ops, |s, r, acc| {
            for i in r {
                ReduceOp::combine_all(&ops, acc, &f(s, i));
            }
        })
    }

    pub fn reduce_box<const N: usize>(
        &self,
        bx: IndexBox,
        ops: [ReduceOp; N],
        f: impl Fn(IntVect) -> [Real; N] + Sync,
    ) -> [Real; N] {
        self.count_launch();
        self.reduce_over(&Segments::new([bx.num_pts()]), ops, |_, r, acc| {
            bx.visit_range(r.start, r.end, |iv| ReduceOp::combine_all(&ops, acc, &f(iv)))
        })
    }

    /// Single-pass reduction over the valid cells of every local fab of `mf`.
    /// The body gets the local fab index and the cell.
    pub fn reduce_multifab<const N: usize>(
        &self,
        mf: &MultiFab,
        ops: [ReduceOp; N],
        f: impl Fn(usize, IntVect) -> [Real; N] + Sync,
    ) -> [Real; N] {
        let boxes: Vec<IndexBox> = mf.local_indices().iter().map(|&i| mf.valid_box(i)).collect();
        self.reduce_regions(&boxes, ops, f)
    }

    /// Single-pass reduction over a list of regions, body gets the region index.
    pub fn reduce_regions<const N: usize>(
        &self,
        regions: &[IndexBox],
        ops: [ReduceOp; N],
        f: impl Fn(usize, IntVect) -> [Real; N] + Sync,
    ) -> [Real; N] {
        self.count_launch();
        let segs = Segments::new(regions.iter().map(|r| r.num_pts()));
        self.reduce_over(&segs, ops, |s, r, acc| {
            regions[s].visit_range(r.start, r.end, |iv| ReduceOp::combine_all(&ops, acc, &f(s, iv)))
        })
    }

    /// Runs `task` without waiting for it. Counts as one launch.
    pub fn launch_async(&self, task: impl FnOnce() + Send + 'static) -> CompletionToken {
        self.count_launch();
        let token = CompletionToken::new();
        let t = token.clone();
        let job = move || {
            let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(task));
            if r.is_err() {
                t.mark_panicked();
            }
            t.complete();
        };
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            pool.spawn(job);
            return token;
        }
        std::thread::spawn(job);
        token
    }
}

impl Default for Backend {
    fn default() -> Self {
        Backend::cpu_parallel(0)
    }
}

impl fmt::Debug for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backend")
            .field("kind", &self.kind)
            .field("nworkers", &self.nworkers)
            .field("launches", &self.launches())
            .finish()
    }
}
