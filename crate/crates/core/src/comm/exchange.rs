use std::collections::BTreeMap;

use super::plan::{build_fill_boundary, build_parallel_copy, check_comm_type, CommPlan, OpKind, PlanKey, Segment};
use super::runtime::Comm;
use crate::arena::ArenaVec;
use crate::error::{Error, Result};
use crate::index_space::{Geometry, IndexBox, IntVect};
use crate::kernels::ReduceOp;
use crate::mesh::{Fab, FabView, MultiFab};
use crate::Real;

/// Calls `f(row start, row length)` for every x-row of `region`.
fn for_rows(region: &IndexBox, mut f: impl FnMut(IntVect, usize)) {
    if region.is_empty() {
        return;
    }
    let (lo, hi) = (region.lo(), region.hi());
    let nx = (hi[0] - lo[0] + 1) as usize;
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            f(IntVect::new(lo[0], j, k), nx);
        }
    }
}

fn pack_region(src: &FabView<'_>, region: &IndexBox, scomp: usize, ncomp: usize, out: &mut [Real]) {
    let fb = src.bx();
    let npts = fb.num_pts();
    let data = src.data();
    let mut pos = 0;
    for c in scomp..scomp + ncomp {
        for_rows(region, |iv, n| {
            let o = fb.offset(iv) + c * npts;
            out[pos..pos + n].copy_from_slice(&data[o..o + n]);
            pos += n;
        });
    }
    debug_assert_eq!(pos, out.len());
}

fn unpack_region(dst: &mut Fab, region: &IndexBox, dcomp: usize, ncomp: usize, buf: &[Real]) {
    let fb = dst.bx();
    let npts = fb.num_pts();
    let data = dst.data_mut();
    let mut pos = 0;
    for c in dcomp..dcomp + ncomp {
        for_rows(region, |iv, n| {
            let o = fb.offset(iv) + c * npts;
            data[o..o + n].copy_from_slice(&buf[pos..pos + n]);
            pos += n;
        });
    }
}

/// Component ranges and ghost widths of a copy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CopySpec {
    pub scomp: usize,
    pub dcomp: usize,
    pub ncomp: usize,
    pub src_ngrow: IntVect,
    pub dst_ngrow: IntVect,
}

impl CopySpec {
    /// Components `0..ncomp`, valid regions only.
    pub fn comps(ncomp: usize) -> CopySpec {
        CopySpec { scomp: 0, dcomp: 0, ncomp, src_ngrow: IntVect::zero(), dst_ngrow: IntVect::zero() }
    }

    pub fn with_src_ngrow(mut self, n: IntVect) -> CopySpec {
        self.src_ngrow = n;
        self
    }

    pub fn with_dst_ngrow(mut self, n: IntVect) -> CopySpec {
        self.dst_ngrow = n;
        self
    }

    pub fn with_comps(mut self, scomp: usize, dcomp: usize, ncomp: usize) -> CopySpec {
        self.scomp = scomp;
        self.dcomp = dcomp;
        self.ncomp = ncomp;
        self
    }
}

fn check_range(start: usize, n: usize, ncomp: usize) -> Result<()> {
    if start + n > ncomp {
        return Err(Error::ComponentRange { start, end: start + n, ncomp });
    }
    Ok(())
}

struct Exchanged {
    local: ArenaVec<Real>,
    received: BTreeMap<usize, ArenaVec<Real>>,
}

/// Packs local and outgoing segments in one launch and sends one message per
/// peer, then receives one message from every peer that has data for us.
fn pack_and_exchange(comm: &Comm, plan: &CommPlan, src: &MultiFab, scomp: usize, ncomp: usize) -> Exchanged {
    let backend = comm.backend();
    let arena = src.arena().clone();
    let size_of = |segs: &[Segment]| segs.last().map(|s| (s.offset + s.num_pts()) * ncomp).unwrap_or(0);

    // one buffer per send peer, then the local one
    let mut lists: Vec<(Option<usize>, &[Segment])> = plan.sends.iter().map(|(&p, s)| (Some(p), &s[..])).collect();
    lists.push((None, &plan.local[..]));
    let mut buffers: Vec<ArenaVec<Real>> = lists
        .iter()
        .map(|(_, segs)| ArenaVec::from_elem_in(0.0, size_of(segs), arena.clone()).expect("comm buffer"))
        .collect();
    {
        let mut pieces: Vec<(Segment, &mut [Real])> = Vec::new();
        for ((_, segs), buf) in lists.iter().zip(buffers.iter_mut()) {
            let mut rest: &mut [Real] = &mut buf[..];
            for s in segs.iter() {
                let (head, tail) = rest.split_at_mut(s.num_pts() * ncomp);
                pieces.push((*s, head));
                rest = tail;
            }
        }
        backend.for_each_mut(&mut pieces, |_, (s, out)| {
            let fab = src.fab(s.src).expect("plan source is local");
            pack_region(&fab.view(), &s.src_region, scomp, ncomp, out);
        });
    }
    let local = buffers.pop().expect("local buffer");
    for ((peer, _), buf) in lists.iter().zip(buffers) {
        let bytes = buf.len() * std::mem::size_of::<Real>();
        comm.send_any(peer.expect("peer"), bytes, Box::new(buf));
    }
    let received = plan
        .recvs
        .keys()
        .map(|&p| (p, *comm.recv_any(p).downcast::<ArenaVec<Real>>().expect("comm buffer type")))
        .collect();
    Exchanged { local, received }
}

/// Writes all incoming segments in one launch, parallel over destination fabs.
// A destination fab with the received pieces that land in it.
type Unpack<'a> = (&'a mut Fab, Vec<(Segment, &'a [Real])>);

fn unpack(comm: &Comm, plan: &CommPlan, data: &Exchanged, dst: &mut MultiFab, dcomp: usize, ncomp: usize) {
    let index = global_to_local(dst);
    let mut per_fab: Vec<Vec<(Segment, &[Real])>> = vec![Vec::new(); dst.nlocal()];
    let sources = std::iter::once((&plan.local, &data.local))
        .chain(plan.recvs.iter().map(|(p, segs)| (segs, &data.received[p])));
    for (segs, buf) in sources {
        for s in segs {
            let o = s.offset * ncomp;
            per_fab[index[s.dst]].push((*s, &buf[o..o + s.num_pts() * ncomp]));
        }
    }
    let mut items: Vec<Unpack<'_>> = dst.fabs_mut().iter_mut().zip(per_fab).collect();
    comm.backend().for_each_mut(&mut items, |_, (fab, segs)| {
        for (s, buf) in segs.iter() {
            unpack_region(fab, &s.dst_region, dcomp, ncomp, buf);
        }
    });
}

fn global_to_local(mf: &MultiFab) -> Vec<usize> {
    let mut m = vec![usize::MAX; mf.len()];
    for (l, &i) in mf.local_indices().iter().enumerate() {
        m[i] = l;
    }
    m
}

/// Fills every ghost cell that overlaps the valid region of some fab (or of
/// its periodic image) for all components. Collective.
pub fn fill_boundary(comm: &Comm, mf: &mut MultiFab, geom: &Geometry) -> Result<()> {
    let n = mf.ncomp();
    fill_boundary_comps(comm, mf, geom, 0, n)
}

pub fn fill_boundary_comps(comm: &Comm, mf: &mut MultiFab, geom: &Geometry, scomp: usize, ncomp: usize) -> Result<()> {
    check_range(scomp, ncomp, mf.ncomp())?;
    check_comm_type(mf.boxarray().ixtype())?;
    let key = PlanKey {
        dst_ba: mf.boxarray().id(),
        dst_dm: mf.dm().id(),
        src_ba: mf.boxarray().id(),
        src_dm: mf.dm().id(),
        dst_ngrow: mf.ngrow(),
        src_ngrow: IntVect::zero(),
        ixtype: mf.boxarray().ixtype(),
        periodic: geom.periodicity(),
        domain: geom.domain(),
        op: OpKind::FillBoundary,
        rank: mf.rank(),
    };
    let plan = mf
        .plans()
        .get_or_build(key, || build_fill_boundary(mf.boxarray(), mf.dm(), mf.ngrow(), geom, mf.rank()))?;
    if plan.is_empty() {
        return Ok(());
    }
    let data = pack_and_exchange(comm, &plan, mf, scomp, ncomp);
    unpack(comm, &plan, &data, mf, scomp, ncomp);
    Ok(())
}

/// Copies `src` into `dst` wherever the (grown) regions of the spec overlap,
/// through periodic images when `periodicity` is given. Collective.
pub fn parallel_copy(
    comm: &Comm,
    dst: &mut MultiFab,
    src: &MultiFab,
    spec: CopySpec,
    periodicity: Option<&Geometry>,
) -> Result<()> {
    check_range(spec.scomp, spec.ncomp, src.ncomp())?;
    check_range(spec.dcomp, spec.ncomp, dst.ncomp())?;
    if !spec.src_ngrow.all_le(src.ngrow()) || !spec.dst_ngrow.all_le(dst.ngrow()) {
        return Err(Error::GhostTooWide { ngrow: spec.src_ngrow.max(spec.dst_ngrow), extent: src.ngrow().min(dst.ngrow()) });
    }
    let key = PlanKey {
        dst_ba: dst.boxarray().id(),
        dst_dm: dst.dm().id(),
        src_ba: src.boxarray().id(),
        src_dm: src.dm().id(),
        dst_ngrow: spec.dst_ngrow,
        src_ngrow: spec.src_ngrow,
        ixtype: dst.boxarray().ixtype(),
        periodic: periodicity.map(|g| g.periodicity()).unwrap_or([false; 3]),
        domain: periodicity.map(|g| g.domain()).unwrap_or(IndexBox::empty()),
        op: OpKind::ParallelCopy,
        rank: dst.rank(),
    };
    let plan = dst.plans().get_or_build(key, || {
        build_parallel_copy(
            dst.boxarray(),
            dst.dm(),
            spec.dst_ngrow,
            src.boxarray(),
            src.dm(),
            spec.src_ngrow,
            periodicity,
            dst.rank(),
        )
    })?;
    if plan.is_empty() {
        return Ok(());
    }
    let data = pack_and_exchange(comm, &plan, src, spec.scomp, spec.ncomp);
    unpack(comm, &plan, &data, dst, spec.dcomp, spec.ncomp);
    Ok(())
}

/// Sets every valid cell `c` of `dst` to `src(map(c))` for components
/// `0..ncomp`. `map` must be deterministic; every mapped cell must lie in a
/// valid box of `src`. Collective; one message per peer with data for it.
pub fn index_mapped_copy(
    comm: &Comm,
    dst: &mut MultiFab,
    src: &MultiFab,
    ncomp: usize,
    map: impl Fn(IntVect) -> IntVect + Sync,
) -> Result<()> {
    check_range(0, ncomp, src.ncomp())?;
    check_range(0, ncomp, dst.ncomp())?;
    let me = comm.rank();
    let sba = src.boxarray().clone();
    // (dst box, dst cell, src box, src cell) in global order
    let mut entries = Vec::new();
    for j in 0..dst.len() {
        let owner = dst.dm().rank_of(j);
        for iv in dst.valid_box(j).cells() {
            let s = map(iv);
            let i = sba.find(s).ok_or(Error::MappingOutOfBounds(s))?;
            let from = src.dm().rank_of(i);
            if owner == me || from == me {
                entries.push((j, iv, i, s, from, owner));
            }
        }
    }
    let mut outgoing: BTreeMap<usize, Vec<Real>> = BTreeMap::new();
    for &(_, _, i, s, from, owner) in &entries {
        if from == me && owner != me {
            let fab = src.fab(i)?;
            let buf = outgoing.entry(owner).or_default();
            buf.extend((0..ncomp).map(|c| fab.get(s, c)));
        }
    }
    for (p, buf) in outgoing {
        comm.send(p, buf);
    }
    let mut incoming: BTreeMap<usize, (Vec<Real>, usize)> = BTreeMap::new();
    let peers: std::collections::BTreeSet<usize> =
        entries.iter().filter(|e| e.5 == me && e.4 != me).map(|e| e.4).collect();
    for p in peers {
        incoming.insert(p, (comm.recv::<Real>(p), 0));
    }
    let mut writes = Vec::with_capacity(entries.len());
    for &(j, iv, i, s, from, owner) in &entries {
        if owner != me {
            continue;
        }
        let vals: Vec<Real> = if from == me {
            let fab = src.fab(i)?;
            (0..ncomp).map(|c| fab.get(s, c)).collect()
        } else {
            let (buf, pos) = incoming.get_mut(&from).expect("incoming buffer");
            let v = buf[*pos..*pos + ncomp].to_vec();
            *pos += ncomp;
            v
        };
        writes.push((j, iv, vals));
    }
    for (j, iv, vals) in writes {
        let fab = dst.fab_mut(j)?;
        for (c, v) in vals.into_iter().enumerate() {
            fab.set(iv, c, v);
        }
    }
    Ok(())
}

/// Combines per-rank values; identical result on every rank.
pub fn global_reduce<const N: usize>(comm: &Comm, ops: [ReduceOp; N], local: [Real; N]) -> Result<[Real; N]> {
    comm.allreduce(ops, local)
}

/// Valid-region data of every box (components in order, Fortran order),
/// assembled on `root`. Other ranks get `None`. One message per rank.
pub fn gather_valid(comm: &Comm, mf: &MultiFab, root: usize) -> Result<Option<Vec<Vec<Real>>>> {
    let ncomp = mf.ncomp();
    let pack = |i: usize| -> Result<Vec<Real>> {
        let vb = mf.valid_box(i);
        let mut out = vec![0.0; vb.num_pts() * ncomp];
        pack_region(&mf.const_array(i)?, &vb, 0, ncomp, &mut out);
        Ok(out)
    };
    if comm.rank() != root {
        let mut all = Vec::new();
        for &i in mf.local_indices() {
            all.extend(pack(i)?);
        }
        if !all.is_empty() || !mf.local_indices().is_empty() {
            comm.send(root, all);
        }
        return Ok(None);
    }
    let mut out: Vec<Vec<Real>> = vec![Vec::new(); mf.len()];
    for &i in mf.local_indices() {
        out[i] = pack(i)?;
    }
    for r in (0..comm.nranks()).filter(|&r| r != root) {
        let boxes: Vec<usize> = (0..mf.len()).filter(|&i| mf.dm().rank_of(i) == r).collect();
        if boxes.is_empty() {
            continue;
        }
        let buf = comm.recv::<Real>(r);
        let mut pos = 0;
        for i in boxes {
            let n = mf.valid_box(i).num_pts() * ncomp;
            out[i] = buf[pos..pos + n].to_vec();
            pos += n;
        }
    }
    Ok(Some(out))
}
