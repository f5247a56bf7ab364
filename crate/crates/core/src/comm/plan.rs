use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::index_space::{Geometry, IndexBox, IndexType, IntVect, SPACEDIM};
use crate::mesh::{BoxArray, DistributionMapping};

static NEXT_PLAN_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    FillBoundary,
    ParallelCopy,
}

/// Everything a plan depends on. Equal keys give interchangeable plans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PlanKey {
    pub dst_ba: u64,
    pub dst_dm: u64,
    pub src_ba: u64,
    pub src_dm: u64,
    pub dst_ngrow: IntVect,
    pub src_ngrow: IntVect,
    pub ixtype: IndexType,
    pub periodic: [bool; SPACEDIM],
    pub domain: IndexBox,
    pub op: OpKind,
    pub rank: usize,
}

/// One rectangular copy: cells of `src_region` in fab `src` go to
/// `dst_region = src_region + shift` in fab `dst`. `offset` is the position,
/// in cells, of the segment inside its peer buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub src: usize,
    pub src_region: IndexBox,
    pub dst: usize,
    pub dst_region: IndexBox,
    pub shift: IntVect,
    pub offset: usize,
}

impl Segment {
    pub fn num_pts(&self) -> usize {
        self.src_region.num_pts()
    }
}

/// Copy schedule of one rank: local copies plus one packed buffer per peer
/// in each direction. Segments are ordered by (destination fab, destination
/// lo, source fab), the same order on both sides of a pair.
#[derive(Debug)]
pub struct CommPlan {
    id: u64,
    pub local: Vec<Segment>,
    pub sends: BTreeMap<usize, Vec<Segment>>,
    pub recvs: BTreeMap<usize, Vec<Segment>>,
}

impl CommPlan {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn is_empty(&self) -> bool {
        self.local.is_empty() && self.sends.is_empty() && self.recvs.is_empty()
    }

    /// Segments of all three lists.
    pub fn num_segments(&self) -> usize {
        self.local.len()
            + self.sends.values().map(Vec::len).sum::<usize>()
            + self.recvs.values().map(Vec::len).sum::<usize>()
    }

    /// Splits a global, ordered copy list into this rank's view.
    fn from_copies(
        mut copies: Vec<Segment>,
        src_dm: &DistributionMapping,
        dst_dm: &DistributionMapping,
        rank: usize,
    ) -> CommPlan {
        copies.sort_by_key(|s| (s.dst, s.dst_region.lo().0, s.src, s.shift.0));
        let mut plan = CommPlan { id: NEXT_PLAN_ID.fetch_add(1, Ordering::Relaxed), local: Vec::new(), sends: BTreeMap::new(), recvs: BTreeMap::new() };
        for s in copies {
            let (from, to) = (src_dm.rank_of(s.src), dst_dm.rank_of(s.dst));
            if from == rank && to == rank {
                push_packed(&mut plan.local, s);
            } else if from == rank {
                push_packed(plan.sends.entry(to).or_default(), s);
            } else if to == rank {
                push_packed(plan.recvs.entry(from).or_default(), s);
            }
        }
        plan
    }
}

fn push_packed(list: &mut Vec<Segment>, mut s: Segment) {
    s.offset = list.last().map(|l| l.offset + l.num_pts()).unwrap_or(0);
    list.push(s);
}

fn shifts_for(periodicity: Option<&Geometry>) -> Vec<IntVect> {
    match periodicity {
        Some(g) => g.periodic_shifts(),
        None => vec![IntVect::zero()],
    }
}

pub(crate) fn check_comm_type(t: IndexType) -> Result<()> {
    if t.is_cell() || t.is_all_nodal() {
        Ok(())
    } else {
        Err(Error::UnsupportedIndexType(t))
    }
}

/// Smallest per-axis extent over the boxes.
pub(crate) fn min_extent(ba: &BoxArray) -> IntVect {
    ba.iter().fold(IntVect::splat(i32::MAX), |m, b| m.min(b.length()))
}

/// Ghost-fill schedule: ghost cells of every fab that overlap the valid
/// region of any fab, or of its periodic image.
pub fn build_fill_boundary(
    ba: &BoxArray,
    dm: &DistributionMapping,
    ngrow: IntVect,
    geom: &Geometry,
    rank: usize,
) -> Result<CommPlan> {
    check_comm_type(ba.ixtype())?;
    let ext = min_extent(ba);
    if (0..SPACEDIM).any(|d| ngrow[d] > ext[d]) {
        return Err(Error::GhostTooWide { ngrow, extent: ext });
    }
    let dom = geom.domain().convert(ba.ixtype());
    if let Some(b) = ba.iter().find(|b| !dom.contains_box(b)) {
        return Err(Error::RegionOutside { region: *b, container: dom });
    }
    let shifts = if geom.is_any_periodic() { geom.periodic_shifts() } else { vec![IntVect::zero()] };
    let mut copies = Vec::new();
    if ngrow != IntVect::zero() {
        for j in 0..ba.len() {
            let grown = ba.get(j).grow_vect(ngrow);
            for i in 0..ba.len() {
                for &s in &shifts {
                    if i == j && s == IntVect::zero() {
                        continue;
                    }
                    let img = ba.get(i).shift(s);
                    let r = grown.intersect(&img)?;
                    if r.is_empty() {
                        continue;
                    }
                    copies.push(Segment { src: i, src_region: r.shift(-s), dst: j, dst_region: r, shift: s, offset: 0 });
                }
            }
        }
    }
    Ok(CommPlan::from_copies(copies, dm, dm, rank))
}

/// Copy schedule from `src` valid boxes grown by `src_ngrow` to `dst` valid
/// boxes grown by `dst_ngrow`, optionally through periodic images.
#[allow(clippy::too_many_arguments)]
pub fn build_parallel_copy(
    dst_ba: &BoxArray,
    dst_dm: &DistributionMapping,
    dst_ngrow: IntVect,
    src_ba: &BoxArray,
    src_dm: &DistributionMapping,
    src_ngrow: IntVect,
    periodicity: Option<&Geometry>,
    rank: usize,
) -> Result<CommPlan> {
    if dst_ba.ixtype() != src_ba.ixtype() {
        return Err(Error::IndexTypeMismatch(dst_ba.ixtype(), src_ba.ixtype()));
    }
    check_comm_type(dst_ba.ixtype())?;
    let shifts = shifts_for(periodicity);
    let mut copies = Vec::new();
    for j in 0..dst_ba.len() {
        let target = dst_ba.get(j).grow_vect(dst_ngrow);
        for i in 0..src_ba.len() {
            let source = src_ba.get(i).grow_vect(src_ngrow);
            for &s in &shifts {
                let r = target.intersect(&source.shift(s))?;
                if r.is_empty() {
                    continue;
                }
                copies.push(Segment { src: i, src_region: r.shift(-s), dst: j, dst_region: r, shift: s, offset: 0 });
            }
        }
    }
    Ok(CommPlan::from_copies(copies, src_dm, dst_dm, rank))
}

/// Shared cache of communication plans with a build counter.
#[derive(Clone, Default)]
pub struct PlanCache {
    plans: Arc<Mutex<HashMap<PlanKey, Arc<CommPlan>>>>,
    builds: Arc<AtomicU64>,
}

impl PlanCache {
    pub fn get_or_build(&self, key: PlanKey, build: impl FnOnce() -> Result<CommPlan>) -> Result<Arc<CommPlan>> {
        if let Some(p) = self.plans.lock().unwrap().get(&key) {
            return Ok(p.clone());
        }
        let plan = Arc::new(build()?);
        self.builds.fetch_add(1, Ordering::Relaxed);
        self.plans.lock().unwrap().insert(key, plan.clone());
        Ok(plan)
    }

    pub fn build_count(&self) -> u64 {
        self.builds.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.plans.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.plans.lock().unwrap().clear();
    }
}

impl std::fmt::Debug for PlanCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PlanCache").field("plans", &self.len()).field("builds", &self.build_count()).finish()
    }
}
