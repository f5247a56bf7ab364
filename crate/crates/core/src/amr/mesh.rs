use std::collections::BTreeSet;
use std::sync::Arc;

use crate::comm::Comm;
use crate::error::{Error, Result};
use crate::index_space::{Geometry, IndexBox, IntVect, SPACEDIM};
use crate::mesh::{BoxArray, DistributionMapping, MultiFab};
use crate::particles::ParticleLevel;
use crate::Real;

/// Hierarchy parameters. `blocking_factor` and `max_grid_size` are in cells
/// of the level being created.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AmrConfig {
    pub max_level: usize,
    pub ref_ratio: i32,
    pub blocking_factor: i32,
    pub max_grid_size: i32,
    pub n_cell: IntVect,
    pub n_proper: i32,
}

impl Default for AmrConfig {
    fn default() -> Self {
        AmrConfig {
            max_level: 1,
            ref_ratio: 2,
            blocking_factor: 8,
            max_grid_size: 32,
            n_cell: IntVect::splat(32),
            n_proper: 1,
        }
    }
}

impl AmrConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidAmr(m));
        if self.ref_ratio < 1 {
            return bad(format!("ref_ratio {} must be at least 1", self.ref_ratio));
        }
        if self.blocking_factor < self.ref_ratio || self.blocking_factor % self.ref_ratio != 0 {
            return bad(format!(
                "blocking_factor {} must be a multiple of ref_ratio {}",
                self.blocking_factor, self.ref_ratio
            ));
        }
        if self.max_grid_size < self.blocking_factor || self.max_grid_size % self.blocking_factor != 0 {
            return bad(format!(
                "max_grid_size {} must be a multiple of blocking_factor {}",
                self.max_grid_size, self.blocking_factor
            ));
        }
        if !self.n_cell.all_ge(IntVect::unit()) {
            return bad(format!("n_cell {} must be positive", self.n_cell));
        }
        if self.n_proper < 0 {
            return bad("n_proper must be non-negative".into());
        }
        Ok(())
    }
}

/// Cells flagged for refinement on the locally owned boxes of one level.
#[derive(Clone, Debug)]
pub struct TagField {
    ba: Arc<BoxArray>,
    flags: Vec<(usize, Vec<u8>)>,
}

pub const TAG_CLEAR: u8 = 0;
pub const TAG_SET: u8 = 1;

impl TagField {
    /// Clear tags over the local valid boxes of `mf`.
    pub fn new(mf: &MultiFab) -> TagField {
        let flags = mf.local_indices().iter().map(|&i| (i, vec![TAG_CLEAR; mf.valid_box(i).num_pts()])).collect();
        TagField { ba: mf.boxarray().clone(), flags }
    }

    /// Tags every valid cell of `mf` where `pred(value of comp)` holds.
    pub fn from_predicate(mf: &MultiFab, comp: usize, pred: impl Fn(Real) -> bool) -> Result<TagField> {
        let mut t = TagField::new(mf);
        for (i, f) in t.flags.iter_mut() {
            let vb = mf.valid_box(*i);
            let fab = mf.fab(*i)?;
            for (o, iv) in vb.cells().enumerate() {
                if pred(fab.get(iv, comp)) {
                    f[o] = TAG_SET;
                }
            }
        }
        Ok(t)
    }

    pub fn set(&mut self, iv: IntVect) -> Result<()> {
        for (i, f) in self.flags.iter_mut() {
            let vb = self.ba.get(*i);
            if vb.contains(iv) {
                f[vb.offset(iv)] = TAG_SET;
                return Ok(());
            }
        }
        Err(Error::TagOutside(iv))
    }

    /// Locally tagged cells, box by box.
    pub fn tagged(&self) -> Vec<IntVect> {
        let mut out = Vec::new();
        for (i, f) in &self.flags {
            let vb = self.ba.get(*i);
            out.extend(f.iter().enumerate().filter(|(_, &t)| t == TAG_SET).map(|(o, _)| vb.at_offset(o)));
        }
        out
    }
}

/// Geometry, grids and distribution of every level of a hierarchy.
#[derive(Clone, Debug)]
pub struct AmrMesh {
    config: AmrConfig,
    nranks: usize,
    geoms: Vec<Geometry>,
    grids: Vec<Arc<BoxArray>>,
    dms: Vec<Arc<DistributionMapping>>,
}

impl AmrMesh {
    /// Level 0 covers the domain, chopped by `max_grid_size`.
    pub fn new(
        config: AmrConfig,
        prob_lo: [Real; SPACEDIM],
        prob_hi: [Real; SPACEDIM],
        periodic: [bool; SPACEDIM],
        nranks: usize,
    ) -> Result<AmrMesh> {
        config.validate()?;
        let g0 = Geometry::new(IndexBox::from_size(config.n_cell), prob_lo, prob_hi, periodic)?;
        let mut geoms = vec![g0];
        for l in 0..config.max_level {
            let g = geoms[l].refine(config.ref_ratio)?;
            geoms.push(g);
        }
        let ba = BoxArray::from_domain(geoms[0].domain(), IntVect::splat(config.max_grid_size))?;
        let dm = DistributionMapping::knapsack(&ba, nranks)?;
        Ok(AmrMesh { config, nranks, geoms, grids: vec![Arc::new(ba)], dms: vec![Arc::new(dm)] })
    }

    pub fn config(&self) -> &AmrConfig {
        &self.config
    }

    pub fn nranks(&self) -> usize {
        self.nranks
    }

    pub fn ref_ratio(&self) -> i32 {
        self.config.ref_ratio
    }

    pub fn finest_level(&self) -> usize {
        self.grids.len() - 1
    }

    pub fn max_level(&self) -> usize {
        self.config.max_level
    }

    pub fn geom(&self, level: usize) -> &Geometry {
        &self.geoms[level]
    }

    pub fn boxarray(&self, level: usize) -> &Arc<BoxArray> {
        &self.grids[level]
    }

    pub fn dm(&self, level: usize) -> &Arc<DistributionMapping> {
        &self.dms[level]
    }

    /// Installs `ba` as `level` (at most one past the finest) and drops any
    /// finer level. An empty array removes the level.
    pub fn set_level(&mut self, level: usize, ba: BoxArray) -> Result<()> {
        if level == 0 || level > self.finest_level() + 1 || level > self.config.max_level {
            return Err(Error::NoSuchLevel(level));
        }
        self.grids.truncate(level);
        self.dms.truncate(level);
        if ba.is_empty() {
            return Ok(());
        }
        let dm = DistributionMapping::knapsack(&ba, self.nranks)?;
        self.grids.push(Arc::new(ba));
        self.dms.push(Arc::new(dm));
        if !self.is_properly_nested(level) {
            self.grids.truncate(level);
            self.dms.truncate(level);
            return Err(Error::InvalidAmr(format!("level {level} is not properly nested")));
        }
        Ok(())
    }

    /// Binning levels for a particle container on this hierarchy.
    pub fn particle_levels(&self) -> Result<Vec<ParticleLevel>> {
        (0..=self.finest_level())
            .map(|l| ParticleLevel::new(self.geoms[l].clone(), self.grids[l].clone(), self.dms[l].clone()))
            .collect()
    }

    /// True if `coarse_region` grown by `n_proper` is covered by the boxes of
    /// `level`, ignoring cells outside the domain (through periodic images).
    fn nests(&self, level: usize, coarse_region: &IndexBox) -> bool {
        let geom = &self.geoms[level];
        let dom = geom.domain();
        let grown = coarse_region.grow(self.config.n_proper);
        for s in geom.periodic_shifts() {
            let piece = grown.shift(s).intersect(&dom).expect("same index type");
            if !piece.is_empty() && !self.grids[level].covers(&piece) {
                return false;
            }
        }
        true
    }

    /// True when every box of `fine_level`, coarsened and grown by
    /// `n_proper`, lies in the union of the next coarser level's boxes
    /// (physical boundaries excepted).
    pub fn is_properly_nested(&self, fine_level: usize) -> bool {
        if fine_level == 0 || fine_level > self.finest_level() {
            return true;
        }
        let r = self.config.ref_ratio;
        self.grids[fine_level].iter().all(|b| b.coarsen(r).map(|c| self.nests(fine_level - 1, &c)).unwrap_or(false))
    }

    /// Boxes for level + 1 covering every tagged cell of `level`. Collective:
    /// tags are gathered so every rank computes the same boxes.
    ///
    /// Tagged cells are binned into chunks of `blocking_factor / ref_ratio`
    /// coarse cells; face-connected chunks are clustered, cluster bounding
    /// boxes are merged until disjoint and then split by `max_grid_size`. A
    /// box that would break proper nesting is replaced by its tagged chunks.
    pub fn regrid(&self, comm: &Comm, level: usize, tags: &TagField) -> Result<BoxArray> {
        if level >= self.config.max_level || level > self.finest_level() {
            return Err(Error::NoSuchLevel(level + 1));
        }
        let geom = &self.geoms[level];
        let r = self.config.ref_ratio;
        let chunk = self.config.blocking_factor / r;
        let mut local = BTreeSet::new();
        for iv in tags.tagged() {
            if !geom.domain().contains(iv) {
                return Err(Error::TagOutside(iv));
            }
            local.insert(iv.coarsen(chunk));
        }
        let all: BTreeSet<IntVect> =
            comm.allgather(local.into_iter().collect::<Vec<_>>()).into_iter().flatten().collect();
        let chunk_box = |c: IntVect| IndexBox::new(c.scale(chunk), c.scale(chunk) + IntVect::splat(chunk - 1));

        let chunks: BTreeSet<IntVect> = all
            .into_iter()
            .filter(|&c| {
                let b = chunk_box(c).intersect(&geom.domain()).expect("cell boxes");
                !b.is_empty() && self.nests(level, &b)
            })
            .collect();

        let mut boxes = Vec::new();
        for cluster in clusters(&chunks) {
            boxes.push((bounding_box(&cluster), cluster));
        }
        // merge overlapping bounding boxes until disjoint
        loop {
            let mut merged = false;
            'outer: for i in 0..boxes.len() {
                for j in i + 1..boxes.len() {
                    if boxes[i].0.intersects(&boxes[j].0) {
                        let (bj, cj) = boxes.swap_remove(j);
                        let (bi, ci) = &mut boxes[i];
                        *bi = IndexBox::new(bi.lo().min(bj.lo()), bi.hi().max(bj.hi()));
                        ci.extend(cj);
                        merged = true;
                        break 'outer;
                    }
                }
            }
            if !merged {
                break;
            }
        }
        boxes.sort_by_key(|(b, _)| (b.lo()[2], b.lo()[1], b.lo()[0]));

        let per_box = IntVect::splat(self.config.max_grid_size / self.config.blocking_factor);
        let mut out = Vec::new();
        for (bb, cluster) in boxes {
            for piece in bb.tiles(per_box) {
                let members: Vec<IntVect> = cluster.iter().copied().filter(|c| piece.contains(*c)).collect();
                if members.is_empty() {
                    continue;
                }
                let pb = bounding_box(&members);
                let crse = IndexBox::new(pb.lo().scale(chunk), pb.hi().scale(chunk) + IntVect::splat(chunk - 1))
                    .intersect(&geom.domain())
                    .expect("cell boxes");
                if self.nests(level, &crse) {
                    out.push(crse.refine(r)?);
                } else {
                    for c in members {
                        let b = chunk_box(c).intersect(&geom.domain()).expect("cell boxes");
                        out.push(b.refine(r)?);
                    }
                }
            }
        }
        BoxArray::new(out)
    }
}

fn bounding_box(cells: &[IntVect]) -> IndexBox {
    let lo = cells.iter().fold(cells[0], |a, &c| a.min(c));
    let hi = cells.iter().fold(cells[0], |a, &c| a.max(c));
    IndexBox::new(lo, hi)
}

/// Face-connected components, each in sorted order; components ordered by
/// their smallest member.
fn clusters(cells: &BTreeSet<IntVect>) -> Vec<Vec<IntVect>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &start in cells {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some(c) = stack.pop() {
            for d in 0..SPACEDIM {
                for s in [-1, 1] {
                    let mut n = c;
                    n[d] += s;
                    if cells.contains(&n) && seen.insert(n) {
                        comp.push(n);
                        stack.push(n);
                    }
                }
            }
        }
        comp.sort();
        out.push(comp);
    }
    out
}
