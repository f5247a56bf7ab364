use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::index_space::{IndexBox, IndexType, IntVect, SPACEDIM};

static NEXT_LAYOUT_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_LAYOUT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Ordered list of valid-region boxes of one index type.
///
/// Each array gets a process-unique id at construction; communication plans
/// are cached by it. Clones keep the id.
#[derive(Clone, Debug)]
pub struct BoxArray {
    boxes: Vec<IndexBox>,
    ixtype: IndexType,
    id: u64,
    disjoint: bool,
}

impl BoxArray {
    /// Valid regions must be non-empty, share one index type and be pairwise
    /// disjoint.
    pub fn new(boxes: Vec<IndexBox>) -> Result<BoxArray> {
        let ba = Self::new_overlapping(boxes)?;
        for (i, a) in ba.boxes.iter().enumerate() {
            if let Some(j) = ba.boxes[i + 1..].iter().position(|b| a.intersects(b)) {
                return Err(Error::OverlappingBoxes(i, i + 1 + j));
            }
        }
        Ok(BoxArray { disjoint: true, ..ba })
    }

    /// Like [`BoxArray::new`] but overlapping boxes are allowed. Used for
    /// temporaries such as coarsened or grown copies of a layout.
    pub fn new_overlapping(boxes: Vec<IndexBox>) -> Result<BoxArray> {
        let ixtype = boxes.first().map(|b| b.ixtype()).unwrap_or(IndexType::CELL);
        for b in &boxes {
            if b.is_empty() {
                return Err(Error::EmptyBox);
            }
            if b.ixtype() != ixtype {
                return Err(Error::IndexTypeMismatch(ixtype, b.ixtype()));
            }
        }
        Ok(BoxArray { boxes, ixtype, id: next_id(), disjoint: false })
    }

    /// Chops `domain` into boxes of at most `max_grid_size` cells per axis.
    pub fn from_domain(domain: IndexBox, max_grid_size: IntVect) -> Result<BoxArray> {
        if domain.is_empty() {
            return Err(Error::EmptyBox);
        }
        if !max_grid_size.all_ge(IntVect::unit()) {
            return Err(Error::InvalidTileSize(max_grid_size));
        }
        BoxArray::new(domain.tiles(max_grid_size))
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn ixtype(&self) -> IndexType {
        self.ixtype
    }

    pub fn is_disjoint(&self) -> bool {
        self.disjoint
    }

    pub fn boxes(&self) -> &[IndexBox] {
        &self.boxes
    }

    pub fn get(&self, i: usize) -> IndexBox {
        self.boxes[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &IndexBox> {
        self.boxes.iter()
    }

    pub fn num_pts(&self) -> usize {
        self.boxes.iter().map(|b| b.num_pts()).sum()
    }

    /// Smallest box containing every box.
    pub fn minimal_box(&self) -> IndexBox {
        let mut it = self.boxes.iter();
        let Some(first) = it.next() else {
            return IndexBox::empty_of(self.ixtype);
        };
        let (lo, hi) = it.fold((first.lo(), first.hi()), |(lo, hi), b| (lo.min(b.lo()), hi.max(b.hi())));
        IndexBox::with_type(lo, hi, self.ixtype)
    }

    /// First box containing `iv`.
    pub fn find(&self, iv: IntVect) -> Option<usize> {
        self.boxes.iter().position(|b| b.contains(iv))
    }

    /// Indices of boxes intersecting `region`.
    pub fn intersecting(&self, region: &IndexBox) -> Vec<usize> {
        (0..self.boxes.len()).filter(|&i| self.boxes[i].intersects(region)).collect()
    }

    /// True if every cell of `region` lies in some box.
    pub fn covers(&self, region: &IndexBox) -> bool {
        let mut left = vec![*region];
        for b in &self.boxes {
            left = left.into_iter().flat_map(|r| box_difference(&r, b)).collect();
            if left.is_empty() {
                return true;
            }
        }
        left.is_empty()
    }

    pub fn coarsen(&self, ratio: i32) -> Result<BoxArray> {
        let boxes = self.boxes.iter().map(|b| b.coarsen(ratio)).collect::<Result<Vec<_>>>()?;
        BoxArray::new_overlapping(boxes)
    }

    pub fn refine(&self, ratio: i32) -> Result<BoxArray> {
        let boxes = self.boxes.iter().map(|b| b.refine(ratio)).collect::<Result<Vec<_>>>()?;
        let mut ba = BoxArray::new_overlapping(boxes)?;
        ba.disjoint = self.disjoint;
        Ok(ba)
    }
}

impl PartialEq for BoxArray {
    fn eq(&self, other: &Self) -> bool {
        self.boxes == other.boxes
    }
}

/// `a` minus `b` as at most `2 * SPACEDIM` disjoint boxes.
pub fn box_difference(a: &IndexBox, b: &IndexBox) -> Vec<IndexBox> {
    if !a.intersects(b) {
        return vec![*a];
    }
    let mut out = Vec::new();
    let mut rest = *a;
    for d in 0..SPACEDIM {
        let (lo, hi) = (rest.lo(), rest.hi());
        if lo[d] < b.lo()[d] {
            let mut h = hi;
            h[d] = b.lo()[d] - 1;
            out.push(IndexBox::with_type(lo, h, a.ixtype()));
        }
        if hi[d] > b.hi()[d] {
            let mut l = lo;
            l[d] = b.hi()[d] + 1;
            out.push(IndexBox::with_type(l, hi, a.ixtype()));
        }
        let mut l = lo;
        let mut h = hi;
        l[d] = l[d].max(b.lo()[d]);
        h[d] = h[d].min(b.hi()[d]);
        rest = IndexBox::with_type(l, h, a.ixtype());
    }
    out
}

/// Owning rank of each box of a [`BoxArray`].
#[derive(Clone, Debug)]
pub struct DistributionMapping {
    ranks: Vec<usize>,
    nranks: usize,
    id: u64,
}

impl DistributionMapping {
    pub fn new(ranks: Vec<usize>, nranks: usize) -> Result<Self> {
        if nranks == 0 {
            return Err(Error::RankOutOfRange { rank: 0, nranks });
        }
        if let Some(&r) = ranks.iter().find(|&&r| r >= nranks) {
            return Err(Error::RankOutOfRange { rank: r, nranks });
        }
        Ok(DistributionMapping { ranks, nranks, id: next_id() })
    }

    /// Box `i` goes to rank `i % nranks`.
    pub fn round_robin(nboxes: usize, nranks: usize) -> Result<Self> {
        Self::new((0..nboxes).map(|i| i % nranks.max(1)).collect(), nranks)
    }

    /// Greedy balance by cell count: largest boxes first, each to the least
    /// loaded rank (lowest rank on ties).
    pub fn knapsack(ba: &BoxArray, nranks: usize) -> Result<Self> {
        let mut order: Vec<usize> = (0..ba.len()).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(ba.get(i).num_pts()), i));
        let mut load = vec![0usize; nranks.max(1)];
        let mut ranks = vec![0; ba.len()];
        for i in order {
            let r = (0..load.len()).min_by_key(|&r| (load[r], r)).unwrap();
            load[r] += ba.get(i).num_pts();
            ranks[i] = r;
        }
        Self::new(ranks, nranks)
    }

    /// Every box on `rank`.
    pub fn all_on(nboxes: usize, rank: usize, nranks: usize) -> Result<Self> {
        Self::new(vec![rank; nboxes], nranks)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn nranks(&self) -> usize {
        self.nranks
    }

    pub fn rank_of(&self, i: usize) -> usize {
        self.ranks[i]
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }
}

impl PartialEq for DistributionMapping {
    fn eq(&self, other: &Self) -> bool {
        self.ranks == other.ranks && self.nranks == other.nranks
    }
}
