//! Integer index-space algebra: vectors, centering, boxes and problem geometry.
//!
//! Boxes live in a global index space; lower bounds may be negative (ghost
//! regions, periodic images). All types here are plain values.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::Real;

/// Number of spatial dimensions. Lower-dimensional problems use boxes with a
/// single cell along the trailing axes.
pub const SPACEDIM: usize = 3;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct IntVect(pub [i32; SPACEDIM]);

impl IntVect {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        IntVect([x, y, z])
    }

    pub const fn splat(v: i32) -> Self {
        IntVect([v; SPACEDIM])
    }

    pub const fn zero() -> Self {
        IntVect([0; SPACEDIM])
    }

    pub const fn unit() -> Self {
        IntVect([1; SPACEDIM])
    }

    pub fn min(self, o: Self) -> Self {
        IntVect(std::array::from_fn(|d| self.0[d].min(o.0[d])))
    }

    pub fn max(self, o: Self) -> Self {
        IntVect(std::array::from_fn(|d| self.0[d].max(o.0[d])))
    }

    pub fn all_le(self, o: Self) -> bool {
        (0..SPACEDIM).all(|d| self.0[d] <= o.0[d])
    }

    pub fn all_ge(self, o: Self) -> bool {
        (0..SPACEDIM).all(|d| self.0[d] >= o.0[d])
    }

    pub fn all_gt(self, o: Self) -> bool {
        (0..SPACEDIM).all(|d| self.0[d] > o.0[d])
    }

    pub fn max_component(self) -> i32 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn min_component(self) -> i32 {
        self.0.iter().copied().min().unwrap_or(0)
    }

    /// Componentwise floor division.
    pub fn coarsen(self, r: i32) -> Self {
        IntVect(self.0.map(|v| v.div_euclid(r)))
    }

    pub fn scale(self, r: i32) -> Self {
        IntVect(self.0.map(|v| v * r))
    }
}

impl Index<usize> for IntVect {
    type Output = i32;
    fn index(&self, d: usize) -> &i32 {
        &self.0[d]
    }
}

impl IndexMut<usize> for IntVect {
    fn index_mut(&mut self, d: usize) -> &mut i32 {
        &mut self.0[d]
    }
}

impl Add for IntVect {
    type Output = IntVect;
    fn add(self, o: Self) -> Self {
        IntVect(std::array::from_fn(|d| self.0[d] + o.0[d]))
    }
}

impl AddAssign for IntVect {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for IntVect {
    type Output = IntVect;
    fn sub(self, o: Self) -> Self {
        IntVect(std::array::from_fn(|d| self.0[d] - o.0[d]))
    }
}

impl Neg for IntVect {
    type Output = IntVect;
    fn neg(self) -> Self {
        IntVect(self.0.map(|v| -v))
    }
}

impl Mul<i32> for IntVect {
    type Output = IntVect;
    fn mul(self, r: i32) -> Self {
        self.scale(r)
    }
}

impl From<[i32; SPACEDIM]> for IntVect {
    fn from(a: [i32; SPACEDIM]) -> Self {
        IntVect(a)
    }
}

impl fmt::Display for IntVect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

impl fmt::Debug for IntVect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Per-axis centering: `false` = cell, `true` = node.
///
/// Face- and edge-centered data are mixed flags.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct IndexType([bool; SPACEDIM]);

impl IndexType {
    pub const CELL: IndexType = IndexType([false; SPACEDIM]);
    pub const NODE: IndexType = IndexType([true; SPACEDIM]);

    pub const fn new(nodal: [bool; SPACEDIM]) -> Self {
        IndexType(nodal)
    }

    /// Face centering normal to `dir`.
    pub fn face(dir: usize) -> Self {
        let mut t = [false; SPACEDIM];
        t[dir] = true;
        IndexType(t)
    }

    pub fn is_nodal(&self, d: usize) -> bool {
        self.0[d]
    }

    pub fn is_cell(&self) -> bool {
        *self == Self::CELL
    }

    pub fn is_all_nodal(&self) -> bool {
        *self == Self::NODE
    }

    fn as_ivect(&self) -> IntVect {
        IntVect(self.0.map(i32::from))
    }
}

impl fmt::Display for IndexType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.as_ivect(), f)
    }
}

impl fmt::Debug for IndexType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Rectangle of integer indices with a centering.
///
/// A box is empty when `hi < lo` along any axis. Empty boxes compare equal to
/// each other (for the same index type) regardless of their raw bounds; the
/// canonical empty box is `lo = 0, hi = -1`.
#[derive(Clone, Copy)]
pub struct IndexBox {
    lo: IntVect,
    hi: IntVect,
    ixtype: IndexType,
}

impl IndexBox {
    /// Cell-centered box.
    pub fn new(lo: IntVect, hi: IntVect) -> Self {
        IndexBox { lo, hi, ixtype: IndexType::CELL }
    }

    pub fn with_type(lo: IntVect, hi: IntVect, ixtype: IndexType) -> Self {
        IndexBox { lo, hi, ixtype }
    }

    pub fn empty() -> Self {
        Self::empty_of(IndexType::CELL)
    }

    pub fn empty_of(ixtype: IndexType) -> Self {
        IndexBox { lo: IntVect::zero(), hi: IntVect::splat(-1), ixtype }
    }

    /// Box of `n` cells per axis starting at the origin.
    pub fn from_size(n: IntVect) -> Self {
        IndexBox::new(IntVect::zero(), n - IntVect::unit())
    }

    pub fn lo(&self) -> IntVect {
        self.lo
    }

    pub fn hi(&self) -> IntVect {
        self.hi
    }

    pub fn ixtype(&self) -> IndexType {
        self.ixtype
    }

    pub fn is_empty(&self) -> bool {
        (0..SPACEDIM).any(|d| self.hi[d] < self.lo[d])
    }

    /// Number of points per axis (zero on empty axes).
    pub fn length(&self) -> IntVect {
        IntVect(std::array::from_fn(|d| (self.hi[d] - self.lo[d] + 1).max(0)))
    }

    pub fn num_pts(&self) -> usize {
        if self.is_empty() {
            return 0;
        }
        self.length().0.iter().map(|&n| n as usize).product()
    }

    pub fn contains(&self, iv: IntVect) -> bool {
        iv.all_ge(self.lo) && iv.all_le(self.hi)
    }

    /// `true` if `other` is a subset of `self`. The empty box is a subset of everything.
    pub fn contains_box(&self, other: &IndexBox) -> bool {
        other.is_empty() || (self.contains(other.lo) && self.contains(other.hi))
    }

    pub fn intersect(&self, other: &IndexBox) -> Result<IndexBox> {
        if self.ixtype != other.ixtype {
            return Err(Error::IndexTypeMismatch(self.ixtype, other.ixtype));
        }
        let b = IndexBox::with_type(self.lo.max(other.lo), self.hi.min(other.hi), self.ixtype);
        Ok(if b.is_empty() { Self::empty_of(self.ixtype) } else { b })
    }

    pub fn intersects(&self, other: &IndexBox) -> bool {
        self.intersect(other).map(|b| !b.is_empty()).unwrap_or(false)
    }

    pub fn grow(&self, n: i32) -> IndexBox {
        self.grow_vect(IntVect::splat(n))
    }

    pub fn grow_vect(&self, n: IntVect) -> IndexBox {
        IndexBox::with_type(self.lo - n, self.hi + n, self.ixtype)
    }

    pub fn shift(&self, s: IntVect) -> IndexBox {
        IndexBox::with_type(self.lo + s, self.hi + s, self.ixtype)
    }

    pub fn refine(&self, ratio: i32) -> Result<IndexBox> {
        self.check_ratio(ratio)?;
        Ok(IndexBox::new(
            self.lo.scale(ratio),
            self.hi.scale(ratio) + IntVect::splat(ratio - 1),
        ))
    }

    /// Floor-divides both bounds by `ratio`.
    pub fn coarsen(&self, ratio: i32) -> Result<IndexBox> {
        self.check_ratio(ratio)?;
        Ok(IndexBox::new(self.lo.coarsen(ratio), self.hi.coarsen(ratio)))
    }

    fn check_ratio(&self, ratio: i32) -> Result<()> {
        if ratio < 1 {
            return Err(Error::InvalidRatio(ratio));
        }
        if !self.ixtype.is_cell() {
            return Err(Error::NotCellCentered(*self));
        }
        Ok(())
    }

    /// `true` when refining the coarsened box gives back `self`.
    pub fn is_coarsenable(&self, ratio: i32) -> bool {
        (0..SPACEDIM).all(|d| {
            self.lo[d].rem_euclid(ratio) == 0 && (self.hi[d] + 1).rem_euclid(ratio) == 0
        })
    }

    pub fn convert(&self, t: IndexType) -> IndexBox {
        let mut hi = self.hi;
        for d in 0..SPACEDIM {
            match (self.ixtype.is_nodal(d), t.is_nodal(d)) {
                (false, true) => hi[d] += 1,
                (true, false) => hi[d] -= 1,
                _ => {}
            }
        }
        IndexBox::with_type(self.lo, hi, t)
    }

    /// Splits the box into tiles of at most `size` points per axis,
    /// enumerated with x fastest.
    pub fn tiles(&self, size: IntVect) -> Vec<IndexBox> {
        if self.is_empty() {
            return Vec::new();
        }
        let len = self.length();
        let counts: [i32; SPACEDIM] =
            std::array::from_fn(|d| (len[d] + size[d] - 1) / size[d]);
        let mut out = Vec::with_capacity(counts.iter().map(|&c| c as usize).product());
        for tk in 0..counts[2] {
            for tj in 0..counts[1] {
                for ti in 0..counts[0] {
                    let t = IntVect::new(ti, tj, tk);
                    let lo = IntVect(std::array::from_fn(|d| self.lo[d] + t[d] * size[d]));
                    let hi = IntVect(std::array::from_fn(|d| {
                        (lo[d] + size[d] - 1).min(self.hi[d])
                    }));
                    out.push(IndexBox::with_type(lo, hi, self.ixtype));
                }
            }
        }
        out
    }

    /// Linear position of `iv` within the box, x fastest.
    #[inline]
    pub fn offset(&self, iv: IntVect) -> usize {
        let len = self.length();
        let i = (iv[0] - self.lo[0]) as usize;
        let j = (iv[1] - self.lo[1]) as usize;
        let k = (iv[2] - self.lo[2]) as usize;
        i + len[0] as usize * (j + len[1] as usize * k)
    }

    /// Inverse of [`IndexBox::offset`].
    #[inline]
    pub fn at_offset(&self, off: usize) -> IntVect {
        let len = self.length();
        let nx = len[0] as usize;
        let ny = len[1] as usize;
        IntVect::new(
            self.lo[0] + (off % nx) as i32,
            self.lo[1] + ((off / nx) % ny) as i32,
            self.lo[2] + (off / (nx * ny)) as i32,
        )
    }

    /// Iterates over all points, x fastest.
    pub fn cells(&self) -> impl Iterator<Item = IntVect> + '_ {
        let b = *self;
        (0..self.num_pts()).map(move |o| b.at_offset(o))
    }

    /// Visits the points with linear offsets in `start..end`, x fastest.
    #[inline]
    pub fn visit_range(&self, start: usize, end: usize, mut f: impl FnMut(IntVect)) {
        let len = self.length();
        let nx = len[0] as usize;
        let ny = len[1] as usize;
        let mut off = start;
        while off < end {
            let i0 = off % nx;
            let row = off / nx;
            let j = self.lo[1] + (row % ny) as i32;
            let k = self.lo[2] + (row / ny) as i32;
            let n = (nx - i0).min(end - off);
            for i in 0..n {
                f(IntVect::new(self.lo[0] + (i0 + i) as i32, j, k));
            }
            off += n;
        }
    }
}

impl PartialEq for IndexBox {
    fn eq(&self, other: &Self) -> bool {
        if self.ixtype != other.ixtype {
            return false;
        }
        match (self.is_empty(), other.is_empty()) {
            (true, true) => true,
            (false, false) => self.lo == other.lo && self.hi == other.hi,
            _ => false,
        }
    }
}

impl Eq for IndexBox {}

impl Hash for IndexBox {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.ixtype.hash(state);
        if self.is_empty() {
            IntVect::zero().hash(state);
            IntVect::splat(-1).hash(state);
        } else {
            self.lo.hash(state);
            self.hi.hash(state);
        }
    }
}

impl fmt::Display for IndexBox {
    /// `(lo)(hi)(ixtype)`, e.g. `(0,0,0)(7,7,7)(0,0,0)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.lo, self.hi, self.ixtype)
    }
}

impl fmt::Debug for IndexBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Problem domain: level index space, physical extent and periodicity.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    domain: IndexBox,
    prob_lo: [Real; SPACEDIM],
    prob_hi: [Real; SPACEDIM],
    periodic: [bool; SPACEDIM],
}

impl Geometry {
    pub fn new(
        domain: IndexBox,
        prob_lo: [Real; SPACEDIM],
        prob_hi: [Real; SPACEDIM],
        periodic: [bool; SPACEDIM],
    ) -> Result<Geometry> {
        if domain.is_empty() || !domain.ixtype().is_cell() {
            return Err(Error::InvalidGeometry(format!(
                "domain {domain} must be a non-empty cell box"
            )));
        }
        if (0..SPACEDIM).any(|d| prob_hi[d] <= prob_lo[d]) {
            return Err(Error::InvalidGeometry(format!(
                "prob_hi {prob_hi:?} must exceed prob_lo {prob_lo:?}"
            )));
        }
        Ok(Geometry { domain, prob_lo, prob_hi, periodic })
    }

    /// Unit cube `[0,1)^3` with the given cell counts.
    pub fn unit_cube(n_cell: IntVect, periodic: [bool; SPACEDIM]) -> Result<Geometry> {
        Geometry::new(IndexBox::from_size(n_cell), [0.0; SPACEDIM], [1.0; SPACEDIM], periodic)
    }

    pub fn domain(&self) -> IndexBox {
        self.domain
    }

    pub fn prob_lo(&self) -> [Real; SPACEDIM] {
        self.prob_lo
    }

    pub fn prob_hi(&self) -> [Real; SPACEDIM] {
        self.prob_hi
    }

    pub fn periodicity(&self) -> [bool; SPACEDIM] {
        self.periodic
    }

    pub fn is_periodic(&self, d: usize) -> bool {
        self.periodic[d]
    }

    pub fn is_any_periodic(&self) -> bool {
        self.periodic.iter().any(|&p| p)
    }

    pub fn cell_size(&self) -> [Real; SPACEDIM] {
        let len = self.domain.length();
        std::array::from_fn(|d| (self.prob_hi[d] - self.prob_lo[d]) / len[d] as Real)
    }

    pub fn cell_volume(&self) -> Real {
        self.cell_size().iter().product()
    }

    pub fn cell_center(&self, iv: IntVect) -> [Real; SPACEDIM] {
        let dx = self.cell_size();
        std::array::from_fn(|d| self.prob_lo[d] + (iv[d] as Real + 0.5) * dx[d])
    }

    /// Cell containing a physical position (no wrapping).
    pub fn cell_of(&self, x: [Real; SPACEDIM]) -> IntVect {
        let dx = self.cell_size();
        IntVect(std::array::from_fn(|d| ((x[d] - self.prob_lo[d]) / dx[d]).floor() as i32))
    }

    /// Same physical domain at `ratio` times the resolution.
    pub fn refine(&self, ratio: i32) -> Result<Geometry> {
        Geometry::new(self.domain.refine(ratio)?, self.prob_lo, self.prob_hi, self.periodic)
    }

    /// Shifts by whole domain periods in `{-1, 0, 1}` along every periodic
    /// axis; the zero shift comes first.
    pub fn periodic_shifts(&self) -> Vec<IntVect> {
        let len = self.domain.length();
        let range = |d: usize| if self.periodic[d] { -1..=1 } else { 0..=0 };
        let mut out = vec![IntVect::zero()];
        for k in range(2) {
            for j in range(1) {
                for i in range(0) {
                    let s = IntVect::new(i * len[0], j * len[1], k * len[2]);
                    if s != IntVect::zero() {
                        out.push(s);
                    }
                }
            }
        }
        out
    }

    /// Translates of `b` by whole periods that intersect the domain, with the
    /// shift applied. The unshifted box is always the first entry.
    pub fn periodic_shift_images(&self, b: &IndexBox) -> Vec<(IndexBox, IntVect)> {
        let dom = self.domain.convert(b.ixtype());
        let mut out = Vec::new();
        for s in self.periodic_shifts() {
            let img = b.shift(s);
            if s == IntVect::zero() || img.intersects(&dom) {
                out.push((img, s));
            }
        }
        out
    }

    /// Maps a position into the domain along periodic axes. Returns `None` if
    /// the position is outside along a non-periodic axis.
    pub fn wrap_position(&self, mut x: [Real; SPACEDIM]) -> Option<[Real; SPACEDIM]> {
        for d in 0..SPACEDIM {
            let lo = self.prob_lo[d];
            let hi = self.prob_hi[d];
            if x[d] >= lo && x[d] < hi {
                continue;
            }
            if !self.periodic[d] || !x[d].is_finite() {
                return None;
            }
            let l = hi - lo;
            x[d] = lo + (x[d] - lo).rem_euclid(l);
            if x[d] >= hi {
                x[d] = lo;
            }
        }
        Some(x)
    }

    /// Cell of a position already inside the domain, clamped against
    /// round-off at the upper face.
    pub fn cell_of_wrapped(&self, x: [Real; SPACEDIM]) -> IntVect {
        let c = self.cell_of(x);
        c.max(self.domain.lo()).min(self.domain.hi())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b1(lo: i32, hi: i32) -> IndexBox {
        IndexBox::new(IntVect::new(lo, 0, 0), IntVect::new(hi, 0, 0))
    }

    #[test]
    fn intersect_examples() {
        let a = IndexBox::new(IntVect::splat(0), IntVect::splat(3));
        let b = IndexBox::new(IntVect::splat(2), IntVect::splat(5));
        assert_eq!(a.intersect(&b).unwrap(), IndexBox::new(IntVect::splat(2), IntVect::splat(3)));
        assert_eq!(a.intersect(&a).unwrap(), a);
        let e = b1(0, 3).intersect(&b1(5, 7)).unwrap();
        assert!(e.is_empty());
        assert_eq!(e.lo(), IntVect::zero());
        assert_eq!(e.hi(), IntVect::splat(-1));
    }

    #[test]
    fn intersect_mismatched_types_fails() {
        let a = IndexBox::new(IntVect::zero(), IntVect::splat(3));
        let n = a.convert(IndexType::NODE);
        assert!(matches!(a.intersect(&n), Err(Error::IndexTypeMismatch(..))));
    }

    #[test]
    fn grow_examples() {
        let b = IndexBox::new(IntVect::new(0, 0, 0), IntVect::new(7, 7, 0));
        let g = b.grow_vect(IntVect::new(2, 2, 0));
        assert_eq!(g.lo(), IntVect::new(-2, -2, 0));
        assert_eq!(g.hi(), IntVect::new(9, 9, 0));
        assert_eq!(g.num_pts(), 144);
        assert_eq!(b.grow(0), b);
        let d = b1(0, 1).grow_vect(IntVect::new(-1, 0, 0));
        assert_eq!(d.lo()[0], 1);
        assert_eq!(d.hi()[0], 0);
        assert!(d.is_empty());
        assert_eq!(d.num_pts(), 0);
    }

    #[test]
    fn refine_coarsen_examples() {
        assert_eq!(b1(0, 7).refine(2).unwrap().hi()[0], 15);
        let c = b1(1, 14).coarsen(2).unwrap();
        assert_eq!((c.lo()[0], c.hi()[0]), (0, 7));
        let neg = b1(-3, -1).coarsen(2).unwrap();
        assert_eq!((neg.lo()[0], neg.hi()[0]), (-2, -1));
        assert!(matches!(b1(0, 3).refine(0), Err(Error::InvalidRatio(0))));
        let n = b1(0, 3).convert(IndexType::NODE);
        assert!(matches!(n.coarsen(2), Err(Error::NotCellCentered(_))));
    }

    #[test]
    fn convert_examples() {
        let b = b1(0, 7);
        let n = b.convert(IndexType::NODE);
        assert_eq!(n.hi(), IntVect::new(8, 1, 1));
        assert_eq!(b.convert(IndexType::CELL), b);
        assert_eq!(n.convert(IndexType::CELL), b);
        let f = b.convert(IndexType::face(0));
        assert_eq!(f.hi(), IntVect::new(8, 0, 0));
    }

    #[test]
    fn num_pts_examples() {
        assert_eq!(IndexBox::new(IntVect::zero(), IntVect::splat(31)).num_pts(), 32768);
        assert_eq!(IndexBox::empty().num_pts(), 0);
    }

    #[test]
    fn display_format() {
        let b = IndexBox::new(IntVect::new(-1, 0, 2), IntVect::new(3, 4, 5));
        assert_eq!(b.to_string(), "(-1,0,2)(3,4,5)(0,0,0)");
        assert_eq!(b.convert(IndexType::face(1)).to_string(), "(-1,0,2)(3,5,5)(0,1,0)");
    }

    #[test]
    fn periodic_images_1d() {
        let g = Geometry::unit_cube(IntVect::new(8, 1, 1), [true, false, false]).unwrap();
        let imgs = g.periodic_shift_images(&b1(-1, 0));
        assert_eq!(imgs.len(), 2);
        assert_eq!(imgs[0], (b1(-1, 0), IntVect::zero()));
        assert_eq!(imgs[1], (b1(7, 8), IntVect::new(8, 0, 0)));

        let np = Geometry::unit_cube(IntVect::new(8, 1, 1), [false; 3]).unwrap();
        assert_eq!(np.periodic_shift_images(&b1(-1, 0)), vec![(b1(-1, 0), IntVect::zero())]);
        assert_eq!(g.periodic_shift_images(&b1(2, 5)), vec![(b1(2, 5), IntVect::zero())]);
    }

    #[test]
    fn wrap_position_periodic_and_not() {
        let g = Geometry::unit_cube(IntVect::splat(4), [true, false, true]).unwrap();
        let w = g.wrap_position([1.25, 0.5, -0.25]).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[2] - 0.75).abs() < 1e-15);
        assert!(g.wrap_position([0.5, 1.0, 0.5]).is_none());
        assert_eq!(g.wrap_position([1.0, 0.0, 0.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn tiles_with_remainder() {
        let t = b1(0, 9).tiles(IntVect::new(4, 1, 1));
        assert_eq!(t, vec![b1(0, 3), b1(4, 7), b1(8, 9)]);
    }

    #[test]
    fn visit_range_matches_cells() {
        let b = IndexBox::new(IntVect::new(-1, 2, 0), IntVect::new(2, 4, 1));
        let all: Vec<_> = b.cells().collect();
        let mut got = Vec::new();
        b.visit_range(5, 19, |iv| got.push(iv));
        assert_eq!(got, all[5..19]);
        for (o, iv) in all.iter().enumerate() {
            assert_eq!(b.offset(*iv), o);
        }
    }
}
