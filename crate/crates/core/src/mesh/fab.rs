use std::ops::{Index, IndexMut, Range};

use crate::arena::{ArenaHandle, ArenaVec};
use crate::error::{Error, Result};
use crate::index_space::{IndexBox, IntVect};
use crate::Real;

/// Signaling NaN used to fill freshly allocated fabs.
#[cfg(not(feature = "single-precision"))]
pub const SIGNALING_NAN: Real = f64::from_bits(0x7FF4_0000_0000_0000);
#[cfg(feature = "single-precision")]
pub const SIGNALING_NAN: Real = f32::from_bits(0x7FA0_0000);

pub fn is_signaling_nan(v: Real) -> bool {
    v.to_bits() == SIGNALING_NAN.to_bits()
}

fn check_comps(comps: &Range<usize>, ncomp: usize) -> Result<()> {
    if comps.start > comps.end || comps.end > ncomp {
        return Err(Error::ComponentRange { start: comps.start, end: comps.end, ncomp });
    }
    Ok(())
}

/// Multi-component array over a box, Fortran ordered: x fastest, then y, z,
/// and the component slowest. Indexed with global cell indices.
pub struct Fab {
    bx: IndexBox,
    ncomp: usize,
    data: ArenaVec<Real>,
}

impl Fab {
    /// Allocates from `arena`; every element starts as [`SIGNALING_NAN`].
    pub fn new(bx: IndexBox, ncomp: usize, arena: &ArenaHandle) -> Result<Fab> {
        if bx.is_empty() {
            return Err(Error::EmptyBox);
        }
        if ncomp == 0 {
            return Err(Error::ZeroComponents);
        }
        let data = ArenaVec::from_elem_in(SIGNALING_NAN, bx.num_pts() * ncomp, arena.clone())?;
        Ok(Fab { bx, ncomp, data })
    }

    pub fn bx(&self) -> IndexBox {
        self.bx
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn npts(&self) -> usize {
        self.bx.num_pts()
    }

    pub fn arena(&self) -> &ArenaHandle {
        self.data.arena()
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Real] {
        &mut self.data
    }

    pub fn view(&self) -> FabView<'_> {
        FabView { data: &self.data, bx: self.bx, ncomp: self.ncomp }
    }

    pub fn view_mut(&mut self) -> FabViewMut<'_> {
        FabViewMut { data: &mut self.data, bx: self.bx, ncomp: self.ncomp }
    }

    pub fn get(&self, iv: IntVect, c: usize) -> Real {
        self.view().get(iv, c)
    }

    pub fn set(&mut self, iv: IntVect, c: usize, v: Real) {
        self.view_mut().set(iv, c, v)
    }

    pub fn setval(&mut self, value: Real, region: &IndexBox, comps: Range<usize>) -> Result<()> {
        self.view_mut().setval(value, region, comps)
    }

    pub fn setval_all(&mut self, value: Real) {
        self.data.fill(value);
    }
}

impl Clone for Fab {
    fn clone(&self) -> Self {
        Fab { bx: self.bx, ncomp: self.ncomp, data: self.data.clone() }
    }
}

impl std::fmt::Debug for Fab {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fab").field("box", &self.bx).field("ncomp", &self.ncomp).finish()
    }
}

#[inline]
fn offset(bx: &IndexBox, iv: IntVect, c: usize) -> usize {
    debug_assert!(bx.contains(iv), "{iv} outside {bx}");
    bx.offset(iv) + c * bx.num_pts()
}

/// Read-only, non-owning accessor over fab storage.
#[derive(Clone, Copy)]
pub struct FabView<'a> {
    data: &'a [Real],
    bx: IndexBox,
    ncomp: usize,
}

impl<'a> FabView<'a> {
    pub fn new(data: &'a [Real], bx: IndexBox, ncomp: usize) -> Self {
        assert_eq!(data.len(), bx.num_pts() * ncomp);
        FabView { data, bx, ncomp }
    }

    pub fn bx(&self) -> IndexBox {
        self.bx
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    #[inline]
    pub fn get(&self, iv: IntVect, c: usize) -> Real {
        self.data[offset(&self.bx, iv, c)]
    }

    #[inline]
    pub fn at(&self, i: i32, j: i32, k: i32, c: usize) -> Real {
        self.get(IntVect::new(i, j, k), c)
    }

    /// All points of component `c`.
    pub fn comp(&self, c: usize) -> &'a [Real] {
        let n = self.bx.num_pts();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn data(&self) -> &'a [Real] {
        self.data
    }

    pub fn as_ptr(&self) -> *const Real {
        self.data.as_ptr()
    }
}

impl Index<(IntVect, usize)> for FabView<'_> {
    type Output = Real;
    fn index(&self, (iv, c): (IntVect, usize)) -> &Real {
        &self.data[offset(&self.bx, iv, c)]
    }
}

/// Writable, non-owning accessor over fab storage.
pub struct FabViewMut<'a> {
    data: &'a mut [Real],
    bx: IndexBox,
    ncomp: usize,
}

impl<'a> FabViewMut<'a> {
    pub fn new(data: &'a mut [Real], bx: IndexBox, ncomp: usize) -> Self {
        assert_eq!(data.len(), bx.num_pts() * ncomp);
        FabViewMut { data, bx, ncomp }
    }

    pub fn bx(&self) -> IndexBox {
        self.bx
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    #[inline]
    pub fn get(&self, iv: IntVect, c: usize) -> Real {
        self.data[offset(&self.bx, iv, c)]
    }

    #[inline]
    pub fn set(&mut self, iv: IntVect, c: usize, v: Real) {
        self.data[offset(&self.bx, iv, c)] = v;
    }

    pub fn as_const(&self) -> FabView<'_> {
        FabView { data: self.data, bx: self.bx, ncomp: self.ncomp }
    }

    pub fn reborrow(&mut self) -> FabViewMut<'_> {
        FabViewMut { data: self.data, bx: self.bx, ncomp: self.ncomp }
    }

    pub fn data_mut(&mut self) -> &mut [Real] {
        self.data
    }

    pub fn as_mut_ptr(&mut self) -> *mut Real {
        self.data.as_mut_ptr()
    }

    pub fn setval(&mut self, value: Real, region: &IndexBox, comps: Range<usize>) -> Result<()> {
        check_comps(&comps, self.ncomp)?;
        if region.is_empty() {
            return Ok(());
        }
        if !self.bx.contains_box(region) {
            return Err(Error::RegionOutside { region: *region, container: self.bx });
        }
        for c in comps {
            let n = region.num_pts();
            region.visit_range(0, n, |iv| self.data[offset(&self.bx, iv, c)] = value);
        }
        Ok(())
    }

    /// Copies `region` from `src` (same global indices) into this view.
    pub fn copy_from(
        &mut self,
        src: &FabView<'_>,
        region: &IndexBox,
        scomp: usize,
        dcomp: usize,
        ncomp: usize,
    ) -> Result<()> {
        check_comps(&(scomp..scomp + ncomp), src.ncomp)?;
        check_comps(&(dcomp..dcomp + ncomp), self.ncomp)?;
        if region.is_empty() {
            return Ok(());
        }
        for (outer, b) in [(self.bx, region), (src.bx, region)] {
            if !outer.contains_box(b) {
                return Err(Error::RegionOutside { region: *b, container: outer });
            }
        }
        for c in 0..ncomp {
            region.visit_range(0, region.num_pts(), |iv| {
                let v = src.get(iv, scomp + c);
                self.data[offset(&self.bx, iv, dcomp + c)] = v;
            });
        }
        Ok(())
    }
}

impl Index<(IntVect, usize)> for FabViewMut<'_> {
    type Output = Real;
    fn index(&self, (iv, c): (IntVect, usize)) -> &Real {
        &self.data[offset(&self.bx, iv, c)]
    }
}

impl IndexMut<(IntVect, usize)> for FabViewMut<'_> {
    fn index_mut(&mut self, (iv, c): (IntVect, usize)) -> &mut Real {
        &mut self.data[offset(&self.bx, iv, c)]
    }
}
