use std::collections::HashMap;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use crate::comm::{fill_boundary, parallel_copy, Comm, CopySpec};
use crate::error::{Error, Result};
use crate::index_space::{Geometry, IndexBox, IntVect, SPACEDIM};
use crate::kernels::Backend;
use crate::mesh::{box_difference, BoxArray, FabView, FabViewMut, MultiFab};
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InterpScheme {
    PiecewiseConstant,
    /// Unlimited centered slopes; one-sided at non-periodic domain faces.
    Linear,
}

impl InterpScheme {
    /// Coarse cells needed around the parent of a fine cell.
    pub fn reach(self) -> i32 {
        match self {
            InterpScheme::PiecewiseConstant => 0,
            InterpScheme::Linear => 1,
        }
    }
}

impl FromStr for InterpScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pc" | "piecewise_constant" => Ok(InterpScheme::PiecewiseConstant),
            "linear" => Ok(InterpScheme::Linear),
            _ => Err(Error::InputsValue { key: "interp".into(), message: format!("unknown scheme `{s}`") }),
        }
    }
}

/// Temporary layouts derived from a box array, memoized so that the plans
/// built against them stay cached across calls.
fn derived_layout(key: String, build: impl FnOnce() -> Result<BoxArray>) -> Result<Arc<BoxArray>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<BoxArray>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(ba) = cache.lock().unwrap().get(&key) {
        return Ok(ba.clone());
    }
    let ba = Arc::new(build()?);
    Ok(cache.lock().unwrap().entry(key).or_insert(ba).clone())
}

/// Index region where coarse data is meaningful: the domain, unbounded along
/// periodic axes.
pub fn interp_limits(geom: &Geometry) -> IndexBox {
    let big = 1 << 24;
    let n = IntVect(std::array::from_fn(|d| if geom.is_periodic(d) { big } else { 0 }));
    geom.domain().grow_vect(n)
}

/// Interpolated value of component `c` at fine cell `iv`.
#[inline]
pub fn interp_cell(crse: &FabView<'_>, limits: &IndexBox, iv: IntVect, ratio: i32, scheme: InterpScheme, c: usize) -> Real {
    let ic = iv.coarsen(ratio);
    let v = crse.get(ic, c);
    if scheme == InterpScheme::PiecewiseConstant {
        return v;
    }
    let mut out = v;
    for d in 0..SPACEDIM {
        let off = ((iv[d] - ic[d] * ratio) as Real + 0.5) / ratio as Real - 0.5;
        if off == 0.0 {
            continue;
        }
        let mut e = IntVect::zero();
        e[d] = 1;
        let (hi, lo) = (ic + e, ic - e);
        let slope = match (limits.contains(hi), limits.contains(lo)) {
            (true, true) => 0.5 * (crse.get(hi, c) - crse.get(lo, c)),
            (true, false) => crse.get(hi, c) - v,
            (false, true) => v - crse.get(lo, c),
            (false, false) => 0.0,
        };
        out += slope * off;
    }
    out
}

/// Coarse cells read when interpolating into `region`.
pub fn coarse_footprint(region: &IndexBox, ratio: i32, scheme: InterpScheme, limits: &IndexBox) -> Result<IndexBox> {
    let parents = region.coarsen(ratio)?;
    let grown = parents.grow(scheme.reach()).intersect(limits)?;
    Ok(IndexBox::new(grown.lo().min(parents.lo()), grown.hi().max(parents.hi())))
}

/// Fills `region` of `fine` (components `dcomp..`) from `crse`
/// (components `scomp..`) in one launch.
#[allow(clippy::too_many_arguments)]
pub fn interp_fab(
    backend: &Backend,
    crse: &FabView<'_>,
    limits: &IndexBox,
    fine: &mut FabViewMut<'_>,
    region: &IndexBox,
    ratio: i32,
    scheme: InterpScheme,
    comps: (usize, usize, usize),
) -> Result<()> {
    let (scomp, dcomp, ncomp) = comps;
    if scomp + ncomp > crse.ncomp() || dcomp + ncomp > fine.ncomp() {
        return Err(Error::ComponentRange { start: scomp.max(dcomp), end: scomp.max(dcomp) + ncomp, ncomp: crse.ncomp().min(fine.ncomp()) });
    }
    if region.is_empty() {
        backend.parallel_for_box_mut(*region, fine, |_, _| {})?;
        return Ok(());
    }
    let need = coarse_footprint(region, ratio, scheme, limits)?;
    if !crse.bx().contains_box(&need) {
        return Err(Error::InsufficientCoarseData(need));
    }
    backend.parallel_for_box_mut(*region, fine, |iv, mut cell| {
        for c in 0..ncomp {
            cell.set(dcomp + c, interp_cell(crse, limits, iv, ratio, scheme, scomp + c));
        }
    })
}

fn check_coarsenable(ba: &BoxArray, ratio: i32) -> Result<()> {
    if ratio < 1 {
        return Err(Error::InvalidRatio(ratio));
    }
    match ba.iter().find(|b| !b.is_coarsenable(ratio)) {
        Some(b) => Err(Error::Misaligned(*b, ratio)),
        None => Ok(()),
    }
}

/// Sets every coarse cell covered by `fine` to the mean of its
/// `ratio^SPACEDIM` children, for components `comp..comp + ncomp`.
/// Uncovered coarse cells keep their values. Collective.
pub fn average_down(
    comm: &Comm,
    fine: &MultiFab,
    crse: &mut MultiFab,
    ratio: i32,
    comp: usize,
    ncomp: usize,
) -> Result<()> {
    check_coarsenable(fine.boxarray(), ratio)?;
    if comp + ncomp > fine.ncomp() || comp + ncomp > crse.ncomp() {
        return Err(Error::ComponentRange { start: comp, end: comp + ncomp, ncomp: fine.ncomp().min(crse.ncomp()) });
    }
    let fba = fine.boxarray();
    let cba = derived_layout(format!("avgdown:{}:{ratio}", fba.id()), || fba.coarsen(ratio))?;
    let mut tmp = MultiFab::define(&cba, fine.dm(), ncomp, IntVect::zero(), fine.rank(), fine.arena())?;
    let views: Vec<FabView<'_>> = fine.fabs().iter().map(|f| f.view()).collect();
    let inv = 1.0 / (ratio as Real).powi(SPACEDIM as i32);
    comm.backend().parallel_for_fused(&mut tmp, |l, iv, mut cell| {
        let f = &views[l];
        let lo = iv.scale(ratio);
        let children = IndexBox::new(lo, lo + IntVect::splat(ratio - 1));
        for c in 0..ncomp {
            let mut sum = 0.0;
            for ch in children.cells() {
                sum += f.get(ch, comp + c);
            }
            cell.set(c, sum * inv);
        }
    });
    parallel_copy(comm, crse, &tmp, CopySpec::comps(ncomp).with_comps(0, comp, ncomp), None)
}

fn interp_from_coarse(
    comm: &Comm,
    fine: &mut MultiFab,
    crse: &MultiFab,
    crse_geom: &Geometry,
    ratio: i32,
    scheme: InterpScheme,
    ghosts_only: bool,
) -> Result<()> {
    check_coarsenable(fine.boxarray(), ratio)?;
    let ncomp = fine.ncomp();
    if crse.ncomp() < ncomp {
        return Err(Error::ComponentRange { start: 0, end: ncomp, ncomp: crse.ncomp() });
    }
    let climits = interp_limits(crse_geom);
    let flimits = climits.refine(ratio)?;
    let fba = fine.boxarray().clone();
    let ngrow = fine.ngrow();
    let key = format!("interp:{}:{ratio}:{}:{:?}:{}", fba.id(), ngrow, scheme, climits);
    let tba = derived_layout(key, || {
        let boxes = fba
            .iter()
            .map(|b| coarse_footprint(&b.grow_vect(ngrow).intersect(&flimits)?, ratio, scheme, &climits))
            .collect::<Result<Vec<_>>>()?;
        BoxArray::new_overlapping(boxes)
    })?;
    let mut tmp = MultiFab::define(&tba, fine.dm(), ncomp, IntVect::zero(), fine.rank(), fine.arena())?;
    parallel_copy(comm, &mut tmp, crse, CopySpec::comps(ncomp), Some(crse_geom))?;

    let mut regions = Vec::new();
    for (l, &i) in fine.local_indices().iter().enumerate() {
        let fb = fine.fab_box(i).intersect(&flimits)?;
        let pieces = if ghosts_only { box_difference(&fb, &fine.valid_box(i)) } else { vec![fb] };
        regions.extend(pieces.into_iter().filter(|p| !p.is_empty()).map(|p| (l, p)));
    }
    let views: Vec<FabView<'_>> = tmp.fabs().iter().map(|f| f.view()).collect();
    comm.backend().parallel_for_regions(fine.fabs_mut(), &regions, |l, iv, mut cell| {
        for c in 0..ncomp {
            cell.set(c, interp_cell(&views[l], &climits, iv, ratio, scheme, c));
        }
    })
}

/// Fills the ghost cells of `fine`: from same-level valid data where it
/// exists, otherwise by interpolating `crse`. Valid cells are untouched and
/// ghost cells outside a non-periodic domain are left alone. Collective.
pub fn fill_patch(
    comm: &Comm,
    fine: &mut MultiFab,
    crse: &MultiFab,
    fine_geom: &Geometry,
    crse_geom: &Geometry,
    ratio: i32,
    scheme: InterpScheme,
) -> Result<()> {
    if fine.ngrow() != IntVect::zero() {
        interp_from_coarse(comm, fine, crse, crse_geom, ratio, scheme, true)?;
    }
    fill_boundary(comm, fine, fine_geom)
}

/// Fills valid and ghost cells of `fine` by interpolating `crse`, as when a
/// new level is created. Collective.
pub fn fill_coarse_patch(
    comm: &Comm,
    fine: &mut MultiFab,
    crse: &MultiFab,
    crse_geom: &Geometry,
    ratio: i32,
    scheme: InterpScheme,
) -> Result<()> {
    interp_from_coarse(comm, fine, crse, crse_geom, ratio, scheme, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::ArenaHandle;
    use crate::mesh::{DistributionMapping, Fab};

    #[test]
    fn linear_1d_children() {
        let cb = IndexBox::new(IntVect::new(-1, -1, -1), IntVect::new(8, 1, 1));
        let mut crse = Fab::new(cb, 1, &ArenaHandle::system()).unwrap();
        for iv in cb.cells() {
            crse.set(iv, 0, iv[0] as Real);
        }
        let region = IndexBox::new(IntVect::zero(), IntVect::new(15, 1, 1));
        let mut fine = Fab::new(region, 1, &ArenaHandle::system()).unwrap();
        let limits = IndexBox::new(IntVect::splat(-100), IntVect::splat(100));
        let be = Backend::serial();
        interp_fab(&be, &crse.view(), &limits, &mut fine.view_mut(), &region, 2, InterpScheme::Linear, (0, 0, 1)).unwrap();
        for iv in region.cells() {
            let i = iv[0] / 2;
            let want = if iv[0] % 2 == 0 { i as Real - 0.25 } else { i as Real + 0.25 };
            assert_eq!(fine.get(iv, 0), want);
        }
        interp_fab(&be, &crse.view(), &limits, &mut fine.view_mut(), &region, 2, InterpScheme::PiecewiseConstant, (0, 0, 1))
            .unwrap();
        assert_eq!(fine.get(IntVect::new(5, 0, 0), 0), 2.0);
        let big = IndexBox::new(IntVect::zero(), IntVect::new(17, 1, 1));
        let mut f2 = Fab::new(big, 1, &ArenaHandle::system()).unwrap();
        assert!(matches!(
            interp_fab(&be, &crse.view(), &limits, &mut f2.view_mut(), &big, 2, InterpScheme::Linear, (0, 0, 1)),
            Err(Error::InsufficientCoarseData(_))
        ));
    }

    #[test]
    fn average_down_mean_and_constant() {
        let comm = Comm::solo(Backend::serial());
        let fba = Arc::new(BoxArray::new(vec![IndexBox::new(IntVect::zero(), IntVect::new(1, 1, 1))]).unwrap());
        let cba = Arc::new(BoxArray::new(vec![IndexBox::new(IntVect::zero(), IntVect::new(3, 0, 0))]).unwrap());
        let dm1 = Arc::new(DistributionMapping::all_on(1, 0, 1).unwrap());
        let a = ArenaHandle::system();
        let mut fine = MultiFab::define(&fba, &dm1, 1, IntVect::zero(), 0, &a).unwrap();
        let mut crse = MultiFab::define(&cba, &dm1, 1, IntVect::zero(), 0, &a).unwrap();
        crse.setval(-9.0);
        {
            let f = fine.fab_mut(0).unwrap();
            for iv in IndexBox::new(IntVect::zero(), IntVect::new(1, 1, 1)).cells() {
                f.set(iv, 0, if iv[0] == 0 { 1.0 } else { 3.0 });
            }
        }
        average_down(&comm, &fine, &mut crse, 2, 0, 1).unwrap();
        let c = crse.fab(0).unwrap();
        assert_eq!(c.get(IntVect::zero(), 0), 2.0);
        assert_eq!(c.get(IntVect::new(1, 0, 0), 0), -9.0);
        let odd = Arc::new(BoxArray::new(vec![IndexBox::new(IntVect::new(1, 0, 0), IntVect::new(2, 1, 1))]).unwrap());
        let fine2 = MultiFab::define(&odd, &dm1, 1, IntVect::zero(), 0, &a).unwrap();
        assert!(matches!(average_down(&comm, &fine2, &mut crse, 2, 0, 1), Err(Error::Misaligned(_, 2))));
    }
}
