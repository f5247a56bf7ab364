//! Array-interface metadata describing fab and particle column storage in
//! place, for consumers that wrap native memory without copying.
//!
//! The dictionary layout follows the host array interface, version 3:
//! `shape`, `typestr`, `data = (address, read_only)`, `strides` in bytes.

use serde::{Deserialize, Serialize};

use crate::mesh::{FabView, FabViewMut};
use crate::particles::{ParTile, POSITION_NAMES};
use crate::Real;

/// Axis order of a fab description.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    /// Axes `(x, y, z, comp)`, column-major.
    F,
    /// Axes `(comp, z, y, x)`, row-major over the same bytes.
    C,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayInterface {
    pub shape: Vec<usize>,
    pub typestr: String,
    pub data: (usize, bool),
    pub strides: Vec<usize>,
    pub version: u32,
}

/// Element types that can be described.
pub trait Element: Copy {
    const KIND: char;
}

impl Element for f64 {
    const KIND: char = 'f';
}
impl Element for f32 {
    const KIND: char = 'f';
}
impl Element for u64 {
    const KIND: char = 'u';
}
impl Element for i32 {
    const KIND: char = 'i';
}

pub fn typestr<T: Element>() -> String {
    let endian = if cfg!(target_endian = "little") { '<' } else { '>' };
    format!("{endian}{}{}", T::KIND, std::mem::size_of::<T>())
}

impl ArrayInterface {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }

    pub fn from_json(s: &str) -> serde_json::Result<ArrayInterface> {
        serde_json::from_str(s)
    }

    pub fn address(&self) -> usize {
        self.data.0
    }

    pub fn readonly(&self) -> bool {
        self.data.1
    }

    /// Byte offset of a multi-index.
    pub fn byte_offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len());
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }
}

fn fab_layout(ext: [usize; 4], order: Order) -> (Vec<usize>, Vec<usize>) {
    let s = std::mem::size_of::<Real>();
    let f_strides = [s, s * ext[0], s * ext[0] * ext[1], s * ext[0] * ext[1] * ext[2]];
    match order {
        Order::F => (ext.to_vec(), f_strides.to_vec()),
        Order::C => (ext.iter().rev().copied().collect(), f_strides.iter().rev().copied().collect()),
    }
}

fn extents(bx: crate::index_space::IndexBox, ncomp: usize) -> [usize; 4] {
    let l = bx.length();
    [l[0] as usize, l[1] as usize, l[2] as usize, ncomp]
}

/// Read-only description of the whole fab behind `view`.
pub fn fab_interface(view: &FabView<'_>, order: Order) -> ArrayInterface {
    let (shape, strides) = fab_layout(extents(view.bx(), view.ncomp()), order);
    ArrayInterface { shape, typestr: typestr::<Real>(), data: (view.as_ptr() as usize, true), strides, version: 3 }
}

/// Writable description of the whole fab behind `view`.
pub fn fab_interface_mut(view: &mut FabViewMut<'_>, order: Order) -> ArrayInterface {
    let (shape, strides) = fab_layout(extents(view.bx(), view.ncomp()), order);
    ArrayInterface { shape, typestr: typestr::<Real>(), data: (view.as_mut_ptr() as usize, false), strides, version: 3 }
}

/// One-dimensional description of a column.
pub fn column_interface<T: Element>(col: &[T], readonly: bool) -> ArrayInterface {
    ArrayInterface {
        shape: vec![col.len()],
        typestr: typestr::<T>(),
        data: (col.as_ptr() as usize, readonly),
        strides: vec![std::mem::size_of::<T>()],
        version: 3,
    }
}

/// Read-only descriptions of every column of a tile: positions, `id`, then
/// the real and int components in registry order.
pub fn tile_interfaces(tile: &ParTile<'_>) -> Vec<(String, ArrayInterface)> {
    let t = tile.tile;
    let reg = tile.registry();
    let mut out: Vec<(String, ArrayInterface)> =
        POSITION_NAMES.iter().enumerate().map(|(d, n)| (n.to_string(), column_interface(t.pos(d), true))).collect();
    out.push(("id".into(), column_interface(t.ids(), true)));
    for (k, n) in reg.real_names().iter().enumerate() {
        out.push((n.clone(), column_interface(t.real(k), true)));
    }
    for (k, n) in reg.int_names().iter().enumerate() {
        out.push((n.clone(), column_interface(t.int(k), true)));
    }
    out
}

/// Owned copy of a fab's data with its description.
#[derive(Clone, Debug, PartialEq)]
pub struct HostArray {
    pub data: Vec<Real>,
    pub shape: Vec<usize>,
    pub strides: Vec<usize>,
}

impl HostArray {
    pub fn get(&self, idx: &[usize]) -> Real {
        let s = std::mem::size_of::<Real>();
        let off: usize = idx.iter().zip(&self.strides).map(|(i, st)| i * st / s).sum();
        self.data[off]
    }

    pub fn set(&mut self, idx: &[usize], v: Real) {
        let s = std::mem::size_of::<Real>();
        let off: usize = idx.iter().zip(&self.strides).map(|(i, st)| i * st / s).sum();
        self.data[off] = v;
    }
}

/// Independent copy of the fab behind `view`, axes as in `order`.
pub fn to_host_array(view: &FabView<'_>, order: Order) -> HostArray {
    let (shape, strides) = fab_layout(extents(view.bx(), view.ncomp()), order);
    HostArray { data: view.data().to_vec(), shape, strides }
}
