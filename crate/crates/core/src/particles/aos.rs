use super::tile::ParticleTile;
use crate::arena::ArenaHandle;
use crate::kernels::Backend;
use crate::{Real, SPACEDIM};

/// Legacy record layout: positions and id stored together.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AosRecord {
    pub pos: [Real; SPACEDIM],
    pub id: u64,
}

/// Reference container with positions and ids as records and the other
/// components as separate columns. Only used for layout comparisons.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AosRefTile {
    pub records: Vec<AosRecord>,
    pub reals: Vec<Vec<Real>>,
    pub ints: Vec<Vec<i32>>,
}

impl AosRefTile {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn from_soa(t: &ParticleTile) -> AosRefTile {
        AosRefTile {
            records: (0..t.len()).map(|i| AosRecord { pos: t.position(i), id: t.ids()[i] }).collect(),
            reals: (0..t.nreal()).map(|k| t.real(k).to_vec()).collect(),
            ints: (0..t.nint()).map(|k| t.int(k).to_vec()).collect(),
        }
    }

    pub fn to_soa(&self, arena: &ArenaHandle) -> ParticleTile {
        let mut t = ParticleTile::new(self.reals.len(), self.ints.len(), arena);
        t.reserve(self.len());
        let mut rv = vec![0.0; self.reals.len()];
        let mut iv = vec![0; self.ints.len()];
        for (i, r) in self.records.iter().enumerate() {
            rv.iter_mut().zip(&self.reals).for_each(|(v, c)| *v = c[i]);
            iv.iter_mut().zip(&self.ints).for_each(|(v, c)| *v = c[i]);
            t.push(r.pos, r.id, &rv, &iv);
        }
        t
    }
}

/// Affine position update `x_d = a_d * x_d + b_d` used by the layout sweeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Drift {
    pub a: [Real; SPACEDIM],
    pub b: [Real; SPACEDIM],
}

impl Drift {
    #[inline(always)]
    fn apply(&self, d: usize, x: Real) -> Real {
        self.a[d] * x + self.b[d]
    }
}

fn chunked<T: Send>(backend: &Backend, data: &mut [T], f: impl Fn(&mut [T]) + Sync) {
    let nchunks = (backend.nworkers() * 4).clamp(1, data.len().max(1));
    let size = data.len().div_ceil(nchunks).max(1);
    let mut pieces: Vec<&mut [T]> = data.chunks_mut(size).collect();
    backend.for_each_mut(&mut pieces, |_, c| f(c));
}

/// Position-only sweep over SoA columns. One launch per axis.
pub fn sweep_soa(backend: &Backend, tile: &mut ParticleTile, drift: &Drift) {
    for d in 0..SPACEDIM {
        chunked(backend, tile.pos_mut(d), |c| {
            for x in c {
                *x = drift.apply(d, *x);
            }
        });
    }
}

/// The same sweep over records; every record is loaded whole.
pub fn sweep_aos(backend: &Backend, tile: &mut AosRefTile, drift: &Drift) {
    chunked(backend, &mut tile.records, |c| {
        for r in c {
            for d in 0..SPACEDIM {
                r.pos[d] = drift.apply(d, r.pos[d]);
            }
        }
    });
}
