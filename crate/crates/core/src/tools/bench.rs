//! Microbenchmarks: fused vs per-box triad, pooled vs system temporaries,
//! SoA vs AoS position sweeps. Every benchmark verifies its output before
//! timing anything and reports medians over repetitions.

use std::fmt;
use std::hint::black_box;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::arena::{Arena, ArenaHandle};
use crate::error::{Error, Result};
use crate::index_space::{IndexBox, IntVect};
use crate::kernels::{Backend, BackendKind};
use crate::mesh::{is_signaling_nan, BoxArray, DistributionMapping, MultiFab, SIGNALING_NAN};
use crate::particles::{sweep_aos, sweep_soa, AosRefTile, Drift, ParticleId, ParticleTile};
use crate::tools::inputs::InputsTable;
use crate::Real;

pub const MIN_REPS: usize = 5;

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty(), "median of nothing");
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn time_reps(reps: usize, mut f: impl FnMut()) -> Vec<f64> {
    (0..reps.max(MIN_REPS))
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .collect()
}

fn backend_from(t: &InputsTable) -> Result<Backend> {
    let kind: BackendKind = match t.get::<String>("backend")? {
        Some(s) => s.parse()?,
        None => BackendKind::CpuParallel,
    };
    Ok(Backend::new(kind, t.get_or("nworkers", 0)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriadConfig {
    /// Boxes along each axis.
    pub boxes: IntVect,
    pub box_size: i32,
    pub scalar: Real,
    pub reps: usize,
}

impl Default for TriadConfig {
    fn default() -> Self {
        TriadConfig { boxes: IntVect::splat(8), box_size: 32, scalar: 3.0, reps: MIN_REPS }
    }
}

impl TriadConfig {
    pub fn from_inputs(t: &InputsTable) -> Result<TriadConfig> {
        let d = TriadConfig::default();
        Ok(TriadConfig {
            boxes: t.intvect_or("triad.boxes", d.boxes)?,
            box_size: t.get_or("triad.box_size", d.box_size)?,
            scalar: t.get_or("triad.scalar", d.scalar)?,
            reps: t.get_or("reps", d.reps)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TriadReport {
    pub backend: String,
    pub nworkers: usize,
    pub nboxes: usize,
    pub cells: usize,
    pub fused_launches: u64,
    pub per_box_launches: u64,
    /// Both paths matched the serial oracle bit for bit.
    pub bit_identical: bool,
    pub fused_median_s: f64,
    pub per_box_median_s: f64,
}

impl fmt::Display for TriadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "triad: {} boxes, {} cells, {} backend x{}", self.nboxes, self.cells, self.backend, self.nworkers)?;
        writeln!(f, "  fused   {:>10.6} s  launches {}", self.fused_median_s, self.fused_launches)?;
        write!(f, "  per-box {:>10.6} s  launches {}", self.per_box_median_s, self.per_box_launches)
    }
}

fn triad_b(iv: IntVect) -> Real {
    1.0 + ((iv[0] * 7 + iv[1] * 13 + iv[2] * 29).rem_euclid(101)) as Real * 0.01
}

fn triad_c(iv: IntVect) -> Real {
    0.5 + ((iv[0] * 3 + iv[1] * 5 + iv[2] * 11).rem_euclid(97)) as Real * 0.02
}

/// `a = b + s * c` over all boxes in one launch.
pub fn triad_fused(backend: &Backend, a: &mut MultiFab, b: &MultiFab, c: &MultiFab, s: Real) {
    let bv: Vec<_> = b.fabs().iter().map(|f| f.view()).collect();
    let cv: Vec<_> = c.fabs().iter().map(|f| f.view()).collect();
    backend.parallel_for_fused(a, |l, iv, mut cell| cell.set(0, bv[l].get(iv, 0) + s * cv[l].get(iv, 0)));
}

/// `a = b + s * c`, one launch per box.
pub fn triad_per_box(backend: &Backend, a: &mut MultiFab, b: &MultiFab, c: &MultiFab, s: Real) -> Result<()> {
    for &i in &a.local_indices().to_vec() {
        let vb = a.valid_box(i);
        let (bv, cv) = (b.const_array(i)?, c.const_array(i)?);
        backend.parallel_for_box_mut(vb, &mut a.array(i)?, |iv, mut cell| {
            cell.set(0, bv.get(iv, 0) + s * cv.get(iv, 0))
        })?;
    }
    Ok(())
}

fn check_triad(a: &MultiFab, s: Real, path: &str) -> Result<()> {
    for (i, fab) in a.local_fabs() {
        for iv in a.valid_box(i).cells() {
            let want = triad_b(iv) + s * triad_c(iv);
            let got = fab.get(iv, 0);
            if got.to_bits() != want.to_bits() {
                return Err(Error::CrossCheck(format!("{path} triad at {iv}: {got} != {want}")));
            }
        }
    }
    Ok(())
}

pub fn bench_triad(backend: &Backend, cfg: &TriadConfig) -> Result<TriadReport> {
    let domain = IndexBox::from_size(cfg.boxes.scale(cfg.box_size));
    let ba = Arc::new(BoxArray::from_domain(domain, IntVect::splat(cfg.box_size))?);
    let dm = Arc::new(DistributionMapping::all_on(ba.len(), 0, 1)?);
    let arena = ArenaHandle::system();
    let mut b = MultiFab::define(&ba, &dm, 1, IntVect::zero(), 0, &arena)?;
    let mut c = b.define_like(1, IntVect::zero())?;
    let mut a = b.define_like(1, IntVect::zero())?;
    backend.parallel_for_fused(&mut b, |_, iv, mut cell| cell.set(0, triad_b(iv)));
    backend.parallel_for_fused(&mut c, |_, iv, mut cell| cell.set(0, triad_c(iv)));
    let s = cfg.scalar;

    a.setval(SIGNALING_NAN);
    let before = backend.launches();
    triad_per_box(backend, &mut a, &b, &c, s)?;
    let per_box_launches = backend.launches() - before;
    check_triad(&a, s, "per-box")?;

    a.setval(SIGNALING_NAN);
    let before = backend.launches();
    triad_fused(backend, &mut a, &b, &c, s);
    let fused_launches = backend.launches() - before;
    check_triad(&a, s, "fused")?;
    debug_assert!(!a.fabs().iter().any(|f| f.data().iter().any(|&v| is_signaling_nan(v))));

    let per_box = time_reps(cfg.reps, || triad_per_box(backend, &mut a, &b, &c, s).expect("checked layout"));
    let fused = time_reps(cfg.reps, || triad_fused(backend, &mut a, &b, &c, s));
    Ok(TriadReport {
        backend: backend.kind().to_string(),
        nworkers: backend.nworkers(),
        nboxes: ba.len(),
        cells: ba.num_pts(),
        fused_launches,
        per_box_launches,
        bit_identical: true,
        fused_median_s: median(fused),
        per_box_median_s: median(per_box),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArenaBenchConfig {
    pub cycles: usize,
    /// Cells per temporary (8 bytes each).
    pub cells: usize,
    pub reps: usize,
}

impl Default for ArenaBenchConfig {
    fn default() -> Self {
        ArenaBenchConfig { cycles: 10_000, cells: 256 * 256 * 256, reps: MIN_REPS }
    }
}

impl ArenaBenchConfig {
    pub fn from_inputs(t: &InputsTable) -> Result<ArenaBenchConfig> {
        let d = ArenaBenchConfig::default();
        Ok(ArenaBenchConfig {
            cycles: t.get_or("arena_bench.cycles", d.cycles)?,
            cells: t.get_or("arena_bench.cells", d.cells)?,
            reps: t.get_or("reps", d.reps)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArenaReport {
    pub cycles: usize,
    pub bytes: usize,
    pub pooled_median_s: f64,
    pub system_median_s: f64,
    /// System time over pooled time.
    pub speedup: f64,
}

impl fmt::Display for ArenaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "arena: {} cycles of {} bytes", self.cycles, self.bytes)?;
        writeln!(f, "  pooled {:>10.6} s", self.pooled_median_s)?;
        writeln!(f, "  system {:>10.6} s", self.system_median_s)?;
        write!(f, "  speedup {:.2}x", self.speedup)
    }
}

/// Allocates a temporary, writes its first and last element, reads them
/// back and frees it, `cycles` times.
fn temp_cycles(arena: &ArenaHandle, cycles: usize, bytes: usize) -> Result<()> {
    let n = bytes / 8;
    for k in 0..cycles {
        let block = arena.alloc(bytes, 64)?;
        let p = block.as_ptr() as *mut f64;
        let tag = k as f64;
        // SAFETY: the block holds `n >= 1` f64 slots, aligned to 64.
        let ok = unsafe {
            p.write_volatile(tag);
            p.add(n - 1).write_volatile(-tag);
            black_box(p.read_volatile()) == tag && black_box(p.add(n - 1).read_volatile()) == -tag
        };
        arena.free(block)?;
        if !ok {
            return Err(Error::CrossCheck(format!("temporary {k} lost its contents")));
        }
    }
    Ok(())
}

pub fn bench_arena(cfg: &ArenaBenchConfig) -> Result<ArenaReport> {
    let bytes = cfg.cells.max(1) * 8;
    let pooled = ArenaHandle::Pooled(Arc::new(Arena::new(bytes + 4096)?));
    let system = ArenaHandle::system();
    temp_cycles(&pooled, 2, bytes)?;
    temp_cycles(&system, 2, bytes)?;
    let mut failure = None;
    let mut run = |a: &ArenaHandle| {
        time_reps(cfg.reps, || {
            if let Err(e) = temp_cycles(a, cfg.cycles, bytes) {
                failure.get_or_insert(e);
            }
        })
    };
    let p = median(run(&pooled));
    let s = median(run(&system));
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(ArenaReport { cycles: cfg.cycles, bytes, pooled_median_s: p, system_median_s: s, speedup: s / p })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoaBenchConfig {
    pub particles: usize,
    pub reps: usize,
}

impl Default for SoaBenchConfig {
    fn default() -> Self {
        SoaBenchConfig { particles: 4_000_000, reps: MIN_REPS }
    }
}

impl SoaBenchConfig {
    pub fn from_inputs(t: &InputsTable) -> Result<SoaBenchConfig> {
        let d = SoaBenchConfig::default();
        Ok(SoaBenchConfig { particles: t.get_or("soa.particles", d.particles)?, reps: t.get_or("reps", d.reps)? })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SoaReport {
    pub backend: String,
    pub nworkers: usize,
    pub particles: usize,
    pub soa_median_s: f64,
    pub aos_median_s: f64,
    /// AoS time over SoA time.
    pub speedup: f64,
}

impl fmt::Display for SoaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "soa: {} particles, {} backend x{}", self.particles, self.backend, self.nworkers)?;
        writeln!(f, "  soa {:>10.6} s", self.soa_median_s)?;
        writeln!(f, "  aos {:>10.6} s", self.aos_median_s)?;
        write!(f, "  speedup {:.2}x", self.speedup)
    }
}

fn same_positions(t: &ParticleTile, a: &AosRefTile) -> bool {
    a.records.iter().enumerate().all(|(i, r)| (0..3).all(|d| r.pos[d].to_bits() == t.pos(d)[i].to_bits()))
}

pub fn bench_soa(backend: &Backend, cfg: &SoaBenchConfig) -> Result<SoaReport> {
    let n = cfg.particles;
    let mut soa = ParticleTile::new(0, 0, &ArenaHandle::system());
    soa.reserve(n);
    for i in 0..n {
        let x = (i % 1000) as Real * 1e-3;
        soa.push([x, 1.0 - x, 0.5 * x], ParticleId::encode(0, i as u64, true)?.raw(), &[], &[]);
    }
    let mut aos = AosRefTile::from_soa(&soa);
    let drift = Drift { a: [1.0, 1.0, 1.0], b: [1e-9, -1e-9, 2e-9] };
    sweep_soa(backend, &mut soa, &drift);
    sweep_aos(backend, &mut aos, &drift);
    if !same_positions(&soa, &aos) {
        return Err(Error::CrossCheck("SoA and AoS sweeps disagree".into()));
    }
    let mut ts = Vec::new();
    let mut ta = Vec::new();
    for _ in 0..cfg.reps.max(MIN_REPS) {
        ts.extend(time_reps(1, || sweep_soa(backend, &mut soa, &drift)));
        ta.extend(time_reps(1, || sweep_aos(backend, &mut aos, &drift)));
    }
    let (s, a) = (median(ts), median(ta));
    Ok(SoaReport {
        backend: backend.kind().to_string(),
        nworkers: backend.nworkers(),
        particles: n,
        soa_median_s: s,
        aos_median_s: a,
        speedup: a / s,
    })
}

pub fn bench_triad_inputs(t: &InputsTable) -> Result<TriadReport> {
    bench_triad(&backend_from(t)?, &TriadConfig::from_inputs(t)?)
}

pub fn bench_soa_inputs(t: &InputsTable) -> Result<SoaReport> {
    bench_soa(&backend_from(t)?, &SoaBenchConfig::from_inputs(t)?)
}

pub fn bench_arena_inputs(t: &InputsTable) -> Result<ArenaReport> {
    bench_arena(&ArenaBenchConfig::from_inputs(t)?)
}
