//! Explicit heat-equation demo on a periodic unit cube.
//!
//! `u_t = D ∇²u` with a Gaussian pulse as initial condition, advanced with
//! forward Euler and the second-order centered stencil on every level at the
//! same time step. Each step fills ghost cells (periodic images and coarse
//! interpolation), applies the stencil in one fused launch per level and
//! averages fine data down. Errors are measured against the free-space
//! solution, which stays valid while the pulse is at least six widths away
//! from the domain faces.

use std::path::PathBuf;

use serde::Serialize;

use crate::amr::{average_down, fill_coarse_patch, fill_patch, AmrConfig, AmrMesh, InterpScheme, TagField};
use crate::comm::{fill_boundary, parallel_copy, Comm, CopySpec, MessageStats, RankRuntime};
use crate::error::{Error, Result};
use crate::index_space::{Geometry, IndexBox, IntVect, SPACEDIM};
use crate::kernels::{BackendKind, ReduceOp};
use crate::mesh::{BoxArray, MultiFab, DEFAULT_TILE_SIZE};
use crate::tools::inputs::InputsTable;
use crate::tools::plotfile::write_plotfile;
use crate::Real;

/// Free-space Gaussian solution, unit peak at `t = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPulse {
    pub center: [Real; SPACEDIM],
    pub sigma0: Real,
    pub diffusivity: Real,
    /// Axes the pulse varies along; others are ignored.
    pub active: [bool; SPACEDIM],
}

impl GaussianPulse {
    pub fn sigma_sq(&self, t: Real) -> Real {
        self.sigma0 * self.sigma0 + 2.0 * self.diffusivity * t
    }

    pub fn value(&self, x: [Real; SPACEDIM], t: Real) -> Real {
        let s2 = self.sigma_sq(t);
        let mut r2 = 0.0;
        let mut ndim = 0;
        for d in (0..SPACEDIM).filter(|&d| self.active[d]) {
            r2 += (x[d] - self.center[d]).powi(2);
            ndim += 1;
        }
        (self.sigma0 * self.sigma0 / s2).powf(ndim as Real / 2.0) * (-r2 / (2.0 * s2)).exp()
    }
}

#[derive(Clone, Debug)]
pub struct HeatConfig {
    pub amr: AmrConfig,
    pub diffusivity: Real,
    pub sigma0: Real,
    pub center: [Real; SPACEDIM],
    pub t_final: Real,
    /// Fraction of the stability limit used when neither `dt` nor `nsteps`
    /// is given.
    pub cfl: Real,
    pub dt: Option<Real>,
    pub nsteps: Option<usize>,
    pub tag_threshold: Real,
    pub regrid_int: usize,
    pub interp: InterpScheme,
    pub tile_size: IntVect,
    pub plot_int: usize,
    pub plotfile_dir: Option<PathBuf>,
    pub nranks: usize,
    pub backend: BackendKind,
    pub nworkers: usize,
}

impl Default for HeatConfig {
    fn default() -> Self {
        HeatConfig {
            amr: AmrConfig { max_level: 1, max_grid_size: 16, ..AmrConfig::default() },
            diffusivity: 1.0,
            sigma0: 0.05,
            center: [0.5; SPACEDIM],
            t_final: 1.2e-3,
            cfl: 0.9,
            dt: None,
            nsteps: None,
            tag_threshold: 0.1,
            regrid_int: 0,
            interp: InterpScheme::Linear,
            tile_size: DEFAULT_TILE_SIZE,
            plot_int: 0,
            plotfile_dir: None,
            nranks: 1,
            backend: BackendKind::CpuParallel,
            nworkers: 0,
        }
    }
}

impl HeatConfig {
    /// Single-level run on an `n`-cell cube.
    pub fn uniform(n: i32) -> HeatConfig {
        let mut c = HeatConfig::default();
        c.amr.max_level = 0;
        c.amr.n_cell = IntVect::splat(n);
        c.amr.max_grid_size = c.amr.max_grid_size.max(c.amr.blocking_factor);
        c
    }

    pub fn from_inputs(t: &InputsTable) -> Result<HeatConfig> {
        let d = HeatConfig::default();
        let amr = AmrConfig {
            max_level: t.get_or("amr.max_level", d.amr.max_level)?,
            ref_ratio: t.get_or("amr.ref_ratio", d.amr.ref_ratio)?,
            blocking_factor: t.get_or("amr.blocking_factor", d.amr.blocking_factor)?,
            max_grid_size: t.get_or("amr.max_grid_size", d.amr.max_grid_size)?,
            n_cell: t.intvect_or("amr.n_cell", d.amr.n_cell)?,
            n_proper: t.get_or("amr.n_proper", d.amr.n_proper)?,
        };
        let interp = match t.get::<String>("amr.interp")? {
            Some(s) => s.parse()?,
            None => d.interp,
        };
        let backend = match t.get::<String>("backend")? {
            Some(s) => s.parse()?,
            None => d.backend,
        };
        Ok(HeatConfig {
            amr,
            diffusivity: t.get_or("heat.diffusivity", d.diffusivity)?,
            sigma0: t.get_or("heat.sigma0", d.sigma0)?,
            center: t.triple_or("heat.center", d.center)?,
            t_final: t.get_or("heat.t_final", d.t_final)?,
            cfl: t.get_or("heat.cfl", d.cfl)?,
            dt: t.get("heat.dt")?,
            nsteps: t.get("heat.nsteps")?,
            tag_threshold: t.get_or("demo.tag_threshold", d.tag_threshold)?,
            regrid_int: t.get_or("amr.regrid_int", d.regrid_int)?,
            interp,
            tile_size: t.intvect_or("tile_size", d.tile_size)?,
            plot_int: t.get_or("plot_int", d.plot_int)?,
            plotfile_dir: t.get::<String>("plot.dir")?.map(PathBuf::from),
            nranks: t.get_or("nranks", d.nranks)?,
            backend,
            nworkers: t.get_or("nworkers", d.nworkers)?,
        })
    }

    pub fn pulse(&self) -> GaussianPulse {
        GaussianPulse {
            center: self.center,
            sigma0: self.sigma0,
            diffusivity: self.diffusivity,
            active: std::array::from_fn(|d| self.amr.n_cell[d] > 1),
        }
    }

    /// Largest stable step on a grid with spacing `h`.
    pub fn stability_limit(&self, h: [Real; SPACEDIM]) -> Real {
        let pulse = self.pulse();
        let s: Real = (0..SPACEDIM).filter(|&d| pulse.active[d]).map(|d| 1.0 / (h[d] * h[d])).sum();
        1.0 / (2.0 * self.diffusivity * s)
    }

    /// Uniform step and step count reaching `t_final`, checked against the
    /// stability limit on spacing `h`.
    pub fn time_steps(&self, h: [Real; SPACEDIM]) -> Result<(Real, usize)> {
        let limit = self.stability_limit(h);
        let too_big = |dt: Real| dt > limit * (1.0 + 1e-12);
        if self.t_final < 0.0 || !self.t_final.is_finite() {
            return Err(Error::Demo(format!("t_final {} must be finite and non-negative", self.t_final)));
        }
        let (dt, n) = match (self.nsteps, self.dt) {
            (Some(n), _) => {
                let n = n.max(1);
                (self.t_final / n as Real, n)
            }
            (None, Some(dt)) => {
                if too_big(dt) {
                    return Err(Error::CflViolation { dt: dt.into(), limit: limit.into() });
                }
                if dt <= 0.0 {
                    return Err(Error::Demo(format!("dt {dt} must be positive")));
                }
                let n = ((self.t_final / dt) - 1e-9).ceil().max(1.0) as usize;
                (self.t_final / n as Real, n)
            }
            (None, None) => {
                let n = (self.t_final / (self.cfl * limit)).ceil().max(1.0) as usize;
                (self.t_final / n as Real, n)
            }
        };
        if too_big(dt) {
            return Err(Error::CflViolation { dt: dt.into(), limit: limit.into() });
        }
        Ok((dt, n))
    }

    /// Rejects runs whose final pulse comes within six widths of a face.
    pub fn check_window(&self) -> Result<()> {
        let p = self.pulse();
        let sigma = p.sigma_sq(self.t_final).sqrt();
        for d in (0..SPACEDIM).filter(|&d| p.active[d]) {
            let room = self.center[d].min(1.0 - self.center[d]);
            if 6.0 * sigma > room {
                return Err(Error::Demo(format!(
                    "final width {sigma:.4} leaves {room:.4} to the face along axis {d}, need {:.4}",
                    6.0 * sigma
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ErrorNorms {
    pub linf: Real,
    /// Volume-weighted.
    pub l2: Real,
    pub cells: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LevelReport {
    pub nboxes: usize,
    pub ncells: usize,
    /// Errors on cells not covered by a finer level.
    pub error: ErrorNorms,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct HeatReport {
    pub steps: usize,
    pub dt: Real,
    pub time: Real,
    pub levels: Vec<LevelReport>,
    /// Composite errors over the finest data covering each point.
    pub error: ErrorNorms,
    pub integral_initial: Real,
    pub integral_final: Real,
    pub plotfiles: Vec<String>,
}

impl HeatReport {
    /// Relative change of the level-0 integral over the run.
    pub fn conservation_drift(&self) -> Real {
        ((self.integral_final - self.integral_initial) / self.integral_initial).abs()
    }
}

/// Final state of a run on one rank.
pub struct HeatOutcome {
    pub report: HeatReport,
    pub mesh: AmrMesh,
    pub phi: Vec<MultiFab>,
}

fn unit(d: usize) -> IntVect {
    let mut v = IntVect::zero();
    v[d] = 1;
    v
}

fn define_level(comm: &Comm, mesh: &AmrMesh, level: usize) -> Result<MultiFab> {
    MultiFab::define(mesh.boxarray(level), mesh.dm(level), 1, IntVect::unit(), comm.rank(), &Default::default())
}

fn set_exact(comm: &Comm, mf: &mut MultiFab, geom: &Geometry, pulse: &GaussianPulse, t: Real) {
    comm.backend().parallel_for_fused(mf, |_, iv, mut cell| cell.set(0, pulse.value(geom.cell_center(iv), t)));
}

/// Error norms of component 0 against `pulse` at `t`, over valid cells
/// where `select` holds. Collective.
pub fn level_error(
    comm: &Comm,
    mf: &MultiFab,
    geom: &Geometry,
    pulse: &GaussianPulse,
    t: Real,
    select: impl Fn(IntVect) -> bool + Sync,
) -> Result<ErrorNorms> {
    let views: Vec<_> = mf.fabs().iter().map(|f| f.view()).collect();
    let [linf, sq, n] = comm.backend().reduce_multifab(mf, [ReduceOp::Max, ReduceOp::Sum, ReduceOp::Sum], |l, iv| {
        if !select(iv) {
            return [0.0, 0.0, 0.0];
        }
        let e = views[l].get(iv, 0) - pulse.value(geom.cell_center(iv), t);
        [e.abs(), e * e, 1.0]
    });
    let [linf, sq, n] = comm.allreduce([ReduceOp::Max, ReduceOp::Sum, ReduceOp::Sum], [linf, sq, n])?;
    Ok(ErrorNorms { linf, l2: (sq * geom.cell_volume()).sqrt(), cells: n as usize })
}

/// Volume integral of component 0 over valid cells. Collective.
pub fn integral(comm: &Comm, mf: &MultiFab, geom: &Geometry) -> Result<Real> {
    let views: Vec<_> = mf.fabs().iter().map(|f| f.view()).collect();
    let [s] = comm.backend().reduce_multifab(mf, [ReduceOp::Sum], |l, iv| [views[l].get(iv, 0)]);
    let [s] = comm.allreduce([ReduceOp::Sum], [s])?;
    Ok(s * geom.cell_volume())
}

/// One forward-Euler step from `old` (ghosts filled) into `new`.
fn advance(comm: &Comm, old: &MultiFab, new: &mut MultiFab, coef: [Real; SPACEDIM], tile: IntVect) -> Result<()> {
    let views: Vec<_> = old.fabs().iter().map(|f| f.view()).collect();
    let regions: Vec<(usize, IndexBox)> = new
        .local_indices()
        .iter()
        .enumerate()
        .flat_map(|(l, &i)| new.valid_box(i).tiles(tile).into_iter().map(move |t| (l, t)))
        .collect();
    let axes: Vec<(IntVect, Real)> = (0..SPACEDIM).filter(|&d| coef[d] != 0.0).map(|d| (unit(d), coef[d])).collect();
    comm.backend().parallel_for_regions(new.fabs_mut(), &regions, |l, iv, mut cell| {
        let f = &views[l];
        let u = f.get(iv, 0);
        let mut du = 0.0;
        for &(e, c) in &axes {
            du += c * (f.get(iv + e, 0) + f.get(iv - e, 0) - 2.0 * u);
        }
        cell.set(0, u + du);
    })
}

struct Hierarchy {
    mesh: AmrMesh,
    phi: Vec<MultiFab>,
}

impl Hierarchy {
    fn average_down_all(&mut self, comm: &Comm) -> Result<()> {
        let r = self.mesh.ref_ratio();
        for l in (1..self.phi.len()).rev() {
            let (c, f) = self.phi.split_at_mut(l);
            average_down(comm, &f[0], &mut c[l - 1], r, 0, 1)?;
        }
        Ok(())
    }

    fn fill_ghosts(&mut self, comm: &Comm, scheme: InterpScheme) -> Result<()> {
        fill_boundary(comm, &mut self.phi[0], self.mesh.geom(0))?;
        let r = self.mesh.ref_ratio();
        for l in 1..self.phi.len() {
            let (c, f) = self.phi.split_at_mut(l);
            fill_patch(comm, &mut f[0], &c[l - 1], self.mesh.geom(l), self.mesh.geom(l - 1), r, scheme)?;
        }
        Ok(())
    }

    /// Rebuilds levels above `base` from tags. New cells are interpolated
    /// from the coarser level; cells that were refined before keep their
    /// data. With `exact`, new levels are instead initialized from the pulse.
    fn regrid(&mut self, comm: &Comm, cfg: &HeatConfig, exact: Option<(&GaussianPulse, Real)>) -> Result<()> {
        let r = self.mesh.ref_ratio();
        let mut level = 0;
        while level < self.mesh.max_level() && level < self.phi.len() {
            let tags = TagField::from_predicate(&self.phi[level], 0, |v| v.abs() > cfg.tag_threshold)?;
            let ba = self.mesh.regrid(comm, level, &tags)?;
            if ba.is_empty() {
                self.mesh.set_level(level + 1, BoxArray::new_overlapping(vec![])?)?;
                self.phi.truncate(level + 1);
                break;
            }
            if level + 1 < self.phi.len() && ba.boxes() == self.phi[level + 1].boxarray().boxes() {
                level += 1;
                continue;
            }
            self.mesh.set_level(level + 1, ba)?;
            let mut fine = define_level(comm, &self.mesh, level + 1)?;
            match exact {
                Some((pulse, t)) => set_exact(comm, &mut fine, self.mesh.geom(level + 1), pulse, t),
                None => {
                    fill_coarse_patch(comm, &mut fine, &self.phi[level], self.mesh.geom(level), r, cfg.interp)?;
                    if let Some(old) = self.phi.get(level + 1) {
                        parallel_copy(comm, &mut fine, old, CopySpec::comps(1), None)?;
                    }
                }
            }
            self.phi.truncate(level + 1);
            self.phi.push(fine);
            level += 1;
        }
        Ok(())
    }
}

/// Runs the demo on the ranks of `comm`. Collective.
pub fn run_heat(comm: &Comm, cfg: &HeatConfig) -> Result<HeatOutcome> {
    cfg.check_window()?;
    if cfg.amr.max_level > 0 && !cfg.amr.n_cell.all_ge(IntVect::splat(2)) {
        return Err(Error::Demo("refinement needs every axis resolved".into()));
    }
    let mesh = AmrMesh::new(cfg.amr, [0.0; SPACEDIM], [1.0; SPACEDIM], [true; SPACEDIM], comm.nranks())?;
    let finest_geom = mesh.geom(mesh.max_level()).clone();
    let (dt, nsteps) = cfg.time_steps(finest_geom.cell_size())?;
    let pulse = cfg.pulse();

    let mut phi0 = define_level(comm, &mesh, 0)?;
    set_exact(comm, &mut phi0, mesh.geom(0), &pulse, 0.0);
    let mut h = Hierarchy { mesh, phi: vec![phi0] };
    h.regrid(comm, cfg, Some((&pulse, 0.0)))?;
    h.average_down_all(comm)?;
    let integral_initial = integral(comm, &h.phi[0], h.mesh.geom(0))?;

    let mut scratch: Vec<MultiFab> = Vec::new();
    let mut plotfiles = Vec::new();
    let mut t: Real = 0.0;
    let plot = |h: &Hierarchy, step: usize, t: Real, out: &mut Vec<String>| -> Result<()> {
        if let Some(dir) = &cfg.plotfile_dir {
            if comm.rank() == 0 {
                std::fs::create_dir_all(dir)?;
            }
            comm.barrier();
            let path = dir.join(format!("plt{step:05}"));
            let data: Vec<&MultiFab> = h.phi.iter().collect();
            write_plotfile(comm, &path, &h.mesh, &data, &["phi"], t.into())?;
            out.push(path.display().to_string());
        }
        Ok(())
    };
    if cfg.plot_int > 0 {
        plot(&h, 0, t, &mut plotfiles)?;
    }

    for step in 1..=nsteps {
        h.fill_ghosts(comm, cfg.interp)?;
        if scratch.len() != h.phi.len()
            || scratch.iter().zip(&h.phi).any(|(s, p)| s.boxarray().id() != p.boxarray().id())
        {
            scratch = h.phi.iter().map(|p| p.define_like(1, IntVect::unit())).collect::<Result<_>>()?;
        }
        for (l, (old, new)) in h.phi.iter().zip(scratch.iter_mut()).enumerate() {
            let hx = h.mesh.geom(l).cell_size();
            let coef = std::array::from_fn(|d| {
                if pulse.active[d] { cfg.diffusivity * dt / (hx[d] * hx[d]) } else { 0.0 }
            });
            advance(comm, old, new, coef, cfg.tile_size)?;
        }
        std::mem::swap(&mut h.phi, &mut scratch);
        h.average_down_all(comm)?;
        t = dt * step as Real;
        if cfg.regrid_int > 0 && step % cfg.regrid_int == 0 && step < nsteps {
            h.regrid(comm, cfg, None)?;
            h.average_down_all(comm)?;
        }
        if cfg.plot_int > 0 && (step % cfg.plot_int == 0 || step == nsteps) {
            plot(&h, step, t, &mut plotfiles)?;
        }
    }

    let r = h.mesh.ref_ratio();
    let mut levels = Vec::new();
    let (mut linf, mut sq, mut cells) = (0.0 as Real, 0.0 as Real, 0);
    for (l, mf) in h.phi.iter().enumerate() {
        let covered = match h.phi.get(l + 1) {
            Some(f) => f.boxarray().coarsen(r)?,
            None => BoxArray::new_overlapping(vec![])?,
        };
        let e = level_error(comm, mf, h.mesh.geom(l), &pulse, t, |iv| covered.find(iv).is_none())?;
        linf = linf.max(e.linf);
        sq += e.l2 * e.l2;
        cells += e.cells;
        levels.push(LevelReport { nboxes: mf.len(), ncells: mf.boxarray().num_pts(), error: e });
    }
    let report = HeatReport {
        steps: nsteps,
        dt,
        time: t,
        levels,
        error: ErrorNorms { linf, l2: sq.sqrt(), cells },
        integral_initial,
        integral_final: integral(comm, &h.phi[0], h.mesh.geom(0))?,
        plotfiles,
    };
    Ok(HeatOutcome { report, mesh: h.mesh, phi: h.phi })
}

/// Runs the demo on `cfg.nranks` simulated ranks; returns rank 0's report
/// and the point-to-point traffic of the run.
pub fn run_heat_demo(cfg: &HeatConfig) -> Result<(HeatReport, MessageStats)> {
    let rt = RankRuntime::new(cfg.nranks.max(1)).with_backend(cfg.backend, cfg.nworkers);
    let mut reports = rt.run(|comm| run_heat(comm, cfg).map(|o| o.report))?;
    Ok((reports.swap_remove(0)?, rt.message_stats()))
}
