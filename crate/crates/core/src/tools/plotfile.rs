//! Snapshot format for mesh hierarchies.
//!
//! ```text
//! MINIAMR-PLT v1
//! <ndim> <ncomp> <nlevels> <time>
//! <name>                        one line per component
//! <nboxes> <ref_ratio>          per level, followed by one line per box:
//! <lo_0 .. lo_{ndim-1}> <hi_0 .. hi_{ndim-1}>
//! ```
//!
//! The binary section follows the last header line. For every level and box
//! in header order: a little-endian `u64` byte count, then the valid-region
//! data as little-endian `f64`, Fortran order, components in order.
//! `ref_ratio` is the ratio to the next coarser level (1 on level 0). Times
//! are written in shortest round-trip decimal form.

use std::path::Path;

use crate::amr::AmrMesh;
use crate::comm::{gather_valid, Comm};
use crate::error::{Error, Result};
use crate::index_space::{IndexBox, IntVect, SPACEDIM};
use crate::mesh::MultiFab;
use crate::Real;

pub const MAGIC: &str = "MINIAMR-PLT v1";

#[derive(Clone, Debug, PartialEq)]
pub struct PlotLevel {
    pub ref_ratio: i32,
    pub boxes: Vec<IndexBox>,
    /// Per box: valid data, Fortran order, components in order.
    pub data: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plotfile {
    pub time: f64,
    pub names: Vec<String>,
    pub levels: Vec<PlotLevel>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Plotfile(msg.into())
}

impl Plotfile {
    pub fn ncomp(&self) -> usize {
        self.names.len()
    }

    /// Value of component `c` at cell `iv` of box `b` on `level`.
    pub fn value(&self, level: usize, b: usize, iv: IntVect, c: usize) -> f64 {
        let lev = &self.levels[level];
        let bx = lev.boxes[b];
        lev.data[b][c * bx.num_pts() + bx.offset(iv)]
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        for n in &self.names {
            if n.is_empty() || n.chars().any(char::is_whitespace) {
                return Err(bad(format!("component name `{n}` must be non-empty without whitespace")));
            }
        }
        let mut head = format!("{MAGIC}\n{SPACEDIM} {} {} {}\n", self.ncomp(), self.levels.len(), self.time);
        for n in &self.names {
            head.push_str(n);
            head.push('\n');
        }
        for lev in &self.levels {
            if lev.boxes.len() != lev.data.len() {
                return Err(bad("box and payload counts differ"));
            }
            head.push_str(&format!("{} {}\n", lev.boxes.len(), lev.ref_ratio));
            for b in &lev.boxes {
                let (lo, hi) = (b.lo(), b.hi());
                let nums: Vec<String> = (0..SPACEDIM).map(|d| lo[d]).chain((0..SPACEDIM).map(|d| hi[d])).map(|v| v.to_string()).collect();
                head.push_str(&nums.join(" "));
                head.push('\n');
            }
        }
        let mut out = head.into_bytes();
        for lev in &self.levels {
            for (b, d) in lev.boxes.iter().zip(&lev.data) {
                if d.len() != b.num_pts() * self.ncomp() {
                    return Err(bad(format!("payload of {b} has {} values", d.len())));
                }
                out.extend_from_slice(&((d.len() * 8) as u64).to_le_bytes());
                for v in d {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Plotfile> {
        let mut pos = 0;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[pos..];
            let end = rest.iter().position(|&c| c == b'\n').ok_or_else(|| bad("truncated header"))?;
            pos += end + 1;
            std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not utf-8"))
        };
        if next_line()? != MAGIC {
            return Err(bad("magic mismatch"));
        }
        let dims: Vec<&str> = next_line()?.split(' ').collect();
        let [ndim, ncomp, nlevels, time] = dims[..] else { return Err(bad("malformed dimension line")) };
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad integer `{s}`")));
        if int(ndim)? != SPACEDIM {
            return Err(bad(format!("ndim {ndim} unsupported")));
        }
        let (ncomp, nlevels) = (int(ncomp)?, int(nlevels)?);
        let time: f64 = time.parse().map_err(|_| bad(format!("bad time `{time}`")))?;
        let names = (0..ncomp).map(|_| next_line().map(str::to_string)).collect::<Result<Vec<_>>>()?;
        let mut levels = Vec::with_capacity(nlevels);
        for _ in 0..nlevels {
            let l: Vec<&str> = next_line()?.split(' ').collect();
            let [nb, rr] = l[..] else { return Err(bad("malformed level line")) };
            let nb = int(nb)?;
            let ref_ratio: i32 = rr.parse().map_err(|_| bad(format!("bad ratio `{rr}`")))?;
            let mut boxes = Vec::with_capacity(nb);
            for _ in 0..nb {
                let v = next_line()?
                    .split(' ')
                    .map(|s| s.parse::<i32>().map_err(|_| bad(format!("bad box coordinate `{s}`"))))
                    .collect::<Result<Vec<i32>>>()?;
                if v.len() != 2 * SPACEDIM {
                    return Err(bad("malformed box line"));
                }
                boxes.push(IndexBox::new(IntVect::new(v[0], v[1], v[2]), IntVect::new(v[3], v[4], v[5])));
            }
            levels.push(PlotLevel { ref_ratio, boxes, data: Vec::new() });
        }
        for lev in &mut levels {
            for b in &lev.boxes {
                let len_bytes = bytes.get(pos..pos + 8).ok_or_else(|| bad("truncated payload"))?;
                let n = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes")) as usize;
                pos += 8;
                if n != b.num_pts() * ncomp * 8 {
                    return Err(bad(format!("payload of {b} has {n} bytes")));
                }
                let raw = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated payload"))?;
                pos += n;
                lev.data.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect());
            }
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Plotfile { time, names, levels })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Plotfile> {
        Plotfile::decode(&std::fs::read(path)?)
    }
}

/// Gathers one multifab per level (`(mf, ratio to coarser)`) on rank 0 and
/// writes the file there. Collective.
pub fn write_levels(comm: &Comm, path: &Path, levels: &[(&MultiFab, i32)], names: &[&str], time: f64) -> Result<()> {
    for (mf, _) in levels {
        if mf.ncomp() != names.len() {
            return Err(bad(format!("{} names for {} components", names.len(), mf.ncomp())));
        }
    }
    let mut out = Vec::with_capacity(levels.len());
    for &(mf, ref_ratio) in levels {
        if let Some(data) = gather_valid(comm, mf, 0)? {
            let data = data.into_iter().map(|v| v.into_iter().map(f64::from).collect()).collect();
            out.push(PlotLevel { ref_ratio, boxes: mf.boxarray().boxes().to_vec(), data });
        }
    }
    let result = if comm.rank() == 0 {
        Plotfile { time, names: names.iter().map(|s| s.to_string()).collect(), levels: out }.write(path)
    } else {
        Ok(())
    };
    let ok = !comm.any(result.is_err());
    result?;
    if ok { Ok(()) } else { Err(bad("write failed on rank 0")) }
}

/// Writes levels `0..data.len()` of `mesh`.
pub fn write_plotfile(
    comm: &Comm,
    path: &Path,
    mesh: &AmrMesh,
    data: &[&MultiFab],
    names: &[&str],
    time: f64,
) -> Result<()> {
    if data.len() > mesh.finest_level() + 1 {
        return Err(Error::NoSuchLevel(data.len() - 1));
    }
    let levels: Vec<(&MultiFab, i32)> =
        data.iter().enumerate().map(|(l, mf)| (*mf, if l == 0 { 1 } else { mesh.ref_ratio() })).collect();
    write_levels(comm, path, &levels, names, time)
}

pub fn read_plotfile(path: &Path) -> Result<Plotfile> {
    Plotfile::read(path)
}

/// Widens `Real` samples for comparison with plotfile payloads.
pub fn widen(v: &[Real]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Plotfile {
        let b0 = IndexBox::new(IntVect::new(0, 0, 0), IntVect::new(1, 1, 0));
        let b1 = IndexBox::new(IntVect::new(-2, 0, 0), IntVect::new(0, 0, 0));
        Plotfile {
            time: 0.1 + 0.2,
            names: vec!["phi".into(), "rho".into()],
            levels: vec![
                PlotLevel { ref_ratio: 1, boxes: vec![b0], data: vec![(0..8).map(|k| k as f64 / 3.0).collect()] },
                PlotLevel { ref_ratio: 2, boxes: vec![b1], data: vec![vec![f64::MIN_POSITIVE, -0.0, 1e300, 2.0, 3.0, 4.0]] },
            ],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = sample();
        let bytes = p.encode().unwrap();
        let q = Plotfile::decode(&bytes).unwrap();
        assert_eq!(q.encode().unwrap(), bytes);
        assert_eq!(q.time.to_bits(), p.time.to_bits());
        assert_eq!(q.levels[1].data[0][1].to_bits(), (-0.0f64).to_bits());
        assert_eq!(q.value(0, 0, IntVect::new(1, 1, 0), 1), 7.0 / 3.0);
    }

    #[test]
    fn header_layout() {
        let bytes = sample().encode().unwrap();
        let text = String::from_utf8_lossy(&bytes);
        let lines: Vec<&str> = text.lines().take(8).collect();
        assert_eq!(lines[..7], ["MINIAMR-PLT v1", "3 2 2 0.30000000000000004", "phi", "rho", "1 1", "0 0 0 1 1 0", "1 2"]);
        assert!(lines[7].starts_with("-2 0 0 0 0 0"));
        let header_len = text.find("-2 0 0 0 0 0\n").unwrap() + "-2 0 0 0 0 0\n".len();
        assert_eq!(&bytes[header_len..header_len + 8], &64u64.to_le_bytes());
        assert_eq!(&bytes[header_len + 16..header_len + 24], &(1.0f64 / 3.0).to_le_bytes());
    }

    #[test]
    fn empty_and_corrupt() {
        let p = Plotfile { time: 0.0, names: vec!["u".into()], levels: vec![] };
        let bytes = p.encode().unwrap();
        assert_eq!(bytes, b"MINIAMR-PLT v1\n3 1 0 0\nu\n");
        assert_eq!(Plotfile::decode(&bytes).unwrap(), p);
        let good = sample().encode().unwrap();
        assert!(matches!(Plotfile::decode(&good[..good.len() - 3]), Err(Error::Plotfile(_))));
        let mut wrong = good.clone();
        wrong[0] = b'X';
        assert_eq!(Plotfile::decode(&wrong), Err(Error::Plotfile("magic mismatch".into())));
        let mut bad_name = sample();
        bad_name.names[0] = "a b".into();
        assert!(bad_name.encode().is_err());
    }
}
