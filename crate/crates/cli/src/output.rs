//! Residual CSV, grid dump and run log writers.

use std::io::{self, Write};

use mgtree_core::solver::SweepRecord;
use mgtree_core::spacetree::Spacetree;

pub fn csv_header(out: &mut (impl Write + ?Sized), channels: usize) -> io::Result<()> {
    write!(out, "sweep,workUnits,vertexCount,maxNorm,euclid,hNorm")?;
    if channels > 1 {
        for ch in 0..channels {
            write!(out, ",maxNorm{ch},euclid{ch},hNorm{ch}")?;
        }
    }
    writeln!(out)
}

pub fn csv_row(out: &mut (impl Write + ?Sized), r: &SweepRecord) -> io::Result<()> {
    let n = &r.combined;
    write!(out, "{},{:e},{},{:e},{:e},{:e}", r.sweep, r.work_units, r.fine_vertices, n.max, n.euclid, n.h_norm)?;
    if r.channels.len() > 1 {
        for c in &r.channels {
            write!(out, ",{:e},{:e},{:e}", c.max, c.euclid, c.h_norm)?;
        }
    }
    writeln!(out)
}

/// One line per leaf cell (`level i0 .. theta`), then one per non-hanging
/// vertex (`level i0 .. re im` per channel), both sorted by level and index.
pub fn grid_dump(out: &mut (impl Write + ?Sized), tree: &Spacetree) -> io::Result<()> {
    let p = tree.dim();
    let mut cells: Vec<_> = tree.leaf_ids().map(|c| tree.cell(c)).collect();
    cells.sort_by_key(|c| (c.level, c.index));
    writeln!(out, "# cells: level index theta")?;
    for c in cells {
        write!(out, "{}", c.level)?;
        for i in &c.index[..p] {
            write!(out, " {i}")?;
        }
        writeln!(out, " {:e}", c.theta)?;
    }
    let mut vertices: Vec<_> =
        tree.vertex_ids().map(|v| tree.vertex(v)).filter(|v| !v.flags.hanging).collect();
    vertices.sort_by_key(|v| (v.level, v.index));
    writeln!(out, "# vertices: level index re(u) im(u)")?;
    for v in vertices {
        write!(out, "{}", v.level)?;
        for i in &v.index[..p] {
            write!(out, " {i}")?;
        }
        for pl in v.payload.iter() {
            write!(out, " {:e} {:e}", pl.u.re, pl.u.im)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn log_sweep(out: &mut (impl Write + ?Sized), r: &SweepRecord) -> io::Result<()> {
    write!(
        out,
        "sweep {:>4}  work {:>9.3}  vertices {:>8}  max {:.3e}  euclid {:.3e}  h {:.3e}",
        r.sweep, r.work_units, r.fine_vertices, r.combined.max, r.combined.euclid, r.combined.h_norm
    )?;
    if let Some(a) = r.amr {
        write!(
            out,
            "  refined {}  erased {}  veto(width) {}  veto(convergence) {}",
            a.refined_cells, a.erased_cells, a.veto_width, a.veto_convergence
        )?;
    }
    writeln!(out)
}
