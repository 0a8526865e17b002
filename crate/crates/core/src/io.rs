//! CSV readers and writers for histograms, scans, trajectories, spectra and
//! sweeps. Every written file starts with one `#` metadata line.

use std::io::{Read, Write};

use thiserror::Error;

use crate::dynamics::{CavityState, LatticeState};
use crate::ensemble::{CouplingBin, FreqBin};
use crate::phases::PhasePoint;
use crate::stability::{LatticeGk, LatticeStabilityScan};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("expected header `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
}

fn write_meta<W: Write>(out: &mut W, meta: &str) -> Result<(), IoError> {
    // keep the metadata on a single line
    let flat: String = meta
        .chars()
        .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
        .collect();
    writeln!(out, "# {flat}")?;
    Ok(())
}

fn csv_writer<W: Write>(
    mut out: W,
    meta: &str,
    header: &[&str],
) -> Result<csv::Writer<W>, IoError> {
    write_meta(&mut out, meta)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

/// Shortest round-trip form; exponent notation outside `[1e-4, 1e16)`.
fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn read_rows<R: Read>(input: R, header: &[&str]) -> Result<Vec<csv::StringRecord>, IoError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let found = r.headers()?.clone();
    if found.len() != header.len() || found.iter().zip(header).any(|(a, b)| a != *b) {
        return Err(IoError::Header {
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(r.records().collect::<Result<_, _>>()?)
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    row: usize,
) -> Result<T, IoError> {
    let s = rec.get(i).unwrap_or("");
    s.parse().map_err(|_| IoError::Row {
        row,
        reason: format!("cannot parse `{s}`"),
    })
}

/// Parse a `g0_mhz,count` histogram.
pub fn read_coupling_histogram<R: Read>(input: R) -> Result<Vec<CouplingBin>, IoError> {
    let rows = read_rows(input, &["g0_mhz", "count"])?;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(CouplingBin {
                g0: field(r, 0, i + 1)?,
                count: field(r, 1, i + 1)?,
            })
        })
        .collect()
}

/// Parse a `delta_mhz,weight` histogram.
pub fn read_frequency_histogram<R: Read>(input: R) -> Result<Vec<FreqBin>, IoError> {
    let rows = read_rows(input, &["delta_mhz", "weight"])?;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(FreqBin {
                delta: field(r, 0, i + 1)?,
                weight: field(r, 1, i + 1)?,
            })
        })
        .collect()
}

pub fn write_coupling_histogram<W: Write>(
    out: W,
    meta: &str,
    bins: &[CouplingBin],
) -> Result<(), IoError> {
    let mut w = csv_writer(out, meta, &["g0_mhz", "count"])?;
    for b in bins {
        w.write_record([num(b.g0), b.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_frequency_histogram<W: Write>(
    out: W,
    meta: &str,
    bins: &[FreqBin],
) -> Result<(), IoError> {
    let mut w = csv_writer(out, meta, &["delta_mhz", "weight"])?;
    for b in bins {
        w.write_record([num(b.delta), num(b.weight)])?;
    }
    w.flush()?;
    Ok(())
}

/// `k,G_k` rows. Modes that never destabilize are written as `inf`, modes
/// unstable at zero coupling as `0`.
pub fn write_lattice_scan<W: Write>(
    out: W,
    meta: &str,
    scan: &LatticeStabilityScan,
) -> Result<(), IoError> {
    let mut w = csv_writer(out, meta, &["k", "G_k"])?;
    for (k, g) in scan.k_values.iter().zip(&scan.g_k) {
        let v = match g {
            LatticeGk::Finite(v) => num(*v),
            LatticeGk::NoTransition => "inf".to_string(),
            LatticeGk::UnstableAtZero => "0".to_string(),
        };
        w.write_record([num(*k), v])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per site and sample.
pub fn write_lattice_trajectory<W: Write>(
    out: W,
    meta: &str,
    traj: &[LatticeState],
) -> Result<(), IoError> {
    let mut w = csv_writer(
        out,
        meta,
        &["time", "site", "re_a", "im_a", "re_Jm", "im_Jm", "Jz"],
    )?;
    for s in traj {
        for l in 0..s.n_sites() {
            w.write_record([
                num(s.time),
                l.to_string(),
                num(s.a[l].re),
                num(s.a[l].im),
                num(s.jm[l].re),
                num(s.jm[l].im),
                num(s.jz[l]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Cavity field, then `(re_beta, im_beta, z)` per group.
pub fn write_cavity_trajectory<W: Write>(
    out: W,
    meta: &str,
    traj: &[CavityState],
) -> Result<(), IoError> {
    let groups = traj.first().map_or(0, |s| s.betas.len());
    let mut header = vec![
        "time".to_string(),
        "re_alpha".to_string(),
        "im_alpha".to_string(),
    ];
    for mu in 0..groups {
        header.push(format!("re_beta_{mu}"));
        header.push(format!("im_beta_{mu}"));
        header.push(format!("z_{mu}"));
    }
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = csv_writer(out, meta, &h)?;
    let mut row = Vec::with_capacity(header.len());
    for s in traj {
        row.clear();
        row.extend([num(s.time), num(s.alpha.re), num(s.alpha.im)]);
        for (b, z) in s.betas.iter().zip(&s.z) {
            row.extend([num(b.re), num(b.im), num(*z)]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `k_over_pi,abs_alpha_k_sq` from `(k, |alpha_k|^2)` pairs.
pub fn write_spectrum<W: Write>(out: W, meta: &str, spec: &[(f64, f64)]) -> Result<(), IoError> {
    let mut w = csv_writer(out, meta, &["k_over_pi", "abs_alpha_k_sq"])?;
    for (k, p) in spec {
        w.write_record([num(k / std::f64::consts::PI), num(*p)])?;
    }
    w.flush()?;
    Ok(())
}

/// Sweep rows in units of `Delta_c`; missing values are left empty.
pub fn write_sweep<W: Write>(
    out: W,
    meta: &str,
    delta_c: f64,
    points: &[PhasePoint],
) -> Result<(), IoError> {
    let mut w = csv_writer(
        out,
        meta,
        &[
            "t_over_Dc",
            "G_over_Dc",
            "label",
            "k_star_over_pi",
            "max_abs_alpha",
        ],
    )?;
    for p in points {
        w.write_record([
            num(p.t / delta_c),
            num(p.g / delta_c),
            p.label.to_string(),
            p.k_star
                .map_or(String::new(), |k| num(k / std::f64::consts::PI)),
            p.order_param
                .map_or(String::new(), |o| num(o.max_abs_alpha)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Generic numeric table with a caller-chosen header.
pub fn write_table<W: Write>(
    out: W,
    meta: &str,
    header: &[&str],
    rows: &[Vec<f64>],
) -> Result<(), IoError> {
    let mut w = csv_writer(out, meta, header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| num(*x)))?;
    }
    w.flush()?;
    Ok(())
}
