//! Trajectory CSV: one header row, then one row per recorded sample.

use std::io::{Read, Write};

use crate::controller::ClosedLoop;
use crate::error::{Error, Result};

/// Quantities derived from one recorded state.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub t: f64,
    pub state: Vec<f64>,
    /// Frequency at every bus.
    pub omega: Vec<f64>,
    pub d: Vec<f64>,
    pub lyapunov: f64,
}

/// Column names in file order.
pub fn header(cl: &ClosedLoop) -> Vec<String> {
    let g = &cl.grid;
    let mut h = vec!["t".to_string()];
    h.extend(g.bus_ids.iter().map(|b| format!("omega_{b}")));
    h.extend(g.line_labels.iter().map(|l| format!("P_{l}")));
    h.extend(g.bus_ids.iter().map(|b| format!("lambda_{b}")));
    match cl.comm() {
        None => h.extend(g.area_ids.iter().map(|a| format!("pi_{a}"))),
        Some(comm) => {
            let name = |prefix: &str, &(k, e): &(usize, usize)| {
                format!("{prefix}_{}_{}", g.area_ids[k], g.constrained_ids[e])
            };
            h.extend(comm.pairs.iter().map(|p| name("pi", p)));
            h.extend(comm.pairs.iter().map(|p| name("gamma", p)));
        }
    }
    h.extend(g.constrained_ids.iter().map(|l| format!("rhoP_{l}")));
    h.extend(g.constrained_ids.iter().map(|l| format!("rhoM_{l}")));
    h.extend(g.bus_ids.iter().map(|b| format!("phi_{b}")));
    h.extend(g.bus_ids.iter().map(|b| format!("d_{b}")));
    h.push("U".to_string());
    h
}

/// Fixed 17-significant-digit rendering; round-trips every finite double.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn row_values(cl: &ClosedLoop, s: &SampleRow) -> Vec<f64> {
    let l = cl.layout;
    let z = &s.state;
    let mut v = Vec::with_capacity(header(cl).len());
    v.push(s.t);
    v.extend_from_slice(&s.omega);
    v.extend_from_slice(&z[l.flows()]);
    v.extend_from_slice(&z[l.lambda()]);
    v.extend_from_slice(&z[l.pi()]);
    v.extend_from_slice(&z[l.gamma()]);
    v.extend_from_slice(&z[l.rho_plus()]);
    v.extend_from_slice(&z[l.rho_minus()]);
    v.extend_from_slice(&z[l.phi()]);
    v.extend_from_slice(&s.d);
    v.push(s.lyapunov);
    v
}

pub fn write_csv<W: Write>(cl: &ClosedLoop, samples: &[SampleRow], mut out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Io {
        path: "trajectory output".into(),
        source: e,
    };
    writeln!(out, "{}", header(cl).join(",")).map_err(io)?;
    for s in samples {
        let line: Vec<String> = row_values(cl, s).into_iter().map(format_float).collect();
        writeln!(out, "{}", line.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Parsed trajectory file.
#[derive(Debug, Clone)]
pub struct CsvTrajectory {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTrajectory {
    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Csv(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
            let row = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|_| Error::Csv(format!("bad number '{f}'"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != header.len() {
                return Err(Error::Csv("row length differs from header".into()));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Csv("trajectory has no samples".into()));
        }
        Ok(CsvTrajectory { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Rebuilds a sample (state, frequencies, loads, U) from a row, after
    /// checking that the columns are the ones `cl` would write.
    pub fn sample(&self, cl: &ClosedLoop, row: usize) -> Result<SampleRow> {
        let expected = header(cl);
        if expected != self.header {
            return Err(Error::Csv(
                "trajectory columns do not match the scenario (wrong case or variant?)".into(),
            ));
        }
        let v = &self.rows[row];
        let l = cl.layout;
        let n = cl.grid.n();
        let mut at = 1;
        let mut take = |len: usize| {
            let s = v[at..at + len].to_vec();
            at += len;
            s
        };
        let omega = take(n);
        let mut z = vec![0.0; l.dim()];
        for (k, &i) in cl.grid.generators.iter().enumerate() {
            z[l.omega_g().start + k] = omega[i];
        }
        for r in [l.flows(), l.lambda(), l.pi(), l.gamma(), l.rho_plus(), l.rho_minus(), l.phi()] {
            let len = r.len();
            z[r].copy_from_slice(&take(len));
        }
        let d = take(n);
        Ok(SampleRow {
            t: v[0],
            state: z,
            omega,
            d,
            lyapunov: *v.last().unwrap(),
        })
    }
}
