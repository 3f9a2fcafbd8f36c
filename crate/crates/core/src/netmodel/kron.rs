use nalgebra::{DMatrix, DVector};

use super::{graph_matrices, incidence, laplacian_pinv, NetworkCase};
use crate::error::{Error, Result};
use crate::tolerances::KRON_FILL;

/// A line of the Kron-reduced network between two retained buses.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedLine {
    /// Local indices into `ReducedNetwork::retained`.
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
}

/// The network after eliminating zero-injection buses.
#[derive(Debug, Clone)]
pub struct ReducedNetwork {
    /// Original bus indices kept, in original order.
    pub retained: Vec<usize>,
    pub eliminated: Vec<usize>,
    pub lines: Vec<ReducedLine>,
    pub incidence: DMatrix<f64>,
    pub susceptance: DVector<f64>,
    pub laplacian: DMatrix<f64>,
    /// Maps reduced line flows to original line flows (`|E| x |E#|`).
    pub flow_recovery: DMatrix<f64>,
    /// True when nothing was eliminated and the original lines are reused.
    pub trivial: bool,
}

pub fn kron_reduce(case: &NetworkCase) -> Result<ReducedNetwork> {
    let eliminated = case.zero_buses();
    let retained: Vec<usize> = (0..case.buses.len())
        .filter(|i| !eliminated.contains(i))
        .collect();
    if retained.is_empty() {
        return Err(Error::InvalidCase(
            "every bus is zero-injection; nothing to retain".into(),
        ));
    }
    let gm = graph_matrices(case);

    if eliminated.is_empty() {
        let lines = case
            .lines
            .iter()
            .map(|l| ReducedLine {
                from: l.from,
                to: l.to,
                susceptance: l.susceptance,
            })
            .collect();
        let m = case.lines.len();
        return Ok(ReducedNetwork {
            retained,
            eliminated,
            lines,
            incidence: gm.incidence,
            susceptance: gm.susceptance,
            laplacian: gm.laplacian,
            flow_recovery: DMatrix::identity(m, m),
            trivial: true,
        });
    }

    let l = &gm.laplacian;
    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| l[(rows[a], cols[b])])
    };
    let l_rr = pick(&retained, &retained);
    let l_rz = pick(&retained, &eliminated);
    let l_zz = pick(&eliminated, &eliminated);
    // LU rather than Cholesky keeps simple reductions (a single series
    // bus) exact in floating point.
    let zz_inv_zr = l_zz
        .lu()
        .solve(&l_rz.transpose())
        .ok_or_else(|| Error::Singular("zero-injection block of the Laplacian".into()))?;
    let schur = l_rr - &l_rz * zz_inv_zr;

    let r = retained.len();
    let mut lines = Vec::new();
    for i in 0..r {
        for j in (i + 1)..r {
            let w = -schur[(i, j)];
            if w.abs() > KRON_FILL {
                lines.push(ReducedLine {
                    from: i,
                    to: j,
                    susceptance: w,
                });
            }
        }
    }
    let edges: Vec<_> = lines.iter().map(|l| (l.from, l.to)).collect();
    let c_red = incidence(r, &edges);
    let b_red = DVector::from_iterator(lines.len(), lines.iter().map(|l| l.susceptance));
    let laplacian = crate::netmodel::weighted_laplacian(&c_red, &b_red);

    // A# = B C^T L^+ [:, R] C#, i.e. original flows induced by the reduced
    // injections C# P# once zero buses are assigned zero injection.
    let pinv = laplacian_pinv(l)?;
    let lift = DMatrix::from_fn(case.buses.len(), r, |a, b| pinv[(a, retained[b])]);
    let bct = DMatrix::from_diagonal(&gm.susceptance) * gm.incidence.transpose();
    let flow_recovery = bct * lift * &c_red;

    Ok(ReducedNetwork {
        retained,
        eliminated,
        lines,
        incidence: c_red,
        susceptance: b_red,
        laplacian,
        flow_recovery,
        trivial: false,
    })
}

impl ReducedNetwork {
    /// Original line flows corresponding to reduced line flows.
    pub fn recover_flows(&self, reduced_flows: &DVector<f64>) -> Result<DVector<f64>> {
        if reduced_flows.len() != self.lines.len() {
            return Err(Error::Dimension {
                expected: self.lines.len(),
                got: reduced_flows.len(),
            });
        }
        Ok(&self.flow_recovery * reduced_flows)
    }
}
