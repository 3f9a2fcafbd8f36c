use nalgebra::{DMatrix, DVector};

use super::NetworkCase;
use crate::error::{Error, Result};

/// Dense graph operators of a case.
#[derive(Debug, Clone)]
pub struct GraphMatrices {
    /// `C[i, e] = +1` at the sending end of line `e` and `-1` at the receiving end.
    pub incidence: DMatrix<f64>,
    pub susceptance: DVector<f64>,
    /// `C B C^T`.
    pub laplacian: DMatrix<f64>,
    /// Rows are areas; `+1` where a line leaves the area, `-1` where it enters.
    pub area_boundary: DMatrix<f64>,
}

pub fn incidence(n: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(n, edges.len());
    for (e, &(i, j)) in edges.iter().enumerate() {
        c[(i, e)] = 1.0;
        c[(j, e)] = -1.0;
    }
    c
}

pub fn weighted_laplacian(c: &DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let cb = c * DMatrix::from_diagonal(b);
    &cb * c.transpose()
}

pub fn graph_matrices(case: &NetworkCase) -> GraphMatrices {
    let n = case.buses.len();
    let edges: Vec<_> = case.lines.iter().map(|l| (l.from, l.to)).collect();
    let c = incidence(n, &edges);
    let b = DVector::from_iterator(edges.len(), case.lines.iter().map(|l| l.susceptance));
    let laplacian = weighted_laplacian(&c, &b);
    let mut cbar = DMatrix::zeros(case.areas.len(), edges.len());
    let mut area_of = vec![usize::MAX; n];
    for (k, area) in case.areas.iter().enumerate() {
        for &i in &area.buses {
            area_of[i] = k;
        }
    }
    for (e, &(i, j)) in edges.iter().enumerate() {
        if area_of[i] != area_of[j] {
            if area_of[i] != usize::MAX {
                cbar[(area_of[i], e)] = 1.0;
            }
            if area_of[j] != usize::MAX {
                cbar[(area_of[j], e)] = -1.0;
            }
        }
    }
    GraphMatrices {
        incidence: c,
        susceptance: b,
        laplacian,
        area_boundary: cbar,
    }
}

/// Pseudo-inverse of a connected graph Laplacian via the deflated inverse
/// `(L + 11^T/n)^{-1} - 11^T/n`.
pub fn laplacian_pinv(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    let shift = DMatrix::from_element(n, n, 1.0 / n as f64);
    let inv = (l + &shift)
        .cholesky()
        .ok_or_else(|| Error::Singular("Laplacian of a disconnected graph".into()))?
        .inverse();
    Ok(inv - shift)
}

/// Zero-mean solution of `L x = rhs` for a balanced right-hand side.
pub fn laplacian_solve(l: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = l.nrows();
    let shifted = l.add_scalar(1.0 / n as f64);
    let chol = shifted
        .cholesky()
        .ok_or_else(|| Error::Singular("Laplacian of a disconnected graph".into()))?;
    let mut x = chol.solve(rhs);
    let mean = x.mean();
    x.add_scalar_mut(-mean);
    Ok(x)
}

/// Pre-fault DC operating point.
#[derive(Debug, Clone)]
pub struct DcFlow {
    pub angles: DVector<f64>,
    pub flows: DVector<f64>,
}

pub fn dc_power_flow(case: &NetworkCase) -> Result<DcFlow> {
    let gm = graph_matrices(case);
    let p = DVector::from_iterator(case.buses.len(), case.buses.iter().map(|b| b.injection));
    let total = p.sum();
    let scale = p.amax().max(1.0);
    if total.abs() > 1e-9 * scale * case.buses.len() as f64 {
        return Err(Error::InvalidCase(format!(
            "injections are unbalanced (sum {total:e}); balance them first"
        )));
    }
    let angles = laplacian_solve(&gm.laplacian, &p)?;
    let flows = DMatrix::from_diagonal(&gm.susceptance) * gm.incidence.transpose() * &angles;
    Ok(DcFlow { angles, flows })
}
