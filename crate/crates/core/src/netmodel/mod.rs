//! Network instances, graph operators, pre-fault flows and Kron reduction.

mod case;
mod grid;
mod kron;
mod matrices;

pub use case::{Area, Bus, BusKind, Line, NetworkCase, DEFAULT_DAMPING};
pub use grid::Grid;
pub use kron::{kron_reduce, ReducedLine, ReducedNetwork};
pub use matrices::{
    dc_power_flow, graph_matrices, incidence, laplacian_pinv, laplacian_solve,
    weighted_laplacian, DcFlow, GraphMatrices,
};
