//! Small reference networks used throughout the tests, the book and the CLI
//! examples.
//!
//! Some weights are not fixed by the structure alone; where that is the case
//! they were chosen so that the published vibration amplitudes come out of the
//! design formulas unchanged.

use nalgebra::DMatrix;

use crate::netcore::{NetworkSystem, NodePair};
use crate::perturb::PerturbationMatrix;

fn from_entries(n: usize, diag: &[f64], entries: &[(usize, usize, f64)]) -> NetworkSystem {
    let mut a = DMatrix::zeros(n, n);
    for (k, d) in diag.iter().enumerate() {
        a[(k, k)] = *d;
    }
    // (i, j, a_ij), 1-based
    for &(i, j, w) in entries {
        a[(i - 1, j - 1)] = w;
    }
    NetworkSystem::new(a).expect("fixture is valid")
}

/// Unstable four-node network with a 2-cycle `1↔4` and the path `1→2→3→4`.
///
/// Raising the weight of `(1,4)` from −1 to 7 stabilizes it.
pub fn four_node_unstable() -> NetworkSystem {
    NetworkSystem::from_rows(&[
        &[0.1, 0.0, 0.0, -1.0],
        &[1.0, -1.0, 0.0, 0.0],
        &[0.0, 1.0, -0.3, 0.0],
        &[-1.0, 0.0, 1.0, -0.2],
    ])
    .expect("fixture is valid")
}

/// A printed `(A, Ā)` pair illustrating removal, increase, creation and decrease.
pub fn functioning_pair() -> (DMatrix<f64>, DMatrix<f64>) {
    let a = DMatrix::from_row_slice(
        5,
        5,
        &[
            -1.0, 0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, -0.5, //
            2.0, 2.0, 0.0, -0.2, 0.0, //
            0.0, 0.0, 0.0, 1.0, 3.0, //
            2.0, 0.0, -1.0, 0.0, -2.0,
        ],
    );
    let mut a_bar = a.clone();
    a_bar[(2, 0)] = 0.0;
    a_bar[(2, 3)] = 1.0;
    a_bar[(2, 4)] = 2.0;
    a_bar[(4, 0)] = 1.2;
    (a, a_bar)
}

/// Five nodes whose unidirectional and bidirectional modifiability graphs are
/// both non-trivial: a 2-cycle `2↔3` with opposite signs, and edges
/// `1→3`, `2→4`, `3→5` hanging off it.
pub fn modifiability_demo() -> NetworkSystem {
    from_entries(5, &[], &[(3, 1, 1.0), (3, 2, 1.0), (2, 3, -1.0), (4, 2, 1.0), (5, 3, 1.0)])
}

/// Target edge `(1,2)` reachable through two disjoint length-3 paths,
/// `1→4→3→2` and `1→5→6→2`.
pub fn two_driver_sets() -> NetworkSystem {
    from_entries(
        6,
        &[],
        &[(2, 1, 1.0), (4, 1, 1.0), (3, 4, 1.0), (2, 3, 1.0), (5, 1, 1.0), (6, 5, 1.0), (2, 6, 1.0)],
    )
}

/// Twelve nodes whose stabilizing perturbation splits into one joint
/// cluster, one cluster of independent 2-cycle edges and one fan-out cluster.
/// The 2-cycle `7↔8` is what makes it unstable.
pub fn twelve_node_clusters() -> NetworkSystem {
    from_entries(
        12,
        &[-1.0; 12],
        &[
            // joint path 1→2→6→5 around target (1,5)
            (2, 1, 1.0),
            (6, 2, 2.0),
            (5, 6, 1.0),
            (5, 1, 2.0),
            // 2-cycles 3↔4, 4↔8, 7↔8
            (4, 3, 1.0),
            (3, 4, -1.0),
            (4, 8, 1.0),
            (8, 4, -2.0),
            (7, 8, 2.0),
            (8, 7, 2.0),
            // fan-out from 11, anchored on the 2-cycle 10↔11
            (10, 11, 1.0),
            (11, 10, -2.0),
            (12, 11, 1.0),
            (9, 11, 1.0),
        ],
    )
}

/// Stabilizing perturbation for [`twelve_node_clusters`].
pub fn twelve_node_delta() -> PerturbationMatrix {
    let p = |s, t, d| (NodePair::new(s, t), d);
    PerturbationMatrix::from_entries(
        12,
        &[
            p(1, 5, -3.0),
            p(3, 4, 0.8),
            p(8, 4, 1.0),
            p(8, 7, -3.0),
            p(11, 10, 1.0),
            p(11, 12, 2.0),
            p(11, 9, 0.5),
        ],
    )
    .expect("fixture is valid")
}

/// Five stable subsystems coupled into an unstable whole through the cycles
/// `1↔2`, `3↔4` and `1→3→5→1`.
pub fn structural_five_node() -> NetworkSystem {
    from_entries(
        5,
        &[-0.5, -0.5, -1.0, -1.0, -1.0],
        &[(1, 2, 1.0), (2, 1, 1.0), (3, 4, 1.0), (4, 3, 1.0), (5, 3, 1.0), (1, 5, 2.0), (3, 1, 2.0)],
    )
}
