//! Small reference problems used by tests, examples and the CLI.

use crate::problem::{MpQpProblem, ParameterPoint, ProblemData};

/// Two-supplier, two-market transport problem with four shipment variables.
///
/// Rows of `A_C x >= b_C + θ_C`:
///
/// 1. `x1 + x2 <= 350` (supply of plant 1)
/// 2. `x3 + x4 <= 600` (supply of plant 2)
/// 3. `x1 + x3 >= θ1` (demand of market 1)
/// 4. `x2 + x4 >= θ2` (demand of market 2)
/// 5. `x1 >= 0`
/// 6. `x2 >= 0`
///
/// The parameters are `θ_C[2] = θ1` and `θ_C[3] = θ2`; the problem is feasible iff
/// `θ1 + θ2 <= 950`.
pub fn transport_2d() -> MpQpProblem {
    MpQpProblem::new(ProblemData {
        q: vec![
            vec![156.0, 0.0, 0.0, 0.0],
            vec![0.0, 162.0, 0.0, 0.0],
            vec![0.0, 0.0, 162.0, 0.0],
            vec![0.0, 0.0, 0.0, 126.0],
        ],
        c: vec![25.0; 4],
        c0: 0.0,
        a_e: vec![],
        b_e: vec![],
        a_c: vec![
            vec![-1.0, -1.0, 0.0, 0.0],
            vec![0.0, 0.0, -1.0, -1.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
        ],
        b_c: vec![-350.0, -600.0, 0.0, 0.0, 0.0, 0.0],
        groups: vec![],
    })
    .expect("transport problem is valid")
}

/// Stacked coordinates of the two demand parameters of [`transport_2d`].
pub const TRANSPORT_AXES: [usize; 2] = [6, 7];

/// Parameter point with market demands `(t1, t2)` for [`transport_2d`].
pub fn transport_theta(problem: &MpQpProblem, t1: f64, t2: f64) -> ParameterPoint {
    ParameterPoint::from_parts(problem, &[0.0; 4], &[], &[0.0, 0.0, t1, t2, 0.0, 0.0])
        .expect("transport dimensions")
}

/// `min x² s.t. x = θ_e, x <= 10`
pub fn scalar_tracking() -> MpQpProblem {
    MpQpProblem::new(ProblemData {
        q: vec![vec![1.0]],
        c: vec![0.0],
        a_e: vec![vec![1.0]],
        b_e: vec![0.0],
        a_c: vec![vec![-1.0]],
        b_c: vec![-10.0],
        ..Default::default()
    })
    .expect("scalar problem is valid")
}
