//! The two worked examples: a five-state continuous-time plant with three
//! subsystems and a four-state discrete-time plant with three subsystems, each
//! with the published gain, observer initial states and one admissible
//! realization used for simulation.

use crate::matcore::Mat;
use crate::synth::{Domain, IntervalSystem};

#[derive(Debug, Clone)]
pub struct Example {
    pub system: IntervalSystem,
    pub truth_a: Vec<Mat>,
    pub truth_x0: Vec<f64>,
    pub gain: Mat,
    pub omega0_lower: Vec<f64>,
    pub omega0_upper: Vec<f64>,
    pub switching_seed: u64,
    /// Continuous: time units. Discrete: steps.
    pub min_dwell: f64,
    /// Continuous: time units. Discrete: steps.
    pub horizon: f64,
    /// Integration step; unused for discrete plants.
    pub step: f64,
}

fn mat(rows: &[&[f64]]) -> Mat {
    Mat::from_rows(rows).expect("fixture matrix")
}

pub fn continuous_example() -> Example {
    let a_lower = vec![
        mat(&[
            &[-23.0, 4.0, 1.0, 4.0, 1.0],
            &[6.0, -28.0, 8.0, 6.0, 8.0],
            &[4.0, 4.0, -25.0, 4.0, 6.0],
            &[7.0, 5.0, 6.0, -26.0, 3.0],
            &[5.0, 4.0, 2.0, 6.0, -29.0],
        ]),
        mat(&[
            &[-28.0, 6.0, 3.0, 1.0, 4.0],
            &[1.0, -24.0, 6.0, 3.0, 1.0],
            &[6.0, 5.0, -29.0, 8.0, 3.0],
            &[4.0, 8.0, 3.0, -23.0, 2.0],
            &[3.0, 4.0, 2.0, 2.0, -22.0],
        ]),
        mat(&[
            &[-28.0, 10.0, 1.0, 4.0, 4.0],
            &[1.0, -27.0, 8.0, 6.0, 3.0],
            &[2.0, 4.0, -29.0, 8.0, 3.0],
            &[4.0, 2.0, 5.0, -26.0, 9.0],
            &[1.0, 3.0, 8.0, 5.0, -28.0],
        ]),
    ];
    let a_upper = vec![
        mat(&[
            &[-22.0, 5.0, 2.0, 5.0, 3.0],
            &[8.0, -26.0, 9.0, 7.0, 9.0],
            &[7.0, 6.0, -24.0, 6.0, 7.0],
            &[8.0, 6.0, 8.0, -24.0, 4.0],
            &[8.0, 5.0, 5.0, 7.0, -27.0],
        ]),
        mat(&[
            &[-26.0, 9.0, 4.0, 2.0, 5.0],
            &[3.0, -22.0, 7.0, 4.0, 3.0],
            &[8.0, 7.0, -27.0, 10.0, 6.0],
            &[6.0, 10.0, 7.0, -19.0, 4.0],
            &[5.0, 6.0, 4.0, 3.0, -18.0],
        ]),
        mat(&[
            &[-26.0, 13.0, 3.0, 6.0, 6.0],
            &[3.0, -25.0, 9.0, 7.0, 4.0],
            &[4.0, 7.0, -26.0, 10.0, 4.0],
            &[6.0, 4.0, 7.0, -24.0, 12.0],
            &[2.0, 5.0, 9.0, 6.0, -26.0],
        ]),
    ];
    let truth_a = vec![
        mat(&[
            &[-22.13, 4.64, 1.76, 4.21, 1.08],
            &[7.18, -26.20, 8.40, 6.08, 8.90],
            &[6.31, 4.66, -24.04, 5.18, 6.18],
            &[7.75, 5.49, 7.22, -25.48, 3.72],
            &[5.39, 4.23, 3.05, 6.58, -28.76],
        ]),
        mat(&[
            &[-27.04, 6.72, 3.97, 1.61, 4.36],
            &[2.48, -22.74, 6.00, 3.12, 1.18],
            &[7.06, 6.50, -28.84, 9.16, 3.54],
            &[5.28, 9.70, 5.28, -19.52, 3.22],
            &[4.92, 5.34, 2.68, 2.13, -18.28],
        ]),
        mat(&[
            &[-26.52, 10.09, 2.06, 5.98, 4.76],
            &[1.02, -25.66, 8.05, 6.85, 3.03],
            &[2.90, 6.04, -28.31, 9.86, 3.77],
            &[5.10, 2.76, 5.86, -24.26, 10.05],
            &[1.36, 3.86, 8.14, 5.39, -27.60],
        ]),
    ];
    let system = IntervalSystem::new(
        Domain::Continuous,
        2,
        a_lower,
        a_upper,
        vec![1.0, 3.0, 6.0, 2.0, 3.0],
        vec![6.0, 5.0, 9.0, 8.0, 5.0],
    )
    .expect("continuous fixture satisfies its assumptions");
    Example {
        system,
        truth_a,
        truth_x0: vec![4.45, 3.42, 6.33, 7.64, 4.72],
        gain: mat(&[&[0.1, 0.4], &[0.15, 0.2], &[0.1, 0.05]]),
        omega0_lower: vec![1.0, 0.0, 1.0],
        omega0_upper: vec![8.0, 8.0, 9.0],
        switching_seed: 2024,
        min_dwell: 0.2,
        horizon: 2.0,
        step: 1e-3,
    }
}

/// The published listing repeats one label for the last four bound matrices;
/// they are taken in order of appearance as lower/upper of subsystems 2 and 3.
pub fn discrete_example() -> Example {
    let a_lower = vec![
        mat(&[
            &[0.03, 0.07, 0.01, 0.14],
            &[0.12, 0.13, 0.02, 0.08],
            &[0.07, 0.03, 0.01, 0.04],
            &[0.08, 0.02, 0.21, 0.11],
        ]),
        mat(&[
            &[0.11, 0.02, 0.22, 0.01],
            &[0.03, 0.03, 0.01, 0.09],
            &[0.04, 0.11, 0.03, 0.12],
            &[0.03, 0.01, 0.03, 0.03],
        ]),
        mat(&[
            &[0.09, 0.09, 0.02, 0.31],
            &[0.03, 0.08, 0.09, 0.08],
            &[0.06, 0.12, 0.18, 0.04],
            &[0.13, 0.04, 0.07, 0.09],
        ]),
    ];
    let a_upper = vec![
        mat(&[
            &[0.20, 0.15, 0.30, 0.40],
            &[0.30, 0.40, 0.20, 0.14],
            &[0.30, 0.20, 0.10, 0.16],
            &[0.20, 0.25, 0.40, 0.30],
        ]),
        mat(&[
            &[0.40, 0.30, 0.60, 0.30],
            &[0.20, 0.20, 0.10, 0.22],
            &[0.25, 0.40, 0.20, 0.36],
            &[0.15, 0.10, 0.10, 0.12],
        ]),
        mat(&[
            &[0.32, 0.18, 0.30, 0.52],
            &[0.22, 0.24, 0.17, 0.22],
            &[0.15, 0.31, 0.32, 0.13],
            &[0.33, 0.27, 0.21, 0.13],
        ]),
    ];
    let truth_a = vec![
        mat(&[
            &[0.05, 0.13, 0.18, 0.34],
            &[0.27, 0.13, 0.12, 0.10],
            &[0.15, 0.04, 0.08, 0.12],
            &[0.11, 0.17, 0.34, 0.22],
        ]),
        mat(&[
            &[0.23, 0.19, 0.43, 0.22],
            &[0.04, 0.16, 0.05, 0.10],
            &[0.20, 0.14, 0.18, 0.14],
            &[0.07, 0.02, 0.09, 0.04],
        ]),
        mat(&[
            &[0.27, 0.15, 0.11, 0.47],
            &[0.21, 0.10, 0.14, 0.11],
            &[0.12, 0.14, 0.29, 0.11],
            &[0.16, 0.19, 0.15, 0.13],
        ]),
    ];
    let system = IntervalSystem::new(
        Domain::Discrete,
        2,
        a_lower,
        a_upper,
        vec![1.0, 3.0, 3.0, 2.0],
        vec![8.0, 6.0, 11.0, 7.0],
    )
    .expect("discrete fixture satisfies its assumptions");
    Example {
        system,
        truth_a,
        truth_x0: vec![7.09, 3.27, 5.96, 3.85],
        gain: mat(&[&[0.002, 0.042], &[0.016, 0.024]]),
        omega0_lower: vec![2.0, 1.0],
        omega0_upper: vec![12.0, 8.0],
        switching_seed: 2024,
        min_dwell: 1.0,
        horizon: 60.0,
        step: 1.0,
    }
}
