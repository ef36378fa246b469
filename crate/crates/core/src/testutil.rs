//! Small fixtures shared by unit tests.

use ndarray::array;

use crate::dataset::{extract_samples, TrainingSample};
use crate::deepc::DeePCConfig;
use crate::hankel::{partition, HankelSet};
use crate::plants::{generate_open_loop, BoxBounds, LtiPlant};

pub fn lti() -> LtiPlant {
    LtiPlant::new(
        array![[0.9, 0.2], [0.0, 0.7]],
        array![[0.0], [1.0]],
        array![[1.0, 0.0]],
        array![[0.0]],
    )
    .unwrap()
}

/// `T = 40, T_ini = 3, N_p = 4` Hankel set of the fixture plant, its config
/// (box `[-1, 1]` on both signals) and samples from a second record.
pub fn small_problem() -> (HankelSet, DeePCConfig, Vec<TrainingSample>) {
    let p = lti();
    let b = BoxBounds::uniform(1, -1.0, 1.0);
    let (u, y) = generate_open_loop(&p, &[0.3, -0.2], 40, 1, &b, 3).unwrap();
    let h = partition(&u, &y, 3, 4).unwrap();
    let mut cfg = DeePCConfig::grn_defaults((vec![-1.0], vec![1.0]), (vec![-1.0], vec![1.0]));
    cfg.t = 40;
    cfg.t_ini = 3;
    cfg.n_p = 4;
    let (u2, y2) = generate_open_loop(&p, &[0.0, 0.5], 30, 2, &b, 9).unwrap();
    let samples = extract_samples(&u2, &y2, 3, 4).unwrap();
    (h, cfg, samples)
}
