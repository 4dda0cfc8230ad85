//! Random test systems shared by the integration tests.
#![allow(dead_code)]

use gridsense::dynamics::{electrical_power, Linearization, MachineModel};
use gridsense::estimator::CovariancePair;
use gridsense::linalg::{spectral_abscissa, C64};
use gridsense::netmodel::ReducedNetwork;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random machine model whose equilibrium is `delta0` by construction:
/// positive transfer susceptances, small conductances, Pm = Pe(δ0).
pub fn random_model(n: usize, seed: u64) -> MachineModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let b = rng.random_range(0.5..3.0);
            let g = rng.random_range(0.0..0.1);
            y[(i, j)] = C64::new(g, b);
            y[(j, i)] = y[(i, j)];
        }
    }
    for i in 0..n {
        let off: C64 = (0..n).filter(|&j| j != i).map(|j| y[(i, j)]).sum();
        y[(i, i)] = -off + C64::new(rng.random_range(0.05..0.3), -rng.random_range(0.1..0.5));
    }
    let e: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..1.2)).collect();
    let m: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.5)).collect();
    let d: Vec<f64> = m.iter().map(|mi| mi * rng.random_range(0.5..5.0)).collect();
    let delta0: Vec<f64> = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
    let mut model = MachineModel::new(ReducedNetwork { y, e }, m, d, vec![0.0; n]).unwrap();
    model.pm = electrical_power(&model, &delta0).iter().copied().collect();
    model.delta0 = delta0;
    model
}

/// Exact covariances of a random stable COI system, or None if unstable.
pub fn exact(model: &MachineModel, sigma: &[f64]) -> Option<(Linearization, CovariancePair)> {
    let frame = model.default_coi();
    let lin = Linearization::new(model, frame, sigma).ok()?;
    if !(spectral_abscissa(&lin.state.a)? < -1e-6) {
        return None;
    }
    let c = lin.covariance().ok()?;
    let cov = CovariancePair::from_state_covariance(&c, frame).ok()?;
    Some((lin, cov))
}

