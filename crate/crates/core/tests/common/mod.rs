#![allow(dead_code)]

use std::path::PathBuf;

use ddfo::model::{OperatingPoint, PlantModel, SteadyStateOptions};
use ddfo::sim::Scenario;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn load(name: &str) -> PlantModel {
    PlantModel::load(data(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn scenario(name: &str) -> Scenario {
    Scenario::load(data(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Starting guess near the high-conversion branch quoted for the reactor.
pub const GUESS: [f64; 4] = [1.211, 0.211, 386.20, 300.02];

pub fn operating_point(m: &PlantModel) -> OperatingPoint {
    m.find_steady_state(&GUESS, &SteadyStateOptions::default()).unwrap()
}

/// Reactor constants, entered by hand from the parameter table.
pub mod cstr {
    pub const F: f64 = 0.02;
    pub const FJ: f64 = 1.0;
    pub const V: f64 = 1.0;
    pub const VJ: f64 = 3e-2;
    pub const DH: f64 = 160e3;
    pub const RHO: f64 = 1200.0;
    pub const CP: f64 = 3.4;
    pub const RHOJ: f64 = 1200.0;
    pub const CPJ: f64 = 3.4;
    pub const UA: f64 = 0.942;

    /// Decoupled observer for cA + cB at alpha_1 = F/V.
    pub fn decoupled_betas() -> Vec<Vec<f64>> {
        vec![
            vec![-2.0 * RHO * CP / DH, -2.0 * RHOJ * CPJ * VJ / (DH * V)],
            vec![-2.0 * RHO * CP * F / (DH * V), -2.0 * RHOJ * CPJ * FJ / (DH * V)],
        ]
    }

    /// Ramp observer for the analyser fault.
    pub fn fault1_betas(alpha: f64) -> Vec<Vec<f64>> {
        vec![
            vec![1.0, RHO * CP / DH, 0.0],
            vec![alpha, (F / V + UA / (RHO * CP * V)) * RHO * CP / DH, -UA / (DH * V)],
        ]
    }

    /// Step observer for the coolant fault, as printed (sign convention
    /// opposite to the model's `-f2` jacket term).
    pub fn fault2_betas_printed(alpha: f64) -> Vec<Vec<f64>> {
        let g = UA / (RHOJ * CPJ * FJ);
        vec![vec![0.0, 0.0, alpha * VJ / FJ], vec![0.0, -alpha * g, alpha * (1.0 + g)]]
    }
}
