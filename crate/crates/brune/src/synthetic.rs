//! Deterministic synthetic fixtures: random Brune circuits and sampled data
//! for round-trip tests, benchmarks and the bundled demo dataset.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::model::{FrequencySamples, StateSpaceModel};
use crate::multiport::{Belevitch, MultiportBruneCircuit, MultiportStage, MultiportStageKind};
use crate::oneport::{ExtractionFrequency, OnePortBruneCircuit, OnePortStage, OnePortStageKind};

/// Random stable state-space model (block-diagonal `A` with damped
/// resonant pairs); not necessarily passive.
pub fn random_stable_model(
    rng: &mut ChaCha8Rng,
    n_states: usize,
    n_ports: usize,
) -> StateSpaceModel {
    let mut a = DMatrix::zeros(n_states, n_states);
    let mut i = 0;
    while i < n_states {
        if i + 1 < n_states && rng.gen_bool(0.5) {
            let sig = -rng.gen_range(0.05..2.0);
            let om = rng.gen_range(0.2..5.0);
            a[(i, i)] = sig;
            a[(i, i + 1)] = om;
            a[(i + 1, i)] = -om;
            a[(i + 1, i + 1)] = sig;
            i += 2;
        } else {
            a[(i, i)] = -rng.gen_range(0.05..3.0);
            i += 1;
        }
    }
    let b = DMatrix::from_fn(n_states, n_ports, |_, _| rng.gen_range(-1.0..1.0));
    let c = DMatrix::from_fn(n_ports, n_states, |_, _| rng.gen_range(-1.0..1.0));
    let d = DMatrix::from_fn(n_ports, n_ports, |_, _| rng.gen_range(-1.0..1.0));
    StateSpaceModel::new(a, b, c, d, None).unwrap()
}

/// Random orthogonal matrix from the QR factorization of a Gaussian-ish draw.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0f64..1.0));
        let qr = m.qr();
        let q = qr.q();
        let r = qr.r();
        if (0..n).all(|i| r[(i, i)].abs() > 1e-6) {
            // fix column signs so the factorization is unique
            let mut q = q;
            for j in 0..n {
                if r[(j, j)] < 0.0 {
                    for i in 0..n {
                        q[(i, j)] = -q[(i, j)];
                    }
                }
            }
            return q;
        }
    }
}

/// Random one-port Brune circuit with strictly positive stage resistances
/// (this makes the extraction order unique in synthesis round trips).
pub fn random_oneport_circuit(rng: &mut ChaCha8Rng, max_stages: usize) -> OnePortBruneCircuit {
    let n_stages = rng.gen_range(1..=max_stages);
    let mut stages = Vec::new();
    for _ in 0..n_stages {
        let resistance = 10f64.powf(rng.gen_range(-2.0..1.0));
        let kind = if rng.gen_bool(0.25) {
            OnePortStageKind::CapacitiveDegenerate {
                capacitance: 10f64.powf(rng.gen_range(-1.5..1.5)),
            }
        } else {
            OnePortStageKind::Regular {
                turns_ratio: rng.gen_range(0.3..3.0),
                inductance: 10f64.powf(rng.gen_range(-1.5..1.5)),
                capacitance: 10f64.powf(rng.gen_range(-1.5..1.5)),
            }
        };
        stages.push(OnePortStage {
            resistance,
            kind,
            extraction_frequency: ExtractionFrequency::Infinite,
        });
    }
    OnePortBruneCircuit {
        stages,
        terminal_resistance: 10f64.powf(rng.gen_range(-0.5..1.0)),
    }
}

/// Random reciprocal multiport Brune circuit. With `allow_degenerate` the
/// stage mix includes capacitive degenerate stages.
pub fn random_multiport_circuit(
    rng: &mut ChaCha8Rng,
    n_ports: usize,
    max_stages: usize,
    allow_degenerate: bool,
) -> MultiportBruneCircuit {
    let n_stages = rng.gen_range(1..=max_stages);
    let mut stages = Vec::new();
    for _ in 0..n_stages {
        let transformer = Belevitch::from_matrix(&random_orthogonal(rng, n_ports));
        let resistance = 10f64.powf(rng.gen_range(-2.0..0.5));
        let kind = if allow_degenerate && rng.gen_bool(0.25) {
            MultiportStageKind::CapacitiveDegenerate {
                capacitance: 10f64.powf(rng.gen_range(-1.0..1.0)),
            }
        } else {
            MultiportStageKind::Regular {
                turns_ratio: rng.gen_range(0.4..2.5),
                inductance: 10f64.powf(rng.gen_range(-1.0..1.0)),
                capacitance: 10f64.powf(rng.gen_range(-1.0..1.0)),
                coupling: (0..n_ports - 1).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            }
        };
        stages.push(MultiportStage {
            transformer,
            resistance,
            kind,
            gyration: None,
            extraction_frequency: ExtractionFrequency::Infinite,
        });
    }
    MultiportBruneCircuit {
        n_ports,
        stages,
        terminal_transformer: Belevitch::from_matrix(&random_orthogonal(rng, n_ports)),
        terminal_resistances: (0..n_ports)
            .map(|_| 10f64.powf(rng.gen_range(0.0..1.0)))
            .collect(),
    }
}

/// Sample a model on a log grid of angular frequencies.
pub fn sample_model(
    model: &StateSpaceModel,
    omega_min: f64,
    omega_max: f64,
    n: usize,
) -> FrequencySamples {
    let (a, b) = (omega_min.ln(), omega_max.ln());
    let omegas: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    let values = omegas
        .iter()
        .map(|&w| model.eval(Complex64::new(0.0, w)).expect("sample point"))
        .collect();
    FrequencySamples { omegas, values }
}
