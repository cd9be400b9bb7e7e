//! Regenerates the bundled synthetic 3-port dataset (`data/sample_3port.csv`)
//! from a fixed Brune circuit, sampled over 1-20 GHz.

use brune::io::{export_netlist, write_zcsv};
use brune::multiport::{
    recompose_multiport, Belevitch, MultiportBruneCircuit, MultiportStage, MultiportStageKind,
};
use brune::oneport::ExtractionFrequency;
use brune::synthetic::{random_orthogonal, sample_model};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240817);
    let n = 3;
    let stage = |t, r, kind| MultiportStage {
        transformer: Belevitch::from_matrix(&t),
        resistance: r,
        kind,
        gyration: None,
        extraction_frequency: ExtractionFrequency::Infinite,
    };
    let circuit = MultiportBruneCircuit {
        n_ports: n,
        stages: vec![
            stage(
                random_orthogonal(&mut rng, n),
                0.09,
                MultiportStageKind::CapacitiveDegenerate {
                    capacitance: 1.2e-13,
                },
            ),
            stage(
                random_orthogonal(&mut rng, n),
                0.05,
                MultiportStageKind::Regular {
                    turns_ratio: 1.055,
                    inductance: 7.2e-7,
                    capacitance: 2.5e-16,
                    coupling: vec![-0.0008, -0.026],
                },
            ),
            stage(
                random_orthogonal(&mut rng, n),
                0.10,
                MultiportStageKind::Regular {
                    turns_ratio: 10.1,
                    inductance: 2.8e-9,
                    capacitance: 7.7e-13,
                    coupling: vec![-0.0002, 0.205],
                },
            ),
            stage(
                random_orthogonal(&mut rng, n),
                0.21,
                MultiportStageKind::Regular {
                    turns_ratio: 1.009,
                    inductance: 3.0e-6,
                    capacitance: 1.8e-16,
                    coupling: vec![0.0037, 0.0018],
                },
            ),
        ],
        terminal_transformer: Belevitch::from_matrix(&random_orthogonal(&mut rng, n)),
        terminal_resistances: vec![1.1e5, 1.3e5, 7.8e4],
    };
    circuit.validate().expect("fixture circuit");
    let model = recompose_multiport(&circuit).expect("recompose");
    // 1 to 20 GHz
    let samples = sample_model(
        &model,
        2.0 * std::f64::consts::PI * 1.0e9,
        2.0 * std::f64::consts::PI * 2.0e10,
        400,
    );
    std::fs::create_dir_all("data").unwrap();
    std::fs::write("data/sample_3port.csv", write_zcsv(&samples)).unwrap();
    std::fs::write("data/sample_3port_reference.cir", export_netlist(&circuit)).unwrap();
    println!(
        "wrote data/sample_3port.csv ({} points, {} states)",
        samples.omegas.len(),
        model.n_states()
    );
}
