//! Acceptance suite: one test per acceptance criterion, each printing a
//! single pass/fail line with the measured figure of merit.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use brune::dissipation::{all_baths, series_bath, shunt_bath, t1_rate};
use brune::fitting::{enforce_passivity, fit_error, vector_fit, FitOptions};
use brune::io;
use brune::loops::{
    effective_loops_via_voltage_law, multiport_effective_loops, oneport_effective_loops,
    PortTermination,
};
use brune::model::{FrequencySamples, PoleResidueModel, StateSpaceModel};
use brune::multiport::{
    recompose_multiport, synthesize_multiport, Belevitch, MultiportBruneCircuit, MultiportStage,
    MultiportStageKind,
};
use brune::oneport::{
    recompose_oneport, synthesize_oneport, ExtractionFrequency, OnePortStageKind, SynthesisOptions,
};
use brune::quantize::{
    build_capacitance_oneport, build_stiffness_oneport, oneport_band_transform, quantize_multiport,
};
use brune::synthetic;

fn grid_error(m1: &StateSpaceModel, m2: &StateSpaceModel, n: usize) -> f64 {
    let lo: f64 = 1e-3;
    let hi: f64 = 1e7;
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let om = lo * (hi / lo).powf(k as f64 / (n - 1) as f64);
        let z1 = m1.eval(Complex64::new(0.0, om)).unwrap();
        let z2 = m2.eval(Complex64::new(0.0, om)).unwrap();
        worst = worst.max((&z1 - &z2).norm() / z1.norm().max(1e-300));
    }
    worst
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn criterion_01_oneport_round_trip() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let opts = SynthesisOptions::default();
    let mut worst_param: f64 = 0.0;
    let mut worst_grid: f64 = 0.0;
    for trial in 0..100 {
        let circuit = synthetic::random_oneport_circuit(&mut rng, 6);
        let model = recompose_oneport(&circuit);
        let got = synthesize_oneport(&model, &opts)
            .unwrap_or_else(|e| panic!("trial {trial}: synthesis failed: {e}"));
        assert_eq!(got.stages.len(), circuit.stages.len(), "trial {trial}");
        for (a, b) in circuit.stages.iter().zip(&got.stages) {
            worst_param = worst_param.max(rel(b.resistance, a.resistance));
            match (&a.kind, &b.kind) {
                (
                    OnePortStageKind::Regular {
                        turns_ratio: n1,
                        inductance: l1,
                        capacitance: c1,
                    },
                    OnePortStageKind::Regular {
                        turns_ratio: n2,
                        inductance: l2,
                        capacitance: c2,
                    },
                ) => {
                    worst_param = worst_param
                        .max(rel(*n2, *n1))
                        .max(rel(*l2, *l1))
                        .max(rel(*c2, *c1));
                }
                (
                    OnePortStageKind::CapacitiveDegenerate { capacitance: c1 },
                    OnePortStageKind::CapacitiveDegenerate { capacitance: c2 },
                ) => {
                    worst_param = worst_param.max(rel(*c2, *c1));
                }
                (a, b) => panic!("trial {trial}: stage kind mismatch {a:?} vs {b:?}"),
            }
        }
        worst_param = worst_param.max(rel(got.terminal_resistance, circuit.terminal_resistance));
        worst_grid = worst_grid.max(grid_error(&model, &recompose_oneport(&got), 120));
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "[criterion 1] one-port round trip: worst parameter error {worst_param:.3e} (< 1e-6), \
         worst grid error {worst_grid:.3e} (< 1e-6), {elapsed:.2} s (< 10 s) -> {}",
        if worst_param < 1e-6 && worst_grid < 1e-6 && elapsed < 10.0 {
            "PASS"
        } else {
            "FAIL"
        }
    );
    assert!(worst_param < 1e-6);
    assert!(worst_grid < 1e-6);
    assert!(elapsed < 10.0, "took {elapsed:.2} s");
}

#[test]
fn criterion_02_multiport_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let opts = SynthesisOptions::default(); // intermediate PR checks enabled
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let n_ports = rng.gen_range(2..=3usize);
        let circuit = synthetic::random_multiport_circuit(&mut rng, n_ports, 5, true);
        let model = recompose_multiport(&circuit).unwrap();
        assert!(model.n_states() <= 12);
        let synth = synthesize_multiport(&model, &opts)
            .unwrap_or_else(|e| panic!("trial {trial}: synthesis failed: {e}"));
        // eigen-path Belevitch matrices are orthogonal to rounding
        for st in &synth.circuit.stages {
            assert!(
                st.transformer.orthogonality_defect() < 1e-10,
                "trial {trial}: transformer defect {}",
                st.transformer.orthogonality_defect()
            );
        }
        let back = recompose_multiport(&synth.circuit).unwrap();
        worst = worst.max(grid_error(&model, &back, 500));
    }
    println!(
        "[criterion 2] multiport round trip: worst 500-point grid error {worst:.3e} (< 1e-6), \
         every remainder PR-checked -> {}",
        if worst < 1e-6 { "PASS" } else { "FAIL" }
    );
    assert!(worst < 1e-6);
}

/// The displayed 2-port single-stage formulas, hand-coded.
struct TwoPortExample {
    t: [[f64; 2]; 2],
    u: [[f64; 2]; 2],
    n1: f64,
    nu12: f64,
    c1: f64,
    l1: f64,
    r1: f64,
    cj: [f64; 2],
}

impl TwoPortExample {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        Self {
            t: [
                [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)],
                [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)],
            ],
            u: [
                [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)],
                [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)],
            ],
            n1: rng.gen_range(0.4..2.0),
            nu12: rng.gen_range(-0.8..0.8),
            c1: 10f64.powf(rng.gen_range(-1.0..1.0)),
            l1: 10f64.powf(rng.gen_range(-1.0..1.0)),
            r1: rng.gen_range(0.01..1.0),
            cj: [rng.gen_range(0.01..0.2), rng.gen_range(0.01..0.2)],
        }
    }

    fn circuit(&self) -> MultiportBruneCircuit {
        MultiportBruneCircuit {
            n_ports: 2,
            stages: vec![MultiportStage {
                transformer: Belevitch {
                    t: vec![
                        vec![self.t[0][0], self.t[0][1]],
                        vec![self.t[1][0], self.t[1][1]],
                    ],
                },
                resistance: self.r1,
                kind: MultiportStageKind::Regular {
                    turns_ratio: self.n1,
                    inductance: self.l1,
                    capacitance: self.c1,
                    coupling: vec![self.nu12],
                },
                gyration: None,
                extraction_frequency: ExtractionFrequency::Infinite,
            }],
            terminal_transformer: Belevitch {
                t: vec![
                    vec![self.u[0][0], self.u[0][1]],
                    vec![self.u[1][0], self.u[1][1]],
                ],
            },
            terminal_resistances: vec![33.0, 71.0],
        }
    }
}

#[test]
fn criterion_03_worked_example_regression() {
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    let mut worst: f64 = 0.0;
    let mut track = |got: f64, want: f64| {
        let denom = want.abs().max(1.0);
        worst = worst.max((got - want).abs() / denom);
    };
    for _ in 0..20 {
        let ex = TwoPortExample::random(&mut rng);
        let circuit = ex.circuit();
        let terms = vec![
            PortTermination::JosephsonJunction {
                l_j: 0.5,
                c_j: ex.cj[0],
            },
            PortTermination::JosephsonJunction {
                l_j: 0.5,
                c_j: ex.cj[1],
            },
        ];
        let loops = multiport_effective_loops(&circuit, &terms).unwrap();
        let (t, u, n1, nu12, c1, l1, r1) = (ex.t, ex.u, ex.n1, ex.nu12, ex.c1, ex.l1, ex.r1);
        // displayed F_JC, F_LC, F_ZC
        for i in 0..2 {
            let fill = t[i][1] - t[i][0] * nu12;
            track(loops.f_jc[(i, 0)], t[i][0]);
            track(loops.f_jc[(i, 1)], t[i][0] * u[0][0] + u[1][0] * fill);
            track(loops.f_jc[(i, 2)], t[i][0] * u[0][1] + u[1][1] * fill);
        }
        track(loops.f_lc[(0, 0)], 1.0);
        track(loops.f_lc[(0, 1)], (1.0 - n1) * u[0][0] - u[1][0] * nu12);
        track(loops.f_lc[(0, 2)], (1.0 - n1) * u[0][1] - u[1][1] * nu12);
        track(loops.f_zc[(0, 0)], 1.0);
        track(loops.f_zc[(0, 1)], u[0][0] - u[1][0] * nu12);
        track(loops.f_zc[(0, 2)], u[0][1] - u[1][1] * nu12);
        // displayed C0 and M0
        let qm = quantize_multiport(&circuit, &loops, &terms, false).unwrap();
        let want_c0 = [
            [
                ex.cj[0] + t[0][0] * t[0][0] * c1,
                t[0][0] * t[1][0] * c1,
                t[0][0] * c1,
            ],
            [
                t[1][0] * t[0][0] * c1,
                ex.cj[1] + t[1][0] * t[1][0] * c1,
                t[1][0] * c1,
            ],
            [t[0][0] * c1, t[1][0] * c1, c1],
        ];
        for i in 0..3 {
            for j in 0..3 {
                track(qm.c0[(i, j)], want_c0[i][j]);
                let want_m0 = if i == 2 && j == 2 { 1.0 / l1 } else { 0.0 };
                track(qm.m0[(i, j)], want_m0);
            }
        }
        // displayed couplings and spectra
        let b1 = series_bath(&circuit, &loops, &qm, 0).unwrap();
        track(b1.coupling[0], t[0][0] * c1);
        track(b1.coupling[1], t[1][0] * c1);
        track(b1.coupling[2], c1);
        for k in 0..5 {
            let w = 0.3 * 3f64.powi(k);
            track(
                b1.spectral.eval(w),
                r1 * w.powi(3) / (1.0 + r1 * r1 * c1 * c1 * w * w),
            );
        }
        let br1 = shunt_bath(&circuit, &loops, &qm, 0).unwrap();
        let br2 = shunt_bath(&circuit, &loops, &qm, 1).unwrap();
        for i in 0..2 {
            let fill = t[i][1] - t[i][0] * nu12;
            track(br1.coupling[i], t[i][0] * u[0][0] + u[1][0] * fill);
            track(br2.coupling[i], t[i][0] * u[0][1] + u[1][1] * fill);
        }
        track(br1.coupling[2], (1.0 - n1) * u[0][0] - u[1][0] * nu12);
        track(br2.coupling[2], (1.0 - n1) * u[0][1] - u[1][1] * nu12);
        for k in 0..5 {
            let w = 0.3 * 3f64.powi(k);
            track(br1.spectral.eval(w), w / 33.0);
            track(br2.spectral.eval(w), w / 71.0);
        }
    }
    println!(
        "[criterion 3] worked-example symbolic regression: worst entry error {worst:.3e} \
         (< 1e-12) over 20 draws -> {}",
        if worst < 1e-12 { "PASS" } else { "FAIL" }
    );
    assert!(worst < 1e-12);
}

const TABLE_TRANSFORMERS: [[[f64; 3]; 3]; 13] = [
    [
        [-1.0, -0.0001, -0.001],
        [0.0008, -0.7148, -0.6993],
        [0.0007, 0.6993, -0.7148],
    ],
    [
        [0.8933, -0.0132, -0.4493],
        [-0.0132, -0.9999, 0.0032],
        [-0.4493, 0.003, -0.8934],
    ],
    [
        [0.4315, 0.006, -0.9021],
        [0.0127, 0.9998, 0.0127],
        [0.902, -0.0169, 0.4314],
    ],
    [[0.0, -1.0, 0.003], [1.0, 0.0, 0.0], [0.0, 0.003, 1.0]],
    [
        [0.0, 0.4254, -0.905],
        [0.0403, -0.9043, -0.425],
        [-0.9992, -0.0365, -0.0171],
    ],
    [
        [-0.0416, 0.0024, -0.9991],
        [0.9299, 0.3659, -0.0378],
        [0.3655, -0.9306, -0.0174],
    ],
    [
        [-0.0006, -0.9994, -0.0342],
        [1.0, -0.0006, -0.0],
        [0.0, -0.0342, 0.9994],
    ],
    [
        [0.9975, 0.0341, -0.0615],
        [-0.0308, 0.9981, 0.0538],
        [0.0632, -0.0517, 0.9967],
    ],
    [
        [-0.9976, 0.0011, -0.0685],
        [0.0032, 0.9995, -0.0299],
        [0.0685, -0.0301, -0.9972],
    ],
    [
        [-0.0011, -0.9999, -0.0109],
        [1.0, -0.0011, 0.0003],
        [-0.0003, -0.0109, 0.9999],
    ],
    [
        [-0.9775, -0.1067, -0.182],
        [-0.1088, 0.9941, 0.0015],
        [0.1808, 0.0212, -0.9833],
    ],
    [
        [-0.0081, 0.9876, -0.1566],
        [-1.0, -0.008, 0.0013],
        [0.0, 0.1566, 0.9877],
    ],
    [
        [-0.0978, 0.9951, -0.0116],
        [0.9952, 0.0978, -0.0001],
        [0.0011, -0.0116, -0.9999],
    ],
];

/// (j, degenerate, r_ohm, l_nh, c_nf, t = 1/n, nu2, nu3)
const TABLE_ROWS: [(usize, bool, f64, f64, f64, f64, f64, f64); 12] = [
    (1, true, 0.0923, 0.0, 0.00011953, 0.0, 0.0, 0.0),
    (
        2, false, 0.0471, 718.9, 2.4523e-07, 0.9478, -0.0008, -0.0259,
    ),
    (3, false, 0.0973, 2.7674, 0.00077198, 0.0986, -0.0002, 0.205),
    (4, false, 0.1063, 2.7113, 0.00078675, 0.0971, 0.0003, -0.002),
    (5, false, 0.2136, 3028.3, 1.7701e-07, 0.9915, 0.0037, 0.0018),
    (
        6, false, 20.7896, 273.44, 1.0464e-06, 0.7657, 0.0002, 0.3708,
    ),
    (7, false, 21.4619, 275.0, 1.0416e-06, 0.7508, 0.0, -0.0222),
    (
        8, false, 26.633, 24557.0, 6.2335e-09, 0.9959, 9.65e-05, -0.0002311,
    ),
    (9, false, 4.7957, 498.51, 2.0961e-07, 0.8408, 0.0002, 0.0122),
    (
        10, false, 30.56, 461.15, 2.2697e-07, 0.8409, 0.0007, -0.0623,
    ),
    (11, true, 84.5207, 0.0, 2.4178e-07, 0.0, 0.0, 0.0),
    (12, true, 88.4419, 0.0, 2.2673e-07, 0.0, 0.0, 0.0),
];

const TABLE_TERMINALS: [f64; 3] = [1.0837e7, 1.1306e7, 7.7537e7];

#[test]
fn criterion_04_printed_table_regression() {
    let start = Instant::now();
    // orthogonality of the 13 printed transformers, up to print noise
    let mut worst_defect: f64 = 0.0;
    for t in TABLE_TRANSFORMERS.iter() {
        let m = DMatrix::from_fn(3, 3, |i, j| t[i][j]);
        let defect = (m.transpose() * &m - DMatrix::identity(3, 3)).norm();
        worst_defect = worst_defect.max(defect);
    }
    // circuit from the printed rows under the t = 1/n, nH/nF conventions
    let rows: Vec<io::StageRow> = TABLE_ROWS
        .iter()
        .map(|&(j, degenerate, r, l, c, t, nu2, nu3)| io::StageRow {
            j,
            marker: if degenerate {
                "*".into()
            } else {
                String::new()
            },
            degenerate,
            r_ohm: r,
            l_nh: l,
            c_nf: c,
            t,
            nu: vec![nu2, nu3],
            gyration: None,
            omega_rad_s: None,
        })
        .collect();
    let transformers: Vec<DMatrix<f64>> = TABLE_TRANSFORMERS[..12]
        .iter()
        .map(|t| DMatrix::from_fn(3, 3, |i, j| t[i][j]))
        .collect();
    let terminal = DMatrix::from_fn(3, 3, |i, j| TABLE_TRANSFORMERS[12][i][j]);
    let circuit =
        io::circuit_from_rows(3, &rows, &transformers, &terminal, &TABLE_TERMINALS).unwrap();
    circuit.validate().unwrap();
    assert_eq!(circuit.n_degenerate(), 3);
    assert_eq!(circuit.stages.len(), 12);
    // quantization with the default junction capacitance (1 fF)
    let terms = vec![
        PortTermination::JosephsonJunction {
            l_j: 1e-8,
            c_j: 1e-15,
        };
        3
    ];
    let loops = multiport_effective_loops(&circuit, &terms).unwrap();
    let qm = quantize_multiport(&circuit, &loops, &terms, false).unwrap();
    let sym_defect = (&qm.c0 - qm.c0.transpose()).norm() / qm.c0.norm();
    let pd = qm.c0.clone().cholesky().is_some();
    // finite positive spectra of every bath
    let baths = all_baths(&circuit, &loops, &qm, &terms).unwrap();
    let mut spectra_ok = true;
    for bath in &baths {
        for k in 0..40 {
            let w = 1e8 * 1.3f64.powi(k);
            let j = bath.spectral.eval(w);
            if !(j.is_finite() && j >= 0.0) {
                spectra_ok = false;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst_defect < 2e-3 && sym_defect < 1e-13 && pd && spectra_ok && elapsed < 5.0;
    println!(
        "[criterion 4] printed-table regression: max |T^T T - I| = {worst_defect:.3e} (< 2e-3), \
         C0 symmetric ({sym_defect:.1e}) and PD: {pd}, spectra finite/nonnegative: {spectra_ok}, \
         {elapsed:.2} s (< 5 s) -> {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(worst_defect < 2e-3);
    assert!(sym_defect < 1e-13);
    assert!(pd);
    assert!(spectra_ok);
    assert!(elapsed < 5.0);
}

#[test]
fn criterion_05_transpose_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5005);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n_ports = rng.gen_range(2..=3usize);
        let circuit = synthetic::random_multiport_circuit(&mut rng, n_ports, 6, true);
        let mut terms = Vec::new();
        for _ in 0..n_ports {
            terms.push(match rng.gen_range(0..3) {
                0 => PortTermination::JosephsonJunction {
                    l_j: 1e-8,
                    c_j: 1e-15,
                },
                1 => PortTermination::Resistor { r: 50.0 },
                _ => PortTermination::VoltageSource { r_series: 50.0 },
            });
        }
        let cur = multiport_effective_loops(&circuit, &terms).unwrap();
        let vol = effective_loops_via_voltage_law(&circuit, &terms).unwrap();
        worst = worst
            .max((&cur.f_jc - &vol.f_jc).amax())
            .max((&cur.f_lc - &vol.f_lc).amax())
            .max((&cur.f_zc - &vol.f_zc).amax())
            .max((&cur.f_xc - &vol.f_xc).amax())
            .max((&cur.f_vc - &vol.f_vc).amax());
    }
    println!(
        "[criterion 5] current-law vs voltage-law loop matrices: worst entry diff {worst:.3e} \
         (< 1e-12) over 200 circuits -> {}",
        if worst < 1e-12 { "PASS" } else { "FAIL" }
    );
    assert!(worst < 1e-12);
}

#[test]
fn criterion_06_spectral_specialization() {
    // the general multiport series-bath spectrum evaluated on a one-port
    // circuit equals the closed form with the capacitance tail sum
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut circuit = synthetic::random_oneport_circuit(&mut rng, 5);
        for st in &mut circuit.stages {
            if let OnePortStageKind::Regular { turns_ratio, .. } = &mut st.kind {
                if (*turns_ratio - 1.0).abs() < 5e-2 {
                    *turns_ratio = 1.5;
                }
            }
        }
        let loops = oneport_effective_loops(&circuit).unwrap();
        let qm =
            brune::quantize::quantize_oneport(&circuit, &loops, (0.7, 0.2), 0.1, false).unwrap();
        let embedded = brune::loops::embed_oneport(&circuit);
        let caps: Vec<f64> = circuit
            .stages
            .iter()
            .map(|st| match st.kind {
                OnePortStageKind::Regular { capacitance, .. } => capacitance,
                OnePortStageKind::CapacitiveDegenerate { capacitance } => capacitance,
            })
            .collect();
        for j in 0..circuit.stages.len() {
            let bath = series_bath(&embedded, &loops, &qm, j).unwrap();
            let r = circuit.stages[j].resistance;
            let tail: f64 = caps[j..].iter().sum();
            for k in 0..100 {
                let w = 1e-2 * 1.15f64.powi(k);
                let want = w.powi(3) * r / (1.0 + w * w * r * r * tail * tail);
                let got = bath.spectral.eval(w);
                worst = worst.max((got - want).abs() / want.abs().max(1e-300));
            }
        }
    }
    println!(
        "[criterion 6] multiport spectrum specializes to the one-port closed form: \
         worst relative diff {worst:.3e} (< 1e-12) at 100 frequencies -> {}",
        if worst < 1e-12 { "PASS" } else { "FAIL" }
    );
    assert!(worst < 1e-12);
}

#[test]
fn criterion_07_vector_fit_recovery() {
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let n_ports = rng.gen_range(1..=3usize);
        let order = rng.gen_range(1..=10usize);
        let model = synthetic::random_stable_model(&mut rng, order, n_ports);
        let samples = synthetic::sample_model(&model, 1e-2, 1e2, 160);
        let (pr, _) = vector_fit(&samples, order, &FitOptions::default())
            .unwrap_or_else(|e| panic!("trial {trial}: fit failed: {e}"));
        let err = fit_error(&samples, &pr).unwrap();
        worst = worst.max(err.max_rel);
    }
    // idempotence of the passivity enforcement on its own output
    let pr = PoleResidueModel {
        poles: vec![Complex64::new(-1.0, 0.0)],
        residues: vec![DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0))],
        d: DMatrix::from_element(1, 1, -0.01),
        e: DMatrix::zeros(1, 1),
    };
    let grid: Vec<f64> = (0..400).map(|k| 1e-2 * 1.03f64.powi(k)).collect();
    let (fixed, _) = enforce_passivity(&pr, &grid, 30).unwrap();
    let (_, second) = enforce_passivity(&fixed, &grid, 30).unwrap();
    println!(
        "[criterion 7] vector-fit exact recovery: worst max-rel {worst:.3e} (< 1e-7) over \
         100 trials; enforcement second-pass norm {second:.3e} (< 1e-12) -> {}",
        if worst < 1e-7 && second < 1e-12 {
            "PASS"
        } else {
            "FAIL"
        }
    );
    assert!(worst < 1e-7);
    assert!(second < 1e-12);
}

#[test]
fn criterion_08_quantization_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(8008);
    let mut worst_congruence: f64 = 0.0;
    let mut all_pd = true;
    let mut junction_block_zero = true;
    for _ in 0..40 {
        // one-port banded structure vs direct congruence
        let mut circuit = synthetic::random_oneport_circuit(&mut rng, 5);
        for st in &mut circuit.stages {
            if let OnePortStageKind::Regular { turns_ratio, .. } = &mut st.kind {
                if (*turns_ratio - 1.0).abs() < 2e-3 {
                    *turns_ratio = 1.3;
                }
            }
        }
        let loops = oneport_effective_loops(&circuit).unwrap();
        let (c_raw, _) = build_capacitance_oneport(&circuit, &loops, 0.5, 0.3).unwrap();
        let m_raw = build_stiffness_oneport(&circuit, &loops);
        let t = oneport_band_transform(&circuit).unwrap();
        let qm =
            brune::quantize::quantize_oneport(&circuit, &loops, (0.7, 0.5), 0.3, false).unwrap();
        let c_direct = t.transpose() * &c_raw * &t;
        let m_direct = t.transpose() * &m_raw * &t;
        let scale = c_direct.norm().max(m_direct.norm());
        worst_congruence = worst_congruence
            .max((&qm.c0 - c_direct).amax() / scale)
            .max((&qm.m0 - m_direct).amax() / scale);
        // multiport: PD whenever every capacitance is positive; junction
        // block of M0 exactly zero
        let n_ports = rng.gen_range(2..=3usize);
        let mcircuit = synthetic::random_multiport_circuit(&mut rng, n_ports, 4, true);
        let terms = vec![
            PortTermination::JosephsonJunction {
                l_j: 0.5,
                c_j: 0.05,
            };
            n_ports
        ];
        let mloops = multiport_effective_loops(&mcircuit, &terms).unwrap();
        let mqm = quantize_multiport(&mcircuit, &mloops, &terms, false).unwrap();
        all_pd &= mqm.c0.clone().cholesky().is_some();
        for i in 0..n_ports {
            for j in 0..mqm.m0.ncols() {
                junction_block_zero &= mqm.m0[(i, j)] == 0.0 && mqm.m0[(j, i)] == 0.0;
            }
        }
    }
    let pass = worst_congruence < 1e-12 && all_pd && junction_block_zero;
    println!(
        "[criterion 8] quantization structure: banded-vs-congruence {worst_congruence:.3e} \
         (< 1e-12), C0 always PD: {all_pd}, junction stiffness block exactly zero: \
         {junction_block_zero} -> {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(worst_congruence < 1e-12);
    assert!(all_pd);
    assert!(junction_block_zero);
}

#[test]
fn criterion_09_dissipation_sanity() {
    let mut rng = ChaCha8Rng::seed_from_u64(9009);
    let mut all_nonneg = true;
    let mut worst_additivity: f64 = 0.0;
    let mut worst_series_scaling: f64 = 0.0;
    let mut worst_shunt_invariance: f64 = 0.0;
    for _ in 0..25 {
        let n_ports = rng.gen_range(2..=3usize);
        let circuit = synthetic::random_multiport_circuit(&mut rng, n_ports, 4, true);
        let terms = vec![
            PortTermination::JosephsonJunction {
                l_j: 0.5,
                c_j: 0.05,
            };
            n_ports
        ];
        let loops = multiport_effective_loops(&circuit, &terms).unwrap();
        let qm = quantize_multiport(&circuit, &loops, &terms, false).unwrap();
        let modes = qm.normal_modes().unwrap();
        let baths = all_baths(&circuit, &loops, &qm, &terms).unwrap();
        for bath in &baths {
            for k in 0..50 {
                let w = 1e-3 * 1.5f64.powi(k);
                let j = bath.spectral.eval(w);
                all_nonneg &= j.is_finite() && j >= 0.0;
            }
        }
        let w01 = modes.frequencies[0].max(1e-6);
        let rates: Vec<f64> = baths
            .iter()
            .map(|b| t1_rate(b, &modes, w01, 0.02, 0).unwrap())
            .collect();
        // per-bath rates are independent of evaluation order (bitwise), and
        // the total is their sum by construction
        let rates_rev: Vec<f64> = baths
            .iter()
            .rev()
            .map(|b| t1_rate(b, &modes, w01, 0.02, 0).unwrap())
            .collect();
        for (a, b) in rates.iter().zip(rates_rev.iter().rev()) {
            worst_additivity = worst_additivity.max((a - b).abs());
        }
        // capacitance rescale: series couplings scale linearly, shunt
        // couplings are invariant
        let alpha = 2.5;
        let mut scaled = circuit.clone();
        for st in &mut scaled.stages {
            match &mut st.kind {
                MultiportStageKind::Regular { capacitance, .. } => *capacitance *= alpha,
                MultiportStageKind::CapacitiveDegenerate { capacitance } => *capacitance *= alpha,
            }
        }
        let sloops = multiport_effective_loops(&scaled, &terms).unwrap();
        let sqm = quantize_multiport(&scaled, &sloops, &terms, false).unwrap();
        for j in 0..circuit.stages.len() {
            let b1 = series_bath(&circuit, &loops, &qm, j).unwrap();
            let b2 = series_bath(&scaled, &sloops, &sqm, j).unwrap();
            for i in 0..b1.coupling.len() {
                worst_series_scaling = worst_series_scaling.max(
                    (b2.coupling[i] - alpha * b1.coupling[i]).abs()
                        / (alpha * b1.coupling.amax()).max(1e-300),
                );
            }
        }
        for i in 0..n_ports {
            let b1 = shunt_bath(&circuit, &loops, &qm, i).unwrap();
            let b2 = shunt_bath(&scaled, &sloops, &sqm, i).unwrap();
            for k in 0..b1.coupling.len() {
                worst_shunt_invariance = worst_shunt_invariance
                    .max((b2.coupling[k] - b1.coupling[k]).abs() / b1.coupling.amax().max(1e-300));
            }
        }
    }
    let pass = all_nonneg
        && worst_additivity == 0.0
        && worst_series_scaling < 1e-12
        && worst_shunt_invariance < 1e-12;
    println!(
        "[criterion 9] dissipation sanity: J >= 0 everywhere: {all_nonneg}, bath-order \
         invariance {worst_additivity:.1e} (exact), series rescale covariance \
         {worst_series_scaling:.3e} / shunt invariance {worst_shunt_invariance:.3e} -> {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(all_nonneg);
    assert!(worst_additivity == 0.0);
    assert!(worst_series_scaling < 1e-12);
    assert!(worst_shunt_invariance < 1e-12);
}

#[test]
fn criterion_10_cli_pipeline() {
    let start = Instant::now();
    let sample = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/sample_3port.csv");
    let out = std::env::temp_dir().join("brune_acceptance_roundtrip");
    let code = brune_cli::run([
        "brune",
        "roundtrip",
        sample,
        "--npoles",
        "7",
        "--out",
        out.to_str().unwrap(),
        "--plot",
    ]);
    assert_eq!(code, 0, "roundtrip exit code");
    let elapsed = start.elapsed().as_secs_f64();
    let report: io::Report =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    // report follows the printed-table schema: per-stage rows with the
    // reciprocal turns ratio, nH/nF units and degenerate markers
    assert_eq!(report.n_ports, 3);
    assert!(report.n_stages >= 4);
    for row in &report.stages {
        assert_eq!(row.nu.len(), 2);
        if row.degenerate {
            assert_eq!(row.marker, "*");
            assert_eq!(row.t, 0.0);
            assert_eq!(row.l_nh, 0.0);
        } else {
            assert!(row.t != 0.0);
            assert!(row.l_nh > 0.0);
        }
    }
    assert_eq!(report.terminal_resistances_ohm.len(), 3);
    assert_eq!(report.belevitch_transformers.len(), report.n_stages);
    let quant = report.quantization.as_ref().expect("quantization section");
    assert!(!quant.mode_frequencies_rad_s.is_empty());
    let relax = report.relaxation.as_ref().expect("relaxation section");
    assert_eq!(relax.approximation, "harmonic");
    assert!(relax.total_rate_per_s.is_finite());
    // recomposed circuit against the shipped samples
    let netlist = std::fs::read_to_string(out.join("netlist.cir")).unwrap();
    let circuit = io::parse_netlist(&netlist).unwrap();
    let recomposed = recompose_multiport(&circuit).unwrap();
    let samples_text = std::fs::read_to_string(sample).unwrap();
    let samples: FrequencySamples = io::read_zcsv(&samples_text).unwrap();
    let err = fit_error(&samples, &recomposed).unwrap();
    let pass = elapsed < 60.0 && err.max_rel < 1e-5;
    println!(
        "[criterion 10] CLI roundtrip on the shipped 3-port sample: {elapsed:.2} s (< 60 s), \
         max grid error {:.3e} (< 1e-5), report schema OK -> {}",
        err.max_rel,
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(elapsed < 60.0);
    assert!(err.max_rel < 1e-5);
    let _ = DVector::<f64>::zeros(1);
}
