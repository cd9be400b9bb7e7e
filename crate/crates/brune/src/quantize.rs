//! Hamiltonian assembly for the synthesized circuit.
//!
//! The flux coordinates are the junction fluxes followed by the fluxes of
//! the regular-stage inductors. The capacitance matrix combines the
//! junction capacitances with the stage capacitors routed through the
//! effective loop matrix; the stiffness matrix carries the inverse stage
//! inductances with an exactly zero junction block. For one-port circuits a
//! local band transform makes both matrices tridiagonal.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loops::{EffectiveLoopMatrices, PortTermination};
use crate::multiport::{MultiportBruneCircuit, MultiportStageKind};
use crate::oneport::{OnePortBruneCircuit, OnePortStageKind};

/// Flux quantum (Wb).
pub const FLUX_QUANTUM: f64 = 2.067_833_848e-15;

/// Junction phase scale `Phi_0 / 2 pi`.
pub const PHASE_SCALE: f64 = FLUX_QUANTUM / (2.0 * std::f64::consts::PI);

/// Label of one flux coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coordinate {
    /// Junction flux at the given port.
    JunctionPort(usize),
    /// Flux of the inductor of the given stage (0-based).
    StageInductor(usize),
}

/// One Josephson junction attached to a port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub coordinate: usize,
    pub port: usize,
    /// Junction inductance (H).
    pub inductance: f64,
    /// Formal junction shunt capacitance (F).
    pub capacitance: f64,
}

/// Assembled circuit Hamiltonian data: `H = Q^T C0^{-1} Q / 2 + U(Phi)` with
/// `U = Phi^T M0 Phi / 2 - (Phi_0/2pi)^2 sum_j L_J^{-1} cos(phi_j)`.
#[derive(Debug, Clone)]
pub struct QuantizedModel {
    pub c0: DMatrix<f64>,
    pub m0: DMatrix<f64>,
    pub coordinates: Vec<Coordinate>,
    pub junctions: Vec<Junction>,
    /// Band transform of the one-port quantization (coordinates are
    /// `T^T C0 T`-banded when present). Bath couplings follow the same
    /// transform.
    pub band_transform: Option<DMatrix<f64>>,
    pub warnings: Vec<String>,
}

/// Capacitance matrix `C0 = diag(C_J, 0) + F_C0 diag(C_1..C_M) F_C0^T`
/// restricted to the stage-capacitor columns; the terminal-capacitor block
/// belongs to the dissipation analysis.
pub fn build_capacitance(
    circuit: &MultiportBruneCircuit,
    loops: &EffectiveLoopMatrices,
    junction_capacitances: &[f64],
) -> Result<(DMatrix<f64>, Vec<String>)> {
    let n_j = loops.junction_ports.len();
    if junction_capacitances.len() != n_j {
        return Err(Error::DimensionMismatch(
            "one junction capacitance per junction port".into(),
        ));
    }
    let caps = crate::loops::stage_capacitances(circuit);
    let fc0 = loops.f_c0();
    let dim = fc0.nrows();
    let mut c0 = &fc0 * DMatrix::from_diagonal(&caps) * fc0.transpose();
    for (r, cj) in junction_capacitances.iter().enumerate() {
        c0[(r, r)] += cj;
    }
    let mut warnings = Vec::new();
    if c0.clone().cholesky().is_none() {
        warnings.push(format!(
            "SingularCapacitance: C0 ({dim}x{dim}) is not positive definite; \
             a nonzero junction capacitance is required"
        ));
    }
    Ok((c0, warnings))
}

/// One-port capacitance matrix including the formal terminal capacitor
/// column (the stand-in for the shunt resistor).
pub fn build_capacitance_oneport(
    circuit: &OnePortBruneCircuit,
    loops: &EffectiveLoopMatrices,
    junction_capacitance: f64,
    terminal_capacitance: f64,
) -> Result<(DMatrix<f64>, Vec<String>)> {
    let m = circuit.stages.len();
    let mut caps = DVector::zeros(m + 1);
    for (j, st) in circuit.stages.iter().enumerate() {
        caps[j] = match st.kind {
            OnePortStageKind::Regular { capacitance, .. } => capacitance,
            OnePortStageKind::CapacitiveDegenerate { capacitance } => capacitance,
        };
    }
    caps[m] = terminal_capacitance;
    let rows = loops.f_jc.nrows() + loops.f_lc.nrows();
    let mut fc = DMatrix::zeros(rows, m + 1);
    fc.view_mut((0, 0), (1, m + 1)).copy_from(&loops.f_jc);
    fc.view_mut((1, 0), (loops.f_lc.nrows(), m + 1))
        .copy_from(&loops.f_lc);
    let mut c0 = &fc * DMatrix::from_diagonal(&caps) * fc.transpose();
    c0[(0, 0)] += junction_capacitance;
    let mut warnings = Vec::new();
    if c0.clone().cholesky().is_none() {
        warnings.push(
            "SingularCapacitance: C0 is not positive definite; a nonzero \
             junction capacitance is required"
                .to_string(),
        );
    }
    Ok((c0, warnings))
}

/// Stiffness matrix: exactly zero junction block, `1/L_j` on the inductor
/// coordinates.
pub fn build_stiffness(
    circuit: &MultiportBruneCircuit,
    loops: &EffectiveLoopMatrices,
) -> DMatrix<f64> {
    let n_j = loops.junction_ports.len();
    let n_l = loops.inductor_stages.len();
    let dim = n_j + n_l;
    let mut m0 = DMatrix::zeros(dim, dim);
    for (r, &stage) in loops.inductor_stages.iter().enumerate() {
        if let MultiportStageKind::Regular { inductance, .. } = &circuit.stages[stage].kind {
            m0[(n_j + r, n_j + r)] = 1.0 / inductance;
        }
    }
    m0
}

pub fn build_stiffness_oneport(
    circuit: &OnePortBruneCircuit,
    loops: &EffectiveLoopMatrices,
) -> DMatrix<f64> {
    let n_l = loops.inductor_stages.len();
    let dim = 1 + n_l;
    let mut m0 = DMatrix::zeros(dim, dim);
    for (r, &stage) in loops.inductor_stages.iter().enumerate() {
        if let OnePortStageKind::Regular { inductance, .. } = &circuit.stages[stage].kind {
            m0[(1 + r, 1 + r)] = 1.0 / inductance;
        }
    }
    m0
}

/// Local transform making the one-port Lagrangian band diagonal. Row 1 keeps
/// the junction flux; the row of the `r`-th regular stage carries
/// `(-1)^r / (1 - n)` at columns `r` and `r + 1`. Degenerate stages have no
/// inductor branch and drop their row. Fails with `UnitTurnsRatio` when some
/// `n_j = 1` (the divisor vanishes); callers then stay in untransformed
/// coordinates.
pub fn oneport_band_transform(circuit: &OnePortBruneCircuit) -> Result<DMatrix<f64>> {
    let regulars: Vec<(usize, f64)> = circuit
        .stages
        .iter()
        .enumerate()
        .filter_map(|(j, st)| match st.kind {
            OnePortStageKind::Regular { turns_ratio, .. } => Some((j, turns_ratio)),
            _ => None,
        })
        .collect();
    let dim = 1 + regulars.len();
    let mut t = DMatrix::zeros(dim, dim);
    t[(0, 0)] = 1.0;
    for (r, (_, n)) in regulars.iter().enumerate() {
        let denom = 1.0 - n;
        if denom.abs() < 1e-9 {
            return Err(Error::StructureMismatch(format!(
                "UnitTurnsRatio: band transform undefined for n = {n}"
            )));
        }
        let sign = if (r + 1) % 2 == 0 { 1.0 } else { -1.0 };
        let val = sign / denom;
        t[(r + 1, r)] = val;
        if r + 1 < dim {
            t[(r + 1, r + 1)] = val;
        }
    }
    Ok(t)
}

/// Assemble the quantized model from the capacitance/stiffness matrices and
/// the junction terminations. `cj_zero_limit` switches a singular `C0` to
/// its positive-definite restriction instead of failing (the formal-junction
/// capacitance limit), with a warning.
pub fn assemble_hamiltonian(
    c0: DMatrix<f64>,
    m0: DMatrix<f64>,
    coordinates: Vec<Coordinate>,
    junctions: Vec<Junction>,
    band_transform: Option<DMatrix<f64>>,
    cj_zero_limit: bool,
) -> Result<QuantizedModel> {
    let dim = c0.nrows();
    if m0.nrows() != dim || coordinates.len() != dim {
        return Err(Error::DimensionMismatch(
            "C0, M0 and coordinate labels must agree".into(),
        ));
    }
    let mut warnings = Vec::new();
    if c0.clone().cholesky().is_none() {
        if !cj_zero_limit {
            return Err(Error::SingularCapacitance);
        }
        warnings.push(
            "C0 singular: normal modes restricted to the non-null subspace \
             (junction-capacitance zero limit)"
                .to_string(),
        );
    }
    Ok(QuantizedModel {
        c0,
        m0,
        coordinates,
        junctions,
        band_transform,
        warnings,
    })
}

/// Harmonic normal modes of `M_total v = omega^2 C0 v` where `M_total` adds
/// the linearized junction terms `1/L_J` to the stiffness.
#[derive(Debug, Clone)]
pub struct NormalModes {
    /// Ascending mode frequencies (rad/s).
    pub frequencies: DVector<f64>,
    /// Modes as columns, `C0`-orthonormal: `V^T C0 V = I`.
    pub modes: DMatrix<f64>,
}

impl QuantizedModel {
    /// Total stiffness including the harmonic junction terms.
    pub fn total_stiffness(&self) -> DMatrix<f64> {
        let mut m = self.m0.clone();
        for j in &self.junctions {
            m[(j.coordinate, j.coordinate)] += 1.0 / j.inductance;
        }
        m
    }

    pub fn normal_modes(&self) -> Result<NormalModes> {
        let dim = self.c0.nrows();
        let chol = self.c0.clone().cholesky().ok_or(Error::NotPd)?;
        let l = chol.l();
        let l_inv = l.clone().try_inverse().ok_or(Error::NotPd)?;
        let k = &l_inv * self.total_stiffness() * l_inv.transpose();
        let k = (&k + k.transpose()) * 0.5;
        let (vals, vecs) = crate::multiport::sorted_symmetric_eigen(&k);
        let mut freqs = DVector::zeros(dim);
        for i in 0..dim {
            freqs[i] = vals[i].max(0.0).sqrt();
        }
        let modes = l_inv.transpose() * vecs;
        Ok(NormalModes {
            frequencies: freqs,
            modes,
        })
    }
}

/// One-shot quantization of a multiport circuit under the given
/// terminations.
pub fn quantize_multiport(
    circuit: &MultiportBruneCircuit,
    loops: &EffectiveLoopMatrices,
    terminations: &[PortTermination],
    cj_zero_limit: bool,
) -> Result<QuantizedModel> {
    let mut cjs = Vec::new();
    let mut junctions = Vec::new();
    for (row, &p) in loops.junction_ports.iter().enumerate() {
        match terminations[p] {
            PortTermination::JosephsonJunction { l_j, c_j } => {
                cjs.push(c_j);
                junctions.push(Junction {
                    coordinate: row,
                    port: p,
                    inductance: l_j,
                    capacitance: c_j,
                });
            }
            _ => {
                return Err(Error::WrongTermination {
                    port: p,
                    expected: "junction",
                })
            }
        }
    }
    let (c0, mut warnings) = build_capacitance(circuit, loops, &cjs)?;
    let m0 = build_stiffness(circuit, loops);
    let mut coordinates: Vec<Coordinate> = loops
        .junction_ports
        .iter()
        .map(|&p| Coordinate::JunctionPort(p))
        .collect();
    coordinates.extend(
        loops
            .inductor_stages
            .iter()
            .map(|&s| Coordinate::StageInductor(s)),
    );
    let mut qm = assemble_hamiltonian(c0, m0, coordinates, junctions, None, cj_zero_limit)?;
    qm.warnings.append(&mut warnings);
    Ok(qm)
}

/// One-shot quantization of a one-port circuit shunted by a junction, with
/// the band transform applied when all turns ratios allow it.
pub fn quantize_oneport(
    circuit: &OnePortBruneCircuit,
    loops: &EffectiveLoopMatrices,
    junction: (f64, f64),
    terminal_capacitance: f64,
    cj_zero_limit: bool,
) -> Result<QuantizedModel> {
    let (l_j, c_j) = junction;
    let (c0_raw, mut warnings) =
        build_capacitance_oneport(circuit, loops, c_j, terminal_capacitance)?;
    let m0_raw = build_stiffness_oneport(circuit, loops);
    let (c0, m0, band) = match oneport_band_transform(circuit) {
        Ok(t) => (
            t.transpose() * &c0_raw * &t,
            t.transpose() * &m0_raw * &t,
            Some(t),
        ),
        Err(e) => {
            warnings.push(format!("{e}; staying in untransformed coordinates"));
            (c0_raw, m0_raw, None)
        }
    };
    let mut coordinates = vec![Coordinate::JunctionPort(0)];
    coordinates.extend(
        loops
            .inductor_stages
            .iter()
            .map(|&s| Coordinate::StageInductor(s)),
    );
    let junctions = vec![Junction {
        coordinate: 0,
        port: 0,
        inductance: l_j,
        capacitance: c_j,
    }];
    let mut qm = assemble_hamiltonian(c0, m0, coordinates, junctions, band, cj_zero_limit)?;
    qm.warnings.append(&mut warnings);
    Ok(qm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loops::{multiport_effective_loops, oneport_effective_loops};
    use crate::multiport::{Belevitch, MultiportStage};
    use crate::oneport::{ExtractionFrequency, OnePortStage};
    use crate::synthetic;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_junctions(n: usize, l_j: f64, c_j: f64) -> Vec<PortTermination> {
        vec![PortTermination::JosephsonJunction { l_j, c_j }; n]
    }

    #[test]
    fn two_port_single_stage_capacitance_and_stiffness() {
        // displayed 2-port example: C0 entries built from t11, t21, C1
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..20 {
            let (t11, t21) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let (t12, t22) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let c1 = 10f64.powf(rng.gen_range(-1.0..1.0));
            let l1 = 10f64.powf(rng.gen_range(-1.0..1.0));
            let (cj1, cj2) = (rng.gen_range(0.01..0.2), rng.gen_range(0.01..0.2));
            let circuit = MultiportBruneCircuit {
                n_ports: 2,
                stages: vec![MultiportStage {
                    transformer: Belevitch {
                        t: vec![vec![t11, t12], vec![t21, t22]],
                    },
                    resistance: 0.3,
                    kind: MultiportStageKind::Regular {
                        turns_ratio: rng.gen_range(0.5..2.0),
                        inductance: l1,
                        capacitance: c1,
                        coupling: vec![rng.gen_range(-0.5..0.5)],
                    },
                    gyration: None,
                    extraction_frequency: ExtractionFrequency::Infinite,
                }],
                terminal_transformer: Belevitch::from_matrix(&synthetic::random_orthogonal(
                    &mut rng, 2,
                )),
                terminal_resistances: vec![30.0, 60.0],
            };
            let terms = vec![
                PortTermination::JosephsonJunction {
                    l_j: 1e-8,
                    c_j: cj1,
                },
                PortTermination::JosephsonJunction {
                    l_j: 1e-8,
                    c_j: cj2,
                },
            ];
            let loops = multiport_effective_loops(&circuit, &terms).unwrap();
            let (c0, _) = build_capacitance(&circuit, &loops, &[cj1, cj2]).unwrap();
            let want = [
                [cj1 + t11 * t11 * c1, t11 * t21 * c1, t11 * c1],
                [t21 * t11 * c1, cj2 + t21 * t21 * c1, t21 * c1],
                [t11 * c1, t21 * c1, c1],
            ];
            for i in 0..3 {
                for j in 0..3 {
                    assert_relative_eq!(c0[(i, j)], want[i][j], epsilon = 1e-13 * c1.max(1.0));
                }
            }
            let m0 = build_stiffness(&circuit, &loops);
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == 2 && j == 2 { 1.0 / l1 } else { 0.0 };
                    assert_eq!(m0[(i, j)], want);
                }
            }
        }
    }

    fn oneport_regular(r: f64, n: f64, l: f64, c: f64) -> OnePortStage {
        OnePortStage {
            resistance: r,
            kind: OnePortStageKind::Regular {
                turns_ratio: n,
                inductance: l,
                capacitance: c,
            },
            extraction_frequency: ExtractionFrequency::Infinite,
        }
    }

    #[test]
    fn oneport_banded_numeric_example() {
        // M=1, C_J=1, C1=1, n1=2, C_term=1, L1=1: banded C = [[5,2],[2,2]],
        // banded M0 = [[1,1],[1,1]]
        let circuit = OnePortBruneCircuit {
            stages: vec![oneport_regular(0.5, 2.0, 1.0, 1.0)],
            terminal_resistance: 3.0,
        };
        let loops = oneport_effective_loops(&circuit).unwrap();
        let qm = quantize_oneport(&circuit, &loops, (1e-8, 1.0), 1.0, false).unwrap();
        let want_c = DMatrix::from_row_slice(2, 2, &[5.0, 2.0, 2.0, 2.0]);
        let want_m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!((&qm.c0 - want_c).norm() < 1e-12);
        assert!((&qm.m0 - want_m).norm() < 1e-12);
    }

    #[test]
    fn banded_matches_congruence_and_is_tridiagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        for _ in 0..40 {
            let mut circuit = synthetic::random_oneport_circuit(&mut rng, 5);
            // keep turns ratios away from 1 so the transform exists
            for st in &mut circuit.stages {
                if let OnePortStageKind::Regular { turns_ratio, .. } = &mut st.kind {
                    if (*turns_ratio - 1.0).abs() < 2e-3 {
                        *turns_ratio = 1.3;
                    }
                }
            }
            let loops = oneport_effective_loops(&circuit).unwrap();
            let (c_raw, _) = build_capacitance_oneport(&circuit, &loops, 0.7, 0.4).unwrap();
            let m_raw = build_stiffness_oneport(&circuit, &loops);
            let t = oneport_band_transform(&circuit).unwrap();
            let c_banded = t.transpose() * &c_raw * &t;
            let m_banded = t.transpose() * &m_raw * &t;
            let dim = c_banded.nrows();
            let scale = c_banded.norm().max(m_banded.norm());
            for i in 0..dim {
                for j in 0..dim {
                    if i.abs_diff(j) > 1 {
                        assert!(
                            c_banded[(i, j)].abs() < 1e-12 * scale,
                            "C not banded at ({i},{j})"
                        );
                        assert!(
                            m_banded[(i, j)].abs() < 1e-12 * scale,
                            "M not banded at ({i},{j})"
                        );
                    }
                }
            }
            // closed-form band entries for the all-regular case
            let regulars: Vec<(f64, f64, f64)> = circuit
                .stages
                .iter()
                .filter_map(|st| match st.kind {
                    OnePortStageKind::Regular {
                        turns_ratio,
                        inductance,
                        capacitance,
                    } => Some((turns_ratio, inductance, capacitance)),
                    _ => None,
                })
                .collect();
            if regulars.len() == circuit.stages.len() && !regulars.is_empty() {
                let cp: Vec<f64> = regulars
                    .iter()
                    .map(|(n, _, c)| c / (1.0 - n).powi(2))
                    .collect();
                let lp: Vec<f64> = regulars
                    .iter()
                    .map(|(n, l, _)| l * (1.0 - n).powi(2))
                    .collect();
                let m = regulars.len();
                assert_relative_eq!(
                    c_banded[(0, 0)],
                    0.7 + regulars[0].0 * regulars[0].0 * cp[0],
                    max_relative = 1e-10
                );
                assert_relative_eq!(
                    c_banded[(0, 1)],
                    regulars[0].0 * cp[0],
                    max_relative = 1e-10
                );
                for k in 1..m {
                    assert_relative_eq!(
                        c_banded[(k, k)],
                        cp[k - 1] + regulars[k].0 * regulars[k].0 * cp[k],
                        max_relative = 1e-10
                    );
                }
                assert_relative_eq!(c_banded[(m, m)], cp[m - 1] + 0.4, max_relative = 1e-10);
                assert_relative_eq!(m_banded[(0, 0)], 1.0 / lp[0], max_relative = 1e-10);
                for k in 1..m {
                    assert_relative_eq!(
                        m_banded[(k, k)],
                        1.0 / lp[k - 1] + 1.0 / lp[k],
                        max_relative = 1e-10
                    );
                }
                assert_relative_eq!(m_banded[(m, m)], 1.0 / lp[m - 1], max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn banded_degenerate_diagonal_entry() {
        // degenerate stage k: its capacitor lands unprimed on the diagonal,
        // flanked by the primed neighbours
        let (n1, l1, c1) = (1.8, 0.6, 0.9);
        let ck = 0.35;
        let (n3, l3, c3) = (0.4, 1.2, 0.5);
        let circuit = OnePortBruneCircuit {
            stages: vec![
                oneport_regular(0.1, n1, l1, c1),
                OnePortStage {
                    resistance: 0.2,
                    kind: OnePortStageKind::CapacitiveDegenerate { capacitance: ck },
                    extraction_frequency: ExtractionFrequency::Infinite,
                },
                oneport_regular(0.3, n3, l3, c3),
            ],
            terminal_resistance: 2.0,
        };
        let loops = oneport_effective_loops(&circuit).unwrap();
        let (c_raw, _) = build_capacitance_oneport(&circuit, &loops, 0.25, 0.15).unwrap();
        let t = oneport_band_transform(&circuit).unwrap();
        let c_banded = t.transpose() * &c_raw * &t;
        let c1p = c1 / (1.0 - n1).powi(2);
        let c3p = c3 / (1.0 - n3).powi(2);
        assert_relative_eq!(
            c_banded[(1, 1)],
            c1p + ck + n3 * n3 * c3p,
            max_relative = 1e-12
        );
    }

    #[test]
    fn unit_turns_ratio_falls_back_untransformed() {
        let circuit = OnePortBruneCircuit {
            stages: vec![oneport_regular(0.1, 1.0, 0.5, 0.5)],
            terminal_resistance: 1.0,
        };
        assert!(oneport_band_transform(&circuit).is_err());
        let loops = oneport_effective_loops(&circuit).unwrap();
        let qm = quantize_oneport(&circuit, &loops, (1e-8, 0.5), 0.0, false).unwrap();
        assert!(qm.band_transform.is_none());
        assert!(qm.warnings.iter().any(|w| w.contains("UnitTurnsRatio")));
    }

    #[test]
    fn near_unit_turns_ratio_scales_and_matches_congruence() {
        let n = 1.0 + 1e-3;
        let circuit = OnePortBruneCircuit {
            stages: vec![oneport_regular(0.1, n, 0.5, 0.5)],
            terminal_resistance: 1.0,
        };
        let loops = oneport_effective_loops(&circuit).unwrap();
        let (c_raw, _) = build_capacitance_oneport(&circuit, &loops, 0.3, 0.2).unwrap();
        let t = oneport_band_transform(&circuit).unwrap();
        let c_banded = t.transpose() * &c_raw * &t;
        // entries blow up as 1/(1-n)^2 but stay finite and consistent
        let c1p = 0.5 / (1.0 - n).powi(2);
        assert_relative_eq!(c_banded[(0, 0)], 0.3 + n * n * c1p, max_relative = 1e-9);
    }

    #[test]
    fn normal_modes_decoupled_lc() {
        let (l, c) = (2.5e-9, 0.4e-12);
        let qm = QuantizedModel {
            c0: DMatrix::from_element(1, 1, c),
            m0: DMatrix::zeros(1, 1),
            coordinates: vec![Coordinate::JunctionPort(0)],
            junctions: vec![Junction {
                coordinate: 0,
                port: 0,
                inductance: l,
                capacitance: c,
            }],
            band_transform: None,
            warnings: Vec::new(),
        };
        let modes = qm.normal_modes().unwrap();
        assert_relative_eq!(
            modes.frequencies[0],
            1.0 / (l * c).sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn normal_modes_coupled_pair_closed_form() {
        // two identical oscillators with coupling capacitance: the split
        // follows from the 2x2 generalized problem solved by hand
        let (c, cc, l) = (1.0e-12, 0.2e-12, 1.0e-9);
        let c0 = DMatrix::from_row_slice(2, 2, &[c + cc, -cc, -cc, c + cc]);
        let m0 = DMatrix::from_row_slice(2, 2, &[1.0 / l, 0.0, 0.0, 1.0 / l]);
        let qm = QuantizedModel {
            c0,
            m0,
            coordinates: vec![Coordinate::JunctionPort(0), Coordinate::JunctionPort(1)],
            junctions: Vec::new(),
            band_transform: None,
            warnings: Vec::new(),
        };
        let modes = qm.normal_modes().unwrap();
        // symmetric mode: C_eff = c; antisymmetric: C_eff = c + 2 cc
        let w_plus = 1.0 / (l * c).sqrt();
        let w_minus = 1.0 / (l * (c + 2.0 * cc)).sqrt();
        assert_relative_eq!(modes.frequencies[0], w_minus, max_relative = 1e-10);
        assert_relative_eq!(modes.frequencies[1], w_plus, max_relative = 1e-10);
        // C0-orthonormality
        let g = modes.modes.transpose() * &qm.c0 * &modes.modes;
        assert!((g - DMatrix::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn mode_orthonormality_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            // element values of the synthetic circuits are order one, so
            // the junction parameters are chosen commensurate
            let circuit = synthetic::random_multiport_circuit(&mut rng, 2, 3, true);
            let terms = all_junctions(2, 0.5, 0.05);
            let loops = multiport_effective_loops(&circuit, &terms).unwrap();
            let qm = quantize_multiport(&circuit, &loops, &terms, false).unwrap();
            let modes = qm.normal_modes().unwrap();
            let dim = qm.c0.nrows();
            let g = modes.modes.transpose() * &qm.c0 * &modes.modes;
            assert!((g - DMatrix::identity(dim, dim)).norm() < 1e-9);
        }
    }

    #[test]
    fn positive_definite_whenever_all_capacitances_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..30 {
            let n_ports = rng.gen_range(2..=3usize);
            let circuit = synthetic::random_multiport_circuit(&mut rng, n_ports, 4, true);
            let terms = all_junctions(n_ports, 0.5, 10f64.powf(rng.gen_range(-3.0..0.0)));
            let loops = multiport_effective_loops(&circuit, &terms).unwrap();
            let qm = quantize_multiport(&circuit, &loops, &terms, false).unwrap();
            assert!(qm.c0.clone().cholesky().is_some());
            // junction block of M0 is exactly zero
            let n_j = loops.junction_ports.len();
            for i in 0..n_j {
                for j in 0..qm.m0.ncols() {
                    assert_eq!(qm.m0[(i, j)], 0.0);
                    assert_eq!(qm.m0[(j, i)], 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_junction_capacitance_warns_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let circuit = synthetic::random_multiport_circuit(&mut rng, 2, 1, false);
        let terms = all_junctions(2, 1e-8, 0.0);
        let loops = multiport_effective_loops(&circuit, &terms).unwrap();
        // with a single stage capacitor and two junction coordinates the
        // bare F C F^T is rank deficient
        let (c0, warnings) = build_capacitance(&circuit, &loops, &[0.0, 0.0]).unwrap();
        assert!(c0.clone().cholesky().is_none());
        assert!(!warnings.is_empty());
        assert!(matches!(
            quantize_multiport(&circuit, &loops, &terms, false),
            Err(Error::SingularCapacitance)
        ));
        let qm = quantize_multiport(&circuit, &loops, &terms, true).unwrap();
        assert!(qm.warnings.iter().any(|w| w.contains("singular")));
    }
}
