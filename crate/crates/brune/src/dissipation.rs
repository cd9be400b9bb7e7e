//! Caldeira-Leggett bath couplings, spectral densities and relaxation-rate
//! estimates for every resistor class of the Brune circuit.
//!
//! Each resistor is treated one at a time: the other series resistors are
//! short circuited and the other shunts open circuited. Series-type baths
//! couple through `m = F_C0 C0 F_r^T` (dimension of capacitance); shunt-type
//! baths couple through the bare terminal column of the loop matrix
//! (dimensionless). Matrix elements use the harmonic approximation of the
//! junction potential, so every rate reported here carries that caveat.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loops::{EffectiveLoopMatrices, PortTermination};
use crate::multiport::MultiportBruneCircuit;
use crate::quantize::{NormalModes, QuantizedModel};

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Which resistor the bath belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BathKind {
    /// In-series stage resistor `r_j` (0-based stage index).
    SeriesResistor { stage: usize },
    /// Terminal-stage shunt resistor `R_j` (0-based index).
    TerminalShunt { index: usize },
    /// External resistor shunting a port.
    PortShunt { port: usize },
    /// Series resistance of a voltage source shunting a port.
    SourceSeries { port: usize },
}

/// Bath spectrum `J(omega)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpectralDensity {
    /// `J = omega^3 r / (1 + omega^2 r^2 c^2)` for series-type resistors,
    /// with `c` the effective capacitance `F_r C0 F_r^T`.
    SeriesRc {
        resistance: f64,
        effective_capacitance: f64,
    },
    /// `J = omega / R` for shunt-type resistors.
    Ohmic { resistance: f64 },
}

impl SpectralDensity {
    pub fn eval(&self, omega: f64) -> f64 {
        match *self {
            SpectralDensity::SeriesRc {
                resistance,
                effective_capacitance,
            } => {
                let denom = 1.0
                    + omega
                        * omega
                        * resistance
                        * resistance
                        * effective_capacitance
                        * effective_capacitance;
                omega.powi(3) * resistance / denom
            }
            SpectralDensity::Ohmic { resistance } => {
                if resistance.is_infinite() {
                    0.0
                } else {
                    omega / resistance
                }
            }
        }
    }
}

/// One bath: its coupling to the circuit coordinates and its spectrum.
#[derive(Debug, Clone)]
pub struct BathSpec {
    pub kind: BathKind,
    /// Coupling vector in the Hamiltonian coordinates (band-transformed for
    /// one-port models). Farads for series-type baths, dimensionless for
    /// shunt-type.
    pub coupling: DVector<f64>,
    pub spectral: SpectralDensity,
}

fn apply_band(qm: &QuantizedModel, v: DVector<f64>) -> DVector<f64> {
    match &qm.band_transform {
        Some(t) => t.transpose() * v,
        None => v,
    }
}

/// Bath of the in-series stage resistor `r_j`:
/// `m = F_C0 C0 (F_{r_j,C0})^T`, `J = omega^3 r / (1 + omega^2 r^2 c^2)`
/// with `c = F_{r_j,C0} C0 (F_{r_j,C0})^T`.
pub fn series_bath(
    circuit: &MultiportBruneCircuit,
    loops: &EffectiveLoopMatrices,
    qm: &QuantizedModel,
    stage: usize,
) -> Result<BathSpec> {
    let m = loops.n_stage_caps;
    if stage >= m {
        return Err(Error::IndexOutOfRange {
            index: stage,
            limit: m,
        });
    }
    let caps = crate::loops::stage_capacitances(circuit);
    let f_row = loops.f_zc.view((stage, 0), (1, m)).clone_owned();
    let fc0 = loops.f_c0();
    let cdiag = DMatrix::from_diagonal(&caps);
    let coupling = apply_band(
        qm,
        (&fc0 * &cdiag * f_row.transpose()).column(0).clone_owned(),
    );
    let c_eff = (&f_row * &cdiag * f_row.transpose())[(0, 0)];
    Ok(BathSpec {
        kind: BathKind::SeriesResistor { stage },
        coupling,
        spectral: SpectralDensity::SeriesRc {
            resistance: circuit.stages[stage].resistance,
            effective_capacitance: c_eff,
        },
    })
}

/// Bath of the terminal-stage shunt resistor `R_j`: the coupling is the bare
/// terminal column of `[F_JC; F_LC]` and `J = omega / R`.
pub fn shunt_bath(
    circuit: &MultiportBruneCircuit,
    loops: &EffectiveLoopMatrices,
    qm: &QuantizedModel,
    index: usize,
) -> Result<BathSpec> {
    let n = loops.n_ports;
    if index >= n {
        return Err(Error::IndexOutOfRange { index, limit: n });
    }
    let fcr = loops.f_cr();
    let coupling = apply_band(qm, fcr.column(index).clone_owned());
    Ok(BathSpec {
        kind: BathKind::TerminalShunt { index },
        coupling,
        spectral: SpectralDensity::Ohmic {
            resistance: circuit.terminal_resistances[index],
        },
    })
}

/// Bath of an external resistor shunting a port (the port's junction row is
/// replaced by the resistor row with the same chain pattern).
pub fn port_shunt_bath(
    circuit: &MultiportBruneCircuit,
    loops: &EffectiveLoopMatrices,
    qm: &QuantizedModel,
    terminations: &[PortTermination],
    port: usize,
) -> Result<BathSpec> {
    let r_x = match terminations.get(port) {
        Some(PortTermination::Resistor { r }) => *r,
        _ => {
            return Err(Error::WrongTermination {
                port,
                expected: "resistor",
            })
        }
    };
    let row =
        loops
            .resistor_ports
            .iter()
            .position(|&p| p == port)
            .ok_or(Error::WrongTermination {
                port,
                expected: "resistor",
            })?;
    let m = loops.n_stage_caps;
    let caps = crate::loops::stage_capacitances(circuit);
    let f_row = loops.f_xc.view((row, 0), (1, m)).clone_owned();
    let fc0 = loops.f_c0();
    let cdiag = DMatrix::from_diagonal(&caps);
    let coupling = apply_band(
        qm,
        (&fc0 * &cdiag * f_row.transpose()).column(0).clone_owned(),
    );
    let c_eff = (&f_row * &cdiag * f_row.transpose())[(0, 0)];
    Ok(BathSpec {
        kind: BathKind::PortShunt { port },
        coupling,
        spectral: SpectralDensity::SeriesRc {
            resistance: r_x,
            effective_capacitance: c_eff,
        },
    })
}

/// Series resistance of a voltage source shunting a port, treated exactly
/// like a port-shunt resistor.
pub fn source_series_bath(
    circuit: &MultiportBruneCircuit,
    loops: &EffectiveLoopMatrices,
    qm: &QuantizedModel,
    terminations: &[PortTermination],
    port: usize,
) -> Result<BathSpec> {
    let r_s = match terminations.get(port) {
        Some(PortTermination::VoltageSource { r_series }) => *r_series,
        _ => {
            return Err(Error::WrongTermination {
                port,
                expected: "voltage source",
            })
        }
    };
    let row =
        loops
            .source_ports
            .iter()
            .position(|&p| p == port)
            .ok_or(Error::WrongTermination {
                port,
                expected: "voltage source",
            })?;
    let m = loops.n_stage_caps;
    let caps = crate::loops::stage_capacitances(circuit);
    let f_row = loops.f_vc.view((row, 0), (1, m)).clone_owned();
    let fc0 = loops.f_c0();
    let cdiag = DMatrix::from_diagonal(&caps);
    let coupling = apply_band(
        qm,
        (&fc0 * &cdiag * f_row.transpose()).column(0).clone_owned(),
    );
    let c_eff = (&f_row * &cdiag * f_row.transpose())[(0, 0)];
    Ok(BathSpec {
        kind: BathKind::SourceSeries { port },
        coupling,
        spectral: SpectralDensity::SeriesRc {
            resistance: r_s,
            effective_capacitance: c_eff,
        },
    })
}

/// Magnitude of the frequency-dependent correction `m_R(omega)` to the
/// series-bath coupling that the zeroth-order treatment drops
/// (`(i w)^{-1} F_CR R^{-1} F_ZCR^T`, column of stage `j`). Reported as a
/// diagnostic only; the bath couplings themselves use the static term.
pub fn series_coupling_correction_magnitude(
    circuit: &MultiportBruneCircuit,
    loops: &EffectiveLoopMatrices,
    stage: usize,
    omega: f64,
) -> Result<f64> {
    let m = loops.n_stage_caps;
    let n = loops.n_ports;
    if stage >= m {
        return Err(Error::IndexOutOfRange {
            index: stage,
            limit: m,
        });
    }
    if omega <= 0.0 {
        return Err(Error::ZeroFrequency);
    }
    let fcr = loops.f_cr();
    let mut acc = 0.0;
    for i in 0..fcr.nrows() {
        let mut entry = 0.0;
        for k in 0..n {
            let r = circuit.terminal_resistances[k];
            if r.is_finite() && r > 0.0 {
                entry += fcr[(i, k)] * loops.f_zc[(stage, m + k)] / r;
            }
        }
        acc += (entry / omega).powi(2);
    }
    Ok(acc.sqrt())
}

/// All baths of a terminated circuit, in a deterministic order.
pub fn all_baths(
    circuit: &MultiportBruneCircuit,
    loops: &EffectiveLoopMatrices,
    qm: &QuantizedModel,
    terminations: &[PortTermination],
) -> Result<Vec<BathSpec>> {
    let mut out = Vec::new();
    for j in 0..loops.n_stage_caps {
        out.push(series_bath(circuit, loops, qm, j)?);
    }
    for i in 0..loops.n_ports {
        out.push(shunt_bath(circuit, loops, qm, i)?);
    }
    for &p in &loops.resistor_ports {
        out.push(port_shunt_bath(circuit, loops, qm, terminations, p)?);
    }
    for &p in &loops.source_ports {
        out.push(source_series_bath(circuit, loops, qm, terminations, p)?);
    }
    Ok(out)
}

/// Static and frequency-dependent coupling of a voltage source at a port.
pub struct VoltageCoupling {
    /// `C_V0 = F_C0 C0 (F_{V,C0})^T` (band-transformed when applicable):
    /// the charge shift of a DC source is `Q -> Q - C_V0 V`.
    pub c_v0: DVector<f64>,
    f_vrow_cr: DVector<f64>,
    fcr: DMatrix<f64>,
    fzc0: DMatrix<f64>,
    fzcr: DMatrix<f64>,
    m0_series: DVector<f64>,
    mv0_series: DVector<f64>,
    series_r: DVector<f64>,
    terminal_r: DVector<f64>,
    stage_caps: DVector<f64>,
    band: Option<DMatrix<f64>>,
}

impl VoltageCoupling {
    /// Frequency-dependent part of the source coupling,
    /// `C_VR(omega) = C_{V,R}(omega) + m(omega) CZ_R(omega) m_V(omega)^T`
    /// assembled from the shunt substitution `C_R <- 1/(i omega R)`.
    pub fn eval(&self, omega: f64) -> DVector<Complex64> {
        let n_coord = self.fcr.nrows();
        let m = self.fzc0.nrows();
        let jw = Complex64::new(0.0, omega);
        // C_{V,R}(omega) = (i w)^{-1} F_CR R^{-1} (F_{V,CR})^T
        let mut out = DVector::from_element(n_coord, Complex64::new(0.0, 0.0));
        for i in 0..n_coord {
            let mut acc = 0.0;
            for k in 0..self.fcr.ncols() {
                if self.terminal_r[k].is_finite() && self.terminal_r[k] > 0.0 {
                    acc += self.fcr[(i, k)] * self.f_vrow_cr[k] / self.terminal_r[k];
                }
            }
            out[i] = Complex64::new(acc, 0.0) / jw;
        }
        if m == 0 {
            return self.apply_band_c(out);
        }
        // Z_R = Z [I + F_ZCR R^{-1} F_ZCR^T Z]^{-1}
        let z = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                Complex64::new(self.series_r[i], 0.0)
            } else {
                Complex64::ZERO
            }
        });
        let mut shunt = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let mut acc = 0.0;
                for k in 0..self.fzcr.ncols() {
                    if self.terminal_r[k].is_finite() && self.terminal_r[k] > 0.0 {
                        acc += self.fzcr[(i, k)] * self.fzcr[(j, k)] / self.terminal_r[k];
                    }
                }
                shunt[(i, j)] = acc;
            }
        }
        let eye = DMatrix::<Complex64>::identity(m, m);
        let inner = &eye + shunt.map(|x| Complex64::new(x, 0.0)) * &z;
        let z_r = match inner.lu().solve(&eye) {
            Some(inv) => &z * inv,
            None => return self.apply_band_c(out),
        };
        // CZ_R = -(i w) Z_R [I + (i w) F_ZC0 C0 F_ZC0^T Z_R]^{-1}
        let cdiag = DMatrix::from_diagonal(&self.stage_caps);
        let fzcf = (&self.fzc0 * &cdiag * self.fzc0.transpose()).map(|x| Complex64::new(x, 0.0));
        let inner2 = &eye + (&fzcf * &z_r) * jw;
        let cz_r = match inner2.lu().solve(&eye) {
            Some(inv) => -(&z_r * inv) * jw,
            None => return self.apply_band_c(out),
        };
        // m(w) = m0 + (i w)^{-1} F_CR R^{-1} F_ZCR^T (per series column)
        let mut m_w = DMatrix::from_fn(n_coord, m, |i, j| {
            Complex64::new(self.m0_series[i * m + j], 0.0)
        });
        for i in 0..n_coord {
            for j in 0..m {
                let mut acc = 0.0;
                for k in 0..self.fcr.ncols() {
                    if self.terminal_r[k].is_finite() && self.terminal_r[k] > 0.0 {
                        acc += self.fcr[(i, k)] * self.fzcr[(j, k)] / self.terminal_r[k];
                    }
                }
                m_w[(i, j)] += Complex64::new(acc, 0.0) / jw;
            }
        }
        let mut mv_w = DVector::from_fn(m, |j, _| Complex64::new(self.mv0_series[j], 0.0));
        for j in 0..m {
            let mut acc = 0.0;
            for k in 0..self.fzcr.ncols() {
                if self.terminal_r[k].is_finite() && self.terminal_r[k] > 0.0 {
                    acc += self.f_vrow_cr[k] * self.fzcr[(j, k)] / self.terminal_r[k];
                }
            }
            mv_w[j] += Complex64::new(acc, 0.0) / jw;
        }
        out += &m_w * &cz_r * mv_w;
        self.apply_band_c(out)
    }

    fn apply_band_c(&self, v: DVector<Complex64>) -> DVector<Complex64> {
        match &self.band {
            Some(t) => t.map(|x| Complex64::new(x, 0.0)).transpose() * v,
            None => v,
        }
    }
}

/// Coupling matrices of a voltage source shunting `port`.
pub fn voltage_coupling(
    circuit: &MultiportBruneCircuit,
    loops: &EffectiveLoopMatrices,
    qm: &QuantizedModel,
    terminations: &[PortTermination],
    port: usize,
) -> Result<VoltageCoupling> {
    match terminations.get(port) {
        Some(PortTermination::VoltageSource { .. }) => {}
        _ => {
            return Err(Error::WrongTermination {
                port,
                expected: "voltage source",
            })
        }
    }
    let row =
        loops
            .source_ports
            .iter()
            .position(|&p| p == port)
            .ok_or(Error::WrongTermination {
                port,
                expected: "voltage source",
            })?;
    let m = loops.n_stage_caps;
    let n = loops.n_ports;
    let caps = crate::loops::stage_capacitances(circuit);
    let cdiag = DMatrix::from_diagonal(&caps);
    let fc0 = loops.f_c0();
    let f_vrow_c0 = loops.f_vc.view((row, 0), (1, m)).clone_owned();
    let c_v0_raw = (&fc0 * &cdiag * f_vrow_c0.transpose())
        .column(0)
        .clone_owned();
    let c_v0 = apply_band(qm, c_v0_raw);
    let fzc0 = loops.f_zc.view((0, 0), (m, m)).clone_owned();
    let fzcr = loops.f_zc.view((0, m), (m, n)).clone_owned();
    let m0 = &fc0 * &cdiag * fzc0.transpose();
    let mv0 = &f_vrow_c0 * &cdiag * fzc0.transpose();
    let n_coord = fc0.nrows();
    let mut m0_series = DVector::zeros(n_coord * m);
    for i in 0..n_coord {
        for j in 0..m {
            m0_series[i * m + j] = m0[(i, j)];
        }
    }
    Ok(VoltageCoupling {
        c_v0,
        f_vrow_cr: DVector::from_fn(n, |k, _| loops.f_vc[(row, m + k)]),
        fcr: loops.f_cr(),
        fzc0,
        fzcr,
        m0_series,
        mv0_series: DVector::from_fn(m, |j, _| mv0[(0, j)]),
        series_r: crate::loops::series_resistances(circuit),
        terminal_r: DVector::from_fn(n, |k, _| circuit.terminal_resistances[k]),
        stage_caps: caps,
        band: qm.band_transform.clone(),
    })
}

/// Numerically stable `coth`.
pub fn coth(x: f64) -> f64 {
    if x > 20.0 {
        1.0
    } else if x < 1e-8 {
        1.0 / x
    } else {
        1.0 / x.tanh()
    }
}

/// Relaxation-rate contribution of one bath in the harmonic approximation:
/// `1/T1 = (4/hbar) |<0| m.Phi |1>|^2 J(omega01) coth(hbar omega01 / 2 kB T)`
/// with `|<0| m.Phi |1>|^2 = (hbar / 2 omega_k) (m^T v_k)^2` for mode `k`.
pub fn t1_rate(
    bath: &BathSpec,
    modes: &NormalModes,
    omega01: f64,
    temperature: f64,
    mode_index: usize,
) -> Result<f64> {
    if omega01 <= 0.0 {
        return Err(Error::ZeroFrequency);
    }
    if mode_index >= modes.frequencies.len() {
        return Err(Error::IndexOutOfRange {
            index: mode_index,
            limit: modes.frequencies.len(),
        });
    }
    let w_k = modes.frequencies[mode_index];
    if w_k <= 0.0 {
        return Err(Error::ZeroFrequency);
    }
    let overlap = bath.coupling.dot(&modes.modes.column(mode_index));
    let elem2 = HBAR / (2.0 * w_k) * overlap * overlap;
    let thermal = if temperature <= 0.0 {
        1.0
    } else {
        coth(HBAR * omega01 / (2.0 * BOLTZMANN * temperature))
    };
    Ok(4.0 / HBAR * elem2 * bath.spectral.eval(omega01) * thermal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loops::{multiport_effective_loops, oneport_effective_loops};
    use crate::multiport::{Belevitch, MultiportStage, MultiportStageKind};
    use crate::oneport::{ExtractionFrequency, OnePortBruneCircuit, OnePortStageKind};
    use crate::quantize::{quantize_multiport, quantize_oneport};
    use crate::synthetic;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_junctions(n: usize, l_j: f64, c_j: f64) -> Vec<PortTermination> {
        vec![PortTermination::JosephsonJunction { l_j, c_j }; n]
    }

    fn two_port_one_stage(
        rng: &mut ChaCha8Rng,
    ) -> (
        MultiportBruneCircuit,
        [[f64; 2]; 2],
        [[f64; 2]; 2],
        f64,
        f64,
        f64,
        f64,
    ) {
        let t = [
            [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)],
            [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)],
        ];
        let u = [
            [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)],
            [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)],
        ];
        let n1 = rng.gen_range(0.4..2.0);
        let nu12 = rng.gen_range(-0.8..0.8);
        let c1 = 10f64.powf(rng.gen_range(-1.0..1.0));
        let r1 = rng.gen_range(0.01..1.0);
        let circuit = MultiportBruneCircuit {
            n_ports: 2,
            stages: vec![MultiportStage {
                transformer: Belevitch {
                    t: vec![vec![t[0][0], t[0][1]], vec![t[1][0], t[1][1]]],
                },
                resistance: r1,
                kind: MultiportStageKind::Regular {
                    turns_ratio: n1,
                    inductance: 10f64.powf(rng.gen_range(-1.0..1.0)),
                    capacitance: c1,
                    coupling: vec![nu12],
                },
                gyration: None,
                extraction_frequency: ExtractionFrequency::Infinite,
            }],
            terminal_transformer: Belevitch {
                t: vec![vec![u[0][0], u[0][1]], vec![u[1][0], u[1][1]]],
            },
            terminal_resistances: vec![rng.gen_range(1.0..100.0), rng.gen_range(1.0..100.0)],
        };
        (circuit, t, u, n1, nu12, c1, r1)
    }

    #[test]
    fn two_port_series_bath_displayed_formulas() {
        // worked-example: m1 = (t11, t21, 1)^T C1 and
        // J1 = r1 w^3 / (1 + r1^2 C1^2 w^2)
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (circuit, t, _, _, _, c1, r1) = two_port_one_stage(&mut rng);
            let terms = all_junctions(2, 0.5, 0.05);
            let loops = multiport_effective_loops(&circuit, &terms).unwrap();
            let qm = quantize_multiport(&circuit, &loops, &terms, false).unwrap();
            let bath = series_bath(&circuit, &loops, &qm, 0).unwrap();
            assert_relative_eq!(bath.coupling[0], t[0][0] * c1, epsilon = 1e-13 * c1);
            assert_relative_eq!(bath.coupling[1], t[1][0] * c1, epsilon = 1e-13 * c1);
            assert_relative_eq!(bath.coupling[2], c1, epsilon = 1e-13 * c1);
            for k in 1..12 {
                let w = 0.1 * 2f64.powi(k);
                let want = r1 * w.powi(3) / (1.0 + r1 * r1 * c1 * c1 * w * w);
                assert_relative_eq!(bath.spectral.eval(w), want, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn two_port_shunt_bath_displayed_formulas() {
        // worked-example m_R1 and m_R2 columns, J = w / R
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let (circuit, t, u, n1, nu12, _, _) = two_port_one_stage(&mut rng);
            let terms = all_junctions(2, 0.5, 0.05);
            let loops = multiport_effective_loops(&circuit, &terms).unwrap();
            let qm = quantize_multiport(&circuit, &loops, &terms, false).unwrap();
            let b1 = shunt_bath(&circuit, &loops, &qm, 0).unwrap();
            let want1 = [
                t[0][0] * u[0][0] + u[1][0] * (t[0][1] - t[0][0] * nu12),
                t[1][0] * u[0][0] + u[1][0] * (t[1][1] - t[1][0] * nu12),
                (1.0 - n1) * u[0][0] - u[1][0] * nu12,
            ];
            for i in 0..3 {
                assert_relative_eq!(b1.coupling[i], want1[i], epsilon = 1e-13);
            }
            let b2 = shunt_bath(&circuit, &loops, &qm, 1).unwrap();
            let want2 = [
                t[0][0] * u[0][1] + u[1][1] * (t[0][1] - t[0][0] * nu12),
                t[1][0] * u[0][1] + u[1][1] * (t[1][1] - t[1][0] * nu12),
                (1.0 - n1) * u[0][1] - u[1][1] * nu12,
            ];
            for i in 0..3 {
                assert_relative_eq!(b2.coupling[i], want2[i], epsilon = 1e-13);
            }
            let r = circuit.terminal_resistances[0];
            assert_relative_eq!(b1.spectral.eval(3.0), 3.0 / r, max_relative = 1e-14);
        }
    }

    fn oneport_fixture(rng: &mut ChaCha8Rng, max_stages: usize) -> OnePortBruneCircuit {
        let mut c = synthetic::random_oneport_circuit(rng, max_stages);
        for st in &mut c.stages {
            if let OnePortStageKind::Regular { turns_ratio, .. } = &mut st.kind {
                if (*turns_ratio - 1.0).abs() < 5e-2 {
                    *turns_ratio = 1.4;
                }
            }
        }
        c
    }

    #[test]
    fn oneport_terminal_coupling_is_unit_vector() {
        // after the band transform the last-resistor coupling collapses to
        // (0, ..., 0, 1)
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let circuit = oneport_fixture(&mut rng, 4);
            let loops = oneport_effective_loops(&circuit).unwrap();
            let qm = quantize_oneport(&circuit, &loops, (0.8, 0.3), 0.2, false).unwrap();
            let embedded = crate::loops::embed_oneport(&circuit);
            let bath = shunt_bath(&embedded, &loops, &qm, 0).unwrap();
            let dim = bath.coupling.len();
            for i in 0..dim - 1 {
                assert!(
                    bath.coupling[i].abs() < 1e-11,
                    "entry {i} = {}",
                    bath.coupling[i]
                );
            }
            assert_relative_eq!(bath.coupling[dim - 1].abs(), 1.0, max_relative = 1e-11);
            assert_relative_eq!(
                bath.spectral.eval(2.0),
                2.0 / circuit.terminal_resistance,
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn oneport_series_coupling_matches_closed_form() {
        // all-regular one-port: the band-transformed coupling of resistor j
        // has entries (-1)^j n_j C_j/(1-n_j) etc. and the spectral density
        // uses the tail sum of the capacitances
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..20 {
            let mut circuit = oneport_fixture(&mut rng, 4);
            circuit.stages.iter_mut().for_each(|st| {
                if let OnePortStageKind::CapacitiveDegenerate { capacitance } = st.kind {
                    st.kind = OnePortStageKind::Regular {
                        turns_ratio: 1.7,
                        inductance: 0.4,
                        capacitance,
                    };
                }
            });
            let m = circuit.stages.len();
            let loops = oneport_effective_loops(&circuit).unwrap();
            let qm = quantize_oneport(&circuit, &loops, (0.8, 0.3), 0.2, false).unwrap();
            let embedded = crate::loops::embed_oneport(&circuit);
            let params: Vec<(f64, f64)> = circuit
                .stages
                .iter()
                .map(|st| match st.kind {
                    OnePortStageKind::Regular {
                        turns_ratio,
                        capacitance,
                        ..
                    } => (turns_ratio, capacitance),
                    _ => unreachable!(),
                })
                .collect();
            for j in 0..m {
                let bath = series_bath(&embedded, &loops, &qm, j).unwrap();
                // closed-form tail expression (paper's stacked coupling)
                let mut want = DVector::zeros(m + 1);
                let sgn = |k: usize| if (k + 1) % 2 == 0 { 1.0 } else { -1.0 };
                let (nj, cj) = params[j];
                want[j] = sgn(j) * nj * cj / (1.0 - nj);
                for i in j + 1..m {
                    let (ni, ci) = params[i];
                    let (nim1, cim1) = params[i - 1];
                    want[i] = sgn(i) * ni * ci / (1.0 - ni) + sgn(i - 1) * cim1 / (1.0 - nim1);
                }
                let (nm, cm) = params[m - 1];
                want[m] = sgn(m - 1) * cm / (1.0 - nm);
                for i in 0..=m {
                    if i < j {
                        assert!(bath.coupling[i].abs() < 1e-10);
                    } else {
                        assert_relative_eq!(
                            bath.coupling[i],
                            want[i],
                            max_relative = 1e-9,
                            epsilon = 1e-12
                        );
                    }
                }
                // spectral density uses the tail sum C_j + ... + C_M
                let tail: f64 = params[j..].iter().map(|(_, c)| c).sum();
                match bath.spectral {
                    SpectralDensity::SeriesRc {
                        effective_capacitance,
                        ..
                    } => {
                        assert_relative_eq!(effective_capacitance, tail, max_relative = 1e-12)
                    }
                    _ => panic!("series bath must carry an RC spectrum"),
                }
            }
        }
    }

    #[test]
    fn spectral_density_nonnegative_and_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let r = 10f64.powf(rng.gen_range(-3.0..3.0));
            let c = 10f64.powf(rng.gen_range(-3.0..3.0));
            let w = 10f64.powf(rng.gen_range(-2.0..4.0));
            assert!(
                SpectralDensity::SeriesRc {
                    resistance: r,
                    effective_capacitance: c
                }
                .eval(w)
                    >= 0.0
            );
            assert!(SpectralDensity::Ohmic { resistance: r }.eval(w) >= 0.0);
        }
        // open- and short-circuit limits of the port-shunt spectrum
        let j_small = SpectralDensity::SeriesRc {
            resistance: 1e-9,
            effective_capacitance: 1.0,
        }
        .eval(1.0);
        assert!(j_small < 1e-8);
        let j_big = SpectralDensity::SeriesRc {
            resistance: 1e12,
            effective_capacitance: 1.0,
        }
        .eval(1.0);
        assert!(j_big < 1e-8);
        // r = 0 kills the series contribution entirely
        assert_eq!(
            SpectralDensity::SeriesRc {
                resistance: 0.0,
                effective_capacitance: 1.0
            }
            .eval(5.0),
            0.0
        );
    }

    #[test]
    fn coupling_rescale_split() {
        // scaling all stage capacitances by alpha scales series couplings by
        // alpha and leaves shunt couplings unchanged
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (circuit, ..) = two_port_one_stage(&mut rng);
        let mut scaled = circuit.clone();
        let alpha = 3.7;
        for st in &mut scaled.stages {
            if let MultiportStageKind::Regular { capacitance, .. } = &mut st.kind {
                *capacitance *= alpha;
            }
        }
        let terms = all_junctions(2, 0.5, 0.05);
        let loops = multiport_effective_loops(&circuit, &terms).unwrap();
        let loops2 = multiport_effective_loops(&scaled, &terms).unwrap();
        let qm = quantize_multiport(&circuit, &loops, &terms, false).unwrap();
        let qm2 = quantize_multiport(&scaled, &loops2, &terms, false).unwrap();
        let s1 = series_bath(&circuit, &loops, &qm, 0).unwrap();
        let s2 = series_bath(&scaled, &loops2, &qm2, 0).unwrap();
        for i in 0..3 {
            assert_relative_eq!(s2.coupling[i], alpha * s1.coupling[i], max_relative = 1e-12);
        }
        let h1 = shunt_bath(&circuit, &loops, &qm, 0).unwrap();
        let h2 = shunt_bath(&scaled, &loops2, &qm2, 0).unwrap();
        for i in 0..3 {
            assert_relative_eq!(h2.coupling[i], h1.coupling[i], max_relative = 1e-13);
        }
    }

    #[test]
    fn t1_selection_rule_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (circuit, ..) = two_port_one_stage(&mut rng);
        let terms = all_junctions(2, 0.5, 0.05);
        let loops = multiport_effective_loops(&circuit, &terms).unwrap();
        let qm = quantize_multiport(&circuit, &loops, &terms, false).unwrap();
        let modes = qm.normal_modes().unwrap();
        let mut bath = shunt_bath(&circuit, &loops, &qm, 0).unwrap();
        let w01 = modes.frequencies[0];
        // orthogonal coupling gives zero rate
        let v = modes.modes.column(1).clone_owned();
        let c0v = &qm.c0 * v;
        bath.coupling = c0v.clone(); // C0-orthogonal to mode 0
        let rate = t1_rate(&bath, &modes, w01, 0.02, 0).unwrap();
        assert!(rate.abs() < 1e-20 * c0v.norm().powi(2));
        // doubling R halves the ohmic rate
        let b1 = shunt_bath(&circuit, &loops, &qm, 0).unwrap();
        let mut b2 = b1.clone();
        if let SpectralDensity::Ohmic { resistance } = &mut b2.spectral {
            *resistance *= 2.0;
        }
        let r1 = t1_rate(&b1, &modes, w01, 0.02, 0).unwrap();
        let r2 = t1_rate(&b2, &modes, w01, 0.02, 0).unwrap();
        assert_relative_eq!(r1, 2.0 * r2, max_relative = 1e-12);
    }

    #[test]
    fn t1_thermal_factor() {
        // at hbar w = 2 kB T the enhancement is coth(1); at T -> 0 it is 1
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (circuit, ..) = two_port_one_stage(&mut rng);
        let terms = all_junctions(2, 0.5, 0.05);
        let loops = multiport_effective_loops(&circuit, &terms).unwrap();
        let qm = quantize_multiport(&circuit, &loops, &terms, false).unwrap();
        let modes = qm.normal_modes().unwrap();
        let bath = shunt_bath(&circuit, &loops, &qm, 0).unwrap();
        let w01 = modes.frequencies[0];
        let t_match = HBAR * w01 / (2.0 * BOLTZMANN);
        let cold = t1_rate(&bath, &modes, w01, 0.0, 0).unwrap();
        let warm = t1_rate(&bath, &modes, w01, t_match, 0).unwrap();
        assert_relative_eq!(warm / cold, coth(1.0), max_relative = 1e-12);
        assert_relative_eq!(coth(1.0), 1.3130352854993312, max_relative = 1e-12);
    }

    #[test]
    fn rates_are_additive_and_order_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (circuit, ..) = two_port_one_stage(&mut rng);
        let terms = all_junctions(2, 0.5, 0.05);
        let loops = multiport_effective_loops(&circuit, &terms).unwrap();
        let qm = quantize_multiport(&circuit, &loops, &terms, false).unwrap();
        let modes = qm.normal_modes().unwrap();
        let baths = all_baths(&circuit, &loops, &qm, &terms).unwrap();
        let w01 = modes.frequencies[0];
        let rates: Vec<f64> = baths
            .iter()
            .map(|b| t1_rate(b, &modes, w01, 0.02, 0).unwrap())
            .collect();
        let total: f64 = rates.iter().sum();
        let total_rev: f64 = rates.iter().rev().sum();
        assert_relative_eq!(total, total_rev, max_relative = 1e-15);
        assert!(total >= 0.0);
    }

    #[test]
    fn voltage_coupling_static_and_lossless_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (mut circuit, t, _, _, _, c1, _) = two_port_one_stage(&mut rng);
        // port 2 driven by a source; lossless limit: series r = 0, shunts open
        circuit.stages[0].resistance = 0.0;
        circuit.terminal_resistances = vec![f64::INFINITY, f64::INFINITY];
        let terms = vec![
            PortTermination::JosephsonJunction {
                l_j: 0.5,
                c_j: 0.05,
            },
            PortTermination::VoltageSource { r_series: 50.0 },
        ];
        let loops = multiport_effective_loops(&circuit, &terms).unwrap();
        let qm = quantize_multiport(&circuit, &loops, &terms, false).unwrap();
        let vc = voltage_coupling(&circuit, &loops, &qm, &terms, 1).unwrap();
        // static coupling: F_C0 C0 (F_V row)^T with F_V row = (t21, ...)
        // pattern of port 2; coordinates are (junction 1, inductor)
        let f_v_c0 = loops.f_vc[(0, 0)];
        assert_relative_eq!(vc.c_v0[0], t[0][0] * c1 * f_v_c0, epsilon = 1e-12);
        assert_relative_eq!(vc.c_v0[1], 1.0 * c1 * f_v_c0, epsilon = 1e-12);
        // lossless limit: the frequency-dependent part vanishes
        let cvr = vc.eval(2.0);
        assert!(cvr.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn correction_magnitude_diagnostic() {
        // the dropped frequency-dependent coupling correction decays as 1/w
        // and vanishes for open terminal resistors
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let (circuit, ..) = two_port_one_stage(&mut rng);
        let terms = all_junctions(2, 0.5, 0.05);
        let loops = multiport_effective_loops(&circuit, &terms).unwrap();
        let m1 = series_coupling_correction_magnitude(&circuit, &loops, 0, 1.0).unwrap();
        let m2 = series_coupling_correction_magnitude(&circuit, &loops, 0, 2.0).unwrap();
        assert!(m1.is_finite() && m1 >= 0.0);
        assert_relative_eq!(m2, m1 / 2.0, max_relative = 1e-12);
        let mut open = circuit.clone();
        open.terminal_resistances = vec![f64::INFINITY, f64::INFINITY];
        let m3 = series_coupling_correction_magnitude(&open, &loops, 0, 1.0).unwrap();
        assert_eq!(m3, 0.0);
        assert!(series_coupling_correction_magnitude(&circuit, &loops, 9, 1.0).is_err());
    }

    #[test]
    fn wrong_termination_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let (circuit, ..) = two_port_one_stage(&mut rng);
        let terms = all_junctions(2, 0.5, 0.05);
        let loops = multiport_effective_loops(&circuit, &terms).unwrap();
        let qm = quantize_multiport(&circuit, &loops, &terms, false).unwrap();
        assert!(matches!(
            port_shunt_bath(&circuit, &loops, &qm, &terms, 0),
            Err(Error::WrongTermination { .. })
        ));
        assert!(matches!(
            series_bath(&circuit, &loops, &qm, 5),
            Err(Error::IndexOutOfRange { .. })
        ));
    }
}
