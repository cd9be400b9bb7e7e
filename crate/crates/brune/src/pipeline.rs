//! End-to-end driver: sampled data -> fit -> positive-real check ->
//! synthesis -> quantization -> relaxation report.

use nalgebra::DMatrix;

use crate::dissipation::{all_baths, t1_rate, BathKind, SpectralDensity};
use crate::error::{Error, Result};
use crate::fitting::{enforce_passivity, fit_error, vector_fit, FitOptions};
use crate::io::{circuit_report, BathRow, QuantizationReport, RelaxationReport, Report};
use crate::loops::{multiport_effective_loops, PortTermination};
use crate::model::{check_positive_real, FrequencySamples, PrReport, PrVerdict, StateSpaceModel};
use crate::multiport::{recompose_multiport, synthesize_multiport, MultiportBruneCircuit};
use crate::oneport::SynthesisOptions;
use crate::quantize::{quantize_multiport, Coordinate, NormalModes, QuantizedModel};

/// Configuration of the full pipeline.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub n_poles: usize,
    pub fit: FitOptions,
    pub synthesis: SynthesisOptions,
    /// Residue rank tolerance of the compacting step.
    pub rank_tolerance: f64,
    /// Enforce passivity on the fitted model before realization.
    pub enforce_passivity: bool,
    pub passivity_iterations: usize,
    /// Port terminations; when absent, port 1 carries a junction and all
    /// other ports 50-ohm resistors.
    pub terminations: Option<Vec<PortTermination>>,
    /// Default junction parameters for the implicit termination.
    pub junction: (f64, f64),
    /// Bath temperature (K).
    pub temperature: f64,
    /// Qubit mode index; picked by junction participation when absent.
    pub mode_index: Option<usize>,
    /// PR-check tolerance override.
    pub pr_tolerance: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_poles: 8,
            fit: FitOptions::default(),
            synthesis: SynthesisOptions::default(),
            rank_tolerance: 1e-8,
            enforce_passivity: true,
            passivity_iterations: 30,
            terminations: None,
            junction: (1e-8, 1e-15),
            temperature: 0.020,
            mode_index: None,
            pr_tolerance: None,
        }
    }
}

/// Everything the round-trip pipeline produces.
pub struct PipelineOutcome {
    pub fitted: crate::model::PoleResidueModel,
    pub model: StateSpaceModel,
    pub pr_report: PrReport,
    pub circuit: MultiportBruneCircuit,
    pub recomposed: StateSpaceModel,
    /// Max relative error of the recomposed circuit against the samples.
    pub roundtrip_max_rel: f64,
    /// Max relative error of the fit against the samples.
    pub fit_max_rel: f64,
    pub qm: Option<QuantizedModel>,
    pub modes: Option<NormalModes>,
    pub report: Report,
    pub warnings: Vec<String>,
}

fn default_terminations(n_ports: usize, junction: (f64, f64)) -> Vec<PortTermination> {
    (0..n_ports)
        .map(|p| {
            if p == 0 {
                PortTermination::JosephsonJunction {
                    l_j: junction.0,
                    c_j: junction.1,
                }
            } else {
                PortTermination::Resistor { r: 50.0 }
            }
        })
        .collect()
}

/// Qubit mode by junction participation: the mode with the largest summed
/// squared amplitude on the junction coordinates.
pub fn pick_qubit_mode(qm: &QuantizedModel, modes: &NormalModes) -> usize {
    let junction_coords: Vec<usize> = qm.junctions.iter().map(|j| j.coordinate).collect();
    let mut best = 0;
    let mut best_score = -1.0;
    for k in 0..modes.frequencies.len() {
        if modes.frequencies[k] <= 0.0 {
            continue;
        }
        let v = modes.modes.column(k);
        let total: f64 = v.iter().map(|x| x * x).sum();
        let junction: f64 = junction_coords.iter().map(|&i| v[i] * v[i]).sum();
        let score = if total > 0.0 { junction / total } else { 0.0 };
        if score > best_score {
            best_score = score;
            best = k;
        }
    }
    best
}

/// Fit samples to a stable pole-residue model, optionally enforce passivity,
/// and realize the result in state space.
pub fn fit_to_state_space(
    samples: &FrequencySamples,
    config: &PipelineConfig,
) -> Result<(crate::model::PoleResidueModel, StateSpaceModel, Vec<String>)> {
    let mut warnings = Vec::new();
    let (mut pr, info) = vector_fit(samples, config.n_poles, &config.fit)?;
    warnings.extend(info.warnings);
    if config.enforce_passivity && !pr.poles.is_empty() {
        let lo = samples
            .omegas
            .iter()
            .copied()
            .find(|w| *w > 0.0)
            .unwrap_or(1.0)
            / 10.0;
        let hi = samples.omegas.last().copied().unwrap_or(1.0) * 10.0;
        let grid: Vec<f64> = (0..800)
            .map(|i| lo * (hi / lo).powf(i as f64 / 799.0))
            .collect();
        let (fixed, norm) = enforce_passivity(&pr, &grid, config.passivity_iterations)?;
        if norm > 0.0 {
            warnings.push(format!(
                "passivity enforcement perturbed the fit by {norm:.3e}"
            ));
        }
        pr = fixed;
    }
    let model = pr.to_state_space(config.rank_tolerance)?;
    Ok((pr, model, warnings))
}

/// Full round trip over impedance samples: fit, PR check, synthesis,
/// recomposition error, quantization and relaxation table.
pub fn run_roundtrip(
    samples: &FrequencySamples,
    config: &PipelineConfig,
) -> Result<PipelineOutcome> {
    let (fitted, model, mut warnings) = fit_to_state_space(samples, config)?;
    let fit_max_rel = fit_error(samples, &fitted)?.max_rel;
    let pr_report = check_positive_real(&model, None, config.pr_tolerance);
    if pr_report.verdict == PrVerdict::NotPr {
        return Err(Error::NotPr(format!(
            "fitted model failed the grid PR check (min eig {:.3e} at {:.3e} rad/s)",
            pr_report.min_hermitian_eig, pr_report.min_frequency
        )));
    }
    let synth = synthesize_multiport(&model, &config.synthesis)?;
    warnings.extend(synth.warnings.iter().cloned());
    let circuit = synth.circuit;
    let recomposed = recompose_multiport(&circuit)?;
    let roundtrip = fit_error(samples, &recomposed)?;

    let mut report = circuit_report(&circuit);
    let terminations = config
        .terminations
        .clone()
        .unwrap_or_else(|| default_terminations(circuit.n_ports, config.junction));
    let mut qm_opt = None;
    let mut modes_opt = None;
    if circuit.has_gyrators() {
        warnings.push("circuit contains gyrators; quantization skipped".into());
    } else {
        let loops = multiport_effective_loops(&circuit, &terminations)?;
        if loops.junction_ports.is_empty() {
            warnings.push("no junction-terminated ports; relaxation table skipped".into());
        } else {
            let qm = quantize_multiport(&circuit, &loops, &terminations, false)?;
            let modes = qm.normal_modes()?;
            let mode_index = config
                .mode_index
                .unwrap_or_else(|| pick_qubit_mode(&qm, &modes));
            let omega01 = modes.frequencies[mode_index];
            let baths = all_baths(&circuit, &loops, &qm, &terminations)?;
            let mut rows = Vec::new();
            let mut total = 0.0;
            for bath in &baths {
                let rate = if omega01 > 0.0 {
                    t1_rate(bath, &modes, omega01, config.temperature, mode_index)?
                } else {
                    0.0
                };
                total += rate;
                let (kind, r) = match (&bath.kind, &bath.spectral) {
                    (
                        BathKind::SeriesResistor { stage },
                        SpectralDensity::SeriesRc { resistance, .. },
                    ) => (format!("series r{}", stage + 1), *resistance),
                    (BathKind::TerminalShunt { index }, SpectralDensity::Ohmic { resistance }) => {
                        (format!("terminal R{}", index + 1), *resistance)
                    }
                    (
                        BathKind::PortShunt { port },
                        SpectralDensity::SeriesRc { resistance, .. },
                    ) => (format!("port {} shunt", port + 1), *resistance),
                    (
                        BathKind::SourceSeries { port },
                        SpectralDensity::SeriesRc { resistance, .. },
                    ) => (format!("port {} source series", port + 1), *resistance),
                    (k, s) => (
                        format!("{k:?}"),
                        match s {
                            SpectralDensity::SeriesRc { resistance, .. } => *resistance,
                            SpectralDensity::Ohmic { resistance } => *resistance,
                        },
                    ),
                };
                rows.push(BathRow {
                    kind,
                    resistance_ohm: r,
                    j_at_omega01: bath.spectral.eval(omega01),
                    rate_per_s: rate,
                });
            }
            report.quantization = Some(QuantizationReport {
                coordinates: qm
                    .coordinates
                    .iter()
                    .map(|c| match c {
                        Coordinate::JunctionPort(p) => format!("junction port {}", p + 1),
                        Coordinate::StageInductor(s) => format!("inductor stage {}", s + 1),
                    })
                    .collect(),
                c0_farad: matrix_rows(&qm.c0),
                m0_per_henry: matrix_rows(&qm.m0),
                mode_frequencies_rad_s: modes.frequencies.iter().copied().collect(),
            });
            report.relaxation = Some(RelaxationReport {
                approximation: "harmonic".into(),
                mode_index,
                omega01_rad_s: omega01,
                temperature_k: config.temperature,
                baths: rows,
                total_rate_per_s: total,
                t1_s: if total > 0.0 {
                    1.0 / total
                } else {
                    f64::INFINITY
                },
            });
            qm_opt = Some(qm);
            modes_opt = Some(modes);
        }
    }
    report.warnings = warnings.clone();
    Ok(PipelineOutcome {
        fitted,
        model,
        pr_report,
        circuit,
        recomposed,
        roundtrip_max_rel: roundtrip.max_rel,
        fit_max_rel,
        qm: qm_opt,
        modes: modes_opt,
        report,
        warnings,
    })
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Two-column plot data (omega, value), one line per point.
pub fn plot_series(pairs: &[(f64, f64)]) -> String {
    let mut out = String::new();
    for (x, y) in pairs {
        out.push_str(&format!("{x} {y}\n"));
    }
    out
}

/// Minimum Hermitian-part eigenvalue over a log grid, for plot output.
pub fn min_eig_curve(model: &StateSpaceModel, n: usize) -> Vec<(f64, f64)> {
    let grid = crate::grid::GridSpec::around_eigenvalues(&model.eigenvalues(), 100.0, n.max(2));
    grid.points()
        .into_iter()
        .filter_map(|w| {
            model
                .hermitian_part(w)
                .ok()
                .map(|h| (w, nalgebra::SymmetricEigen::new(h).eigenvalues.min()))
        })
        .collect()
}

/// Per-frequency fit error curve for plot output.
pub fn fit_error_curve(
    samples: &FrequencySamples,
    model: &StateSpaceModel,
) -> Result<Vec<(f64, f64)>> {
    let report = fit_error(samples, model)?;
    Ok(samples
        .omegas
        .iter()
        .copied()
        .zip(report.per_frequency)
        .collect())
}
