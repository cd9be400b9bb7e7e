//! Command-line driver: `fit`, `check-pr`, `synth`, `quantize`, `t1` and
//! `roundtrip` subcommands over Touchstone / Z-CSV inputs.
//!
//! Exit codes: 0 on success, 1 on validation problems (bad files, wrong
//! dimensions, a failed PR verdict), 2 on numerical failures inside the
//! algorithms.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use brune::dissipation::{all_baths, t1_rate};
use brune::error::Error;
use brune::fitting::FitOptions;
use brune::io;
use brune::loops::{multiport_effective_loops, PortTermination};
use brune::model::{check_positive_real, FrequencySamples, PrVerdict};
use brune::multiport::{recompose_multiport, synthesize_multiport};
use brune::oneport::SynthesisOptions;
use brune::pipeline::{self, PipelineConfig};
use brune::quantize::quantize_multiport;

#[derive(Parser)]
#[command(
    name = "brune",
    about = "Brune synthesis and quantization of multiport impedance data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataFormat {
    Touchstone,
    Zcsv,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Input data file (.sNp or Z-CSV).
    input: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<DataFormat>,
    /// Port count (Touchstone only; inferred from the .sNp extension).
    #[arg(long)]
    ports: Option<usize>,
}

#[derive(Args, Clone)]
struct FitArgs {
    /// Number of fitted poles.
    #[arg(long, default_value_t = 8)]
    npoles: usize,
    /// Pole-relocation iterations.
    #[arg(long, default_value_t = 12)]
    iterations: usize,
    /// Fit the slope (residue-at-infinity) term.
    #[arg(long)]
    fit_e: bool,
    /// Skip the passivity-enforcement pass.
    #[arg(long)]
    no_passivity: bool,
}

#[derive(Args, Clone)]
struct QuantizeArgs {
    /// Per-port terminations: comma-separated `jj[:L[:C]]`, `res:R`,
    /// `vsrc:R`. Default: junction on port 1, 50-ohm resistors elsewhere.
    #[arg(long)]
    terminations: Option<String>,
    /// Default junction inductance (H).
    #[arg(long, default_value_t = 1e-8)]
    lj: f64,
    /// Default junction capacitance (F).
    #[arg(long, default_value_t = 1e-15)]
    cj: f64,
    /// Bath temperature in millikelvin.
    #[arg(long, default_value_t = 20.0)]
    temp_mk: f64,
    /// Qubit mode index (defaults to the mode with the largest junction
    /// participation).
    #[arg(long)]
    mode: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit sampled impedance data to a stable pole-residue model.
    Fit {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        fit: FitArgs,
        /// Output model file (JSON).
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Grid-based positive-real check of a model file.
    CheckPr {
        /// Model file produced by `fit`.
        model: PathBuf,
        /// Grid points.
        #[arg(long, default_value_t = 2000)]
        grid: usize,
        /// PR margin tolerance (ohms).
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Synthesize the Brune circuit of a model file.
    Synth {
        model: PathBuf,
        /// Output directory for the netlist and report.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Structural cross-check tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Quantize a synthesized circuit (netlist input).
    Quantize {
        netlist: PathBuf,
        #[command(flatten)]
        quant: QuantizeArgs,
        #[arg(long, default_value = "quantize.json")]
        out: PathBuf,
    },
    /// Relaxation-rate table of a synthesized circuit (netlist input).
    T1 {
        netlist: PathBuf,
        #[command(flatten)]
        quant: QuantizeArgs,
        #[arg(long, default_value = "t1.json")]
        out: PathBuf,
    },
    /// Full pipeline: fit, PR check, synthesis, recomposition error,
    /// quantization and relaxation report.
    Roundtrip {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        quant: QuantizeArgs,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Emit two-column plot-data files (spectra, fit error).
        #[arg(long)]
        plot: bool,
    },
}

fn exit_code_of(err: &Error) -> i32 {
    match err {
        Error::Io(_)
        | Error::ParseError { .. }
        | Error::UnsupportedFormat(_)
        | Error::DimensionMismatch(_)
        | Error::EmptyInput(_)
        | Error::WrongTermination { .. }
        | Error::IndexOutOfRange { .. } => 1,
        _ => 2,
    }
}

fn load_samples(args: &InputArgs) -> Result<FrequencySamples, Error> {
    let text = std::fs::read_to_string(&args.input)?;
    let format =
        args.format
            .unwrap_or_else(|| match args.input.extension().and_then(|e| e.to_str()) {
                Some(ext)
                    if ext.eq_ignore_ascii_case("csv") || ext.eq_ignore_ascii_case("zcsv") =>
                {
                    DataFormat::Zcsv
                }
                _ => DataFormat::Touchstone,
            });
    match format {
        DataFormat::Zcsv => io::read_zcsv(&text),
        DataFormat::Touchstone => {
            let ports = args
                .ports
                .or_else(|| io::ports_from_extension(&args.input))
                .ok_or_else(|| {
                    Error::UnsupportedFormat("cannot infer the port count; pass --ports".into())
                })?;
            let data = io::parse_touchstone(&text, ports)?;
            io::touchstone_to_impedance(&data)
        }
    }
}

fn parse_terminations(
    spec: Option<&str>,
    n_ports: usize,
    lj: f64,
    cj: f64,
) -> Result<Vec<PortTermination>, Error> {
    match spec {
        None => Ok((0..n_ports)
            .map(|p| {
                if p == 0 {
                    PortTermination::JosephsonJunction { l_j: lj, c_j: cj }
                } else {
                    PortTermination::Resistor { r: 50.0 }
                }
            })
            .collect()),
        Some(spec) => {
            let parts: Vec<&str> = spec.split(',').collect();
            if parts.len() != n_ports {
                return Err(Error::DimensionMismatch(format!(
                    "{} terminations for {n_ports} ports",
                    parts.len()
                )));
            }
            parts
                .iter()
                .map(|p| {
                    let fields: Vec<&str> = p.trim().split(':').collect();
                    let num = |s: &str| -> Result<f64, Error> {
                        s.parse().map_err(|_| Error::ParseError {
                            line: 0,
                            message: format!("bad termination value {s}"),
                        })
                    };
                    match fields[0] {
                        "jj" => Ok(PortTermination::JosephsonJunction {
                            l_j: fields.get(1).map(|s| num(s)).transpose()?.unwrap_or(lj),
                            c_j: fields.get(2).map(|s| num(s)).transpose()?.unwrap_or(cj),
                        }),
                        "res" => Ok(PortTermination::Resistor {
                            r: fields.get(1).map(|s| num(s)).transpose()?.unwrap_or(50.0),
                        }),
                        "vsrc" => Ok(PortTermination::VoltageSource {
                            r_series: fields.get(1).map(|s| num(s)).transpose()?.unwrap_or(50.0),
                        }),
                        other => Err(Error::ParseError {
                            line: 0,
                            message: format!("unknown termination kind {other}"),
                        }),
                    }
                })
                .collect()
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn run_command(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Fit { input, fit, out } => {
            let samples = load_samples(&input)?;
            let config = PipelineConfig {
                n_poles: fit.npoles,
                fit: FitOptions {
                    n_iterations: fit.iterations,
                    fit_e: fit.fit_e,
                    ..FitOptions::default()
                },
                enforce_passivity: !fit.no_passivity,
                ..Default::default()
            };
            let (pr, ss, warnings) = pipeline::fit_to_state_space(&samples, &config)?;
            let err = brune::fitting::fit_error(&samples, &pr)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            let file = io::ModelFile::new(Some(&pr), &ss);
            write_text(&out, &serde_json::to_string_pretty(&file).unwrap())?;
            println!(
                "fit: {} poles, {} states, rms {:.3e}, max rel {:.3e} -> {}",
                pr.poles.len(),
                ss.n_states(),
                err.rms,
                err.max_rel,
                out.display()
            );
            Ok(0)
        }
        Command::CheckPr { model, grid, tol } => {
            let text = std::fs::read_to_string(&model)?;
            let file: io::ModelFile =
                serde_json::from_str(&text).map_err(|e| Error::ParseError {
                    line: 0,
                    message: format!("{e}"),
                })?;
            let ss = file.state_space()?;
            let spec = brune::GridSpec::around_eigenvalues(&ss.eigenvalues(), 100.0, grid.max(2));
            let report = check_positive_real(&ss, Some(&spec), tol);
            println!(
                "verdict: {:?} (stable: {}, min Hermitian eig {:.6e} at {:.6e} rad/s, \
                 min eig D+D^T {:.6e}, tolerance {:.3e})",
                report.verdict,
                report.is_stable,
                report.min_hermitian_eig,
                report.min_frequency,
                report.d_plus_dt_min_eig,
                report.tolerance
            );
            Ok(if report.verdict == PrVerdict::NotPr {
                1
            } else {
                0
            })
        }
        Command::Synth { model, out, tol } => {
            let text = std::fs::read_to_string(&model)?;
            let file: io::ModelFile =
                serde_json::from_str(&text).map_err(|e| Error::ParseError {
                    line: 0,
                    message: format!("{e}"),
                })?;
            let ss = file.state_space()?;
            let opts = SynthesisOptions {
                structure_tol: tol.unwrap_or(1e-6),
                ..Default::default()
            };
            let synth = synthesize_multiport(&ss, &opts)?;
            for w in &synth.warnings {
                eprintln!("warning: {w}");
            }
            let netlist = io::export_netlist(&synth.circuit);
            let report = io::circuit_report(&synth.circuit);
            write_text(&out.join("netlist.cir"), &netlist)?;
            write_text(
                &out.join("report.json"),
                &serde_json::to_string_pretty(&report).unwrap(),
            )?;
            let recomposed = recompose_multiport(&synth.circuit)?;
            let _ = recomposed;
            println!(
                "synthesized {} stages ({} regular, {} degenerate) over {} ports -> {}",
                synth.circuit.stages.len(),
                synth.circuit.n_regular(),
                synth.circuit.n_degenerate(),
                synth.circuit.n_ports,
                out.display()
            );
            Ok(0)
        }
        Command::Quantize {
            netlist,
            quant,
            out,
        } => {
            let circuit = io::parse_netlist(&std::fs::read_to_string(&netlist)?)?;
            let terms = parse_terminations(
                quant.terminations.as_deref(),
                circuit.n_ports,
                quant.lj,
                quant.cj,
            )?;
            let loops = multiport_effective_loops(&circuit, &terms)?;
            let qm = quantize_multiport(&circuit, &loops, &terms, false)?;
            let modes = qm.normal_modes()?;
            let mut report = io::circuit_report(&circuit);
            report.quantization = Some(io::QuantizationReport {
                coordinates: qm.coordinates.iter().map(|c| format!("{c:?}")).collect(),
                c0_farad: qm
                    .c0
                    .row_iter()
                    .map(|r| r.iter().copied().collect())
                    .collect(),
                m0_per_henry: qm
                    .m0
                    .row_iter()
                    .map(|r| r.iter().copied().collect())
                    .collect(),
                mode_frequencies_rad_s: modes.frequencies.iter().copied().collect(),
            });
            write_text(&out, &serde_json::to_string_pretty(&report).unwrap())?;
            println!(
                "quantized: {} coordinates, lowest modes (rad/s): {}",
                qm.c0.nrows(),
                modes
                    .frequencies
                    .iter()
                    .take(4)
                    .map(|w| format!("{w:.4e}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            Ok(0)
        }
        Command::T1 {
            netlist,
            quant,
            out,
        } => {
            let circuit = io::parse_netlist(&std::fs::read_to_string(&netlist)?)?;
            let terms = parse_terminations(
                quant.terminations.as_deref(),
                circuit.n_ports,
                quant.lj,
                quant.cj,
            )?;
            let loops = multiport_effective_loops(&circuit, &terms)?;
            let qm = quantize_multiport(&circuit, &loops, &terms, false)?;
            let modes = qm.normal_modes()?;
            let mode = quant
                .mode
                .unwrap_or_else(|| pipeline::pick_qubit_mode(&qm, &modes));
            let omega01 = modes.frequencies[mode];
            let temperature = quant.temp_mk * 1e-3;
            let baths = all_baths(&circuit, &loops, &qm, &terms)?;
            let mut rows = Vec::new();
            let mut total = 0.0;
            for bath in &baths {
                let rate = t1_rate(bath, &modes, omega01, temperature, mode)?;
                total += rate;
                rows.push(io::BathRow {
                    kind: format!("{:?}", bath.kind),
                    resistance_ohm: match bath.spectral {
                        brune::dissipation::SpectralDensity::SeriesRc { resistance, .. } => {
                            resistance
                        }
                        brune::dissipation::SpectralDensity::Ohmic { resistance } => resistance,
                    },
                    j_at_omega01: bath.spectral.eval(omega01),
                    rate_per_s: rate,
                });
            }
            let mut report = io::circuit_report(&circuit);
            report.relaxation = Some(io::RelaxationReport {
                approximation: "harmonic".into(),
                mode_index: mode,
                omega01_rad_s: omega01,
                temperature_k: temperature,
                baths: rows,
                total_rate_per_s: total,
                t1_s: if total > 0.0 {
                    1.0 / total
                } else {
                    f64::INFINITY
                },
            });
            write_text(&out, &serde_json::to_string_pretty(&report).unwrap())?;
            println!(
                "mode {mode} at {omega01:.4e} rad/s: total rate {total:.4e} 1/s, \
                 T1 = {:.4e} s (harmonic approximation)",
                if total > 0.0 {
                    1.0 / total
                } else {
                    f64::INFINITY
                }
            );
            Ok(0)
        }
        Command::Roundtrip {
            input,
            fit,
            quant,
            out,
            plot,
        } => {
            let samples = load_samples(&input)?;
            let terms = parse_terminations(
                quant.terminations.as_deref(),
                samples.n_ports(),
                quant.lj,
                quant.cj,
            )?;
            let config = PipelineConfig {
                n_poles: fit.npoles,
                fit: FitOptions {
                    n_iterations: fit.iterations,
                    fit_e: fit.fit_e,
                    ..FitOptions::default()
                },
                enforce_passivity: !fit.no_passivity,
                terminations: Some(terms),
                junction: (quant.lj, quant.cj),
                temperature: quant.temp_mk * 1e-3,
                mode_index: quant.mode,
                ..Default::default()
            };
            let outcome = pipeline::run_roundtrip(&samples, &config)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            write_text(
                &out.join("netlist.cir"),
                &io::export_netlist(&outcome.circuit),
            )?;
            write_text(
                &out.join("report.json"),
                &serde_json::to_string_pretty(&outcome.report).unwrap(),
            )?;
            if plot {
                let curve = pipeline::min_eig_curve(&outcome.model, 800);
                write_text(&out.join("pr_min_eig.dat"), &pipeline::plot_series(&curve))?;
                let fit_curve = pipeline::fit_error_curve(&samples, &outcome.recomposed)?;
                write_text(
                    &out.join("fit_error.dat"),
                    &pipeline::plot_series(&fit_curve),
                )?;
                if let Some(relax) = &outcome.report.relaxation {
                    let lo = samples.omegas.first().copied().unwrap_or(1.0).max(1e-3);
                    let hi = samples.omegas.last().copied().unwrap_or(1.0) * 10.0;
                    if let (Some(qm), true) = (&outcome.qm, relax.omega01_rad_s > 0.0) {
                        let loops = multiport_effective_loops(
                            &outcome.circuit,
                            config.terminations.as_ref().unwrap(),
                        )?;
                        let baths = all_baths(
                            &outcome.circuit,
                            &loops,
                            qm,
                            config.terminations.as_ref().unwrap(),
                        )?;
                        for (i, bath) in baths.iter().enumerate() {
                            let pts: Vec<(f64, f64)> = (0..400)
                                .map(|k| {
                                    let w = lo * (hi / lo).powf(k as f64 / 399.0);
                                    (w, bath.spectral.eval(w))
                                })
                                .collect();
                            write_text(
                                &out.join(format!("bath_{i:02}_spectrum.dat")),
                                &pipeline::plot_series(&pts),
                            )?;
                        }
                    }
                }
            }
            println!(
                "roundtrip: fit max rel {:.3e}; circuit {} stages; \
                 recomposed max grid rel error {:.3e}; report -> {}",
                outcome.fit_max_rel,
                outcome.circuit.stages.len(),
                outcome.roundtrip_max_rel,
                out.join("report.json").display()
            );
            if let Some(relax) = &outcome.report.relaxation {
                println!(
                    "qubit mode {} at {:.4e} rad/s: T1 = {:.4e} s (harmonic approximation)",
                    relax.mode_index, relax.omega01_rad_s, relax.t1_s
                );
            }
            Ok(0)
        }
    }
}

/// Entry point shared by the binary and the integration tests.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own message; usage problems are validation errors
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run_command(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_of(&err)
        }
    }
}
