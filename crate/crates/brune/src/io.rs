//! File formats: Touchstone v1 input, Z-CSV interchange, netlist export
//! with ideal-transformer records, and the structured JSON report.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FrequencySamples;
use crate::multiport::{Belevitch, MultiportBruneCircuit, MultiportStage, MultiportStageKind};
use crate::oneport::ExtractionFrequency;

/// Parsed Touchstone scattering data (frequencies already in rad/s).
#[derive(Debug, Clone)]
pub struct TouchstoneData {
    pub omegas: Vec<f64>,
    pub s_params: Vec<DMatrix<Complex64>>,
    pub z0: f64,
}

#[derive(Clone, Copy)]
enum TsFormat {
    Ri,
    Ma,
    Db,
}

/// Version-1 Touchstone parser for `.sNp` files. Defaults are `GHz S MA R
/// 50`; two-port data follows the S11 S21 S12 S22 column order, larger
/// matrices are row-major with arbitrary line wrapping. A trailing noise
/// block (frequency decreasing) is ignored.
pub fn parse_touchstone(text: &str, n_ports: usize) -> Result<TouchstoneData> {
    if n_ports == 0 {
        return Err(Error::UnsupportedFormat("zero ports".into()));
    }
    let mut unit = 1e9; // GHz default
    let mut format = TsFormat::Ma;
    let mut z0 = 50.0;
    let mut seen_option = false;
    let mut numbers: Vec<(f64, usize)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('!') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            return Err(Error::UnsupportedFormat(
                "Touchstone version 2 keywords are not supported".into(),
            ));
        }
        if let Some(rest) = line.strip_prefix('#') {
            if seen_option {
                // later option lines are ignored per the v1 convention
                continue;
            }
            seen_option = true;
            let mut tokens = rest.split_whitespace().peekable();
            while let Some(tok) = tokens.next() {
                match tok.to_ascii_uppercase().as_str() {
                    "HZ" => unit = 1.0,
                    "KHZ" => unit = 1e3,
                    "MHZ" => unit = 1e6,
                    "GHZ" => unit = 1e9,
                    "S" => {}
                    "Y" | "Z" | "G" | "H" => {
                        return Err(Error::UnsupportedFormat(format!(
                            "parameter type {tok} (only S is supported)"
                        )))
                    }
                    "RI" => format = TsFormat::Ri,
                    "MA" => format = TsFormat::Ma,
                    "DB" => format = TsFormat::Db,
                    "R" => {
                        let v = tokens.next().ok_or(Error::ParseError {
                            line: lineno + 1,
                            message: "R option without a value".into(),
                        })?;
                        z0 = v.parse().map_err(|_| Error::ParseError {
                            line: lineno + 1,
                            message: format!("bad reference impedance {v}"),
                        })?;
                    }
                    other => {
                        return Err(Error::ParseError {
                            line: lineno + 1,
                            message: format!("unknown option token {other}"),
                        })
                    }
                }
            }
            continue;
        }
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::ParseError {
                line: lineno + 1,
                message: format!("not a number: {tok}"),
            })?;
            numbers.push((v, lineno + 1));
        }
    }
    if numbers.is_empty() {
        return Err(Error::ParseError {
            line: 0,
            message: "no data records".into(),
        });
    }
    let chunk = 1 + 2 * n_ports * n_ports;
    let mut omegas = Vec::new();
    let mut mats = Vec::new();
    let mut idx = 0;
    let mut last_f = f64::NEG_INFINITY;
    while idx + chunk <= numbers.len() {
        let f = numbers[idx].0;
        if f <= last_f {
            // noise block or malformed tail; stop at the frequency reversal
            break;
        }
        last_f = f;
        let mut vals = Vec::with_capacity(n_ports * n_ports);
        for k in 0..n_ports * n_ports {
            let a = numbers[idx + 1 + 2 * k].0;
            let b = numbers[idx + 2 + 2 * k].0;
            let c = match format {
                TsFormat::Ri => Complex64::new(a, b),
                TsFormat::Ma => Complex64::from_polar(a, b.to_radians()),
                TsFormat::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
            };
            vals.push(c);
        }
        let m = if n_ports == 2 {
            // v1 two-port order: S11 S21 S12 S22
            DMatrix::from_row_slice(2, 2, &[vals[0], vals[2], vals[1], vals[3]])
        } else {
            DMatrix::from_fn(n_ports, n_ports, |i, j| vals[i * n_ports + j])
        };
        omegas.push(2.0 * std::f64::consts::PI * f * unit);
        mats.push(m);
        idx += chunk;
    }
    if idx == 0 {
        return Err(Error::ParseError {
            line: numbers[0].1,
            message: format!(
                "expected records of {chunk} numbers, found only {}",
                numbers.len()
            ),
        });
    }
    Ok(TouchstoneData {
        omegas,
        s_params: mats,
        z0,
    })
}

/// Port count from a Touchstone extension (`.s1p`, `.s2p`, ...).
pub fn ports_from_extension(path: &std::path::Path) -> Option<usize> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    let rest = ext.strip_prefix('s')?.strip_suffix('p')?;
    rest.parse().ok()
}

/// `Z = sqrt(Z0) (I + S) (I - S)^{-1} sqrt(Z0)` for a scalar reference.
pub fn s_to_z(s: &DMatrix<Complex64>, z0: f64) -> Result<DMatrix<Complex64>> {
    let n = s.nrows();
    let eye = DMatrix::<Complex64>::identity(n, n);
    let num = &eye + s;
    let den = &eye - s;
    let lu = den.lu();
    if crate::model::lu_rcond_c(&lu) < 1e-13 {
        return Err(Error::SingularConversion);
    }
    let inv = lu.solve(&eye).ok_or(Error::SingularConversion)?;
    Ok(num * inv * Complex64::new(z0, 0.0))
}

/// Convert parsed scattering data to impedance samples.
pub fn touchstone_to_impedance(data: &TouchstoneData) -> Result<FrequencySamples> {
    let mut values = Vec::with_capacity(data.s_params.len());
    for s in &data.s_params {
        values.push(s_to_z(s, data.z0)?);
    }
    FrequencySamples::new(data.omegas.clone(), values)
}

/// Write impedance samples in the Z-CSV interchange format:
/// `omega_rad_s, re_11, ..., re_NN, im_11, ..., im_NN` (row-major entries).
pub fn write_zcsv(samples: &FrequencySamples) -> String {
    let n = samples.n_ports();
    let mut out = String::from("omega_rad_s");
    for i in 1..=n {
        for j in 1..=n {
            out.push_str(&format!(", re_{i}{j}"));
        }
    }
    for i in 1..=n {
        for j in 1..=n {
            out.push_str(&format!(", im_{i}{j}"));
        }
    }
    out.push('\n');
    for (k, &w) in samples.omegas.iter().enumerate() {
        out.push_str(&format!("{w}"));
        let z = &samples.values[k];
        for i in 0..n {
            for j in 0..n {
                out.push_str(&format!(", {}", z[(i, j)].re));
            }
        }
        for i in 0..n {
            for j in 0..n {
                out.push_str(&format!(", {}", z[(i, j)].im));
            }
        }
        out.push('\n');
    }
    out
}

/// Read the Z-CSV format; the port count is inferred from the column count.
pub fn read_zcsv(text: &str) -> Result<FrequencySamples> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::ParseError {
        line: 0,
        message: "empty file".into(),
    })?;
    let cols = header.split(',').count();
    // cols = 1 + 2 n^2
    let n2 = (cols - 1) / 2;
    let n = (n2 as f64).sqrt().round() as usize;
    if cols != 1 + 2 * n * n || n == 0 {
        return Err(Error::ParseError {
            line: 1,
            message: format!("header with {cols} columns does not match any port count"),
        });
    }
    let mut omegas = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let nums: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::ParseError {
                line: lineno + 1,
                message: format!("{e}"),
            })?;
        if nums.len() != cols {
            return Err(Error::ParseError {
                line: lineno + 1,
                message: format!("expected {cols} columns, found {}", nums.len()),
            });
        }
        omegas.push(nums[0]);
        values.push(DMatrix::from_fn(n, n, |i, j| {
            Complex64::new(nums[1 + i * n + j], nums[1 + n * n + i * n + j])
        }));
    }
    FrequencySamples::new(omegas, values)
}

fn fmt_row(vals: &[f64]) -> String {
    vals.iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Deterministic netlist of a multiport Brune circuit. Ideal transformers
/// are written as `K <name> <left nodes> / <right nodes> : <ratio rows>`
/// records (rows separated by `;`); R/L/C elements carry their two nodes and
/// the value with full round-trip precision.
pub fn export_netlist(circuit: &MultiportBruneCircuit) -> String {
    let n = circuit.n_ports;
    let mut out = String::new();
    out.push_str(&format!(
        "* brune multiport netlist ({n} ports, {} stages)\n.ports {n}\n",
        circuit.stages.len()
    ));
    let level_nodes = |k: usize| -> Vec<String> {
        if k == 0 {
            (1..=n).map(|i| format!("p{i}")).collect()
        } else {
            (1..=n).map(|i| format!("lv{k}_{i}")).collect()
        }
    };
    for (kk, st) in circuit.stages.iter().enumerate() {
        let k = kk + 1;
        let left = level_nodes(kk);
        let right: Vec<String> = (1..=n).map(|i| format!("s{k}_{i}")).collect();
        let omega = match st.extraction_frequency {
            ExtractionFrequency::Finite(w) => format!("{w}"),
            ExtractionFrequency::Infinite => "inf".into(),
            ExtractionFrequency::Zero => "0".into(),
        };
        let kind = match st.kind {
            MultiportStageKind::Regular { .. } => "regular",
            MultiportStageKind::CapacitiveDegenerate { .. } => "degenerate",
        };
        out.push_str(&format!("* stage {k} ({kind}, omega {omega})\n"));
        let t = st.transformer.matrix();
        let rows: Vec<String> = (0..n)
            .map(|i| fmt_row(&(0..n).map(|j| t[(i, j)]).collect::<Vec<_>>()))
            .collect();
        out.push_str(&format!(
            "K T{k} {} / {} : {}\n",
            left.join(" "),
            right.join(" "),
            rows.join(" ; ")
        ));
        out.push_str(&format!("R r{k} s{k}_1 m{k} {}\n", st.resistance));
        match &st.kind {
            MultiportStageKind::Regular {
                turns_ratio,
                inductance,
                capacitance,
                coupling,
            } => {
                out.push_str(&format!(
                    "K n{k} m{k} x{k} / x{k} lv{k}_1 : {turns_ratio}\n"
                ));
                out.push_str(&format!("L l{k} m{k} x{k} {inductance}\n"));
                out.push_str(&format!("C c{k} x{k} g{k} {capacitance}\n"));
                if n > 1 {
                    let wl: Vec<String> = (2..=n).map(|i| format!("s{k}_{i}")).collect();
                    let wr: Vec<String> = (2..=n).map(|i| format!("lv{k}_{i}")).collect();
                    out.push_str(&format!(
                        "K nu{k} x{k} g{k} / {} > {} : {}\n",
                        wl.join(" "),
                        wr.join(" "),
                        fmt_row(coupling)
                    ));
                }
            }
            MultiportStageKind::CapacitiveDegenerate { capacitance } => {
                out.push_str(&format!("C c{k} m{k} 0 {capacitance}\n"));
            }
        }
        if let Some(g) = &st.gyration {
            out.push_str(&format!("G g{k} m{k} : {}\n", fmt_row(g)));
        }
    }
    let m1 = circuit.stages.len() + 1;
    let left = level_nodes(circuit.stages.len());
    let right: Vec<String> = (1..=n).map(|i| format!("t_{i}")).collect();
    let t = circuit.terminal_transformer.matrix();
    let rows: Vec<String> = (0..n)
        .map(|i| fmt_row(&(0..n).map(|j| t[(i, j)]).collect::<Vec<_>>()))
        .collect();
    out.push_str("* terminal stage\n");
    out.push_str(&format!(
        "K T{m1} {} / {} : {}\n",
        left.join(" "),
        right.join(" "),
        rows.join(" ; ")
    ));
    for (i, r) in circuit.terminal_resistances.iter().enumerate() {
        out.push_str(&format!("R R{} t_{} 0 {r}\n", i + 1, i + 1));
    }
    out.push_str(".end\n");
    out
}

fn parse_matrix_record(spec: &str, lineno: usize) -> Result<(Vec<Vec<f64>>, ())> {
    let rows: std::result::Result<Vec<Vec<f64>>, _> = spec
        .split(';')
        .map(|row| {
            row.split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
        })
        .collect();
    match rows {
        Ok(r) => Ok((r, ())),
        Err(e) => Err(Error::ParseError {
            line: lineno,
            message: format!("{e}"),
        }),
    }
}

/// Parse a netlist produced by [`export_netlist`] back into a circuit
/// (structural and full-precision parameter equality).
pub fn parse_netlist(text: &str) -> Result<MultiportBruneCircuit> {
    let mut n_ports = 0usize;
    struct PartialStage {
        transformer: Option<Vec<Vec<f64>>>,
        resistance: Option<f64>,
        turns_ratio: Option<f64>,
        inductance: Option<f64>,
        capacitance: Option<f64>,
        coupling: Option<Vec<f64>>,
        gyration: Option<Vec<f64>>,
        omega: ExtractionFrequency,
    }
    let mut stages: Vec<PartialStage> = Vec::new();
    let mut terminal_t: Option<Vec<Vec<f64>>> = None;
    let mut terminal_r: Vec<f64> = Vec::new();
    let mut current: Option<PartialStage> = None;
    let mut pending_omega = ExtractionFrequency::Infinite;
    for (lineno0, raw) in text.lines().enumerate() {
        let lineno = lineno0 + 1;
        let line = raw.trim();
        if line.is_empty() || line == ".end" {
            continue;
        }
        if let Some(comment) = line.strip_prefix('*') {
            // stage comments carry the extraction frequency
            if let Some(pos) = comment.find("omega ") {
                let w = comment[pos + 6..].trim_end_matches(')').trim();
                pending_omega = match w {
                    "inf" => ExtractionFrequency::Infinite,
                    "0" => ExtractionFrequency::Zero,
                    other => other
                        .parse::<f64>()
                        .map(ExtractionFrequency::Finite)
                        .unwrap_or(ExtractionFrequency::Infinite),
                };
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix(".ports") {
            n_ports = rest.trim().parse().map_err(|_| Error::ParseError {
                line: lineno,
                message: "bad port count".into(),
            })?;
            continue;
        }
        let mut fields = line.split_whitespace();
        let tag = fields.next().unwrap_or_default();
        let name = fields.next().unwrap_or_default();
        match tag {
            "K" if name.starts_with('T') => {
                let spec = line.split(':').nth(1).ok_or(Error::ParseError {
                    line: lineno,
                    message: "transformer record without ratio rows".into(),
                })?;
                let (rows, ()) = parse_matrix_record(spec, lineno)?;
                if let Some(st) = current.take() {
                    stages.push(st);
                }
                // a transformer record opens a stage; the terminal one is
                // resolved at the end (it has no following R r record)
                current = Some(PartialStage {
                    transformer: Some(rows),
                    resistance: None,
                    turns_ratio: None,
                    inductance: None,
                    capacitance: None,
                    coupling: None,
                    gyration: None,
                    omega: pending_omega,
                });
            }
            "K" if name.starts_with("nu") => {
                let spec = line.split(':').nth(1).unwrap_or_default();
                let vals: Vec<f64> = spec
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::ParseError {
                        line: lineno,
                        message: format!("{e}"),
                    })?;
                if let Some(st) = current.as_mut() {
                    st.coupling = Some(vals);
                }
            }
            "K" if name.starts_with('n') => {
                let spec = line.split(':').nth(1).unwrap_or_default();
                let v: f64 = spec.trim().parse().map_err(|_| Error::ParseError {
                    line: lineno,
                    message: "bad turns ratio".into(),
                })?;
                if let Some(st) = current.as_mut() {
                    st.turns_ratio = Some(v);
                }
            }
            "G" => {
                let spec = line.split(':').nth(1).unwrap_or_default();
                let vals: Vec<f64> = spec
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::ParseError {
                        line: lineno,
                        message: format!("{e}"),
                    })?;
                if let Some(st) = current.as_mut() {
                    st.gyration = Some(vals);
                }
            }
            "R" => {
                let value: f64 = line
                    .split_whitespace()
                    .last()
                    .unwrap_or_default()
                    .parse()
                    .map_err(|_| Error::ParseError {
                        line: lineno,
                        message: "bad resistance".into(),
                    })?;
                if name.starts_with('R') {
                    terminal_r.push(value);
                } else if let Some(st) = current.as_mut() {
                    st.resistance = Some(value);
                }
            }
            "L" => {
                let value: f64 = line
                    .split_whitespace()
                    .last()
                    .unwrap_or_default()
                    .parse()
                    .map_err(|_| Error::ParseError {
                        line: lineno,
                        message: "bad inductance".into(),
                    })?;
                if let Some(st) = current.as_mut() {
                    st.inductance = Some(value);
                }
            }
            "C" => {
                let value: f64 = line
                    .split_whitespace()
                    .last()
                    .unwrap_or_default()
                    .parse()
                    .map_err(|_| Error::ParseError {
                        line: lineno,
                        message: "bad capacitance".into(),
                    })?;
                if let Some(st) = current.as_mut() {
                    st.capacitance = Some(value);
                }
            }
            other => {
                return Err(Error::ParseError {
                    line: lineno,
                    message: format!("unknown record {other}"),
                })
            }
        }
    }
    // the last opened "stage" is the terminal transformer
    if let Some(st) = current.take() {
        if st.resistance.is_none() {
            terminal_t = st.transformer;
        } else {
            stages.push(st);
        }
    }
    if n_ports == 0 {
        return Err(Error::ParseError {
            line: 0,
            message: "missing .ports record".into(),
        });
    }
    let terminal_t = terminal_t.ok_or(Error::ParseError {
        line: 0,
        message: "missing terminal transformer".into(),
    })?;
    let mut out_stages = Vec::new();
    for (k, st) in stages.into_iter().enumerate() {
        let t = st.transformer.ok_or(Error::ParseError {
            line: 0,
            message: format!("stage {} without transformer", k + 1),
        })?;
        let resistance = st.resistance.ok_or(Error::ParseError {
            line: 0,
            message: format!("stage {} without resistor", k + 1),
        })?;
        let capacitance = st.capacitance.ok_or(Error::ParseError {
            line: 0,
            message: format!("stage {} without capacitor", k + 1),
        })?;
        let kind = match (st.turns_ratio, st.inductance) {
            (Some(nr), Some(l)) => MultiportStageKind::Regular {
                turns_ratio: nr,
                inductance: l,
                capacitance,
                coupling: st.coupling.unwrap_or_default(),
            },
            (None, None) => MultiportStageKind::CapacitiveDegenerate { capacitance },
            _ => {
                return Err(Error::ParseError {
                    line: 0,
                    message: format!("stage {} mixes regular and degenerate records", k + 1),
                })
            }
        };
        out_stages.push(MultiportStage {
            transformer: Belevitch { t },
            resistance,
            kind,
            gyration: st.gyration,
            extraction_frequency: st.omega,
        });
    }
    let circuit = MultiportBruneCircuit {
        n_ports,
        stages: out_stages,
        terminal_transformer: Belevitch { t: terminal_t },
        terminal_resistances: terminal_r,
    };
    circuit.validate()?;
    Ok(circuit)
}

/// One row of the per-stage table (units mirror the nH/nF convention and the
/// reciprocal turns ratio `t = 1/n`; degenerate stages carry the `*` marker
/// with zero `l`, `t` and coupling entries).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRow {
    pub j: usize,
    pub marker: String,
    pub degenerate: bool,
    pub r_ohm: f64,
    pub l_nh: f64,
    pub c_nf: f64,
    /// `t = 1/n`, zero for degenerate stages.
    pub t: f64,
    pub nu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gyration: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_rad_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantizationReport {
    pub coordinates: Vec<String>,
    pub c0_farad: Vec<Vec<f64>>,
    pub m0_per_henry: Vec<Vec<f64>>,
    pub mode_frequencies_rad_s: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BathRow {
    pub kind: String,
    pub resistance_ohm: f64,
    pub j_at_omega01: f64,
    pub rate_per_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxationReport {
    /// Matrix elements come from the harmonic normal modes.
    pub approximation: String,
    pub mode_index: usize,
    pub omega01_rad_s: f64,
    pub temperature_k: f64,
    pub baths: Vec<BathRow>,
    pub total_rate_per_s: f64,
    pub t1_s: f64,
}

/// Machine-readable synthesis report: the per-stage table, transformers and
/// the optional quantization/relaxation sections.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub n_ports: usize,
    pub n_stages: usize,
    pub stages: Vec<StageRow>,
    pub terminal_resistances_ohm: Vec<f64>,
    pub belevitch_transformers: Vec<Vec<Vec<f64>>>,
    pub terminal_transformer: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantization: Option<QuantizationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxation: Option<RelaxationReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Assemble the per-stage rows and transformer listings of a circuit.
pub fn circuit_report(circuit: &MultiportBruneCircuit) -> Report {
    let stages = circuit
        .stages
        .iter()
        .enumerate()
        .map(|(k, st)| {
            let omega = match st.extraction_frequency {
                ExtractionFrequency::Finite(w) => Some(w),
                _ => None,
            };
            match &st.kind {
                MultiportStageKind::Regular {
                    turns_ratio,
                    inductance,
                    capacitance,
                    coupling,
                } => StageRow {
                    j: k + 1,
                    marker: String::new(),
                    degenerate: false,
                    r_ohm: st.resistance,
                    l_nh: inductance * 1e9,
                    c_nf: capacitance * 1e9,
                    t: 1.0 / turns_ratio,
                    nu: coupling.clone(),
                    gyration: st.gyration.clone(),
                    omega_rad_s: omega,
                },
                MultiportStageKind::CapacitiveDegenerate { capacitance } => StageRow {
                    j: k + 1,
                    marker: "*".into(),
                    degenerate: true,
                    r_ohm: st.resistance,
                    l_nh: 0.0,
                    c_nf: capacitance * 1e9,
                    t: 0.0,
                    nu: vec![0.0; circuit.n_ports - 1],
                    gyration: st.gyration.clone(),
                    omega_rad_s: omega,
                },
            }
        })
        .collect();
    Report {
        n_ports: circuit.n_ports,
        n_stages: circuit.stages.len(),
        stages,
        terminal_resistances_ohm: circuit.terminal_resistances.clone(),
        belevitch_transformers: circuit
            .stages
            .iter()
            .map(|s| s.transformer.t.clone())
            .collect(),
        terminal_transformer: circuit.terminal_transformer.t.clone(),
        quantization: None,
        relaxation: None,
        warnings: Vec::new(),
    }
}

/// Rebuild a circuit from per-stage table rows (the `t = 1/n` and nH/nF
/// conventions of the report), stage transformers and the terminal data.
pub fn circuit_from_rows(
    n_ports: usize,
    rows: &[StageRow],
    transformers: &[DMatrix<f64>],
    terminal_transformer: &DMatrix<f64>,
    terminal_resistances: &[f64],
) -> Result<MultiportBruneCircuit> {
    if rows.len() != transformers.len() {
        return Err(Error::DimensionMismatch(
            "one transformer per stage row".into(),
        ));
    }
    let stages = rows
        .iter()
        .zip(transformers)
        .map(|(row, t)| {
            let kind = if row.degenerate || row.t == 0.0 {
                MultiportStageKind::CapacitiveDegenerate {
                    capacitance: row.c_nf * 1e-9,
                }
            } else {
                MultiportStageKind::Regular {
                    turns_ratio: 1.0 / row.t,
                    inductance: row.l_nh * 1e-9,
                    capacitance: row.c_nf * 1e-9,
                    coupling: row.nu.clone(),
                }
            };
            MultiportStage {
                transformer: Belevitch::from_matrix(t),
                resistance: row.r_ohm,
                kind,
                gyration: row.gyration.clone(),
                extraction_frequency: match row.omega_rad_s {
                    Some(w) => ExtractionFrequency::Finite(w),
                    None => ExtractionFrequency::Infinite,
                },
            }
        })
        .collect();
    let circuit = MultiportBruneCircuit {
        n_ports,
        stages,
        terminal_transformer: Belevitch::from_matrix(terminal_transformer),
        terminal_resistances: terminal_resistances.to_vec(),
    };
    circuit.validate()?;
    Ok(circuit)
}

/// Serializable pole-residue expansion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoleResidueDto {
    pub poles_re: Vec<f64>,
    pub poles_im: Vec<f64>,
    /// Residue matrices as nested rows, split into real and imaginary parts.
    pub residues_re: Vec<Vec<Vec<f64>>>,
    pub residues_im: Vec<Vec<Vec<f64>>>,
    pub d: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
}

impl From<&crate::model::PoleResidueModel> for PoleResidueDto {
    fn from(pr: &crate::model::PoleResidueModel) -> Self {
        let rows_of = |m: &DMatrix<Complex64>, im: bool| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| {
                    (0..m.ncols())
                        .map(|j| if im { m[(i, j)].im } else { m[(i, j)].re })
                        .collect()
                })
                .collect()
        };
        let real_rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect()
        };
        Self {
            poles_re: pr.poles.iter().map(|p| p.re).collect(),
            poles_im: pr.poles.iter().map(|p| p.im).collect(),
            residues_re: pr.residues.iter().map(|r| rows_of(r, false)).collect(),
            residues_im: pr.residues.iter().map(|r| rows_of(r, true)).collect(),
            d: real_rows(&pr.d),
            e: real_rows(&pr.e),
        }
    }
}

impl TryFrom<&PoleResidueDto> for crate::model::PoleResidueModel {
    type Error = Error;
    fn try_from(dto: &PoleResidueDto) -> Result<Self> {
        if dto.poles_re.len() != dto.poles_im.len()
            || dto.poles_re.len() != dto.residues_re.len()
            || dto.residues_re.len() != dto.residues_im.len()
        {
            return Err(Error::DimensionMismatch("ragged pole-residue file".into()));
        }
        let to_matrix = |rows: &Vec<Vec<f64>>| -> DMatrix<f64> {
            let nr = rows.len();
            let nc = rows.first().map_or(0, |r| r.len());
            DMatrix::from_fn(nr, nc, |i, j| rows[i][j])
        };
        let poles: Vec<Complex64> = dto
            .poles_re
            .iter()
            .zip(&dto.poles_im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        let residues = dto
            .residues_re
            .iter()
            .zip(&dto.residues_im)
            .map(|(re, im)| {
                let mre = to_matrix(re);
                let mim = to_matrix(im);
                DMatrix::from_fn(mre.nrows(), mre.ncols(), |i, j| {
                    Complex64::new(mre[(i, j)], mim[(i, j)])
                })
            })
            .collect();
        let model = crate::model::PoleResidueModel {
            poles,
            residues,
            d: to_matrix(&dto.d),
            e: to_matrix(&dto.e),
        };
        model.validate()?;
        Ok(model)
    }
}

/// On-disk model file: the fit and its realization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pole_residue: Option<PoleResidueDto>,
    pub state_space: crate::model::StateSpaceModelDto,
}

impl ModelFile {
    pub fn new(
        pr: Option<&crate::model::PoleResidueModel>,
        ss: &crate::model::StateSpaceModel,
    ) -> Self {
        Self {
            pole_residue: pr.map(PoleResidueDto::from),
            state_space: ss.into(),
        }
    }

    pub fn state_space(&self) -> Result<crate::model::StateSpaceModel> {
        (&self.state_space).try_into()
    }
}
