//! Effective Kirchhoff loop matrices.
//!
//! The Brune circuit contains ideal transformers, which ordinary loop
//! analysis cannot treat. Eliminating the transformer branch variables
//! yields effective current/voltage laws `F_eff I_C = -I_tr` and
//! `(F^T)_eff V_tr = V_C` whose entries are real functions of the turns
//! ratios. Both derivations (current law iterated from the terminal stage
//! backward, voltage law iterated from the ports forward) are implemented;
//! their transpose identity is the executable form of the consistency
//! theorem and is enforced in the tests.
//!
//! Column convention for the capacitors: `{C_1 .. C_M, C_R1 .. C_RN}` --
//! the stage capacitors first, then the terminal-stage capacitors standing
//! in for the shunt resistors.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiport::{MultiportBruneCircuit, MultiportStageKind};
use crate::oneport::{OnePortBruneCircuit, OnePortStageKind};

/// How each port of the synthesized multiport is terminated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PortTermination {
    /// Josephson junction with inductance `l_j` (H) and shunt capacitance
    /// `c_j` (F).
    JosephsonJunction { l_j: f64, c_j: f64 },
    /// External resistor shunting the port (ohms).
    Resistor { r: f64 },
    /// Voltage source with a series resistance (ohms).
    VoltageSource { r_series: f64 },
}

/// Real-valued loop matrices with the ideal transformers eliminated.
///
/// Row groups: junction rows (`f_jc`, one per junction-terminated port),
/// inductor rows (`f_lc`, one per regular stage), series-resistor rows
/// (`f_zc`, one per stage), port-shunt resistor rows (`f_xc`) and
/// voltage-source rows (`f_vc`). All have `M + N` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveLoopMatrices {
    pub f_jc: DMatrix<f64>,
    pub f_lc: DMatrix<f64>,
    pub f_zc: DMatrix<f64>,
    pub f_xc: DMatrix<f64>,
    pub f_vc: DMatrix<f64>,
    /// Ports carrying a junction row, in row order of `f_jc`.
    pub junction_ports: Vec<usize>,
    /// Ports carrying a shunt-resistor row, in row order of `f_xc`.
    pub resistor_ports: Vec<usize>,
    /// Ports carrying a voltage-source row, in row order of `f_vc`.
    pub source_ports: Vec<usize>,
    /// Stage index (0-based) backing each `f_lc` row.
    pub inductor_stages: Vec<usize>,
    /// Number of stage-capacitor columns (`M`).
    pub n_stage_caps: usize,
    pub n_ports: usize,
}

impl EffectiveLoopMatrices {
    /// `[F_JC; F_LC]` restricted to the stage-capacitor columns; this is the
    /// block entering the Hamiltonian capacitance matrix.
    pub fn f_c0(&self) -> DMatrix<f64> {
        let rows = self.f_jc.nrows() + self.f_lc.nrows();
        let mut out = DMatrix::zeros(rows, self.n_stage_caps);
        out.view_mut((0, 0), (self.f_jc.nrows(), self.n_stage_caps))
            .copy_from(
                &self
                    .f_jc
                    .view((0, 0), (self.f_jc.nrows(), self.n_stage_caps)),
            );
        out.view_mut(
            (self.f_jc.nrows(), 0),
            (self.f_lc.nrows(), self.n_stage_caps),
        )
        .copy_from(
            &self
                .f_lc
                .view((0, 0), (self.f_lc.nrows(), self.n_stage_caps)),
        );
        out
    }

    /// `[F_JC; F_LC]` restricted to the terminal-capacitor columns; consumed
    /// by the dissipation analysis of the terminal shunt resistors.
    pub fn f_cr(&self) -> DMatrix<f64> {
        let rows = self.f_jc.nrows() + self.f_lc.nrows();
        let n = self.n_ports;
        let m = self.n_stage_caps;
        let mut out = DMatrix::zeros(rows, n);
        out.view_mut((0, 0), (self.f_jc.nrows(), n))
            .copy_from(&self.f_jc.view((0, m), (self.f_jc.nrows(), n)));
        out.view_mut((self.f_jc.nrows(), 0), (self.f_lc.nrows(), n))
            .copy_from(&self.f_lc.view((0, m), (self.f_lc.nrows(), n)));
        out
    }

    /// Series-resistor rows with the port-shunt rows appended.
    pub fn f_zc_full(&self) -> DMatrix<f64> {
        let cols = self.n_stage_caps + self.n_ports;
        let mut out = DMatrix::zeros(self.f_zc.nrows() + self.f_xc.nrows(), cols);
        out.view_mut((0, 0), (self.f_zc.nrows(), cols))
            .copy_from(&self.f_zc);
        out.view_mut((self.f_zc.nrows(), 0), (self.f_xc.nrows(), cols))
            .copy_from(&self.f_xc);
        out
    }
}

/// Per-stage transformer data extracted once for the loop iteration.
struct StageView {
    t: DMatrix<f64>,
    /// `A_j`: identity with `-nu` in the first row (identity for degenerate
    /// stages).
    a: DMatrix<f64>,
    /// `upsilon_j = ((1 - n_j), -nu^T)`, present only for regular stages.
    upsilon: Option<RowDVector<f64>>,
}

fn stage_views(circuit: &MultiportBruneCircuit) -> Vec<StageView> {
    let n = circuit.n_ports;
    circuit
        .stages
        .iter()
        .map(|st| {
            let t = st.transformer.matrix();
            match &st.kind {
                MultiportStageKind::Regular {
                    turns_ratio,
                    coupling,
                    ..
                } => {
                    let mut a = DMatrix::identity(n, n);
                    let mut upsilon = RowDVector::zeros(n);
                    upsilon[0] = 1.0 - turns_ratio;
                    for (j, nu) in coupling.iter().enumerate() {
                        a[(0, j + 1)] = -nu;
                        upsilon[j + 1] = -nu;
                    }
                    StageView {
                        t,
                        a,
                        upsilon: Some(upsilon),
                    }
                }
                MultiportStageKind::CapacitiveDegenerate { .. } => StageView {
                    t,
                    a: DMatrix::identity(n, n),
                    upsilon: None,
                },
            }
        })
        .collect()
}

/// Fill one effective row: starting from `w0`, the walk multiplies by
/// `T_k`, records the first-column component at capacitor column `k`,
/// multiplies by `A_k`, and finally spreads `w T_{M+1}` over the terminal
/// columns.
fn walk_row(
    row: &mut RowDVector<f64>,
    w0: RowDVector<f64>,
    start_stage: usize,
    views: &[StageView],
    terminal: &DMatrix<f64>,
    m: usize,
    n: usize,
) {
    let mut w = w0;
    for k in start_stage..m {
        w = &w * &views[k].t;
        row[k] = w[0];
        w = &w * &views[k].a;
    }
    w = &w * terminal;
    for i in 0..n {
        row[m + i] = w[i];
    }
}

/// Effective loop matrices of a multiport Brune circuit under the given
/// port terminations (current-law derivation, iterated from the terminal
/// stage backward).
pub fn multiport_effective_loops(
    circuit: &MultiportBruneCircuit,
    terminations: &[PortTermination],
) -> Result<EffectiveLoopMatrices> {
    circuit.validate()?;
    if circuit.has_gyrators() {
        return Err(Error::GyratorPresent);
    }
    let n = circuit.n_ports;
    if terminations.len() != n {
        return Err(Error::DimensionMismatch(
            "one termination per port required".into(),
        ));
    }
    let m = circuit.stages.len();
    let cols = m + n;
    let views = stage_views(circuit);
    let terminal = circuit.terminal_transformer.matrix();

    let mut junction_ports = Vec::new();
    let mut resistor_ports = Vec::new();
    let mut source_ports = Vec::new();
    for (p, term) in terminations.iter().enumerate() {
        match term {
            PortTermination::JosephsonJunction { .. } => junction_ports.push(p),
            PortTermination::Resistor { .. } => resistor_ports.push(p),
            PortTermination::VoltageSource { .. } => source_ports.push(p),
        }
    }

    // port rows (junctions, shunt resistors and sources share the pattern)
    let port_row = |p: usize| -> RowDVector<f64> {
        let mut row = RowDVector::zeros(cols);
        let mut w0 = RowDVector::zeros(n);
        w0[p] = 1.0;
        walk_row(&mut row, w0, 0, &views, &terminal, m, n);
        row
    };
    let mut f_jc = DMatrix::zeros(junction_ports.len(), cols);
    for (r, &p) in junction_ports.iter().enumerate() {
        f_jc.row_mut(r).copy_from(&port_row(p));
    }
    let mut f_xc = DMatrix::zeros(resistor_ports.len(), cols);
    for (r, &p) in resistor_ports.iter().enumerate() {
        f_xc.row_mut(r).copy_from(&port_row(p));
    }
    let mut f_vc = DMatrix::zeros(source_ports.len(), cols);
    for (r, &p) in source_ports.iter().enumerate() {
        f_vc.row_mut(r).copy_from(&port_row(p));
    }

    // inductor rows: one per regular stage
    let mut inductor_stages = Vec::new();
    let mut lc_rows: Vec<RowDVector<f64>> = Vec::new();
    for (j, view) in views.iter().enumerate() {
        if let Some(upsilon) = &view.upsilon {
            let mut row = RowDVector::zeros(cols);
            row[j] = 1.0;
            walk_row(&mut row, upsilon.clone(), j + 1, &views, &terminal, m, n);
            inductor_stages.push(j);
            lc_rows.push(row);
        }
    }
    let mut f_lc = DMatrix::zeros(lc_rows.len(), cols);
    for (r, row) in lc_rows.iter().enumerate() {
        f_lc.row_mut(r).copy_from(row);
    }

    // series-resistor rows: one per stage
    let mut f_zc = DMatrix::zeros(m, cols);
    for (j, view) in views.iter().enumerate() {
        let mut row = RowDVector::zeros(cols);
        row[j] = 1.0;
        let w0 = view.a.row(0).clone_owned();
        walk_row(&mut row, w0, j + 1, &views, &terminal, m, n);
        f_zc.row_mut(j).copy_from(&row);
    }

    Ok(EffectiveLoopMatrices {
        f_jc,
        f_lc,
        f_zc,
        f_xc,
        f_vc,
        junction_ports,
        resistor_ports,
        source_ports,
        inductor_stages,
        n_stage_caps: m,
        n_ports: n,
    })
}

/// Independent voltage-law derivation (forward iteration over stage
/// voltages); returns the same blocks transposed back for comparison. Used
/// purely as a cross-check oracle of the current-law result.
pub fn effective_loops_via_voltage_law(
    circuit: &MultiportBruneCircuit,
    terminations: &[PortTermination],
) -> Result<EffectiveLoopMatrices> {
    circuit.validate()?;
    if circuit.has_gyrators() {
        return Err(Error::GyratorPresent);
    }
    let n = circuit.n_ports;
    if terminations.len() != n {
        return Err(Error::DimensionMismatch(
            "one termination per port required".into(),
        ));
    }
    let m = circuit.stages.len();
    let views = stage_views(circuit);
    let terminal = circuit.terminal_transformer.matrix();

    let mut junction_ports = Vec::new();
    let mut resistor_ports = Vec::new();
    let mut source_ports = Vec::new();
    for (p, term) in terminations.iter().enumerate() {
        match term {
            PortTermination::JosephsonJunction { .. } => junction_ports.push(p),
            PortTermination::Resistor { .. } => resistor_ports.push(p),
            PortTermination::VoltageSource { .. } => source_ports.push(p),
        }
    }
    let inductor_stages: Vec<usize> = views
        .iter()
        .enumerate()
        .filter(|(_, v)| v.upsilon.is_some())
        .map(|(j, _)| j)
        .collect();

    // transposed blocks accumulated row by row: per capacitor row j, the
    // coefficients of V_L (inductors), V_r (series resistors) and the port
    // voltages
    struct VoltageRows {
        lt: DMatrix<f64>, // (F_LC^T)^eff
        zt: DMatrix<f64>, // (F_ZC^T)^eff
        pt: DMatrix<f64>, // port block of (F^T)^eff
    }
    impl VoltageRows {
        /// Walk the chain of transposed stage maps from the capacitor above
        /// `top_stage` down to the ports, filling row `row_idx`.
        fn cap_row(
            &mut self,
            views: &[StageView],
            inductor_stages: &[usize],
            row_idx: usize,
            w_init: RowDVector<f64>,
            top_stage: usize,
        ) {
            let n = self.pt.ncols();
            let mut w = w_init;
            for k in (0..top_stage).rev() {
                if let Some(upsilon) = &views[k].upsilon {
                    let coeff = (&w * upsilon.transpose())[0];
                    let r = inductor_stages.iter().position(|&s| s == k).unwrap();
                    self.lt[(row_idx, r)] = coeff;
                }
                let wa = &w * views[k].a.transpose();
                self.zt[(row_idx, k)] = wa[0];
                w = wa * views[k].t.transpose();
            }
            for p in 0..n {
                self.pt[(row_idx, p)] = w[p];
            }
        }
    }
    let n_l = inductor_stages.len();
    let mut rows = VoltageRows {
        lt: DMatrix::zeros(m + n, n_l),
        zt: DMatrix::zeros(m + n, m),
        pt: DMatrix::zeros(m + n, n),
    };
    for j in 0..m {
        // V_Cj = V_Lj + V_rj + e1^T V_Tj^(R)
        if let Some(r) = inductor_stages.iter().position(|&s| s == j) {
            rows.lt[(j, r)] = 1.0;
        }
        rows.zt[(j, j)] = 1.0;
        let w0 = views[j].t.transpose().row(0).clone_owned();
        rows.cap_row(&views, &inductor_stages, j, w0, j);
    }
    for i in 0..n {
        let w0 = terminal.transpose().row(i).clone_owned();
        rows.cap_row(&views, &inductor_stages, m + i, w0, m);
    }
    let VoltageRows { lt, zt, pt } = rows;

    // transpose back and restrict the port block to each termination class
    let pick = |ports: &[usize]| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(ports.len(), m + n);
        for (r, &p) in ports.iter().enumerate() {
            for c in 0..m + n {
                out[(r, c)] = pt[(c, p)];
            }
        }
        out
    };
    let f_jc = pick(&junction_ports);
    let f_xc = pick(&resistor_ports);
    let f_vc = pick(&source_ports);
    let f_lc = lt.transpose();
    let f_zc = zt.transpose();
    Ok(EffectiveLoopMatrices {
        f_jc,
        f_lc,
        f_zc,
        f_xc,
        f_vc,
        junction_ports,
        resistor_ports,
        source_ports,
        inductor_stages,
        n_stage_caps: m,
        n_ports: n,
    })
}

/// Explicit one-port patterns: an all-ones junction row, upper-triangular
/// `F_LC` with `(1 - n_j)` fills (degenerate stages drop their row, not
/// their column) and a binary upper-triangular `F_ZC`.
pub fn oneport_effective_loops(circuit: &OnePortBruneCircuit) -> Result<EffectiveLoopMatrices> {
    circuit.validate()?;
    let m = circuit.stages.len();
    let cols = m + 1;
    let f_jc = DMatrix::from_element(1, cols, 1.0);
    let mut inductor_stages = Vec::new();
    let mut rows: Vec<RowDVector<f64>> = Vec::new();
    for (j, st) in circuit.stages.iter().enumerate() {
        if let OnePortStageKind::Regular { turns_ratio, .. } = st.kind {
            let mut row = RowDVector::zeros(cols);
            row[j] = 1.0;
            for k in j + 1..cols {
                row[k] = 1.0 - turns_ratio;
            }
            inductor_stages.push(j);
            rows.push(row);
        }
    }
    let mut f_lc = DMatrix::zeros(rows.len(), cols);
    for (r, row) in rows.iter().enumerate() {
        f_lc.row_mut(r).copy_from(row);
    }
    let mut f_zc = DMatrix::zeros(m, cols);
    for j in 0..m {
        for k in j..cols {
            f_zc[(j, k)] = 1.0;
        }
    }
    Ok(EffectiveLoopMatrices {
        f_jc,
        f_lc,
        f_zc,
        f_xc: DMatrix::zeros(0, cols),
        f_vc: DMatrix::zeros(0, cols),
        junction_ports: vec![0],
        resistor_ports: Vec::new(),
        source_ports: Vec::new(),
        inductor_stages,
        n_stage_caps: m,
        n_ports: 1,
    })
}

/// One-port voltage-law derivation: `(F_LC^T)^eff = F_LC^T - F_TC^T N`
/// assembled from the binary loop matrices and the diagonal turns-ratio
/// matrix, then transposed back.
pub fn oneport_effective_loops_voltage_law(
    circuit: &OnePortBruneCircuit,
) -> Result<EffectiveLoopMatrices> {
    circuit.validate()?;
    let m = circuit.stages.len();
    let cols = m + 1;
    // binary one-port loop matrices over *all* stages
    let mut f_lc_bin = DMatrix::zeros(m, cols);
    let mut f_tc = DMatrix::zeros(m, cols);
    for j in 0..m {
        for k in j..cols {
            f_lc_bin[(j, k)] = 1.0;
        }
        for k in j + 1..cols {
            f_tc[(j, k)] = 1.0;
        }
    }
    let nmat = DMatrix::from_fn(m, m, |i, j| {
        if i != j {
            return 0.0;
        }
        match circuit.stages[i].kind {
            OnePortStageKind::Regular { turns_ratio, .. } => turns_ratio,
            OnePortStageKind::CapacitiveDegenerate { .. } => 0.0,
        }
    });
    let lt_full = f_lc_bin.transpose() - f_tc.transpose() * nmat;
    // keep columns of regular stages only (degenerate stages have no
    // inductor branch)
    let mut inductor_stages = Vec::new();
    for (j, st) in circuit.stages.iter().enumerate() {
        if matches!(st.kind, OnePortStageKind::Regular { .. }) {
            inductor_stages.push(j);
        }
    }
    let mut f_lc = DMatrix::zeros(inductor_stages.len(), cols);
    for (r, &j) in inductor_stages.iter().enumerate() {
        for c in 0..cols {
            f_lc[(r, c)] = lt_full[(c, j)];
        }
    }
    let f_jc = DMatrix::from_element(1, cols, 1.0);
    let mut f_zc = DMatrix::zeros(m, cols);
    for j in 0..m {
        for k in j..cols {
            f_zc[(j, k)] = 1.0;
        }
    }
    Ok(EffectiveLoopMatrices {
        f_jc,
        f_lc,
        f_zc,
        f_xc: DMatrix::zeros(0, cols),
        f_vc: DMatrix::zeros(0, cols),
        junction_ports: vec![0],
        resistor_ports: Vec::new(),
        source_ports: Vec::new(),
        inductor_stages,
        n_stage_caps: m,
        n_ports: 1,
    })
}

/// Embed a one-port circuit as a one-port "multiport" circuit with unit
/// Belevitch transformers; used to cross check the explicit one-port
/// patterns against the general iteration.
pub fn embed_oneport(circuit: &OnePortBruneCircuit) -> MultiportBruneCircuit {
    use crate::multiport::{Belevitch, MultiportStage};
    let unit = Belevitch::from_matrix(&DMatrix::identity(1, 1));
    MultiportBruneCircuit {
        n_ports: 1,
        stages: circuit
            .stages
            .iter()
            .map(|st| MultiportStage {
                transformer: unit.clone(),
                resistance: st.resistance,
                kind: match st.kind {
                    OnePortStageKind::Regular {
                        turns_ratio,
                        inductance,
                        capacitance,
                    } => MultiportStageKind::Regular {
                        turns_ratio,
                        inductance,
                        capacitance,
                        coupling: Vec::new(),
                    },
                    OnePortStageKind::CapacitiveDegenerate { capacitance } => {
                        MultiportStageKind::CapacitiveDegenerate { capacitance }
                    }
                },
                gyration: None,
                extraction_frequency: st.extraction_frequency,
            })
            .collect(),
        terminal_transformer: unit,
        terminal_resistances: vec![circuit.terminal_resistance],
    }
}

/// Stage capacitances `C_1 .. C_M` of a multiport circuit.
pub fn stage_capacitances(circuit: &MultiportBruneCircuit) -> DVector<f64> {
    DVector::from_fn(circuit.stages.len(), |j, _| match &circuit.stages[j].kind {
        MultiportStageKind::Regular { capacitance, .. } => *capacitance,
        MultiportStageKind::CapacitiveDegenerate { capacitance } => *capacitance,
    })
}

/// Series resistances `r_1 .. r_M` of a multiport circuit.
pub fn series_resistances(circuit: &MultiportBruneCircuit) -> DVector<f64> {
    DVector::from_fn(circuit.stages.len(), |j, _| circuit.stages[j].resistance)
}
