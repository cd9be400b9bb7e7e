//! Multiport Brune synthesis in state space.
//!
//! Each stage extracts a Belevitch transformer together with a resistor at
//! the first port, then peels the reactive part exactly as in the one-port
//! case, with an extra transformer vector coupling the first port's
//! capacitor to the remaining ports. The recursion ends in a terminal
//! Belevitch transformer shunted by one resistor per port.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{golden_section_min, GridSpec};
use crate::model::{check_positive_real, PrVerdict, StateSpaceModel};
use crate::oneport::{ExtractionFrequency, SynthesisOptions};

/// Ideal multiwinding transformer with turns-ratio matrix `T`, following the
/// current law `I_left = T I_right` and voltage law `V_right = T^T V_left`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belevitch {
    pub t: Vec<Vec<f64>>,
}

impl Belevitch {
    pub fn from_matrix(t: &DMatrix<f64>) -> Self {
        Self {
            t: (0..t.nrows())
                .map(|i| (0..t.ncols()).map(|j| t[(i, j)]).collect())
                .collect(),
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let nr = self.t.len();
        let nc = self.t.first().map_or(0, |r| r.len());
        DMatrix::from_fn(nr, nc, |i, j| self.t[i][j])
    }

    /// `|T^T T - I|_F`, zero for transformers from the eigendecomposition path.
    pub fn orthogonality_defect(&self) -> f64 {
        let t = self.matrix();
        let n = t.ncols();
        (t.transpose() * &t - DMatrix::identity(n, n)).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MultiportStageKind {
    Regular {
        turns_ratio: f64,
        inductance: f64,
        capacitance: f64,
        /// Coupling vector of the series transformer to ports `2..N`
        /// (length `N - 1`).
        coupling: Vec<f64>,
    },
    CapacitiveDegenerate {
        capacitance: f64,
    },
}

/// One multiport Brune stage: Belevitch transformer, port-1 resistor, then
/// the reactive part; `gyration` is present only for non-reciprocal inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiportStage {
    pub transformer: Belevitch,
    pub resistance: f64,
    pub kind: MultiportStageKind,
    pub gyration: Option<Vec<f64>>,
    pub extraction_frequency: ExtractionFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiportBruneCircuit {
    pub n_ports: usize,
    pub stages: Vec<MultiportStage>,
    pub terminal_transformer: Belevitch,
    pub terminal_resistances: Vec<f64>,
}

impl MultiportBruneCircuit {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_ports;
        for (k, st) in self.stages.iter().enumerate() {
            let t = st.transformer.matrix();
            if t.nrows() != n || t.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "stage {} transformer must be {n}x{n}",
                    k + 1
                )));
            }
            if st.resistance < 0.0 {
                return Err(Error::NonPositiveElement {
                    name: "stage resistance",
                    value: st.resistance,
                });
            }
            match &st.kind {
                MultiportStageKind::Regular {
                    turns_ratio,
                    inductance,
                    capacitance,
                    coupling,
                } => {
                    if *inductance <= 0.0 {
                        return Err(Error::NonPositiveElement {
                            name: "inductance",
                            value: *inductance,
                        });
                    }
                    if *capacitance <= 0.0 {
                        return Err(Error::NonPositiveElement {
                            name: "capacitance",
                            value: *capacitance,
                        });
                    }
                    if *turns_ratio == 0.0 {
                        return Err(Error::StructureMismatch(format!(
                            "stage {} has zero turns ratio",
                            k + 1
                        )));
                    }
                    if coupling.len() != n - 1 {
                        return Err(Error::DimensionMismatch(format!(
                            "stage {} coupling vector must have length {}",
                            k + 1,
                            n - 1
                        )));
                    }
                }
                MultiportStageKind::CapacitiveDegenerate { capacitance } => {
                    if *capacitance <= 0.0 {
                        return Err(Error::NonPositiveElement {
                            name: "capacitance",
                            value: *capacitance,
                        });
                    }
                }
            }
            if let Some(g) = &st.gyration {
                if g.len() != n - 1 {
                    return Err(Error::DimensionMismatch(format!(
                        "stage {} gyration vector must have length {}",
                        k + 1,
                        n - 1
                    )));
                }
            }
        }
        let tt = self.terminal_transformer.matrix();
        if tt.nrows() != n || tt.ncols() != n {
            return Err(Error::DimensionMismatch(
                "terminal transformer must be NxN".into(),
            ));
        }
        if self.terminal_resistances.len() != n {
            return Err(Error::DimensionMismatch(
                "one terminal resistor per port required".into(),
            ));
        }
        for r in &self.terminal_resistances {
            if *r < 0.0 {
                return Err(Error::NonPositiveElement {
                    name: "terminal resistance",
                    value: *r,
                });
            }
        }
        Ok(())
    }

    pub fn n_regular(&self) -> usize {
        self.stages
            .iter()
            .filter(|s| matches!(s.kind, MultiportStageKind::Regular { .. }))
            .count()
    }

    pub fn n_degenerate(&self) -> usize {
        self.stages.len() - self.n_regular()
    }

    pub fn has_gyrators(&self) -> bool {
        self.stages.iter().any(|s| s.gyration.is_some())
    }
}

/// Result of one Belevitch + resistor extraction.
#[derive(Debug, Clone)]
pub struct MultiportExtraction {
    pub resistance: f64,
    pub frequency: ExtractionFrequency,
    pub transformer: DMatrix<f64>,
    /// Port-conjugated model with the resistor removed:
    /// `B <- B T`, `C <- T^T C`, `D <- T^T D T - r e1 e1^T`.
    pub reduced: StateSpaceModel,
    pub warnings: Vec<String>,
}

/// Ascending eigenvalues and sign-fixed eigenvectors of a symmetric matrix.
pub(crate) fn sorted_symmetric_eigen(h: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = h.nrows();
    let se = nalgebra::SymmetricEigen::new(h.clone());
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let mut vals = DVector::zeros(n);
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vals[k] = se.eigenvalues[i];
        let mut col = se.eigenvectors.column(i).clone_owned();
        // deterministic sign: largest-magnitude entry positive
        let mut big = 0;
        for r in 1..n {
            if col[r].abs() > col[big].abs() {
                big = r;
            }
        }
        if col[big] < 0.0 {
            col = -col;
        }
        vecs.set_column(k, &col);
    }
    (vals, vecs)
}

fn lambda_min(model: &StateSpaceModel, omega: f64) -> f64 {
    match model.hermitian_part(omega) {
        Ok(h) => nalgebra::SymmetricEigen::new(h).eigenvalues.min(),
        Err(_) => f64::INFINITY,
    }
}

/// `d/d omega` of the symmetrized real part.
fn hermitian_part_deriv(model: &StateSpaceModel, omega: f64) -> Option<DMatrix<f64>> {
    let n = model.n_states();
    if n == 0 {
        return Some(DMatrix::zeros(model.n_ports(), model.n_ports()));
    }
    let w2 = DMatrix::identity(n, n) * (omega * omega) + &model.a * &model.a;
    let lu = w2.lu();
    let x = lu.solve(&model.b)?;
    let x2 = lu.solve(&x)?;
    let g = &model.c * &model.a * x2 * (2.0 * omega);
    Some((&g + g.transpose()) * 0.5)
}

fn lambda_min_deriv(model: &StateSpaceModel, omega: f64) -> Option<f64> {
    let h = model.hermitian_part(omega).ok()?;
    let (_, vecs) = sorted_symmetric_eigen(&h);
    let v = vecs.column(0);
    let dh = hermitian_part_deriv(model, omega)?;
    Some((v.transpose() * dh * v)[(0, 0)])
}

fn polish_lambda_min(model: &StateSpaceModel, w0: f64, lo: f64, hi: f64) -> f64 {
    let mut w_prev = w0 * (1.0 - 1e-6);
    let mut w = w0;
    let (mut g_prev, mut g) = match (lambda_min_deriv(model, w_prev), lambda_min_deriv(model, w)) {
        (Some(a), Some(b)) => (a, b),
        _ => return w0,
    };
    for _ in 0..40 {
        let denom = g - g_prev;
        if denom == 0.0 {
            break;
        }
        let w_next = w - g * (w - w_prev) / denom;
        if !w_next.is_finite() || w_next <= lo || w_next >= hi {
            break;
        }
        w_prev = w;
        g_prev = g;
        w = w_next;
        g = match lambda_min_deriv(model, w) {
            Some(v) => v,
            None => break,
        };
        if (w - w_prev).abs() <= 1e-15 * w.abs() {
            break;
        }
    }
    if lambda_min(model, w) <= lambda_min(model, w0) {
        w
    } else {
        w0
    }
}

fn min_eig_search(model: &StateSpaceModel, opts: &SynthesisOptions) -> (f64, ExtractionFrequency) {
    let r_inf = {
        let dh = (&model.d + model.d.transpose()) * 0.5;
        nalgebra::SymmetricEigen::new(dh).eigenvalues.min()
    };
    if model.n_states() == 0 {
        return (r_inf, ExtractionFrequency::Infinite);
    }
    let r_zero = lambda_min(model, 0.0);
    let eigs = model.eigenvalues();
    let grid = GridSpec::around_eigenvalues(&eigs, opts.grid_factor, opts.min_search_points);
    let pts = grid.points();
    let vals: Vec<f64> = pts.iter().map(|&w| lambda_min(model, w)).collect();
    let mut best_i = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v < vals[best_i] {
            best_i = i;
        }
    }
    let scale = vals
        .iter()
        .fold(r_zero.abs().max(r_inf.abs()), |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut candidates: Vec<(f64, f64)> = Vec::new();
    if best_i > 0 && best_i + 1 < pts.len() {
        candidates.push((pts[best_i - 1], pts[best_i + 1]));
    }
    for ev in &eigs {
        let w = ev.im.abs();
        if w > 0.0 {
            candidates.push((w * 0.8, w * 1.25));
        }
    }
    let mut best: Option<(f64, f64)> = None;
    for (lo, hi) in candidates {
        let lo = lo.max(grid.omega_min * 1e-3);
        let wmin =
            golden_section_min(|lw: f64| lambda_min(model, lw.exp()), lo.ln(), hi.ln(), 80).exp();
        let wmin = polish_lambda_min(model, wmin, lo, hi);
        let v = lambda_min(model, wmin);
        if best.is_none_or(|(_, bv)| v < bv) {
            best = Some((wmin, v));
        }
    }
    let (omega_int, r_int) = best.unwrap_or((pts[best_i], vals[best_i]));
    let tie_tol = 1e-11 * scale;
    if r_int < r_zero - tie_tol && r_int < r_inf - tie_tol {
        (r_int, ExtractionFrequency::Finite(omega_int))
    } else if r_inf <= r_zero + tie_tol {
        (r_inf, ExtractionFrequency::Infinite)
    } else {
        (r_zero, ExtractionFrequency::Zero)
    }
}

fn conjugate_ports(model: &StateSpaceModel, t: &DMatrix<f64>, r1: f64) -> StateSpaceModel {
    let mut d = t.transpose() * &model.d * t;
    d[(0, 0)] -= r1;
    StateSpaceModel {
        a: model.a.clone(),
        b: &model.b * t,
        c: t.transpose() * &model.c,
        d,
        e: None,
    }
}

/// Eigendecomposition path: `Z_H(j omega) = U S U^T`, the extracted resistor
/// is the global minimum of the smallest eigenvalue and the Belevitch
/// transformer is the orthogonal `U` at the minimizer.
pub fn extract_resistance_and_transformer(
    model: &StateSpaceModel,
    opts: &SynthesisOptions,
) -> Result<MultiportExtraction> {
    if model.e.is_some() {
        return Err(Error::SlopeTermPresent);
    }
    let m = model.n_ports();
    let (r1, freq) = min_eig_search(model, opts);
    let mut warnings = Vec::new();
    let h = match freq {
        ExtractionFrequency::Finite(w) => model.hermitian_part(w)?,
        ExtractionFrequency::Infinite => (&model.d + model.d.transpose()) * 0.5,
        ExtractionFrequency::Zero => model.hermitian_part(0.0)?,
    };
    let (vals, u) = sorted_symmetric_eigen(&h);
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    if r1 < -1e-9 * scale {
        return Err(Error::NotPr(format!("min eigenvalue {r1:.6e} is negative")));
    }
    if m > 1 && (vals[1] - vals[0]).abs() <= 1e-8 * scale {
        warnings.push(format!(
            "EigenOrderingAmbiguity: near-degenerate smallest eigenvalues \
             ({:.6e} vs {:.6e}) at the extraction frequency",
            vals[0], vals[1]
        ));
    }
    let r1 = r1.max(0.0);
    Ok(MultiportExtraction {
        resistance: r1,
        frequency: freq,
        transformer: u.clone(),
        reduced: conjugate_ports(model, &u, r1),
        warnings,
    })
}

/// Determinant-ratio path: `r1 = min det(Z_H) / minor_11(Z_H)`, with the
/// transformer from a congruence (Gauss) diagonalization that places the
/// port-1 pivot last. The transformer is generally non-orthogonal.
pub fn extract_resistance_gauss(
    model: &StateSpaceModel,
    opts: &SynthesisOptions,
) -> Result<MultiportExtraction> {
    if model.e.is_some() {
        return Err(Error::SlopeTermPresent);
    }
    let m = model.n_ports();
    if m == 1 {
        // the ratio reduces to Re z itself
        let ext = crate::oneport::extract_resistance(model, opts)?;
        return Ok(MultiportExtraction {
            resistance: ext.resistance,
            frequency: ext.frequency,
            transformer: DMatrix::identity(1, 1),
            reduced: ext.reduced,
            warnings: Vec::new(),
        });
    }
    let ratio_of = |h: &DMatrix<f64>| -> f64 {
        let det = h.determinant();
        let minor = h.view((1, 1), (m - 1, m - 1)).determinant();
        if minor.abs() < 1e-300 {
            f64::INFINITY
        } else {
            det / minor
        }
    };
    let ratio = |omega: f64| -> f64 {
        match model.hermitian_part(omega) {
            Ok(h) => ratio_of(&h),
            Err(_) => f64::INFINITY,
        }
    };
    let r_inf = ratio_of(&((&model.d + model.d.transpose()) * 0.5));
    let (freq, r1) = if model.n_states() == 0 {
        (ExtractionFrequency::Infinite, r_inf)
    } else {
        let r_zero = ratio(0.0);
        let grid = GridSpec::around_eigenvalues(
            &model.eigenvalues(),
            opts.grid_factor,
            opts.min_search_points,
        );
        let pts = grid.points();
        let vals: Vec<f64> = pts.iter().map(|&w| ratio(w)).collect();
        let mut best_i = 0;
        for (i, v) in vals.iter().enumerate() {
            if *v < vals[best_i] {
                best_i = i;
            }
        }
        let mut best = (pts[best_i], vals[best_i]);
        if best_i > 0 && best_i + 1 < pts.len() {
            let (lo, hi) = (pts[best_i - 1], pts[best_i + 1]);
            let w = golden_section_min(|lw: f64| ratio(lw.exp()), lo.ln(), hi.ln(), 90).exp();
            if ratio(w) < best.1 {
                best = (w, ratio(w));
            }
        }
        for ev in model.eigenvalues() {
            let w = ev.im.abs();
            if w > 0.0 {
                let wm = golden_section_min(
                    |lw: f64| ratio(lw.exp()),
                    (w * 0.8).ln(),
                    (w * 1.25).ln(),
                    90,
                )
                .exp();
                if ratio(wm) < best.1 {
                    best = (wm, ratio(wm));
                }
            }
        }
        let scale = vals
            .iter()
            .filter(|v| v.is_finite())
            .fold(r_inf.abs().max(r_zero.abs()), |a, v| a.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let tie = 1e-11 * scale;
        if best.1 < r_zero - tie && best.1 < r_inf - tie {
            (ExtractionFrequency::Finite(best.0), best.1)
        } else if r_inf <= r_zero + tie {
            (ExtractionFrequency::Infinite, r_inf)
        } else {
            (ExtractionFrequency::Zero, r_zero)
        }
    };
    if !r1.is_finite() {
        return Err(Error::SingularMinor);
    }
    let h = match freq {
        ExtractionFrequency::Finite(w) => model.hermitian_part(w)?,
        ExtractionFrequency::Infinite => (&model.d + model.d.transpose()) * 0.5,
        ExtractionFrequency::Zero => model.hermitian_part(0.0)?,
    };
    // congruence H = G diag(d) G^T eliminating ports 2..N first, so the last
    // pivot is det/minor_11; reorder to put that pivot at position 1
    let order: Vec<usize> = (1..m).chain(std::iter::once(0)).collect();
    let hp = DMatrix::from_fn(m, m, |i, j| h[(order[i], order[j])]);
    let mut l = DMatrix::identity(m, m);
    let mut dvec = vec![0.0f64; m];
    let mut work = hp.clone();
    for k in 0..m {
        let piv = work[(k, k)];
        if k < m - 1 && piv.abs() <= 1e-13 * h.norm().max(1e-300) {
            return Err(Error::SingularMinor);
        }
        dvec[k] = piv;
        for i in k + 1..m {
            let f = if piv.abs() > 0.0 {
                work[(i, k)] / piv
            } else {
                0.0
            };
            l[(i, k)] = f;
            for j in k..m {
                let sub = f * work[(k, j)];
                work[(i, j)] -= sub;
            }
        }
    }
    // columns back to port order, with the port-1 pivot first
    let col_order: Vec<usize> = std::iter::once(m - 1).chain(0..m - 1).collect();
    let mut g = DMatrix::zeros(m, m);
    let mut lam = vec![0.0f64; m];
    for (q, &src) in col_order.iter().enumerate() {
        lam[q] = dvec[src];
        for i in 0..m {
            let pi = order.iter().position(|&o| o == i).unwrap();
            g[(i, q)] = l[(pi, src)];
        }
    }
    let r_pivot = lam[0];
    if (r_pivot - r1).abs() > 1e-6 * r1.abs().max(1e-12) && r1 > 1e-12 {
        return Err(Error::StructureMismatch(format!(
            "Gauss pivot {r_pivot:.6e} disagrees with searched minimum {r1:.6e}"
        )));
    }
    // turns matrix satisfying the Belevitch current law: T = G^{-T}
    let t = g.transpose().try_inverse().ok_or(Error::SingularMinor)?;
    Ok(MultiportExtraction {
        resistance: r1.max(0.0),
        frequency: freq,
        transformer: t.clone(),
        reduced: conjugate_ports(model, &t, r1.max(0.0)),
        warnings: vec!["non-orthogonal-T: transformer from Gauss diagonalization".into()],
    })
}

/// Gyration vector of an antisymmetric `D` part confined to row/column 1.
pub fn detect_gyrator(d: &DMatrix<f64>) -> Result<Option<DVector<f64>>> {
    let m = d.nrows();
    let anti = (d - d.transpose()) * 0.5;
    let scale = d.norm().max(1e-300);
    if anti.norm() <= 1e-9 * scale {
        return Ok(None);
    }
    for i in 1..m {
        for j in 1..m {
            if anti[(i, j)].abs() > 1e-9 * scale {
                return Err(Error::NonCanonicalAntisymmetry);
            }
        }
    }
    Ok(Some(DVector::from_fn(m - 1, |i, _| anti[(i + 1, 0)])))
}

/// Recovered multiport regular-stage parameters.
#[derive(Debug, Clone)]
pub struct MultiportStageParams {
    pub turns_ratio: f64,
    pub inductance: f64,
    pub capacitance: f64,
    pub coupling: DVector<f64>,
    pub gyration: Option<DVector<f64>>,
}

fn rel_check(name: &str, got: f64, want: f64, scale: f64, tol: f64) -> Result<()> {
    if (got - want).abs() > tol * scale.max(1e-300) {
        return Err(Error::StructureMismatch(format!(
            "{name}: {got:.9e} vs {want:.9e} (scale {scale:.3e})"
        )));
    }
    Ok(())
}

fn flip_state(model: &mut StateSpaceModel, k: usize) {
    let n = model.n_states();
    for j in 0..n {
        model.a[(k, j)] = -model.a[(k, j)];
    }
    for i in 0..n {
        model.a[(i, k)] = -model.a[(i, k)];
    }
    for j in 0..model.b.ncols() {
        model.b[(k, j)] = -model.b[(k, j)];
    }
    for i in 0..model.c.nrows() {
        model.c[(i, k)] = -model.c[(i, k)];
    }
}

/// Peel one regular multiport stage from a model satisfying
/// `Re Z_11(j omega1) = 0` with `D_11 > 0`. The coordinate transform comes
/// from the one-port lemma applied to the first columns of `B` and `C^T`.
pub fn peel_stage_multiport(
    model: &StateSpaceModel,
    omega1: f64,
    opts: &SynthesisOptions,
) -> Result<(MultiportStageParams, StateSpaceModel)> {
    let ns = model.n_states();
    let m = model.n_ports();
    let d1aa = model.d[(0, 0)];
    if d1aa <= 0.0 {
        return Err(Error::NonPositiveElement {
            name: "stage D_11",
            value: d1aa,
        });
    }
    let port1 = |m: &StateSpaceModel| -> StateSpaceModel {
        let k = m.n_states();
        StateSpaceModel {
            a: m.a.clone(),
            b: DMatrix::from_fn(k, 1, |i, _| m.b[(i, 0)]),
            c: DMatrix::from_fn(1, k, |_, j| m.c[(0, j)]),
            d: DMatrix::from_element(1, 1, m.d[(0, 0)]),
            e: None,
        }
    };
    let (_t, mut canon) =
        crate::oneport::refined_canonical_transform(model, port1, Some(omega1), 2)?;
    if canon.b[(ns - 1, 0)] < 0.0 {
        flip_state(&mut canon, ns - 1);
    }
    let e_aa = canon.a[(ns - 1, ns - 1)];
    if e_aa >= 0.0 {
        return Err(Error::NonPositiveElement {
            name: "A[n,n] (must be negative)",
            value: e_aa,
        });
    }
    let l1 = -d1aa / e_aa;
    let sl = l1.sqrt();
    let mut a = canon.a[(ns - 2, ns - 1)];
    let b = canon.b[(ns - 2, 0)];
    if a == 0.0 {
        return Err(Error::StructureMismatch("A[n-1,n] vanished".into()));
    }
    let n1 = 1.0 + b / (a * sl);
    if n1.abs() < 1e-12 {
        return Err(Error::StructureMismatch(
            "turns ratio collapsed to zero".into(),
        ));
    }
    if a * n1 < 0.0 {
        flip_state(&mut canon, ns - 2);
        a = -a;
    }
    let c1 = 1.0 / (n1 * a * sl).powi(2);
    let sc = c1.sqrt();

    // gyration shows up as the antisymmetric part of D confined to row/col 1
    let gyration = detect_gyrator(&canon.d)?;
    let mut dsym = canon.d.clone();
    if let Some(g) = &gyration {
        for i in 1..m {
            dsym[(i, 0)] -= g[i - 1];
            dsym[(0, i)] += g[i - 1];
        }
    }

    // coupling vector from the capacitor-state row of B (ports 2..N)
    let coupling = DVector::from_fn(m - 1, |j, _| canon.b[(ns - 2, j + 1)] * sc);
    let tol = opts.structure_tol;
    let b_scale = canon.b.norm();
    let a_scale = canon.a.norm();
    // cross check against the capacitor-state column of C; disagreement also
    // flags non-reciprocity the gyrator term cannot absorb
    for j in 0..m - 1 {
        rel_check(
            "coupling row/column symmetry",
            canon.c[(j + 1, ns - 2)] * sc,
            coupling[j],
            b_scale * sc,
            tol,
        )?;
    }
    rel_check("A[n,n-1]", canon.a[(ns - 1, ns - 2)], -a, a_scale, tol)?;
    rel_check("B[n,1]", canon.b[(ns - 1, 0)], d1aa / sl, b_scale, tol)?;
    rel_check("C[1,n]", canon.c[(0, ns - 1)], -d1aa / sl, b_scale, tol)?;
    rel_check(
        "C[1,n-1]",
        canon.c[(0, ns - 2)],
        canon.b[(ns - 2, 0)],
        b_scale,
        tol,
    )?;
    for j in 1..m {
        rel_check(
            "B[n,2..] vs D_AB/(n sqrt(L))",
            canon.b[(ns - 1, j)],
            dsym[(0, j)] / sl,
            b_scale,
            tol,
        )?;
        rel_check(
            "C[2..,n] vs -D_BA/(n sqrt(L))",
            canon.c[(j, ns - 1)],
            -dsym[(j, 0)] / sl,
            b_scale,
            tol,
        )?;
    }
    for i in 0..ns - 2 {
        rel_check("A[:,n-1] zeros", canon.a[(i, ns - 2)], 0.0, a_scale, tol)?;
        rel_check("A[n-1,:] zeros", canon.a[(ns - 2, i)], 0.0, a_scale, tol)?;
        rel_check(
            "A[:,n] vs -B_A/(n sqrt(L))",
            canon.a[(i, ns - 1)],
            -canon.b[(i, 0)] / sl,
            a_scale,
            tol,
        )?;
        rel_check(
            "A[n,:] vs C_A/(n sqrt(L))",
            canon.a[(ns - 1, i)],
            canon.c[(0, i)] / sl,
            a_scale,
            tol,
        )?;
    }

    // remainder blocks
    let a2 = canon.a.view((0, 0), (ns - 2, ns - 2)).clone_owned();
    let mut b2 = DMatrix::zeros(ns - 2, m);
    let mut c2 = DMatrix::zeros(m, ns - 2);
    for i in 0..ns - 2 {
        b2[(i, 0)] = canon.b[(i, 0)] * n1;
        c2[(0, i)] = canon.c[(0, i)] * n1;
        for j in 1..m {
            b2[(i, j)] = canon.b[(i, j)];
            c2[(j, i)] = canon.c[(j, i)];
        }
    }
    let mut d2 = DMatrix::zeros(m, m);
    d2[(0, 0)] = n1 * n1 * d1aa;
    for j in 1..m {
        d2[(0, j)] = n1 * dsym[(0, j)];
        d2[(j, 0)] = n1 * dsym[(j, 0)];
        for k in 1..m {
            d2[(j, k)] = dsym[(j, k)];
        }
    }
    let remainder = StateSpaceModel::new(a2, b2, c2, d2, None)?;
    Ok((
        MultiportStageParams {
            turns_ratio: n1,
            inductance: l1,
            capacitance: c1,
            coupling,
            gyration,
        },
        remainder,
    ))
}

/// Peel one multiport capacitive degenerate stage (`omega1 = inf`,
/// `D_11 = 0`, no coupling transformer).
pub fn peel_degenerate_capacitive_multiport(
    model: &StateSpaceModel,
    opts: &SynthesisOptions,
) -> Result<(f64, Option<DVector<f64>>, StateSpaceModel)> {
    let ns = model.n_states();
    let m = model.n_ports();
    let dscale = model
        .d
        .norm()
        .max(model.c.norm() * model.b.norm() / model.a.norm().max(1e-300));
    if model.d[(0, 0)].abs() > 1e-9 * dscale.max(1e-300) {
        return Err(Error::StructureMismatch(format!(
            "degenerate stage requires D_11 = 0, got {}",
            model.d[(0, 0)]
        )));
    }
    let port1 = |m: &StateSpaceModel| -> StateSpaceModel {
        let k = m.n_states();
        StateSpaceModel {
            a: m.a.clone(),
            b: DMatrix::from_fn(k, 1, |i, _| m.b[(i, 0)]),
            c: DMatrix::from_fn(1, k, |_, j| m.c[(0, j)]),
            d: DMatrix::zeros(1, 1),
            e: None,
        }
    };
    let (_t, mut canon) = crate::oneport::refined_canonical_transform(model, port1, None, 2)?;
    if canon.b[(ns - 1, 0)] < 0.0 {
        flip_state(&mut canon, ns - 1);
    }
    let binv = canon.b[(ns - 1, 0)];
    if binv <= 0.0 {
        return Err(Error::StructureMismatch("B[n,1] must be nonzero".into()));
    }
    let c1 = 1.0 / (binv * binv);
    let sc = c1.sqrt();
    let f = canon.a[(ns - 1, ns - 1)];
    if f >= 0.0 {
        return Err(Error::NonPositiveElement {
            name: "remainder resistance (degenerate stage)",
            value: f,
        });
    }
    let d2aa = -1.0 / (f * c1);
    let gyration = detect_gyrator(&canon.d)?;
    let mut dsym = canon.d.clone();
    if let Some(g) = &gyration {
        for i in 1..m {
            dsym[(i, 0)] -= g[i - 1];
            dsym[(0, i)] += g[i - 1];
        }
    }

    let tol = opts.structure_tol;
    let b_scale = canon.b.norm();
    rel_check("C[1,n] = B[n,1]", canon.c[(0, ns - 1)], binv, b_scale, tol)?;
    for i in 0..ns - 1 {
        rel_check("B[:,1] zeros", canon.b[(i, 0)], 0.0, b_scale, tol)?;
        rel_check("C[1,:] zeros", canon.c[(0, i)], 0.0, b_scale, tol)?;
    }
    for j in 1..m {
        rel_check("D row 1 zeros", dsym[(0, j)], 0.0, dsym.norm(), 1e-7)?;
        rel_check("D col 1 zeros", dsym[(j, 0)], 0.0, dsym.norm(), 1e-7)?;
    }

    let scale = d2aa * sc;
    let b2a = canon.a.view((0, ns - 1), (ns - 1, 1)).clone_owned() * scale;
    let c2a = canon.a.view((ns - 1, 0), (1, ns - 1)).clone_owned() * scale;
    let d2ab = canon.b.view((ns - 1, 1), (1, m - 1)).clone_owned() * scale;
    let d2ba = canon.c.view((1, ns - 1), (m - 1, 1)).clone_owned() * scale;
    let d1bb = dsym.view((1, 1), (m - 1, m - 1)).clone_owned();
    let d2bb = &d1bb + &d2ba * &d2ab / d2aa;
    let b2b = canon.b.view((0, 1), (ns - 1, m - 1)).clone_owned() + &b2a * &d2ab / d2aa;
    let c2b = canon.c.view((1, 0), (m - 1, ns - 1)).clone_owned() + &d2ba * &c2a / d2aa;
    let a2 = canon.a.view((0, 0), (ns - 1, ns - 1)).clone_owned() + &b2a * &c2a / d2aa;

    let mut b2 = DMatrix::zeros(ns - 1, m);
    let mut c2 = DMatrix::zeros(m, ns - 1);
    let mut d2 = DMatrix::zeros(m, m);
    b2.view_mut((0, 0), (ns - 1, 1)).copy_from(&b2a);
    b2.view_mut((0, 1), (ns - 1, m - 1)).copy_from(&b2b);
    c2.view_mut((0, 0), (1, ns - 1)).copy_from(&c2a);
    c2.view_mut((1, 0), (m - 1, ns - 1)).copy_from(&c2b);
    d2[(0, 0)] = d2aa;
    d2.view_mut((0, 1), (1, m - 1)).copy_from(&d2ab);
    d2.view_mut((1, 0), (m - 1, 1)).copy_from(&d2ba);
    d2.view_mut((1, 1), (m - 1, m - 1)).copy_from(&d2bb);
    let remainder = StateSpaceModel::new(a2, b2, c2, d2, None)?;
    Ok((c1, gyration, remainder))
}

/// Orthogonal factorization of the terminal stage: `D = T diag(R) T^T` with
/// nonnegative resistors (tiny negative eigenvalues are clamped to zero).
pub fn factor_terminal_stage(
    d_rem: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, Vec<f64>, Vec<String>)> {
    let m = d_rem.nrows();
    let scale = d_rem.norm().max(1e-300);
    if (d_rem - d_rem.transpose()).norm() > 1e-8 * scale {
        return Err(Error::StructureMismatch(
            "terminal stage must be symmetric".into(),
        ));
    }
    let sym = (d_rem + d_rem.transpose()) * 0.5;
    let (vals, vecs) = sorted_symmetric_eigen(&sym);
    let mut warnings = Vec::new();
    let mut rs = Vec::with_capacity(m);
    for k in 0..m {
        let v = vals[k];
        if v < -1e-9 * scale {
            return Err(Error::NotPsd(v));
        }
        if v < 0.0 {
            warnings.push(format!(
                "terminal eigenvalue {v:.3e} clamped to zero (within tolerance)"
            ));
            rs.push(0.0);
        } else {
            rs.push(v);
        }
    }
    Ok((vecs, rs, warnings))
}

/// Result of a full multiport synthesis.
#[derive(Debug, Clone)]
pub struct MultiportSynthesis {
    pub circuit: MultiportBruneCircuit,
    pub warnings: Vec<String>,
}

/// Largest relative asymmetry of `Z` over a coarse grid.
pub fn reciprocity_defect(model: &StateSpaceModel) -> f64 {
    let mut worst = {
        let d = &model.d;
        let n = d.norm();
        if n == 0.0 {
            0.0
        } else {
            (d - d.transpose()).norm() / n
        }
    };
    if model.n_states() > 0 {
        let grid = GridSpec::around_eigenvalues(&model.eigenvalues(), 10.0, 64);
        for omega in grid.points() {
            if let Ok(z) = model.eval(num_complex::Complex64::new(0.0, omega)) {
                let n = z.norm();
                if n > 0.0 {
                    worst = worst.max((&z - z.transpose()).norm() / n);
                }
            }
        }
    }
    worst
}

/// Full multiport Brune recursion: alternate extraction and peeling until no
/// states remain, then factor the terminal stage.
pub fn synthesize_multiport(
    model: &StateSpaceModel,
    opts: &SynthesisOptions,
) -> Result<MultiportSynthesis> {
    if model.e.is_some() {
        return Err(Error::SlopeTermPresent);
    }
    if !model.is_stable() {
        return Err(Error::NotPr("state matrix is not stable".into()));
    }
    let n_ports = model.n_ports();
    let mut warnings = Vec::new();
    let mut current = model.clone();
    let mut stages: Vec<MultiportStage> = Vec::new();
    let max_stages = model.n_states() + 1;
    while current.n_states() > 0 {
        if stages.len() > max_stages {
            return Err(Error::StructureMismatch(
                "stage count exceeded the state count".into(),
            ));
        }
        let ext = extract_resistance_and_transformer(&current, opts)?;
        warnings.extend(ext.warnings.iter().cloned());
        let stage_idx = stages.len() + 1;
        let dscale = ext.reduced.d.norm().max(1.0);
        match ext.frequency {
            ExtractionFrequency::Zero => {
                return Err(Error::InductiveDegenerateUnsupported(format!(
                    " (stage {stage_idx})"
                )))
            }
            ExtractionFrequency::Infinite => {
                let (c1, gyr, remainder) =
                    peel_degenerate_capacitive_multiport(&ext.reduced, opts)?;
                stages.push(MultiportStage {
                    transformer: Belevitch::from_matrix(&ext.transformer),
                    resistance: ext.resistance,
                    kind: MultiportStageKind::CapacitiveDegenerate { capacitance: c1 },
                    gyration: gyr.map(|g| g.iter().copied().collect()),
                    extraction_frequency: ExtractionFrequency::Infinite,
                });
                current = remainder;
            }
            ExtractionFrequency::Finite(w1) => {
                if ext.reduced.d[(0, 0)].abs() <= 1e-12 * dscale {
                    let mut reduced = ext.reduced.clone();
                    reduced.d[(0, 0)] = 0.0;
                    let (c1, gyr, remainder) =
                        peel_degenerate_capacitive_multiport(&reduced, opts)?;
                    stages.push(MultiportStage {
                        transformer: Belevitch::from_matrix(&ext.transformer),
                        resistance: ext.resistance,
                        kind: MultiportStageKind::CapacitiveDegenerate { capacitance: c1 },
                        gyration: gyr.map(|g| g.iter().copied().collect()),
                        extraction_frequency: ExtractionFrequency::Infinite,
                    });
                    current = remainder;
                } else {
                    let (params, remainder) = peel_stage_multiport(&ext.reduced, w1, opts)?;
                    stages.push(MultiportStage {
                        transformer: Belevitch::from_matrix(&ext.transformer),
                        resistance: ext.resistance,
                        kind: MultiportStageKind::Regular {
                            turns_ratio: params.turns_ratio,
                            inductance: params.inductance,
                            capacitance: params.capacitance,
                            coupling: params.coupling.iter().copied().collect(),
                        },
                        gyration: params.gyration.map(|g| g.iter().copied().collect()),
                        extraction_frequency: ExtractionFrequency::Finite(w1),
                    });
                    current = remainder;
                }
            }
        }
        if opts.check_remainders && current.n_states() > 0 {
            let grid = GridSpec::around_eigenvalues(
                &current.eigenvalues(),
                opts.grid_factor,
                opts.pr_points,
            );
            let report = check_positive_real(&current, Some(&grid), None);
            if report.verdict == PrVerdict::NotPr {
                return Err(Error::NotPr(format!(
                    "remainder after stage {stage_idx} failed the PR check \
                     (min eig {:.3e} at {:.3e} rad/s)",
                    report.min_hermitian_eig, report.min_frequency
                )));
            }
        }
    }
    let (t_term, rs, mut term_warnings) = factor_terminal_stage(&current.d)?;
    warnings.append(&mut term_warnings);
    let circuit = MultiportBruneCircuit {
        n_ports,
        stages,
        terminal_transformer: Belevitch::from_matrix(&t_term),
        terminal_resistances: rs,
    };
    circuit.validate()?;
    Ok(MultiportSynthesis { circuit, warnings })
}

/// Forward composition of one regular multiport stage over an inner model.
pub(crate) fn compose_regular_multiport(
    inner: &StateSpaceModel,
    n1: f64,
    l1: f64,
    c1: f64,
    coupling: &DVector<f64>,
    gyration: Option<&DVector<f64>>,
) -> StateSpaceModel {
    let ns = inner.n_states();
    let m = inner.n_ports();
    let sl = l1.sqrt();
    let sc = c1.sqrt();
    let d2aa = inner.d[(0, 0)];
    let mut a = DMatrix::zeros(ns + 2, ns + 2);
    a.view_mut((0, 0), (ns, ns)).copy_from(&inner.a);
    for i in 0..ns {
        a[(i, ns + 1)] = -inner.b[(i, 0)] / (n1 * sl);
        a[(ns + 1, i)] = inner.c[(0, i)] / (n1 * sl);
    }
    a[(ns, ns + 1)] = 1.0 / (n1 * sl * sc);
    a[(ns + 1, ns)] = -1.0 / (n1 * sl * sc);
    a[(ns + 1, ns + 1)] = -d2aa / (n1 * n1 * l1);
    let mut b = DMatrix::zeros(ns + 2, m);
    let mut c = DMatrix::zeros(m, ns + 2);
    for i in 0..ns {
        b[(i, 0)] = inner.b[(i, 0)] / n1;
        c[(0, i)] = inner.c[(0, i)] / n1;
        for j in 1..m {
            b[(i, j)] = inner.b[(i, j)];
            c[(j, i)] = inner.c[(j, i)];
        }
    }
    b[(ns, 0)] = (1.0 - 1.0 / n1) / sc;
    c[(0, ns)] = (1.0 - 1.0 / n1) / sc;
    for j in 1..m {
        b[(ns, j)] = coupling[j - 1] / sc;
        c[(j, ns)] = coupling[j - 1] / sc;
    }
    b[(ns + 1, 0)] = d2aa / (n1 * n1 * sl);
    c[(0, ns + 1)] = -d2aa / (n1 * n1 * sl);
    for j in 1..m {
        b[(ns + 1, j)] = inner.d[(0, j)] / (n1 * sl);
        c[(j, ns + 1)] = -inner.d[(j, 0)] / (n1 * sl);
    }
    let mut d = DMatrix::zeros(m, m);
    d[(0, 0)] = d2aa / (n1 * n1);
    for j in 1..m {
        d[(0, j)] = inner.d[(0, j)] / n1;
        d[(j, 0)] = inner.d[(j, 0)] / n1;
        for k in 1..m {
            d[(j, k)] = inner.d[(j, k)];
        }
    }
    if let Some(g) = gyration {
        for j in 1..m {
            d[(0, j)] -= g[j - 1];
            d[(j, 0)] += g[j - 1];
        }
    }
    StateSpaceModel::new(a, b, c, d, None).expect("stage composition shapes")
}

/// Forward composition of one multiport capacitive degenerate stage.
pub(crate) fn compose_degenerate_multiport(inner: &StateSpaceModel, c1: f64) -> StateSpaceModel {
    let ns = inner.n_states();
    let m = inner.n_ports();
    let d2aa = inner.d[(0, 0)];
    assert!(d2aa > 0.0, "degenerate stage needs a positive inner D_11");
    let sc = c1.sqrt();
    let b2a = inner.b.column(0).clone_owned();
    let c2a = inner.c.row(0).clone_owned();
    let mut a = DMatrix::zeros(ns + 1, ns + 1);
    a.view_mut((0, 0), (ns, ns))
        .copy_from(&(&inner.a - &b2a * &c2a / d2aa));
    for i in 0..ns {
        a[(i, ns)] = b2a[i] / (d2aa * sc);
        a[(ns, i)] = c2a[i] / (d2aa * sc);
    }
    a[(ns, ns)] = -1.0 / (d2aa * c1);
    let mut b = DMatrix::zeros(ns + 1, m);
    let mut c = DMatrix::zeros(m, ns + 1);
    b[(ns, 0)] = 1.0 / sc;
    c[(0, ns)] = 1.0 / sc;
    for j in 1..m {
        for i in 0..ns {
            b[(i, j)] = inner.b[(i, j)] - b2a[i] * inner.d[(0, j)] / d2aa;
            c[(j, i)] = inner.c[(j, i)] - inner.d[(j, 0)] * c2a[i] / d2aa;
        }
        b[(ns, j)] = inner.d[(0, j)] / (d2aa * sc);
        c[(j, ns)] = inner.d[(j, 0)] / (d2aa * sc);
    }
    let mut d = DMatrix::zeros(m, m);
    for j in 1..m {
        for k in 1..m {
            d[(j, k)] = inner.d[(j, k)] - inner.d[(j, 0)] * inner.d[(0, k)] / d2aa;
        }
    }
    StateSpaceModel::new(a, b, c, d, None).expect("stage composition shapes")
}

/// Wrap an inner model with a Belevitch transformer and a port-1 resistor:
/// `Z_out = W^T (Z_in + r e1 e1^T) W` with `W = T^{-1}`.
pub(crate) fn wrap_transformer_resistor(
    inner: &StateSpaceModel,
    t: &DMatrix<f64>,
    r: f64,
) -> Result<StateSpaceModel> {
    let w = t
        .clone()
        .try_inverse()
        .ok_or(Error::SingularTransform { rcond: 0.0 })?;
    let mut d_in = inner.d.clone();
    d_in[(0, 0)] += r;
    Ok(StateSpaceModel {
        a: inner.a.clone(),
        b: &inner.b * &w,
        c: w.transpose() * &inner.c,
        d: w.transpose() * d_in * &w,
        e: None,
    })
}

/// Rebuild the full state-space model of a synthesized multiport circuit;
/// this is the oracle for the round-trip tests.
pub fn recompose_multiport(circuit: &MultiportBruneCircuit) -> Result<StateSpaceModel> {
    circuit.validate()?;
    let tt = circuit.terminal_transformer.matrix();
    let r = DMatrix::from_fn(circuit.n_ports, circuit.n_ports, |i, j| {
        if i == j {
            circuit.terminal_resistances[i]
        } else {
            0.0
        }
    });
    // terminal stage: orthogonal factorization T diag(R) T^T
    let mut model = StateSpaceModel::constant(&tt * r * tt.transpose());
    for stage in circuit.stages.iter().rev() {
        let gyr = stage
            .gyration
            .as_ref()
            .map(|g| DVector::from_vec(g.clone()));
        model = match &stage.kind {
            MultiportStageKind::Regular {
                turns_ratio,
                inductance,
                capacitance,
                coupling,
            } => compose_regular_multiport(
                &model,
                *turns_ratio,
                *inductance,
                *capacitance,
                &DVector::from_vec(coupling.clone()),
                gyr.as_ref(),
            ),
            MultiportStageKind::CapacitiveDegenerate { capacitance } => {
                let m = compose_degenerate_multiport(&model, *capacitance);
                match gyr {
                    None => m,
                    Some(g) => {
                        let mut m = m;
                        for j in 1..circuit.n_ports {
                            m.d[(0, j)] -= g[j - 1];
                            m.d[(j, 0)] += g[j - 1];
                        }
                        m
                    }
                }
            }
        };
        model = wrap_transformer_resistor(&model, &stage.transformer.matrix(), stage.resistance)?;
    }
    Ok(model)
}
