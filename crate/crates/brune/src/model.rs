//! State-space and pole-residue impedance models.
//!
//! A lumped passive N-port is represented either by real matrices
//! `{A, B, C, D}` (plus an optional slope term `E`) with
//! `Z(s) = D + C (sI - A)^{-1} B + E s`, or by a pole-residue expansion
//! `Z(s) = sum_k R_k / (s - s_k) + D + E s`. Both forms evaluate the same
//! impedance; the state-space form is the working representation of the
//! synthesis pipeline.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Relative threshold below which an LU pivot marks a matrix as singular.
pub(crate) const SINGULAR_RCOND: f64 = 1e-13;

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nr = rows.len();
    let nc = if nr == 0 { 0 } else { rows[0].len() };
    DMatrix::from_fn(nr, nc, |i, j| rows[i][j])
}

/// Real state-space realization of a multiport impedance.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    /// Optional slope term (residue at infinity), symmetric PSD when present.
    pub e: Option<DMatrix<f64>>,
}

impl StateSpaceModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        e: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = d.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch("A must be square".into()));
        }
        if b.nrows() != n || b.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "B must be {n}x{m}, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if c.nrows() != m || c.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "C must be {m}x{n}, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        if d.ncols() != m {
            return Err(Error::DimensionMismatch("D must be square".into()));
        }
        if let Some(e) = &e {
            if e.nrows() != m || e.ncols() != m {
                return Err(Error::DimensionMismatch("E must match D".into()));
            }
        }
        Ok(Self { a, b, c, d, e })
    }

    /// Constant (memoryless) network `Z(s) = D`.
    pub fn constant(d: DMatrix<f64>) -> Self {
        let m = d.nrows();
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, m),
            c: DMatrix::zeros(m, 0),
            d,
            e: None,
        }
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_ports(&self) -> usize {
        self.d.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        if self.n_states() == 0 {
            return Vec::new();
        }
        self.a
            .clone()
            .complex_eigenvalues()
            .iter()
            .copied()
            .collect()
    }

    /// All eigenvalues of `A` strictly in the open left half-plane.
    pub fn is_stable(&self) -> bool {
        self.eigenvalues().iter().all(|ev| ev.re < 0.0)
    }

    /// `Z(s) = D + C (sI - A)^{-1} B + E s`.
    pub fn eval(&self, s: Complex64) -> Result<DMatrix<Complex64>> {
        let n = self.n_states();
        let mut z = self.d.map(|x| Complex64::new(x, 0.0));
        if let Some(e) = &self.e {
            z += e.map(|x| x * s);
        }
        if n > 0 {
            let resolvent = DMatrix::from_fn(n, n, |i, j| {
                let diag = if i == j { s } else { Complex64::ZERO };
                diag - Complex64::new(self.a[(i, j)], 0.0)
            });
            let lu = resolvent.lu();
            if lu_rcond_c(&lu) < SINGULAR_RCOND {
                return Err(Error::SingularResolvent { s: format!("{s}") });
            }
            let bc = self.b.map(|x| Complex64::new(x, 0.0));
            let x = lu
                .solve(&bc)
                .ok_or(Error::SingularResolvent { s: format!("{s}") })?;
            z += self.c.map(|x| Complex64::new(x, 0.0)) * x;
        }
        Ok(z)
    }

    /// Real part of `Z(j omega)` through the real closed form
    /// `D - C A (omega^2 I + A^2)^{-1} B` (no complex arithmetic).
    pub fn real_part(&self, omega: f64) -> Result<DMatrix<f64>> {
        let n = self.n_states();
        let mut g = self.d.clone();
        if n > 0 {
            let w2 = DMatrix::identity(n, n) * (omega * omega) + &self.a * &self.a;
            let lu = w2.lu();
            if lu_rcond(&lu) < SINGULAR_RCOND {
                return Err(Error::SingularResolvent {
                    s: format!("{}j", omega),
                });
            }
            let x = lu.solve(&self.b).ok_or(Error::SingularResolvent {
                s: format!("{}j", omega),
            })?;
            g -= &self.c * &self.a * x;
        }
        Ok(g)
    }

    /// Symmetrized real part `1/2 (Re Z + (Re Z)^T)` at `j omega`; this is the
    /// Hermitian part for reciprocal responses. The slope term drops out.
    pub fn hermitian_part(&self, omega: f64) -> Result<DMatrix<f64>> {
        let g = self.real_part(omega)?;
        Ok((&g + g.transpose()) * 0.5)
    }

    /// Change of state coordinates `x1 = T x`; the port impedance is invariant.
    pub fn similarity_transform(&self, t: &DMatrix<f64>) -> Result<Self> {
        let n = self.n_states();
        if t.nrows() != n || t.ncols() != n {
            return Err(Error::DimensionMismatch("T must be NxN".into()));
        }
        let lu = t.clone().lu();
        let rcond = lu_rcond(&lu);
        if rcond < SINGULAR_RCOND {
            return Err(Error::SingularTransform { rcond });
        }
        // A1 = T A T^{-1} computed as solving T^{-1} from the right:
        // A1 = T A X with T X = I.
        let t_inv = lu.try_inverse().ok_or(Error::SingularTransform { rcond })?;
        Ok(Self {
            a: t * &self.a * &t_inv,
            b: t * &self.b,
            c: &self.c * &t_inv,
            d: self.d.clone(),
            e: self.e.clone(),
        })
    }
}

pub(crate) fn lu_rcond(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let u = lu.u();
    let n = u.nrows().min(u.ncols());
    if n == 0 {
        return 1.0;
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..n {
        let v = u[(i, i)].abs();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

pub(crate) fn lu_rcond_c(lu: &nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let u = lu.u();
    let n = u.nrows().min(u.ncols());
    if n == 0 {
        return 1.0;
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..n {
        let v = u[(i, i)].norm();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

/// Minimal realization of a strictly proper scalar impedance
/// `z(s) = (b_n s^{n-1} + ... + b_1) / (s^n + a_n s^{n-1} + ... + a_1)`
/// in companion form. `numerator` holds `b_1..b_n` (low to high degree) and
/// `denominator` holds `a_1..a_n` of the monic denominator.
pub fn companion_realization(
    numerator: &[f64],
    denominator: &[f64],
) -> Result<(StateSpaceModel, Vec<String>)> {
    let n = denominator.len();
    if numerator.len() > n {
        return Err(Error::DegreeError {
            num: numerator.len(),
            den: n,
        });
    }
    if n == 0 {
        return Ok((StateSpaceModel::constant(DMatrix::zeros(1, 1)), Vec::new()));
    }
    let mut warnings = Vec::new();
    if polynomials_share_root(numerator, denominator) {
        warnings.push("CommonFactor: numerator and denominator share a root".to_string());
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = -denominator[j];
    }
    let mut b = DMatrix::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    let mut c = DMatrix::zeros(1, n);
    for j in 0..n {
        c[(0, j)] = numerator.get(j).copied().unwrap_or(0.0);
    }
    Ok((
        StateSpaceModel::new(a, b, c, DMatrix::zeros(1, 1), None)?,
        warnings,
    ))
}

/// Approximate common-root test for the coprimality warning: monic GCD by the
/// Euclidean algorithm with a norm-relative cutoff.
fn polynomials_share_root(num: &[f64], den: &[f64]) -> bool {
    let trim = |p: &[f64]| -> Vec<f64> {
        let mut v: Vec<f64> = p.to_vec();
        while v.len() > 1 && v.last().copied().unwrap_or(0.0).abs() < 1e-300 {
            v.pop();
        }
        v
    };
    // monic denominator: append leading 1
    let mut p: Vec<f64> = den.to_vec();
    p.push(1.0);
    let mut q = trim(num);
    if q.iter().all(|x| x.abs() < 1e-300) {
        return false;
    }
    let scale = p
        .iter()
        .chain(q.iter())
        .fold(0.0f64, |acc, x| acc.max(x.abs()));
    let tol = 1e-10 * scale.max(1.0);
    loop {
        if q.len() <= 1 {
            return q.len() == 1 && q[0].abs() < tol;
        }
        // r = p mod q
        let mut r = p.clone();
        let ql = *q.last().unwrap();
        if ql.abs() < tol {
            q.pop();
            continue;
        }
        while r.len() >= q.len() {
            let coef = *r.last().unwrap() / ql;
            let off = r.len() - q.len();
            for (i, qi) in q.iter().enumerate() {
                r[off + i] -= coef * qi;
            }
            r.pop();
        }
        let r = trim(&r);
        p = q;
        q = r;
        if q.iter().all(|x| x.abs() < tol) {
            // nontrivial gcd p of degree >= 1 means a shared root
            return p.len() > 1;
        }
    }
}

/// Pole-residue expansion of a fitted impedance (the vector-fitting output).
#[derive(Debug, Clone)]
pub struct PoleResidueModel {
    /// Poles (rad/s), closed under conjugation.
    pub poles: Vec<Complex64>,
    /// One residue matrix per pole, conjugate-paired with the poles.
    pub residues: Vec<DMatrix<Complex64>>,
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
}

impl PoleResidueModel {
    pub fn n_ports(&self) -> usize {
        self.d.nrows()
    }

    /// Check stability, conjugate closure and dimensional consistency.
    pub fn validate(&self) -> Result<()> {
        let m = self.n_ports();
        if self.poles.len() != self.residues.len() {
            return Err(Error::DimensionMismatch(
                "poles and residues must pair up".into(),
            ));
        }
        for r in &self.residues {
            if r.nrows() != m || r.ncols() != m {
                return Err(Error::DimensionMismatch("residue size".into()));
            }
        }
        for p in &self.poles {
            if p.re >= 0.0 {
                return Err(Error::UnstablePole(format!("{p}")));
            }
        }
        // conjugate pairing
        let mut used = vec![false; self.poles.len()];
        for (k, p) in self.poles.iter().enumerate() {
            if used[k] || p.im.abs() <= 1e-12 * p.norm() {
                continue;
            }
            let scale = p.norm();
            let partner = self
                .poles
                .iter()
                .enumerate()
                .position(|(j, q)| !used[j] && j != k && (q - p.conj()).norm() <= 1e-9 * scale);
            match partner {
                Some(j) => {
                    used[k] = true;
                    used[j] = true;
                }
                None => {
                    return Err(Error::DimensionMismatch(format!(
                        "pole {p} has no conjugate partner"
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, s: Complex64) -> DMatrix<Complex64> {
        let mut z = self.d.map(|x| Complex64::new(x, 0.0)) + self.e.map(|x| x * s);
        for (p, r) in self.poles.iter().zip(&self.residues) {
            let g = (s - p).inv();
            z += r.map(|x| x * g);
        }
        z
    }

    /// Realize the expansion as a real state-space model, compacting each
    /// residue to its numerical rank (singular values above
    /// `rank_tolerance * sigma_max` are kept). Complex pole pairs become
    /// real 2x2 blocks `[[sigma, omega], [-omega, sigma]]`.
    pub fn to_state_space(&self, rank_tolerance: f64) -> Result<StateSpaceModel> {
        self.validate()?;
        let m = self.n_ports();
        let mut blocks: Vec<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> = Vec::new();
        let mut visited = vec![false; self.poles.len()];
        for k in 0..self.poles.len() {
            if visited[k] {
                continue;
            }
            let p = self.poles[k];
            if p.im.abs() <= 1e-12 * p.norm() {
                visited[k] = true;
                blocks.extend(real_pole_blocks(p.re, &self.residues[k], rank_tolerance));
            } else {
                // take the member with positive imaginary part as representative
                let scale = p.norm();
                let j = self
                    .poles
                    .iter()
                    .enumerate()
                    .position(|(j, q)| {
                        !visited[j] && j != k && (q - p.conj()).norm() <= 1e-9 * scale
                    })
                    .expect("validated conjugate pairing");
                visited[k] = true;
                visited[j] = true;
                let (p, r) = if p.im > 0.0 {
                    (p, self.residues[k].clone())
                } else {
                    (p.conj(), self.residues[j].clone())
                };
                blocks.extend(complex_pair_blocks(p, &r, rank_tolerance));
            }
        }
        let n: usize = blocks.iter().map(|(a, _, _)| a.nrows()).sum();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, m);
        let mut c = DMatrix::zeros(m, n);
        let mut off = 0;
        for (ab, bb, cb) in blocks {
            let w = ab.nrows();
            a.view_mut((off, off), (w, w)).copy_from(&ab);
            b.view_mut((off, 0), (w, m)).copy_from(&bb);
            c.view_mut((0, off), (m, w)).copy_from(&cb);
            off += w;
        }
        let e = if self.e.iter().any(|x| x.abs() > 0.0) {
            Some(self.e.clone())
        } else {
            None
        };
        StateSpaceModel::new(a, b, c, self.d.clone(), e)
    }
}

/// One state per kept rank-one factor of a real-pole residue.
fn real_pole_blocks(
    pole: f64,
    residue: &DMatrix<Complex64>,
    rank_tol: f64,
) -> Vec<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let r = residue.map(|x| x.re);
    let m = r.nrows();
    let sym = (&r - r.transpose()).norm() <= 1e-10 * r.norm().max(1e-300);
    let mut out = Vec::new();
    if sym {
        let se = nalgebra::SymmetricEigen::new((&r + r.transpose()) * 0.5);
        let lmax = se.eigenvalues.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for (i, lam) in se.eigenvalues.iter().enumerate() {
            if lam.abs() > rank_tol * lmax && lam.abs() > 0.0 {
                let w = se.eigenvectors.column(i).clone_owned();
                let bb = DMatrix::from_fn(1, m, |_, j| w[j]);
                let cb = DMatrix::from_fn(m, 1, |i2, _| lam * w[i2]);
                out.push((DMatrix::from_element(1, 1, pole), bb, cb));
            }
        }
    } else {
        let svd = r.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let u = svd.u.as_ref().unwrap();
        let vt = svd.v_t.as_ref().unwrap();
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s > rank_tol * smax && *s > 0.0 {
                let bb = DMatrix::from_fn(1, m, |_, j| vt[(i, j)]);
                let cb = DMatrix::from_fn(m, 1, |i2, _| s * u[(i2, i)]);
                out.push((DMatrix::from_element(1, 1, pole), bb, cb));
            }
        }
    }
    out
}

/// Two states per kept factor of a complex-pair residue. For a symmetric
/// residue the factorization `R = sum sigma_i w_i w_i^T` comes from the real
/// symmetric eigenproblem of `[[Re R, Im R], [Im R, -Re R]]` (a Takagi
/// decomposition in disguise); otherwise a complex SVD is used.
fn complex_pair_blocks(
    pole: Complex64,
    residue: &DMatrix<Complex64>,
    rank_tol: f64,
) -> Vec<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let m = residue.nrows();
    let sym = (residue - residue.transpose()).norm() <= 1e-10 * residue.norm().max(1e-300);
    let mut factors: Vec<(DVector<Complex64>, DVector<Complex64>)> = Vec::new();
    if sym {
        let mut k = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            for j in 0..m {
                let rr = residue[(i, j)].re;
                let ri = residue[(i, j)].im;
                k[(i, j)] = rr;
                k[(i, j + m)] = ri;
                k[(i + m, j)] = ri;
                k[(i + m, j + m)] = -rr;
            }
        }
        let se = nalgebra::SymmetricEigen::new(k);
        let smax = se.eigenvalues.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        // spectrum is symmetric about zero; keep the non-negative half
        let mut idx: Vec<usize> = (0..2 * m).filter(|&i| se.eigenvalues[i] > 0.0).collect();
        idx.sort_by(|&i, &j| se.eigenvalues[j].partial_cmp(&se.eigenvalues[i]).unwrap());
        idx.truncate(m);
        for i in idx {
            let sig = se.eigenvalues[i];
            if sig > rank_tol * smax {
                let col = se.eigenvectors.column(i);
                let w = DVector::from_fn(m, |r, _| Complex64::new(col[r], col[r + m]));
                let a = w.map(|x| x * sig);
                let b = w.clone();
                factors.push((a, b));
            }
        }
    } else {
        let svd = residue.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let u = svd.u.as_ref().unwrap();
        let vt = svd.v_t.as_ref().unwrap();
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s > rank_tol * smax && *s > 0.0 {
                let a = DVector::from_fn(m, |r, _| u[(r, i)] * Complex64::new(*s, 0.0));
                // rows of V^H are v_i^H; b = conj(v_i)
                let b = DVector::from_fn(m, |r, _| vt[(i, r)]);
                factors.push((a, b));
            }
        }
    }
    let (sig, om) = (pole.re, pole.im);
    let sqrt2 = std::f64::consts::SQRT_2;
    factors
        .into_iter()
        .map(|(a, b)| {
            let ab = DMatrix::from_row_slice(2, 2, &[sig, om, -om, sig]);
            let mut bb = DMatrix::zeros(2, m);
            let mut cb = DMatrix::zeros(m, 2);
            for j in 0..m {
                bb[(0, j)] = sqrt2 * b[j].re;
                bb[(1, j)] = -sqrt2 * b[j].im;
                cb[(j, 0)] = sqrt2 * a[j].re;
                cb[(j, 1)] = sqrt2 * a[j].im;
            }
            (ab, bb, cb)
        })
        .collect()
}

/// Sampled impedance data `Z(j omega_k)` on a strictly increasing grid.
#[derive(Debug, Clone)]
pub struct FrequencySamples {
    pub omegas: Vec<f64>,
    pub values: Vec<DMatrix<Complex64>>,
}

impl FrequencySamples {
    pub fn new(omegas: Vec<f64>, values: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if omegas.is_empty() {
            return Err(Error::EmptyInput("no frequency samples".into()));
        }
        if omegas.len() != values.len() {
            return Err(Error::DimensionMismatch(
                "one matrix per frequency required".into(),
            ));
        }
        if omegas.windows(2).any(|w| w[1] <= w[0]) || omegas[0] < 0.0 {
            return Err(Error::DimensionMismatch(
                "frequencies must be nonnegative and strictly increasing".into(),
            ));
        }
        let m = values[0].nrows();
        if values.iter().any(|v| v.nrows() != m || v.ncols() != m) {
            return Err(Error::DimensionMismatch(
                "sample matrices must be square of fixed size".into(),
            ));
        }
        Ok(Self { omegas, values })
    }

    pub fn n_ports(&self) -> usize {
        self.values[0].nrows()
    }

    /// Largest relative asymmetry across samples.
    pub fn asymmetry(&self) -> f64 {
        self.values
            .iter()
            .map(|z| {
                let n = z.norm();
                if n == 0.0 {
                    0.0
                } else {
                    (z - z.transpose()).norm() / n
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Verdict of the grid-based positive-real check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrVerdict {
    Pr,
    NotPr,
    Marginal,
}

/// Report of the grid-based positive-real check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrReport {
    pub is_stable: bool,
    /// Smallest eigenvalue of the Hermitian part over the grid (ohms).
    pub min_hermitian_eig: f64,
    /// Frequency (rad/s) at which the minimum occurs.
    pub min_frequency: f64,
    /// Smallest eigenvalue of `D + D^T`.
    pub d_plus_dt_min_eig: f64,
    pub verdict: PrVerdict,
    pub tolerance: f64,
}

/// Grid-based surrogate for the positive-real property: stability of `A`,
/// nonnegative Hermitian part on a dense log grid, `D + D^T` PSD, and `E`
/// PSD when present. Verdict `Marginal` flags margins within 10x of the
/// tolerance.
pub fn check_positive_real(
    model: &StateSpaceModel,
    grid: Option<&GridSpec>,
    tolerance: Option<f64>,
) -> PrReport {
    let is_stable = model.is_stable();
    let auto_grid;
    let grid = match grid {
        Some(g) => g,
        None => {
            auto_grid = GridSpec::around_eigenvalues(&model.eigenvalues(), 100.0, 2000);
            &auto_grid
        }
    };
    let mut min_eig = f64::INFINITY;
    let mut min_omega = 0.0;
    let mut max_norm = 0.0f64;
    let mut scan = |omega: f64| {
        if let Ok(h) = model.hermitian_part(omega) {
            max_norm = max_norm.max(h.norm());
            let se = nalgebra::SymmetricEigen::new(h);
            let lo = se.eigenvalues.min();
            if lo < min_eig {
                min_eig = lo;
                min_omega = omega;
            }
        }
    };
    scan(0.0);
    for omega in grid.points() {
        scan(omega);
    }
    let dsum = &model.d + model.d.transpose();
    let d_min = nalgebra::SymmetricEigen::new(dsum).eigenvalues.min();
    let e_ok = match &model.e {
        None => true,
        Some(e) => {
            let es = (e + e.transpose()) * 0.5;
            let asym_ok = (e - e.transpose()).norm() <= 1e-9 * e.norm().max(1e-300);
            let tol = 1e-12 * e.norm().max(1e-300);
            asym_ok && nalgebra::SymmetricEigen::new(es).eigenvalues.min() >= -tol
        }
    };
    let tolerance = tolerance.unwrap_or(1e-9 * max_norm.max(f64::MIN_POSITIVE));
    let pass = is_stable && min_eig >= -tolerance && d_min >= -tolerance && e_ok;
    let verdict = if !pass {
        PrVerdict::NotPr
    } else if min_eig < 10.0 * tolerance.min(1e-3 * max_norm) - tolerance {
        PrVerdict::Marginal
    } else {
        PrVerdict::Pr
    };
    PrReport {
        is_stable,
        min_hermitian_eig: min_eig,
        min_frequency: min_omega,
        d_plus_dt_min_eig: d_min,
        verdict,
        tolerance,
    }
}

/// Serializable mirror of [`StateSpaceModel`] used by the JSON model files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSpaceModelDto {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Vec<Vec<f64>>>,
}

impl From<&StateSpaceModel> for StateSpaceModelDto {
    fn from(m: &StateSpaceModel) -> Self {
        Self {
            a: matrix_to_rows(&m.a),
            b: matrix_to_rows(&m.b),
            c: matrix_to_rows(&m.c),
            d: matrix_to_rows(&m.d),
            e: m.e.as_ref().map(matrix_to_rows),
        }
    }
}

impl TryFrom<&StateSpaceModelDto> for StateSpaceModel {
    type Error = Error;
    fn try_from(dto: &StateSpaceModelDto) -> Result<Self> {
        let n = dto.a.len();
        let m = dto.d.len();
        let shape = |rows: &Vec<Vec<f64>>, nr: usize, name: &str| -> Result<DMatrix<f64>> {
            if rows.len() != nr
                || rows
                    .iter()
                    .any(|r| r.len() != rows.first().map_or(0, |f| f.len()))
            {
                return Err(Error::DimensionMismatch(format!("ragged {name} matrix")));
            }
            Ok(rows_to_matrix(rows))
        };
        StateSpaceModel::new(
            shape(&dto.a, n, "A")?,
            shape(&dto.b, n, "B")?,
            shape(&dto.c, m, "C")?,
            shape(&dto.d, m, "D")?,
            dto.e.as_ref().map(|e| shape(e, m, "E")).transpose()?,
        )
    }
}
