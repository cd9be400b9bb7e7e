//! Vector fitting of sampled impedance data and grid-based passivity
//! enforcement.
//!
//! The pole-relocation step uses the relaxed weighting-function formulation:
//! a common scalar function `sigma(s) = d + sum c_k/(s - p_k)` multiplies the
//! data while `sigma Z` is fitted with the same poles; the zeros of `sigma`
//! become the relocated poles. Per-entry QR compression keeps the joint
//! least-squares system small. Unstable poles are flipped into the left
//! half-plane after every iteration.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{FrequencySamples, PoleResidueModel, StateSpaceModel};

/// Knobs of the fitting loop.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub n_iterations: usize,
    /// Fit the constant term `D`.
    pub fit_d: bool,
    /// Fit the slope term `E`.
    pub fit_e: bool,
    /// Starting poles (rad/s); log-spaced complex pairs over the sample band
    /// when absent.
    pub initial_poles: Option<Vec<Complex64>>,
    /// Mirror the upper triangle when the data is symmetric within this
    /// relative tolerance.
    pub symmetry_tol: f64,
    /// Condition-number ceiling of the pole-relocation system.
    pub max_condition: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_iterations: 12,
            fit_d: true,
            fit_e: false,
            initial_poles: None,
            symmetry_tol: 1e-8,
            max_condition: 1e15,
        }
    }
}

/// Fit diagnostics.
#[derive(Debug, Clone)]
pub struct FitInfo {
    /// Root-mean-square relative error over the samples.
    pub rms: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Initial poles: log-spaced complex pairs spanning the sample band with a
/// quality factor of 100 (one real pole fills an odd count).
pub fn default_initial_poles(omegas: &[f64], n_poles: usize) -> Vec<Complex64> {
    let w_max = *omegas.last().unwrap();
    let mut w_min = omegas[0];
    if w_min <= 0.0 {
        w_min = omegas.get(1).copied().unwrap_or(w_max / 1000.0) / 10.0;
    }
    let n_pairs = n_poles / 2;
    let mut poles = Vec::with_capacity(n_poles);
    for k in 0..n_pairs {
        let t = if n_pairs == 1 {
            0.5
        } else {
            k as f64 / (n_pairs - 1) as f64
        };
        let w = w_min * (w_max / w_min).powf(t);
        poles.push(Complex64::new(-w / 200.0, w));
        poles.push(Complex64::new(-w / 200.0, -w));
    }
    if n_poles % 2 == 1 {
        let w = (w_min * w_max).sqrt();
        poles.push(Complex64::new(-w, 0.0));
    }
    poles
}

/// One pole-basis group in real arithmetic: a real pole contributes one real
/// unknown, a conjugate pair two (real and imaginary part of the residue).
#[derive(Clone, Copy)]
enum PoleGroup {
    Real(f64),
    /// Representative with positive imaginary part.
    Pair(Complex64),
}

fn group_poles(poles: &[Complex64]) -> Result<Vec<PoleGroup>> {
    let mut used = vec![false; poles.len()];
    let mut groups = Vec::new();
    for k in 0..poles.len() {
        if used[k] {
            continue;
        }
        let p = poles[k];
        if p.im.abs() <= 1e-12 * p.norm().max(1e-300) {
            used[k] = true;
            groups.push(PoleGroup::Real(p.re));
        } else {
            let partner = poles
                .iter()
                .enumerate()
                .position(|(j, q)| !used[j] && j != k && (q - p.conj()).norm() <= 1e-6 * p.norm());
            let j = partner.ok_or_else(|| {
                Error::DimensionMismatch(format!("pole {p} lacks a conjugate partner"))
            })?;
            used[k] = true;
            used[j] = true;
            groups.push(PoleGroup::Pair(Complex64::new(p.re, p.im.abs())));
        }
    }
    Ok(groups)
}

/// Number of real unknowns of a group list.
fn n_unknowns(groups: &[PoleGroup]) -> usize {
    groups
        .iter()
        .map(|g| match g {
            PoleGroup::Real(_) => 1,
            PoleGroup::Pair(_) => 2,
        })
        .sum()
}

/// Complex basis columns of the groups at one frequency point.
fn basis_at(groups: &[PoleGroup], s: Complex64, out: &mut Vec<Complex64>) {
    out.clear();
    for g in groups {
        match g {
            PoleGroup::Real(p) => out.push((s - Complex64::new(*p, 0.0)).inv()),
            PoleGroup::Pair(p) => {
                let f1 = (s - p).inv();
                let f2 = (s - p.conj()).inv();
                out.push(f1 + f2);
                out.push(Complex64::i() * (f1 - f2));
            }
        }
    }
}

/// Zeros of `sigma(s) = d + sum c_k / (s - p_k)` through the real companion
/// construction: `eig(A_p - b c / d)`.
fn sigma_zeros(groups: &[PoleGroup], coeffs: &[f64], d: f64) -> Vec<Complex64> {
    let n: usize = groups
        .iter()
        .map(|g| match g {
            PoleGroup::Real(_) => 1,
            PoleGroup::Pair(_) => 2,
        })
        .sum();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    let mut c = DVector::zeros(n);
    let mut i = 0;
    let mut u = 0;
    for g in groups {
        match g {
            PoleGroup::Real(p) => {
                a[(i, i)] = *p;
                b[i] = 1.0;
                c[i] = coeffs[u];
                i += 1;
                u += 1;
            }
            PoleGroup::Pair(p) => {
                a[(i, i)] = p.re;
                a[(i, i + 1)] = p.im;
                a[(i + 1, i)] = -p.im;
                a[(i + 1, i + 1)] = p.re;
                b[i] = 2.0;
                b[i + 1] = 0.0;
                c[i] = coeffs[u];
                c[i + 1] = coeffs[u + 1];
                i += 2;
                u += 2;
            }
        }
    }
    let h = a - b * c.transpose() / d;
    let mut zeros: Vec<Complex64> = h.complex_eigenvalues().iter().copied().collect();
    // flip into the left half-plane and force conjugate symmetry
    for z in zeros.iter_mut() {
        if z.re > 0.0 {
            z.re = -z.re;
        }
    }
    zeros
}

/// Stable pole-residue fit of sampled impedance data with `n_poles` common
/// poles; residues are solved jointly for all matrix entries.
pub fn vector_fit(
    samples: &FrequencySamples,
    n_poles: usize,
    opts: &FitOptions,
) -> Result<(PoleResidueModel, FitInfo)> {
    let n_s = samples.omegas.len();
    let m = samples.n_ports();
    if n_s < 2 {
        return Err(Error::EmptyInput("need at least two frequencies".into()));
    }
    if n_poles > 2 * n_s {
        return Err(Error::DimensionMismatch(
            "more poles than twice the sample count".into(),
        ));
    }
    let mut warnings = Vec::new();
    let symmetric = samples.asymmetry() < opts.symmetry_tol;
    // entry list: upper triangle when symmetric, all entries otherwise
    let mut entries = Vec::new();
    for i in 0..m {
        for j in 0..m {
            if !symmetric || j >= i {
                entries.push((i, j));
            }
        }
    }
    // frequency scaling keeps the basis well conditioned
    let w_scale = samples.omegas.last().copied().unwrap_or(1.0).max(1e-300);
    let omegas: Vec<f64> = samples.omegas.iter().map(|w| w / w_scale).collect();

    let mut poles: Vec<Complex64> = match &opts.initial_poles {
        Some(p) => p.iter().map(|p| p / w_scale).collect(),
        None => default_initial_poles(&omegas, n_poles),
    };
    if poles.len() != n_poles {
        return Err(Error::DimensionMismatch(
            "initial pole count must match n_poles".into(),
        ));
    }

    let mut prev_residual = f64::INFINITY;
    let mut best_poles = poles.clone();
    let mut best_rms = f64::INFINITY;
    let mut growth_streak = 0;
    let mut iterations_run = 0;
    if n_poles > 0 {
        // the starting poles may already be usable
        if let Ok((_, info)) = solve_residues(samples, &omegas, w_scale, &poles, opts) {
            best_rms = info.rms;
        }
        for _iter in 0..opts.n_iterations {
            iterations_run += 1;
            let groups = group_poles(&poles)?;
            let n_c = n_unknowns(&groups);
            let n_fit = n_c + usize::from(opts.fit_d) + usize::from(opts.fit_e);
            let n_sigma = n_c + 1;
            // per-entry QR compression of [A_fit | -Z A_sigma]
            let mut reduced = DMatrix::zeros(entries.len() * n_sigma + 1, n_sigma);
            let mut reduced_rhs = DVector::zeros(entries.len() * n_sigma + 1);
            let mut basis = Vec::new();
            for (e_idx, &(ei, ej)) in entries.iter().enumerate() {
                let mut block = DMatrix::zeros(2 * n_s, n_fit + n_sigma);
                let mut rhs = DVector::zeros(2 * n_s);
                for (k, &w) in omegas.iter().enumerate() {
                    let s = Complex64::new(0.0, w);
                    basis_at(&groups, s, &mut basis);
                    let z = samples.values[k][(ei, ej)];
                    let mut col = 0;
                    for b in &basis {
                        block[(2 * k, col)] = b.re;
                        block[(2 * k + 1, col)] = b.im;
                        col += 1;
                    }
                    if opts.fit_d {
                        block[(2 * k, col)] = 1.0;
                        col += 1;
                    }
                    if opts.fit_e {
                        block[(2 * k + 1, col)] = w;
                        col += 1;
                    }
                    for b in &basis {
                        let v = -z * b;
                        block[(2 * k, col)] = v.re;
                        block[(2 * k + 1, col)] = v.im;
                        col += 1;
                    }
                    let v = -z;
                    block[(2 * k, col)] = v.re;
                    block[(2 * k + 1, col)] = v.im;
                    rhs[2 * k] = 0.0;
                    rhs[2 * k + 1] = 0.0;
                    let _ = rhs;
                }
                // QR; keep the sigma-block rows of R and of Q^T rhs (zero)
                let qr = block.qr();
                let r = qr.r();
                let rows = r.nrows().min(n_fit + n_sigma);
                for i in 0..n_sigma {
                    let src = n_fit + i;
                    if src < rows {
                        for j in 0..n_sigma {
                            reduced[(e_idx * n_sigma + i, j)] = r[(src, n_fit + j)];
                        }
                    }
                }
            }
            // relaxed nontriviality: sum over samples of Re sigma = n_s
            let relax_row = entries.len() * n_sigma;
            let weight = {
                let mut acc = 0.0;
                for &(ei, ej) in &entries {
                    for k in 0..n_s {
                        acc += samples.values[k][(ei, ej)].norm_sqr();
                    }
                }
                (acc / (entries.len() * n_s) as f64).sqrt().max(1e-300)
            };
            for (k, &w) in omegas.iter().enumerate() {
                let s = Complex64::new(0.0, w);
                basis_at(&groups, s, &mut basis);
                for (j, b) in basis.iter().enumerate() {
                    reduced[(relax_row, j)] += weight * b.re;
                }
                reduced[(relax_row, n_sigma - 1)] += weight;
                let _ = k;
            }
            reduced_rhs[relax_row] = weight * n_s as f64;
            // column equilibration, then a small least squares for the
            // sigma coefficients; exact rank deficiency (colliding poles or
            // the converged fixed point) is a gauge direction and gets a
            // truncated solve, while a terrible finite condition number is
            // rejected
            let mut col_scales = vec![1.0f64; n_sigma];
            for (j, scale) in col_scales.iter_mut().enumerate() {
                let norm = reduced.column(j).norm();
                if norm > 0.0 {
                    *scale = norm;
                    for i in 0..reduced.nrows() {
                        reduced[(i, j)] /= norm;
                    }
                }
            }
            let svd = reduced.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            let trunc = smax * 1e-12;
            if smin > trunc && smax / smin > opts.max_condition {
                return Err(Error::IllConditioned(smax / smin));
            }
            if smin <= trunc {
                warnings.push(format!(
                    "rank-deficient pole-relocation system (sigma_min {smin:.3e});                      truncated solve"
                ));
            }
            let sol_scaled = svd
                .solve(&reduced_rhs, trunc)
                .map_err(|_| Error::IllConditioned(f64::INFINITY))?;
            let sol = DVector::from_fn(n_sigma, |i, _| sol_scaled[i] / col_scales[i]);
            let mut d_sigma = sol[n_sigma - 1];
            if d_sigma.abs() < 1e-8 {
                warnings.push(format!(
                    "relaxation constant collapsed ({d_sigma:.3e}); clamped"
                ));
                d_sigma = d_sigma.signum().max(1.0) * 1e-8;
            }
            let coeffs: Vec<f64> = (0..n_c).map(|i| sol[i]).collect();
            poles = sigma_zeros(&groups, &coeffs, d_sigma);

            // track the residual of a residue fit; keep the best pole set
            // seen (near convergence the relocation system turns rank
            // deficient and would otherwise jitter the poles away)
            let (model, info) = solve_residues(samples, &omegas, w_scale, &poles, opts)?;
            let _ = model;
            if info.rms < best_rms {
                best_rms = info.rms;
                best_poles = poles.clone();
            }
            // divergence means meaningful, repeated growth -- not noise-floor
            // jitter around an already converged residual
            if info.rms > prev_residual * 1.5 && info.rms > 1e-12 {
                growth_streak += 1;
                if growth_streak >= 3 {
                    return Err(Error::ConvergenceFailure(format!(
                        "residual grew three consecutive iterations (rms {:.3e})",
                        info.rms
                    )));
                }
            } else {
                growth_streak = 0;
            }
            if best_rms < 1e-14 {
                break;
            }
            prev_residual = info.rms;
        }
        poles = best_poles;
    }
    let (mut model, mut info) = solve_residues(samples, &omegas, w_scale, &poles, opts)?;
    info.iterations = iterations_run;
    info.warnings.append(&mut warnings);
    if symmetric {
        // mirrored solve keeps residues exactly symmetric
        for r in &mut model.residues {
            let rt = r.transpose();
            *r = (r.clone() + rt) * Complex64::new(0.5, 0.0);
        }
    }
    Ok((model, info))
}

/// Residue solve with fixed poles: one QR factorization shared by all
/// entries.
fn solve_residues(
    samples: &FrequencySamples,
    scaled_omegas: &[f64],
    w_scale: f64,
    scaled_poles: &[Complex64],
    opts: &FitOptions,
) -> Result<(PoleResidueModel, FitInfo)> {
    let n_s = scaled_omegas.len();
    let m = samples.n_ports();
    let groups = group_poles(scaled_poles)?;
    let n_c = n_unknowns(&groups);
    let n_fit = n_c + usize::from(opts.fit_d) + usize::from(opts.fit_e);
    let mut a = DMatrix::zeros(2 * n_s, n_fit);
    let mut basis = Vec::new();
    for (k, &w) in scaled_omegas.iter().enumerate() {
        let s = Complex64::new(0.0, w);
        basis_at(&groups, s, &mut basis);
        let mut col = 0;
        for b in &basis {
            a[(2 * k, col)] = b.re;
            a[(2 * k + 1, col)] = b.im;
            col += 1;
        }
        if opts.fit_d {
            a[(2 * k, col)] = 1.0;
            col += 1;
        }
        if opts.fit_e {
            a[(2 * k + 1, col)] = w;
        }
    }
    let svd = a.svd(true, true);
    // solve per entry
    let mut coeff_mats: Vec<DMatrix<f64>> = vec![DMatrix::zeros(m, m); n_c];
    let mut d = DMatrix::zeros(m, m);
    let mut e = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut rhs = DVector::zeros(2 * n_s);
            for k in 0..n_s {
                let z = samples.values[k][(i, j)];
                rhs[2 * k] = z.re;
                rhs[2 * k + 1] = z.im;
            }
            let sol = svd
                .solve(&rhs, 1e-14)
                .map_err(|_| Error::IllConditioned(f64::INFINITY))?;
            for (u, mat) in coeff_mats.iter_mut().enumerate() {
                mat[(i, j)] = sol[u];
            }
            let mut col = n_c;
            if opts.fit_d {
                d[(i, j)] = sol[col];
                col += 1;
            }
            if opts.fit_e {
                e[(i, j)] = sol[col];
            }
        }
    }
    // reassemble complex residues and unscale
    let mut poles = Vec::new();
    let mut residues = Vec::new();
    let mut u = 0;
    for g in &groups {
        match g {
            PoleGroup::Real(p) => {
                poles.push(Complex64::new(p * w_scale, 0.0));
                residues.push(coeff_mats[u].map(|x| Complex64::new(x * w_scale, 0.0)));
                u += 1;
            }
            PoleGroup::Pair(p) => {
                let re = &coeff_mats[u];
                let im = &coeff_mats[u + 1];
                let r = DMatrix::from_fn(m, m, |i, j| {
                    Complex64::new(re[(i, j)], im[(i, j)]) * w_scale
                });
                poles.push(p * w_scale);
                poles.push(p.conj() * w_scale);
                residues.push(r.clone());
                residues.push(r.map(|x| x.conj()));
                u += 2;
            }
        }
    }
    let model = PoleResidueModel {
        poles,
        residues,
        d,
        e: e / w_scale, // the slope term scales inversely with frequency
    };
    let err = fit_error(samples, &model)?;
    Ok((
        model,
        FitInfo {
            rms: err.rms,
            iterations: 0,
            warnings: Vec::new(),
        },
    ))
}

/// Anything that evaluates an impedance at a complex frequency.
pub trait ImpedanceEval {
    fn impedance(&self, s: Complex64) -> Result<DMatrix<Complex64>>;
    fn ports(&self) -> usize;
}

impl ImpedanceEval for StateSpaceModel {
    fn impedance(&self, s: Complex64) -> Result<DMatrix<Complex64>> {
        self.eval(s)
    }
    fn ports(&self) -> usize {
        self.n_ports()
    }
}

impl ImpedanceEval for PoleResidueModel {
    fn impedance(&self, s: Complex64) -> Result<DMatrix<Complex64>> {
        Ok(self.eval(s))
    }
    fn ports(&self) -> usize {
        self.n_ports()
    }
}

/// Relative Frobenius fit errors per frequency, with rms and max.
#[derive(Debug, Clone)]
pub struct FitErrorReport {
    pub rms: f64,
    pub max_rel: f64,
    pub per_frequency: Vec<f64>,
}

pub fn fit_error(samples: &FrequencySamples, model: &impl ImpedanceEval) -> Result<FitErrorReport> {
    if samples.n_ports() != model.ports() {
        return Err(Error::DimensionMismatch(
            "sample and model port counts differ".into(),
        ));
    }
    if samples.omegas.is_empty() {
        return Err(Error::EmptyInput("no overlapping frequencies".into()));
    }
    let mut per = Vec::with_capacity(samples.omegas.len());
    let mut acc = 0.0;
    let mut worst: f64 = 0.0;
    for (k, &w) in samples.omegas.iter().enumerate() {
        let z = model.impedance(Complex64::new(0.0, w))?;
        let denom = samples.values[k].norm().max(1e-300);
        let rel = (&z - &samples.values[k]).norm() / denom;
        acc += rel * rel;
        worst = worst.max(rel);
        per.push(rel);
    }
    Ok(FitErrorReport {
        rms: (acc / per.len() as f64).sqrt(),
        max_rel: worst,
        per_frequency: per,
    })
}

/// Grid-based passivity enforcement: perturb the residues and `D` (poles
/// untouched) by the minimum-norm correction that lifts every negative
/// eigenvalue of the Hermitian part on the check grid. Returns the total
/// perturbation norm.
pub fn enforce_passivity(
    pr: &PoleResidueModel,
    grid: &[f64],
    max_iterations: usize,
) -> Result<(PoleResidueModel, f64)> {
    pr.validate()?;
    let m = pr.n_ports();
    let groups = group_poles(&pr.poles)?;
    // map group -> residue index in pr (representative with Im > 0)
    let mut rep_indices = Vec::new();
    {
        let mut used = vec![false; pr.poles.len()];
        for g in &groups {
            match g {
                PoleGroup::Real(p) => {
                    let idx = pr
                        .poles
                        .iter()
                        .enumerate()
                        .position(|(i, q)| {
                            !used[i]
                                && (q - Complex64::new(*p, 0.0)).norm()
                                    <= 1e-9 * p.abs().max(1e-300)
                        })
                        .unwrap();
                    used[idx] = true;
                    rep_indices.push((idx, None));
                }
                PoleGroup::Pair(p) => {
                    let idx = pr
                        .poles
                        .iter()
                        .enumerate()
                        .position(|(i, q)| !used[i] && (q - p).norm() <= 1e-9 * p.norm())
                        .unwrap();
                    used[idx] = true;
                    let conj_idx = pr
                        .poles
                        .iter()
                        .enumerate()
                        .position(|(i, q)| !used[i] && (q - p.conj()).norm() <= 1e-9 * p.norm())
                        .unwrap();
                    used[conj_idx] = true;
                    rep_indices.push((idx, Some(conj_idx)));
                }
            }
        }
    }
    let mut work = pr.clone();
    let mut total_norm = 0.0f64;
    let sym_dim = m * (m + 1) / 2;
    let n_unk = sym_dim
        * (1 + rep_indices
            .iter()
            .map(|(_, c)| if c.is_some() { 2 } else { 1 })
            .sum::<usize>());
    for _ in 0..max_iterations {
        // collect violations
        let mut constraints: Vec<(f64, DVector<f64>, f64)> = Vec::new();
        for &w in grid {
            let z = work.eval(Complex64::new(0.0, w));
            let h = DMatrix::from_fn(m, m, |i, j| 0.5 * (z[(i, j)].re + z[(j, i)].re));
            let se = nalgebra::SymmetricEigen::new(h);
            for (k, lam) in se.eigenvalues.iter().enumerate() {
                if *lam < 0.0 {
                    let v = se.eigenvectors.column(k).clone_owned();
                    constraints.push((w, v, *lam));
                }
            }
        }
        if constraints.is_empty() {
            return Ok((work, total_norm));
        }
        // linear system G x = h for the minimum-norm update
        let mut g = DMatrix::zeros(constraints.len(), n_unk);
        let mut rhs = DVector::zeros(constraints.len());
        for (row, (w, v, lam)) in constraints.iter().enumerate() {
            let s = Complex64::new(0.0, *w);
            // D block
            let mut col = 0;
            for i in 0..m {
                for j in i..m {
                    let factor = if i == j { 1.0 } else { 2.0 };
                    g[(row, col)] = factor * v[i] * v[j];
                    col += 1;
                }
            }
            for ((idx, conj_idx), _) in rep_indices.iter().zip(0..) {
                let p = pr.poles[*idx];
                match conj_idx {
                    None => {
                        let mult = ((s - p).inv()).re;
                        for i in 0..m {
                            for j in i..m {
                                let factor = if i == j { 1.0 } else { 2.0 };
                                g[(row, col)] = mult * factor * v[i] * v[j];
                                col += 1;
                            }
                        }
                    }
                    Some(_) => {
                        let f1 = (s - p).inv();
                        let f2 = (s - p.conj()).inv();
                        let alpha = (f1 + f2).re;
                        let beta = -(f1 - f2).im;
                        for i in 0..m {
                            for j in i..m {
                                let factor = if i == j { 1.0 } else { 2.0 };
                                g[(row, col)] = alpha * factor * v[i] * v[j];
                                col += 1;
                            }
                        }
                        for i in 0..m {
                            for j in i..m {
                                let factor = if i == j { 1.0 } else { 2.0 };
                                g[(row, col)] = beta * factor * v[i] * v[j];
                                col += 1;
                            }
                        }
                    }
                }
            }
            rhs[row] = -lam * 1.001 + 1e-16;
        }
        // minimum-norm solution x = G^T (G G^T)^{-1} h via SVD
        let svd = g.clone().svd(true, true);
        let x = svd
            .solve(&rhs, 1e-12)
            .map_err(|_| Error::EnforcementFailure("singular constraint system".into()))?;
        total_norm += x.norm();
        // apply the update
        let mut col = 0;
        for i in 0..m {
            for j in i..m {
                work.d[(i, j)] += x[col];
                if i != j {
                    work.d[(j, i)] += x[col];
                }
                col += 1;
            }
        }
        for (idx, conj_idx) in &rep_indices {
            match conj_idx {
                None => {
                    for i in 0..m {
                        for j in i..m {
                            let dv = Complex64::new(x[col], 0.0);
                            work.residues[*idx][(i, j)] += dv;
                            if i != j {
                                work.residues[*idx][(j, i)] += dv;
                            }
                            col += 1;
                        }
                    }
                }
                Some(cidx) => {
                    let re_start = col;
                    let im_start = col + sym_dim;
                    let mut off = 0;
                    for i in 0..m {
                        for j in i..m {
                            let dv = Complex64::new(x[re_start + off], x[im_start + off]);
                            work.residues[*idx][(i, j)] += dv;
                            work.residues[*cidx][(i, j)] += dv.conj();
                            if i != j {
                                work.residues[*idx][(j, i)] += dv;
                                work.residues[*cidx][(j, i)] += dv.conj();
                            }
                            off += 1;
                        }
                    }
                    col += 2 * sym_dim;
                }
            }
        }
    }
    // final check
    let mut worst = 0.0f64;
    for &w in grid {
        let z = work.eval(Complex64::new(0.0, w));
        let h = DMatrix::from_fn(m, m, |i, j| 0.5 * (z[(i, j)].re + z[(j, i)].re));
        let lam = nalgebra::SymmetricEigen::new(h).eigenvalues.min();
        worst = worst.min(lam);
    }
    if worst < 0.0 {
        return Err(Error::EnforcementFailure(format!(
            "violations persist after the iteration limit (min eig {worst:.3e})"
        )));
    }
    Ok((work, total_norm))
}
