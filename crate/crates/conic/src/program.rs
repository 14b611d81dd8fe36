use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::expr::{CExpr, LinExpr, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Target primal feasibility residual of an `Optimal` answer.
    pub solver_tol: f64,
    /// Relative duality gap requested from the backend.
    pub gap_tol: f64,
    pub max_iter: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { solver_tol: 1e-7, gap_tol: 1e-6, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Sense {
    Minimize,
    Maximize,
}

/// Symmetric PSD constraint: `entries[k]` is the upper triangle of the matrix, stacked by
/// columns (`(0,0), (0,1), (1,1), (0,2), ...`), unscaled.
#[derive(Debug, Clone)]
pub struct PsdBlock {
    pub dim: usize,
    pub entries: Vec<LinExpr>,
}

impl PsdBlock {
    pub fn tri_index(r: usize, c: usize) -> usize {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        c * (c + 1) / 2 + r
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        DMatrix::from_fn(n, n, |r, c| self.entries[Self::tri_index(r, c)].eval(x))
    }
}

/// A complex Hermitian matrix variable. Stored as the upper triangle of its real part and the
/// strict upper triangle of its imaginary part.
#[derive(Debug, Clone)]
pub struct HermitianVar {
    pub dim: usize,
    re: Vec<Var>,
    im: Vec<Var>,
}

impl HermitianVar {
    fn strict_index(r: usize, c: usize) -> usize {
        debug_assert!(r < c);
        c * (c - 1) / 2 + r
    }

    pub fn re(&self, r: usize, c: usize) -> LinExpr {
        LinExpr::from(self.re[PsdBlock::tri_index(r, c)])
    }

    pub fn im(&self, r: usize, c: usize) -> LinExpr {
        use std::cmp::Ordering::*;
        match r.cmp(&c) {
            Equal => LinExpr::zero(),
            Less => LinExpr::from(self.im[Self::strict_index(r, c)]),
            Greater => -LinExpr::from(self.im[Self::strict_index(c, r)]),
        }
    }

    pub fn entry(&self, r: usize, c: usize) -> CExpr {
        CExpr::new(self.re(r, c), self.im(r, c))
    }

    pub fn trace(&self) -> LinExpr {
        LinExpr::sum((0..self.dim).map(|i| self.re(i, i)))
    }

    /// `Re tr(C X)`; equals `tr(C X)` when `C` is Hermitian.
    pub fn real_inner(&self, c: &DMatrix<Complex64>) -> LinExpr {
        assert_eq!(c.nrows(), self.dim);
        assert_eq!(c.ncols(), self.dim);
        let mut e = LinExpr::zero();
        for a in 0..self.dim {
            for b in 0..self.dim {
                let cab = c[(a, b)];
                // Re(C_ab X_ba)
                if cab.re != 0.0 {
                    e += self.re(b, a) * cab.re;
                }
                if cab.im != 0.0 && a != b {
                    e -= self.im(b, a) * cab.im;
                }
            }
        }
        e
    }

    /// Real symmetric embedding `[[Re X, -Im X], [Im X, Re X]]` as a PSD block.
    pub(crate) fn embedding(&self) -> PsdBlock {
        let n = self.dim;
        let m = 2 * n;
        let mut entries = Vec::with_capacity(m * (m + 1) / 2);
        for c in 0..m {
            for r in 0..=c {
                let e = match (r < n, c < n) {
                    (true, true) => self.re(r, c),
                    (false, false) => self.re(r - n, c - n),
                    // upper-right block is -Im X
                    (true, false) => -self.im(r, c - n),
                    (false, true) => unreachable!(),
                };
                entries.push(e);
            }
        }
        PsdBlock { dim: m, entries }
    }

    pub fn value(&self, x: &[f64]) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.dim, self.dim, |r, c| self.entry(r, c).eval(x))
    }
}

/// Complex vector variable.
#[derive(Debug, Clone)]
pub struct CVecVar {
    pub re: Vec<Var>,
    pub im: Vec<Var>,
}

impl CVecVar {
    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn entry(&self, i: usize) -> CExpr {
        CExpr::new(self.re[i].into(), self.im[i].into())
    }

    /// `aᴴ x` for a constant vector `a`.
    pub fn inner_from(&self, a: &[Complex64]) -> CExpr {
        assert_eq!(a.len(), self.len());
        let mut re = LinExpr::zero();
        let mut im = LinExpr::zero();
        for (k, ak) in a.iter().enumerate() {
            // conj(a)(x + iy) = (a_r x + a_i y) + i(a_r y - a_i x)
            re.add_term(self.re[k], ak.re).add_term(self.im[k], ak.im);
            im.add_term(self.im[k], ak.re).add_term(self.re[k], -ak.im);
        }
        CExpr::new(re, im)
    }

    /// All real coordinates, real parts first.
    pub fn stacked(&self) -> Vec<LinExpr> {
        self.re.iter().chain(self.im.iter()).map(|&v| v.into()).collect()
    }

    pub fn value(&self, x: &[f64]) -> Vec<Complex64> {
        self.re.iter().zip(&self.im).map(|(r, i)| Complex64::new(x[r.0], x[i.0])).collect()
    }
}

/// Linear objective with linear equalities, nonnegativity, second-order-cone and PSD constraints.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub(crate) n_vars: usize,
    pub(crate) sense: Sense,
    pub(crate) objective: LinExpr,
    /// Separable convex term `½ Σ wᵢ xᵢ²` added to a minimization objective.
    pub(crate) quad_diag: Vec<(usize, f64)>,
    pub(crate) eqs: Vec<LinExpr>,
    pub(crate) nonneg: Vec<LinExpr>,
    /// `[t, x₁, …, x_m]` meaning `‖x‖₂ ≤ t`.
    pub(crate) socs: Vec<Vec<LinExpr>>,
    pub(crate) psds: Vec<PsdBlock>,
    pub settings: SolverSettings,
}

impl Default for ConicProgram {
    fn default() -> Self {
        Self::new()
    }
}

impl ConicProgram {
    pub fn new() -> Self {
        Self {
            n_vars: 0,
            sense: Sense::Minimize,
            objective: LinExpr::zero(),
            quad_diag: Vec::new(),
            eqs: Vec::new(),
            nonneg: Vec::new(),
            socs: Vec::new(),
            psds: Vec::new(),
            settings: SolverSettings::default(),
        }
    }

    pub fn with_settings(settings: SolverSettings) -> Self {
        Self { settings, ..Self::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn var(&mut self) -> Var {
        self.n_vars += 1;
        Var(self.n_vars - 1)
    }

    pub fn vars(&mut self, n: usize) -> Vec<Var> {
        (0..n).map(|_| self.var()).collect()
    }

    pub fn nonneg_var(&mut self) -> Var {
        let v = self.var();
        self.add_ge(v, 0.0);
        v
    }

    /// Variable constrained to `[lo, hi]`.
    pub fn bounded_var(&mut self, lo: f64, hi: f64) -> Var {
        let v = self.var();
        self.add_ge(v, lo);
        self.add_le(v, hi);
        v
    }

    pub fn complex_vector(&mut self, n: usize) -> CVecVar {
        CVecVar { re: self.vars(n), im: self.vars(n) }
    }

    /// Hermitian PSD matrix variable (lowered to a real 2n×2n embedding).
    pub fn hermitian_psd(&mut self, n: usize) -> HermitianVar {
        let h = HermitianVar {
            dim: n,
            re: self.vars(n * (n + 1) / 2),
            im: self.vars(n * n.saturating_sub(1) / 2),
        };
        self.psds.push(h.embedding());
        h
    }

    pub fn minimize(&mut self, e: impl Into<LinExpr>) {
        self.sense = Sense::Minimize;
        self.objective = e.into();
    }

    pub fn maximize(&mut self, e: impl Into<LinExpr>) {
        self.sense = Sense::Maximize;
        self.objective = e.into();
    }

    /// Add `½·w·v²` (w ≥ 0) to a minimization objective. Well-conditioned alternative to an
    /// epigraph cone when the argmin itself is needed to high accuracy.
    pub fn add_quadratic(&mut self, v: Var, w: f64) {
        assert!(w >= 0.0, "quadratic weight must be nonnegative");
        self.quad_diag.push((v.index(), w));
    }

    pub fn add_eq(&mut self, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>) {
        self.eqs.push(lhs.into() - rhs.into());
    }

    /// `lhs ≤ rhs`
    pub fn add_le(&mut self, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>) {
        self.nonneg.push(rhs.into() - lhs.into());
    }

    /// `lhs ≥ rhs`
    pub fn add_ge(&mut self, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>) {
        self.nonneg.push(lhs.into() - rhs.into());
    }

    /// `‖xs‖₂ ≤ t`
    pub fn add_soc(&mut self, t: impl Into<LinExpr>, xs: Vec<LinExpr>) {
        let mut row = Vec::with_capacity(xs.len() + 1);
        row.push(t.into());
        row.extend(xs);
        self.socs.push(row);
    }

    /// `‖xs‖₂² ≤ y·z` with `y, z ≥ 0` (rotated cone).
    pub fn add_rotated_soc(&mut self, y: impl Into<LinExpr>, z: impl Into<LinExpr>, xs: Vec<LinExpr>) {
        let y = y.into();
        let z = z.into();
        let mut row = Vec::with_capacity(xs.len() + 2);
        row.push((y.clone() + z.clone()) * 0.5);
        row.push((y - z) * 0.5);
        row.extend(xs);
        self.socs.push(row);
    }

    /// `|e|² ≤ y` for a complex expression.
    pub fn add_abs2_le(&mut self, e: &CExpr, y: impl Into<LinExpr>) {
        self.add_rotated_soc(y, 1.0, vec![e.re.clone(), e.im.clone()]);
    }

    /// Symmetric matrix of affine expressions constrained PSD; `entry(r, c)` is queried for r ≤ c.
    pub fn add_psd(&mut self, dim: usize, mut entry: impl FnMut(usize, usize) -> LinExpr) {
        let mut entries = Vec::with_capacity(dim * (dim + 1) / 2);
        for c in 0..dim {
            for r in 0..=c {
                entries.push(entry(r, c));
            }
        }
        self.psds.push(PsdBlock { dim, entries });
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x) + self.quad_diag.iter().map(|&(i, w)| 0.5 * w * x[i] * x[i]).sum::<f64>()
    }

    /// Largest violation of any constraint at `x` (PSD blocks measured by the most negative
    /// eigenvalue).
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let mut r: f64 = 0.0;
        for e in &self.eqs {
            r = r.max(e.eval(x).abs());
        }
        for e in &self.nonneg {
            r = r.max(-e.eval(x));
        }
        for row in &self.socs {
            let t = row[0].eval(x);
            let n = row[1..].iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
            r = r.max(n - t);
        }
        for b in &self.psds {
            let m = b.eval(x);
            let lmin = m.symmetric_eigenvalues().min();
            r = r.max(-lmin);
        }
        r.max(0.0)
    }

    pub(crate) fn check(&self) -> Result<(), crate::ConicError> {
        let n = self.n_vars;
        let bad = |e: &LinExpr| e.max_index().is_some_and(|i| i >= n) || !e.constant.is_finite()
            || e.terms.iter().any(|t| !t.1.is_finite());
        if !self.quad_diag.is_empty() && self.sense == Sense::Maximize {
            return Err(crate::ConicError::Malformed("quadratic term in a maximization".into()));
        }
        if bad(&self.objective) || self.quad_diag.iter().any(|&(i, w)| i >= n || !w.is_finite()) {
            return Err(crate::ConicError::Malformed("objective".into()));
        }
        for (k, e) in self.eqs.iter().chain(&self.nonneg).enumerate() {
            if bad(e) {
                return Err(crate::ConicError::Malformed(format!("linear constraint {k}")));
            }
        }
        for (k, row) in self.socs.iter().enumerate() {
            if row.len() < 2 || row.iter().any(bad) {
                return Err(crate::ConicError::Malformed(format!("cone {k}")));
            }
        }
        for (k, b) in self.psds.iter().enumerate() {
            if b.dim == 0 || b.entries.len() != b.dim * (b.dim + 1) / 2 || b.entries.iter().any(bad) {
                return Err(crate::ConicError::Malformed(format!("psd block {k}")));
            }
        }
        Ok(())
    }
}
