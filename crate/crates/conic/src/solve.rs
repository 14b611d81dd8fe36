use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::expr::{CExpr, LinExpr, Var};
use crate::program::{ConicProgram, HermitianVar, Sense};
use crate::ConicError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// The backend stopped near a solution but short of the requested accuracy; `x` is usable by
    /// callers that verify it themselves (`primal_residual` tells how far off it is).
    ReducedAccuracy,
    /// Iteration limit or numerical trouble; `x` holds the last iterate.
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: Status,
    pub x: Vec<f64>,
    /// Objective reported by the backend, in the program's own sense (incl. constant term).
    pub objective: f64,
    pub primal_residual: f64,
    pub iterations: u32,
    /// Backend finished with reduced accuracy but the residual check passed.
    pub reduced_accuracy: bool,
    /// Backend's own termination status, for diagnostics.
    pub backend_status: String,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    /// Optimal, or reduced accuracy with a primal residual within `tol`.
    pub fn is_usable(&self, tol: f64) -> bool {
        self.status == Status::Optimal || (self.status == Status::ReducedAccuracy && self.primal_residual <= tol)
    }

    pub fn value(&self, v: Var) -> f64 {
        self.x[v.index()]
    }

    pub fn eval(&self, e: &LinExpr) -> f64 {
        e.eval(&self.x)
    }

    pub fn eval_c(&self, e: &CExpr) -> num_complex::Complex64 {
        e.eval(&self.x)
    }

    pub fn hermitian(&self, h: &HermitianVar) -> nalgebra::DMatrix<num_complex::Complex64> {
        h.value(&self.x)
    }
}

struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    /// Append the row for cone slack `s = w·e(x)`, i.e. `-w·aᵀx + s = w·c`.
    fn push(&mut self, e: &LinExpr, w: f64) {
        let r = self.b.len();
        for &(j, a) in &e.terms {
            if a != 0.0 {
                self.i.push(r);
                self.j.push(j);
                self.v.push(-w * a);
            }
        }
        self.b.push(w * e.constant);
    }
}

/// Solve with the embedded interior-point backend.
pub fn solve(p: &ConicProgram) -> Result<Solution, ConicError> {
    p.check()?;
    let n = p.n_vars;
    let sign = if p.sense == Sense::Maximize { -1.0 } else { 1.0 };

    let mut q = vec![0.0; n];
    for &(j, a) in &p.objective.terms {
        q[j] += sign * a;
    }

    let mut rows = Rows { i: vec![], j: vec![], v: vec![], b: vec![] };
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

    if !p.eqs.is_empty() {
        for e in &p.eqs {
            rows.push(e, 1.0);
        }
        cones.push(SupportedConeT::ZeroConeT(p.eqs.len()));
    }
    if !p.nonneg.is_empty() {
        for e in &p.nonneg {
            rows.push(e, 1.0);
        }
        cones.push(SupportedConeT::NonnegativeConeT(p.nonneg.len()));
    }
    for row in &p.socs {
        for e in row {
            rows.push(e, 1.0);
        }
        cones.push(SupportedConeT::SecondOrderConeT(row.len()));
    }
    for blk in &p.psds {
        let mut k = 0;
        for c in 0..blk.dim {
            for r in 0..=c {
                let w = if r == c { 1.0 } else { std::f64::consts::SQRT_2 };
                rows.push(&blk.entries[k], w);
                k += 1;
            }
        }
        cones.push(SupportedConeT::PSDTriangleConeT(blk.dim));
    }

    let m = rows.b.len();
    if m == 0 && p.quad_diag.is_empty() {
        // Unconstrained linear objective: bounded only if constant.
        if q.iter().any(|&c| c != 0.0) {
            return Ok(Solution {
                status: Status::Unbounded,
                x: vec![0.0; n],
                objective: f64::NAN,
                primal_residual: 0.0,
                iterations: 0,
                reduced_accuracy: false,
                backend_status: "trivial".into(),
            });
        }
        let x = vec![0.0; n];
        return Ok(Solution {
            status: Status::Optimal,
            objective: p.objective_value(&x),
            x,
            primal_residual: 0.0,
            iterations: 0,
            reduced_accuracy: false,
            backend_status: "trivial".into(),
        });
    }

    let a = CscMatrix::new_from_triplets(m, n, rows.i, rows.j, rows.v);
    let pm = if p.quad_diag.is_empty() {
        CscMatrix::<f64>::zeros((n, n))
    } else {
        let (ii, vv): (Vec<usize>, Vec<f64>) = p.quad_diag.iter().copied().unzip();
        CscMatrix::new_from_triplets(n, n, ii.clone(), ii, vv)
    };
    let tol = p.settings.solver_tol;
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(p.settings.max_iter)
        .tol_feas(tol * 0.1)
        .tol_gap_abs(p.settings.gap_tol)
        .tol_gap_rel(p.settings.gap_tol)
        .build()
        .map_err(|e| ConicError::Backend(format!("{e:?}")))?;
    let mut solver = DefaultSolver::new(&pm, &q, &a, &rows.b, &cones, settings)
        .map_err(|e| ConicError::Backend(format!("{e:?}")))?;
    let started = std::time::Instant::now();
    solver.solve();
    let sol = &solver.solution;
    log::debug!(
        "conic solve: {n} vars, {m} rows, {} iters, {:?}, {:.1} ms",
        sol.iterations,
        sol.status,
        started.elapsed().as_secs_f64() * 1e3
    );

    let x = sol.x.clone();
    let resid = if x.iter().all(|v| v.is_finite()) { p.primal_residual(&x) } else { f64::INFINITY };
    let (status, reduced) = match sol.status {
        SolverStatus::Solved => (Status::Optimal, false),
        SolverStatus::AlmostSolved if resid <= 10.0 * tol => (Status::Optimal, true),
        SolverStatus::AlmostSolved if resid.is_finite() => (Status::ReducedAccuracy, true),
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => (Status::Infeasible, false),
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => (Status::Unbounded, false),
        _ => (Status::MaxIter, false),
    };
    Ok(Solution {
        status,
        objective: sign * sol.obj_val + p.objective.constant,
        x,
        primal_residual: resid,
        iterations: sol.iterations,
        reduced_accuracy: reduced,
        backend_status: format!("{:?}", sol.status),
    })
}
