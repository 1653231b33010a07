//! Variational objective, handcrafted regularizers, gradient descent and
//! full-space BFGS reconstruction.

mod bfgs;
mod line_search;
mod objective;

use std::io::Write;

pub use bfgs::{bfgs_update, symmetry_index, BfgsState, CurvaturePolicy, HessianDiagnostics, UpdateOutcome, SYMMETRY_TOL};
pub use line_search::{LineSearch, Step, ValueGrad, C1, C2};
pub use objective::{operator_norm_sq, Identity, LinearOperator, Objective, Regularizer};

use crate::error::{arg, Error, Result};

/// Largest image (pixels) for which a dense `D x D` inverse Hessian is allowed.
pub const MAX_DENSE_DIM: usize = 128 * 128;

#[derive(Clone, Debug)]
pub struct GdResult {
    pub x: Vec<f64>,
    /// `J(x_t)` for `t = 0..=T`.
    pub trace: Vec<f64>,
}

/// `x_{t+1} = x_t - alpha grad J(x_t)` for `iters` steps.
pub fn gradient_descent(obj: &Objective<'_>, x0: &[f64], alpha: f64, iters: usize) -> Result<GdResult> {
    if !(alpha >= 0.0) || iters < 1 {
        return Err(arg(format!("gradient descent needs alpha >= 0 and T >= 1 (alpha {alpha}, T {iters})")));
    }
    let mut x = x0.to_vec();
    let (j0, mut g) = obj.value_and_gradient(&x)?;
    let mut trace = vec![j0];
    for t in 1..=iters {
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= alpha * gi);
        let (j, gn) = obj.value_and_gradient(&x)?;
        trace.push(j);
        if !j.is_finite() || j > 10.0 * j0.max(f64::MIN_POSITIVE) {
            return Err(Error::Diverged { iteration: t, value: j, initial: j0, trace });
        }
        g = gn;
    }
    Ok(GdResult { x, trace })
}

/// One iteration of a quasi-Newton run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub secant_residual: f64,
    pub symmetry_index: f64,
    pub frobenius_step: f64,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str = "iteration,objective,grad_norm,step,secant_residual,symmetry_index,frobenius_step";

    pub fn csv(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.iteration,
            self.objective,
            self.grad_norm,
            self.step,
            self.secant_residual,
            self.symmetry_index,
            self.frobenius_step
        )
    }
}

pub fn write_trace_csv<W: Write>(mut out: W, rows: &[TraceRow]) -> std::io::Result<()> {
    writeln!(out, "{}", TraceRow::CSV_HEADER)?;
    for r in rows {
        writeln!(out, "{}", r.csv())?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop once `|grad| < gtol`; `0` runs all iterations.
    pub gtol: f64,
    pub line_search: LineSearch,
    pub policy: CurvaturePolicy,
    /// Fail when the objective exceeds this multiple of its initial value.
    pub divergence_factor: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            gtol: 1e-8,
            line_search: LineSearch::StrongWolfe,
            policy: CurvaturePolicy::default(),
            divergence_factor: 10.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BfgsRun {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Row 0 describes the starting point.
    pub trace: Vec<TraceRow>,
    pub state: BfgsState,
}

/// BFGS with `H_0 = I`: `d = -H g`, line search, then the inverse-Hessian update.
pub fn bfgs_minimize(fg: &mut ValueGrad<'_>, x0: &[f64], opts: &BfgsOptions) -> Result<BfgsRun> {
    let n = x0.len();
    let mut state = BfgsState::identity(n, opts.policy);
    let mut x = x0.to_vec();
    let (mut f, mut g) = fg(&x)?;
    let f_init = f;
    let gnorm = |g: &[f64]| bfgs::norm(g);
    let mut trace = vec![TraceRow {
        iteration: 0,
        objective: f,
        grad_norm: gnorm(&g),
        step: 0.0,
        secant_residual: 0.0,
        symmetry_index: 0.0,
        frobenius_step: 0.0,
    }];
    let mut converged = gnorm(&g) < opts.gtol;
    let mut it = 0;
    while it < opts.max_iter && !converged {
        it += 1;
        let mut d: Vec<f64> = state.apply(&g).into_iter().map(|v| -v).collect();
        if bfgs::dot(&d, &g) >= 0.0 {
            log::warn!("iteration {it}: H g is not a descent direction; resetting H to I");
            state = BfgsState::identity(n, opts.policy);
            d = g.iter().map(|v| -v).collect();
        }
        let step = match opts.line_search.search(fg, &x, f, &g, &d) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("iteration {it}: {e}; stopping");
                break;
            }
        };
        if !step.f.is_finite() || step.f > opts.divergence_factor * f_init.abs().max(f64::MIN_POSITIVE) {
            let tr = trace.iter().map(|r| r.objective).chain([step.f]).collect();
            return Err(Error::Diverged { iteration: it, value: step.f, initial: f_init, trace: tr });
        }
        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let z: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        state.update(&s, &z);
        let diag = state.diagnostics();
        x = step.x;
        f = step.f;
        g = step.g;
        trace.push(TraceRow {
            iteration: it,
            objective: f,
            grad_norm: gnorm(&g),
            step: step.alpha,
            secant_residual: diag.secant_residual,
            symmetry_index: diag.symmetry_index,
            frobenius_step: diag.frobenius_step,
        });
        converged = gnorm(&g) < opts.gtol;
    }
    Ok(BfgsRun { x, f, grad: g, iterations: it, converged, trace, state })
}

/// Full-space quasi-Newton reconstruction from `x0` for `iters` iterations.
///
/// Refuses images above [`MAX_DENSE_DIM`] pixels.
pub fn qn_reconstruct(obj: &Objective<'_>, x0: &[f64], iters: usize, line_search: LineSearch) -> Result<BfgsRun> {
    let dim = obj.h * obj.w;
    if dim > MAX_DENSE_DIM {
        return Err(Error::MemoryGuard { dim, limit: MAX_DENSE_DIM });
    }
    let opts = BfgsOptions { max_iter: iters, gtol: 0.0, line_search, ..BfgsOptions::default() };
    let mut fg = |x: &[f64]| obj.value_and_gradient(x);
    bfgs_minimize(&mut fg, x0, &opts)
}
