//! Dense BFGS inverse-Hessian update and diagnostics.

use crate::error::{arg, Result};

/// Post-update symmetry tolerance; larger asymmetry is averaged away.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// When a curvature pair `(s, z)` is accepted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CurvaturePolicy {
    /// `z's > eps * |s| |z|`; keeps `H` positive definite.
    Positive { eps: f64 },
    /// `|z's| >= eps`; only guards `rho` against overflow.
    Magnitude { eps: f64 },
}

impl CurvaturePolicy {
    pub fn accepts(&self, s: &[f64], z: &[f64]) -> bool {
        let zs = dot(z, s);
        match *self {
            CurvaturePolicy::Positive { eps } => zs > eps * norm(s) * norm(z),
            CurvaturePolicy::Magnitude { eps } => zs.abs() >= eps && zs.is_finite(),
        }
    }
}

impl Default for CurvaturePolicy {
    fn default() -> Self {
        CurvaturePolicy::Positive { eps: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateOutcome {
    Applied { rho: f64 },
    Skipped { curvature: f64 },
}

/// `H' = (I - rho s z') H (I - rho z s') + rho s s'` for symmetric row-major
/// `H` (`d x d`), evaluated in `O(d^2)` as
/// `H - rho (s b' + b s') + (rho^2 z'Hz + rho) s s'` with `b = H z`.
///
/// The result is exactly symmetric whenever `H` is.
pub fn bfgs_update(h: &[f64], s: &[f64], z: &[f64]) -> Vec<f64> {
    let d = s.len();
    assert_eq!(h.len(), d * d, "H is d x d");
    assert_eq!(z.len(), d, "z has length d");
    let rho = 1.0 / dot(z, s);
    let b = matvec(h, z);
    let c = rho * rho * dot(z, &b) + rho;
    let mut out = h.to_vec();
    for i in 0..d {
        let row = &mut out[i * d..(i + 1) * d];
        for j in 0..d {
            row[j] += -rho * (s[i] * b[j] + b[i] * s[j]) + c * (s[i] * s[j]);
        }
    }
    out
}

/// `SI = sum_{i != j} |M_ij - M_ji| / (n (n - 1))` for a row-major `rows x cols` matrix.
pub fn symmetry_index(m: &[f64], rows: usize, cols: usize) -> Result<f64> {
    if rows != cols || m.len() != rows * cols {
        return Err(arg(format!("symmetry index needs a square matrix, got {rows}x{cols} ({} values)", m.len())));
    }
    let n = rows;
    if n < 2 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += (m[i * n + j] - m[j * n + i]).abs();
            }
        }
    }
    Ok(acc / (n * (n - 1)) as f64)
}

/// Constraint surrogates after the latest update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HessianDiagnostics {
    pub symmetry_index: f64,
    /// `|H z - s| / |s|` for the latest accepted pair.
    pub secant_residual: f64,
    /// `|H_{t+1} - H_t|_F`.
    pub frobenius_step: f64,
}

/// Inverse-Hessian approximation with its latest update pair.
#[derive(Clone, Debug)]
pub struct BfgsState {
    dim: usize,
    h: Vec<f64>,
    policy: CurvaturePolicy,
    last: Option<(Vec<f64>, Vec<f64>, f64)>,
    frobenius_step: f64,
    skipped: usize,
}

impl BfgsState {
    /// `H_0 = I`.
    pub fn identity(dim: usize, policy: CurvaturePolicy) -> Self {
        let mut h = vec![0.0; dim * dim];
        (0..dim).for_each(|i| h[i * dim + i] = 1.0);
        Self { dim, h, policy, last: None, frobenius_step: 0.0, skipped: 0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// `(s, z, rho)` of the latest accepted update.
    pub fn last_pair(&self) -> Option<(&[f64], &[f64], f64)> {
        self.last.as_ref().map(|(s, z, r)| (s.as_slice(), z.as_slice(), *r))
    }

    pub fn skipped_updates(&self) -> usize {
        self.skipped
    }

    /// `H v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        matvec(&self.h, v)
    }

    /// Applies the update if the policy accepts `(s, z)`; otherwise leaves
    /// `H` unchanged and logs the skip.
    pub fn update(&mut self, s: &[f64], z: &[f64]) -> UpdateOutcome {
        assert_eq!(s.len(), self.dim, "s has length dim");
        if !self.policy.accepts(s, z) {
            let curvature = dot(z, s);
            log::debug!("BFGS update skipped: z's = {curvature:e}");
            self.skipped += 1;
            self.frobenius_step = 0.0;
            return UpdateOutcome::Skipped { curvature };
        }
        let rho = 1.0 / dot(z, s);
        let mut next = bfgs_update(&self.h, s, z);
        let si = symmetry_index(&next, self.dim, self.dim).unwrap_or(0.0);
        if si > SYMMETRY_TOL {
            symmetrize(&mut next, self.dim);
        }
        self.frobenius_step = next.iter().zip(&self.h).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        self.h = next;
        self.last = Some((s.to_vec(), z.to_vec(), rho));
        UpdateOutcome::Applied { rho }
    }

    pub fn diagnostics(&self) -> HessianDiagnostics {
        let secant_residual = match &self.last {
            Some((s, z, _)) => {
                let hz = self.apply(z);
                let ns = norm(s);
                let r = hz.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if ns > 0.0 { r / ns } else { r }
            }
            None => 0.0,
        };
        HessianDiagnostics {
            symmetry_index: symmetry_index(&self.h, self.dim, self.dim).unwrap_or(f64::NAN),
            secant_residual,
            frobenius_step: self.frobenius_step,
        }
    }
}

fn symmetrize(m: &mut [f64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = avg;
            m[j * n + i] = avg;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn matvec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    m.chunks_exact(n).map(|row| dot(row, v)).collect()
}
