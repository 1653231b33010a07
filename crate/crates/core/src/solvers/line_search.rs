use std::str::FromStr;

use super::bfgs::dot;
use crate::error::{arg, Error, Result};

/// Step-length rule along a descent direction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum LineSearch {
    /// Always `alpha = 1`.
    Fixed,
    /// Backtracking from 1 by halving until sufficient decrease (`c1 = 1e-4`).
    Armijo,
    /// Bracketing/zoom search for the strong Wolfe conditions.
    #[default]
    StrongWolfe,
}

impl FromStr for LineSearch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(LineSearch::Fixed),
            "armijo" => Ok(LineSearch::Armijo),
            "strong-wolfe" | "wolfe" => Ok(LineSearch::StrongWolfe),
            other => Err(arg(format!("unknown line search `{other}`"))),
        }
    }
}

pub const C1: f64 = 1e-4;
pub const C2: f64 = 0.9;
const MAX_EVALS: usize = 40;

/// Objective returning `(f(x), grad f(x))`.
pub type ValueGrad<'a> = dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>)> + 'a;

/// Accepted point `x + alpha d`.
#[derive(Clone, Debug)]
pub struct Step {
    pub alpha: f64,
    pub x: Vec<f64>,
    pub f: f64,
    pub g: Vec<f64>,
}

impl LineSearch {
    /// Searches along `d` from `x` (value `f0`, gradient `g0`).
    pub fn search(&self, fg: &mut ValueGrad<'_>, x: &[f64], f0: f64, g0: &[f64], d: &[f64]) -> Result<Step> {
        let mut eval = |a: f64| -> Result<Step> {
            let xa: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + a * di).collect();
            let (f, g) = fg(&xa)?;
            Ok(Step { alpha: a, x: xa, f, g })
        };
        let dphi0 = dot(g0, d);
        match self {
            LineSearch::Fixed => eval(1.0),
            LineSearch::Armijo => {
                let mut a = 1.0;
                for _ in 0..MAX_EVALS {
                    let st = eval(a)?;
                    if st.f <= f0 + C1 * a * dphi0 {
                        return Ok(st);
                    }
                    a *= 0.5;
                }
                eval(0.0)
            }
            LineSearch::StrongWolfe => strong_wolfe(&mut eval, f0, dphi0, d),
        }
    }
}

fn strong_wolfe(eval: &mut dyn FnMut(f64) -> Result<Step>, f0: f64, dphi0: f64, d: &[f64]) -> Result<Step> {
    let slope = |st: &Step| dot(&st.g, d);
    let mut prev: Option<Step> = None;
    let mut a = 1.0;
    for i in 0..MAX_EVALS {
        let st = eval(a)?;
        let f_prev = prev.as_ref().map_or(f0, |p| p.f);
        if !st.f.is_finite() || st.f > f0 + C1 * a * dphi0 || (i > 0 && st.f >= f_prev) {
            return zoom(eval, f0, dphi0, d, prev, st);
        }
        let ds = slope(&st);
        if ds.abs() <= -C2 * dphi0 {
            return Ok(st);
        }
        if ds >= 0.0 {
            return zoom(eval, f0, dphi0, d, Some(st), prev.unwrap_or_else(|| zero_step(f0)));
        }
        prev = Some(st);
        a *= 2.0;
    }
    prev.ok_or_else(|| arg("line search failed to bracket a step"))
}

fn zero_step(f0: f64) -> Step {
    Step { alpha: 0.0, x: Vec::new(), f: f0, g: Vec::new() }
}

/// `lo` satisfies sufficient decrease with the lowest value so far; the
/// minimiser lies between `lo` and `hi`.
fn zoom(
    eval: &mut dyn FnMut(f64) -> Result<Step>,
    f0: f64,
    dphi0: f64,
    d: &[f64],
    lo: Option<Step>,
    hi: Step,
) -> Result<Step> {
    let mut lo_a = lo.as_ref().map_or(0.0, |s| s.alpha);
    let mut lo_f = lo.as_ref().map_or(f0, |s| s.f);
    let mut lo_d = lo.as_ref().map_or(dphi0, |s| dot(&s.g, d));
    let mut best = lo;
    let (mut hi_a, mut hi_f) = (hi.alpha, hi.f);
    for _ in 0..MAX_EVALS {
        let span = hi_a - lo_a;
        // quadratic model through (lo, f_lo, f'_lo) and (hi, f_hi)
        let denom = 2.0 * (hi_f - lo_f - lo_d * span);
        let mut a = if denom.is_finite() && denom.abs() > 0.0 { lo_a - lo_d * span * span / denom } else { f64::NAN };
        let (left, right) = (lo_a.min(hi_a), lo_a.max(hi_a));
        let margin = 0.1 * (right - left);
        if !a.is_finite() || a < left + margin || a > right - margin {
            a = 0.5 * (lo_a + hi_a);
        }
        let st = eval(a)?;
        if !st.f.is_finite() || st.f > f0 + C1 * a * dphi0 || st.f >= lo_f {
            hi_a = a;
            hi_f = st.f;
        } else {
            let ds = dot(&st.g, d);
            if ds.abs() <= -C2 * dphi0 {
                return Ok(st);
            }
            if ds * (hi_a - lo_a) >= 0.0 {
                hi_a = lo_a;
                hi_f = lo_f;
            }
            lo_a = a;
            lo_f = st.f;
            lo_d = ds;
            best = Some(st);
        }
        if (hi_a - lo_a).abs() < 1e-14 * lo_a.abs().max(1.0) {
            break;
        }
    }
    best.filter(|s| s.alpha > 0.0).ok_or_else(|| arg("strong Wolfe search found no acceptable step"))
}
