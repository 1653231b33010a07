//! Central finite-difference validation of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::{Params, Tensor};

/// Coordinates above this count are checked on a seeded random subset.
pub const MAX_CHECKED_COORDS: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest per-coordinate relative error.
    pub max_rel_error: f64,
    /// Flat coordinate (over all checked tensors, in order) of the worst error.
    pub worst_coord: usize,
    pub checked: usize,
    pub passed: bool,
}

/// Relative error of each pair, with the denominator floored at 1e-3 of the
/// largest finite-difference magnitude so near-zero coordinates are judged
/// against the gradient's overall scale.
fn summarize(pairs: &[(f64, f64)], tol: f64) -> GradCheckReport {
    let scale = pairs.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let floor = (1e-3 * scale).max(f64::MIN_POSITIVE);
    let mut worst = (0.0, 0);
    for (i, &(a, n)) in pairs.iter().enumerate() {
        let e = (a - n).abs() / a.abs().max(n.abs()).max(floor);
        if e > worst.0 || e.is_nan() {
            worst = (e, i);
        }
    }
    GradCheckReport {
        max_rel_error: worst.0,
        worst_coord: worst.1,
        checked: pairs.len(),
        passed: worst.0 < tol,
    }
}

fn coords(n: usize, seed: u64) -> Vec<usize> {
    if n <= MAX_CHECKED_COORDS {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = sample(&mut rng, n, MAX_CHECKED_COORDS).into_vec();
        v.sort_unstable();
        v
    }
}

fn eval_scalar(g: &Graph<f64>, out: Var) -> Result<f64> {
    let v = g.value(out);
    if v.len() != 1 {
        return Err(TensorError::NonScalar(v.shape().to_vec()));
    }
    Ok(v.data()[0])
}

/// Compares the analytic gradient of the scalar `f` with respect to its input
/// against `(f(x+eps e) - f(x-eps e)) / 2 eps`.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let run = |t: Tensor<f64>, grad: bool| -> Result<(f64, Option<Vec<f64>>)> {
        let mut g = Graph::new();
        g.set_check_finite(true);
        let xv = g.input(t.with_requires_grad(grad));
        let out = f(&mut g, xv)?;
        let val = eval_scalar(&g, out)?;
        let grad = if grad {
            g.gradients(out)?.get(xv).map(<[f64]>::to_vec)
        } else {
            None
        };
        Ok((val, grad))
    };
    let (_, analytic) = run(x.clone(), true)?;
    let analytic = analytic.unwrap_or_else(|| vec![0.0; x.len()]);
    let mut pairs = Vec::new();
    for i in coords(x.len(), 0x5eed) {
        let mut xp = x.clone();
        xp.data_mut()[i] += eps;
        let mut xm = x.clone();
        xm.data_mut()[i] -= eps;
        let fd = (run(xp, false)?.0 - run(xm, false)?.0) / (2.0 * eps);
        pairs.push((analytic[i], fd));
    }
    Ok(summarize(&pairs, tol))
}

/// Same check with respect to every trainable tensor of `params`.
///
/// Frozen tensors (`requires_grad == false`) are skipped.
pub fn grad_check_params<F>(f: F, params: &Params<f64>, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &Params<f64>) -> Result<Var>,
{
    let eval = |p: &Params<f64>| -> Result<f64> {
        let mut g = Graph::new();
        g.set_check_finite(true);
        let out = f(&mut g, p)?;
        eval_scalar(&g, out)
    };
    let mut work = params.clone();
    work.ids().for_each(|id| work.get_mut(id).set_requires_grad(params.get(id).requires_grad()));
    work.zero_grad();
    {
        let mut g = Graph::new();
        let out = f(&mut g, &work)?;
        eval_scalar(&g, out)?;
        g.backward(out, &mut work)?;
    }
    let trainable: Vec<_> = work.ids().filter(|&id| work.get(id).requires_grad()).collect();
    let flat: Vec<(usize, usize)> = trainable
        .iter()
        .flat_map(|&id| (0..work.get(id).len()).map(move |k| (id.index(), k)))
        .collect();
    let mut pairs = Vec::new();
    for c in coords(flat.len(), 0xc0ffee) {
        let (pi, k) = flat[c];
        let id = work.ids().nth(pi).expect("param index");
        let a = work.get(id).grad().map(|g| g[k]).unwrap_or(0.0);
        let mut p = params.clone();
        p.get_mut(id).data_mut()[k] += eps;
        let fp = eval(&p)?;
        p.get_mut(id).data_mut()[k] -= 2.0 * eps;
        let fm = eval(&p)?;
        pairs.push((a, (fp - fm) / (2.0 * eps)));
    }
    Ok(summarize(&pairs, tol))
}
