// Reverse-mode differentiation of a small convolutional model, verified
// against central finite differences.
//
//     cargo run --release --example autodiff_gradcheck

use ndauto::{grad_check_params, Graph, Params, Tensor};

/// Returns the worst relative error of the gradient check.
pub fn run_example() -> Result<f64, Box<dyn std::error::Error>> {
    let mut params = Params::<f64>::new();
    let w = (0..2 * 9).map(|i| ((i * 37 % 11) as f64 - 5.0) / 10.0).collect();
    params.insert("conv.weight", Tensor::new(&[2, 1, 3, 3], w)?)?;
    params.insert("conv.bias", Tensor::new(&[2], vec![0.1, -0.2])?)?;
    params.insert("act", Tensor::new(&[2], vec![0.25, 0.25])?)?;
    let x = Tensor::new(&[1, 1, 6, 6], (0..36).map(|i| (i as f64 * 0.7).sin()).collect())?;

    let model = |g: &mut Graph<f64>, p: &Params<f64>| {
        let xv = g.constant(x.clone());
        let w = g.param(p, p.id("conv.weight").unwrap());
        let b = g.param(p, p.id("conv.bias").unwrap());
        let a = g.param(p, p.id("act").unwrap());
        let h = g.conv2d(xv, w, Some(b), 1, 1)?;
        let h = g.prelu(h, a)?;
        g.sum_of_squares(h)
    };

    let mut g = Graph::new();
    let loss = model(&mut g, &params)?;
    println!("loss {:.6}", g.value(loss).data()[0]);
    g.backward(loss, &mut params)?;
    for (name, t) in params.iter() {
        println!("d loss / d {name}: {:?}", t.grad().map(|v| v.iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>()));
    }
    let report = grad_check_params(model, &params, 1e-6, 1e-6)?;
    println!("gradient check over {} coordinates: max relative error {:.2e}", report.checked, report.max_rel_error);
    Ok(report.max_rel_error)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
