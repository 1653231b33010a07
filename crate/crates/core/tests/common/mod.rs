use sparse_ct::metrics::SsimConfig;

/// SSIM straight from the definition: a full 2-D Gaussian window at every
/// valid position, no separable filtering.
pub fn brute_ssim(x: &[f64], y: &[f64], h: usize, w: usize, cfg: &SsimConfig) -> f64 {
    let k = cfg.kernel;
    let c = (k as f64 - 1.0) / 2.0;
    let mut win = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            win[i * k + j] = (-d2 / (2.0 * cfg.sigma * cfg.sigma)).exp();
        }
    }
    let s: f64 = win.iter().sum();
    win.iter_mut().for_each(|v| *v /= s);
    let (c1, c2) = ((cfg.k1 * cfg.data_range).powi(2), (cfg.k2 * cfg.data_range).powi(2));
    let mut acc = 0.0;
    let mut n = 0;
    for r in 0..=h - k {
        for q in 0..=w - k {
            let at = |img: &[f64], i: usize, j: usize| img[(r + i) * w + q + j];
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    mx += win[i * k + j] * at(x, i, j);
                    my += win[i * k + j] * at(y, i, j);
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let (a, b) = (at(x, i, j) - mx, at(y, i, j) - my);
                    vx += win[i * k + j] * a * a;
                    vy += win[i * k + j] * b * b;
                    cov += win[i * k + j] * a * b;
                }
            }
            acc += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            n += 1;
        }
    }
    acc / n as f64
}
