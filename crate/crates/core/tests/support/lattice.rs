//! Lattice-refinement minimiser for small penalised quantile objectives.

fn objective(y: &[f64], x: &[Vec<f64>], tau: f64, lambda: f64, theta: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mut loss = 0.0;
    for (t, &yt) in y.iter().enumerate() {
        let fitted = theta[0] + x[t].iter().zip(&theta[1..]).map(|(a, b)| a * b).sum::<f64>();
        let u = yt - fitted;
        loss += if u < 0.0 { (tau - 1.0) * u } else { tau * u };
    }
    loss / n + lambda * theta[1..].iter().map(|b| b.abs()).sum::<f64>()
}

/// Minimise over (alpha, beta) by searching a (2K+1)^d lattice around the
/// incumbent and halving the spacing whenever the centre wins.
pub fn minimise(y: &[f64], x: &[Vec<f64>], tau: f64, lambda: f64) -> (f64, Vec<f64>) {
    const K: i64 = 3;
    let p = x.first().map_or(0, |r| r.len());
    let d = 1 + p;
    let spread = y.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let mut centre = vec![0.0; d];
    let mut best = objective(y, x, tau, lambda, &centre);
    let mut h = spread;
    let total = (2 * K + 1).pow(d as u32);
    let mut point = vec![0.0; d];
    while h > 1e-10 {
        let mut best_point = centre.clone();
        for code in 0..total {
            let mut c = code;
            for k in 0..d {
                let off = (c % (2 * K + 1)) - K;
                c /= 2 * K + 1;
                point[k] = centre[k] + off as f64 * h;
            }
            let v = objective(y, x, tau, lambda, &point);
            if v < best {
                best = v;
                best_point.copy_from_slice(&point);
            }
        }
        if best_point == centre {
            h *= 0.5;
        } else {
            centre = best_point;
        }
    }
    (best, centre)
}
