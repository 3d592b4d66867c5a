//! Gauss–Laguerre quadrature for integrals against `e^{-t} dt` on `[0, ∞)`.

use std::sync::OnceLock;

pub const LAGUERRE_NODES: usize = 64;

/// Nodes and weights of the `n`-point Gauss–Laguerre rule (weight `e^{-t}`),
/// by Newton iteration on the three-term recurrence.
pub fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..n {
        // Initial guesses from the classical asymptotic formulas.
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => z + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - x[i - 2])
            }
        };
        let mut p2 = 0.0;
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0 - z) * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (p1 - p2) / z;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        w[i] = -1.0 / (pp * nf * p2);
    }
    (x, w)
}

/// The cached 64-point rule.
pub fn laguerre64() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_laguerre(LAGUERRE_NODES))
}

/// `∫_0^∞ e^{-t} f(t) dt` by the 64-point rule.
pub fn integrate_exp_weight(f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = laguerre64();
    x.iter().zip(w).map(|(&t, &wt)| wt * f(t)).sum()
}
