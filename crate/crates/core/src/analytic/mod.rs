//! Closed forms and numerical solvers for the gauge martingale limits.
//!
//! The critical parameter `β_c` is the root in (0,1] of
//! `β ln β = β - 1/2`. For `β > β_c` the limit `A_β(∞)` has mean one and its
//! moment generating function `φ_β(r) = E exp(-r A_β(∞))` is the unique
//! mean-one solution of the smoothing fixed-point equation
//! `φ(r) = ∫ φ(rs)^2 ν_β(ds)`; see [`mgf`].

pub mod mgf;
pub mod quadrature;

use std::sync::OnceLock;

use crate::error::{check_unit_interval, Error, Result};

pub use mgf::{
    mgf_closed_form_half, mgf_fixed_point, mgf_solve_ode, smoothing_map, MgfGrid, MgfMethod,
};

/// `g(β) = β ln β - β + 1/2`, whose root in (0,1] is `β_c`.
pub fn critical_equation(beta: f64) -> f64 {
    beta * beta.ln() - beta + 0.5
}

/// Root of [`critical_equation`] by Newton's method safeguarded with
/// bisection; `g(0+) = 1/2` and `g(1) = -1/2` bracket it.
///
/// Iterates until `|g| < tol` or the bracket collapses to machine precision.
pub fn beta_critical(tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, 1.0f64);
    let mut x = 0.5;
    for _ in 0..500 {
        let g = critical_equation(x);
        if g.abs() < tol {
            return Ok(x);
        }
        if g > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi {
            break;
        }
        // g'(β) = ln β
        let newton = x - g / x.ln();
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(x)
}

/// `β_c` solved to full double precision, cached.
pub fn beta_c() -> f64 {
    static BETA_C: OnceLock<f64> = OnceLock::new();
    *BETA_C.get_or_init(|| beta_critical(1e-300).expect("positive tolerance"))
}

/// Mean gauge `m_β(t) = E a_β(V^(1)(t)) = e^{(2β-1)t}`.
pub fn mean_gauge(beta: f64, t: f64) -> Result<f64> {
    check_unit_interval("beta", beta)?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    Ok(((2.0 * beta - 1.0) * t).exp())
}

/// `E[W_β ln W_β] = ln(2β) - (2β-1)/(2β)` for the smoothing weight
/// `W_β = 2β e^{-(2β-1)T}`; the fixed point is unique iff this is `< ln 2`.
pub fn w_loglog_moment(beta: f64) -> Result<f64> {
    check_unit_interval("beta", beta)?;
    Ok((2.0 * beta).ln() - (2.0 * beta - 1.0) / (2.0 * beta))
}

/// The mixing law `ν_β` of `s = β e^{-(2β-1)T}`, `T ~ Exp(1)`, for β ≠ 1/2.
///
/// Supported on `[0, β]` for β > 1/2 and on `[β, ∞)` for β < 1/2, with
/// density `(s/β)^{1/(2β-1)} / (|2β-1| s)`. At β = 1/2 it degenerates to
/// the point mass at 1/2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NuMeasure {
    beta: f64,
    exponent: f64,
}

impl NuMeasure {
    pub fn new(beta: f64) -> Result<Self> {
        check_unit_interval("beta", beta)?;
        if beta == 0.5 {
            return Err(Error::Domain(
                "nu_1/2 is the point mass at 1/2 and has no density".into(),
            ));
        }
        Ok(NuMeasure {
            beta,
            exponent: 1.0 / (2.0 * beta - 1.0),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn support(&self) -> (f64, f64) {
        if self.beta > 0.5 {
            (0.0, self.beta)
        } else {
            (self.beta, f64::INFINITY)
        }
    }

    pub fn contains(&self, s: f64) -> bool {
        let (lo, hi) = self.support();
        s >= lo && s <= hi && s > 0.0
    }

    pub fn density(&self, s: f64) -> f64 {
        if !self.contains(s) {
            return 0.0;
        }
        (s / self.beta).powf(self.exponent) / ((2.0 * self.beta - 1.0).abs() * s)
    }

    pub fn cdf(&self, s: f64) -> f64 {
        let (lo, hi) = self.support();
        if s <= lo {
            0.0
        } else if s >= hi {
            1.0
        } else if self.beta > 0.5 {
            (s / self.beta).powf(self.exponent)
        } else {
            1.0 - (s / self.beta).powf(self.exponent)
        }
    }

    /// Mass of `(s, ∞)`.
    pub fn upper_tail(&self, s: f64) -> f64 {
        1.0 - self.cdf(s)
    }
}

/// Density of `ν_β` at `s`, zero outside the support.
pub fn nu_density(beta: f64, s: f64) -> Result<f64> {
    Ok(NuMeasure::new(beta)?.density(s))
}

/// `E A_β(∞)^2 = 2β² / (4β - 1 - 2β²)`, finite iff `4β - 1 - 2β² > 0`.
pub fn second_moment_limit(beta: f64) -> Result<f64> {
    check_unit_interval("beta", beta)?;
    let denom = 4.0 * beta - 1.0 - 2.0 * beta * beta;
    if denom <= 0.0 {
        return Err(Error::Domain(format!(
            "second moment of the limit is infinite or unvalidated at beta = {beta}"
        )));
    }
    Ok(2.0 * beta * beta / denom)
}

/// Moments `m_0 = 1, m_1 = 1, m_2, ...` of `A_β(∞)` up to `k_max`, stopping
/// at the first infinite one.
///
/// Raising the recursion `A = s (A⁺ + A⁻)`, `s ~ ν_β`, to the k-th power
/// gives `m_k (1 - 2 c_k) = c_k sum_{0<j<k} C(k,j) m_j m_{k-j}` with
/// `c_k = E s^k = β^k / (1 + (2β-1)k)`.
pub fn limit_moments(beta: f64, k_max: usize) -> Result<Vec<f64>> {
    check_unit_interval("beta", beta)?;
    if beta <= beta_c() {
        return Err(Error::Domain(format!(
            "beta = {beta} <= beta_c: the limit vanishes almost surely"
        )));
    }
    let mut m = vec![1.0, 1.0];
    for k in 2..=k_max {
        let denom_k = 1.0 + (2.0 * beta - 1.0) * k as f64;
        if denom_k <= 0.0 {
            break;
        }
        let c_k = beta.powi(k as i32) / denom_k;
        let factor = 1.0 - 2.0 * c_k;
        if factor <= 0.0 {
            break;
        }
        let mut binom = 1.0;
        let mut conv = 0.0;
        for j in 1..k {
            binom *= (k - j + 1) as f64 / j as f64;
            conv += binom * m[j] * m[k - j];
        }
        m.push(c_k * conv / factor);
    }
    m.truncate(k_max + 1);
    Ok(m)
}
