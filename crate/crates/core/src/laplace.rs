//! Laplace distribution helpers shared by the latent entropy model and the
//! weight codec.
//!
//! All interval masses are computed in a form that avoids cancellation in the
//! tails: when both bounds lie on the same side of the mean, the mass is the
//! difference of two small exponentials rather than of two CDF values near 1.

/// Smallest probability assigned to any coded value, in both the rate
/// estimate and the training loss.
pub const PROB_FLOOR: f64 = 1.0 / 65536.0;

/// Bounds applied to the Laplace scale predicted by the context model.
pub const SCALE_MIN: f64 = 1e-3;
pub const SCALE_MAX: f64 = 150.0;

/// Cumulative distribution function of Laplace(`mu`, `b`) at `x`.
pub fn cdf(x: f64, mu: f64, b: f64) -> f64 {
    let u = (x - mu) / b;
    if u < 0.0 {
        0.5 * u.exp()
    } else {
        1.0 - 0.5 * (-u).exp()
    }
}

/// Mass of Laplace(`mu`, `b`) on `[lo, hi]`.
pub fn interval_mass(lo: f64, hi: f64, mu: f64, b: f64) -> f64 {
    let ul = (lo - mu) / b;
    let uh = (hi - mu) / b;
    if uh <= 0.0 {
        0.5 * (uh.exp() - ul.exp())
    } else if ul >= 0.0 {
        0.5 * ((-ul).exp() - (-uh).exp())
    } else {
        1.0 - 0.5 * ul.exp() - 0.5 * (-uh).exp()
    }
}

/// Probability of integer bin `v` (mass on `[v - 0.5, v + 0.5]`), floored at
/// [`PROB_FLOOR`] and capped at 1.
pub fn bin_prob(v: f64, mu: f64, b: f64) -> f64 {
    interval_mass(v - 0.5, v + 0.5, mu, b).clamp(PROB_FLOOR, 1.0)
}

/// Bits needed to code bin `v` under Laplace(`mu`, `b`).
pub fn bin_bits(v: f64, mu: f64, b: f64) -> f64 {
    -bin_prob(v, mu, b).log2()
}

/// Scale `b` from the unconstrained log-scale output of the context model.
pub fn scale_from_log(log_scale: f64) -> f64 {
    log_scale.exp().clamp(SCALE_MIN, SCALE_MAX)
}

/// Bits for bin `v` and their partial derivatives with respect to the bin
/// center, the mean and the log-scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct BitsGrad {
    pub bits: f64,
    pub d_value: f64,
    pub d_mu: f64,
    pub d_log_scale: f64,
}

pub(crate) fn bin_bits_with_grad(v: f64, mu: f64, log_scale: f64) -> BitsGrad {
    let raw_b = log_scale.exp();
    let b = raw_b.clamp(SCALE_MIN, SCALE_MAX);
    let lo = v - 0.5;
    let hi = v + 0.5;
    let p = interval_mass(lo, hi, mu, b);
    if !(p > PROB_FLOOR) {
        return BitsGrad {
            bits: -PROB_FLOOR.log2(),
            d_value: 0.0,
            d_mu: 0.0,
            d_log_scale: 0.0,
        };
    }
    let p = p.min(1.0);
    let dens = |x: f64| (-((x - mu) / b).abs()).exp() / (2.0 * b);
    let f_hi = dens(hi);
    let f_lo = dens(lo);
    let dp_dv = f_hi - f_lo;
    let dp_dmu = f_lo - f_hi;
    let dp_db = (f_lo * (lo - mu) - f_hi * (hi - mu)) / b;
    // b = exp(s) inside the clamp range, constant outside it.
    let db_ds = if raw_b > SCALE_MIN && raw_b < SCALE_MAX {
        b
    } else {
        0.0
    };
    let k = -1.0 / (p * std::f64::consts::LN_2);
    BitsGrad {
        bits: -p.log2(),
        d_value: k * dp_dv,
        d_mu: k * dp_dmu,
        d_log_scale: k * dp_db * db_ds,
    }
}
