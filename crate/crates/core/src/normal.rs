//! Standard normal distribution: density, CDF, log-survival and quantiles.
//!
//! The CDF goes through `erfc` so both tails keep full relative precision.
//! Quantiles start from Acklam's rational approximation (relative error
//! about 1e-9) and are polished with Halley steps against the CDF.

use std::f64::consts::{PI, SQRT_2};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// `P(X <= x)`.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `P(X > x)`.
#[inline]
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// `ln P(X > x)`, accurate in both tails.
pub fn ln_sf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return (-cdf(x)).ln_1p();
    }
    if x < 35.0 {
        return sf(x).ln();
    }
    if x == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    // Mills-ratio asymptotic series; erfc underflows past x ~ 37.5.
    let r = 1.0 / (x * x);
    let series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
    ln_pdf(x) - x.ln() + series.ln()
}

/// `pdf(x) / sf(x)`.
pub fn hazard(x: f64) -> f64 {
    (ln_pdf(x) - ln_sf(x)).exp()
}

// Acklam's coefficients.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_671_669_751_636,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.02425;

fn acklam_lower(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p <= 0.5);
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Lower-tail quantile for `p` in `(0, 0.5]`; the lower tail is where `p`
/// carries full relative precision.
fn quantile_lower(p: f64) -> f64 {
    let mut x = acklam_lower(p);
    for _ in 0..3 {
        let e = cdf(x) - p;
        if e == 0.0 {
            break;
        }
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        let step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// `Φ⁻¹(p)`; `p = 0` and `p = 1` map to the infinities, anything else outside
/// `[0, 1]` to NaN.
pub fn quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p <= 0.5 {
        quantile_lower(p)
    } else {
        -quantile_lower(1.0 - p)
    }
}

/// The point `x` with `-ln(1 - Φ(x)) = h`, i.e. `Φ⁻¹(1 - e^{-h})`, computed
/// without forming `1 - e^{-h}` when that would cancel.
///
/// `h = 0` gives `-inf`; negative or NaN `h` gives NaN.
pub fn quantile_from_cumhaz(h: f64) -> f64 {
    if h.is_nan() || h < 0.0 {
        return f64::NAN;
    }
    if h == 0.0 {
        return f64::NEG_INFINITY;
    }
    if h == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut x = if h < std::f64::consts::LN_2 {
        quantile_lower(-(-h).exp_m1())
    } else {
        let s = (-h).exp();
        if s > 0.0 {
            -quantile_lower(s)
        } else {
            (2.0 * h).sqrt()
        }
    };
    // Newton on the cumulative hazard itself so that the inversion is tight
    // in the scale the callers compare on.
    for _ in 0..4 {
        let g = -ln_sf(x) - h;
        if g == 0.0 {
            break;
        }
        let step = g / hazard(x);
        if !step.is_finite() {
            break;
        }
        x -= step;
        if step.abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            break;
        }
    }
    x
}
