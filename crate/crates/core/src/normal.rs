//! Standard normal distribution function and quantiles.

use core::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal quantile function.
///
/// Acklam's rational approximation, polished with one Halley step against
/// `erfc`; the result is accurate to a few ulps over the open unit interval.
/// Returns NaN outside (0, 1) and ±∞ at the endpoints.
pub fn quantile(q: f64) -> f64 {
    if q.is_nan() || !(0.0..=1.0).contains(&q) {
        return f64::NAN;
    }
    if q == 0.0 {
        return f64::NEG_INFINITY;
    }
    if q == 1.0 {
        return f64::INFINITY;
    }
    // Work on the smaller tail so 1 - q does not lose precision.
    if q > 0.5 {
        return -lower_quantile(1.0 - q);
    }
    lower_quantile(q)
}

/// Critical value `z_{1-alpha}`, i.e. the upper-`alpha` quantile.
pub fn upper_critical(alpha: f64) -> f64 {
    -quantile(alpha)
}

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
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

// q in (0, 0.5]
fn lower_quantile(q: f64) -> f64 {
    const Q_LOW: f64 = 0.024_25;
    let x = if q < Q_LOW {
        let r = libm::sqrt(-2.0 * libm::log(q));
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    } else {
        let s = q - 0.5;
        let r = s * s;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * s
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // Halley refinement.
    let e = cdf(x) - q;
    let u = e * libm::sqrt(2.0 * core::f64::consts::PI) * libm::exp(0.5 * x * x);
    x - u / (1.0 + 0.5 * x * u)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from scipy.stats.norm.ppf.
    const REFERENCE: [(f64, f64); 8] = [
        (0.5, 0.0),
        (0.95, 1.644_853_626_951_472_2),
        (0.975, 1.959_963_984_540_054),
        (0.99, 2.326_347_874_040_840_8),
        (1.0 - 0.05 / 3.0, 2.128_045_234_184_983),
        (0.001, -3.090_232_306_167_813_6),
        (1e-10, -6.361_340_902_404_056),
        (0.3, -0.524_400_512_708_040_9),
    ];

    #[test]
    fn quantile_matches_reference() {
        for (q, z) in REFERENCE {
            let got = quantile(q);
            assert!((got - z).abs() < 1e-9, "q={q}: {got} vs {z}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let mut q = 1e-6;
        while q < 1.0 {
            let back = cdf(quantile(q));
            assert!((back - q).abs() <= 1e-12 * q.max(1e-3), "q={q}");
            q += 0.0137;
        }
    }

    #[test]
    fn endpoints_and_nan() {
        assert_eq!(quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(quantile(1.0), f64::INFINITY);
        assert!(quantile(-0.1).is_nan());
        assert!(quantile(f64::NAN).is_nan());
        assert_eq!(upper_critical(0.5), 0.0);
    }
}
