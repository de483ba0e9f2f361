//! Small numerical helpers shared by the model and fit code.
//!
//! The measured-decay curve multiplies a huge exponential by a tiny
//! complementary error function, so everything here is phrased around the
//! *scaled* complementary error function `erfcx(x) = exp(x^2) erfc(x)`,
//! which stays O(1) where the naive product overflows.

/// sqrt(2)
pub const SQRT_2: f64 = std::f64::consts::SQRT_2;
/// sqrt(2 pi)
pub const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
/// 1 / sqrt(pi)
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Scaled complementary error function `exp(x^2) erfc(x)` for `x >= 0`.
///
/// For moderate arguments the direct product is exact enough and free of
/// overflow (`erfc` underflows only past x ~ 27, `exp(x^2)` overflows past
/// x ~ 26.6, and we switch well before either). Beyond that the asymptotic
/// series `1/(x sqrt(pi)) * sum (-1)^n (2n-1)!! / (2x^2)^n` converges to
/// double precision in a handful of terms.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0, "erfcx only needed on the non-negative half-line");
    if x < 25.0 {
        (x * x).exp() * libm::erfc(x)
    } else {
        let q = 0.5 / (x * x);
        let mut term = 1.0;
        let mut sum = 1.0;
        for n in 1..=6u32 {
            term *= -(2.0 * f64::from(n) - 1.0) * q;
            sum += term;
        }
        FRAC_1_SQRT_PI / x * sum
    }
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}
