//! Standard normal utilities: the CDF, the two-sided tail `G(t) = 2 - 2Φ(t)`,
//! its inverse, and the noncentral two-sided tail.
//!
//! Φ uses W. J. Cody's rational Chebyshev approximations ("Rational Chebyshev
//! approximations for the error function", Math. Comp. 23 (1969) 631-637,
//! as revised in ACM TOMS Algorithm 715, 1993). The three-range layout and
//! coefficients below are the ones from Algorithm 715's `ANORM`, which is also
//! what R's `pnorm` uses. Accuracy is close to machine precision over the whole
//! real line.

use crate::error::{Error, Result};

const SQRT_32: f64 = 5.656_854_249_492_380_195_206_754_896_838;
const ONE_OVER_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934;
/// |x| below this uses the central rational approximation.
const CENTRAL_CUTOFF: f64 = 0.674_489_75;

const A: [f64; 5] = [
    2.235_252_035_460_683_928_7,
    161.028_231_068_555_878_81,
    1_067.689_485_460_370_958_2,
    18_154.981_253_343_561_249,
    0.065_682_337_918_207_449_113,
];
const B: [f64; 4] = [
    47.202_581_904_688_241_87,
    976.098_551_737_776_693_22,
    10_260.932_208_618_978_205,
    45_507.789_335_026_729_956,
];
const C: [f64; 9] = [
    0.398_941_512_088_134_667_64,
    8.883_149_794_388_375_941_2,
    93.506_656_132_177_855_979,
    597.270_276_394_800_262_26,
    2_494.537_585_290_372_671_1,
    6_848.190_450_536_282_332_6,
    11_602.651_437_647_350_124,
    9_842.714_838_383_978_021_8,
    1.076_557_677_372_019_231_7e-8,
];
const D: [f64; 8] = [
    22.266_688_044_328_115_691,
    235.387_901_782_624_998_61,
    1_519.377_599_407_554_805,
    6_485.558_298_266_760_755,
    18_615.571_640_885_098_091,
    34_900.952_721_145_977_266,
    38_912.003_286_093_271_411,
    19_685.429_676_859_990_727,
];
const P: [f64; 6] = [
    0.215_898_534_057_956_99,
    0.127_401_161_160_247_363_9,
    0.022_235_277_870_649_807,
    0.001_421_619_193_227_893_466,
    2.911_287_495_116_879_2e-5,
    0.023_073_441_764_940_173_03,
];
const Q: [f64; 5] = [
    1.284_260_096_144_911_21,
    0.468_238_212_480_865_118,
    0.065_988_137_868_928_551_5,
    0.003_782_396_332_027_582_44,
    7.297_515_550_839_662_05e-5,
];

/// A value known to lie in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::Domain(format!("probability {value} outside [0, 1]")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// Rational approximation of Φ(x) - 1/2 for |x| ≤ 0.67448975.
fn central(x: f64) -> f64 {
    let xsq = if x.abs() > 1.11e-16 { x * x } else { 0.0 };
    let mut num = A[4] * xsq;
    let mut den = xsq;
    for i in 0..3 {
        num = (num + A[i]) * xsq;
        den = (den + B[i]) * xsq;
    }
    x * (num + A[3]) / (den + B[3])
}

/// exp(-x²/2) evaluated in two pieces to keep the leading bits exact.
fn gauss_kernel(y: f64) -> f64 {
    let xsq = (y * 16.0).trunc() / 16.0;
    let del = (y - xsq) * (y + xsq);
    (-xsq * xsq * 0.5).exp() * (-del * 0.5).exp()
}

/// Upper tail Q(y) = 1 - Φ(y) for y > 0.67448975.
fn upper_tail_positive(y: f64) -> f64 {
    if y <= SQRT_32 {
        let mut num = C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + C[i]) * y;
            den = (den + D[i]) * y;
        }
        let ratio = (num + C[7]) / (den + D[7]);
        gauss_kernel(y) * ratio
    } else {
        gauss_kernel(y) * asymptotic_ratio(y) / y
    }
}

/// The bracketed factor of the asymptotic expansion: Q(y) = φ(y)/y · (1/√2π - r(y)).
fn asymptotic_ratio(y: f64) -> f64 {
    let xsq = 1.0 / (y * y);
    let mut num = P[5] * xsq;
    let mut den = xsq;
    for i in 0..4 {
        num = (num + P[i]) * xsq;
        den = (den + Q[i]) * xsq;
    }
    let r = xsq * (num + P[4]) / (den + Q[4]);
    ONE_OVER_SQRT_2PI - r
}

/// ln Q(y) for large positive y, computed without forming exp(-y²/2).
fn log_upper_tail(y: f64) -> f64 {
    if y <= SQRT_32 {
        return upper_tail_positive(y).ln();
    }
    -0.5 * y * y - y.ln() + asymptotic_ratio(y).ln()
}

/// Q(x) = 1 - Φ(x) = Φ(-x), accurate in both tails.
pub(crate) fn upper_tail(x: f64) -> f64 {
    if x.abs() <= CENTRAL_CUTOFF {
        0.5 - central(x)
    } else if x > 0.0 {
        upper_tail_positive(x)
    } else {
        1.0 - upper_tail_positive(-x)
    }
}

fn check_finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be finite, got {x}")))
    }
}

/// Standard normal CDF Φ(x).
pub fn normal_cdf(x: f64) -> Result<Probability> {
    check_finite(x, "normal_cdf argument")?;
    Ok(Probability(upper_tail(-x)))
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    ONE_OVER_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Two-sided tail G(t) = 2 - 2Φ(t) = P(|Z| ≥ t) for t ≥ 0.
///
/// Beyond t = 8 the tail is assembled from its logarithm so that values stay
/// representable until the f64 subnormal range (t ≈ 38).
pub fn gauss_two_sided_tail(t: f64) -> Result<Probability> {
    check_finite(t, "tail argument")?;
    if t < 0.0 {
        return Err(Error::Domain(format!("two-sided tail needs t >= 0, got {t}")));
    }
    Ok(Probability(two_sided_tail_unchecked(t)))
}

#[inline]
pub(crate) fn two_sided_tail_unchecked(t: f64) -> f64 {
    if t > 8.0 {
        (std::f64::consts::LN_2 + log_upper_tail(t)).exp()
    } else {
        (2.0 * upper_tail(t)).min(1.0)
    }
}

/// Inverse of [`gauss_two_sided_tail`]: the t ≥ 0 with G(t) = q.
///
/// Solved by safeguarded Newton iteration on G itself, so that
/// `G(G⁻¹(q)) = q` holds to the accuracy of G.
pub fn gauss_tail_inverse(q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain(format!("tail inverse needs q in (0, 1], got {q}")));
    }
    if q == 1.0 {
        return Ok(0.0);
    }
    // G is strictly decreasing; keep a bracket [lo, hi] with G(lo) > q ≥ G(hi).
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while two_sided_tail_unchecked(hi) > q {
        lo = hi;
        hi *= 2.0;
        if hi > 64.0 {
            // q below the smallest representable tail; the root sits at the far end.
            return Ok(hi);
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let g = two_sided_tail_unchecked(t);
        let resid = g - q;
        if resid > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if resid == 0.0 || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        // Newton step on log G is better conditioned in the far tail.
        let slope = -2.0 * normal_pdf(t);
        let mut next = t - resid / slope;
        if g > 0.0 && t > 1.0 {
            let dlog = slope / g;
            next = t - (g.ln() - q.ln()) / dlog;
        }
        let next = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if (next - t).abs() <= 2.0 * f64::EPSILON * t {
            t = next;
            break;
        }
        t = next;
    }
    Ok(t)
}

/// P(|N(0,1) + mu| ≥ alpha) = [1 - Φ(alpha - mu)] + [1 - Φ(alpha + mu)].
pub fn noncentral_two_sided_tail(alpha: f64, mu: f64) -> Result<Probability> {
    check_finite(alpha, "alpha")?;
    check_finite(mu, "mu")?;
    if alpha < 0.0 {
        return Err(Error::Domain(format!("alpha must be >= 0, got {alpha}")));
    }
    if mu == 0.0 {
        return Ok(Probability(two_sided_tail_unchecked(alpha)));
    }
    let v = upper_tail(alpha - mu) + upper_tail(alpha + mu);
    Ok(Probability(v.clamp(0.0, 1.0)))
}
