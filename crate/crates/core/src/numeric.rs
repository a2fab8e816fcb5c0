//! Weight arithmetic behind the engine's two numeric modes.
//!
//! Every quantity the engine manipulates (vertex activities, edge couplings,
//! partition sums, filter probabilities) is a nonnegative weight. `Float64`
//! is the fast default; `ExactRational` does the same arithmetic over
//! arbitrary-precision rationals so that marginals, filter probabilities and
//! block draws are exact, which is what makes the "perfect" guarantee literal
//! rather than up-to-rounding.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;

use crate::error::{Error, Result};

/// Which arithmetic a run uses. Selecting a mode selects the [`Weight`]
/// implementation; the algorithms are identical.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NumericMode {
    Float64,
    ExactRational,
}

impl std::str::FromStr for NumericMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f64" | "float64" => Ok(NumericMode::Float64),
            "rational" | "exact" => Ok(NumericMode::ExactRational),
            other => Err(Error::Parse(format!("unknown numeric mode '{other}'"))),
        }
    }
}

/// Nonnegative weight arithmetic plus the two randomized primitives the
/// sampler needs: a cumulative-inversion draw over an enumerated outcome
/// list and a Bernoulli draw.
///
/// Both primitives consume the generator exactly once per call regardless of
/// the probability involved, so a fixed seed yields a fixed draw sequence.
pub trait Weight:
    Clone + PartialEq + PartialOrd + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    const MODE: NumericMode;

    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    /// True for finite, nonnegative values; weights must satisfy this.
    fn is_valid_weight(&self) -> bool;

    fn add_assign(&mut self, rhs: &Self);
    fn mul_assign(&mut self, rhs: &Self);
    fn mul(&self, rhs: &Self) -> Self {
        let mut out = self.clone();
        out.mul_assign(rhs);
        out
    }
    /// Division; callers guarantee `rhs` is nonzero.
    fn div(&self, rhs: &Self) -> Self;

    fn from_ratio(num: u64, den: u64) -> Self;
    /// Convert a weight given as a JSON number. Exact in both modes: every
    /// finite f64 is a dyadic rational.
    fn from_json_number(x: f64) -> Result<Self>;
    /// Convert a weight given as a decimal string such as `"0.2"` or
    /// `"1.5e-3"`. Exact in rational mode, rounded in float mode.
    fn from_decimal_str(s: &str) -> Result<Self>;
    fn to_f64(&self) -> f64;

    /// Cumulative-inversion draw: returns the index of one outcome, where
    /// outcome `i` has probability `weights[i] / total`. `total` must equal
    /// the sum of `weights` and be positive. Entries of zero weight are
    /// never returned.
    fn sample_index<R: Rng + ?Sized>(weights: &[Self], total: &Self, rng: &mut R) -> usize;

    /// Bernoulli draw with success probability `min(p, 1)`.
    fn bernoulli<R: Rng + ?Sized>(p: &Self, rng: &mut R) -> bool;
}

impl Weight for f64 {
    const MODE: NumericMode = NumericMode::Float64;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn is_valid_weight(&self) -> bool {
        self.is_finite() && *self >= 0.0
    }

    fn add_assign(&mut self, rhs: &Self) {
        *self += rhs;
    }
    fn mul_assign(&mut self, rhs: &Self) {
        *self *= rhs;
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }

    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }
    fn from_json_number(x: f64) -> Result<Self> {
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::InvalidWeight(format!("non-finite value {x}")))
        }
    }
    fn from_decimal_str(s: &str) -> Result<Self> {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::InvalidWeight(format!("'{s}': {e}")))
            .and_then(Self::from_json_number)
    }
    fn to_f64(&self) -> f64 {
        *self
    }

    fn sample_index<R: Rng + ?Sized>(weights: &[Self], total: &Self, rng: &mut R) -> usize {
        debug_assert!(*total > 0.0);
        let target = rng.random::<f64>() * total;
        let mut cum = 0.0;
        let mut last_positive = usize::MAX;
        for (i, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                cum += w;
                last_positive = i;
                if target < cum {
                    return i;
                }
            }
        }
        // Rounding can leave `target` at or past the final cumulative sum.
        debug_assert!(last_positive != usize::MAX);
        last_positive
    }

    fn bernoulli<R: Rng + ?Sized>(p: &Self, rng: &mut R) -> bool {
        rng.random::<f64>() < *p
    }
}

impl Weight for BigRational {
    const MODE: NumericMode = NumericMode::ExactRational;

    fn zero() -> Self {
        <BigRational as Zero>::zero()
    }
    fn one() -> Self {
        <BigRational as One>::one()
    }
    fn is_zero(&self) -> bool {
        <BigRational as Zero>::is_zero(self)
    }
    fn is_valid_weight(&self) -> bool {
        !self.is_negative()
    }

    fn add_assign(&mut self, rhs: &Self) {
        *self += rhs;
    }
    fn mul_assign(&mut self, rhs: &Self) {
        *self *= rhs;
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }

    fn from_ratio(num: u64, den: u64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn from_json_number(x: f64) -> Result<Self> {
        BigRational::from_float(x)
            .ok_or_else(|| Error::InvalidWeight(format!("non-finite value {x}")))
    }
    fn from_decimal_str(s: &str) -> Result<Self> {
        parse_decimal_rational(s)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn sample_index<R: Rng + ?Sized>(weights: &[Self], total: &Self, rng: &mut R) -> usize {
        debug_assert!(total.is_positive());
        // Rescale to a common denominator so the draw is over integers.
        let mut denom = BigInt::one();
        for w in weights {
            if !Weight::is_zero(w) {
                denom = denom.lcm(w.denom());
            }
        }
        let scaled: Vec<BigUint> = weights
            .iter()
            .map(|w| {
                if Weight::is_zero(w) {
                    BigUint::zero()
                } else {
                    (w.numer() * (&denom / w.denom()))
                        .to_biguint()
                        .expect("weights are nonnegative")
                }
            })
            .collect();
        let sum: BigUint = scaled.iter().sum();
        debug_assert!(!sum.is_zero());
        let draw = uniform_biguint_below(&sum, rng);
        let mut cum = BigUint::zero();
        let mut last_positive = usize::MAX;
        for (i, w) in scaled.iter().enumerate() {
            if !w.is_zero() {
                cum += w;
                last_positive = i;
                if draw < cum {
                    return i;
                }
            }
        }
        last_positive
    }

    fn bernoulli<R: Rng + ?Sized>(p: &Self, rng: &mut R) -> bool {
        let p = if p > &Weight::one() {
            Weight::one()
        } else if p.is_negative() {
            Weight::zero()
        } else {
            p.clone()
        };
        let den = p.denom().to_biguint().expect("normalized denominator");
        let num = p.numer().to_biguint().expect("nonnegative numerator");
        let draw = uniform_biguint_below(&den, rng);
        draw < num
    }
}

/// Uniform draw from `{0, 1, ..., bound - 1}` by rejection on the top bits.
/// `bound` must be positive.
pub fn uniform_biguint_below<R: Rng + ?Sized>(bound: &BigUint, rng: &mut R) -> BigUint {
    debug_assert!(!bound.is_zero());
    if bound == &BigUint::one() {
        // Still consume randomness so draw counts stay schedule-independent.
        let _ = rng.random::<u8>();
        return BigUint::zero();
    }
    let bits = bound.bits();
    let nbytes = bits.div_ceil(8) as usize;
    let excess = (nbytes as u64 * 8 - bits) as u32;
    let mask: u8 = 0xffu8 >> excess;
    let mut buf = vec![0u8; nbytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= mask;
        let candidate = BigUint::from_bytes_be(&buf);
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Parse a decimal literal (optional sign, optional fractional part,
/// optional base-ten exponent) into an exact rational.
fn parse_decimal_rational(s: &str) -> Result<BigRational> {
    let t = s.trim();
    let err = |msg: &str| Error::InvalidWeight(format!("'{s}': {msg}"));
    if t.is_empty() {
        return Err(err("empty string"));
    }
    let (mantissa, exp_part) = match t.find(['e', 'E']) {
        Some(pos) => (&t[..pos], Some(&t[pos + 1..])),
        None => (t, None),
    };
    let exponent: i64 = match exp_part {
        Some(e) => e.parse().map_err(|_| err("bad exponent"))?,
        None => 0,
    };
    let (sign, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.find('.') {
        Some(pos) => (&digits[..pos], &digits[pos + 1..]),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err("no digits"));
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return Err(err("invalid digit"));
    }
    let whole: BigInt = format!("{int_part}{frac_part}")
        .parse()
        .map_err(|_| err("invalid digits"))?;
    let shift = exponent - frac_part.len() as i64;
    let ten = BigInt::from(10);
    let value = if shift >= 0 {
        BigRational::from_integer(whole * ten.pow(shift as u32))
    } else {
        BigRational::new(whole, ten.pow((-shift) as u32))
    };
    Ok(value * BigRational::from_integer(BigInt::from(sign)))
}

/// Limit on the number of states any single enumeration may visit.
///
/// Conditioning splits the free region into independent pieces, so the
/// relevant count is per enumerated piece, not per instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumerationCap(pub u64);

impl Default for EnumerationCap {
    fn default() -> Self {
        EnumerationCap(1 << 24)
    }
}

impl EnumerationCap {
    /// Check that `base^exponent <= cap` and return the product.
    pub fn check_power(&self, base: usize, exponent: usize) -> Result<u64> {
        let mut states: u64 = 1;
        for _ in 0..exponent {
            states = states
                .checked_mul(base as u64)
                .filter(|s| *s <= self.0)
                .ok_or(Error::EnumerationCapExceeded {
                    base,
                    exponent,
                    cap: self.0,
                })?;
        }
        Ok(states)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn decimal_parsing_is_exact() {
        let half = <BigRational as Weight>::from_decimal_str("0.5").unwrap();
        assert_eq!(half, BigRational::new(1.into(), 2.into()));
        let x = <BigRational as Weight>::from_decimal_str("1.5e-3").unwrap();
        assert_eq!(x, BigRational::new(3.into(), 2000.into()));
        let y = <BigRational as Weight>::from_decimal_str("-2.25").unwrap();
        assert_eq!(y, BigRational::new((-9).into(), 4.into()));
        let z = <BigRational as Weight>::from_decimal_str("12E+1").unwrap();
        assert_eq!(z, BigRational::from_integer(120.into()));
        assert!(<BigRational as Weight>::from_decimal_str("ten").is_err());
        assert!(<BigRational as Weight>::from_decimal_str("").is_err());
        assert!(<BigRational as Weight>::from_decimal_str("1.2.3").is_err());
    }

    #[test]
    fn json_numbers_convert_exactly_in_rational_mode() {
        let x = <BigRational as Weight>::from_json_number(0.25).unwrap();
        assert_eq!(x, BigRational::new(1.into(), 4.into()));
        assert!(<BigRational as Weight>::from_json_number(f64::INFINITY).is_err());
    }

    #[test]
    fn cap_check_power() {
        let cap = EnumerationCap(1000);
        assert_eq!(cap.check_power(3, 6).unwrap(), 729);
        assert!(matches!(
            cap.check_power(3, 7),
            Err(Error::EnumerationCapExceeded { base: 3, exponent: 7, cap: 1000 })
        ));
        // Would overflow u64 without the early exit.
        assert!(cap.check_power(10, 30).is_err());
        assert_eq!(EnumerationCap::default().0, 1 << 24);
    }

    #[test]
    fn uniform_below_is_in_range_and_roughly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let bound = BigUint::from(10u32);
        let mut counts = [0u32; 10];
        for _ in 0..10_000 {
            let k = uniform_biguint_below(&bound, &mut rng);
            counts[k.to_usize().unwrap()] += 1;
        }
        for c in counts {
            assert!((800..1200).contains(&c), "count {c} far from uniform");
        }
    }

    #[test]
    fn rational_sample_index_matches_exact_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = vec![
            BigRational::new(1.into(), 2.into()),
            <BigRational as Weight>::zero(),
            BigRational::new(1.into(), 4.into()),
            BigRational::new(3.into(), 4.into()),
        ];
        let total = BigRational::new(3.into(), 2.into());
        let mut counts = [0u32; 4];
        for _ in 0..9_000 {
            counts[<BigRational as Weight>::sample_index(&w, &total, &mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        // Expected proportions 1/3, 0, 1/6, 1/2.
        assert!((counts[0] as f64 - 3000.0).abs() < 300.0);
        assert!((counts[2] as f64 - 1500.0).abs() < 250.0);
        assert!((counts[3] as f64 - 4500.0).abs() < 350.0);
    }

    #[test]
    fn float_sample_index_skips_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = vec![0.0, 2.0, 0.0, 1.0];
        for _ in 0..1000 {
            let i = <f64 as Weight>::sample_index(&w, &3.0, &mut rng);
            assert!(i == 1 || i == 3);
        }
    }

    #[test]
    fn bernoulli_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            assert!(<f64 as Weight>::bernoulli(&1.0, &mut rng));
            assert!(!<f64 as Weight>::bernoulli(&0.0, &mut rng));
            assert!(<BigRational as Weight>::bernoulli(
                &<BigRational as Weight>::one(),
                &mut rng
            ));
            assert!(!<BigRational as Weight>::bernoulli(
                &<BigRational as Weight>::zero(),
                &mut rng
            ));
        }
    }

    #[test]
    fn from_ratio_agrees_across_modes() {
        let f = <f64 as Weight>::from_ratio(19, 20);
        let r = <BigRational as Weight>::from_ratio(19, 20);
        assert!((f - Weight::to_f64(&r)).abs() < 1e-15);
    }
}
