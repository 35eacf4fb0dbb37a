//! Degree-1 Shamir sharing over a prime field.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_PRIME: u64 = 2_147_483_647;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SharingError {
    #[error("{0} is not a prime below 2^32")]
    NotPrime(u64),
    #[error("value {value} is not reduced modulo {p}")]
    Unreduced { value: u64, p: u64 },
    #[error("evaluation point 0 would reveal the secret")]
    ZeroPoint,
    #[error("evaluation point {0} is used twice")]
    DuplicatePoint(u64),
}

/// Arithmetic modulo a prime `p < 2^32`, so products fit in a `u64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimeField {
    p: u64,
}

impl PrimeField {
    pub fn new(p: u64) -> Result<Self, SharingError> {
        if p >= 1 << 32 || !is_prime(p) {
            return Err(SharingError::NotPrime(p));
        }
        Ok(PrimeField { p })
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    pub fn contains(&self, v: u64) -> bool {
        v < self.p
    }

    pub fn reduce(&self, v: u64) -> u64 {
        v % self.p
    }

    pub fn add(&self, a: u64, b: u64) -> u64 {
        (a + b) % self.p
    }

    pub fn sub(&self, a: u64, b: u64) -> u64 {
        (a + self.p - b) % self.p
    }

    pub fn mul(&self, a: u64, b: u64) -> u64 {
        (a * b) % self.p
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1;
        base %= self.p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse of a nonzero element.
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(a % self.p != 0);
        self.pow(a, self.p - 2)
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(0..self.p)
    }

    fn check(&self, v: u64) -> Result<u64, SharingError> {
        if v < self.p {
            Ok(v)
        } else {
            Err(SharingError::Unreduced { value: v, p: self.p })
        }
    }
}

impl Default for PrimeField {
    fn default() -> Self {
        PrimeField { p: DEFAULT_PRIME }
    }
}

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// `q(x) = secret + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinePoly {
    pub secret: u64,
    pub slope: u64,
}

impl LinePoly {
    pub fn eval(&self, field: &PrimeField, x: u64) -> u64 {
        field.add(self.secret, field.mul(self.slope, field.reduce(x)))
    }

    pub fn share_at(&self, field: &PrimeField, x: u64) -> Share {
        Share {
            x,
            y: self.eval(field, x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Share {
    pub x: u64,
    pub y: u64,
}

/// Draws a random slope and evaluates the line at each point.
pub fn make_shares<R: Rng + ?Sized>(
    field: &PrimeField,
    secret: u64,
    rng: &mut R,
    points: &[u64],
) -> Result<(LinePoly, Vec<Share>), SharingError> {
    field.check(secret)?;
    let mut seen = std::collections::BTreeSet::new();
    for &x in points {
        if field.reduce(x) == 0 {
            return Err(SharingError::ZeroPoint);
        }
        if !seen.insert(field.reduce(x)) {
            return Err(SharingError::DuplicatePoint(x));
        }
    }
    let poly = LinePoly {
        secret,
        slope: field.random(rng),
    };
    Ok((poly, points.iter().map(|&x| poly.share_at(field, x)).collect()))
}

/// Interpolates the line through two shares at 0.
pub fn reconstruct(field: &PrimeField, a: Share, b: Share) -> Result<u64, SharingError> {
    let (xa, xb) = (field.reduce(a.x), field.reduce(b.x));
    if xa == xb {
        return Err(SharingError::DuplicatePoint(a.x));
    }
    let ya = field.check(a.y)?;
    let yb = field.check(b.y)?;
    // q(0) = (ya*xb - yb*xa) / (xb - xa)
    let num = field.sub(field.mul(ya, xb), field.mul(yb, xa));
    Ok(field.mul(num, field.inv(field.sub(xb, xa))))
}

/// Whether all shares lie on one line. Fewer than three distinct points are
/// trivially collinear; two shares at the same point must agree.
pub fn check_collinear(field: &PrimeField, shares: &[Share]) -> bool {
    let mut iter = shares.iter();
    let Some(&first) = iter.next() else {
        return true;
    };
    let mut second = None;
    for &s in iter {
        if field.reduce(s.x) == field.reduce(first.x) {
            if field.reduce(s.y) != field.reduce(first.y) {
                return false;
            }
            continue;
        }
        match second {
            None => second = Some(s),
            Some(b) => {
                let dx = field.sub(b.x % field.p, first.x % field.p);
                let slope = field.mul(field.sub(b.y, first.y), field.inv(dx));
                let expected = field.add(
                    first.y,
                    field.mul(slope, field.sub(s.x % field.p, first.x % field.p)),
                );
                if expected != field.reduce(s.y) {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn f13() -> PrimeField {
        PrimeField::new(13).unwrap()
    }

    #[test]
    fn shares_of_five_with_slope_three() {
        let poly = LinePoly { secret: 5, slope: 3 };
        let shares: Vec<_> = [1, 2, 3].iter().map(|&x| poly.share_at(&f13(), x)).collect();
        assert_eq!(
            shares,
            vec![Share { x: 1, y: 8 }, Share { x: 2, y: 11 }, Share { x: 3, y: 1 }]
        );
    }

    #[test]
    fn reconstruct_from_two_points() {
        let s = reconstruct(&f13(), Share { x: 1, y: 8 }, Share { x: 2, y: 11 }).unwrap();
        assert_eq!(s, 5);
    }

    #[test]
    fn collinearity() {
        let line = [Share { x: 1, y: 8 }, Share { x: 2, y: 11 }, Share { x: 3, y: 1 }];
        assert!(check_collinear(&f13(), &line));
        let bent = [Share { x: 1, y: 8 }, Share { x: 2, y: 11 }, Share { x: 3, y: 2 }];
        assert!(!check_collinear(&f13(), &bent));
        assert!(check_collinear(&f13(), &line[..2]));
        assert!(!check_collinear(&f13(), &[Share { x: 1, y: 8 }, Share { x: 1, y: 9 }]));
    }

    #[test]
    fn make_shares_round_trips() {
        let field = f13();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (poly, shares) = make_shares(&field, 9, &mut rng, &[1, 2, 3, 4]).unwrap();
        assert_eq!(poly.secret, 9);
        for a in &shares {
            for b in &shares {
                if a.x != b.x {
                    assert_eq!(reconstruct(&field, *a, *b).unwrap(), 9);
                }
            }
        }
    }

    #[test]
    fn make_shares_rejects_bad_input() {
        let field = f13();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            make_shares(&field, 13, &mut rng, &[1]).unwrap_err(),
            SharingError::Unreduced { value: 13, p: 13 }
        );
        assert_eq!(make_shares(&field, 1, &mut rng, &[0]).unwrap_err(), SharingError::ZeroPoint);
        assert_eq!(
            make_shares(&field, 1, &mut rng, &[2, 15]).unwrap_err(),
            SharingError::DuplicatePoint(15)
        );
    }

    #[test]
    fn field_rejects_composites() {
        assert!(PrimeField::new(15).is_err());
        assert!(PrimeField::new(1).is_err());
        assert!(PrimeField::new(DEFAULT_PRIME).is_ok());
    }

    #[test]
    fn inverse_times_value_is_one() {
        let field = PrimeField::default();
        for a in [1, 2, 12345, DEFAULT_PRIME - 1] {
            assert_eq!(field.mul(a, field.inv(a)), 1);
        }
    }
}
