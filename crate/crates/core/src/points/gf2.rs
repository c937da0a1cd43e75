//! Polynomials over GF(2) packed into `u64` (bit `k` is the coefficient of `x^k`).

use crate::numtheory::prime_factors;

pub fn degree(p: u64) -> Option<u32> {
    if p == 0 {
        None
    } else {
        Some(63 - p.leading_zeros())
    }
}

/// Carry-less product; caller guarantees the degree sum stays below 64.
pub fn mul(a: u64, b: u64) -> u64 {
    let mut acc = 0u64;
    let mut a = a;
    let mut b = b;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        a <<= 1;
        b >>= 1;
    }
    acc
}

pub fn rem(mut a: u64, p: u64) -> u64 {
    let dp = degree(p).expect("zero modulus");
    while let Some(da) = degree(a) {
        if da < dp {
            break;
        }
        a ^= p << (da - dp);
    }
    a
}

/// `a * b mod p` for `deg a, deg b < deg p <= 32`.
pub fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    let m = degree(p).expect("zero modulus");
    let top = 1u64 << m;
    let mut acc = 0u64;
    let mut a = a;
    let mut b = b;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a & top != 0 {
            a ^= p;
        }
    }
    acc
}

pub fn pow_mod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = rem(1, p);
    base = rem(base, p);
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let r = rem(a, b);
        a = b;
        b = r;
    }
    a
}

/// Rabin's irreducibility test.
pub fn is_irreducible(p: u64) -> bool {
    let m = match degree(p) {
        Some(0) | None => return false,
        Some(m) => m,
    };
    if m > 32 {
        return false;
    }
    let x = rem(0b10, p);
    // x^(2^k) mod p
    let frob = |k: u32| {
        let mut t = x;
        for _ in 0..k {
            t = mul_mod(t, t, p);
        }
        t
    };
    if frob(m) != x {
        return false;
    }
    prime_factors(m as u64)
        .into_iter()
        .all(|q| gcd(p, frob(m / q as u32) ^ x) == 1)
}

/// Lexicographically smallest irreducible polynomial of degree `m`.
pub fn first_irreducible(m: u32) -> Option<u64> {
    if m == 0 || m > 32 {
        return None;
    }
    let lo = 1u64 << m;
    (lo..lo << 1).find(|&p| is_irreducible(p))
}

/// A generator of the multiplicative group of GF(2)[x]/p (p irreducible).
pub fn primitive_element(p: u64) -> Option<u64> {
    let m = degree(p)?;
    let order = (1u64 << m) - 1;
    if order == 1 {
        return Some(1);
    }
    let factors = prime_factors(order);
    (2..1u64 << m).find(|&g| factors.iter().all(|&q| pow_mod(g, order / q, p) != 1))
}

/// First `count` coefficients `u_1, u_2, ...` of the Laurent expansion
/// `a(x)/p(x) = sum_l u_l x^{-l}`, returned as bits (index 0 is `u_1`).
pub fn laurent_digits(a: u64, p: u64, count: usize) -> Vec<u8> {
    let m = degree(p).expect("zero modulus");
    let top = 1u64 << m;
    let mut r = rem(a, p);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        r <<= 1;
        if r & top != 0 {
            out.push(1);
            r ^= p;
        } else {
            out.push(0);
        }
    }
    out
}

/// The first `m` Laurent digits of `a/p` packed as an integer `X` with
/// `a/p` truncated equal to `X / 2^m`.
pub fn truncated_value(a: u64, p: u64) -> u64 {
    let m = degree(p).expect("zero modulus");
    let top = 1u64 << m;
    let mut r = rem(a, p);
    let mut x = 0u64;
    for _ in 0..m {
        r <<= 1;
        x <<= 1;
        if r & top != 0 {
            x |= 1;
            r ^= p;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn irreducibles_small_degrees() {
        // x+1, x^2+x+1, x^3+x+1, x^4+x+1
        assert_eq!(first_irreducible(1), Some(0b10));
        assert_eq!(first_irreducible(2), Some(0b111));
        assert_eq!(first_irreducible(3), Some(0b1011));
        assert_eq!(first_irreducible(4), Some(0b10011));
        assert!(!is_irreducible(0b101)); // x^2+1 = (x+1)^2
        assert!(!is_irreducible(0b11111 ^ 0b1)); // divisible by x
        assert!(is_irreducible(0b11));
        assert!(!is_irreducible(0b1));
    }

    #[test]
    fn irreducible_count_matches_necklace_formula() {
        // number of irreducible polynomials over GF(2) of degree m
        let expected = [2u64, 1, 2, 3, 6, 9, 18, 30];
        for (i, &e) in expected.iter().enumerate() {
            let m = i as u32 + 1;
            let lo = 1u64 << m;
            let c = (lo..lo << 1).filter(|&p| is_irreducible(p)).count() as u64;
            assert_eq!(c, e, "degree {m}");
        }
    }

    #[test]
    fn laurent_hand_example() {
        // 1/(x^2+x+1) = x^-2 + x^-3 + x^-5 + x^-6 + ...
        assert_eq!(laurent_digits(1, 0b111, 6), vec![0, 1, 1, 0, 1, 1]);
        assert_eq!(truncated_value(1, 0b111), 0b01);
    }

    #[test]
    fn primitive_element_has_full_order() {
        for m in 1..=10 {
            let p = first_irreducible(m).unwrap();
            let g = primitive_element(p).unwrap();
            let order = (1u64 << m) - 1;
            let mut seen = std::collections::HashSet::new();
            let mut t = 1u64;
            for _ in 0..order {
                seen.insert(t);
                t = mul_mod(t, g, p);
            }
            assert_eq!(seen.len() as u64, order);
        }
    }
}
