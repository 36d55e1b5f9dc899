//! Points of `(0, 1]` with 384 fractional bits, for dyadic ranks beyond `f64` resolution.
//!
//! A point `t` is stored as the integer `M = t 2^384 - 1`, so the index of the rank-`k`
//! interval `(i 2^-k, (i + 1) 2^-k]` containing `t` is the top `k` bits of `M`.

use rand::Rng;

use crate::error::{Error, Result};

pub const WORDS: usize = 6;
pub const BITS: u32 = 64 * WORDS as u32;
/// Deepest rank whose local coordinate still carries 64 bits.
pub const MAX_RANK: u32 = BITS - 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicPoint {
    m: [u64; WORDS],
}

fn add(a: &[u64; WORDS], b: &[u64; WORDS]) -> ([u64; WORDS], bool) {
    let mut out = [0u64; WORDS];
    let mut carry = false;
    for i in (0..WORDS).rev() {
        let (s1, c1) = a[i].overflowing_add(b[i]);
        let (s2, c2) = s1.overflowing_add(carry as u64);
        out[i] = s2;
        carry = c1 || c2;
    }
    (out, carry)
}

fn sub(a: &[u64; WORDS], b: &[u64; WORDS]) -> ([u64; WORDS], bool) {
    let mut out = [0u64; WORDS];
    let mut borrow = false;
    for i in (0..WORDS).rev() {
        let (s1, b1) = a[i].overflowing_sub(b[i]);
        let (s2, b2) = s1.overflowing_sub(borrow as u64);
        out[i] = s2;
        borrow = b1 || b2;
    }
    (out, borrow)
}

fn one() -> [u64; WORDS] {
    let mut v = [0u64; WORDS];
    v[WORDS - 1] = 1;
    v
}

impl DyadicPoint {
    /// Point from the raw integer `M = t 2^384 - 1`.
    pub fn from_raw(m: [u64; WORDS]) -> DyadicPoint {
        DyadicPoint { m }
    }

    pub fn raw(&self) -> [u64; WORDS] {
        self.m
    }

    /// Exact conversion of a float in `(0, 1]`.
    pub fn from_f64(t: f64) -> Result<DyadicPoint> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::domain(format!("point {t} lies outside (0, 1]")));
        }
        if t == 1.0 {
            return Ok(DyadicPoint { m: [u64::MAX; WORDS] });
        }
        let v = fixed_from_f64(t).ok_or_else(|| Error::domain(format!("{t} is below 2^-384")))?;
        let (m, _) = sub(&v, &one());
        Ok(DyadicPoint { m })
    }

    /// Uniform random point with all 384 bits drawn from `rng`.
    pub fn random<R: Rng>(rng: &mut R) -> DyadicPoint {
        let mut m = [0u64; WORDS];
        for w in &mut m {
            *w = rng.gen();
        }
        DyadicPoint { m }
    }

    /// Bit `n` of `M`, counted from the most significant.
    #[inline]
    pub fn bit(&self, n: u32) -> bool {
        let w = (n / 64) as usize;
        (self.m[w] >> (63 - n % 64)) & 1 == 1
    }

    /// The 64 bits of `M` starting at bit `k` (zero-padded past the end).
    #[inline]
    fn window(&self, k: u32) -> u64 {
        let w = (k / 64) as usize;
        let s = k % 64;
        let hi = self.m.get(w).copied().unwrap_or(0);
        if s == 0 {
            hi
        } else {
            let lo = self.m.get(w + 1).copied().unwrap_or(0);
            (hi << s) | (lo >> (64 - s))
        }
    }

    /// `t 2^k - i ∈ (0, 1]` at rank `k`, to 64 bits.
    #[inline]
    pub fn local(&self, k: u32) -> f64 {
        ((self.window(k) as u128 + 1) as f64) * 2f64.powi(-64)
    }

    /// Index at rank `k <= 64`.
    pub fn index(&self, k: u32) -> u64 {
        assert!(k <= 64, "index only available up to rank 64");
        if k == 0 {
            0
        } else {
            self.window(0) >> (64 - k)
        }
    }

    /// Nearest float to `t`.
    pub fn to_f64(&self) -> f64 {
        let mut v = 0.0;
        for (i, w) in self.m.iter().enumerate().take(2) {
            v += *w as f64 * 2f64.powi(-64 * (i as i32 + 1));
        }
        (v + 2f64.powi(-(BITS as i32))).min(1.0)
    }

    /// The point whose first `k` bits agree with `self` and whose local coordinate at rank
    /// `k` is `frac` (rounded to 64 bits), with `frac ∈ (0, 1]`.
    pub fn in_cell(&self, k: u32, frac: f64) -> DyadicPoint {
        assert!(k <= MAX_RANK, "rank {k} beyond the point resolution");
        let mut m = self.m;
        for (i, w) in m.iter_mut().enumerate() {
            let start = i as u32 * 64;
            if start >= k {
                *w = 0;
            } else if start + 64 > k {
                *w &= !(u64::MAX >> (k - start));
            }
        }
        // tail = F 2^{320-k} - 1 with F = frac 2^64 in [1, 2^64]
        let f = (frac * 2f64.powi(64)).round().clamp(1.0, 2f64.powi(64)) as u128;
        let mut v = [0u64; WORDS];
        for b in 0..65u32 {
            if (f >> b) & 1 == 1 {
                let n = (k + 63) as i64 - b as i64;
                if n >= 0 {
                    let n = n as u32;
                    v[(n / 64) as usize] |= 1u64 << (63 - n % 64);
                }
            }
        }
        let (m, _) = add(&m, &v);
        let (m, _) = sub(&m, &one());
        DyadicPoint { m }
    }

    /// Centre of the rank-`k` interval containing `self`.
    pub fn center(&self, k: u32) -> DyadicPoint {
        self.in_cell(k, 0.5)
    }

    /// Copy with bit `n` of `M` set to `b`.
    pub fn with_bit(&self, n: u32, b: bool) -> DyadicPoint {
        let mut m = self.m;
        let mask = 1u64 << (63 - n % 64);
        if b {
            m[(n / 64) as usize] |= mask;
        } else {
            m[(n / 64) as usize] &= !mask;
        }
        DyadicPoint { m }
    }

    /// `self - other` as a float, accurate to a relative `2^-52` of the difference.
    pub fn minus(&self, other: &DyadicPoint) -> f64 {
        let (big, small, sign) = if self.m >= other.m { (&self.m, &other.m, 1.0) } else { (&other.m, &self.m, -1.0) };
        let (d, _) = sub(big, small);
        let mut v = 0.0;
        for (i, w) in d.iter().enumerate() {
            if *w != 0 {
                v += *w as f64 * 2f64.powi(-64 * (i as i32 + 1));
            }
        }
        sign * v
    }

    /// `t + delta`, or `None` when it leaves `(0, 1]`.
    pub fn offset(&self, delta: f64) -> Option<DyadicPoint> {
        if delta == 0.0 {
            return Some(*self);
        }
        let mag = fixed_from_f64(delta.abs().min(2.0));
        let mag = match mag {
            Some(v) => v,
            None => return Some(*self),
        };
        let (m, flow) = if delta > 0.0 { add(&self.m, &mag) } else { sub(&self.m, &mag) };
        if flow || delta.abs() >= 1.0 {
            return None;
        }
        Some(DyadicPoint { m })
    }
}

/// `x 2^384` truncated to an integer, for `0 < x < 2`; `None` if it is zero.
fn fixed_from_f64(x: f64) -> Option<[u64; WORDS]> {
    if x >= 2.0 {
        return None;
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let (mant, e) = if exp == 0 {
        (bits & ((1 << 52) - 1), -1074i64)
    } else {
        ((bits & ((1 << 52) - 1)) | (1 << 52), exp - 1075)
    };
    // value = mant · 2^e ; integer = mant · 2^{e + 384}
    let shift = e + BITS as i64;
    let mut out = [0u64; WORDS];
    let mut any = false;
    for b in 0..53i64 {
        if (mant >> b) & 1 == 1 {
            let p = b + shift; // bit weight 2^p
            if (0..BITS as i64).contains(&p) {
                let n = BITS as i64 - 1 - p; // position from msb
                out[(n / 64) as usize] |= 1u64 << (63 - n % 64);
                any = true;
            } else if p >= BITS as i64 {
                return None;
            }
        }
    }
    any.then_some(out)
}
