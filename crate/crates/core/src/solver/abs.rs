//! Known-bits plus signed-interval abstraction of 32-bit values.

use crate::isa::{ArithOp, CmpOp};

/// `bits & !known == 0`, `lo <= hi`, and every concrete value described
/// lies in `[lo, hi]` and agrees with `bits` on `known`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) struct Abs {
    pub known: u32,
    pub bits: u32,
    pub lo: i32,
    pub hi: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Tri {
    True,
    False,
    Unknown,
}

impl Tri {
    pub fn not(self) -> Tri {
        match self {
            Tri::True => Tri::False,
            Tri::False => Tri::True,
            Tri::Unknown => Tri::Unknown,
        }
    }

    pub fn from_bool(b: bool) -> Tri {
        if b {
            Tri::True
        } else {
            Tri::False
        }
    }
}

/// Bits shared by every value in `[lo, hi]`.
fn range_prefix(lo: i32, hi: i32) -> (u32, u32) {
    if (lo < 0) != (hi < 0) {
        return (0, 0);
    }
    let x = (lo as u32) ^ (hi as u32);
    let mask = if x == 0 {
        u32::MAX
    } else {
        let free = 32 - x.leading_zeros();
        !(((1u64 << free) - 1) as u32)
    };
    (mask, (lo as u32) & mask)
}

fn bits_range(known: u32, bits: u32) -> (i32, i32) {
    const SIGN: u32 = 1 << 31;
    let unknown = !known;
    if unknown & SIGN != 0 {
        let lo = (bits | SIGN) as i32;
        let hi = ((bits | unknown) & !SIGN) as i32;
        (lo, hi)
    } else {
        (bits as i32, (bits | unknown) as i32)
    }
}

impl Abs {
    pub fn top() -> Abs {
        Abs {
            known: 0,
            bits: 0,
            lo: i32::MIN,
            hi: i32::MAX,
        }
    }

    pub fn constant(c: i32) -> Abs {
        Abs {
            known: u32::MAX,
            bits: c as u32,
            lo: c,
            hi: c,
        }
    }

    pub fn range(lo: i32, hi: i32) -> Option<Abs> {
        Abs::make(0, 0, lo, hi)
    }

    /// Reduced product of a bit pattern and an interval, `None` when empty.
    pub fn make(known: u32, bits: u32, lo: i32, hi: i32) -> Option<Abs> {
        let bits = bits & known;
        let (blo, bhi) = bits_range(known, bits);
        let lo = lo.max(blo);
        let hi = hi.min(bhi);
        if lo > hi {
            return None;
        }
        let (pk, pb) = range_prefix(lo, hi);
        if (pb ^ bits) & pk & known != 0 {
            return None;
        }
        let known = known | pk;
        let bits = bits | pb;
        let (blo, bhi) = bits_range(known, bits);
        let lo = lo.max(blo);
        let hi = hi.min(bhi);
        if lo > hi {
            return None;
        }
        Some(Abs { known, bits, lo, hi })
    }

    pub fn as_const(&self) -> Option<i32> {
        if self.lo == self.hi {
            Some(self.lo)
        } else if self.known == u32::MAX {
            Some(self.bits as i32)
        } else {
            None
        }
    }

    fn from_bits(known: u32, bits: u32) -> Abs {
        Abs::make(known, bits, i32::MIN, i32::MAX).unwrap_or_else(Abs::top)
    }

    fn with_range(self, lo: i64, hi: i64) -> Abs {
        if lo < i32::MIN as i64 || hi > i32::MAX as i64 {
            return self;
        }
        Abs::make(self.known, self.bits, lo as i32, hi as i32).unwrap_or(self)
    }

    pub fn arith(op: ArithOp, a: Abs, b: Abs) -> Abs {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return Abs::constant(op.apply(x, y));
        }
        let (am, bm) = (!a.known, !b.known);
        let (av, bv) = (a.bits, b.bits);
        let (alo, ahi, blo, bhi) = (a.lo as i64, a.hi as i64, b.lo as i64, b.hi as i64);
        match op {
            ArithOp::Add => {
                let sm = am.wrapping_add(bm);
                let sv = av.wrapping_add(bv);
                let chi = sm.wrapping_add(sv) ^ sv;
                let mu = chi | am | bm;
                Abs::from_bits(!mu, sv & !mu).with_range(alo + blo, ahi + bhi)
            }
            ArithOp::Sub => {
                let dv = av.wrapping_sub(bv);
                let alpha = dv.wrapping_add(am);
                let beta = dv.wrapping_sub(bm);
                let mu = (alpha ^ beta) | am | bm;
                Abs::from_bits(!mu, dv & !mu).with_range(alo - bhi, ahi - blo)
            }
            ArithOp::And => {
                let v = av & bv;
                let m = (av | am) & (bv | bm) & !v;
                let r = Abs::from_bits(!m, v);
                if a.lo >= 0 || b.lo >= 0 {
                    let cap = if a.lo >= 0 && b.lo >= 0 {
                        ahi.min(bhi)
                    } else if a.lo >= 0 {
                        ahi
                    } else {
                        bhi
                    };
                    r.with_range(0, cap)
                } else {
                    r
                }
            }
            ArithOp::Or => {
                let v = av | bv;
                let m = (am | bm) & !v;
                Abs::from_bits(!m, v)
            }
            ArithOp::Xor => {
                let m = am | bm;
                Abs::from_bits(!m, (av ^ bv) & !m)
            }
            ArithOp::Shl => match b.as_const() {
                Some(k) => {
                    let k = (k & 31) as u32;
                    let known = (a.known << k) | ((1u32 << k).wrapping_sub(1));
                    Abs::from_bits(known, a.bits << k)
                }
                None => Abs::top(),
            },
            ArithOp::Shr => match b.as_const() {
                Some(k) => {
                    let k = (k & 31) as u32;
                    let m = ((am as i32) >> k) as u32;
                    let v = ((av as i32) >> k) as u32 & !m;
                    Abs::from_bits(!m, v).with_range(alo >> k, ahi >> k)
                }
                None => Abs::top(),
            },
            ArithOp::Mul => {
                let ps = [alo * blo, alo * bhi, ahi * blo, ahi * bhi];
                let lo = *ps.iter().min().unwrap();
                let hi = *ps.iter().max().unwrap();
                Abs::top().with_range(lo, hi)
            }
            ArithOp::Div => match b.as_const() {
                Some(c) if c > 0 => {
                    let c = c as i64;
                    Abs::top().with_range(alo / c, ahi / c)
                }
                _ => Abs::top(),
            },
            ArithOp::Mod => match b.as_const() {
                Some(0) => a,
                Some(c) => {
                    let m = (c as i64).abs();
                    if alo >= 0 && ahi < m {
                        a
                    } else if alo >= 0 {
                        Abs::top().with_range(0, ahi.min(m - 1))
                    } else if ahi <= 0 {
                        Abs::top().with_range(alo.max(-(m - 1)), 0)
                    } else {
                        Abs::top().with_range(-(m - 1), m - 1)
                    }
                }
                None => Abs::top(),
            },
        }
    }

    pub fn compare(op: CmpOp, a: Abs, b: Abs) -> Tri {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return Tri::from_bool(op.holds(x, y));
        }
        let disjoint =
            a.hi < b.lo || b.hi < a.lo || (a.bits ^ b.bits) & a.known & b.known != 0;
        match op {
            CmpOp::Eq => {
                if disjoint {
                    Tri::False
                } else {
                    Tri::Unknown
                }
            }
            CmpOp::Ne => Abs::compare(CmpOp::Eq, a, b).not(),
            CmpOp::Lt => {
                if a.hi < b.lo {
                    Tri::True
                } else if a.lo >= b.hi {
                    Tri::False
                } else {
                    Tri::Unknown
                }
            }
            CmpOp::Ge => Abs::compare(CmpOp::Lt, a, b).not(),
            CmpOp::Gt => Abs::compare(CmpOp::Lt, b, a),
            CmpOp::Le => Abs::compare(CmpOp::Lt, b, a).not(),
        }
    }

    #[cfg(test)]
    pub fn contains(&self, v: i32) -> bool {
        v >= self.lo && v <= self.hi && (v as u32 ^ self.bits) & self.known == 0
    }
}
