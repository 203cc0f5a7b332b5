//! Nested dual numbers with a runtime nesting depth.
//!
//! A jet with `k` levels carries `2^k` coefficients, one per subset of the
//! infinitesimals `e_0 .. e_{k-1}` (each `e_i^2 = 0`). It is isomorphic to
//! `Dual<Dual<...<f64>>>` nested `k` times, but a single concrete type lets
//! fields be stored as ordinary closures and differentiated any number of
//! times up to [`MAX_LEVELS`].

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub const MAX_LEVELS: usize = 4;
const CAP: usize = 1 << MAX_LEVELS;

#[derive(Clone, Copy, PartialEq)]
pub struct Jet {
    levels: u8,
    c: [f64; CAP],
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("levels", &self.levels)
            .field("c", &&self.c[..self.width()])
            .finish()
    }
}

impl Default for Jet {
    fn default() -> Self {
        Jet::constant(0.0)
    }
}

impl From<f64> for Jet {
    fn from(v: f64) -> Self {
        Jet::constant(v)
    }
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; CAP];
        c[0] = v;
        Jet { levels: 0, c }
    }

    /// `v + e_level` lifted to `level + 1` levels.
    pub fn seeded(v: f64, level: usize) -> Self {
        assert!(
            level < MAX_LEVELS,
            "jet nesting exceeds {MAX_LEVELS} levels"
        );
        let mut c = [0.0; CAP];
        c[0] = v;
        c[1 << level] = 1.0;
        Jet {
            levels: (level + 1) as u8,
            c,
        }
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn levels(&self) -> usize {
        self.levels as usize
    }

    fn width(&self) -> usize {
        1 << self.levels
    }

    /// Coefficient of the product of infinitesimals selected by `mask`.
    pub fn coeff(&self, mask: usize) -> f64 {
        if mask < self.width() {
            self.c[mask]
        } else {
            0.0
        }
    }

    /// Adds `e_level` to this jet, raising the depth to `level + 1`.
    pub fn with_seed(mut self, level: usize) -> Self {
        assert!(
            level < MAX_LEVELS,
            "jet nesting exceeds {MAX_LEVELS} levels"
        );
        assert!(level >= self.levels(), "seed level already in use");
        self.levels = (level + 1) as u8;
        self.c[1 << level] += 1.0;
        self
    }

    /// Coefficient of the outermost infinitesimal, as a jet one level shallower.
    pub fn outer_derivative(&self) -> Jet {
        let k = self.levels();
        assert!(k > 0, "outer_derivative of a plain value");
        let half = 1 << (k - 1);
        let mut c = [0.0; CAP];
        c[..half].copy_from_slice(&self.c[half..2 * half]);
        Jet {
            levels: (k - 1) as u8,
            c,
        }
    }

    /// Drops the outermost infinitesimal.
    pub fn outer_value(&self) -> Jet {
        let k = self.levels();
        assert!(k > 0, "outer_value of a plain value");
        let half = 1 << (k - 1);
        let mut c = [0.0; CAP];
        c[..half].copy_from_slice(&self.c[..half]);
        Jet {
            levels: (k - 1) as u8,
            c,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.c[..self.width()].iter().all(|v| v.is_finite())
    }

    /// Evaluates an analytic function given its derivatives at the real part:
    /// `derivs[j]` is the j-th derivative, at least `levels + 1` entries.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let k = self.levels();
        let mut out = Jet::constant(derivs[0]);
        if k == 0 {
            return out;
        }
        let mut nil = *self;
        nil.c[0] = 0.0;
        let mut pw = Jet::constant(1.0);
        let mut fact = 1.0;
        for (j, d) in derivs.iter().enumerate().take(k + 1).skip(1) {
            pw = pw * nil;
            fact *= j as f64;
            if *d != 0.0 {
                out = out + pw * (*d / fact);
            }
        }
        out
    }

    fn derivs_with(&self, f: impl Fn(usize) -> f64) -> Jet {
        let mut d = [0.0; MAX_LEVELS + 1];
        for (j, slot) in d.iter_mut().enumerate().take(self.levels() + 1) {
            *slot = f(j);
        }
        self.compose(&d)
    }

    pub fn recip(&self) -> Jet {
        let a = self.value();
        self.derivs_with(|j| {
            let mut fact = 1.0;
            for i in 1..=j {
                fact *= i as f64;
            }
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * fact / a.powi(j as i32 + 1)
        })
    }

    pub fn powf(&self, p: f64) -> Jet {
        let a = self.value();
        self.derivs_with(|j| {
            let mut coef = 1.0;
            for i in 0..j {
                coef *= p - i as f64;
            }
            coef * a.powf(p - j as f64)
        })
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    pub fn powi(&self, n: i32) -> Jet {
        if n >= 0 {
            let mut out = Jet::constant(1.0);
            for _ in 0..n {
                out = out * *self;
            }
            out
        } else {
            self.powi(-n).recip()
        }
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.derivs_with(|_| e)
    }

    pub fn ln(&self) -> Jet {
        let a = self.value();
        self.derivs_with(|j| {
            if j == 0 {
                a.ln()
            } else {
                let mut fact = 1.0;
                for i in 1..j {
                    fact *= i as f64;
                }
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                sign * fact / a.powi(j as i32)
            }
        })
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.derivs_with(|j| [s, c, -s, -c][j % 4])
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.derivs_with(|j| [c, -s, -c, s][j % 4])
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let levels = self.levels.max(rhs.levels);
        let mut c = [0.0; CAP];
        for (i, slot) in c.iter_mut().enumerate().take(1 << levels) {
            *slot = self.c[i] + rhs.c[i];
        }
        Jet { levels, c }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        let levels = self.levels.max(rhs.levels);
        let mut c = [0.0; CAP];
        for (i, slot) in c.iter_mut().enumerate().take(1 << levels) {
            *slot = self.c[i] - rhs.c[i];
        }
        Jet { levels, c }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let levels = self.levels.max(rhs.levels);
        if levels == 0 {
            return Jet::constant(self.c[0] * rhs.c[0]);
        }
        let mut c = [0.0; CAP];
        for (s, slot) in c.iter_mut().enumerate().take(1 << levels) {
            // sum over submasks a of s
            let mut acc = 0.0;
            let mut a = s;
            loop {
                acc += self.c[a] * rhs.c[s ^ a];
                if a == 0 {
                    break;
                }
                a = (a - 1) & s;
            }
            *slot = acc;
        }
        Jet { levels, c }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        if self.levels == 0 && rhs.levels == 0 {
            return Jet::constant(self.c[0] / rhs.c[0]);
        }
        self * rhs.recip()
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        let mut out = self;
        for v in out.c.iter_mut().take(self.width()) {
            *v = -*v;
        }
        out
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.c[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.c[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        let w = self.width();
        for v in self.c.iter_mut().take(w) {
            *v *= rhs;
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, rhs: f64) -> Jet {
        self * (1.0 / rhs)
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        rhs + self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        -rhs + self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        rhs * self
    }
}

impl Div<Jet> for f64 {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        rhs.recip() * self
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, rhs: Jet) {
        *self = *self + rhs;
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, rhs: Jet) {
        *self = *self - rhs;
    }
}

impl MulAssign for Jet {
    fn mul_assign(&mut self, rhs: Jet) {
        *self = *self * rhs;
    }
}

impl std::iter::Sum for Jet {
    fn sum<I: Iterator<Item = Jet>>(iter: I) -> Jet {
        iter.fold(Jet::constant(0.0), |a, b| a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_first_level() {
        let x = Jet::seeded(3.0, 0);
        let y = x * x * x;
        assert_eq!(y.value(), 27.0);
        assert_eq!(y.coeff(1), 27.0);
    }

    #[test]
    fn nested_levels_give_mixed_partials() {
        // f(x, y) = x^2 y at (2, 5): f_xy = 2x = 4
        let x = Jet::seeded(2.0, 0);
        let y = Jet::seeded(5.0, 1);
        let f = x * x * y;
        assert_eq!(f.coeff(0b01), 20.0);
        assert_eq!(f.coeff(0b10), 4.0);
        assert_eq!(f.coeff(0b11), 4.0);
    }

    #[test]
    fn repeated_seed_gives_second_derivative() {
        // same variable seeded at two levels: coefficient e0 e1 = f''
        let x = Jet::seeded(0.7, 0).with_seed(1);
        let f = x.sin();
        assert!((f.coeff(0b11) + 0.7f64.sin()).abs() < 1e-15);
        let g = x.sqrt();
        assert!((g.coeff(0b11) + 0.25 * 0.7f64.powf(-1.5)).abs() < 1e-14);
    }

    #[test]
    fn third_derivative_of_recip() {
        let x = Jet::seeded(2.0, 0).with_seed(1).with_seed(2);
        let f = x.recip();
        assert!((f.coeff(0b111) + 6.0 / 16.0).abs() < 1e-15);
        let l = x.ln();
        assert!((l.coeff(0b111) - 2.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn outer_parts_split_the_top_level() {
        let x = Jet::seeded(1.5, 0).with_seed(1);
        let f = x * x;
        assert_eq!(f.outer_value().coeff(1), 3.0);
        assert_eq!(f.outer_derivative().value(), 3.0);
        assert_eq!(f.outer_derivative().coeff(1), 2.0);
    }
}
