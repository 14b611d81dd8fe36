use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// Handle to a scalar decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Affine expression `Σ aᵢ xᵢ + c`. Terms may repeat; they are summed on lowering.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn term(v: Var, a: f64) -> Self {
        Self { terms: vec![(v.0, a)], constant: 0.0 }
    }

    pub fn add_term(&mut self, v: Var, a: f64) -> &mut Self {
        if a != 0.0 {
            self.terms.push((v.0, a));
        }
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>() + self.constant
    }

    pub(crate) fn max_index(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.0).max()
    }

    /// Sum of a sequence of expressions.
    pub fn sum<I: IntoIterator<Item = LinExpr>>(it: I) -> LinExpr {
        let mut acc = LinExpr::zero();
        for e in it {
            acc += e;
        }
        acc
    }
}

impl From<Var> for LinExpr {
    fn from(v: Var) -> Self {
        LinExpr::term(v, 1.0)
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

impl AddAssign for LinExpr {
    fn add_assign(&mut self, rhs: LinExpr) {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
    }
}

impl SubAssign for LinExpr {
    fn sub_assign(&mut self, rhs: LinExpr) {
        self.terms.extend(rhs.terms.into_iter().map(|(i, a)| (i, -a)));
        self.constant -= rhs.constant;
    }
}

impl<T: Into<LinExpr>> Add<T> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: T) -> LinExpr {
        self += rhs.into();
        self
    }
}

impl<T: Into<LinExpr>> Sub<T> for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: T) -> LinExpr {
        self -= rhs.into();
        self
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(mut self, k: f64) -> LinExpr {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self * -1.0
    }
}

impl<T: Into<LinExpr>> Add<T> for Var {
    type Output = LinExpr;
    fn add(self, rhs: T) -> LinExpr {
        LinExpr::from(self) + rhs
    }
}

impl<T: Into<LinExpr>> Sub<T> for Var {
    type Output = LinExpr;
    fn sub(self, rhs: T) -> LinExpr {
        LinExpr::from(self) - rhs
    }
}

impl Mul<f64> for Var {
    type Output = LinExpr;
    fn mul(self, k: f64) -> LinExpr {
        LinExpr::term(self, k)
    }
}

impl Neg for Var {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        LinExpr::term(self, -1.0)
    }
}

/// Complex affine expression kept as separate real and imaginary parts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CExpr {
    pub re: LinExpr,
    pub im: LinExpr,
}

impl CExpr {
    pub fn new(re: LinExpr, im: LinExpr) -> Self {
        Self { re, im }
    }

    pub fn constant(c: num_complex::Complex64) -> Self {
        Self { re: LinExpr::constant(c.re), im: LinExpr::constant(c.im) }
    }

    pub fn eval(&self, x: &[f64]) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.re.eval(x), self.im.eval(x))
    }

    /// Multiply by a complex constant.
    pub fn scale(&self, c: num_complex::Complex64) -> CExpr {
        CExpr {
            re: self.re.clone() * c.re - self.im.clone() * c.im,
            im: self.re.clone() * c.im + self.im.clone() * c.re,
        }
    }
}

impl Add for CExpr {
    type Output = CExpr;
    fn add(self, rhs: CExpr) -> CExpr {
        CExpr { re: self.re + rhs.re, im: self.im + rhs.im }
    }
}

impl Sub for CExpr {
    type Output = CExpr;
    fn sub(self, rhs: CExpr) -> CExpr {
        CExpr { re: self.re - rhs.re, im: self.im - rhs.im }
    }
}
