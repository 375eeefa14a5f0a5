//! Continuous-logic connectives over truth degrees in `[0, 1]`.
//!
//! Two t-norm semantics are supported: Gödel (`min`/`max`) and product
//! (`x·y` / `x + y − x·y`). Both use the strong negation `1 − x`; implication
//! is the material form `¬x ∨ y` and equivalence is `(x ⇒ y) ∧ (y ⇒ x)`.
//! Every connective exists twice: on validated scalars ([`TruthDegree`]) and
//! on tensors, where it is differentiable.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Active t-norm semantics. Serialized as `"goedel"` or `"product"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Semantics {
    #[default]
    Goedel,
    Product,
}

impl Semantics {
    pub const ALL: [Semantics; 2] = [Semantics::Goedel, Semantics::Product];

    pub fn token(self) -> &'static str {
        match self {
            Semantics::Goedel => "goedel",
            Semantics::Product => "product",
        }
    }
}

impl fmt::Display for Semantics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Semantics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "goedel" | "godel" | "gödel" => Ok(Semantics::Goedel),
            "product" => Ok(Semantics::Product),
            other => Err(Error::Config(format!("unknown semantics {other:?}"))),
        }
    }
}

/// A scalar known to lie in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TruthDegree<T>(T);

impl<T: Scalar> TruthDegree<T> {
    pub fn new(value: T) -> Result<Self> {
        if value >= T::zero() && value <= T::one() {
            Ok(TruthDegree(value))
        } else {
            Err(Error::Domain(value.to_f64().unwrap_or(f64::NAN)))
        }
    }

    pub fn value(self) -> T {
        self.0
    }

    pub fn truth() -> Self {
        TruthDegree(T::one())
    }

    pub fn falsity() -> Self {
        TruthDegree(T::zero())
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            Self::truth()
        } else {
            Self::falsity()
        }
    }

    /// Clamps into `[0, 1]`; rounding noise from product terms can leave the range by an ulp.
    fn clamped(value: T) -> Self {
        TruthDegree(value.max(T::zero()).min(T::one()))
    }
}

impl Semantics {
    pub fn neg<T: Scalar>(self, x: TruthDegree<T>) -> TruthDegree<T> {
        TruthDegree(T::one() - x.0)
    }

    pub fn conj<T: Scalar>(self, x: TruthDegree<T>, y: TruthDegree<T>) -> TruthDegree<T> {
        match self {
            Semantics::Goedel => TruthDegree(x.0.min(y.0)),
            Semantics::Product => TruthDegree(x.0 * y.0),
        }
    }

    pub fn disj<T: Scalar>(self, x: TruthDegree<T>, y: TruthDegree<T>) -> TruthDegree<T> {
        match self {
            Semantics::Goedel => TruthDegree(x.0.max(y.0)),
            // 1 − (1 − x)(1 − y) is exactly 1 whenever either side is.
            Semantics::Product => TruthDegree::clamped(T::one() - (T::one() - x.0) * (T::one() - y.0)),
        }
    }

    pub fn implies<T: Scalar>(self, x: TruthDegree<T>, y: TruthDegree<T>) -> TruthDegree<T> {
        self.disj(self.neg(x), y)
    }

    pub fn iff<T: Scalar>(self, x: TruthDegree<T>, y: TruthDegree<T>) -> TruthDegree<T> {
        self.conj(self.implies(x, y), self.implies(y, x))
    }

    /// Left fold of binary conjunction; the empty conjunction is true.
    pub fn conj_all<T: Scalar>(self, xs: impl IntoIterator<Item = TruthDegree<T>>) -> TruthDegree<T> {
        xs.into_iter()
            .fold(TruthDegree::truth(), |acc, x| self.conj(acc, x))
    }

    /// Checked convenience wrappers over raw scalars.
    pub fn eval_conj<T: Scalar>(self, x: T, y: T) -> Result<T> {
        Ok(self.conj(TruthDegree::new(x)?, TruthDegree::new(y)?).value())
    }

    pub fn eval_disj<T: Scalar>(self, x: T, y: T) -> Result<T> {
        Ok(self.disj(TruthDegree::new(x)?, TruthDegree::new(y)?).value())
    }

    pub fn eval_neg<T: Scalar>(self, x: T) -> Result<T> {
        Ok(self.neg(TruthDegree::new(x)?).value())
    }

    pub fn eval_implies<T: Scalar>(self, x: T, y: T) -> Result<T> {
        Ok(self.implies(TruthDegree::new(x)?, TruthDegree::new(y)?).value())
    }

    pub fn eval_iff<T: Scalar>(self, x: T, y: T) -> Result<T> {
        Ok(self.iff(TruthDegree::new(x)?, TruthDegree::new(y)?).value())
    }
}

/// Differentiable tensor connectives. Inputs are expected in `[0, 1]`; the
/// graph does not re-validate them.
impl Semantics {
    pub fn neg_t<T: Scalar>(self, x: &Tensor<T>) -> Tensor<T> {
        x.rsub_scalar(T::one())
    }

    pub fn conj_t<T: Scalar>(self, x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Semantics::Goedel => x.minimum(y),
            Semantics::Product => x.mul(y),
        }
    }

    pub fn disj_t<T: Scalar>(self, x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Semantics::Goedel => x.maximum(y),
            Semantics::Product => Ok(self.neg_t(x).mul(&self.neg_t(y))?.rsub_scalar(T::one())),
        }
    }

    pub fn implies_t<T: Scalar>(self, x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
        self.disj_t(&self.neg_t(x), y)
    }

    pub fn iff_t<T: Scalar>(self, x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
        self.conj_t(&self.implies_t(x, y)?, &self.implies_t(y, x)?)
    }

    /// Left fold of `conj_t` over `parts`.
    pub fn conj_fold_t<T: Scalar>(self, parts: &[Tensor<T>]) -> Result<Tensor<T>> {
        let (first, rest) = parts.split_first().ok_or(Error::EmptyRule)?;
        rest.iter()
            .try_fold(first.clone(), |acc, x| self.conj_t(&acc, x))
    }
}
