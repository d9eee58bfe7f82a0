//! Sparse multivariate polynomials given as monomial lists.

use serde::{Deserialize, Serialize};

use crate::taylor::Scalar;

/// One monomial `coeff * prod(x_k ^ powers[k])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monomial<const N: usize> {
    #[serde(with = "serde_powers")]
    pub powers: [u32; N],
    pub coeff: f64,
}

mod serde_powers {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(p: &[u32; N], s: S) -> Result<S::Ok, S::Error> {
        p.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[u32; N], D::Error> {
        let v = Vec::<u32>::deserialize(d)?;
        v.try_into()
            .map_err(|v: Vec<u32>| D::Error::invalid_length(v.len(), &"one power per variable"))
    }
}

/// Polynomial in `N` variables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Polynomial<const N: usize> {
    pub terms: Vec<Monomial<N>>,
}

impl<const N: usize> Polynomial<N> {
    pub fn new(terms: impl IntoIterator<Item = ([u32; N], f64)>) -> Self {
        Self {
            terms: terms
                .into_iter()
                .map(|(powers, coeff)| Monomial { powers, coeff })
                .collect(),
        }
    }

    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff == 0.0)
    }

    pub fn max_power(&self, var: usize) -> u32 {
        self.terms.iter().map(|t| t.powers[var]).max().unwrap_or(0)
    }

    pub fn eval<T: Scalar>(&self, vars: [T; N]) -> T {
        let mut acc = T::constant(0.0);
        for term in &self.terms {
            if term.coeff == 0.0 {
                continue;
            }
            let mut m = T::constant(term.coeff);
            for (v, &k) in vars.iter().zip(term.powers.iter()) {
                if k > 0 {
                    m = m * v.powi(k);
                }
            }
            acc = acc + m;
        }
        acc
    }

    /// Partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|t| t.powers[var] > 0 && t.coeff != 0.0)
            .map(|t| {
                let mut powers = t.powers;
                powers[var] -= 1;
                Monomial {
                    powers,
                    coeff: t.coeff * t.powers[var] as f64,
                }
            })
            .collect();
        Self { terms }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Monomial {
                    powers: t.powers,
                    coeff: t.coeff * factor,
                })
                .collect(),
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().copied());
        Self { terms }
    }

    /// Fix variable `var` at `value`, keeping the other slots (the fixed
    /// variable keeps power zero afterwards).
    pub fn substitute(&self, var: usize, value: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| {
                    let mut powers = t.powers;
                    powers[var] = 0;
                    Monomial {
                        powers,
                        coeff: t.coeff * value.powi(t.powers[var] as i32),
                    }
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_derivative() {
        // 3 x^2 y - y^3 + 2
        let p = Polynomial::new([([2, 1], 3.0), ([0, 3], -1.0), ([0, 0], 2.0)]);
        assert_eq!(p.eval([2.0, 1.0]), 12.0 - 1.0 + 2.0);
        let dx = p.derivative(0);
        assert_eq!(dx.eval([2.0, 1.0]), 12.0);
        let dy = p.derivative(1);
        assert_eq!(dy.eval([2.0, 1.0]), 12.0 - 3.0);
        assert_eq!(p.substitute(0, 0.0).eval([5.0, 2.0]), -8.0 + 2.0);
    }
}
