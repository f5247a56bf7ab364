use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::Real;

/// Reduction operator with its identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReduceOp {
    Sum,
    Min,
    Max,
}

impl ReduceOp {
    pub fn identity(self) -> Real {
        match self {
            ReduceOp::Sum => 0.0,
            ReduceOp::Min => Real::INFINITY,
            ReduceOp::Max => Real::NEG_INFINITY,
        }
    }

    #[inline]
    pub fn combine(self, a: Real, b: Real) -> Real {
        match self {
            ReduceOp::Sum => a + b,
            ReduceOp::Min => {
                if b < a {
                    b
                } else {
                    a
                }
            }
            ReduceOp::Max => {
                if b > a {
                    b
                } else {
                    a
                }
            }
        }
    }

    pub fn identities<const N: usize>(ops: [ReduceOp; N]) -> [Real; N] {
        ops.map(ReduceOp::identity)
    }

    /// Folds `b` into `acc` element-wise.
    #[inline]
    pub fn combine_all<const N: usize>(ops: &[ReduceOp; N], acc: &mut [Real; N], b: &[Real; N]) {
        for k in 0..N {
            acc[k] = ops[k].combine(acc[k], b[k]);
        }
    }
}

impl fmt::Display for ReduceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReduceOp::Sum => "sum",
            ReduceOp::Min => "min",
            ReduceOp::Max => "max",
        })
    }
}

impl FromStr for ReduceOp {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "sum" => Ok(ReduceOp::Sum),
            "min" => Ok(ReduceOp::Min),
            "max" => Ok(ReduceOp::Max),
            _ => Err(Error::InputsValue { key: "reduce op".into(), message: format!("unknown op `{s}`") }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities_are_neutral() {
        for op in [ReduceOp::Sum, ReduceOp::Min, ReduceOp::Max] {
            for v in [-3.5, 0.0, 7.25] {
                assert_eq!(op.combine(op.identity(), v), v);
                assert_eq!(op.combine(v, op.identity()), v);
            }
        }
    }
}
