use serde::{Deserialize, Serialize};

/// Element-wise non-linearities supported by the tape and the networks.
///
/// `Sigmoid` and `Step` exist mainly as the derivatives of `Softplus` and
/// `Relu`: a Lagrangian layer needs `g'(a)` as a differentiable node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Softplus,
    Sigmoid,
    Relu,
    Step,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Step => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `g'(x)`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Softplus => sigmoid(x),
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Relu => Activation::Step.apply(x),
            Activation::Step => 0.0,
        }
    }

    /// The activation whose value equals this activation's derivative, if the
    /// derivative is itself a supported non-constant activation.
    pub fn derivative_activation(self) -> Option<Activation> {
        match self {
            Activation::Softplus => Some(Activation::Sigmoid),
            Activation::Relu => Some(Activation::Step),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Softplus => "softplus",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Step => "step",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Activation::Identity),
            "softplus" => Ok(Activation::Softplus),
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            "step" => Ok(Activation::Step),
            other => Err(crate::Error::InvalidArgument(format!("unknown activation '{other}'"))),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_at_zero() {
        assert_eq!(Activation::Softplus.apply(0.0), std::f64::consts::LN_2);
        assert_eq!(Activation::Softplus.derivative(0.0), 0.5);
    }

    #[test]
    fn softplus_is_stable_for_large_inputs() {
        assert_eq!(Activation::Softplus.apply(800.0), 800.0);
        assert_eq!(Activation::Softplus.apply(-800.0), 0.0);
        assert!(Activation::Sigmoid.apply(-800.0).is_finite());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for act in [Activation::Softplus, Activation::Sigmoid, Activation::Identity] {
            for &x in &[-3.0, -0.4, 0.3, 2.5] {
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-8, "{act:?} at {x}");
            }
        }
    }
}
