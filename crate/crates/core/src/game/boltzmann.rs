use crate::error::{Error, Result};

/// Probability distribution over the follower's discrete actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution(pub Vec<f64>);

impl ActionDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn expectation(&self, values: &[f64]) -> f64 {
        self.0.iter().zip(values).map(|(p, v)| p * v).sum()
    }
}

/// Noisy-rational follower: `p_i ∝ exp(beta · q_i)`.
pub fn boltzmann(q: &[f64], beta: f64) -> Result<ActionDistribution> {
    if q.is_empty() {
        return Err(Error::EmptyUtilities);
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::config(
            "beta",
            "inverse temperature must be finite and non-negative",
        ));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidState(format!("non-finite utilities {q:?}")));
    }
    let mut p = vec![0.0; q.len()];
    boltzmann_into(q, beta, &mut p);
    Ok(ActionDistribution(p))
}

/// Unchecked kernel shared with the solver. Subtracting the maximum keeps
/// every exponent ≤ 0.
#[inline]
pub(crate) fn boltzmann_into(q: &[f64], beta: f64, out: &mut [f64]) {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(q) {
        *o = (beta * (v - max)).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_utilities_are_uniform() {
        for beta in [0.0, 0.3, 1.0, 1e6] {
            let p = boltzmann(&[2.5, 2.5, 2.5], beta).unwrap();
            for v in p.probabilities() {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_beta_is_uniform() {
        let p = boltzmann(&[-100.0, 3.0, 7.0, 1e5], 0.0).unwrap();
        assert!(p.probabilities().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn closed_form_two_actions() {
        let p = boltzmann(&[0.0, 3f64.ln()], 1.0).unwrap();
        assert!((p.0[0] - 0.25).abs() < 1e-12);
        assert!((p.0[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(boltzmann(&[], 1.0), Err(Error::EmptyUtilities)));
    }

    #[test]
    fn huge_beta_does_not_overflow() {
        let p = boltzmann(&[1.0, 2.0, 1.5], 1e6).unwrap();
        assert_eq!(p.0, vec![0.0, 1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn normalized(q in prop::collection::vec(-1e3f64..1e3, 1..12), beta in 0.0f64..50.0) {
            let p = boltzmann(&q, beta).unwrap();
            let s: f64 = p.0.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.0.iter().all(|&v| v >= 0.0));
        }
    }
}
