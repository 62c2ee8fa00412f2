use crate::error::{Error, Result};

/// Discounted n-step returns by the backward recursion
/// `G_k = R_{k+1} + γ G_{k+1}`, seeded with `bootstrap` (zero at terminal
/// states).
pub fn nstep_returns(rewards: &[f64], bootstrap: f64, gamma: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::Empty("rewards".into()));
    }
    let mut out = vec![0.0; rewards.len()];
    let mut g = bootstrap;
    for (k, r) in rewards.iter().enumerate().rev() {
        g = r + gamma * g;
        out[k] = g;
    }
    Ok(out)
}

pub fn advantage(ret: f64, value: f64) -> f64 {
    ret - value
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_sum() {
        let g = nstep_returns(&[1.0, 1.0, 1.0], 0.0, 0.99).unwrap();
        assert!((g[0] - 2.9701).abs() < 1e-12);
        assert!((g[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_discount_is_immediate_reward() {
        let r = [0.5, -2.0, 4.0];
        assert_eq!(nstep_returns(&r, 10.0, 0.0).unwrap(), r.to_vec());
    }

    #[test]
    fn bootstrap_enters_discounted() {
        let g = nstep_returns(&[0.0, 0.0], 8.0, 0.5).unwrap();
        assert_eq!(g, vec![2.0, 4.0]);
    }

    #[test]
    fn empty_rejected() {
        assert!(nstep_returns(&[], 0.0, 0.9).is_err());
    }

    #[test]
    fn advantage_cases() {
        assert_eq!(advantage(1.5, 1.5), 0.0);
        assert_eq!(advantage(3.0, 1.0), 2.0);
    }
}
