//! Performance statistics of a portfolio-value path.

use crate::error::{invalid, Error, Result};

/// Trading days per year used for annualization.
pub const TRADING_DAYS: f64 = 252.0;

fn check_positive(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return invalid("portfolio values must be positive and finite");
    }
    Ok(())
}

/// Step returns `V_{t+1} / V_t - 1`.
pub fn step_returns(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

/// `sqrt(252) * mean / sample std` of step returns, risk-free rate zero.
pub fn sharpe_ratio(values: &[f64]) -> Result<f64> {
    if values.len() < 3 {
        return invalid("Sharpe ratio needs at least three values");
    }
    check_positive(values)?;
    let r = step_returns(values);
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(Error::UndefinedResult("zero return volatility".into()));
    }
    Ok(mean / var.sqrt() * TRADING_DAYS.sqrt())
}

/// `(V_T / V_0)^(252 / steps) - 1`.
pub fn annualized_return(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return invalid("annualized return needs at least two values");
    }
    check_positive(values)?;
    let steps = (values.len() - 1) as f64;
    Ok((values[values.len() - 1] / values[0]).powf(TRADING_DAYS / steps) - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_values_have_no_sharpe() {
        assert!(matches!(sharpe_ratio(&[5.0; 10]), Err(Error::UndefinedResult(_))));
        assert!(sharpe_ratio(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn alternating_returns_near_zero() {
        let mut v = vec![100.0];
        for k in 0..200 {
            let last = *v.last().unwrap();
            v.push(last * if k % 2 == 0 { 1.01 } else { 0.99 });
        }
        assert!(sharpe_ratio(&v).unwrap().abs() < 0.1);
    }

    #[test]
    fn sample_std_convention() {
        // step returns 0.1 and 0.0
        let v = [100.0, 110.0, 110.0];
        let mean: f64 = 0.05;
        let sd = ((0.05f64.powi(2) * 2.0) / 1.0).sqrt();
        assert!((sharpe_ratio(&v).unwrap() - mean / sd * 252f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn annualized_examples() {
        assert_eq!(annualized_return(&[7.0; 30]).unwrap(), 0.0);
        let mut v = vec![1.0; 253];
        v[252] = 2.0;
        assert!((annualized_return(&v).unwrap() - 1.0).abs() < 1e-12);
        assert!(annualized_return(&[1.0, 0.0]).is_err());
    }
}
