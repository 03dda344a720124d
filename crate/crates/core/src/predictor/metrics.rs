use serde::{Deserialize, Serialize};

use super::PredictorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r2: f64,
    pub mse: f64,
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64, PredictorError> {
    check(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

fn check(y: &[f64], y_hat: &[f64]) -> Result<(), PredictorError> {
    if y.len() != y_hat.len() {
        return Err(PredictorError::DimensionMismatch(format!(
            "{} targets vs {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.len() < 2 {
        return Err(PredictorError::TooFewRows { n: y.len(), min: 2 });
    }
    Ok(())
}

pub fn eval_metrics(y: &[f64], y_hat: &[f64]) -> Result<Metrics, PredictorError> {
    let mse = mse(y, y_hat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(PredictorError::ZeroVariance);
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(Metrics {
        r2: 1.0 - ss_res / ss_tot,
        mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let y = [0.0, 1.0, 2.0];
        assert_eq!(eval_metrics(&y, &y).unwrap(), Metrics { r2: 1.0, mse: 0.0 });
        assert_eq!(eval_metrics(&y, &[1.0; 3]).unwrap().r2, 0.0);
        let m = eval_metrics(&y, &[0.0, 1.0, 1.0]).unwrap();
        assert!((m.mse - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.r2, 0.5);
        assert_eq!(
            eval_metrics(&[1.0, 1.0], &[1.0, 2.0]).unwrap_err(),
            PredictorError::ZeroVariance
        );
        assert!(matches!(
            eval_metrics(&[1.0], &[1.0]),
            Err(PredictorError::TooFewRows { .. })
        ));
        assert!(matches!(
            eval_metrics(&y, &[1.0]),
            Err(PredictorError::DimensionMismatch(_))
        ));
    }
}
