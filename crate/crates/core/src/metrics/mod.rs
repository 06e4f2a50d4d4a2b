//! Uplift evaluation: √PEHE, ATE error, uplift curves, the Qini coefficient
//! and the neighbor-uplift similarity analysis.

mod neighbor;
mod report;
mod uplift;

pub use neighbor::{neighbor_uplift_mse, neighbor_uplift_significance, NeighborMse, NeighborSignificance};
pub use report::EvalReport;
pub use uplift::{
    default_ks, qini, qini_curve, rank_descending, uplift_curve, uplift_curve_averaged, CurveOptions, QiniCurve,
    Ranking,
};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("empty group: {0}")]
    EmptyGroup(String),
    #[error("no non-isolated node in the graph")]
    AllIsolated,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

fn check_len(what: &str, a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::Length(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

fn check_finite(what: &'static str, v: &[f64]) -> Result<(), MetricsError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(MetricsError::NonFinite(what))
    }
}

/// `sqrt(mean((τ̂ − τ)²))`.
pub fn pehe(tau_hat: &[f64], tau_true: &[f64]) -> Result<f64, MetricsError> {
    check_len("pehe", tau_hat.len(), tau_true.len())?;
    if tau_hat.is_empty() {
        return Err(MetricsError::Length("pehe of an empty sample".into()));
    }
    let sse: f64 = tau_hat.iter().zip(tau_true).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sse / tau_hat.len() as f64).sqrt())
}

/// `|mean(τ̂) − mean(τ)|`.
pub fn ate_error(tau_hat: &[f64], tau_true: &[f64]) -> Result<f64, MetricsError> {
    check_len("ate_error", tau_hat.len(), tau_true.len())?;
    if tau_hat.is_empty() {
        return Err(MetricsError::Length("ate_error of an empty sample".into()));
    }
    let n = tau_hat.len() as f64;
    Ok((tau_hat.iter().sum::<f64>() / n - tau_true.iter().sum::<f64>() / n).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pehe_and_ate_basics() {
        let tau = [1.0, -2.0, 0.5, 3.0];
        assert_eq!(pehe(&tau, &tau).unwrap(), 0.0);
        let shifted: Vec<f64> = tau.iter().map(|x| x - 1.5).collect();
        assert!((pehe(&shifted, &tau).unwrap() - 1.5).abs() < 1e-12);
        assert!((ate_error(&shifted, &tau).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(ate_error(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 0.0);
        assert!(pehe(&[1.0], &[1.0, 2.0]).is_err());
        assert!(ate_error(&[], &[]).is_err());
    }

    #[test]
    fn random_vectors_match_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..257).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..257).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut sse = 0.0;
        let (mut sa, mut sb) = (0.0, 0.0);
        for i in 0..a.len() {
            sse += (a[i] - b[i]) * (a[i] - b[i]);
            sa += a[i];
            sb += b[i];
        }
        let n = a.len() as f64;
        assert!((pehe(&a, &b).unwrap() - (sse / n).sqrt()).abs() < 1e-12);
        assert!((ate_error(&a, &b).unwrap() - (sa / n - sb / n).abs()).abs() < 1e-12);
    }
}
