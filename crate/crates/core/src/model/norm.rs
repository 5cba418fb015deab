//! Batch normalisation over rows (nodes / time steps) of a feature matrix.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::params::BatchNorm;

#[derive(Debug, Clone)]
pub(crate) struct NormCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
    /// Batch statistics; `None` in eval mode.
    pub batch_mean: Option<Array1<f64>>,
    pub batch_var_unbiased: Option<Array1<f64>>,
}

pub(crate) fn forward(
    bn: &BatchNorm,
    x: ArrayView2<'_, f64>,
    use_batch_stats: bool,
    eps: f64,
) -> (Array2<f64>, NormCache) {
    let rows = x.nrows() as f64;
    let (mean, var, stats) = if use_batch_stats {
        let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
        let centred = &x - &mean;
        let sq = (&centred * &centred).sum_axis(Axis(0));
        let var = &sq / rows;
        let unbiased = if rows > 1.0 {
            &sq / (rows - 1.0)
        } else {
            var.clone()
        };
        (mean.clone(), var, Some((mean, unbiased)))
    } else {
        (bn.running_mean.clone(), bn.running_var.clone(), None)
    };
    let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
    let xhat = (&x - &mean) * &inv_std;
    let y = &xhat * &bn.gamma + &bn.beta;
    let (batch_mean, batch_var_unbiased) = match stats {
        Some((m, v)) => (Some(m), Some(v)),
        None => (None, None),
    };
    (
        y,
        NormCache {
            xhat,
            inv_std,
            batch_mean,
            batch_var_unbiased,
        },
    )
}

/// Returns `dx`; accumulates `dgamma`, `dbeta` into `grads`.
pub(crate) fn backward(
    bn: &BatchNorm,
    cache: &NormCache,
    dy: ArrayView2<'_, f64>,
    grads: &mut BatchNorm,
) -> Array2<f64> {
    grads.gamma += &(&dy * &cache.xhat).sum_axis(Axis(0));
    grads.beta += &dy.sum_axis(Axis(0));
    let dxhat = &dy * &bn.gamma;
    if cache.batch_mean.is_none() {
        return dxhat * &cache.inv_std;
    }
    let n = dy.nrows() as f64;
    let sum_dxhat = dxhat.sum_axis(Axis(0));
    let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
    let mut dx = dxhat * n - &sum_dxhat - &(&cache.xhat * &sum_dxhat_xhat);
    dx *= &(&cache.inv_std / n);
    dx
}

/// `running ← (1 − m)·running + m·batch`, with the unbiased batch variance.
pub(crate) fn update_running(bn: &mut BatchNorm, cache: &NormCache, momentum: f64) {
    if let (Some(mean), Some(var)) = (&cache.batch_mean, &cache.batch_var_unbiased) {
        bn.running_mean = &bn.running_mean * (1.0 - momentum) + mean * momentum;
        bn.running_var = &bn.running_var * (1.0 - momentum) + var * momentum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn train_mode_standardises_columns() {
        let bn = BatchNorm::new(2);
        let x = array![[1.0, 10.0], [3.0, 10.0], [5.0, 10.0]];
        let (y, cache) = forward(&bn, x.view(), true, 0.0);
        assert!((y[[0, 0]] + (1.5f64).sqrt()).abs() < 1e-12);
        let (y, _) = forward(&bn, x.view(), true, 1e-5);
        assert!(y.column(1).iter().all(|&v| v == 0.0));
        assert_eq!(cache.batch_var_unbiased.unwrap()[0], 4.0);
    }

    #[test]
    fn running_update_uses_momentum() {
        let mut bn = BatchNorm::new(1);
        let x = array![[1.0], [3.0]];
        let (_, cache) = forward(&bn, x.view(), true, 1e-5);
        update_running(&mut bn, &cache, 0.6);
        assert!((bn.running_mean[0] - 1.2).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.4 + 0.6 * 2.0)).abs() < 1e-12);
    }
}
