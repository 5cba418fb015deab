use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

/// Two-sided paired t-test result. When every difference is the same
/// non-zero value the statistic is infinite, `p` is 0 and `exact_tie` is
/// set; identical inputs give `t = 0`, `p = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub mean_diff: f64,
    pub exact_tie: bool,
}

pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "paired t-test needs two equal-length lists of at least 2 scores, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = a.len() - 1;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest {
                t: 0.0,
                p: 1.0,
                df,
                mean_diff: 0.0,
                exact_tie: false,
            }
        } else {
            TTest {
                t: mean.signum() * f64::INFINITY,
                p: 0.0,
                df,
                mean_diff: mean,
                exact_tie: true,
            }
        });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df ≥ 1");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest {
        t,
        p,
        df,
        mean_diff: mean,
        exact_tie: false,
    })
}
