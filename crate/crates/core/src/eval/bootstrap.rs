use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::tensor::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CiConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for CiConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

impl CiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 100 {
            return Err(Error::Config(format!(
                "need at least 100 bootstrap replicates, got {}",
                self.replicates
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!(
                "confidence level must lie in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// Linear interpolation between order statistics of sorted `xs`.
fn quantile(xs: &[f64], q: f64) -> f64 {
    let pos = q * (xs.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        xs[lo]
    } else {
        xs[lo] + (xs[hi] - xs[lo]) * (pos - lo as f64)
    }
}

/// Percentile intervals for several metrics computed on the same
/// resamples. Replicate `b` draws from `Rng::derive(seed, b)`, so the result
/// does not depend on how replicates are scheduled.
pub fn bootstrap_many<T, F>(items: &[T], metrics: F, cfg: &CiConfig) -> Result<Vec<(f64, f64)>>
where
    T: Sync,
    F: Fn(&[&T]) -> Result<Vec<f64>> + Sync,
{
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::Input("cannot bootstrap an empty record set".into()));
    }
    let n = items.len();
    let replicates = exec::map_range(cfg.replicates, |b| {
        let mut rng = Rng::derive(cfg.seed, b as u64);
        let sample: Vec<&T> = (0..n).map(|_| &items[rng.below(n)]).collect();
        metrics(&sample)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let k = replicates[0].len();
    let alpha = (1.0 - cfg.level) / 2.0;
    (0..k)
        .map(|j| {
            let mut col: Vec<f64> = replicates.iter().map(|r| r[j]).collect();
            if col.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(
                    "bootstrap metric returned a non-finite value".into(),
                ));
            }
            col.sort_by(f64::total_cmp);
            Ok((quantile(&col, alpha), quantile(&col, 1.0 - alpha)))
        })
        .collect()
}

/// Percentile interval of a single metric.
pub fn bootstrap_ci<T, F>(items: &[T], metric: F, cfg: &CiConfig) -> Result<(f64, f64)>
where
    T: Sync,
    F: Fn(&[&T]) -> Result<f64> + Sync,
{
    Ok(bootstrap_many(items, |s| Ok(vec![metric(s)?]), cfg)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_metric_zero_width() {
        let xs: Vec<u8> = (0..30).collect();
        let ci = bootstrap_ci(&xs, |_| Ok(42.0), &CiConfig::default()).unwrap();
        assert_eq!(ci, (42.0, 42.0));
    }

    #[test]
    fn deterministic_and_ordered() {
        let xs: Vec<f64> = (0..200).map(|i| (i % 7) as f64).collect();
        let mean = |s: &[&f64]| Ok(s.iter().copied().sum::<f64>() / s.len() as f64);
        let cfg = CiConfig {
            seed: 5,
            ..CiConfig::default()
        };
        let a = bootstrap_ci(&xs, mean, &cfg).unwrap();
        assert_eq!(a, bootstrap_ci(&xs, mean, &cfg).unwrap());
        assert!(a.0 < a.1);
        let full = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(a.0 < full && full < a.1);
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [0.0, 10.0, 20.0, 30.0, 40.0];
        assert_eq!(quantile(&xs, 0.5), 20.0);
        assert_eq!(quantile(&xs, 0.125), 5.0);
        assert_eq!(quantile(&xs, 0.0), 0.0);
        assert_eq!(quantile(&xs, 1.0), 40.0);
    }

    #[test]
    fn rejects_bad_config() {
        let xs = [1.0];
        let f = |_: &[&f64]| Ok(0.0);
        assert!(bootstrap_ci(
            &xs,
            f,
            &CiConfig {
                replicates: 99,
                ..CiConfig::default()
            }
        )
        .is_err());
        assert!(bootstrap_ci(
            &xs,
            f,
            &CiConfig {
                level: 1.0,
                ..CiConfig::default()
            }
        )
        .is_err());
        assert!(matches!(
            bootstrap_ci::<f64, _>(&[], f, &CiConfig::default()),
            Err(Error::Input(_))
        ));
    }
}
