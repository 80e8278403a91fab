//! Conjugate posteriors for the three parameter kinds used by the proxy
//! estimands: means (Gaussian / Student-T), proportions (Beta with the
//! Jeffreys prior), and K-way proportions (Dirichlet with alpha_i = 1/K).

use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma, Normal, StudentT};

use crate::error::{Error, Result};

/// Sampling family for a mean posterior. Student-T below n = 30.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanFamily {
    Gaussian,
    StudentT,
}

/// Posterior over an unknown population mean.
#[derive(Debug, Clone)]
pub struct MeanPosterior {
    /// Sample mean.
    pub mu_hat: f64,
    /// Sample variance with the 1/n divisor.
    pub sigma2_hat: f64,
    pub n: usize,
    pub family: MeanFamily,
}

impl MeanPosterior {
    pub fn standard_error(&self) -> f64 {
        (self.sigma2_hat / self.n as f64).sqrt()
    }
}

/// Beta posterior over an unknown proportion, Jeffreys Beta(1/2, 1/2) prior.
#[derive(Debug, Clone)]
pub struct ProportionPosterior {
    pub successes: u64,
    pub trials: u64,
    pub alpha: f64,
    pub beta: f64,
}

impl ProportionPosterior {
    /// Prior-only posterior for an empty cell. Beta(1/2, 1/2) is proper,
    /// so conditionals with no observations stay well defined.
    pub fn prior_only() -> Self {
        ProportionPosterior { successes: 0, trials: 0, alpha: 0.5, beta: 0.5 }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Dirichlet posterior over a K-way proportion vector, prior alpha_i = 1/K.
#[derive(Debug, Clone)]
pub struct KProportionPosterior {
    pub counts: Vec<u64>,
    pub alphas: Vec<f64>,
}

impl KProportionPosterior {
    /// Prior-only Dirichlet(1/K, ..., 1/K) for an empty cell.
    pub fn prior_only(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("K must be >= 2, got {k}")));
        }
        Ok(KProportionPosterior { counts: vec![0; k], alphas: vec![1.0 / k as f64; k] })
    }

    pub fn k(&self) -> usize {
        self.alphas.len()
    }

    pub fn mean(&self) -> Vec<f64> {
        let total: f64 = self.alphas.iter().sum();
        self.alphas.iter().map(|a| a / total).collect()
    }
}

/// Any of the three posterior kinds, as registered with the engine.
#[derive(Debug, Clone)]
pub enum Posterior {
    Mean(MeanPosterior),
    Proportion(ProportionPosterior),
    KProportion(KProportionPosterior),
}

/// One draw from a posterior: a scalar, or a point on the K-simplex.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Scalar(f64),
    Simplex(Vec<f64>),
}

impl ParamValue {
    pub fn as_scalar(&self) -> f64 {
        match self {
            ParamValue::Scalar(v) => *v,
            ParamValue::Simplex(_) => panic!("expected scalar parameter, found simplex"),
        }
    }

    pub fn as_simplex(&self) -> &[f64] {
        match self {
            ParamValue::Simplex(v) => v,
            ParamValue::Scalar(_) => panic!("expected simplex parameter, found scalar"),
        }
    }
}

/// Fit a mean posterior: mu_hat = arithmetic mean, sigma2_hat with the
/// 1/n divisor, Student-T family iff n < 30.
pub fn fit_mean(values: &[f64]) -> Result<MeanPosterior> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = values.len();
    let mu_hat = values.iter().sum::<f64>() / n as f64;
    let sigma2_hat = values.iter().map(|v| (v - mu_hat).powi(2)).sum::<f64>() / n as f64;
    let family = if n < 30 { MeanFamily::StudentT } else { MeanFamily::Gaussian };
    Ok(MeanPosterior { mu_hat, sigma2_hat, n, family })
}

/// Fit a Beta posterior with the Jeffreys prior: Beta(k + 1/2, n - k + 1/2).
pub fn fit_proportion(successes: u64, trials: u64) -> Result<ProportionPosterior> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    if successes > trials {
        return Err(Error::InvalidArgument(format!(
            "successes {successes} exceeds trials {trials}"
        )));
    }
    Ok(ProportionPosterior {
        successes,
        trials,
        alpha: successes as f64 + 0.5,
        beta: (trials - successes) as f64 + 0.5,
    })
}

/// Fit a Dirichlet posterior with prior alpha_i = 1/K.
pub fn fit_kproportion(counts: &[u64]) -> Result<KProportionPosterior> {
    let k = counts.len();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("K must be >= 2, got {k}")));
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::InvalidArgument("all counts are zero".into()));
    }
    let alphas = counts.iter().map(|&c| 1.0 / k as f64 + c as f64).collect();
    Ok(KProportionPosterior { counts: counts.to_vec(), alphas })
}

/// A prepared sampler for one posterior. Built once, then drawn from many
/// times; constructing the underlying distributions is not free.
pub enum Sampler {
    Const(f64),
    Gaussian { mu: f64, se: f64, dist: Normal<f64> },
    StudentT { mu: f64, se: f64, dist: StudentT<f64> },
    Beta(BetaDist<f64>),
    Dirichlet(Vec<Gamma<f64>>),
}

impl Sampler {
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> ParamValue {
        match self {
            Sampler::Const(v) => ParamValue::Scalar(*v),
            Sampler::Gaussian { mu, se, dist } => {
                ParamValue::Scalar(mu + se * dist.sample(rng))
            }
            Sampler::StudentT { mu, se, dist } => {
                ParamValue::Scalar(mu + se * dist.sample(rng))
            }
            Sampler::Beta(dist) => ParamValue::Scalar(dist.sample(rng)),
            Sampler::Dirichlet(gammas) => {
                let mut v: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
                let mut total: f64 = v.iter().sum();
                if total <= 0.0 {
                    // All gamma draws underflowed to zero; fall back to uniform.
                    v.iter_mut().for_each(|x| *x = 1.0);
                    total = v.len() as f64;
                }
                v.iter_mut().for_each(|x| *x /= total);
                ParamValue::Simplex(v)
            }
        }
    }
}

impl Posterior {
    pub fn sampler(&self) -> Result<Sampler> {
        match self {
            Posterior::Mean(m) => {
                if m.sigma2_hat == 0.0 {
                    return Ok(Sampler::Const(m.mu_hat));
                }
                let se = m.standard_error();
                match m.family {
                    MeanFamily::Gaussian => Ok(Sampler::Gaussian {
                        mu: m.mu_hat,
                        se,
                        dist: Normal::new(0.0, 1.0)
                            .map_err(|e| Error::InvalidArgument(e.to_string()))?,
                    }),
                    MeanFamily::StudentT => {
                        if m.n < 2 {
                            // n = 1 with nonzero variance cannot happen with the
                            // 1/n divisor; guard anyway.
                            return Ok(Sampler::Const(m.mu_hat));
                        }
                        Ok(Sampler::StudentT {
                            mu: m.mu_hat,
                            se,
                            dist: StudentT::new((m.n - 1) as f64)
                                .map_err(|e| Error::InvalidArgument(e.to_string()))?,
                        })
                    }
                }
            }
            Posterior::Proportion(p) => Ok(Sampler::Beta(
                BetaDist::new(p.alpha, p.beta)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?,
            )),
            Posterior::KProportion(kp) => {
                let gammas = kp
                    .alphas
                    .iter()
                    .map(|&a| {
                        Gamma::new(a, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Sampler::Dirichlet(gammas))
            }
        }
    }

    /// One draw. Deterministic given the rng state.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Result<ParamValue> {
        Ok(self.sampler()?.draw(rng))
    }
}

/// Sample mean and 1/n variance in one pass. Shared by the classical
/// estimators, which need the moments without a posterior object.
pub fn mean_and_variance(values: &[f64]) -> Result<(f64, f64)> {
    let p = fit_mean(values)?;
    Ok((p.mu_hat, p.sigma2_hat))
}

/// Covariance with the 1/n divisor.
pub fn covariance(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::InvalidArgument("covariance needs equal non-empty samples".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    Ok(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn fit_mean_zero_variance() {
        let p = fit_mean(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(p.mu_hat, 1.0);
        assert_eq!(p.sigma2_hat, 0.0);
        assert_eq!(p.family, MeanFamily::StudentT);
    }

    #[test]
    fn fit_mean_alternating() {
        let vals: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let p = fit_mean(&vals).unwrap();
        assert_eq!(p.mu_hat, 0.5);
        assert_eq!(p.sigma2_hat, 0.25);
        assert_eq!(p.family, MeanFamily::Gaussian);
    }

    #[test]
    fn fit_mean_range() {
        let vals: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let p = fit_mean(&vals).unwrap();
        assert_eq!(p.mu_hat, 4.5);
        assert_eq!(p.sigma2_hat, 8.25);
        assert_eq!(p.family, MeanFamily::StudentT);
    }

    #[test]
    fn fit_mean_empty_errors() {
        assert!(matches!(fit_mean(&[]), Err(Error::EmptySample)));
    }

    #[test]
    fn fit_proportion_cases() {
        let p = fit_proportion(0, 10).unwrap();
        assert_eq!((p.alpha, p.beta), (0.5, 10.5));

        let p = fit_proportion(5, 10).unwrap();
        assert_eq!((p.alpha, p.beta), (5.5, 5.5));
        assert!((p.mean() - 0.5).abs() < 1e-15);

        let p = fit_proportion(733, 1000).unwrap();
        assert_eq!((p.alpha, p.beta), (733.5, 267.5));
        assert!((p.mean() - 733.5 / 1001.0).abs() < 1e-12);

        assert!(fit_proportion(11, 10).is_err());
        assert!(fit_proportion(0, 0).is_err());
    }

    #[test]
    fn fit_kproportion_cases() {
        let p = fit_kproportion(&[10, 10, 10]).unwrap();
        for (a, m) in p.alphas.iter().zip(p.mean()) {
            assert!((a - (10.0 + 1.0 / 3.0)).abs() < 1e-12);
            assert!((m - 1.0 / 3.0).abs() < 1e-12);
        }

        let p = fit_kproportion(&[0, 0, 30]).unwrap();
        assert!((p.alphas[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.alphas[2] - (30.0 + 1.0 / 3.0)).abs() < 1e-12);

        let p = fit_kproportion(&[90, 5, 5]).unwrap();
        let m = p.mean();
        let total = 100.0 + 1.0;
        assert!((m[0] - (90.0 + 1.0 / 3.0) / total).abs() < 1e-12);
        assert!((m[1] - (5.0 + 1.0 / 3.0) / total).abs() < 1e-12);

        assert!(fit_kproportion(&[5]).is_err());
        assert!(fit_kproportion(&[0, 0]).is_err());
    }

    #[test]
    fn zero_variance_mean_draws_constant() {
        let p = Posterior::Mean(MeanPosterior {
            mu_hat: 1.0,
            sigma2_hat: 0.0,
            n: 5,
            family: MeanFamily::StudentT,
        });
        let mut rng = substream(0, &[0]);
        for _ in 0..10 {
            assert_eq!(p.draw(&mut rng).unwrap().as_scalar(), 1.0);
        }
    }

    #[test]
    fn beta_draw_mean_close() {
        let p = Posterior::Proportion(fit_proportion(5, 10).unwrap());
        let s = p.sampler().unwrap();
        let mut rng = substream(1, &[0]);
        let mean: f64 =
            (0..10_000).map(|_| s.draw(&mut rng).as_scalar()).sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn dirichlet_draws_on_simplex() {
        let p = Posterior::KProportion(fit_kproportion(&[3, 1, 7]).unwrap());
        let s = p.sampler().unwrap();
        let mut rng = substream(2, &[0]);
        for _ in 0..1000 {
            let v = s.draw(&mut rng);
            let v = v.as_simplex();
            assert!(v.iter().all(|&x| x >= 0.0));
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_draws_z_test() {
        // Empirical mean of 100k draws within 4 sigma of mu_hat.
        let vals: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let p = fit_mean(&vals).unwrap();
        let se = p.standard_error();
        let post = Posterior::Mean(p);
        let s = post.sampler().unwrap();
        let mut rng = substream(3, &[0]);
        let t = 100_000;
        let mean: f64 = (0..t).map(|_| s.draw(&mut rng).as_scalar()).sum::<f64>() / t as f64;
        assert!((mean - 0.5).abs() < 4.0 * se / (t as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn beta_draws_ks_statistic() {
        use statrs::distribution::{Beta, ContinuousCDF};
        let post = Posterior::Proportion(fit_proportion(30, 100).unwrap());
        let s = post.sampler().unwrap();
        let mut rng = substream(4, &[0]);
        let t = 100_000;
        let mut draws: Vec<f64> = (0..t).map(|_| s.draw(&mut rng).as_scalar()).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cdf = Beta::new(30.5, 70.5).unwrap();
        let mut ks: f64 = 0.0;
        for (i, &x) in draws.iter().enumerate() {
            let f = cdf.cdf(x);
            let e_hi = (i + 1) as f64 / t as f64;
            let e_lo = i as f64 / t as f64;
            ks = ks.max((f - e_lo).abs()).max((f - e_hi).abs());
        }
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn beta_matches_two_cell_dirichlet_at_k2() {
        // 1/K = 1/2 at K = 2, so the priors coincide exactly.
        let b = fit_proportion(7, 20).unwrap();
        let d = fit_kproportion(&[7, 13]).unwrap();
        assert!((b.mean() - d.mean()[0]).abs() < 1e-9);
        assert!((b.alpha - d.alphas[0]).abs() < 1e-12);
        assert!((b.beta - d.alphas[1]).abs() < 1e-12);
    }

    #[test]
    fn deterministic_draw_sequences() {
        let post = Posterior::Proportion(fit_proportion(5, 10).unwrap());
        let run = || -> Vec<f64> {
            let s = post.sampler().unwrap();
            let mut rng = substream(9, &[1]);
            (0..100).map(|_| s.draw(&mut rng).as_scalar()).collect()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b, "same seed must give bit-identical draws");
    }
}
