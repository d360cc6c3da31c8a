//! Truncated stick-breaking mixture prior on the diagonal noise scales D,
//! with inverse-Gaussian atoms. The atom density is proportional to
//! t^{-3/2} exp(-(t - mu_d)^2 / (2t)), i.e. GIG(-1/2, 1, mu_d^2), so the
//! Gaussian scale terms of the Whittle likelihood keep the conditional in
//! the GIG family.

use rand::Rng;
use rand_distr::{Beta, Distribution, InverseGaussian, Normal};
use serde::{Deserialize, Serialize};

use super::{gig, sample_gamma_rate, slice_sample_1d};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StickBreakingConfig {
    /// Truncation level M of the stick-breaking representation.
    pub truncation: usize,
    /// Standard deviation of the (positively truncated) normal prior on mu_d.
    pub mu_d_prior_sd: f64,
    /// Gamma prior shape for the stick concentration v.
    pub a_v: f64,
    /// Gamma prior rate for the stick concentration v.
    pub b_v: f64,
}

impl Default for StickBreakingConfig {
    fn default() -> Self {
        Self {
            truncation: 20,
            mu_d_prior_sd: 100.0,
            a_v: 1.0,
            b_v: 1.0,
        }
    }
}

/// Per-variable sufficient statistics of all terms in which d_k appears as a
/// Gaussian scale: the conditional of d_k is d_k^{-half_count} e^{-quad/d_k}
/// times the mixture prior.
#[derive(Debug, Clone)]
pub struct DSufficientStats {
    pub half_count: Vec<f64>,
    pub quad: Vec<f64>,
}

impl DSufficientStats {
    pub fn empty(p: usize) -> Self {
        Self {
            half_count: vec![0.0; p],
            quad: vec![0.0; p],
        }
    }
}

/// Clustered noise scales: d_k = atoms[assignment[k]].
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseScale {
    pub d: Vec<f64>,
    pub assignment: Vec<usize>,
    pub atoms: Vec<f64>,
    /// Mixture weights; the last stick carries the remainder so they sum to 1.
    pub weights: Vec<f64>,
    /// Stick variables v_j; the last entry is fixed at 1.
    pub sticks: Vec<f64>,
    pub mu_d: f64,
    pub concentration: f64,
}

fn stick_weights(sticks: &[f64]) -> Vec<f64> {
    let mut weights = Vec::with_capacity(sticks.len());
    let mut remaining = 1.0;
    for &v in sticks {
        weights.push(v * remaining);
        remaining *= 1.0 - v;
    }
    weights
}

impl NoiseScale {
    /// Forward draw of the full block (concentration, sticks, mu_d, atoms,
    /// labels, scales) from the prior.
    pub fn sample_prior<R: Rng + ?Sized>(
        p: usize,
        cfg: &StickBreakingConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let m = cfg.truncation;
        if m < 2 {
            return Err(Error::EmptyTruncation(format!(
                "truncation {m} must be at least 2"
            )));
        }
        let concentration = sample_gamma_rate(rng, cfg.a_v, cfg.b_v);
        let beta = Beta::new(1.0, concentration)
            .map_err(|e| Error::NumericalFailure(format!("stick Beta: {e}")))?;
        let mut sticks: Vec<f64> = (0..m - 1).map(|_| beta.sample(rng)).collect();
        sticks.push(1.0);
        let weights = stick_weights(&sticks);

        let mu_d = sample_truncated_normal_positive(rng, cfg.mu_d_prior_sd);
        let atom_dist = InverseGaussian::new(mu_d, mu_d * mu_d)
            .map_err(|e| Error::NumericalFailure(format!("atom prior: {e}")))?;
        let atoms: Vec<f64> = (0..m).map(|_| atom_dist.sample(rng)).collect();

        let mut assignment = Vec::with_capacity(p);
        for _ in 0..p {
            assignment.push(sample_categorical(rng, &weights));
        }
        let d = assignment.iter().map(|&c| atoms[c]).collect();
        Ok(Self {
            d,
            assignment,
            atoms,
            weights,
            sticks,
            mu_d,
            concentration,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.d.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.atoms.len()
    }

    /// Full Gibbs sweep: labels, atoms (GIG), sticks (Beta), mu_d (slice),
    /// concentration (Gamma).
    pub fn stick_breaking_update<R: Rng + ?Sized>(
        &mut self,
        stats: &DSufficientStats,
        cfg: &StickBreakingConfig,
        rng: &mut R,
    ) -> Result<()> {
        let m = self.n_clusters();
        if m < 2 {
            return Err(Error::EmptyTruncation(format!(
                "truncation {m} must be at least 2"
            )));
        }
        let p = self.n_vars();

        // (i) labels from categorical full conditionals
        let log_weights: Vec<f64> = self.weights.iter().map(|w| w.max(1e-300).ln()).collect();
        for k in 0..p {
            let mut logits = Vec::with_capacity(m);
            for c in 0..m {
                logits.push(
                    log_weights[c] - stats.half_count[k] * self.atoms[c].ln()
                        - stats.quad[k] / self.atoms[c],
                );
            }
            self.assignment[k] = sample_categorical_logits(rng, &logits);
        }

        // (ii) atoms from their GIG conditionals; unoccupied clusters fall
        // back to the prior (the same formula with zero statistics).
        let b_prior = self.mu_d * self.mu_d;
        for c in 0..m {
            let mut count = 0.0;
            let mut quad = 0.0;
            for k in 0..p {
                if self.assignment[k] == c {
                    count += stats.half_count[k];
                    quad += stats.quad[k];
                }
            }
            self.atoms[c] = gig::sample(rng, -0.5 - count, 1.0, b_prior + 2.0 * quad)?;
        }
        for k in 0..p {
            self.d[k] = self.atoms[self.assignment[k]];
        }

        // (iii) sticks from Beta conjugacy
        let mut counts = vec![0usize; m];
        for &c in &self.assignment {
            counts[c] += 1;
        }
        let mut tail: usize = counts.iter().sum();
        for j in 0..m - 1 {
            tail -= counts[j];
            let beta = Beta::new(1.0 + counts[j] as f64, self.concentration + tail as f64)
                .map_err(|e| Error::NumericalFailure(format!("stick Beta: {e}")))?;
            self.sticks[j] = beta.sample(rng);
        }
        self.sticks[m - 1] = 1.0;
        self.weights = stick_weights(&self.sticks);

        // (iv) mu_d by slice sampling its exact conditional, then the
        // concentration from Gamma conjugacy.
        let inv_sum: f64 = self.atoms.iter().map(|a| 1.0 / a).sum();
        let m_f = m as f64;
        let prior_prec = 1.0 / (cfg.mu_d_prior_sd * cfg.mu_d_prior_sd);
        let log_cond = |mu: f64| {
            if mu <= 0.0 {
                return f64::NEG_INFINITY;
            }
            m_f * mu.ln() + m_f * mu - 0.5 * mu * mu * (inv_sum + prior_prec)
        };
        self.mu_d = slice_sample_1d(rng, self.mu_d, log_cond, 1.0, 1e-12, f64::INFINITY)?;

        let log_one_minus: f64 = self.sticks[..m - 1]
            .iter()
            .map(|v| (1.0 - v).max(1e-12).ln())
            .sum();
        self.concentration =
            sample_gamma_rate(rng, cfg.a_v + (m as f64 - 1.0), cfg.b_v - log_one_minus);
        Ok(())
    }
}

fn sample_truncated_normal_positive<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> f64 {
    let normal = Normal::new(0.0, sd).expect("valid normal");
    loop {
        let x: f64 = normal.sample(rng);
        if x > 0.0 {
            return x;
        }
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

pub(crate) fn sample_categorical_logits<R: Rng + ?Sized>(rng: &mut R, logits: &[f64]) -> usize {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    sample_categorical(rng, &weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::gig::{log_density_unnorm, log_norm_const_half};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weights_sum_to_one_with_remainder_on_last_stick() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = StickBreakingConfig::default();
        let ns = NoiseScale::sample_prior(6, &cfg, &mut rng).unwrap();
        let sum: f64 = ns.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(ns.weights.iter().all(|w| *w >= 0.0));
        assert_eq!(*ns.sticks.last().unwrap(), 1.0);
        for (k, &c) in ns.assignment.iter().enumerate() {
            assert_eq!(ns.d[k], ns.atoms[c]);
        }
    }

    #[test]
    fn truncation_below_two_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = StickBreakingConfig {
            truncation: 1,
            ..Default::default()
        };
        assert!(matches!(
            NoiseScale::sample_prior(3, &cfg, &mut rng),
            Err(Error::EmptyTruncation(_))
        ));
    }

    /// The atom conditional must equal prior x likelihood up to a constant:
    /// checked on a 1-D grid by comparing the GIG(p*, 1, b*) density that the
    /// update samples from against the directly assembled product.
    #[test]
    fn atom_conditional_matches_prior_times_likelihood_on_grid() {
        let mu = 4.0;
        let half_count = 12.5;
        let quad = 7.25;
        // Update parameters for a singleton cluster with these stats:
        let p_gig = -0.5 - half_count;
        let b_gig = mu * mu + 2.0 * quad;

        let mut ratio_ref = None;
        for i in 1..=60 {
            let t = 0.2 * i as f64;
            let log_gig = log_density_unnorm(t, p_gig, 1.0, b_gig);
            let log_prior = log_norm_const_half(mu) + log_density_unnorm(t, -0.5, 1.0, mu * mu);
            let log_lik = -half_count * t.ln() - quad / t;
            let diff = log_gig - (log_prior + log_lik);
            match ratio_ref {
                None => ratio_ref = Some(diff),
                Some(r) => assert!((diff - r).abs() < 1e-6, "ratio drift {}", diff - r),
            }
        }
    }

    #[test]
    fn no_data_conditional_is_prior() {
        // With zero sufficient statistics the GIG parameters reduce to the
        // inverse-Gaussian prior (-1/2, 1, mu^2); verify via moments.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = StickBreakingConfig::default();
        let stats = DSufficientStats::empty(3);
        let mut acc = 0.0;
        let n = 30_000;
        let mut ns = NoiseScale::sample_prior(3, &cfg, &mut rng).unwrap();
        ns.mu_d = 5.0;
        for _ in 0..n {
            ns.stick_breaking_update(&stats, &cfg, &mut rng).unwrap();
            acc += ns.atoms[0];
            // pin mu_d so the atom prior stays fixed
            ns.mu_d = 5.0;
        }
        let mean = acc / n as f64;
        assert!((mean - 5.0).abs() < 0.05, "atom prior mean drifted: {mean}");
    }

    #[test]
    fn separated_scale_groups_occupy_multiple_clusters() {
        // Two groups of variables whose likelihood stats favor scales 100x
        // apart must occupy at least two clusters nearly always.
        let cfg = StickBreakingConfig::default();
        let mut stats = DSufficientStats::empty(6);
        for k in 0..6 {
            let target = if k < 3 { 0.5 } else { 50.0 };
            // half_count * target = quad  makes the likelihood peak at target
            stats.half_count[k] = 200.0;
            stats.quad[k] = 200.0 * target;
        }
        let mut hits = 0;
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let mut ns = NoiseScale::sample_prior(6, &cfg, &mut rng).unwrap();
            for _ in 0..60 {
                ns.stick_breaking_update(&stats, &cfg, &mut rng).unwrap();
            }
            let mut occupied: Vec<usize> = ns.assignment.clone();
            occupied.sort_unstable();
            occupied.dedup();
            if occupied.len() >= 2 {
                hits += 1;
            }
        }
        assert!(hits >= 38, "only {hits}/40 chains split the clusters");
    }
}
