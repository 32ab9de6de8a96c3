//! One-dimensional Gaussian mixtures over weighted samples.
//!
//! Intensities on a windowed slice are `u8`, so fitting works on
//! `(value, weight)` pairs, typically a 256-bin histogram.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const EM_MAX_ITERS: usize = 100;
const EM_TOLERANCE: f64 = 1e-6;
const KMEANS_ITERS: usize = 20;
const DEAD_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

impl Gaussian {
    #[inline]
    fn ln_weighted_pdf(&self, z: f64) -> f64 {
        if self.weight <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let d = z - self.mean;
        self.weight.ln() - 0.5 * (LN_2PI + self.variance.ln() + d * d / self.variance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub components: Vec<Gaussian>,
    pub variance_floor: f64,
}

/// Foreground and background appearance models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub fg: Gmm,
    pub bg: Gmm,
}

/// Builds `(value, count)` pairs from 8-bit samples, skipping empty bins.
pub fn histogram_samples(samples: impl IntoIterator<Item = u8>) -> Vec<(f64, f64)> {
    let mut bins = [0u64; 256];
    for s in samples {
        bins[s as usize] += 1;
    }
    bins.iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(v, &c)| (v as f64, c as f64))
        .collect()
}

fn ln_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl Gmm {
    /// Mixture density at `z`.
    pub fn density(&self, z: f64) -> f64 {
        self.ln_density(z).exp()
    }

    pub fn ln_density(&self, z: f64) -> f64 {
        let terms: Vec<f64> = self.components.iter().map(|c| c.ln_weighted_pdf(z)).collect();
        ln_sum_exp(&terms)
    }

    /// Total weighted log-likelihood of `samples`.
    pub fn log_likelihood(&self, samples: &[(f64, f64)]) -> f64 {
        samples.iter().map(|&(z, w)| w * self.ln_density(z)).sum()
    }

    pub fn weight_sum(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Components with non-negligible weight.
    pub fn effective_components(&self) -> usize {
        self.components.iter().filter(|c| c.weight > DEAD_WEIGHT).count()
    }

    /// One EM iteration: soft assignment followed by a floored M-step.
    /// Components that receive no responsibility keep their mean and
    /// variance with zero weight.
    pub fn em_step(&self, samples: &[(f64, f64)]) -> Gmm {
        let k = self.components.len();
        let mut resp_w = vec![0.0; k];
        let mut resp_z = vec![0.0; k];
        let mut resp_zz = vec![0.0; k];
        let mut terms = vec![0.0; k];
        let mut total = 0.0;
        for &(z, w) in samples {
            for (t, c) in terms.iter_mut().zip(&self.components) {
                *t = c.ln_weighted_pdf(z);
            }
            let norm = ln_sum_exp(&terms);
            if !norm.is_finite() {
                continue;
            }
            total += w;
            for j in 0..k {
                let r = w * (terms[j] - norm).exp();
                resp_w[j] += r;
                resp_z[j] += r * z;
                resp_zz[j] += r * z * z;
            }
        }
        let components = self
            .components
            .iter()
            .enumerate()
            .map(|(j, old)| {
                if resp_w[j] <= 0.0 || total <= 0.0 {
                    return Gaussian {
                        weight: 0.0,
                        ..*old
                    };
                }
                let mean = resp_z[j] / resp_w[j];
                let var = (resp_zz[j] / resp_w[j] - mean * mean).max(0.0);
                Gaussian {
                    weight: resp_w[j] / total,
                    mean,
                    variance: var.max(self.variance_floor),
                }
            })
            .collect();
        Gmm {
            components,
            variance_floor: self.variance_floor,
        }
    }

    /// Fits a `k`-component mixture: seeded k-means++ initialization, Lloyd
    /// refinement, then EM until the per-sample log-likelihood gain drops
    /// below 1e-6 (at most 100 iterations). A component that loses all its
    /// weight is re-seeded by splitting the widest component.
    pub fn fit(samples: &[(f64, f64)], k: usize, variance_floor: f64, seed: u64) -> Result<Gmm> {
        if k == 0 {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        if !(variance_floor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "variance floor must be positive, got {variance_floor}"
            )));
        }
        let samples: Vec<(f64, f64)> = samples.iter().cloned().filter(|&(_, w)| w > 0.0).collect();
        let total: f64 = samples.iter().map(|&(_, w)| w).sum();
        if samples.is_empty() || total <= 0.0 {
            return Err(Error::InvalidParameter("cannot fit a mixture to no samples".into()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = kmeans_pp(&samples, k, &mut rng);
        let centers = lloyd(&samples, centers);
        let mut gmm = init_from_centers(&samples, &centers, k, variance_floor, total);

        let mut ll = gmm.log_likelihood(&samples) / total;
        let mut reseeds_left = k;
        for _ in 0..EM_MAX_ITERS {
            let mut next = gmm.em_step(&samples);
            let mut reseeded = false;
            if reseeds_left > 0 {
                reseeded = reseed_dead(&mut next);
                if reseeded {
                    reseeds_left -= 1;
                }
            }
            let next_ll = next.log_likelihood(&samples) / total;
            let gain = next_ll - ll;
            gmm = next;
            ll = next_ll;
            if !reseeded && gain < EM_TOLERANCE {
                break;
            }
        }
        Ok(gmm)
    }

    /// Fits 8-bit samples directly.
    pub fn fit_u8(samples: &[u8], k: usize, variance_floor: f64, seed: u64) -> Result<Gmm> {
        Gmm::fit(&histogram_samples(samples.iter().copied()), k, variance_floor, seed)
    }
}

fn kmeans_pp(samples: &[(f64, f64)], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let pick = |weights: &[f64], rng: &mut ChaCha8Rng| -> usize {
        let total: f64 = weights.iter().sum();
        let mut r = rng.random::<f64>() * total;
        for (i, &w) in weights.iter().enumerate() {
            if r < w {
                return i;
            }
            r -= w;
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    };
    let weights: Vec<f64> = samples.iter().map(|&(_, w)| w).collect();
    let mut centers = vec![samples[pick(&weights, rng)].0];
    while centers.len() < k {
        let d2: Vec<f64> = samples
            .iter()
            .map(|&(z, w)| {
                let d = centers.iter().map(|c| (z - c).abs()).fold(f64::INFINITY, f64::min);
                w * d * d
            })
            .collect();
        if d2.iter().sum::<f64>() <= 0.0 {
            break;
        }
        centers.push(samples[pick(&d2, rng)].0);
    }
    centers
}

fn nearest(centers: &[f64], z: f64) -> usize {
    let mut best = 0;
    for (j, c) in centers.iter().enumerate() {
        if (z - c).abs() < (z - centers[best]).abs() {
            best = j;
        }
    }
    best
}

fn lloyd(samples: &[(f64, f64)], mut centers: Vec<f64>) -> Vec<f64> {
    for _ in 0..KMEANS_ITERS {
        let mut sum = vec![0.0; centers.len()];
        let mut wsum = vec![0.0; centers.len()];
        for &(z, w) in samples {
            let j = nearest(&centers, z);
            sum[j] += w * z;
            wsum[j] += w;
        }
        let next: Vec<f64> = centers
            .iter()
            .enumerate()
            .map(|(j, &c)| if wsum[j] > 0.0 { sum[j] / wsum[j] } else { c })
            .collect();
        if next == centers {
            break;
        }
        centers = next;
    }
    centers
}

fn init_from_centers(
    samples: &[(f64, f64)],
    centers: &[f64],
    k: usize,
    floor: f64,
    total: f64,
) -> Gmm {
    let mut w = vec![0.0; centers.len()];
    let mut s = vec![0.0; centers.len()];
    let mut ss = vec![0.0; centers.len()];
    for &(z, wt) in samples {
        let j = nearest(centers, z);
        w[j] += wt;
        s[j] += wt * z;
        ss[j] += wt * z * z;
    }
    let overall_mean = samples.iter().map(|&(z, wt)| wt * z).sum::<f64>() / total;
    let mut components: Vec<Gaussian> = (0..centers.len())
        .map(|j| {
            if w[j] <= 0.0 {
                return Gaussian {
                    weight: 0.0,
                    mean: centers[j],
                    variance: floor,
                };
            }
            let mean = s[j] / w[j];
            Gaussian {
                weight: w[j] / total,
                mean,
                variance: (ss[j] / w[j] - mean * mean).max(floor),
            }
        })
        .collect();
    // Fewer distinct values than components: the rest start dead.
    components.resize(
        k,
        Gaussian {
            weight: 0.0,
            mean: overall_mean,
            variance: floor,
        },
    );
    Gmm {
        components,
        variance_floor: floor,
    }
}

/// Splits the widest live component into a dead slot. Returns whether a
/// split happened; it only does when the widest component has spread above
/// the floor.
fn reseed_dead(gmm: &mut Gmm) -> bool {
    let Some(dead) = gmm.components.iter().position(|c| c.weight <= DEAD_WEIGHT) else {
        return false;
    };
    let widest = gmm
        .components
        .iter()
        .enumerate()
        .filter(|(_, c)| c.weight > DEAD_WEIGHT)
        .max_by(|a, b| a.1.variance.total_cmp(&b.1.variance))
        .map(|(i, _)| i);
    let Some(widest) = widest else {
        return false;
    };
    let src = gmm.components[widest];
    if src.variance <= gmm.variance_floor * (1.0 + 1e-9) {
        return false;
    }
    let sd = src.variance.sqrt();
    gmm.components[widest] = Gaussian {
        weight: src.weight / 2.0,
        mean: src.mean - sd,
        variance: src.variance,
    };
    gmm.components[dead] = Gaussian {
        weight: src.weight / 2.0,
        mean: src.mean + sd,
        variance: src.variance,
    };
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn constant_samples_give_one_component_at_floor() {
        let g = Gmm::fit_u8(&[100; 50], 5, 0.25, 7).unwrap();
        assert_eq!(g.effective_components(), 1);
        let c = g.components.iter().find(|c| c.weight > 0.5).unwrap();
        assert_eq!(c.mean, 100.0);
        assert_eq!(c.variance, 0.25);
        assert!((g.weight_sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_component_is_closed_form_mle() {
        let samples: Vec<u8> = vec![10, 20, 20, 30, 50, 90];
        let n = samples.len() as f64;
        let mean = samples.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = samples.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let g = Gmm::fit_u8(&samples, 1, 0.25, 1).unwrap();
        assert!((g.components[0].mean - mean).abs() < 1e-9);
        assert!((g.components[0].variance - var.max(0.25)).abs() < 1e-9);
        assert_eq!(g.components[0].weight, 1.0);
    }

    #[test]
    fn two_clusters_are_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Normal::new(50.0, 2.0).unwrap();
        let b = Normal::new(200.0, 2.0).unwrap();
        let mut raw: Vec<f64> = (0..500).map(|_| a.sample(&mut rng)).collect();
        raw.extend((0..500).map(|_| b.sample(&mut rng)));
        let samples: Vec<(f64, f64)> = raw.iter().map(|&z| (z, 1.0)).collect();
        let sample_mean = |lo: f64, hi: f64| {
            let v: Vec<f64> = raw.iter().cloned().filter(|z| *z > lo && *z < hi).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let g = Gmm::fit(&samples, 2, 0.25, 11).unwrap();
        let mut means: Vec<f64> = g.components.iter().map(|c| c.mean).collect();
        means.sort_by(f64::total_cmp);
        assert!((means[0] - 50.0).abs() <= 2.0);
        assert!((means[1] - 200.0).abs() <= 2.0);
        assert!((means[0] - sample_mean(0.0, 125.0)).abs() < 1e-3);
        assert!((means[1] - sample_mean(125.0, 255.0)).abs() < 1e-3);
    }

    #[test]
    fn single_sample_has_one_effective_component() {
        let g = Gmm::fit_u8(&[42], 3, 0.25, 0).unwrap();
        assert_eq!(g.effective_components(), 1);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(Gmm::fit(&[], 2, 0.25, 0).is_err());
    }

    #[test]
    fn fit_is_deterministic() {
        let samples: Vec<u8> = (0..400u32).map(|i| ((i * 37) % 251) as u8).collect();
        let a = Gmm::fit_u8(&samples, 5, 0.25, 99).unwrap();
        let b = Gmm::fit_u8(&samples, 5, 0.25, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn em_step_does_not_decrease_likelihood() {
        let samples: Vec<(f64, f64)> = (0..256).map(|v| (v as f64, 1.0 + (v % 13) as f64)).collect();
        let mut g = Gmm::fit(&samples, 3, 0.25, 5).unwrap();
        for _ in 0..10 {
            let next = g.em_step(&samples);
            assert!(next.log_likelihood(&samples) >= g.log_likelihood(&samples) - 1e-9);
            g = next;
        }
    }

    proptest::proptest! {
        #[test]
        fn weights_sum_to_one_and_variances_floored(
            values in proptest::collection::vec(0u8..=255, 1..200),
            k in 1usize..6,
            seed in 0u64..1000,
        ) {
            let g = Gmm::fit_u8(&values, k, 0.25, seed).unwrap();
            proptest::prop_assert_eq!(g.components.len(), k);
            proptest::prop_assert!((g.weight_sum() - 1.0).abs() < 1e-9);
            for c in &g.components {
                proptest::prop_assert!(c.variance >= 0.25);
                proptest::prop_assert!((0.0..=1.0).contains(&c.weight));
            }
        }
    }
}
