//! Sense-selection distributions.
//!
//! Logits are always `c̄ᵀ s_k`, the dot product of the mean context vector
//! with each sense vector of the center word. Masked senses are dropped
//! before normalization and come back with probability exactly zero.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::dot;

/// Clamp applied to the uniform draw behind each Gumbel sample.
pub const UNIFORM_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttentionVariant {
    /// Plain softmax over context-sense logits.
    Sasi,
    /// Gumbel softmax with unit noise scale.
    Gasi,
    /// Gumbel softmax with the noise scaled by `beta`.
    GasiBeta,
}

impl AttentionVariant {
    pub fn name(self) -> &'static str {
        match self {
            AttentionVariant::Sasi => "sasi",
            AttentionVariant::Gasi => "gasi",
            AttentionVariant::GasiBeta => "gasi-beta",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionMode {
    pub variant: AttentionVariant,
    pub temperature: f64,
    pub beta: f64,
}

impl AttentionMode {
    pub const DEFAULT_TEMPERATURE: f64 = 0.5;
    pub const DEFAULT_BETA: f64 = 0.4;

    pub fn sasi() -> Self {
        AttentionMode {
            variant: AttentionVariant::Sasi,
            temperature: 1.0,
            beta: 0.0,
        }
    }

    pub fn gasi(temperature: f64) -> Self {
        AttentionMode {
            variant: AttentionVariant::Gasi,
            temperature,
            beta: 1.0,
        }
    }

    pub fn gasi_beta(temperature: f64, beta: f64) -> Self {
        AttentionMode {
            variant: AttentionVariant::GasiBeta,
            temperature,
            beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant == AttentionVariant::Sasi {
            return Ok(());
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidConfig(alloc::format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidConfig(alloc::format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Temperature actually applied (SASI has none).
    pub fn effective_temperature(&self) -> f64 {
        match self.variant {
            AttentionVariant::Sasi => 1.0,
            _ => self.temperature,
        }
    }

    /// Noise scale actually applied: 0 for SASI, 1 for GASI.
    pub fn effective_beta(&self) -> f64 {
        match self.variant {
            AttentionVariant::Sasi => 0.0,
            AttentionVariant::Gasi => 1.0,
            AttentionVariant::GasiBeta => self.beta,
        }
    }

    pub fn is_noisy(&self) -> bool {
        self.variant != AttentionVariant::Sasi
    }
}

impl Default for AttentionMode {
    fn default() -> Self {
        Self::gasi_beta(Self::DEFAULT_TEMPERATURE, Self::DEFAULT_BETA)
    }
}

/// Probabilities over the K senses of one word.
#[derive(Debug, Clone, PartialEq)]
pub struct SenseDistribution {
    pub probs: Vec<f64>,
}

impl SenseDistribution {
    pub fn uniform(mask: Option<&[bool]>, k: usize) -> Result<Self> {
        let active = (0..k).filter(|&i| is_active(mask, i)).count();
        if active == 0 {
            return Err(Error::AllSensesMasked);
        }
        let p = 1.0 / active as f64;
        Ok(SenseDistribution {
            probs: (0..k)
                .map(|i| if is_active(mask, i) { p } else { 0.0 })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Most probable sense, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }
}

#[inline]
fn is_active(mask: Option<&[bool]>, k: usize) -> bool {
    mask.is_none_or(|m| m[k])
}

/// First index of the maximum; NaN entries never win.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &x) in xs.iter().enumerate() {
        if x > best_val {
            best = i;
            best_val = x;
        }
    }
    best
}

/// Maps a uniform draw to a standard Gumbel sample, clamping `u` into
/// `[UNIFORM_EPS, 1 - UNIFORM_EPS]`.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(UNIFORM_EPS, 1.0 - UNIFORM_EPS);
    -libm::log(-libm::log(u))
}

pub fn gumbel_noise<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    gumbel_from_uniform(rng.random::<f64>())
}

/// `softmax(logits / tau)` restricted to active entries.
pub(crate) fn masked_softmax_into(
    logits: &[f64],
    tau: f64,
    mask: Option<&[bool]>,
    out: &mut [f64],
) -> Result<()> {
    let mut max = f64::NEG_INFINITY;
    let mut any = false;
    for (k, &l) in logits.iter().enumerate() {
        if is_active(mask, k) {
            any = true;
            let z = l / tau;
            if z > max {
                max = z;
            }
        }
    }
    if !any {
        return Err(Error::AllSensesMasked);
    }
    let mut sum = 0.0;
    for (k, &l) in logits.iter().enumerate() {
        out[k] = if is_active(mask, k) {
            let e = libm::exp(l / tau - max);
            sum += e;
            e
        } else {
            0.0
        };
    }
    for p in out.iter_mut() {
        *p /= sum;
    }
    Ok(())
}

pub fn tempered_softmax(logits: &[f64], tau: f64) -> SenseDistribution {
    let mut probs = vec![0.0; logits.len()];
    if !logits.is_empty() {
        masked_softmax_into(logits, tau, None, &mut probs).expect("unmasked");
    }
    SenseDistribution { probs }
}

/// `c̄ᵀ s_k` for every sense; `senses` is a row-major K×d block.
pub fn sense_logits(context_mean: &[f64], senses: &[f64]) -> Vec<f64> {
    let d = context_mean.len();
    senses.chunks_exact(d).map(|s| dot(context_mean, s)).collect()
}

/// Soft attention: softmax over `c̄ᵀ s_k` for the unmasked senses.
pub fn soft_attention(
    context_mean: &[f64],
    senses: &[f64],
    mask: Option<&[bool]>,
) -> Result<SenseDistribution> {
    let logits = sense_logits(context_mean, senses);
    let mut probs = vec![0.0; logits.len()];
    masked_softmax_into(&logits, 1.0, mask, &mut probs)?;
    Ok(SenseDistribution { probs })
}

/// Attention weights for fixed logits and pre-drawn noise:
/// `softmax((logit_k + beta * g_k) / tau)`. SASI ignores the noise.
pub fn attention_from_noise_into(
    logits: &[f64],
    noise: &[f64],
    mode: &AttentionMode,
    mask: Option<&[bool]>,
    scratch: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    if !mode.is_noisy() {
        return masked_softmax_into(logits, 1.0, mask, out);
    }
    let beta = mode.effective_beta();
    for k in 0..logits.len() {
        scratch[k] = logits[k] + beta * noise[k];
    }
    masked_softmax_into(&scratch[..logits.len()], mode.temperature, mask, out)
}

/// Draws one Gumbel sample per unmasked sense (masked senses get 0 and
/// consume no randomness).
pub fn draw_noise_into<R: Rng + ?Sized>(mask: Option<&[bool]>, rng: &mut R, out: &mut [f64]) {
    for (k, g) in out.iter_mut().enumerate() {
        *g = if is_active(mask, k) { gumbel_noise(rng) } else { 0.0 };
    }
}

/// Scaled Gumbel-softmax attention with fresh noise. SASI draws nothing and
/// returns the soft attention.
pub fn scaled_gumbel_attention<R: Rng + ?Sized>(
    context_mean: &[f64],
    senses: &[f64],
    mode: &AttentionMode,
    mask: Option<&[bool]>,
    rng: &mut R,
) -> Result<SenseDistribution> {
    mode.validate()?;
    let logits = sense_logits(context_mean, senses);
    let k = logits.len();
    let mut noise = vec![0.0; k];
    if mode.is_noisy() {
        draw_noise_into(mask, rng, &mut noise);
    }
    let mut scratch = vec![0.0; k];
    let mut probs = vec![0.0; k];
    attention_from_noise_into(&logits, &noise, mode, mask, &mut scratch, &mut probs)?;
    Ok(SenseDistribution { probs })
}

/// Noiseless argmax of `c̄ᵀ s_k` over unmasked senses, lowest index on ties.
pub fn hard_select(context_mean: &[f64], senses: &[f64], mask: Option<&[bool]>) -> Result<usize> {
    let logits = sense_logits(context_mean, senses);
    let mut best: Option<(usize, f64)> = None;
    for (k, &l) in logits.iter().enumerate() {
        if !is_active(mask, k) {
            continue;
        }
        match best {
            Some((_, b)) if l <= b => {}
            _ => best = Some((k, l)),
        }
    }
    best.map(|(k, _)| k).ok_or(Error::AllSensesMasked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_distribution(d: &SenseDistribution, mask: Option<&[bool]>) {
        let s: f64 = d.probs.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        for (k, &p) in d.probs.iter().enumerate() {
            assert!(p >= 0.0);
            if !is_active(mask, k) {
                assert_eq!(p, 0.0);
            }
        }
    }

    #[test]
    fn gumbel_examples() {
        assert!(gumbel_from_uniform(1.0 / core::f64::consts::E).abs() < 1e-15);
        let g = gumbel_from_uniform(0.0);
        assert!(g.is_finite());
        assert_eq!(g, -libm::log(-libm::log(UNIFORM_EPS)));
        assert!(gumbel_from_uniform(1.0).is_finite());
    }

    #[test]
    fn gumbel_mean_is_euler_mascheroni() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let mean = (0..n).map(|_| gumbel_noise(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.577_215_664_9).abs() < 0.01, "{mean}");
    }

    #[test]
    fn tempered_softmax_examples() {
        let d = tempered_softmax(&[0.3, 0.3, 0.3], 0.7);
        for p in &d.probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let d = tempered_softmax(&[10.0, 0.0], 0.01);
        assert!((d.probs[0] - 1.0).abs() < 1e-9 && d.probs[1] < 1e-9);
        // 50-digit reference values for logits [1.0, 0.5, -0.2], tau 0.5
        let d = tempered_softmax(&[1.0, 0.5, -0.2], 0.5);
        let expected = [
            0.685_590_145_572_440_6,
            0.252_214_519_625_837_24,
            0.062_195_334_801_722_19,
        ];
        for (p, e) in d.probs.iter().zip(expected) {
            assert!((p - e).abs() < 1e-15, "{p} vs {e}");
        }
    }

    fn brute_softmax_dots(cbar: &[f64], senses: &[Vec<f64>], mask: &[bool]) -> Vec<f64> {
        let mut e = Vec::new();
        for (k, s) in senses.iter().enumerate() {
            let mut d = 0.0;
            for i in 0..cbar.len() {
                d += cbar[i] * s[i];
            }
            e.push(if mask[k] { d.exp() } else { 0.0 });
        }
        let z: f64 = e.iter().sum();
        e.iter().map(|x| x / z).collect()
    }

    #[test]
    fn soft_attention_examples() {
        let cbar = [1.0, 0.0];
        let senses = [0.0, 1.0, 0.0, -2.0, 0.0, 3.0];
        let d = soft_attention(&cbar, &senses, None).unwrap();
        assert!(d.probs.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        let mask = [true, false, true];
        let d = soft_attention(&cbar, &senses, Some(&mask)).unwrap();
        assert_eq!(d.probs, vec![0.5, 0.0, 0.5]);
        let d = soft_attention(&[0.3, 0.9], &[5.0, -1.0], None).unwrap();
        assert_eq!(d.probs, vec![1.0]);
        assert_eq!(
            soft_attention(&cbar, &senses, Some(&[false; 3])),
            Err(Error::AllSensesMasked)
        );
    }

    #[test]
    fn soft_attention_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let cbar: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let rows: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let mask = [true, rng.random_bool(0.7), true];
            let flat: Vec<f64> = rows.concat();
            let d = soft_attention(&cbar, &flat, Some(&mask)).unwrap();
            let e = brute_softmax_dots(&cbar, &rows, &mask);
            for k in 0..3 {
                assert!((d.probs[k] - e[k]).abs() < 1e-12);
            }
            assert_distribution(&d, Some(&mask));
        }
    }

    #[test]
    fn scaled_gumbel_degenerates_to_soft_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mode = AttentionMode::gasi_beta(1.0, 0.0);
        for _ in 0..1000 {
            let cbar: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let senses: Vec<f64> = (0..15).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = scaled_gumbel_attention(&cbar, &senses, &mode, None, &mut rng).unwrap();
            let b = soft_attention(&cbar, &senses, None).unwrap();
            assert!(a.probs.iter().zip(&b.probs).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn single_sense_gets_all_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for mode in [AttentionMode::default(), AttentionMode::gasi(0.5), AttentionMode::sasi()] {
            let d = scaled_gumbel_attention(&[0.1, 0.2], &[3.0, 4.0], &mode, None, &mut rng).unwrap();
            assert_eq!(d.probs, vec![1.0]);
        }
    }

    #[test]
    fn scaled_gumbel_respects_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mask = [false, true, true];
        for _ in 0..100 {
            let d = scaled_gumbel_attention(
                &[0.5, -0.5],
                &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
                &AttentionMode::default(),
                Some(&mask),
                &mut rng,
            )
            .unwrap();
            assert_distribution(&d, Some(&mask));
        }
        assert!(scaled_gumbel_attention(&[0.5], &[1.0], &AttentionMode::default(), Some(&[false]), &mut rng).is_err());
    }

    #[test]
    fn low_temperature_argmax_follows_gumbel_max_law() {
        // senses chosen so that c̄ᵀ s_k equals the target logits
        let logits = [0.9, 0.1, -0.4];
        let senses = [0.9, 0.1, -0.4];
        let cbar = [1.0];
        let mode = AttentionMode::gasi(1e-3);
        let softmax = tempered_softmax(&logits, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 100_000;
        let mut hist = [0usize; 3];
        let d3: Vec<f64> = senses.to_vec();
        for _ in 0..n {
            // three one-dimensional senses
            let d = scaled_gumbel_attention(&cbar, &d3, &mode, None, &mut rng).unwrap();
            hist[d.argmax()] += 1;
        }
        for k in 0..3 {
            let f = hist[k] as f64 / n as f64;
            assert!((f - softmax.probs[k]).abs() < 0.01, "{k}: {f} vs {}", softmax.probs[k]);
        }
    }

    #[test]
    fn hard_select_examples() {
        let cbar = [1.0, 1.0];
        assert_eq!(hard_select(&cbar, &[0.0, 0.0, 1.0, 0.0, 2.0, 2.0], None), Ok(2));
        assert_eq!(hard_select(&cbar, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0], None), Ok(0));
        assert_eq!(hard_select(&cbar, &[0.0, 0.0, 1.0, 0.0, 2.0, 2.0], Some(&[true, true, false])), Ok(1));
        assert_eq!(hard_select(&cbar, &[0.0, 0.0], Some(&[false])), Err(Error::AllSensesMasked));
    }

    #[test]
    fn hard_select_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            let k = rng.random_range(1..6);
            let d = rng.random_range(1..5);
            let cbar: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let senses: Vec<f64> = (0..k * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut best = 0;
            let mut best_v = f64::MIN;
            for s in 0..k {
                let v: f64 = (0..d).map(|i| cbar[i] * senses[s * d + i]).sum();
                if v > best_v {
                    best_v = v;
                    best = s;
                }
            }
            assert_eq!(hard_select(&cbar, &senses, None).unwrap(), best);
        }
    }

    #[test]
    fn colder_temperature_is_sparser_with_shared_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let logits = [0.2, 0.0, -0.1, 0.05];
        let (mut cold, mut warm) = (0.0, 0.0);
        let n = 20_000;
        let mut noise = [0.0; 4];
        let mut scratch = [0.0; 4];
        let mut out = [0.0; 4];
        for _ in 0..n {
            draw_noise_into(None, &mut rng, &mut noise);
            attention_from_noise_into(&logits, &noise, &AttentionMode::gasi(0.1), None, &mut scratch, &mut out).unwrap();
            cold += out.iter().copied().fold(0.0, f64::max);
            attention_from_noise_into(&logits, &noise, &AttentionMode::gasi(1.0), None, &mut scratch, &mut out).unwrap();
            warm += out.iter().copied().fold(0.0, f64::max);
        }
        assert!(cold / n as f64 >= warm / n as f64);
    }

    proptest! {
        #[test]
        fn argmax_is_temperature_invariant(
            logits in proptest::collection::vec(-20.0f64..20.0, 1..8),
            t1 in 0.01f64..10.0,
            t2 in 0.01f64..10.0,
        ) {
            let a = tempered_softmax(&logits, t1);
            let b = tempered_softmax(&logits, t2);
            prop_assert_eq!(a.argmax(), b.argmax());
        }

        #[test]
        fn attention_outputs_are_distributions(
            logits in proptest::collection::vec(-30.0f64..30.0, 1..6),
            seed in any::<u64>(),
            tau in 0.05f64..2.0,
            beta in 0.0f64..2.0,
        ) {
            let k = logits.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mask: Vec<bool> = (0..k).map(|i| i == 0 || rng.random_bool(0.6)).collect();
            let mut noise = vec![0.0; k];
            draw_noise_into(Some(&mask), &mut rng, &mut noise);
            let mut scratch = vec![0.0; k];
            let mut out = vec![0.0; k];
            attention_from_noise_into(&logits, &noise, &AttentionMode::gasi_beta(tau, beta), Some(&mask), &mut scratch, &mut out).unwrap();
            assert_distribution(&SenseDistribution { probs: out }, Some(&mask));
        }
    }
}
