//! Model parameters, sense masks, and the storage trait the trainer writes
//! through.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};

/// Sense tensor `S` (|V|×K×d) and context matrix `C` (|V|×d), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    vocab_size: usize,
    senses: usize,
    dim: usize,
    sense: Vec<f64>,
    context: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(vocab_size: usize, senses: usize, dim: usize) -> Self {
        ModelParams {
            vocab_size,
            senses,
            dim,
            sense: vec![0.0; vocab_size * senses * dim],
            context: vec![0.0; vocab_size * dim],
        }
    }

    /// Every entry i.i.d. `Uniform(-0.5/d, 0.5/d)`; `S` is drawn before `C`.
    pub fn init<R: Rng + ?Sized>(vocab_size: usize, senses: usize, dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(vocab_size, senses, dim);
        let half = 0.5 / dim as f64;
        for x in p.sense.iter_mut().chain(p.context.iter_mut()) {
            *x = (rng.random::<f64>() * 2.0 - 1.0) * half;
        }
        p
    }

    pub fn from_parts(
        vocab_size: usize,
        senses: usize,
        dim: usize,
        sense: Vec<f64>,
        context: Vec<f64>,
    ) -> Result<Self> {
        if sense.len() != vocab_size * senses * dim || context.len() != vocab_size * dim {
            return Err(Error::Shape(alloc::format!(
                "expected {} sense and {} context entries, got {} and {}",
                vocab_size * senses * dim,
                vocab_size * dim,
                sense.len(),
                context.len()
            )));
        }
        Ok(ModelParams {
            vocab_size,
            senses,
            dim,
            sense,
            context,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn senses(&self) -> usize {
        self.senses
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sense_data(&self) -> &[f64] {
        &self.sense
    }

    pub fn context_data(&self) -> &[f64] {
        &self.context
    }

    pub fn sense_data_mut(&mut self) -> &mut [f64] {
        &mut self.sense
    }

    pub fn context_data_mut(&mut self) -> &mut [f64] {
        &mut self.context
    }

    /// The K×d block of all senses of `word`.
    pub fn sense_block(&self, word: u32) -> &[f64] {
        let n = self.senses * self.dim;
        let start = word as usize * n;
        &self.sense[start..start + n]
    }

    pub fn sense_vec(&self, word: u32, sense: usize) -> &[f64] {
        let start = (word as usize * self.senses + sense) * self.dim;
        &self.sense[start..start + self.dim]
    }

    pub fn sense_vec_mut(&mut self, word: u32, sense: usize) -> &mut [f64] {
        let start = (word as usize * self.senses + sense) * self.dim;
        &mut self.sense[start..start + self.dim]
    }

    pub fn context_vec(&self, word: u32) -> &[f64] {
        let start = word as usize * self.dim;
        &self.context[start..start + self.dim]
    }

    pub fn context_vec_mut(&mut self, word: u32) -> &mut [f64] {
        let start = word as usize * self.dim;
        &mut self.context[start..start + self.dim]
    }

    /// First non-finite entry, reported as (matrix, word, sense).
    pub fn find_non_finite(&self) -> Option<Error> {
        if let Some(i) = self.sense.iter().position(|x| !x.is_finite()) {
            let row = i / self.dim;
            return Some(Error::NonFinite {
                matrix: "sense",
                word: (row / self.senses) as u32,
                sense: Some((row % self.senses) as u32),
            });
        }
        if let Some(i) = self.context.iter().position(|x| !x.is_finite()) {
            return Some(Error::NonFinite {
                matrix: "context",
                word: (i / self.dim) as u32,
                sense: None,
            });
        }
        None
    }
}

/// Read and additive-update access to parameter rows.
///
/// Implemented by [`ModelParams`] for single-threaded training and by shared
/// lock-free stores for multi-worker training.
pub trait ParamStore {
    fn vocab_size(&self) -> usize;
    fn senses(&self) -> usize;
    fn dim(&self) -> usize;
    fn read_sense(&self, word: u32, sense: usize, out: &mut [f64]);
    fn read_context(&self, word: u32, out: &mut [f64]);
    /// `S[word, sense] += scale * delta`
    fn add_sense(&mut self, word: u32, sense: usize, scale: f64, delta: &[f64]);
    /// `C[word] += scale * delta`
    fn add_context(&mut self, word: u32, scale: f64, delta: &[f64]);
}

impl ParamStore for ModelParams {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn senses(&self) -> usize {
        self.senses
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn read_sense(&self, word: u32, sense: usize, out: &mut [f64]) {
        out.copy_from_slice(self.sense_vec(word, sense));
    }

    fn read_context(&self, word: u32, out: &mut [f64]) {
        out.copy_from_slice(self.context_vec(word));
    }

    fn add_sense(&mut self, word: u32, sense: usize, scale: f64, delta: &[f64]) {
        crate::math::axpy(scale, delta, self.sense_vec_mut(word, sense));
    }

    fn add_context(&mut self, word: u32, scale: f64, delta: &[f64]) {
        crate::math::axpy(scale, delta, self.context_vec_mut(word));
    }
}

/// Per-word boolean vector of surviving senses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SenseMask {
    senses: usize,
    active: Vec<bool>,
}

impl SenseMask {
    pub fn all_active(vocab_size: usize, senses: usize) -> Self {
        SenseMask {
            senses,
            active: vec![true; vocab_size * senses],
        }
    }

    /// Builds a mask from flat row-major flags, rejecting words with no
    /// active sense.
    pub fn from_flags(senses: usize, active: Vec<bool>) -> Result<Self> {
        if senses == 0 || !active.len().is_multiple_of(senses) {
            return Err(Error::InvalidMask(alloc::format!(
                "{} flags do not split into rows of {}",
                active.len(),
                senses
            )));
        }
        let mask = SenseMask { senses, active };
        for w in 0..mask.vocab_size() {
            if mask.active_count(w as u32) == 0 {
                return Err(Error::InvalidMask(alloc::format!("word {w} has no active sense")));
            }
        }
        Ok(mask)
    }

    pub fn vocab_size(&self) -> usize {
        self.active.len() / self.senses
    }

    pub fn senses(&self) -> usize {
        self.senses
    }

    pub fn row(&self, word: u32) -> &[bool] {
        let s = word as usize * self.senses;
        &self.active[s..s + self.senses]
    }

    pub fn set_row(&mut self, word: u32, row: &[bool]) -> Result<()> {
        if row.len() != self.senses || !row.iter().any(|&b| b) {
            return Err(Error::InvalidMask(alloc::format!("bad row for word {word}")));
        }
        let s = word as usize * self.senses;
        self.active[s..s + self.senses].copy_from_slice(row);
        Ok(())
    }

    pub fn is_active(&self, word: u32, sense: usize) -> bool {
        self.active[word as usize * self.senses + sense]
    }

    pub fn active_count(&self, word: u32) -> usize {
        self.row(word).iter().filter(|&&b| b).count()
    }

    pub fn total_active(&self) -> usize {
        self.active.iter().filter(|&&b| b).count()
    }

    pub fn flags(&self) -> &[bool] {
        &self.active
    }

    pub fn check_shape(&self, params: &ModelParams) -> Result<()> {
        if self.senses != params.senses() || self.vocab_size() != params.vocab_size() {
            return Err(Error::InvalidMask(alloc::format!(
                "mask is {}x{} but model is {}x{}",
                self.vocab_size(),
                self.senses,
                params.vocab_size(),
                params.senses()
            )));
        }
        Ok(())
    }
}

/// Row of `mask` for `word`, or `None` for an absent mask.
pub(crate) fn mask_row(mask: Option<&SenseMask>, word: u32) -> Option<&[bool]> {
    mask.map(|m| m.row(word))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_is_bounded_and_deterministic() {
        let a = ModelParams::init(20, 3, 300, &mut ChaCha8Rng::seed_from_u64(1));
        let b = ModelParams::init(20, 3, 300, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        let bound = 1.0 / 600.0;
        assert!(a
            .sense_data()
            .iter()
            .chain(a.context_data())
            .all(|x| x.abs() < bound));
    }

    #[test]
    fn init_has_zero_mean() {
        let p = ModelParams::init(1000, 4, 250, &mut ChaCha8Rng::seed_from_u64(9));
        let all: Vec<f64> = p.sense_data().iter().chain(p.context_data()).copied().collect();
        let n = all.len() as f64;
        assert!(n >= 1e6);
        let mean = all.iter().sum::<f64>() / n;
        // Uniform(-a, a) has sd a/sqrt(3)
        let sigma = (0.5 / 250.0) / 3f64.sqrt();
        assert!(mean.abs() < 3.0 * sigma / n.sqrt(), "{mean}");
    }

    #[test]
    fn mask_validation() {
        assert!(SenseMask::from_flags(2, vec![true, false, false, false]).is_err());
        let m = SenseMask::from_flags(2, vec![true, false, false, true]).unwrap();
        assert_eq!(m.total_active(), 2);
        assert_eq!(m.row(1), &[false, true]);
    }

    #[test]
    fn non_finite_is_located() {
        let mut p = ModelParams::zeros(3, 2, 2);
        p.sense_vec_mut(2, 1)[0] = f64::NAN;
        assert_eq!(
            p.find_non_finite(),
            Some(Error::NonFinite { matrix: "sense", word: 2, sense: Some(1) })
        );
    }
}
