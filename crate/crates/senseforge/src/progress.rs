use std::io::Write;

use senseforge_core::trainer::{BatchRecord, ProgressSink};

/// Writes `epoch,batch,lr,mean_loss` CSV rows every `every` batches and
/// keeps the epoch means.
pub struct LossLog<W: Write> {
    out: Option<W>,
    every: usize,
    pub epoch_means: Vec<f64>,
    error: Option<std::io::Error>,
}

impl<W: Write> LossLog<W> {
    pub fn new(out: Option<W>, every: usize) -> Self {
        let mut log = LossLog {
            out,
            every: every.max(1),
            epoch_means: Vec::new(),
            error: None,
        };
        log.write(|w| writeln!(w, "epoch,batch,lr,mean_loss"));
        log
    }

    fn write<F: FnOnce(&mut W) -> std::io::Result<()>>(&mut self, f: F) {
        if self.error.is_some() {
            return;
        }
        if let Some(w) = self.out.as_mut() {
            if let Err(e) = f(w) {
                self.error = Some(e);
            }
        }
    }

    /// Flushes and reports the first write failure, if any.
    pub fn finish(mut self) -> std::io::Result<Vec<f64>> {
        self.write(|w| w.flush());
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.epoch_means),
        }
    }
}

impl<W: Write> ProgressSink for LossLog<W> {
    fn batch(&mut self, r: &BatchRecord) {
        if r.batch.is_multiple_of(self.every) {
            self.write(|w| writeln!(w, "{},{},{:e},{}", r.epoch + 1, r.batch, r.lr, r.mean_loss));
        }
    }

    fn epoch_end(&mut self, epoch: usize, mean_loss: f64) {
        self.epoch_means.push(mean_loss);
        eprintln!("epoch {}: mean loss {mean_loss:.6}", epoch + 1);
    }
}
