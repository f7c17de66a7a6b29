use std::io::{self, Write};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub accepted: bool,
    /// Log acceptance probability; `0` on steps that skip the test.
    pub log_acc: f64,
    pub proposal_norm: f64,
}

/// Per-step diagnostics of one sampler run, in the order `t = T..1`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SamplerTrace {
    pub steps: Vec<StepRecord>,
}

impl SamplerTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().filter(|s| s.accepted).count() as f64 / self.steps.len() as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,accepted,log_acc,proposal_norm")?;
        for s in &self.steps {
            writeln!(
                w,
                "{},{},{:.17e},{:.17e}",
                s.t, s.accepted as u8, s.log_acc, s.proposal_norm
            )?;
        }
        Ok(())
    }
}
