//! Common interface of trained feature models.

use crate::error::Result;

/// How a model consumes a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Two frames `x`, `y` with separate filter banks.
    Pair,
    /// One concatenated frame sequence `X` with a single tied bank.
    Sequence,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Pair => "pair",
            Mode::Sequence => "sequence",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pair" => Some(Mode::Pair),
            "sequence" => Some(Mode::Sequence),
            _ => None,
        }
    }
}

/// Maps a whitened input vector to `units()` hidden activations.
///
/// Pair-mode models take `[x, y]` concatenated.
pub trait FeatureEncoder {
    fn input_dim(&self) -> usize;
    fn units(&self) -> usize;
    fn encode_into(&self, input: &[f64], out: &mut [f64]) -> Result<()>;

    fn encode(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.units()];
        self.encode_into(input, &mut out)?;
        Ok(out)
    }
}
