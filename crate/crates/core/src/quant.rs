//! Linear fixed-point quantization of real-valued term weights.

use thiserror::Error;

use crate::types::{SparseVector, TermId, VectorError, Weight};

pub const MIN_QUANT_BITS: u8 = 4;
pub const MAX_QUANT_BITS: u8 = 16;
pub const DEFAULT_QUANT_BITS: u8 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantError {
    #[error("quantization width {0} outside [{MIN_QUANT_BITS}, {MAX_QUANT_BITS}]")]
    BadWidth(u8),
    #[error("weight {weight} for term {term} is negative or not finite")]
    BadWeight { term: TermId, weight: f32 },
    #[error("quantization scale {0} must be positive and finite")]
    BadScale(f32),
    #[error(transparent)]
    Vector(#[from] VectorError),
}

/// `q = round(w * scale)` with `scale = (2^bits - 1) / max_weight`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantization {
    bits: u8,
    scale: f32,
}

impl Quantization {
    pub fn new(bits: u8, scale: f32) -> Result<Self, QuantError> {
        if !(MIN_QUANT_BITS..=MAX_QUANT_BITS).contains(&bits) {
            return Err(QuantError::BadWidth(bits));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(QuantError::BadScale(scale));
        }
        Ok(Self { bits, scale })
    }

    /// Scale chosen so the largest corpus weight maps to the top level.
    pub fn fit(bits: u8, max_weight: f32) -> Result<Self, QuantError> {
        if !(MIN_QUANT_BITS..=MAX_QUANT_BITS).contains(&bits) {
            return Err(QuantError::BadWidth(bits));
        }
        let levels = ((1u32 << bits) - 1) as f64;
        let scale = if max_weight > 0.0 && max_weight.is_finite() { (levels / max_weight as f64) as f32 } else { 1.0 };
        Self::new(bits, scale)
    }

    /// Identity mapping for inputs that are already integers.
    pub fn identity(bits: u8) -> Result<Self, QuantError> {
        Self::new(bits, 1.0)
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn max_level(&self) -> Weight {
        (1u32 << self.bits) - 1
    }

    /// Bytes needed per stored weight.
    pub fn weight_bytes(&self) -> usize {
        if self.bits <= 8 {
            1
        } else {
            2
        }
    }

    pub fn quantize(&self, term: TermId, weight: f32) -> Result<Weight, QuantError> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(QuantError::BadWeight { term, weight });
        }
        let q = (weight as f64 * self.scale as f64).round();
        Ok((q as u64).min(self.max_level() as u64) as Weight)
    }

    /// Quantizes a raw vector; entries that round to zero are dropped.
    pub fn quantize_vector(&self, raw: &[(TermId, f32)]) -> Result<SparseVector, QuantError> {
        let entries = raw.iter().map(|&(t, w)| self.quantize(t, w).map(|q| (t, q))).collect::<Result<Vec<_>, _>>()?;
        Ok(SparseVector::new(entries)?)
    }

    /// Inverse map used only for display.
    pub fn dequantize_score(&self, score: u64) -> f64 {
        score as f64 / self.scale as f64
    }
}
