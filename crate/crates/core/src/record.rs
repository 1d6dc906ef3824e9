use std::fmt;

use crate::error::{Error, Result};

/// Readout outcomes of one run, in measurement order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MeasurementRecord {
    pub run_index: usize,
    bits: Vec<u8>,
}

impl MeasurementRecord {
    pub fn new(run_index: usize, bits: Vec<u8>) -> Result<Self> {
        if let Some(p) = bits.iter().position(|&b| b > 1) {
            return Err(Error::InvalidParameter(format!("bit {p} is {}, expected 0 or 1", bits[p])));
        }
        Ok(Self { run_index, bits })
    }

    pub fn parse(run_index: usize, s: &str) -> Result<Self> {
        let bits = s
            .bytes()
            .enumerate()
            .map(|(i, c)| match c {
                b'0' => Ok(0),
                b'1' => Ok(1),
                other => Err(Error::InvalidParameter(format!(
                    "character {:?} at column {} is not '0' or '1'",
                    other as char,
                    i + 1
                ))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self { run_index, bits })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn hamming_weight(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    /// Index of the string with the first readout as most significant bit.
    /// Only meaningful for strings of at most 63 bits.
    pub fn index(&self) -> Option<usize> {
        (self.bits.len() <= 63).then(|| bits_to_index(&self.bits))
    }
}

impl fmt::Display for MeasurementRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b == 0 { "0" } else { "1" })?;
        }
        Ok(())
    }
}

pub fn bits_to_index(bits: &[u8]) -> usize {
    bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)
}

pub fn index_to_bits(index: usize, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((index >> (n - 1 - i)) & 1) as u8).collect()
}

pub fn index_to_string(index: usize, n: usize) -> String {
    index_to_bits(index, n).iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
}
