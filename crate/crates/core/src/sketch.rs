//! The HyperLogLog register array.
//!
//! A sketch is parameterized by `(p, q)`: the top `p` bits of a 64-bit hash
//! select one of `m = 2^p` registers, and the position of the first 1-bit
//! among the following `q` bits (or `q + 1` if they are all zero) is the
//! candidate register value. Registers keep the maximum value seen, so the
//! state is independent of insertion order and two sketches of the same
//! configuration merge by taking register-wise maxima.
//!
//! Registers are stored one byte each. The binary format is
//!
//! ```text
//! "HLLS" | 0x01 | p: u8 | q: u8 | m register bytes in index order
//! ```

use crate::error::{Error, Result};

pub const MIN_P: u8 = 2;
pub const MAX_P: u8 = 26;

const MAGIC: &[u8; 4] = b"HLLS";
const FORMAT_VERSION: u8 = 0x01;
const HEADER_LEN: usize = MAGIC.len() + 3;

/// The `(p, q)` parameter pair of a sketch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SketchConfig {
    p: u8,
    q: u8,
}

impl SketchConfig {
    pub fn new(p: u8, q: u8) -> Result<Self> {
        if !(MIN_P..=MAX_P).contains(&p) || u32::from(p) + u32::from(q) > 64 {
            return Err(Error::InvalidConfig { p, q });
        }
        Ok(Self { p, q })
    }

    /// Number of index bits.
    pub fn p(&self) -> u8 {
        self.p
    }

    /// Number of value bits scanned for the first 1-bit.
    pub fn q(&self) -> u8 {
        self.q
    }

    /// Number of registers, `2^p`.
    pub fn m(&self) -> usize {
        1usize << self.p
    }

    /// Largest register value, `q + 1`.
    pub fn max_value(&self) -> u8 {
        self.q + 1
    }

    /// Number of hash bits consumed per insertion.
    pub fn hash_bits(&self) -> u32 {
        u32::from(self.p) + u32::from(self.q)
    }

    pub(crate) fn ensure_same(&self, other: &SketchConfig) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ConfigMismatch(self.p, self.q, other.p, other.q))
        }
    }

    /// Splits a hash into a zero-based register index and a register value.
    #[inline]
    pub fn index_and_value(&self, hash: u64) -> (usize, u8) {
        let index = (hash >> (64 - u32::from(self.p))) as usize;
        let value_bits = hash << self.p;
        let leading = value_bits.leading_zeros();
        let value = if leading < u32::from(self.q) {
            leading as u8 + 1
        } else {
            self.q + 1
        };
        (index, value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sketch {
    config: SketchConfig,
    registers: Vec<u8>,
}

impl Sketch {
    /// Creates a sketch with all registers at zero.
    pub fn new(config: SketchConfig) -> Self {
        Self {
            config,
            registers: vec![0; config.m()],
        }
    }

    pub fn from_registers(config: SketchConfig, registers: Vec<u8>) -> Result<Self> {
        if registers.len() != config.m() {
            return Err(Error::Format(format!(
                "expected {} registers, got {}",
                config.m(),
                registers.len()
            )));
        }
        check_register_range(&config, &registers)?;
        Ok(Self { config, registers })
    }

    pub fn config(&self) -> SketchConfig {
        self.config
    }

    pub fn registers(&self) -> &[u8] {
        &self.registers
    }

    pub fn register(&self, index: usize) -> u8 {
        self.registers[index]
    }

    pub fn is_empty(&self) -> bool {
        self.registers.iter().all(|&r| r == 0)
    }

    /// Adds one hashed element.
    #[inline]
    pub fn insert_hash(&mut self, hash: u64) {
        let (index, value) = self.config.index_and_value(hash);
        let register = &mut self.registers[index];
        if value > *register {
            *register = value;
        }
    }

    /// Register-wise maximum of two sketches; represents the union of both sets.
    pub fn merge(&self, other: &Sketch) -> Result<Sketch> {
        self.config.ensure_same(&other.config)?;
        let registers = self
            .registers
            .iter()
            .zip(&other.registers)
            .map(|(&a, &b)| a.max(b))
            .collect();
        Ok(Sketch {
            config: self.config,
            registers,
        })
    }

    /// In-place variant of [`Sketch::merge`].
    pub fn merge_from(&mut self, other: &Sketch) -> Result<()> {
        self.config.ensure_same(&other.config)?;
        for (a, &b) in self.registers.iter_mut().zip(&other.registers) {
            *a = (*a).max(b);
        }
        Ok(())
    }

    pub fn histogram(&self) -> RegisterHistogram {
        let mut counts = vec![0u32; usize::from(self.config.q) + 2];
        for &r in &self.registers {
            counts[usize::from(r)] += 1;
        }
        RegisterHistogram {
            config: self.config,
            counts,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.registers.len());
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.push(self.config.p);
        out.push(self.config.q);
        out.extend_from_slice(&self.registers);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Sketch> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "{} bytes is shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", bytes[4])));
        }
        let (p, q) = (bytes[5], bytes[6]);
        let config =
            SketchConfig::new(p, q).map_err(|e| Error::Format(format!("invalid header: {e}")))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != config.m() {
            return Err(Error::Format(format!(
                "expected {} register bytes, found {}",
                config.m(),
                payload.len()
            )));
        }
        check_register_range(&config, payload)?;
        Ok(Sketch {
            config,
            registers: payload.to_vec(),
        })
    }
}

fn check_register_range(config: &SketchConfig, registers: &[u8]) -> Result<()> {
    let max = config.max_value();
    match registers.iter().position(|&r| r > max) {
        Some(index) => Err(Error::Range {
            index,
            value: registers[index],
            max,
        }),
        None => Ok(()),
    }
}

/// Multiplicities `C_0..C_{q+1}` of the register values. Sufficient
/// statistic for every single-sketch estimator in this crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterHistogram {
    config: SketchConfig,
    counts: Vec<u32>,
}

impl RegisterHistogram {
    /// Builds a histogram from explicit counts; `counts` must have `q + 2`
    /// entries summing to `m`.
    pub fn from_counts(config: SketchConfig, counts: Vec<u32>) -> Result<Self> {
        let expected_len = usize::from(config.q) + 2;
        if counts.len() != expected_len {
            return Err(Error::InvalidArgument(format!(
                "histogram needs {expected_len} counts, got {}",
                counts.len()
            )));
        }
        let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
        if total != config.m() as u64 {
            return Err(Error::InvalidArgument(format!(
                "histogram counts sum to {total}, expected m = {}",
                config.m()
            )));
        }
        Ok(Self { config, counts })
    }

    pub fn config(&self) -> SketchConfig {
        self.config
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn count(&self, value: usize) -> u32 {
        self.counts[value]
    }

    pub fn m(&self) -> usize {
        self.config.m()
    }

    pub fn q(&self) -> usize {
        usize::from(self.config.q)
    }

    /// `C_0`, the number of untouched registers.
    pub fn zeros(&self) -> u32 {
        self.counts[0]
    }

    /// `C_{q+1}`, the number of saturated registers.
    pub fn saturated(&self) -> u32 {
        self.counts[self.q() + 1]
    }
}
