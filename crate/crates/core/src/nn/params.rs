use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // resolves float methods in no_std builds
use num_traits::Float;

use crate::rng::SeededRng;

/// Location of one parameter array inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    #[inline]
    pub fn get<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset..self.offset + self.len]
    }

    #[inline]
    pub fn get_mut<'a>(&self, params: &'a mut [f64]) -> &'a mut [f64] {
        &mut params[self.offset..self.offset + self.len]
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `U(−1/√fan_in, 1/√fan_in)`.
    Uniform { fan_in: usize },
    Zeros,
}

/// Declared shape and initialisation of a named parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub init: Init,
}

impl BlockInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slot(&self) -> Slot {
        Slot { offset: self.offset, len: self.len() }
    }
}

/// Ordered registry of every parameter array of a model.
///
/// Parameters and their gradients both live in flat `Vec<f64>`s of
/// [`len`](Self::len) entries; blocks address them through [`Slot`]s.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamLayout {
    blocks: Vec<BlockInfo>,
    total: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> Slot {
        let info = BlockInfo { name: name.into(), shape: shape.to_vec(), offset: self.total, init };
        let slot = info.slot();
        self.total += slot.len;
        self.blocks.push(info);
        slot
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn blocks(&self) -> &[BlockInfo] {
        &self.blocks
    }

    pub fn find(&self, name: &str) -> Option<&BlockInfo> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Draws every block in declaration order from one seeded stream.
    pub fn initialize(&self, seed: u64) -> Vec<f64> {
        let mut rng = SeededRng::new(seed);
        let mut out = vec![0.0; self.total];
        for b in &self.blocks {
            let dst = b.slot().get_mut(&mut out);
            match b.init {
                Init::Uniform { fan_in } => {
                    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                    dst.iter_mut().for_each(|v| *v = rng.uniform_range(-bound, bound));
                }
                Init::Zeros => {}
            }
        }
        out
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.total]
    }
}

/// FNV-1a accumulator fingerprinting the piecewise-constant choices of a
/// forward pass (ReLU masks, top-k selections, neighbour tables).
///
/// Two evaluations with equal fingerprints lie in the same smooth piece, so
/// finite differences between them are meaningful.
#[derive(Debug, Clone, Copy)]
pub struct PatternHasher(u64);

impl Default for PatternHasher {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl PatternHasher {
    #[inline]
    pub fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn write_usizes(&mut self, v: &[usize]) {
        for &x in v {
            self.write_u64(x as u64);
        }
    }

    /// Hashes the sign pattern `v > 0`.
    pub fn write_positive_mask(&mut self, v: &[f64]) {
        let mut word = 0u64;
        for (i, x) in v.iter().enumerate() {
            if *x > 0.0 {
                word |= 1 << (i % 64);
            }
            if i % 64 == 63 {
                self.write_u64(word);
                word = 0;
            }
        }
        self.write_u64(word);
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}
