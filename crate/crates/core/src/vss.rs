//! (2,2) visual secret sharing that binds a clip feature to a watermark.
//!
//! The binarized feature selects one of two complementary 2x2 patterns per
//! watermark bit (the master share). The ownership share repeats the master
//! block where the watermark is white and complements it where it is black.
//! Stacking is the transparency model: a position is white only if it is
//! white in both shares, so a block sums to 2 for a white bit and 0 for a
//! black one.

use crate::bits::BitMatrix;
use crate::error::{Error, Result};
use crate::feature::FeatureVector;

pub const WATERMARK_SIDE: usize = 40;
pub const SHARE_SIDE: usize = 2 * WATERMARK_SIDE;
pub const WATERMARK_BITS: usize = WATERMARK_SIDE * WATERMARK_SIDE;

/// A 40x40 binary watermark, `true` = white.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Watermark(BitMatrix);

impl Watermark {
    pub fn new(bits: BitMatrix) -> Result<Self> {
        if bits.shape() != (WATERMARK_SIDE, WATERMARK_SIDE) {
            return Err(Error::Shape(format!(
                "watermark must be {WATERMARK_SIDE}x{WATERMARK_SIDE}, got {}x{}",
                bits.cols(),
                bits.rows()
            )));
        }
        Ok(Watermark(bits))
    }

    pub fn bits(&self) -> &BitMatrix {
        &self.0
    }

    pub fn complement(&self) -> Self {
        Watermark(self.0.complement())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShareKind {
    Master,
    Ownership,
}

/// An 80x80 share made of diagonal / anti-diagonal 2x2 blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Share {
    bits: BitMatrix,
    kind: ShareKind,
}

/// Which of the two legal patterns a block holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    /// `[[1,0],[0,1]]`
    Diagonal,
    /// `[[0,1],[1,0]]`
    AntiDiagonal,
}

impl Block {
    fn complement(self) -> Self {
        match self {
            Block::Diagonal => Block::AntiDiagonal,
            Block::AntiDiagonal => Block::Diagonal,
        }
    }

    fn write(self, m: &mut BitMatrix, r: usize, c: usize) {
        let diag = self == Block::Diagonal;
        m.set(2 * r, 2 * c, diag);
        m.set(2 * r, 2 * c + 1, !diag);
        m.set(2 * r + 1, 2 * c, !diag);
        m.set(2 * r + 1, 2 * c + 1, diag);
    }
}

impl Share {
    /// Validates the block invariant.
    pub fn new(bits: BitMatrix, kind: ShareKind) -> Result<Self> {
        if bits.shape() != (SHARE_SIDE, SHARE_SIDE) {
            return Err(Error::Shape(format!(
                "share must be {SHARE_SIDE}x{SHARE_SIDE}, got {}x{}",
                bits.cols(),
                bits.rows()
            )));
        }
        let share = Share { bits, kind };
        for r in 0..WATERMARK_SIDE {
            for c in 0..WATERMARK_SIDE {
                share.block(r, c)?;
            }
        }
        Ok(share)
    }

    pub fn bits(&self) -> &BitMatrix {
        &self.bits
    }

    pub fn kind(&self) -> ShareKind {
        self.kind
    }

    /// Pattern of block `(r, c)`, `0 <= r, c < 40`.
    pub fn block(&self, r: usize, c: usize) -> Result<Block> {
        let b = [
            self.bits.get(2 * r, 2 * c),
            self.bits.get(2 * r, 2 * c + 1),
            self.bits.get(2 * r + 1, 2 * c),
            self.bits.get(2 * r + 1, 2 * c + 1),
        ];
        match b {
            [true, false, false, true] => Ok(Block::Diagonal),
            [false, true, true, false] => Ok(Block::AntiDiagonal),
            _ => Err(Error::MalformedShare { row: r, col: c }),
        }
    }
}

/// Result of stacking two shares; not constrained to the block patterns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackResult(pub BitMatrix);

/// Thresholds a feature at its lower median: bit is 1 iff strictly greater.
pub fn binarize_feature(fv: &FeatureVector) -> Result<Vec<bool>> {
    let values = &fv.values;
    if values.is_empty() || fv.degenerate || values.iter().all(|&v| v == values[0]) {
        return Err(Error::NonInformativeFeature);
    }
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[(sorted.len() - 1) / 2];
    Ok(values.iter().map(|&v| v > median).collect())
}

/// Row-major fill of a 1600-bit vector into a 40x40 matrix.
pub fn rearrange(bits: &[bool]) -> Result<BitMatrix> {
    if bits.len() != WATERMARK_BITS {
        return Err(Error::LengthMismatch {
            expected: WATERMARK_BITS,
            got: bits.len(),
        });
    }
    BitMatrix::from_bits(WATERMARK_SIDE, WATERMARK_SIDE, bits.to_vec())
}

pub fn build_master_share(v: &BitMatrix) -> Result<Share> {
    if v.shape() != (WATERMARK_SIDE, WATERMARK_SIDE) {
        return Err(Error::Shape(format!("feature matrix {}x{}", v.rows(), v.cols())));
    }
    let mut bits = BitMatrix::zeros(SHARE_SIDE, SHARE_SIDE);
    for r in 0..WATERMARK_SIDE {
        for c in 0..WATERMARK_SIDE {
            let block = if v.get(r, c) {
                Block::Diagonal
            } else {
                Block::AntiDiagonal
            };
            block.write(&mut bits, r, c);
        }
    }
    Ok(Share {
        bits,
        kind: ShareKind::Master,
    })
}

pub fn build_ownership_share(master: &Share, wm: &Watermark) -> Result<Share> {
    let mut bits = BitMatrix::zeros(SHARE_SIDE, SHARE_SIDE);
    for r in 0..WATERMARK_SIDE {
        for c in 0..WATERMARK_SIDE {
            let m = master.block(r, c)?;
            let o = if wm.bits().get(r, c) { m } else { m.complement() };
            o.write(&mut bits, r, c);
        }
    }
    Ok(Share {
        bits,
        kind: ShareKind::Ownership,
    })
}

/// Master share straight from a feature vector.
pub fn master_share_from_feature(fv: &FeatureVector) -> Result<Share> {
    build_master_share(&rearrange(&binarize_feature(fv)?)?)
}

pub fn stack_shares(master: &Share, ownership: &Share) -> StackResult {
    let a = master.bits();
    let b = ownership.bits();
    StackResult(BitMatrix::from_fn(SHARE_SIDE, SHARE_SIDE, |r, c| {
        a.get(r, c) && b.get(r, c)
    }))
}

/// White where a 2x2 block of the stack holds at least two white positions.
pub fn recover_watermark(stack: &StackResult) -> Result<Watermark> {
    let s = &stack.0;
    if s.shape() != (SHARE_SIDE, SHARE_SIDE) {
        return Err(Error::Shape(format!("stack result {}x{}", s.rows(), s.cols())));
    }
    let bits = BitMatrix::from_fn(WATERMARK_SIDE, WATERMARK_SIDE, |r, c| {
        let sum = s.get(2 * r, 2 * c) as u8
            + s.get(2 * r, 2 * c + 1) as u8
            + s.get(2 * r + 1, 2 * c) as u8
            + s.get(2 * r + 1, 2 * c + 1) as u8;
        sum >= 2
    });
    Watermark::new(bits)
}

/// Fraction of differing bits.
pub fn ber(a: &Watermark, b: &Watermark) -> f64 {
    let diff = a
        .bits()
        .bits()
        .iter()
        .zip(b.bits().bits())
        .filter(|(x, y)| x != y)
        .count();
    diff as f64 / WATERMARK_BITS as f64
}
