//! Sequency-ordered Walsh-Hadamard analysis and synthesis of complex blocks.
//!
//! Sequency indices are 0-based: coefficient 0 is the block mean direction
//! (the all-ones row) and row `i` of the basis has exactly `i` sign changes.
//! The sequency row `i` is the natural-order Hadamard row
//! `bitrev(gray(i))`, where `H[j][n] = (-1)^popcount(j & n)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Result, WdpdError};
use crate::signal::IqWaveform;

pub const MAX_ORDER: usize = 4096;

/// Scaling convention of the transform pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// 1/sqrt(N) in both directions; the transform is an isometry.
    #[default]
    Orthonormal,
    /// Unscaled forward sum, 1/N on the inverse.
    Analysis,
}

impl Normalization {
    fn forward_scale(self, order: usize) -> f64 {
        match self {
            Normalization::Orthonormal => 1.0 / (order as f64).sqrt(),
            Normalization::Analysis => 1.0,
        }
    }

    fn inverse_scale(self, order: usize) -> f64 {
        match self {
            Normalization::Orthonormal => 1.0 / (order as f64).sqrt(),
            Normalization::Analysis => 1.0 / order as f64,
        }
    }
}

pub fn validate_order(order: usize) -> Result<()> {
    if order.is_power_of_two() && (2..=MAX_ORDER).contains(&order) {
        Ok(())
    } else {
        Err(WdpdError::InvalidOrder(order))
    }
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    x.reverse_bits() >> (usize::BITS - bits)
}

/// Natural (Hadamard) index holding sequency `s` for a block of `2^bits`.
fn natural_index(s: usize, bits: u32) -> usize {
    bit_reverse(s ^ (s >> 1), bits)
}

/// Dense sequency-ordered ±1 basis.
#[derive(Debug, Clone, PartialEq)]
pub struct WalshBasis {
    order: usize,
    rows: Vec<i8>,
    normalization: Normalization,
}

impl WalshBasis {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.rows[i * self.order..(i + 1) * self.order]
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }
}

/// Orthonormal sequency basis of the given order.
pub fn sequency_basis(order: usize) -> Result<WalshBasis> {
    validate_order(order)?;
    let bits = order.trailing_zeros();
    let mut rows = Vec::with_capacity(order * order);
    for s in 0..order {
        let j = natural_index(s, bits);
        rows.extend((0..order).map(|n| if (j & n).count_ones().is_multiple_of(2) { 1i8 } else { -1 }));
    }
    Ok(WalshBasis {
        order,
        rows,
        normalization: Normalization::Orthonormal,
    })
}

/// Sequency spectrum of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct WalshBlock(pub Vec<Complex64>);

impl WalshBlock {
    pub fn coeffs(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Dense matrix-vector transform through an explicit basis.
pub fn forward(block: &[Complex64], basis: &WalshBasis) -> Result<WalshBlock> {
    dim_check(basis.order, block.len())?;
    let scale = basis.normalization.forward_scale(basis.order);
    let coeffs = (0..basis.order)
        .map(|i| {
            let acc = basis
                .row(i)
                .iter()
                .zip(block)
                .fold(Complex64::new(0.0, 0.0), |acc, (&w, &x)| acc + x * f64::from(w));
            acc * scale
        })
        .collect();
    Ok(WalshBlock(coeffs))
}

pub fn inverse(coeffs: &WalshBlock, basis: &WalshBasis) -> Result<Vec<Complex64>> {
    dim_check(basis.order, coeffs.len())?;
    let scale = basis.normalization.inverse_scale(basis.order);
    let mut out = vec![Complex64::new(0.0, 0.0); basis.order];
    for (i, &c) in coeffs.coeffs().iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(basis.row(i)) {
            *o += c * f64::from(w);
        }
    }
    out.iter_mut().for_each(|o| *o *= scale);
    Ok(out)
}

/// In-place natural-order butterflies.
fn fwht_natural(data: &mut [Complex64]) {
    let n = data.len();
    let mut h = 1;
    while h < n {
        for chunk in data.chunks_exact_mut(2 * h) {
            let (lo, hi) = chunk.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// O(N log N) forward transform, identical to [`forward`] with a sequency basis.
pub fn fast_forward(block: &[Complex64], normalization: Normalization) -> Result<WalshBlock> {
    let order = block.len();
    validate_order(order)?;
    let bits = order.trailing_zeros();
    let mut work = block.to_vec();
    fwht_natural(&mut work);
    let scale = normalization.forward_scale(order);
    Ok(WalshBlock(
        (0..order)
            .map(|s| work[natural_index(s, bits)] * scale)
            .collect(),
    ))
}

/// O(N log N) inverse of [`fast_forward`].
pub fn fast_inverse(coeffs: &WalshBlock, normalization: Normalization) -> Result<Vec<Complex64>> {
    let order = coeffs.len();
    validate_order(order)?;
    let bits = order.trailing_zeros();
    let mut work = vec![Complex64::new(0.0, 0.0); order];
    for (s, &c) in coeffs.coeffs().iter().enumerate() {
        work[natural_index(s, bits)] = c;
    }
    fwht_natural(&mut work);
    let scale = normalization.inverse_scale(order);
    work.iter_mut().for_each(|w| *w *= scale);
    Ok(work)
}

/// Non-overlapping blocks aligned to the start of a waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub blocks: Vec<Vec<Complex64>>,
    /// Trailing samples that did not fill a block.
    pub dropped: usize,
}

pub fn blockize(w: &IqWaveform, order: usize) -> Result<Blocks> {
    blockize_samples(w.samples(), order)
}

pub fn blockize_samples(samples: &[Complex64], order: usize) -> Result<Blocks> {
    validate_order(order)?;
    if samples.len() < order {
        return Err(WdpdError::InsufficientData(format!(
            "{} samples cannot fill one block of {order}",
            samples.len()
        )));
    }
    let blocks: Vec<_> = samples.chunks_exact(order).map(<[_]>::to_vec).collect();
    Ok(Blocks {
        dropped: samples.len() - blocks.len() * order,
        blocks,
    })
}

pub fn deblockize(blocks: &[Vec<Complex64>]) -> Vec<Complex64> {
    blocks.concat()
}

/// `[Re X(0..N), Im X(0..N)]`.
pub fn pack_real(coeffs: &WalshBlock) -> Vec<f64> {
    coeffs
        .coeffs()
        .iter()
        .map(|c| c.re)
        .chain(coeffs.coeffs().iter().map(|c| c.im))
        .collect()
}

pub fn unpack_real(packed: &[f64]) -> Result<WalshBlock> {
    if !packed.len().is_multiple_of(2) {
        return Err(WdpdError::Dimension {
            expected: packed.len() + 1,
            actual: packed.len(),
        });
    }
    let (re, im) = packed.split_at(packed.len() / 2);
    Ok(WalshBlock(
        re.iter()
            .zip(im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect(),
    ))
}
