//! Tensor types: dense reals, raw pixels, and bit-packed ±1 data.
//!
//! The packed representation stores one ±1 element per bit (`1` encodes +1,
//! `0` encodes −1), LSB-first within each 64-bit word, elements in row-major
//! order. Bits past `logical_len` in the last word are always zero.

use alloc::vec;
use alloc::vec::Vec;

/// Binarization from Eq.-style sign semantics: +1 for z ≥ 0, −1 otherwise.
///
/// Non-finite input is a contract violation.
#[inline]
pub fn sign(z: f32) -> i8 {
    debug_assert!(z.is_finite(), "sign() requires finite input, got {z}");
    if z >= 0.0 {
        1
    } else {
        -1
    }
}

/// Dense f32 tensor with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTensor {
    pub values: Vec<f32>,
    pub shape: Vec<usize>,
}

impl RealTensor {
    pub fn new(values: Vec<f32>, shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(values.len(), n, "value count must equal product of shape");
        Self { values, shape }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            values: vec![0.0; n],
            shape,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Raw pixel tensor (u8), the native output of the environments.
///
/// Networks consume pixels scaled to `[0, 1]`; `to_real` performs the exact
/// `k/255` conversion. Keeping replay memory in u8 quarters its footprint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelTensor {
    pub data: Vec<u8>,
    pub shape: Vec<usize>,
}

impl PixelTensor {
    pub fn new(data: Vec<u8>, shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(data.len(), n, "pixel count must equal product of shape");
        Self { data, shape }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            data: vec![0; n],
            shape,
        }
    }

    pub fn to_real(&self) -> RealTensor {
        RealTensor {
            values: self.data.iter().map(|&p| p as f32 / 255.0).collect(),
            shape: self.shape.clone(),
        }
    }

    /// Quantize a `[0, 1]`-scaled real tensor back to pixels.
    ///
    /// Exact round-trip for tensors produced by `to_real`.
    pub fn from_real(t: &RealTensor) -> Self {
        Self {
            data: t
                .values
                .iter()
                .map(|&v| libm::roundf(v * 255.0).clamp(0.0, 255.0) as u8)
                .collect(),
            shape: t.shape.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// ±1 data packed one element per bit into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBitTensor {
    pub words: Vec<u64>,
    pub logical_len: usize,
    pub shape: Vec<usize>,
}

impl PackedBitTensor {
    /// Pack a ±1 sequence. Bit `i` of the stream is element `i`, LSB-first.
    pub fn pack(bits: &[i8], shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(bits.len(), n, "element count must equal product of shape");
        let mut words = vec![0u64; n.div_ceil(64)];
        for (i, &b) in bits.iter().enumerate() {
            debug_assert!(b == 1 || b == -1, "pack() requires ±1 elements");
            if b == 1 {
                words[i / 64] |= 1u64 << (i % 64);
            }
        }
        Self {
            words,
            logical_len: n,
            shape,
        }
    }

    pub fn pack_flat(bits: &[i8]) -> Self {
        Self::pack(bits, vec![bits.len()])
    }

    pub fn unpack(&self) -> Vec<i8> {
        (0..self.logical_len)
            .map(|i| {
                if self.words[i / 64] >> (i % 64) & 1 == 1 {
                    1
                } else {
                    -1
                }
            })
            .collect()
    }

    #[inline]
    pub fn get(&self, i: usize) -> i8 {
        debug_assert!(i < self.logical_len);
        if self.words[i / 64] >> (i % 64) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    /// Mask covering the valid bits of the last word (all ones if full).
    #[inline]
    pub fn tail_mask(&self) -> u64 {
        let rem = self.logical_len % 64;
        if rem == 0 {
            u64::MAX
        } else {
            (1u64 << rem) - 1
        }
    }

    pub fn len(&self) -> usize {
        self.logical_len
    }

    pub fn is_empty(&self) -> bool {
        self.logical_len == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sign_zero_is_positive() {
        assert_eq!(sign(0.0), 1);
        assert_eq!(sign(-0.5), -1);
        assert_eq!(sign(3.7), 1);
        assert_eq!(sign(-0.0), 1); // -0.0 >= 0.0 in IEEE
    }

    #[test]
    fn pack_low_nibble() {
        let t = PackedBitTensor::pack_flat(&[1, -1, 1, 1]);
        assert_eq!(t.words.len(), 1);
        assert_eq!(t.words[0] & 0xf, 0b1101);
        assert_eq!(t.logical_len, 4);
    }

    #[test]
    fn pack_empty() {
        let t = PackedBitTensor::pack_flat(&[]);
        assert_eq!(t.words.len(), 0);
        assert_eq!(t.logical_len, 0);
        assert!(t.unpack().is_empty());
    }

    #[test]
    fn pack_word_boundary() {
        let t = PackedBitTensor::pack_flat(&[1i8; 65]);
        assert_eq!(t.words.len(), 2);
        assert_eq!(t.words[0], u64::MAX);
        assert_eq!(t.words[1], 1);
    }

    #[test]
    fn tail_bits_are_zero() {
        let t = PackedBitTensor::pack_flat(&[1i8; 70]);
        assert_eq!(t.words[1] & !t.tail_mask(), 0);
    }

    #[test]
    fn pixel_real_round_trip_exact() {
        let p = PixelTensor::new((0..=255).collect(), vec![256]);
        let back = PixelTensor::from_real(&p.to_real());
        assert_eq!(p, back);
    }

    proptest! {
        #[test]
        fn pack_round_trip(bits in proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], 0..200)) {
            let t = PackedBitTensor::pack_flat(&bits);
            prop_assert_eq!(t.unpack(), bits);
            prop_assert_eq!(t.words.last().map(|w| w & !t.tail_mask()).unwrap_or(0), 0);
        }

        #[test]
        fn pack_round_trip_word_boundaries(fill in prop_oneof![Just(1i8), Just(-1i8)], len in prop_oneof![Just(63usize), Just(64), Just(65)]) {
            let bits = alloc::vec![fill; len];
            let t = PackedBitTensor::pack_flat(&bits);
            prop_assert_eq!(t.unpack(), bits);
        }
    }
}
