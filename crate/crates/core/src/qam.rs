//! Gray-coded 4-QAM with unit symbol energy.
//!
//! Labels run counter-clockwise from the first quadrant: 00, 01, 11, 10.
//! The first bit of a pair selects the sign of the imaginary part and the
//! second bit the sign of the real part, so neighbours differ in one bit.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Constellation point for a bit pair.
pub fn qam4_point(b0: u8, b1: u8) -> Complex64 {
    let re = if b1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    let im = if b0 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    Complex64::new(re, im)
}

/// The four points in label order 00, 01, 10, 11.
pub fn qam4_alphabet() -> [Complex64; 4] {
    [qam4_point(0, 0), qam4_point(0, 1), qam4_point(1, 0), qam4_point(1, 1)]
}

pub fn map_bits_qam4(bits: &[u8]) -> Result<Vec<Complex64>> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::OddBitCount(bits.len()));
    }
    if let Some((i, &b)) = bits.iter().enumerate().find(|(_, &b)| b > 1) {
        return Err(Error::InvalidBit(b, i));
    }
    Ok(bits.chunks_exact(2).map(|pair| qam4_point(pair[0], pair[1])).collect())
}

/// Hard-decision demapping by quadrant.
///
/// A component exactly on an axis counts as positive, so `0 + 0j` decodes
/// to `00`.
pub fn demap_qam4(symbols: &[Complex64]) -> Vec<u8> {
    let mut bits = Vec::with_capacity(symbols.len() * 2);
    for s in symbols {
        bits.push(u8::from(s.im < 0.0));
        bits.push(u8::from(s.re < 0.0));
    }
    bits
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: f64 = FRAC_1_SQRT_2;

    #[test]
    fn labels() {
        let m = map_bits_qam4(&[0, 0, 1, 1]).unwrap();
        assert_eq!(m[0], Complex64::new(S, S));
        assert_eq!(m[1], Complex64::new(-S, -S));
    }

    #[test]
    fn gray_sequence_covers_alphabet_counter_clockwise() {
        let m = map_bits_qam4(&[0, 0, 0, 1, 1, 1, 1, 0]).unwrap();
        let quadrant = |z: Complex64| z.arg().rem_euclid(std::f64::consts::TAU);
        for w in m.windows(2) {
            assert!(quadrant(w[1]) > quadrant(w[0]));
        }
        for p in qam4_alphabet() {
            assert_eq!(m.iter().filter(|&&z| z == p).count(), 1);
        }
    }

    #[test]
    fn unit_energy() {
        for p in qam4_alphabet() {
            assert!((p.norm_sqr() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn nearest_neighbours_differ_in_one_bit() {
        let labels = [[0u8, 0], [0, 1], [1, 0], [1, 1]];
        let dmin = 2.0 * S;
        for a in labels {
            for b in labels {
                let d = (qam4_point(a[0], a[1]) - qam4_point(b[0], b[1])).norm();
                if (d - dmin).abs() < 1e-12 {
                    let diff = (a[0] ^ b[0]) + (a[1] ^ b[1]);
                    assert_eq!(diff, 1);
                }
            }
        }
    }

    #[test]
    fn demap_round_trip_and_ties() {
        for pair in [[0u8, 0], [0, 1], [1, 0], [1, 1]] {
            assert_eq!(demap_qam4(&map_bits_qam4(&pair).unwrap()), pair);
        }
        let noisy = Complex64::new(0.9, 1.1) / 2f64.sqrt();
        assert_eq!(demap_qam4(&[noisy]), vec![0, 0]);
        assert_eq!(demap_qam4(&[Complex64::new(0.0, 0.0)]), vec![0, 0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(map_bits_qam4(&[0, 1, 1]), Err(Error::OddBitCount(3))));
        assert!(matches!(map_bits_qam4(&[0, 2]), Err(Error::InvalidBit(2, 1))));
    }
}
