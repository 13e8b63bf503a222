//! Randomized property tests for the quantizer and codec invariants.

use gradq::codec::{
    decode_gradient, encode_gradient, erc_decode, erc_encode, BitReader, BitStream,
    CodecConfig, LevelCodeMode,
};
use gradq::quantizer::{dequantize, quantize_scheme, LevelSequence, NormScheme};
use gradq::rng::RandomSource;
use proptest::prelude::*;

proptest! {
    #[test]
    fn erc_roundtrips_any_positive_integer(n in 1u64..=1 << 40) {
        let enc = erc_encode(n).unwrap();
        let (back, used) = erc_decode(&enc, 0).unwrap();
        prop_assert_eq!(back, n);
        prop_assert_eq!(used, enc.bit_len());
    }

    #[test]
    fn erc_is_a_prefix_code(a in 1u64..5000, b in 1u64..5000) {
        // decoding a concatenation always recovers the first value
        let mut stream = erc_encode(a).unwrap();
        stream.append(&erc_encode(b).unwrap());
        let (first, used) = erc_decode(&stream, 0).unwrap();
        prop_assert_eq!(first, a);
        let (second, _) = erc_decode(&stream, used).unwrap();
        prop_assert_eq!(second, b);
    }

    #[test]
    fn bitstream_bits_roundtrip(value: u64, width in 1u32..=64) {
        let masked = if width == 64 { value } else { value & ((1 << width) - 1) };
        let mut stream = BitStream::new();
        stream.push_bits(masked, width);
        let mut reader = BitReader::new(&stream);
        prop_assert_eq!(reader.read_bits(width).unwrap(), masked);
    }

    #[test]
    fn gradient_roundtrips_both_level_code_modes(
        v in prop::collection::vec(-1e6f64..1e6, 1..64),
        s in 1usize..=4,
        seed: u64,
        index_mode: bool,
    ) {
        let levels = LevelSequence::exponential(0.5, s).unwrap();
        let rng = RandomSource::new(seed, 0);
        let q = quantize_scheme(&v, &levels, NormScheme::L2, &rng).unwrap();
        let cfg = CodecConfig {
            float_bits: 64,
            level_code_mode: if index_mode {
                LevelCodeMode::LevelIndex
            } else {
                LevelCodeMode::LogPowerOfTwo
            },
        };
        let bits = encode_gradient(&q, &levels, &cfg).unwrap();
        prop_assert_eq!(decode_gradient(&bits, v.len(), &levels, &cfg).unwrap(), q);
    }

    #[test]
    fn quantized_output_is_structurally_valid(
        v in prop::collection::vec(-1e3f64..1e3, 1..48),
        s in 1usize..=4,
        seed: u64,
        linf: bool,
    ) {
        let levels = LevelSequence::exponential(0.5, s).unwrap();
        let norm = if linf { NormScheme::Linf } else { NormScheme::L2 };
        let rng = RandomSource::new(seed, 0);
        let q = quantize_scheme(&v, &levels, norm, &rng).unwrap();
        q.validate(&levels).unwrap();
        // reconstructed magnitudes never exceed the normalizer
        let x = dequantize(&q, &levels).unwrap();
        for xi in &x {
            prop_assert!(xi.abs() <= q.norm * (1.0 + 1e-12));
        }
    }

    #[test]
    fn locate_brackets_the_input(r in 0.0f64..=1.0, s in 1usize..=6) {
        let levels = LevelSequence::exponential(0.5, s).unwrap();
        let loc = levels.locate(r).unwrap();
        prop_assert!(levels.level(loc.bin) <= r + 1e-12);
        prop_assert!(r <= levels.level(loc.bin + 1) + 1e-12);
        prop_assert!((0.0..=1.0).contains(&loc.upper_prob));
    }
}
