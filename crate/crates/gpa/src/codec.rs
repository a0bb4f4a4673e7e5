//! Deterministic, invertible synthetic speech codec.
//!
//! Stands in for the neural tokenizers at desk scale: maps (text, speaker)
//! to four token streams and back. The maps are modular-affine with
//! constants coprime to their moduli, so the acoustic stream decodes
//! exactly — which turns every generation task into something checkable
//! against a closed-form oracle.
//!
//! Stream roles mirror the production layout: two semantic streams carry
//! content only (speaker-invariant), the acoustic stream carries content
//! plus timbre, and four global tokens carry the speaker identity alone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Partition-relative sizes the streams are generated into.
pub const GLM_MOD: u32 = 512;
pub const BI_MOD: u32 = 512;
pub const ACOUSTIC_MOD: u32 = 1024;
pub const GLOBAL_MOD: u32 = 64;
/// Acoustic tokens per second of synthetic audio.
pub const FRAME_RATE: u32 = 50;
/// Acoustic tokens per text byte.
pub const ACOUSTIC_PER_CHAR: usize = 2;
/// Global tokens per utterance.
pub const GLOBAL_LEN: usize = 4;
/// Exclusive upper bound on speaker ids.
pub const SPEAKER_SPACE: u32 = 4096;

/// Multiplicative inverse of 5 modulo 1024, used to invert the even
/// acoustic map.
const INV5_MOD_1024: u32 = 205;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("text must be non-empty")]
    EmptyText,
    #[error("speaker {0} outside [0, {SPEAKER_SPACE})")]
    SpeakerOutOfRange(u32),
    #[error("acoustic frame {frame} is inconsistent with its global tokens")]
    InconsistentFrame { frame: usize },
    #[error("acoustic stream length {0} is odd")]
    OddAcousticLength(usize),
    #[error("global stream has {0} tokens, expected {GLOBAL_LEN}")]
    BadGlobalLength(usize),
}

/// The per-utterance bundle of token streams, all ids partition-relative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSet {
    #[serde(with = "text_bytes")]
    pub text: Vec<u8>,
    pub speaker: u32,
    pub glm: Vec<u32>,
    pub bi: Vec<u32>,
    pub acoustic: Vec<u32>,
    pub global: Vec<u32>,
    pub frame_rate: u32,
}

impl StreamSet {
    pub fn audio_duration_s(&self) -> f64 {
        audio_duration(&self.acoustic)
    }
}

/// Text is a byte string; corpus texts are ASCII so the JSONL form stores a
/// plain string. Non-UTF-8 bytes only occur through the in-process API.
mod text_bytes {
    use serde::{de, ser, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        match std::str::from_utf8(bytes) {
            Ok(t) => s.serialize_str(t),
            Err(_) => Err(ser::Error::custom("text is not valid UTF-8")),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() > u32::MAX as usize {
            return Err(de::Error::custom("text too long"));
        }
        Ok(s.into_bytes())
    }
}

/// Encodes a byte string and speaker into the four streams.
///
/// For character `c_i` (with `c_{-1} = 0`):
/// `glm_i = (7 c_i + 3) mod 512`,
/// `bi_i = (13 c_i + 3 c_{i-1} + 5) mod 512`,
/// `acoustic_{2i} = (5 c_i + 11 s + 1) mod 1024`,
/// `acoustic_{2i+1} = (9 c_i + 17 s + 2) mod 1024`,
/// `global_k = (s >> 6k) mod 64`.
pub fn encode(text: &[u8], speaker: u32) -> Result<StreamSet, CodecError> {
    if text.is_empty() {
        return Err(CodecError::EmptyText);
    }
    if speaker >= SPEAKER_SPACE {
        return Err(CodecError::SpeakerOutOfRange(speaker));
    }
    let s = speaker;
    let mut glm = Vec::with_capacity(text.len());
    let mut bi = Vec::with_capacity(text.len());
    let mut acoustic = Vec::with_capacity(text.len() * ACOUSTIC_PER_CHAR);
    let mut prev: u32 = 0;
    for &byte in text {
        let c = byte as u32;
        glm.push((7 * c + 3) % GLM_MOD);
        bi.push((13 * c + 3 * prev + 5) % BI_MOD);
        acoustic.push((5 * c + 11 * s + 1) % ACOUSTIC_MOD);
        acoustic.push((9 * c + 17 * s + 2) % ACOUSTIC_MOD);
        prev = c;
    }
    let global = (0..GLOBAL_LEN as u32)
        .map(|k| (s >> (6 * k)) % GLOBAL_MOD)
        .collect();
    Ok(StreamSet {
        text: text.to_vec(),
        speaker,
        glm,
        bi,
        acoustic,
        global,
        frame_rate: FRAME_RATE,
    })
}

/// Inverts the acoustic stream back to (text, speaker).
///
/// The speaker is read from the global tokens; each even acoustic token is
/// inverted through 5⁻¹ mod 1024 and the odd token is used as a consistency
/// check, so any frame a model got wrong is reported rather than silently
/// mis-decoded.
pub fn decode_acoustic(acoustic: &[u32], global: &[u32]) -> Result<(Vec<u8>, u32), CodecError> {
    if acoustic.len() % 2 != 0 {
        return Err(CodecError::OddAcousticLength(acoustic.len()));
    }
    if global.len() != GLOBAL_LEN {
        return Err(CodecError::BadGlobalLength(global.len()));
    }
    let speaker: u32 = global
        .iter()
        .enumerate()
        .map(|(k, &g)| (g % GLOBAL_MOD) << (6 * k))
        .sum();
    let s = speaker;
    let mut text = Vec::with_capacity(acoustic.len() / 2);
    for (frame, pair) in acoustic.chunks_exact(2).enumerate() {
        let (a0, a1) = (pair[0] % ACOUSTIC_MOD, pair[1] % ACOUSTIC_MOD);
        let c = ((a0 + ACOUSTIC_MOD * 12 - (11 * s + 1) % ACOUSTIC_MOD) % ACOUSTIC_MOD)
            .wrapping_mul(INV5_MOD_1024)
            % ACOUSTIC_MOD;
        let consistent = c < 256 && a1 == (9 * c + 17 * s + 2) % ACOUSTIC_MOD;
        if !consistent {
            return Err(CodecError::InconsistentFrame { frame });
        }
        text.push(c as u8);
    }
    Ok((text, speaker))
}

/// Synthetic audio duration at the fixed frame rate.
pub fn audio_duration(acoustic: &[u32]) -> f64 {
    acoustic.len() as f64 / FRAME_RATE as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_reference_values() {
        let set = encode(b"a", 0).unwrap();
        assert_eq!(set.glm, vec![170]);
        assert_eq!(set.bi, vec![242]);
        assert_eq!(set.acoustic, vec![486, 875]);
        assert_eq!(set.global, vec![0, 0, 0, 0]);
    }

    #[test]
    fn encode_speaker_shifts_acoustic_only() {
        let s0 = encode(b"a", 0).unwrap();
        let s1 = encode(b"a", 1).unwrap();
        assert_eq!(s1.acoustic, vec![497, 892]);
        assert_eq!(s0.glm, s1.glm);
        assert_eq!(s0.bi, s1.bi);
    }

    #[test]
    fn encode_rejects_empty_text() {
        assert_eq!(encode(b"", 0).unwrap_err(), CodecError::EmptyText);
    }

    #[test]
    fn encode_rejects_speaker_out_of_range() {
        assert_eq!(
            encode(b"a", 4096).unwrap_err(),
            CodecError::SpeakerOutOfRange(4096)
        );
    }

    #[test]
    fn decode_roundtrip_single_char() {
        let set = encode(b"a", 0).unwrap();
        let (text, speaker) = decode_acoustic(&set.acoustic, &set.global).unwrap();
        assert_eq!((text.as_slice(), speaker), (b"a".as_slice(), 0));
    }

    #[test]
    fn decode_roundtrip_phrase() {
        let set = encode(b"cat sat", 37).unwrap();
        let (text, speaker) = decode_acoustic(&set.acoustic, &set.global).unwrap();
        assert_eq!((text.as_slice(), speaker), (b"cat sat".as_slice(), 37));
    }

    #[test]
    fn decode_flags_inconsistent_frame() {
        let err = decode_acoustic(&[486, 999], &[0, 0, 0, 0]).unwrap_err();
        assert_eq!(err, CodecError::InconsistentFrame { frame: 0 });
    }

    #[test]
    fn decode_rejects_bad_shapes() {
        assert_eq!(
            decode_acoustic(&[486], &[0, 0, 0, 0]).unwrap_err(),
            CodecError::OddAcousticLength(1)
        );
        assert_eq!(
            decode_acoustic(&[486, 875], &[0, 0]).unwrap_err(),
            CodecError::BadGlobalLength(2)
        );
    }

    #[test]
    fn duration_examples() {
        assert_eq!(audio_duration(&vec![0; 322]), 6.44);
        assert_eq!(audio_duration(&[]), 0.0);
        assert_eq!(audio_duration(&vec![0; 100]), 2.0);
    }

    #[test]
    fn bi_depends_on_previous_char() {
        let ab = encode(b"ab", 0).unwrap();
        let cb = encode(b"cb", 0).unwrap();
        assert_ne!(ab.bi[1], cb.bi[1]);
        // glm is context-free per character
        assert_eq!(ab.glm[1], cb.glm[1]);
    }

    proptest! {
        #[test]
        fn roundtrip_any_bytes(text in proptest::collection::vec(any::<u8>(), 1..64),
                               speaker in 0u32..4096) {
            let set = encode(&text, speaker).unwrap();
            prop_assert_eq!(set.glm.len(), text.len());
            prop_assert_eq!(set.bi.len(), text.len());
            prop_assert_eq!(set.acoustic.len(), 2 * text.len());
            prop_assert_eq!(set.global.len(), 4);
            let (back, s) = decode_acoustic(&set.acoustic, &set.global).unwrap();
            prop_assert_eq!(back, text);
            prop_assert_eq!(s, speaker);
        }

        #[test]
        fn semantic_streams_are_speaker_invariant(text in proptest::collection::vec(any::<u8>(), 1..32),
                                                  s1 in 0u32..4096, s2 in 0u32..4096) {
            let a = encode(&text, s1).unwrap();
            let b = encode(&text, s2).unwrap();
            prop_assert_eq!(&a.glm, &b.glm);
            prop_assert_eq!(&a.bi, &b.bi);
            if s1 != s2 {
                prop_assert_ne!(&a.acoustic, &b.acoustic);
            }
        }
    }
}
