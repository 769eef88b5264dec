//! Framing, integrity checking and error accounting for the covert link.

mod capacity;
mod crc;

use serde::{Deserialize, Serialize};

use crate::bits::{BitString, Symbol, SymbolString};
use crate::error::{Error, Result};

pub use capacity::{capacity_estimate, CapacityRow, LinkTrial};
pub use crc::crc8;

/// Sync pattern sent ahead of every frame.
pub const PREAMBLE: [bool; 8] = [true, false, true, false, true, false, true, true];
pub const MAX_PAYLOAD_BYTES: usize = 8;

/// Frame layout options. Without CRC the frame is preamble plus payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameFormat {
    pub crc: bool,
}

impl Default for FrameFormat {
    fn default() -> Self {
        Self { crc: true }
    }
}

impl FrameFormat {
    pub fn frame_bits(&self, payload_bytes: usize) -> usize {
        PREAMBLE.len() + 8 * payload_bytes + if self.crc { 8 } else { 0 }
    }

    /// Share of frame bits that carry payload.
    pub fn payload_fraction(&self, payload_bytes: usize) -> f64 {
        (8 * payload_bytes) as f64 / self.frame_bits(payload_bytes) as f64
    }
}

pub fn frame(payload: &[u8]) -> Result<BitString> {
    frame_with(payload, FrameFormat::default())
}

pub fn frame_with(payload: &[u8], format: FrameFormat) -> Result<BitString> {
    if payload.is_empty() || payload.len() > MAX_PAYLOAD_BYTES {
        return Err(Error::config(
            "payload",
            format!("must be 1..={MAX_PAYLOAD_BYTES} bytes, got {}", payload.len()),
        ));
    }
    let mut bits = PREAMBLE.to_vec();
    bits.extend(BitString::from_bytes(payload).0);
    if format.crc {
        bits.extend(BitString::from_bytes(&[crc8(payload)]).0);
    }
    Ok(BitString(bits))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deframed {
    pub payload: Vec<u8>,
    /// Index of the first preamble bit in the received stream.
    pub offset: usize,
    pub preamble_mismatches: usize,
}

fn preamble_mismatches(window: &[Symbol]) -> usize {
    window.iter().zip(PREAMBLE).filter(|(s, p)| s.bit() != Some(*p)).count()
}

fn symbols_to_bytes(sym: &[Symbol]) -> (Vec<u8>, bool) {
    let clean = sym.iter().all(|s| *s != Symbol::Erased);
    let bits = SymbolString(sym.to_vec()).hard_bits();
    (bits.to_bytes(), clean)
}

/// Locates a frame in `received` and checks its integrity.
///
/// The preamble may carry at most one wrong or erased bit. Candidate offsets
/// are tried best-match first, earliest first; the first whose CRC verifies
/// wins. When `payload_bytes` is `None` the payload length is inferred from
/// the bits remaining after the preamble.
pub fn deframe(received: &SymbolString, payload_bytes: Option<usize>, format: FrameFormat) -> Result<Deframed> {
    let sym = &received.0;
    let p = PREAMBLE.len();
    if sym.len() < p {
        return Err(Error::NoPreamble);
    }
    let mut candidates: Vec<(usize, usize)> = (0..=sym.len() - p)
        .map(|i| (preamble_mismatches(&sym[i..i + p]), i))
        .filter(|(m, _)| *m <= 1)
        .collect();
    candidates.sort();

    let tail = if format.crc { 8 } else { 0 };
    let mut first_failure: Option<Error> = None;
    for (mismatches, offset) in candidates {
        let rest = sym.len() - offset - p;
        let n = match payload_bytes {
            Some(n) => n,
            None => {
                if rest < 8 + tail {
                    continue;
                }
                ((rest - tail) / 8).min(MAX_PAYLOAD_BYTES)
            }
        };
        if n == 0 || rest < 8 * n + tail {
            continue;
        }
        let body = &sym[offset + p..offset + p + 8 * n];
        let (payload, clean) = symbols_to_bytes(body);
        let found = Deframed {
            payload,
            offset,
            preamble_mismatches: mismatches,
        };
        if !format.crc {
            return Ok(found);
        }
        let (crc_rx, crc_clean) = symbols_to_bytes(&sym[offset + p + 8 * n..offset + p + 8 * n + 8]);
        let expected = crc8(&found.payload);
        if clean && crc_clean && crc_rx[0] == expected {
            return Ok(found);
        }
        first_failure.get_or_insert(Error::CrcMismatch {
            expected,
            got: crc_rx[0],
            payload: found.payload,
        });
    }
    Err(first_failure.unwrap_or(Error::NoPreamble))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerReport {
    pub bit_errors: usize,
    pub erasures: usize,
    pub length: usize,
    /// `(bit_errors + erasures) / length`.
    pub ber_rate: f64,
}

/// Bit error accounting between two aligned symbol strings. A position
/// erased on either side counts as an erasure, otherwise differing bits count
/// as errors.
pub fn ber(sent: &SymbolString, received: &SymbolString) -> Result<BerReport> {
    if sent.len() != received.len() {
        return Err(Error::LengthMismatch {
            left: sent.len(),
            right: received.len(),
        });
    }
    let mut bit_errors = 0;
    let mut erasures = 0;
    for (a, b) in sent.0.iter().zip(&received.0) {
        match (a.bit(), b.bit()) {
            (Some(x), Some(y)) => bit_errors += (x != y) as usize,
            _ => erasures += 1,
        }
    }
    let length = sent.len();
    let ber_rate = if length == 0 {
        0.0
    } else {
        (bit_errors + erasures) as f64 / length as f64
    };
    Ok(BerReport {
        bit_errors,
        erasures,
        length,
        ber_rate,
    })
}

/// Pads or truncates decoded symbols to `len`, filling with erasures.
pub fn align(decoded: &SymbolString, len: usize) -> SymbolString {
    let mut v = decoded.0.clone();
    v.resize(len, Symbol::Erased);
    SymbolString(v)
}
