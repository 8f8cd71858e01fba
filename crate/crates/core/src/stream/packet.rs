//! Binary frame format for streamed 4-channel samples.
//!
//! Layout (little-endian): magic `WBPG`, version u8, session_id u64,
//! seq u32, n_samples u16, then n_samples × 4 f32 values sample-major
//! (s0c0 s0c1 s0c2 s0c3 s1c0 ...). Header is 19 bytes.

use std::io::{Read, Write};

use super::StreamError;
use crate::signal::CHANNEL_COUNT;

pub const PACKET_MAGIC: &[u8; 4] = b"WBPG";
pub const PACKET_VERSION: u8 = 1;
pub const PACKET_HEADER_LEN: usize = 19;

#[derive(Debug, Clone, PartialEq)]
pub struct FramedPacket {
    pub session_id: u64,
    pub seq: u32,
    pub samples: Vec<[f32; CHANNEL_COUNT]>,
}

impl FramedPacket {
    pub fn encoded_len(&self) -> usize {
        PACKET_HEADER_LEN + self.samples.len() * CHANNEL_COUNT * 4
    }
}

pub fn encode_packet(p: &FramedPacket) -> Result<Vec<u8>, StreamError> {
    if p.samples.len() > u16::MAX as usize {
        return Err(StreamError::LengthMismatch {
            expected: u16::MAX as usize,
            found: p.samples.len(),
        });
    }
    let mut out = Vec::with_capacity(p.encoded_len());
    out.extend_from_slice(PACKET_MAGIC);
    out.push(PACKET_VERSION);
    out.extend_from_slice(&p.session_id.to_le_bytes());
    out.extend_from_slice(&p.seq.to_le_bytes());
    out.extend_from_slice(&(p.samples.len() as u16).to_le_bytes());
    for sample in &p.samples {
        for v in sample {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decode exactly one frame occupying the whole buffer.
pub fn decode_packet(bytes: &[u8]) -> Result<FramedPacket, StreamError> {
    if bytes.len() < PACKET_HEADER_LEN {
        return Err(StreamError::Truncated);
    }
    if &bytes[..4] != PACKET_MAGIC {
        return Err(StreamError::BadMagic);
    }
    if bytes[4] != PACKET_VERSION {
        return Err(StreamError::BadVersion { found: bytes[4] });
    }
    let session_id = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
    let seq = u32::from_le_bytes(bytes[13..17].try_into().unwrap());
    let n_samples = u16::from_le_bytes(bytes[17..19].try_into().unwrap()) as usize;
    let expected = PACKET_HEADER_LEN + n_samples * CHANNEL_COUNT * 4;
    if bytes.len() != expected {
        return Err(StreamError::LengthMismatch { expected, found: bytes.len() });
    }
    let mut samples = Vec::with_capacity(n_samples);
    for s in 0..n_samples {
        let mut sample = [0f32; CHANNEL_COUNT];
        for (c, v) in sample.iter_mut().enumerate() {
            let o = PACKET_HEADER_LEN + (s * CHANNEL_COUNT + c) * 4;
            *v = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        }
        samples.push(sample);
    }
    Ok(FramedPacket { session_id, seq, samples })
}

/// Read one frame from a stream. Returns `None` on clean EOF at a frame
/// boundary; EOF mid-frame is [`StreamError::Truncated`].
pub fn read_packet(reader: &mut impl Read) -> Result<Option<FramedPacket>, StreamError> {
    let mut header = [0u8; PACKET_HEADER_LEN];
    let mut filled = 0;
    while filled < PACKET_HEADER_LEN {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(StreamError::Truncated),
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(StreamError::Io(e)),
        }
    }
    if &header[..4] != PACKET_MAGIC {
        return Err(StreamError::BadMagic);
    }
    if header[4] != PACKET_VERSION {
        return Err(StreamError::BadVersion { found: header[4] });
    }
    let n_samples = u16::from_le_bytes(header[17..19].try_into().unwrap()) as usize;
    let mut body = vec![0u8; n_samples * CHANNEL_COUNT * 4];
    reader.read_exact(&mut body).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            StreamError::Truncated
        } else {
            StreamError::Io(e)
        }
    })?;
    let mut frame = header.to_vec();
    frame.extend_from_slice(&body);
    decode_packet(&frame).map(Some)
}

pub fn write_packet(writer: &mut impl Write, p: &FramedPacket) -> Result<(), StreamError> {
    writer.write_all(&encode_packet(p)?)?;
    Ok(())
}
