//! Length-prefixed frames for the socket backend.
//!
//! ```text
//! offset  size  field
//!      0     4  magic  b"PSVM"
//!      4     1  message type
//!      5     4  sender rank, u32 little-endian
//!      9     8  component count n, u64 little-endian
//!     17    8n  components, IEEE-754 binary64 little-endian
//! ```

use std::io::{self, Read, Write};

use super::CommError;

pub const MAGIC: [u8; 4] = *b"PSVM";
pub const HEADER_LEN: usize = 17;

/// Upper bound on components per frame, to reject garbage lengths before
/// allocating.
pub const MAX_COMPONENTS: u64 = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    /// Rank `r > 0` joining; payload `[group_size, ring_port]`.
    Register = 1,
    /// Rendezvous complete; payload is the ring address table (may be empty).
    Welcome = 2,
    /// A member's all-reduce input.
    Contribute = 3,
    /// The reduced all-reduce output.
    Result = 4,
    Broadcast = 5,
    BarrierEnter = 6,
    BarrierRelease = 7,
    /// The collective failed; the group must stop.
    Abort = 8,
    /// One segment of a ring all-reduce pass.
    RingSegment = 9,
    /// First frame on a ring link, identifying the sender.
    RingHello = 10,
}

impl MessageType {
    pub fn from_u8(b: u8) -> Option<Self> {
        use MessageType::*;
        Some(match b {
            1 => Register,
            2 => Welcome,
            3 => Contribute,
            4 => Result,
            5 => Broadcast,
            6 => BarrierEnter,
            7 => BarrierRelease,
            8 => Abort,
            9 => RingSegment,
            10 => RingHello,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: MessageType,
    pub rank: u32,
    pub payload: Vec<f64>,
}

impl Frame {
    pub fn new(kind: MessageType, rank: usize, payload: Vec<f64>) -> Self {
        Self {
            kind,
            rank: rank as u32,
            payload,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 8 * self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_parts(self.kind, self.rank, &self.payload)
    }
}

fn encode_parts(kind: MessageType, rank: u32, payload: &[f64]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * payload.len());
    buf.extend_from_slice(&MAGIC);
    buf.push(kind as u8);
    buf.extend_from_slice(&rank.to_le_bytes());
    buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    for x in payload {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf
}

/// Writes one frame and returns the number of bytes written.
pub fn write_frame<W: Write>(
    out: &mut W,
    kind: MessageType,
    rank: usize,
    payload: &[f64],
) -> io::Result<usize> {
    let buf = encode_parts(kind, rank as u32, payload);
    out.write_all(&buf)?;
    out.flush()?;
    Ok(buf.len())
}

pub fn read_frame<R: Read>(input: &mut R) -> Result<Frame, CommError> {
    let mut header = [0u8; HEADER_LEN];
    input.read_exact(&mut header)?;
    if header[..4] != MAGIC {
        return Err(CommError::Protocol(format!("bad magic {:02x?}", &header[..4])));
    }
    let kind = MessageType::from_u8(header[4])
        .ok_or_else(|| CommError::Protocol(format!("unknown message type {}", header[4])))?;
    let rank = u32::from_le_bytes(header[5..9].try_into().unwrap());
    let len = u64::from_le_bytes(header[9..17].try_into().unwrap());
    if len > MAX_COMPONENTS {
        return Err(CommError::Protocol(format!("frame length {len} too large")));
    }
    let mut body = vec![0u8; len as usize * 8];
    input.read_exact(&mut body)?;
    let payload = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Frame {
        kind,
        rank,
        payload,
    })
}
