//! Frame codec.
//!
//! ```text
//! offset  size  field
//! 0       4     length of everything after this field, u32 big-endian
//! 4       1     protocol version (1)
//! 5       1     message type
//! 6       4     cell_id, u32 big-endian
//! 10      8     seq, u64 big-endian
//! 18      n     body, UTF-8 JSON object
//! ```

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Centroid, DetectionVerdict, WindowKpm};

pub const PROTOCOL_VERSION: u8 = 1;
pub const MAX_FRAME_LEN: usize = 1 << 20;
/// Version, type, cell_id and seq.
pub const HEADER_LEN: usize = 1 + 1 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Subscribe = 1,
    SubscribeAck = 2,
    Indication = 3,
    Control = 4,
    Heartbeat = 5,
    Error = 6,
    ControlAck = 7,
}

impl MsgType {
    pub fn from_u8(b: u8) -> Option<MsgType> {
        Some(match b {
            1 => MsgType::Subscribe,
            2 => MsgType::SubscribeAck,
            3 => MsgType::Indication,
            4 => MsgType::Control,
            5 => MsgType::Heartbeat,
            6 => MsgType::Error,
            7 => MsgType::ControlAck,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    UnknownType,
    MalformedBody,
    UnsupportedVersion,
    DuplicateSubscription,
    UnknownCell,
    FrameTooLarge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubscribeBody {
    pub window_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlBody {
    pub window_id: u64,
    pub verdict: DetectionVerdict,
    pub centroids: Vec<Centroid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlAckBody {
    pub window_id: u64,
    pub blocklist_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HeartbeatBody {}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Subscribe(SubscribeBody),
    SubscribeAck(SubscribeBody),
    Indication(WindowKpm),
    Control(ControlBody),
    Heartbeat(HeartbeatBody),
    Error(ErrorBody),
    ControlAck(ControlAckBody),
}

impl Body {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Body::Subscribe(_) => MsgType::Subscribe,
            Body::SubscribeAck(_) => MsgType::SubscribeAck,
            Body::Indication(_) => MsgType::Indication,
            Body::Control(_) => MsgType::Control,
            Body::Heartbeat(_) => MsgType::Heartbeat,
            Body::Error(_) => MsgType::Error,
            Body::ControlAck(_) => MsgType::ControlAck,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct E2Message {
    pub version: u8,
    pub cell_id: u32,
    pub seq: u64,
    pub body: Body,
}

impl E2Message {
    pub fn new(cell_id: u32, seq: u64, body: Body) -> Self {
        E2Message { version: PROTOCOL_VERSION, cell_id, seq, body }
    }

    pub fn msg_type(&self) -> MsgType {
        self.body.msg_type()
    }
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("frame of {0} bytes exceeds the 1 MiB limit")]
    FrameTooLarge(usize),
    #[error("malformed body: {0}")]
    MalformedBody(String),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("unsupported protocol version {version}")]
    UnsupportedVersion { version: u8, cell_id: u32, seq: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CodecError {
    /// The code to send back to the peer for a frame that failed to decode.
    pub fn reply_code(&self) -> Option<ErrorCode> {
        match self {
            CodecError::FrameTooLarge(_) => Some(ErrorCode::FrameTooLarge),
            CodecError::MalformedBody(_) => Some(ErrorCode::MalformedBody),
            CodecError::UnknownType(_) => Some(ErrorCode::UnknownType),
            CodecError::UnsupportedVersion { .. } => Some(ErrorCode::UnsupportedVersion),
            CodecError::Io(_) => None,
        }
    }
}

fn body_json(body: &Body) -> Vec<u8> {
    let v = match body {
        Body::Subscribe(b) | Body::SubscribeAck(b) => serde_json::to_vec(b),
        Body::Indication(b) => serde_json::to_vec(b),
        Body::Control(b) => serde_json::to_vec(b),
        Body::Heartbeat(b) => serde_json::to_vec(b),
        Body::Error(b) => serde_json::to_vec(b),
        Body::ControlAck(b) => serde_json::to_vec(b),
    };
    v.expect("message bodies always serialize")
}

/// Full frame including the length prefix.
pub fn encode(msg: &E2Message) -> Result<Vec<u8>, CodecError> {
    let body = body_json(&msg.body);
    let len = HEADER_LEN + body.len();
    if len > MAX_FRAME_LEN {
        return Err(CodecError::FrameTooLarge(len));
    }
    let mut out = Vec::with_capacity(4 + len);
    out.extend_from_slice(&(len as u32).to_be_bytes());
    out.push(msg.version);
    out.push(msg.msg_type() as u8);
    out.extend_from_slice(&msg.cell_id.to_be_bytes());
    out.extend_from_slice(&msg.seq.to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

fn parse<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, CodecError> {
    serde_json::from_slice(body).map_err(|e| CodecError::MalformedBody(e.to_string()))
}

/// Decode one frame given without its length prefix.
pub fn decode_payload(frame: &[u8]) -> Result<E2Message, CodecError> {
    if frame.len() > MAX_FRAME_LEN {
        return Err(CodecError::FrameTooLarge(frame.len()));
    }
    if frame.len() < HEADER_LEN {
        return Err(CodecError::MalformedBody(format!("frame of {} bytes is shorter than the header", frame.len())));
    }
    let version = frame[0];
    let ty = frame[1];
    let cell_id = u32::from_be_bytes(frame[2..6].try_into().expect("4 bytes"));
    let seq = u64::from_be_bytes(frame[6..14].try_into().expect("8 bytes"));
    if version != PROTOCOL_VERSION {
        return Err(CodecError::UnsupportedVersion { version, cell_id, seq });
    }
    let ty = MsgType::from_u8(ty).ok_or(CodecError::UnknownType(ty))?;
    let raw = &frame[HEADER_LEN..];
    let body = match ty {
        MsgType::Subscribe => Body::Subscribe(parse(raw)?),
        MsgType::SubscribeAck => Body::SubscribeAck(parse(raw)?),
        MsgType::Indication => Body::Indication(parse(raw)?),
        MsgType::Control => Body::Control(parse(raw)?),
        MsgType::Heartbeat => Body::Heartbeat(parse(raw)?),
        MsgType::Error => Body::Error(parse(raw)?),
        MsgType::ControlAck => Body::ControlAck(parse(raw)?),
    };
    Ok(E2Message { version, cell_id, seq, body })
}

/// Decode a complete frame including its length prefix.
pub fn decode(bytes: &[u8]) -> Result<E2Message, CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::MalformedBody("missing length prefix".into()));
    }
    let len = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_FRAME_LEN {
        return Err(CodecError::FrameTooLarge(len));
    }
    let rest = &bytes[4..];
    if rest.len() != len {
        return Err(CodecError::MalformedBody(format!("length prefix says {len} bytes, got {}", rest.len())));
    }
    decode_payload(rest)
}

/// Read one frame payload. `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, CodecError> {
    let mut prefix = [0u8; 4];
    match r.read_exact(&mut prefix) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_FRAME_LEN {
        return Err(CodecError::FrameTooLarge(len));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

pub fn write_message<W: Write>(w: &mut W, msg: &E2Message) -> Result<(), CodecError> {
    let frame = encode(msg)?;
    w.write_all(&frame)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Fingerprint, ObservedFingerprint, SimTime, VerdictKind, VerdictReason};
    use proptest::prelude::*;

    fn kpm(n: u32) -> WindowKpm {
        let mut k = WindowKpm::empty(7, SimTime(600));
        k.n3 = n;
        k.n4 = n;
        k.n5 = 2;
        for i in 0..n {
            k.fingerprints.push(ObservedFingerprint {
                time: SimTime(600 + u64::from(i)),
                fingerprint: Fingerprint::new(32, -41.0 + f64::from(i) * 0.013),
                attempt_id: u64::from(i),
            });
        }
        k
    }

    #[test]
    fn indication_round_trip() {
        let m = E2Message::new(1, 42, Body::Indication(kpm(40)));
        let bytes = encode(&m).unwrap();
        assert_eq!(decode(&bytes).unwrap(), m);
    }

    #[test]
    fn header_layout() {
        let m = E2Message::new(0x0102_0304, 0x0A0B, Body::Heartbeat(HeartbeatBody {}));
        let bytes = encode(&m).unwrap();
        assert_eq!(&bytes[..4], &((bytes.len() - 4) as u32).to_be_bytes());
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], MsgType::Heartbeat as u8);
        assert_eq!(&bytes[6..10], &[1, 2, 3, 4]);
        assert_eq!(&bytes[10..18], &[0, 0, 0, 0, 0, 0, 0x0A, 0x0B]);
        assert_eq!(&bytes[18..], b"{}");
    }

    #[test]
    fn truncated_frames_are_malformed() {
        let bytes = encode(&E2Message::new(1, 1, Body::Indication(kpm(5)))).unwrap();
        for cut in [0, 3, 10, 20, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(CodecError::MalformedBody(_))), "cut at {cut}");
        }
        let mut r = &bytes[..bytes.len() - 3];
        assert!(matches!(read_frame(&mut r), Err(CodecError::Io(_))));
    }

    #[test]
    fn control_preserves_centroid_order() {
        let centroids = vec![Centroid::new(32.0, -41.2), Centroid::new(30.0, -33.1)];
        let verdict = DetectionVerdict {
            kind: VerdictKind::AttackDetected,
            reason: VerdictReason::DenseCluster,
            malicious_centroids: centroids.clone(),
            r1: 0.0,
            r2: 0.0,
        };
        let m = E2Message::new(1, 3, Body::Control(ControlBody { window_id: 4, verdict, centroids: centroids.clone() }));
        let Body::Control(back) = decode(&encode(&m).unwrap()).unwrap().body else {
            panic!("wrong type");
        };
        assert_eq!(back.centroids, centroids);
    }

    #[test]
    fn unknown_type_and_version() {
        let mut bytes = encode(&E2Message::new(1, 1, Body::Heartbeat(HeartbeatBody {}))).unwrap();
        bytes[5] = 99;
        assert!(matches!(decode(&bytes), Err(CodecError::UnknownType(99))));
        bytes[5] = MsgType::Heartbeat as u8;
        bytes[4] = 2;
        let err = decode(&bytes).unwrap_err();
        assert!(matches!(err, CodecError::UnsupportedVersion { version: 2, cell_id: 1, seq: 1 }));
        assert_eq!(err.reply_code(), Some(ErrorCode::UnsupportedVersion));
    }

    #[test]
    fn wrong_body_for_type() {
        let mut bytes = encode(&E2Message::new(1, 1, Body::Heartbeat(HeartbeatBody {}))).unwrap();
        bytes[5] = MsgType::Control as u8;
        assert!(matches!(decode(&bytes), Err(CodecError::MalformedBody(_))));
    }

    #[test]
    fn oversized_frames() {
        let m = E2Message::new(1, 1, Body::Indication(kpm(20_000)));
        assert!(matches!(encode(&m), Err(CodecError::FrameTooLarge(_))));
        let prefix = ((MAX_FRAME_LEN + 1) as u32).to_be_bytes();
        let mut r = &prefix[..];
        assert!(matches!(read_frame(&mut r), Err(CodecError::FrameTooLarge(_))));
    }

    #[test]
    fn stream_of_frames() {
        let a = E2Message::new(1, 1, Body::Subscribe(SubscribeBody { window_ms: 100 }));
        let b = E2Message::new(1, 2, Body::ControlAck(ControlAckBody { window_id: 3, blocklist_size: 1 }));
        let mut buf = Vec::new();
        write_message(&mut buf, &a).unwrap();
        write_message(&mut buf, &b).unwrap();
        let mut r = &buf[..];
        assert_eq!(decode_payload(&read_frame(&mut r).unwrap().unwrap()).unwrap(), a);
        assert_eq!(decode_payload(&read_frame(&mut r).unwrap().unwrap()).unwrap(), b);
        assert!(read_frame(&mut r).unwrap().is_none());
    }

    proptest! {
        #[test]
        fn control_round_trips(
            cell in any::<u32>(),
            seq in any::<u64>(),
            pts in prop::collection::vec((0.0f64..64.0, -140.0f64..0.0), 0..20),
        ) {
            let centroids: Vec<Centroid> = pts.iter().map(|&(t, r)| Centroid::new(t, r)).collect();
            let kind = if centroids.is_empty() { VerdictKind::NormalLoad } else { VerdictKind::AttackDetected };
            let verdict = DetectionVerdict {
                kind,
                reason: VerdictReason::DenseCluster,
                malicious_centroids: centroids.clone(),
                r1: 0.125,
                r2: 1.0 / 3.0,
            };
            let m = E2Message::new(cell, seq, Body::Control(ControlBody { window_id: seq / 2, verdict, centroids }));
            prop_assert_eq!(decode(&encode(&m).unwrap()).unwrap(), m);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode(&bytes);
            let _ = decode_payload(&bytes);
        }
    }
}
