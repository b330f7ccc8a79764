//! Binary datagram layout, all little-endian.
//!
//! Every message starts with `"HOLO"`, a version byte and a message type byte.
//! Pose and marker frames then carry `u32 frame_id, u64 t_capture_ns,
//! u64 t_send_ns` (26 header bytes in total) followed by fixed-size records
//! that fill the rest of the datagram; the record count is the payload length
//! divided by the record size.
//!
//! | type | payload                                                        |
//! |------|----------------------------------------------------------------|
//! | 0    | per body: u16 id, u8 status, 3×f32 position, 4×f32 wxyz, f32 residual (35 bytes) |
//! | 1    | per marker: 3×f32 position (12 bytes)                          |
//! | 2    | time sync: u64 t_client (request) or u64 t_client, u64 t_server (response) |

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"HOLO";
pub const VERSION: u8 = 1;
pub const MSG_POSE: u8 = 0;
pub const MSG_MARKERS: u8 = 1;
pub const MSG_TIME_SYNC: u8 = 2;

pub const FRAME_HEADER_LEN: usize = 26;
pub const BODY_RECORD_LEN: usize = 35;
pub const MARKER_RECORD_LEN: usize = 12;
pub const MAX_BODIES: usize = 255;
pub const MAX_MARKERS: usize = 4096;
const PREFIX_LEN: usize = 6;
const TIME_REQUEST_LEN: usize = PREFIX_LEN + 8;
const TIME_RESPONSE_LEN: usize = PREFIX_LEN + 16;

pub const STATUS_TRACKED: u8 = 0;
pub const STATUS_LOST: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("message truncated: need {needed} bytes, have {actual}")]
    Truncated { needed: usize, actual: usize },
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("unknown message type {0}")]
    UnknownMessageType(u8),
    #[error("expected message type {expected}, got {actual}")]
    UnexpectedMessageType { expected: u8, actual: u8 },
    #[error("{0} bodies exceed the limit of 255")]
    TooManyBodies(usize),
    #[error("{0} markers exceed the limit of 4096")]
    TooManyMarkers(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyPose {
    pub body_id: u16,
    pub status: u8,
    pub position: [f32; 3],
    /// (w, x, y, z)
    pub orientation: [f32; 4],
    pub residual: f32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoseFrame {
    pub frame_id: u32,
    pub t_capture_ns: u64,
    pub t_send_ns: u64,
    pub bodies: Vec<BodyPose>,
}

impl PoseFrame {
    pub fn encoded_len(&self) -> usize {
        FRAME_HEADER_LEN + BODY_RECORD_LEN * self.bodies.len()
    }

    pub fn body(&self, body_id: u16) -> Option<&BodyPose> {
        self.bodies.iter().find(|b| b.body_id == body_id)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarkerFrame {
    pub frame_id: u32,
    pub t_capture_ns: u64,
    pub t_send_ns: u64,
    pub points: Vec<[f32; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Pose(PoseFrame),
    Markers(MarkerFrame),
    TimeRequest { t_client: u64 },
    TimeResponse { t_client: u64, t_server: u64 },
}

pub fn encode_pose_frame(frame: &PoseFrame) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(frame.encoded_len());
    encode_pose_frame_into(frame, &mut out)?;
    Ok(out)
}

pub fn encode_pose_frame_into(frame: &PoseFrame, out: &mut Vec<u8>) -> Result<(), WireError> {
    if frame.bodies.len() > MAX_BODIES {
        return Err(WireError::TooManyBodies(frame.bodies.len()));
    }
    out.clear();
    put_frame_header(out, MSG_POSE, frame.frame_id, frame.t_capture_ns, frame.t_send_ns);
    for b in &frame.bodies {
        out.extend_from_slice(&b.body_id.to_le_bytes());
        out.push(b.status);
        for v in b.position.iter().chain(&b.orientation) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&b.residual.to_le_bytes());
    }
    Ok(())
}

pub fn encode_marker_frame(frame: &MarkerFrame) -> Result<Vec<u8>, WireError> {
    if frame.points.len() > MAX_MARKERS {
        return Err(WireError::TooManyMarkers(frame.points.len()));
    }
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + MARKER_RECORD_LEN * frame.points.len());
    put_frame_header(&mut out, MSG_MARKERS, frame.frame_id, frame.t_capture_ns, frame.t_send_ns);
    for p in &frame.points {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn encode_time_request(t_client: u64) -> Vec<u8> {
    let mut out = prefix(MSG_TIME_SYNC);
    out.extend_from_slice(&t_client.to_le_bytes());
    out
}

pub fn encode_time_response(t_client: u64, t_server: u64) -> Vec<u8> {
    let mut out = prefix(MSG_TIME_SYNC);
    out.extend_from_slice(&t_client.to_le_bytes());
    out.extend_from_slice(&t_server.to_le_bytes());
    out
}

fn prefix(msg_type: u8) -> Vec<u8> {
    let mut out = Vec::with_capacity(TIME_RESPONSE_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg_type);
    out
}

fn put_frame_header(out: &mut Vec<u8>, msg_type: u8, frame_id: u32, t_capture: u64, t_send: u64) {
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg_type);
    out.extend_from_slice(&frame_id.to_le_bytes());
    out.extend_from_slice(&t_capture.to_le_bytes());
    out.extend_from_slice(&t_send.to_le_bytes());
}

/// Decodes a pose frame; any other well-formed message type is an error.
pub fn decode_pose_frame(bytes: &[u8]) -> Result<PoseFrame, WireError> {
    match decode_message(bytes)? {
        Message::Pose(f) => Ok(f),
        other => Err(WireError::UnexpectedMessageType {
            expected: MSG_POSE,
            actual: message_type(&other),
        }),
    }
}

fn message_type(m: &Message) -> u8 {
    match m {
        Message::Pose(_) => MSG_POSE,
        Message::Markers(_) => MSG_MARKERS,
        Message::TimeRequest { .. } | Message::TimeResponse { .. } => MSG_TIME_SYNC,
    }
}

/// Total over all byte strings: returns a message or an error, never panics.
pub fn decode_message(bytes: &[u8]) -> Result<Message, WireError> {
    let check_len = |needed: usize| {
        if bytes.len() < needed {
            Err(WireError::Truncated {
                needed,
                actual: bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    let magic_len = bytes.len().min(4);
    if bytes[..magic_len] != MAGIC[..magic_len] {
        return Err(WireError::BadMagic);
    }
    check_len(PREFIX_LEN)?;
    if bytes[4] != VERSION {
        return Err(WireError::UnsupportedVersion(bytes[4]));
    }
    match bytes[5] {
        MSG_POSE => {
            check_len(FRAME_HEADER_LEN)?;
            let (frame_id, t_capture_ns, t_send_ns) = frame_header(bytes);
            let records = records(&bytes[FRAME_HEADER_LEN..], BODY_RECORD_LEN)?;
            if records.len() > MAX_BODIES {
                return Err(WireError::TooManyBodies(records.len()));
            }
            let bodies = records
                .iter()
                .map(|r| BodyPose {
                    body_id: u16::from_le_bytes([r[0], r[1]]),
                    status: r[2],
                    position: [f32_at(r, 3), f32_at(r, 7), f32_at(r, 11)],
                    orientation: [f32_at(r, 15), f32_at(r, 19), f32_at(r, 23), f32_at(r, 27)],
                    residual: f32_at(r, 31),
                })
                .collect();
            Ok(Message::Pose(PoseFrame {
                frame_id,
                t_capture_ns,
                t_send_ns,
                bodies,
            }))
        }
        MSG_MARKERS => {
            check_len(FRAME_HEADER_LEN)?;
            let (frame_id, t_capture_ns, t_send_ns) = frame_header(bytes);
            let records = records(&bytes[FRAME_HEADER_LEN..], MARKER_RECORD_LEN)?;
            if records.len() > MAX_MARKERS {
                return Err(WireError::TooManyMarkers(records.len()));
            }
            Ok(Message::Markers(MarkerFrame {
                frame_id,
                t_capture_ns,
                t_send_ns,
                points: records
                    .iter()
                    .map(|r| [f32_at(r, 0), f32_at(r, 4), f32_at(r, 8)])
                    .collect(),
            }))
        }
        MSG_TIME_SYNC => {
            check_len(TIME_REQUEST_LEN)?;
            let t_client = u64_at(bytes, PREFIX_LEN);
            match bytes.len() {
                TIME_REQUEST_LEN => Ok(Message::TimeRequest { t_client }),
                n if n < TIME_RESPONSE_LEN => Err(WireError::Truncated {
                    needed: TIME_RESPONSE_LEN,
                    actual: n,
                }),
                TIME_RESPONSE_LEN => Ok(Message::TimeResponse {
                    t_client,
                    t_server: u64_at(bytes, PREFIX_LEN + 8),
                }),
                n => Err(WireError::TrailingBytes(n - TIME_RESPONSE_LEN)),
            }
        }
        other => Err(WireError::UnknownMessageType(other)),
    }
}

fn records(payload: &[u8], size: usize) -> Result<Vec<&[u8]>, WireError> {
    let rest = payload.len() % size;
    if rest != 0 {
        return Err(WireError::TrailingBytes(rest));
    }
    Ok(payload.chunks_exact(size).collect())
}

fn frame_header(bytes: &[u8]) -> (u32, u64, u64) {
    (
        u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]),
        u64_at(bytes, 10),
        u64_at(bytes, 18),
    )
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    let mut a = [0u8; 8];
    a.copy_from_slice(&b[at..at + 8]);
    u64::from_le_bytes(a)
}

fn f32_at(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}
