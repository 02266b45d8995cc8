//! Wire format between the search server and robot clients.
//!
//! A frame is a 4-byte big-endian payload length followed by a UTF-8 JSON
//! object whose `type` field names the message variant.

use std::io::{self, Read, Write};

use live_core::geometry::Pose2;
use live_core::planner::{PlannerMode, RobotSpec};
use live_core::waypoint_manager::WmState;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest payload accepted from the wire.
pub const MAX_FRAME: usize = 64 << 20;

const TYPES: [&str; 5] = ["Register", "Plan", "Update", "Ack", "Done"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Message {
    Register {
        robot: String,
        spec: RobotSpec,
    },
    /// The run parameters ride along so clients cannot drift from the server.
    Plan {
        robot: String,
        viewpoints: Vec<Pose2>,
        seed: u64,
        mode: PlannerMode,
    },
    Update {
        robot: String,
        tick: u64,
        believed_pose: Pose2,
        lidar_footprint_pose: Pose2,
        camera_footprint_pose: Pose2,
        wm_state: WmState,
        reached: bool,
        skipped: bool,
        priority_accepted: bool,
    },
    Ack {
        tick: u64,
        /// Search-map cells that became visually observed this tick.
        observed: Vec<u32>,
        finished: bool,
    },
    Done {
        robot: String,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Register { .. } => "Register",
            Message::Plan { .. } => "Plan",
            Message::Update { .. } => "Update",
            Message::Ack { .. } => "Ack",
            Message::Done { .. } => "Done",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("truncated frame: {needed} bytes declared or required, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("frame of {0} bytes exceeds the {MAX_FRAME} byte limit")]
    TooLarge(usize),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("missing field {0:?}")]
    MissingField(String),
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("{0} trailing bytes after frame")]
    Trailing(usize),
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

pub fn encode_message(m: &Message) -> Vec<u8> {
    let payload = serde_json::to_vec(m).expect("messages serialise");
    let mut out = Vec::with_capacity(payload.len() + 4);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_message(bytes: &[u8]) -> Result<Message, DecodeError> {
    let (m, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(DecodeError::Trailing(bytes.len() - used));
    }
    Ok(m)
}

/// Decodes the first frame in `bytes`, returning it and the bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(Message, usize), DecodeError> {
    if bytes.len() < 4 {
        return Err(DecodeError::Truncated {
            needed: 4,
            available: bytes.len(),
        });
    }
    let len = u32::from_be_bytes(bytes[..4].try_into().expect("four bytes")) as usize;
    if len > MAX_FRAME {
        return Err(DecodeError::TooLarge(len));
    }
    let body = &bytes[4..];
    if body.len() < len {
        return Err(DecodeError::Truncated {
            needed: len,
            available: body.len(),
        });
    }
    Ok((decode_payload(&body[..len])?, 4 + len))
}

pub fn decode_payload(payload: &[u8]) -> Result<Message, DecodeError> {
    let value: serde_json::Value =
        serde_json::from_slice(payload).map_err(|e| DecodeError::Malformed(e.to_string()))?;
    let kind = match value.get("type") {
        None => return Err(DecodeError::MissingField("type".into())),
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(other) => return Err(DecodeError::Malformed(format!("type is {other}"))),
    };
    if !TYPES.contains(&kind.as_str()) {
        return Err(DecodeError::UnknownType(kind));
    }
    serde_json::from_value(value).map_err(|e| {
        let msg = e.to_string();
        match msg.strip_prefix("missing field `").and_then(|rest| rest.split('`').next()) {
            Some(field) => DecodeError::MissingField(field.to_string()),
            None => DecodeError::Malformed(msg),
        }
    })
}

pub fn write_message(w: &mut impl Write, m: &Message) -> io::Result<()> {
    w.write_all(&encode_message(m))?;
    w.flush()
}

/// Reads one frame. `Ok(None)` means the peer closed the stream cleanly
/// between frames.
pub fn read_message(r: &mut impl Read) -> Result<Option<Message>, WireError> {
    let mut header = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(DecodeError::Truncated {
                    needed: 4,
                    available: got,
                }
                .into())
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME {
        return Err(DecodeError::TooLarge(len).into());
    }
    let mut payload = vec![0u8; len];
    let mut filled = 0;
    while filled < len {
        match r.read(&mut payload[filled..]) {
            Ok(0) => {
                return Err(DecodeError::Truncated {
                    needed: len,
                    available: filled,
                }
                .into())
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Some(decode_payload(&payload)?))
}
