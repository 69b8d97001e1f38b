//! Length-prefixed JSON messages: a 4-byte big-endian byte count followed by
//! that many bytes of UTF-8 JSON.

use std::io::{ErrorKind, Read, Write};

use serde::{Deserialize, Serialize};

use super::job::{CompletionStatus, RenderJob, StateCounts};
use super::report::BatchReport;
use super::FarmError;

pub const MAX_FRAME_BYTES: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    Hello {
        worker_id: String,
        capacity: usize,
    },
    Poll {
        worker_id: String,
    },
    Assign {
        jobs: Vec<RenderJob>,
    },
    Heartbeat {
        worker_id: String,
    },
    Complete {
        worker_id: String,
        job_id: String,
        status: CompletionStatus,
        #[serde(default)]
        detail: String,
    },
    Report {
        batch_id: String,
    },
    Enqueue {
        jobs: Vec<RenderJob>,
    },
    Ack {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        warning: Option<String>,
    },
    BatchReport {
        report: BatchReport,
        counts: StateCounts,
    },
    Error {
        message: String,
    },
}

impl Message {
    pub fn ack() -> Self {
        Message::Ack {
            batch_id: None,
            warning: None,
        }
    }
}

pub fn write_frame<W: Write>(out: &mut W, msg: &Message) -> Result<(), FarmError> {
    let body = serde_json::to_vec(msg)?;
    if body.len() > MAX_FRAME_BYTES {
        return Err(FarmError::Protocol(format!("message of {} bytes is too large", body.len())));
    }
    out.write_all(&(body.len() as u32).to_be_bytes())?;
    out.write_all(&body)?;
    out.flush()?;
    Ok(())
}

/// Reads one message. `Ok(None)` means the peer closed the connection
/// cleanly before a new frame started.
pub fn read_frame<R: Read>(input: &mut R) -> Result<Option<Message>, FarmError> {
    let mut len = [0u8; 4];
    match input.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(FarmError::Protocol(format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len];
    input.read_exact(&mut body)?;
    let text = std::str::from_utf8(&body)
        .map_err(|e| FarmError::Protocol(format!("frame is not UTF-8: {e}")))?;
    Ok(Some(serde_json::from_str(text)?))
}
