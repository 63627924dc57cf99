//! Mutator wire protocol: each frame is a 4-byte big-endian payload length
//! followed by a UTF-8 JSON object.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{CovrlError, Result};

/// Frames larger than this are rejected as malformed.
pub const MAX_FRAME_LEN: usize = 64 << 20;

pub const DEFAULT_TOP_K: u32 = 32;
pub const DEFAULT_CONTRASTIVE_ALPHA: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub top_k: u32,
    pub contrastive_alpha: f64,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            top_k: DEFAULT_TOP_K,
            contrastive_alpha: DEFAULT_CONTRASTIVE_ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfillRequest {
    pub id: u64,
    pub masked_tokens: Vec<String>,
    pub slots: usize,
    pub decode: DecodeOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneRecord {
    pub masked_tokens: Vec<String>,
    pub fill_tokens: Vec<Vec<String>>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneRequest {
    pub cycle: u64,
    pub records: Vec<FinetuneRecord>,
    pub epochs: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Infill(InfillRequest),
    Finetune(FinetuneRequest),
    Ping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub cycle: u64,
    pub loss_before: f64,
    pub loss_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Infill { id: u64, fills: Vec<Vec<String>> },
    Finetune(FinetuneReport),
    Pong { model: String },
    Error { message: String },
}

/// Writes one frame. I/O failures are transport errors.
pub fn write_frame<W: Write>(out: &mut W, payload: &[u8]) -> Result<()> {
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|&l| l as usize <= MAX_FRAME_LEN)
        .ok_or_else(|| CovrlError::Protocol(format!("frame of {} bytes too large", payload.len())))?;
    out.write_all(&len.to_be_bytes())
        .and_then(|_| out.write_all(payload))
        .and_then(|_| out.flush())
        .map_err(CovrlError::Transport)
}

/// Reads one frame; `Ok(None)` on a clean end of stream between frames.
pub fn read_frame<R: Read>(input: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match input.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(CovrlError::Transport(io::Error::new(
                    io::ErrorKind::UnexpectedEof,
                    "stream closed inside frame header",
                )))
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(CovrlError::Transport(e)),
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_LEN {
        return Err(CovrlError::Protocol(format!("declared frame length {len} too large")));
    }
    let mut payload = vec![0u8; len];
    input.read_exact(&mut payload).map_err(CovrlError::Transport)?;
    Ok(Some(payload))
}

pub fn encode<T: Serialize>(message: &T) -> Result<Vec<u8>> {
    let payload = serde_json::to_vec(message)?;
    let mut frame = Vec::with_capacity(payload.len() + 4);
    write_frame(&mut frame, &payload)?;
    Ok(frame)
}

pub fn decode_payload<T: for<'de> Deserialize<'de>>(payload: &[u8]) -> Result<T> {
    serde_json::from_slice(payload).map_err(|e| CovrlError::Protocol(format!("malformed payload: {e}")))
}

pub fn send<W: Write, T: Serialize>(out: &mut W, message: &T) -> Result<()> {
    let payload = serde_json::to_vec(message)?;
    write_frame(out, &payload)
}

pub fn receive<R: Read, T: for<'de> Deserialize<'de>>(input: &mut R) -> Result<Option<T>> {
    match read_frame(input)? {
        Some(payload) => decode_payload(&payload).map(Some),
        None => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ping_frame_bytes() {
        let frame = encode(&Request::Ping).unwrap();
        let payload = br#"{"type":"ping"}"#;
        assert_eq!(&frame[..4], &(payload.len() as u32).to_be_bytes());
        assert_eq!(&frame[4..], payload);
    }

    #[test]
    fn infill_layout() {
        let req = Request::Infill(InfillRequest {
            id: 7,
            masked_tokens: vec!["a".into(), "<extra_id_0>".into()],
            slots: 1,
            decode: DecodeOptions::default(),
        });
        let frame = encode(&req).unwrap();
        assert_eq!(
            std::str::from_utf8(&frame[4..]).unwrap(),
            r#"{"type":"infill","id":7,"masked_tokens":["a","<extra_id_0>"],"slots":1,"decode":{"top_k":32,"contrastive_alpha":0.6}}"#
        );
        let back: Request = receive(&mut frame.as_slice()).unwrap().unwrap();
        assert_eq!(back, req);
    }

    #[test]
    fn truncated_and_oversized_frames() {
        let frame = encode(&Request::Ping).unwrap();
        assert!(matches!(
            read_frame(&mut &frame[..2]),
            Err(CovrlError::Transport(_))
        ));
        assert!(matches!(
            read_frame(&mut &frame[..frame.len() - 1]),
            Err(CovrlError::Transport(_))
        ));
        let huge = (MAX_FRAME_LEN as u32 + 1).to_be_bytes();
        assert!(matches!(read_frame(&mut &huge[..]), Err(CovrlError::Protocol(_))));
        assert!(read_frame(&mut &[][..]).unwrap().is_none());
    }

    #[test]
    fn malformed_json_is_protocol_error() {
        let mut frame = Vec::new();
        write_frame(&mut frame, b"{not json").unwrap();
        assert!(matches!(
            receive::<_, Request>(&mut frame.as_slice()),
            Err(CovrlError::Protocol(_))
        ));
    }
}
