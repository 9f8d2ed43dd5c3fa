//! Length-prefixed framing for snapshot and delta streams.
//!
//! A stream is a sequence of frames `[u32 length][payload]`. The payload is
//! either a full snapshot (`VOXMAP01`) or a delta (`VOXDLT01`). Streams
//! written by the CLI start with a snapshot, which carries the
//! configuration that later deltas are checked against.

use std::io::{self, Read, Write};

use super::{apply_decoded, corrupt, decode_snapshot, ApplyOutcome, CodecError, Delta, DELTA_MAGIC, MAP_MAGIC};
use crate::octree::{MapConfig, OccupancyMap};

/// Frames longer than this are rejected as corrupt.
pub const MAX_FRAME_LEN: u32 = 1 << 30;

pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too long"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(payload)
}

/// Next frame, or `None` at a clean end of stream. A stream ending inside
/// a frame is corrupt.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>, CodecError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(corrupt("truncated frame length")),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(CodecError::Io(e.to_string())),
        }
    }
    let len = u32::from_le_bytes(len);
    if len > MAX_FRAME_LEN {
        return Err(corrupt(format!("frame length {len} too large")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => corrupt("truncated frame"),
        _ => CodecError::Io(e.to_string()),
    })?;
    Ok(Some(buf))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameOutcome {
    Snapshot { nodes: usize },
    Delta(ApplyOutcome),
}

/// Receiving end of a stream.
///
/// Tracks the next expected delta sequence number. After a snapshot the
/// next delta may carry any number; after that numbers must be consecutive.
/// Repeated deltas are skipped.
#[derive(Debug, Clone)]
pub struct Replica {
    map: Option<OccupancyMap>,
    expected: Option<u64>,
}

impl Default for Replica {
    fn default() -> Self {
        Self::new()
    }
}

impl Replica {
    /// A replica that takes its configuration from the first snapshot.
    pub fn new() -> Self {
        Self { map: None, expected: None }
    }

    /// A replica starting from `map`, expecting `map.next_sequence()` next.
    pub fn from_map(map: OccupancyMap) -> Self {
        let expected = Some(map.next_sequence());
        Self {
            map: Some(map),
            expected,
        }
    }

    /// A replica starting from a stored map whose sequence number is not
    /// known. The first delta may carry any number.
    pub fn resume(map: OccupancyMap) -> Self {
        Self {
            map: Some(map),
            expected: None,
        }
    }

    pub fn map(&self) -> Option<&OccupancyMap> {
        self.map.as_ref()
    }

    pub fn into_map(self) -> Option<OccupancyMap> {
        self.map
    }

    pub fn config(&self) -> Option<&MapConfig> {
        self.map.as_ref().map(|m| m.config())
    }

    /// Sequence number of the last applied delta.
    pub fn last_sequence(&self) -> Option<u64> {
        self.expected.and_then(|e| e.checked_sub(1))
    }

    /// Decodes one frame payload completely, then applies it.
    pub fn apply_frame(&mut self, payload: &[u8]) -> Result<FrameOutcome, CodecError> {
        if payload.len() < 8 {
            return Err(corrupt("frame shorter than its magic"));
        }
        let magic: [u8; 8] = payload[..8].try_into().unwrap();
        if magic == MAP_MAGIC {
            let snap = decode_snapshot(payload)?;
            if let Some(m) = &self.map {
                if *m.config() != snap.header.config {
                    return Err(CodecError::ConfigMismatch);
                }
            }
            let mut map = OccupancyMap::new(snap.header.config)?;
            let nodes = snap.records.len();
            super::apply_records(&mut map, &snap.records)?;
            self.map = Some(map);
            self.expected = None;
            Ok(FrameOutcome::Snapshot { nodes })
        } else if magic == DELTA_MAGIC {
            let Some(map) = self.map.as_mut() else {
                return Err(corrupt("delta before any snapshot"));
            };
            let delta = Delta::decode(payload, map.config().depth_levels)?;
            let out = apply_decoded(map, &delta, self.expected)?;
            if let ApplyOutcome::Applied { sequence, .. } = out {
                self.expected = Some(sequence + 1);
            }
            Ok(FrameOutcome::Delta(out))
        } else {
            Err(corrupt("unknown frame magic"))
        }
    }

    /// Applies frames until the end of `r`. Stops at the first error; frames
    /// before it stay applied.
    pub fn consume(&mut self, r: &mut impl Read) -> Result<usize, CodecError> {
        let mut n = 0;
        while let Some(frame) = read_frame(r)? {
            self.apply_frame(&frame)?;
            n += 1;
        }
        Ok(n)
    }
}
