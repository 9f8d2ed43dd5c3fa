//! Binary map snapshots, incremental deltas and replica reconstruction.
//!
//! All integers and floats are little-endian. A snapshot is a 75-byte header
//! followed by one record per stored node. A delta is `VOXDLT01`, a `u64`
//! sequence number, a `u32` record count and the records. Records are sorted
//! by depth descending, then Morton code ascending.
//!
//! Record layout:
//!
//! | bytes | field |
//! |---|---|
//! | 8 | Morton code |
//! | 1 | depth |
//! | 1 | bitmap: bit 0 log-odds, 1 colour, 2 timestep, 3 semantics, 6 collapsed, 7 tombstone |
//! | 8 | log-odds (`f64`) |
//! | 3 + 4 | colour and colour weight (`u32`) |
//! | 4 | timestep (`u32`) |
//! | 2 + 6n | pair count, then `(u16 label, u32 count)` pairs |

mod stream;

use std::io::{self, Cursor, Read};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

pub use stream::{read_frame, write_frame, FrameOutcome, Replica, MAX_FRAME_LEN};

use crate::error::MapError;
use crate::octree::{LabelCount, LeafPayload, MapConfig, NodeCode, OccupancyMap, Semantics};

pub const MAP_MAGIC: [u8; 8] = *b"VOXMAP01";
pub const DELTA_MAGIC: [u8; 8] = *b"VOXDLT01";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 75;
pub const DELTA_HEADER_LEN: usize = 20;

pub const FIELD_LOG_ODDS: u8 = 1 << 0;
pub const FIELD_COLOR: u8 = 1 << 1;
pub const FIELD_TIMESTEP: u8 = 1 << 2;
pub const FIELD_SEMANTICS: u8 = 1 << 3;
pub const FLAG_COLLAPSED: u8 = 1 << 6;
pub const FLAG_TOMBSTONE: u8 = 1 << 7;
const ALL_FIELDS: u8 = FIELD_LOG_ODDS | FIELD_COLOR | FIELD_TIMESTEP | FIELD_SEMANTICS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("stream configuration does not match the replica")]
    ConfigMismatch,
    #[error("corrupt stream: {0}")]
    CorruptStream(String),
    #[error("delta {got} out of order, expected {expected}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("unsupported format version {0}")]
    BadVersion(u16),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

fn corrupt(msg: impl Into<String>) -> CodecError {
    CodecError::CorruptStream(msg.into())
}

fn read_err(e: io::Error) -> CodecError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        corrupt("truncated")
    } else {
        CodecError::Io(e.to_string())
    }
}

/// Snapshot header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapFileHeader {
    pub version: u16,
    pub config: MapConfig,
    pub node_count: u64,
}

impl MapFileHeader {
    pub fn write(&self, out: &mut Vec<u8>) {
        let c = &self.config;
        out.extend_from_slice(&MAP_MAGIC);
        out.write_u16::<LE>(self.version).unwrap();
        out.write_f64::<LE>(c.resolution).unwrap();
        out.write_u8(c.depth_levels).unwrap();
        for v in [c.p_hit, c.p_miss, c.l_min, c.l_max, c.occ_threshold, c.free_threshold] {
            out.write_f64::<LE>(v).unwrap();
        }
        out.write_u64::<LE>(self.node_count).unwrap();
    }

    pub fn read(r: &mut impl Read) -> Result<Self, CodecError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(read_err)?;
        if magic != MAP_MAGIC {
            return Err(corrupt("bad map magic"));
        }
        let version = r.read_u16::<LE>().map_err(read_err)?;
        if version != FORMAT_VERSION {
            return Err(CodecError::BadVersion(version));
        }
        let resolution = r.read_f64::<LE>().map_err(read_err)?;
        let depth_levels = r.read_u8().map_err(read_err)?;
        let mut f = [0f64; 6];
        for v in &mut f {
            *v = r.read_f64::<LE>().map_err(read_err)?;
        }
        let config = MapConfig {
            resolution,
            depth_levels,
            p_hit: f[0],
            p_miss: f[1],
            l_min: f[2],
            l_max: f[3],
            occ_threshold: f[4],
            free_threshold: f[5],
        };
        config
            .validate()
            .map_err(|e| corrupt(format!("header carries an invalid configuration: {e}")))?;
        let node_count = r.read_u64::<LE>().map_err(read_err)?;
        Ok(Self {
            version,
            config,
            node_count,
        })
    }
}

/// One node of a snapshot or delta.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub code: NodeCode,
    pub body: RecordBody,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordBody {
    /// Node stored with this payload; for collapsed nodes a leaf payload.
    Put {
        payload: LeafPayload,
        collapsed: bool,
    },
    Tombstone,
}

impl Record {
    /// Encoded length in bytes.
    pub fn encoded_len(&self) -> usize {
        match &self.body {
            RecordBody::Tombstone => 10,
            RecordBody::Put { payload, .. } => 10 + 8 + 7 + 4 + 2 + 6 * payload.semantics.len(),
        }
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        out.write_u64::<LE>(self.code.morton()).unwrap();
        out.write_u8(self.code.depth()).unwrap();
        match &self.body {
            RecordBody::Tombstone => out.write_u8(FLAG_TOMBSTONE).unwrap(),
            RecordBody::Put { payload, collapsed } => {
                let mut bits = ALL_FIELDS;
                if *collapsed {
                    bits |= FLAG_COLLAPSED;
                }
                out.write_u8(bits).unwrap();
                out.write_f64::<LE>(payload.log_odds).unwrap();
                out.extend_from_slice(&payload.color.0);
                out.write_u32::<LE>(payload.color_weight).unwrap();
                out.write_u32::<LE>(payload.timestep).unwrap();
                out.write_u16::<LE>(payload.semantics.len() as u16).unwrap();
                for lc in payload.semantics.iter() {
                    out.write_u16::<LE>(lc.label).unwrap();
                    out.write_u32::<LE>(lc.count).unwrap();
                }
            }
        }
    }

    /// Reads one record. Fields missing from the bitmap take their
    /// unknown-payload defaults.
    pub fn read(r: &mut impl Read, depth_levels: u8) -> Result<Self, CodecError> {
        let morton = r.read_u64::<LE>().map_err(read_err)?;
        let depth = r.read_u8().map_err(read_err)?;
        let bits = r.read_u8().map_err(read_err)?;
        let code = NodeCode::new(morton, depth).ok_or_else(|| corrupt(format!("non-canonical code {morton:#x} at depth {depth}")))?;
        if depth > depth_levels || morton >> (3 * u32::from(depth_levels)) != 0 {
            return Err(corrupt(format!("code {code} outside the map")));
        }
        if bits & 0b0011_0000 != 0 {
            return Err(corrupt(format!("reserved bitmap bits set in {bits:#010b}")));
        }
        if bits & FLAG_TOMBSTONE != 0 {
            if bits != FLAG_TOMBSTONE {
                return Err(corrupt("tombstone with payload fields"));
            }
            return Ok(Self {
                code,
                body: RecordBody::Tombstone,
            });
        }
        let mut payload = LeafPayload::default();
        if bits & FIELD_LOG_ODDS != 0 {
            payload.log_odds = r.read_f64::<LE>().map_err(read_err)?;
            if !payload.log_odds.is_finite() {
                return Err(corrupt("non-finite log-odds"));
            }
        }
        if bits & FIELD_COLOR != 0 {
            r.read_exact(&mut payload.color.0).map_err(read_err)?;
            payload.color_weight = r.read_u32::<LE>().map_err(read_err)?;
        }
        if bits & FIELD_TIMESTEP != 0 {
            payload.timestep = r.read_u32::<LE>().map_err(read_err)?;
        }
        if bits & FIELD_SEMANTICS != 0 {
            let n = r.read_u16::<LE>().map_err(read_err)?;
            let mut s = Semantics::new();
            for _ in 0..n {
                let label = r.read_u16::<LE>().map_err(read_err)?;
                let count = r.read_u32::<LE>().map_err(read_err)?;
                s.push_sorted_unchecked(LabelCount { label, count });
            }
            if !s.is_well_formed() {
                return Err(corrupt(format!("malformed label list in {code}")));
            }
            payload.semantics = s;
        }
        let collapsed = bits & FLAG_COLLAPSED != 0;
        if collapsed && depth == 0 {
            return Err(corrupt("collapsed flag on a leaf"));
        }
        Ok(Self {
            code,
            body: RecordBody::Put { payload, collapsed },
        })
    }
}

fn sort_records(records: &mut [Record]) {
    records.sort_unstable_by(|a, b| {
        b.code
            .depth()
            .cmp(&a.code.depth())
            .then(a.code.morton().cmp(&b.code.morton()))
    });
}

fn snapshot_records(map: &OccupancyMap) -> Vec<Record> {
    map.nodes()
        .into_iter()
        .map(|n| Record {
            code: n.code,
            body: RecordBody::Put {
                payload: n.payload.clone(),
                collapsed: n.collapsed,
            },
        })
        .collect()
}

/// Header plus every stored node, summaries as they currently stand.
pub fn serialize_full(map: &OccupancyMap) -> Vec<u8> {
    let records = snapshot_records(map);
    let mut out = Vec::with_capacity(HEADER_LEN + records.iter().map(Record::encoded_len).sum::<usize>());
    MapFileHeader {
        version: FORMAT_VERSION,
        config: *map.config(),
        node_count: records.len() as u64,
    }
    .write(&mut out);
    for r in &records {
        r.write(&mut out);
    }
    out
}

/// Parsed snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub header: MapFileHeader,
    pub records: Vec<Record>,
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot, CodecError> {
    let mut r = Cursor::new(bytes);
    let header = MapFileHeader::read(&mut r)?;
    let remaining = bytes.len() as u64 - r.position();
    // Every record takes at least 10 bytes.
    if header.node_count > remaining / 10 {
        return Err(corrupt("node count exceeds stream length"));
    }
    let mut records = Vec::with_capacity(header.node_count as usize);
    for _ in 0..header.node_count {
        let rec = Record::read(&mut r, header.config.depth_levels)?;
        if rec.body == RecordBody::Tombstone {
            return Err(corrupt("tombstone in snapshot"));
        }
        records.push(rec);
    }
    if r.position() != bytes.len() as u64 {
        return Err(corrupt("trailing bytes after snapshot"));
    }
    Ok(Snapshot { header, records })
}

/// Rebuilds a map from a snapshot. The result has no pending changes.
pub fn deserialize(bytes: &[u8]) -> Result<OccupancyMap, CodecError> {
    let snap = decode_snapshot(bytes)?;
    let mut map = OccupancyMap::new(snap.header.config)?;
    apply_records(&mut map, &snap.records)?;
    Ok(map)
}

fn apply_records(map: &mut OccupancyMap, records: &[Record]) -> Result<(), CodecError> {
    for rec in records {
        match &rec.body {
            RecordBody::Put { payload, collapsed } => map.put_node(rec.code, payload.clone(), *collapsed)?,
            RecordBody::Tombstone => map.remove_node(rec.code),
        }
    }
    Ok(())
}

/// Parsed delta.
#[derive(Debug, Clone, PartialEq)]
pub struct Delta {
    pub sequence: u64,
    pub records: Vec<Record>,
}

impl Delta {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(DELTA_HEADER_LEN + self.records.iter().map(Record::encoded_len).sum::<usize>());
        out.extend_from_slice(&DELTA_MAGIC);
        out.write_u64::<LE>(self.sequence).unwrap();
        out.write_u32::<LE>(self.records.len() as u32).unwrap();
        for r in &self.records {
            r.write(&mut out);
        }
        out
    }

    pub fn decode(bytes: &[u8], depth_levels: u8) -> Result<Self, CodecError> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(read_err)?;
        if magic != DELTA_MAGIC {
            return Err(corrupt("bad delta magic"));
        }
        let sequence = r.read_u64::<LE>().map_err(read_err)?;
        let count = r.read_u32::<LE>().map_err(read_err)?;
        if u64::from(count) > (bytes.len() as u64 - r.position()) / 10 {
            return Err(corrupt("record count exceeds stream length"));
        }
        let mut records = Vec::with_capacity(count as usize);
        for _ in 0..count {
            records.push(Record::read(&mut r, depth_levels)?);
        }
        if r.position() != bytes.len() as u64 {
            return Err(corrupt("trailing bytes after delta"));
        }
        Ok(Self { sequence, records })
    }
}

/// Emits every node changed since the last publish and clears the change
/// set. Pending summaries are refreshed first.
pub fn publish_delta(map: &mut OccupancyMap) -> Vec<u8> {
    map.propagate();
    let (changed, removed) = map.drain_changes();
    let mut records = Vec::with_capacity(changed.len() + removed.len());
    for code in changed {
        if let Some(n) = map.node(code) {
            records.push(Record {
                code,
                body: RecordBody::Put {
                    payload: n.payload.clone(),
                    collapsed: n.collapsed,
                },
            });
        }
    }
    for code in removed {
        if map.node(code).is_none() {
            records.push(Record {
                code,
                body: RecordBody::Tombstone,
            });
        }
    }
    sort_records(&mut records);
    let sequence = map.next_sequence();
    map.set_next_sequence(sequence + 1);
    Delta { sequence, records }.encode()
}

/// What happened to a delta handed to [`apply_delta`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyOutcome {
    Applied { sequence: u64, records: usize },
    /// Sequence number already applied; nothing changed.
    Duplicate { sequence: u64 },
}

/// Applies a delta to `replica`, whose expected sequence number is its own
/// [`OccupancyMap::next_sequence`]. The delta is fully decoded before any
/// node is touched, so a corrupt delta leaves the replica unchanged.
pub fn apply_delta(replica: &mut OccupancyMap, bytes: &[u8]) -> Result<ApplyOutcome, CodecError> {
    let delta = Delta::decode(bytes, replica.config().depth_levels)?;
    apply_decoded(replica, &delta, Some(replica.next_sequence()))
}

pub(crate) fn apply_decoded(replica: &mut OccupancyMap, delta: &Delta, expected: Option<u64>) -> Result<ApplyOutcome, CodecError> {
    if let Some(expected) = expected {
        if delta.sequence < expected {
            return Ok(ApplyOutcome::Duplicate {
                sequence: delta.sequence,
            });
        }
        if delta.sequence > expected {
            return Err(CodecError::OutOfOrder {
                expected,
                got: delta.sequence,
            });
        }
    }
    apply_records(replica, &delta.records)?;
    replica.set_next_sequence(delta.sequence + 1);
    Ok(ApplyOutcome::Applied {
        sequence: delta.sequence,
        records: delta.records.len(),
    })
}

/// Number of records in an encoded delta, read from its header.
pub fn delta_record_count(bytes: &[u8]) -> Result<u32, CodecError> {
    if bytes.len() < DELTA_HEADER_LEN || bytes[..8] != DELTA_MAGIC {
        return Err(corrupt("not a delta"));
    }
    Ok(u32::from_le_bytes(bytes[16..20].try_into().unwrap()))
}
