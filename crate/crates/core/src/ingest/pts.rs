//! `.pts` frame files.
//!
//! Header: `VOXPTS01`, `u32` point count, `u8` label slot count `K`. Each
//! point: three `f32` coordinates, three `u8` colour channels, one zero pad
//! byte and `K` `u16` labels. Little-endian.

use std::io::{Cursor, Read};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use smallvec::SmallVec;

use crate::integrator::PointRecord;
use crate::octree::Rgb;

pub const PTS_MAGIC: [u8; 8] = *b"VOXPTS01";
pub const PTS_HEADER_LEN: usize = 13;

pub fn point_len(slots: u8) -> usize {
    12 + 4 + 2 * usize::from(slots)
}

pub fn encode_points(points: &[PointRecord], slots: u8) -> Vec<u8> {
    let mut out = Vec::with_capacity(PTS_HEADER_LEN + points.len() * point_len(slots));
    out.extend_from_slice(&PTS_MAGIC);
    out.write_u32::<LE>(points.len() as u32).unwrap();
    out.write_u8(slots).unwrap();
    for p in points {
        debug_assert_eq!(p.labels.len(), usize::from(slots));
        for v in p.position {
            out.write_f32::<LE>(v).unwrap();
        }
        out.extend_from_slice(&p.color.0);
        out.write_u8(0).unwrap();
        for &l in &p.labels {
            out.write_u16::<LE>(l).unwrap();
        }
    }
    out
}

/// Decodes a frame file into its slot count and points.
pub fn decode_points(bytes: &[u8]) -> Result<(u8, Vec<PointRecord>), String> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| "truncated header".to_string())?;
    if magic != PTS_MAGIC {
        return Err("bad magic".into());
    }
    let count = r.read_u32::<LE>().map_err(|_| "truncated header".to_string())?;
    let slots = r.read_u8().map_err(|_| "truncated header".to_string())?;
    let expected = PTS_HEADER_LEN as u64 + u64::from(count) * point_len(slots) as u64;
    if bytes.len() as u64 != expected {
        return Err(format!("{} bytes for {count} points with {slots} slots, expected {expected}", bytes.len()));
    }
    let mut points = Vec::with_capacity(count as usize);
    for i in 0..count {
        let mut position = [0f32; 3];
        for v in &mut position {
            *v = r.read_f32::<LE>().unwrap();
        }
        let mut color = [0u8; 3];
        r.read_exact(&mut color).unwrap();
        if r.read_u8().unwrap() != 0 {
            return Err(format!("non-zero pad byte in point {i}"));
        }
        let labels: SmallVec<[u16; 2]> = (0..slots).map(|_| r.read_u16::<LE>().unwrap()).collect();
        points.push(PointRecord {
            position,
            color: Rgb(color),
            labels,
        });
    }
    Ok((slots, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_frame() {
        let bytes = encode_points(&[], 2);
        assert_eq!(bytes.len(), PTS_HEADER_LEN);
        assert_eq!(decode_points(&bytes).unwrap(), (2, vec![]));
    }

    #[test]
    fn round_trip_bytes() {
        let pts = vec![
            PointRecord::new([1.5, -2.25, 0.125], Rgb([1, 2, 3]), &[40, 10]),
            PointRecord::new([f32::MIN_POSITIVE, 0.0, -0.0], Rgb([255, 0, 9]), &[0, 65535]),
        ];
        let bytes = encode_points(&pts, 2);
        assert_eq!(bytes.len(), PTS_HEADER_LEN + 2 * 20);
        let (k, back) = decode_points(&bytes).unwrap();
        assert_eq!(k, 2);
        assert_eq!(encode_points(&back, k), bytes);
    }

    #[test]
    fn rejects_bad_input() {
        let mut bytes = encode_points(&[PointRecord::new([0.0; 3], Rgb([0; 3]), &[1])], 1);
        assert!(decode_points(&bytes[..bytes.len() - 1]).is_err());
        bytes[12 + 1 + 15] = 1;
        assert!(decode_points(&bytes).unwrap_err().contains("pad"));
        bytes[0] = b'x';
        assert!(decode_points(&bytes).is_err());
    }
}
