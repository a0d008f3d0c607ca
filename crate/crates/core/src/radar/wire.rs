use serde::{Deserialize, Serialize};

use crate::types::ObjectClass;

pub const MAGIC: [u8; 4] = *b"CRSN";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 28;
pub const OBJECT_LEN: usize = 24;
pub const MAX_OBJECTS: usize = u16::MAX as usize;
/// 10 km in millimeters, exclusive.
pub const POSITION_BOUND_MM: i64 = 10_000_000;
/// 100 km/h plus a 50 % tracker-noise margin.
pub const SPEED_BOUND_MM_S: f64 = 27_780.0 * 1.5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("{0} objects exceed the 65535 per-message limit")]
    TooManyObjects(usize),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("length {got} does not match the {expected} bytes the header announces")]
    TruncatedMessage { got: usize, expected: usize },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("reserved byte at offset {0} is not zero")]
    NonzeroReserved(usize),
    #[error("unknown class code {0}")]
    UnknownClass(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadarClass {
    Pedestrian,
    Vehicle,
    Bicycle,
    Other,
}

impl RadarClass {
    pub fn code(self) -> u8 {
        match self {
            RadarClass::Pedestrian => 0,
            RadarClass::Vehicle => 1,
            RadarClass::Bicycle => 2,
            RadarClass::Other => 3,
        }
    }

    pub fn from_code(c: u8) -> Result<Self, WireError> {
        Ok(match c {
            0 => RadarClass::Pedestrian,
            1 => RadarClass::Vehicle,
            2 => RadarClass::Bicycle,
            3 => RadarClass::Other,
            other => return Err(WireError::UnknownClass(other)),
        })
    }
}

impl From<ObjectClass> for RadarClass {
    fn from(c: ObjectClass) -> Self {
        Self::from_code(c.wire_code()).expect("object classes have wire codes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadarObject {
    pub track_id: u32,
    pub class: RadarClass,
    pub x_mm: i32,
    pub y_mm: i32,
    pub vx_mm_s: i32,
    pub vy_mm_s: i32,
}

impl RadarObject {
    /// Position within 10 km and speed within the noise-inflated bound.
    pub fn is_plausible(&self) -> bool {
        let pos_ok = (self.x_mm as i64).abs() < POSITION_BOUND_MM && (self.y_mm as i64).abs() < POSITION_BOUND_MM;
        pos_ok && (self.vx_mm_s as f64).hypot(self.vy_mm_s as f64) <= SPEED_BOUND_MM_S
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadarMessage {
    pub version: u8,
    pub intersection_id: u32,
    pub frame_seq: u64,
    pub capture_ts_us: u64,
    pub objects: Vec<RadarObject>,
}

pub fn datagram_len(objects: usize) -> usize {
    HEADER_LEN + OBJECT_LEN * objects
}

/// Largest object count whose datagram fits in `mtu` bytes.
pub fn max_objects_for_mtu(mtu: usize) -> usize {
    (mtu.saturating_sub(HEADER_LEN) / OBJECT_LEN).min(MAX_OBJECTS)
}

pub fn encode(msg: &RadarMessage) -> Result<Vec<u8>, WireError> {
    let n = msg.objects.len();
    if n > MAX_OBJECTS {
        return Err(WireError::TooManyObjects(n));
    }
    let mut out = Vec::with_capacity(datagram_len(n));
    out.extend_from_slice(&MAGIC);
    out.push(msg.version);
    out.push(0);
    out.extend_from_slice(&(n as u16).to_le_bytes());
    out.extend_from_slice(&msg.intersection_id.to_le_bytes());
    out.extend_from_slice(&msg.frame_seq.to_le_bytes());
    out.extend_from_slice(&msg.capture_ts_us.to_le_bytes());
    for o in &msg.objects {
        out.extend_from_slice(&o.track_id.to_le_bytes());
        out.push(o.class.code());
        out.extend_from_slice(&[0; 3]);
        for v in [o.x_mm, o.y_mm, o.vx_mm_s, o.vy_mm_s] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn array<const N: usize>(b: &[u8], at: usize) -> [u8; N] {
    b[at..at + N].try_into().expect("length checked")
}

pub fn decode(bytes: &[u8]) -> Result<RadarMessage, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::TruncatedMessage {
            got: bytes.len(),
            expected: HEADER_LEN,
        });
    }
    let magic = array::<4>(bytes, 0);
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    let n = u16::from_le_bytes(array(bytes, 6)) as usize;
    let expected = datagram_len(n);
    if bytes.len() != expected {
        return Err(WireError::TruncatedMessage {
            got: bytes.len(),
            expected,
        });
    }
    let version = bytes[4];
    if version != VERSION {
        return Err(WireError::UnsupportedVersion(version));
    }
    if bytes[5] != 0 {
        return Err(WireError::NonzeroReserved(5));
    }
    let mut objects = Vec::with_capacity(n);
    for k in 0..n {
        let at = HEADER_LEN + k * OBJECT_LEN;
        if let Some(i) = (5..8).find(|i| bytes[at + i] != 0) {
            return Err(WireError::NonzeroReserved(at + i));
        }
        let i32_at = |off: usize| i32::from_le_bytes(array(bytes, at + off));
        objects.push(RadarObject {
            track_id: u32::from_le_bytes(array(bytes, at)),
            class: RadarClass::from_code(bytes[at + 4])?,
            x_mm: i32_at(8),
            y_mm: i32_at(12),
            vx_mm_s: i32_at(16),
            vy_mm_s: i32_at(20),
        });
    }
    Ok(RadarMessage {
        version,
        intersection_id: u32::from_le_bytes(array(bytes, 8)),
        frame_seq: u64::from_le_bytes(array(bytes, 12)),
        capture_ts_us: u64::from_le_bytes(array(bytes, 20)),
        objects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(objects: Vec<RadarObject>) -> RadarMessage {
        RadarMessage {
            version: VERSION,
            intersection_id: 7,
            frame_seq: 42,
            capture_ts_us: 1_000_000,
            objects,
        }
    }

    fn vehicle() -> RadarObject {
        RadarObject {
            track_id: 1,
            class: RadarClass::Vehicle,
            x_mm: 1500,
            y_mm: -2000,
            vx_mm_s: 2778,
            vy_mm_s: 0,
        }
    }

    #[test]
    fn empty_is_header_only() {
        let b = encode(&msg(vec![])).unwrap();
        assert_eq!(b.len(), 28);
        assert_eq!(&b[..4], &[0x43, 0x52, 0x53, 0x4E]);
    }

    #[test]
    fn two_objects_76_bytes() {
        assert_eq!(encode(&msg(vec![vehicle(), vehicle()])).unwrap().len(), 76);
    }

    #[test]
    fn round_trip() {
        let m = msg(vec![vehicle()]);
        assert_eq!(decode(&encode(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn layout_is_little_endian() {
        let b = encode(&msg(vec![vehicle()])).unwrap();
        assert_eq!(&b[6..8], &[1, 0]);
        assert_eq!(&b[12..20], &42u64.to_le_bytes());
        assert_eq!(&b[40..44], &(-2000i32).to_le_bytes());
    }

    #[test]
    fn rejects_corruption() {
        let good = encode(&msg(vec![vehicle()])).unwrap();
        assert!(matches!(decode(&good[..27]), Err(WireError::TruncatedMessage { .. })));
        assert!(matches!(decode(&good[..51]), Err(WireError::TruncatedMessage { .. })));
        let mut b = good.clone();
        b[0] = b'X';
        assert!(matches!(decode(&b), Err(WireError::BadMagic(_))));
        let mut b = good.clone();
        b[4] = 2;
        assert_eq!(decode(&b), Err(WireError::UnsupportedVersion(2)));
        let mut b = good.clone();
        b[5] = 1;
        assert_eq!(decode(&b), Err(WireError::NonzeroReserved(5)));
        let mut b = good.clone();
        b[28 + 6] = 9;
        assert_eq!(decode(&b), Err(WireError::NonzeroReserved(34)));
        let mut b = good;
        b[28 + 4] = 4;
        assert_eq!(decode(&b), Err(WireError::UnknownClass(4)));
    }

    #[test]
    fn too_many_objects() {
        let m = msg(vec![vehicle(); MAX_OBJECTS + 1]);
        assert_eq!(encode(&m), Err(WireError::TooManyObjects(MAX_OBJECTS + 1)));
    }

    #[test]
    fn mtu_cap() {
        assert_eq!(datagram_len(100), 2428);
        assert_eq!(max_objects_for_mtu(9000), 373);
        assert!(datagram_len(373) <= 9000 && datagram_len(374) > 9000);
    }

    #[test]
    fn plausibility() {
        assert!(vehicle().is_plausible());
        let fast = RadarObject { vx_mm_s: 41_671, ..vehicle() };
        assert!(!fast.is_plausible());
        let far = RadarObject { x_mm: 10_000_000, ..vehicle() };
        assert!(!far.is_plausible());
    }
}
