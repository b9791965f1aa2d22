//! Middlebury `.flo` files: magic `202021.25` (f32), width and height (i32),
//! then row-major interleaved `(u, v)` f32 pairs, all little-endian.

use std::path::Path;

use super::FlowField;
use crate::error::{Error, Result};

pub const FLO_MAGIC: f32 = 202021.25;

pub fn write_flo(field: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(12 + field.data().len() * 4);
    buf.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    buf.extend_from_slice(&(field.width() as i32).to_le_bytes());
    buf.extend_from_slice(&(field.height() as i32).to_le_bytes());
    for v in field.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_flo(&bytes).map_err(|reason| Error::Flo {
        path: path.to_path_buf(),
        reason,
    })
}

fn parse_flo(bytes: &[u8]) -> std::result::Result<FlowField, String> {
    let word = |i: usize| -> std::result::Result<[u8; 4], String> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| b.try_into().unwrap())
            .ok_or_else(|| "truncated header".to_string())
    };
    let magic = f32::from_le_bytes(word(0)?);
    if magic != FLO_MAGIC {
        return Err(format!("bad magic {magic}"));
    }
    let w = i32::from_le_bytes(word(1)?);
    let h = i32::from_le_bytes(word(2)?);
    if w <= 0 || h <= 0 {
        return Err(format!("bad dimensions {w}x{h}"));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = 12 + w * h * 8;
    if bytes.len() != expected {
        return Err(format!("expected {expected} bytes, found {}", bytes.len()));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FlowField::new(w, h, data).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_pixel_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.flo");
        let f = FlowField::new(1, 1, vec![1.5, -2.0]).unwrap();
        write_flo(&f, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[0..4], &202021.25f32.to_le_bytes());
        assert_eq!(&bytes[4..8], &1i32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1i32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1.5f32.to_le_bytes());
        assert_eq!(&bytes[16..20], &(-2.0f32).to_le_bytes());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.flo");
        let f = FlowField::new(2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        write_flo(&f, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();

        let mut wrong = bytes.clone();
        wrong[0] ^= 0xff;
        std::fs::write(&path, &wrong).unwrap();
        assert!(matches!(read_flo(&path), Err(Error::Flo { .. })));

        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_flo(&path), Err(Error::Flo { .. })));

        std::fs::write(&path, [0u8; 2]).unwrap();
        assert!(read_flo(&path).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_is_bit_exact(
            (w, h, data) in (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec(-1e6f32..1e6, w * h * 2))
            })
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("f.flo");
            let f = FlowField::new(w, h, data).unwrap();
            write_flo(&f, &path).unwrap();
            let g = read_flo(&path).unwrap();
            let bits = |x: &FlowField| x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(g.dims(), f.dims());
            prop_assert_eq!(bits(&g), bits(&f));
        }
    }
}
