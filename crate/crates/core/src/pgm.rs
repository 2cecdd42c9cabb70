//! Binary 16-bit PGM (`P5`, maxval 65535) depth images.
//!
//! Sample value = `round(depth_m * 1000)`, big-endian; 0 marks an absent
//! pixel.

use std::path::Path;

use crate::error::{Error, Result};

pub fn encode_depth_pgm(width: usize, height: usize, depth: &[Option<f64>]) -> Result<Vec<u8>> {
    if depth.len() != width * height {
        return Err(Error::Pgm(format!(
            "expected {} samples, got {}",
            width * height,
            depth.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(depth.len() * 2);
    for d in depth {
        let mm = match d {
            Some(z) if z.is_finite() && *z > 0.0 => (z * 1000.0).round().clamp(1.0, 65535.0) as u16,
            _ => 0,
        };
        out.extend_from_slice(&mm.to_be_bytes());
    }
    Ok(out)
}

pub fn write_depth_pgm(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    depth: &[Option<f64>],
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_depth_pgm(width, height, depth)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decodes to `(width, height, depth_m)`.
pub fn decode_depth_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<Option<f64>>)> {
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Pgm("truncated header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if tokens[0] != "P5" {
        return Err(Error::Pgm(format!("unsupported magic '{}'", tokens[0])));
    }
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Pgm(format!("bad {what} '{s}'")))
    };
    let width = parse(&tokens[1], "width")?;
    let height = parse(&tokens[2], "height")?;
    let maxval = parse(&tokens[3], "maxval")?;
    if maxval < 256 || maxval > 65535 {
        return Err(Error::Pgm(format!("expected a 16-bit image, maxval is {maxval}")));
    }
    let n = width * height;
    let raster = bytes
        .get(pos..pos + 2 * n)
        .ok_or_else(|| Error::Pgm(format!("raster truncated: need {} bytes", 2 * n)))?;
    let depth = raster
        .chunks_exact(2)
        .map(|c| match u16::from_be_bytes([c[0], c[1]]) {
            0 => None,
            mm => Some(mm as f64 / 1000.0),
        })
        .collect();
    Ok((width, height, depth))
}

pub fn read_depth_pgm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<Option<f64>>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_depth_pgm(&bytes)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn header_and_encoding() {
        let bytes = encode_depth_pgm(2, 1, &[Some(1.2345), None]).unwrap();
        assert!(bytes.starts_with(b"P5\n2 1\n65535\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0x04, 0xD3, 0, 0]);
    }

    #[test]
    fn accepts_comments() {
        let mut bytes = b"P5\n# made by hand\n2 1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0x03, 0xE8, 0x00, 0x00]);
        let (w, h, d) = decode_depth_pgm(&bytes).unwrap();
        assert_eq!((w, h), (2, 1));
        assert_eq!(d, vec![Some(1.0), None]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decode_depth_pgm(b"P2\n1 1\n65535\n").is_err());
        assert!(decode_depth_pgm(b"P5\n4 4\n65535\n\x00").is_err());
        assert!(decode_depth_pgm(b"P5\n1 1\n255\n\x00").is_err());
    }

    proptest! {
        #[test]
        fn millimeter_grids_round_trip(mm in prop::collection::vec(0u16..=65535, 16 * 16)) {
            let depth: Vec<_> = mm.iter().map(|&m| (m > 0).then(|| m as f64 / 1000.0)).collect();
            let bytes = encode_depth_pgm(16, 16, &depth).unwrap();
            let (w, h, back) = decode_depth_pgm(&bytes).unwrap();
            prop_assert_eq!((w, h), (16, 16));
            prop_assert_eq!(back, depth);
        }
    }
}
