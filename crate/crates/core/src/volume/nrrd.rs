//! Minimal NRRD0004 support: 3D `uint8` volumes, diagonal space directions,
//! raw or gzip payloads.
//!
//! The writer always emits the same header layout so that equal volumes give
//! equal byte streams:
//!
//! ```text
//! NRRD0004
//! type: uint8
//! dimension: 3
//! sizes: <nx> <ny> <nz>
//! space directions: (<sx>,0,0) (0,<sy>,0) (0,0,<sz>)
//! endian: little
//! encoding: raw
//!
//! <nx*ny*nz payload bytes>
//! ```
//!
//! Spacings are written with the shortest decimal that round-trips.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use thiserror::Error;

use super::{VolumeError, VoxelGrid};

#[derive(Debug, Error)]
pub enum NrrdError {
    #[error("malformed NRRD header: {0}")]
    MalformedHeader(String),
    #[error("unsupported NRRD feature: {0}")]
    Unsupported(String),
    #[error("payload holds {actual} bytes but sizes require {expected}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Raw,
    Gzip,
}

#[derive(Default)]
struct Header {
    type_seen: bool,
    dimension: Option<usize>,
    sizes: Option<[usize; 3]>,
    directions: Option<[f64; 3]>,
    spacings: Option<[f64; 3]>,
    encoding: Option<Encoding>,
}

fn malformed(msg: impl Into<String>) -> NrrdError {
    NrrdError::MalformedHeader(msg.into())
}

fn unsupported(msg: impl Into<String>) -> NrrdError {
    NrrdError::Unsupported(msg.into())
}

fn parse_three<T: std::str::FromStr>(value: &str, field: &str) -> Result<[T; 3], NrrdError> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(malformed(format!("{field} needs 3 values, got {value:?}")));
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(
            p.parse::<T>()
                .map_err(|_| malformed(format!("bad {field} value {p:?}")))?,
        );
    }
    let mut it = out.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

fn parse_directions(value: &str) -> Result<[f64; 3], NrrdError> {
    let mut vectors = Vec::new();
    let mut rest = value.trim();
    while !rest.is_empty() {
        if rest.starts_with("none") {
            return Err(unsupported(format!("'none' space direction in {value:?}")));
        }
        let open = rest
            .strip_prefix('(')
            .ok_or_else(|| malformed(format!("bad space directions {value:?}")))?;
        let close = open
            .find(')')
            .ok_or_else(|| malformed(format!("unterminated vector in {value:?}")))?;
        let comps: Result<Vec<f64>, _> = open[..close].split(',').map(|c| c.trim().parse::<f64>()).collect();
        let comps = comps.map_err(|_| malformed(format!("bad vector in {value:?}")))?;
        if comps.len() != 3 {
            return Err(malformed(format!("space direction must have 3 components: {value:?}")));
        }
        vectors.push([comps[0], comps[1], comps[2]]);
        rest = open[close + 1..].trim_start();
    }
    if vectors.len() != 3 {
        return Err(malformed(format!("expected 3 space directions, got {}", vectors.len())));
    }
    let mut spacing = [0.0; 3];
    for (axis, v) in vectors.iter().enumerate() {
        for (k, &c) in v.iter().enumerate() {
            if k != axis && c != 0.0 {
                return Err(unsupported(format!("non-diagonal space directions {value:?}")));
            }
        }
        // Axis flips do not change distances or volumes, so only magnitude is kept.
        let s = v[axis].abs();
        if !(s.is_finite() && s > 0.0) {
            return Err(malformed(format!("degenerate space direction {value:?}")));
        }
        spacing[axis] = s;
    }
    Ok(spacing)
}

fn apply_field(h: &mut Header, key: &str, value: &str) -> Result<(), NrrdError> {
    match key {
        "type" => match value {
            "uint8" | "uchar" | "unsigned char" | "uint8_t" => h.type_seen = true,
            other => return Err(unsupported(format!("type {other:?}"))),
        },
        "dimension" => {
            let d: usize = value
                .parse()
                .map_err(|_| malformed(format!("bad dimension {value:?}")))?;
            if d != 3 {
                return Err(unsupported(format!("dimension {d}")));
            }
            h.dimension = Some(d);
        }
        "sizes" => h.sizes = Some(parse_three(value, "sizes")?),
        "space directions" => h.directions = Some(parse_directions(value)?),
        "spacings" => h.spacings = Some(parse_three(value, "spacings")?),
        "encoding" => {
            h.encoding = Some(match value {
                "raw" => Encoding::Raw,
                "gzip" | "gz" => Encoding::Gzip,
                other => return Err(unsupported(format!("encoding {other:?}"))),
            })
        }
        "endian" => {
            if value != "little" {
                return Err(unsupported(format!("endian {value:?}")));
            }
        }
        "data file" | "datafile" => return Err(unsupported("detached data files")),
        "line skip" | "lineskip" | "byte skip" | "byteskip" => {
            if value != "0" {
                return Err(unsupported(format!("{key} {value}")));
            }
        }
        _ => {}
    }
    Ok(())
}

/// Parses an NRRD byte stream into a `uint8` grid.
pub fn read_nrrd(bytes: &[u8]) -> Result<VoxelGrid<u8>, NrrdError> {
    let mut pos = 0usize;
    let next_line = |pos: &mut usize| -> Option<&[u8]> {
        if *pos >= bytes.len() {
            return None;
        }
        let start = *pos;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| start + i)
            .unwrap_or(bytes.len());
        *pos = (end + 1).min(bytes.len());
        let mut line = &bytes[start..end];
        if line.last() == Some(&b'\r') {
            line = &line[..line.len() - 1];
        }
        Some(line)
    };

    let magic = next_line(&mut pos).ok_or_else(|| malformed("empty stream"))?;
    if !magic.starts_with(b"NRRD000") {
        return Err(malformed("missing NRRD magic"));
    }

    let mut header = Header::default();
    let mut terminated = false;
    while let Some(line) = next_line(&mut pos) {
        if line.is_empty() {
            terminated = true;
            break;
        }
        let line = std::str::from_utf8(line).map_err(|_| malformed("non-UTF-8 header line"))?;
        if line.starts_with('#') || line.contains(":=") {
            continue;
        }
        let (key, value) = line
            .split_once(": ")
            .ok_or_else(|| malformed(format!("cannot parse header line {line:?}")))?;
        apply_field(&mut header, key.trim(), value.trim())?;
    }
    if !terminated {
        return Err(malformed("header not terminated by an empty line"));
    }

    if !header.type_seen {
        return Err(malformed("missing field: type"));
    }
    if header.dimension.is_none() {
        return Err(malformed("missing field: dimension"));
    }
    let dims = header.sizes.ok_or_else(|| malformed("missing field: sizes"))?;
    let encoding = header.encoding.ok_or_else(|| malformed("missing field: encoding"))?;
    let spacing = header.directions.or(header.spacings).unwrap_or([1.0; 3]);

    let payload = &bytes[pos..];
    let data = match encoding {
        Encoding::Raw => payload.to_vec(),
        Encoding::Gzip => {
            let mut out = Vec::new();
            GzDecoder::new(payload).read_to_end(&mut out)?;
            out
        }
    };
    let expected: usize = dims.iter().product();
    if data.len() != expected {
        return Err(NrrdError::SizeMismatch {
            expected,
            actual: data.len(),
        });
    }
    Ok(VoxelGrid::new(dims, spacing, data)?)
}

pub fn read_nrrd_file(path: impl AsRef<Path>) -> Result<VoxelGrid<u8>, NrrdError> {
    read_nrrd(&std::fs::read(path)?)
}

/// Serializes a `uint8` grid as raw little-endian NRRD0004.
pub fn write_nrrd(grid: &VoxelGrid<u8>) -> Vec<u8> {
    let [nx, ny, nz] = grid.dims();
    let [sx, sy, sz] = grid.spacing();
    let header = format!(
        "NRRD0004\ntype: uint8\ndimension: 3\nsizes: {nx} {ny} {nz}\n\
         space directions: ({sx},0,0) (0,{sy},0) (0,0,{sz})\nendian: little\nencoding: raw\n\n"
    );
    let mut out = Vec::with_capacity(header.len() + grid.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(grid.data());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::{write::GzEncoder, Compression};
    use proptest::prelude::*;
    use std::io::Write;

    const MINIMAL: &str = "NRRD0004\ntype: uint8\ndimension: 3\nsizes: 2 2 2\n\
        space directions: (1,0,0) (0,1,0) (0,0,1)\nendian: little\nencoding: raw\n\n";

    #[test]
    fn minimal_file_reads_all_liver() {
        let mut bytes = MINIMAL.as_bytes().to_vec();
        bytes.extend_from_slice(&[1; 8]);
        let g = read_nrrd(&bytes).unwrap();
        assert_eq!(g.dims(), [2, 2, 2]);
        assert_eq!(g.spacing(), [1.0; 3]);
        assert!(g.data().iter().all(|&v| v == 1));
    }

    #[test]
    fn short_payload_is_size_mismatch() {
        let mut bytes = MINIMAL.as_bytes().to_vec();
        bytes.extend_from_slice(&[1; 7]);
        assert!(matches!(
            read_nrrd(&bytes),
            Err(NrrdError::SizeMismatch { expected: 8, actual: 7 })
        ));
    }

    #[test]
    fn writer_layout() {
        let g = VoxelGrid::new([1, 1, 1], [1.0; 3], vec![0u8]).unwrap();
        let bytes = write_nrrd(&g);
        assert_eq!(bytes.last(), Some(&0u8));
        assert_eq!(bytes, write_nrrd(&g));
        let text = String::from_utf8(bytes[..bytes.len() - 1].to_vec()).unwrap();
        assert_eq!(
            text,
            "NRRD0004\ntype: uint8\ndimension: 3\nsizes: 1 1 1\n\
             space directions: (1,0,0) (0,1,0) (0,0,1)\nendian: little\nencoding: raw\n\n"
        );

        let g = VoxelGrid::new([3, 2, 1], [0.7, 0.7, 2.5], vec![0u8; 6]).unwrap();
        let bytes = write_nrrd(&g);
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.contains("\nsizes: 3 2 1\n"));
        assert!(text.contains("(0.7,0,0) (0,0.7,0) (0,0,2.5)"));
        assert!(text.ends_with("encoding: raw\n\n\0\0\0\0\0\0"));
    }

    #[test]
    fn gzip_payload() {
        let header = MINIMAL.replace("encoding: raw", "encoding: gzip");
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&[0, 1, 2, 3, 3, 2, 1, 0]).unwrap();
        let mut bytes = header.into_bytes();
        bytes.extend(enc.finish().unwrap());
        assert_eq!(read_nrrd(&bytes).unwrap().data(), &[0, 1, 2, 3, 3, 2, 1, 0]);
    }

    #[test]
    fn unknown_fields_and_comments_are_ignored() {
        let text = "NRRD0004\n# a comment\ntype: uint8\ndimension: 3\nspace: left-posterior-superior\n\
            sizes: 1 1 2\nkinds: domain domain domain\nspace origin: (1,2,3)\nmy key:=hello\n\
            space directions: (-0.5,0,0) (0,0.5,0) (0,0,3)\nencoding: raw\n\n";
        let mut bytes = text.as_bytes().to_vec();
        bytes.extend_from_slice(&[3, 2]);
        let g = read_nrrd(&bytes).unwrap();
        assert_eq!(g.spacing(), [0.5, 0.5, 3.0]);
        assert_eq!(g.dims(), [1, 1, 2]);
    }

    #[test]
    fn spacings_field_fallback() {
        let text = "NRRD0004\ntype: uchar\ndimension: 3\nsizes: 1 1 1\nspacings: 2 3 4\nencoding: raw\n\n\x01";
        assert_eq!(read_nrrd(text.as_bytes()).unwrap().spacing(), [2.0, 3.0, 4.0]);
    }

    #[test]
    fn header_errors() {
        let drop = |field: &str| {
            let text: String = MINIMAL
                .lines()
                .filter(|l| !l.starts_with(field))
                .map(|l| format!("{l}\n"))
                .collect();
            let mut b = text.into_bytes();
            b.extend_from_slice(&[0; 8]);
            read_nrrd(&b)
        };
        for field in ["type", "dimension", "sizes", "encoding"] {
            assert!(matches!(drop(field), Err(NrrdError::MalformedHeader(_))), "{field}");
        }
        let swap = |from: &str, to: &str| {
            let mut b = MINIMAL.replace(from, to).into_bytes();
            b.extend_from_slice(&[0; 8]);
            read_nrrd(&b)
        };
        assert!(matches!(
            swap("(1,0,0) (0,1,0)", "(1,0.1,0) (0,1,0)"),
            Err(NrrdError::Unsupported(_))
        ));
        assert!(matches!(swap("raw", "bzip2"), Err(NrrdError::Unsupported(_))));
        assert!(matches!(swap("uint8", "float"), Err(NrrdError::Unsupported(_))));
        assert!(matches!(swap("endian: little", "endian: big"), Err(NrrdError::Unsupported(_))));
        assert!(matches!(read_nrrd(b"P5\n"), Err(NrrdError::MalformedHeader(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(
            dims in (1usize..6, 1usize..6, 1usize..6),
            spacing in (0.01f64..10.0, 0.01f64..10.0, 0.01f64..10.0),
            seed in any::<u64>(),
        ) {
            let dims = [dims.0, dims.1, dims.2];
            let n = dims.iter().product::<usize>();
            let data: Vec<u8> = (0..n).map(|i| ((seed >> (i % 60)) as u8) % 4).collect();
            let g = VoxelGrid::new(dims, [spacing.0, spacing.1, spacing.2], data).unwrap();
            let bytes = write_nrrd(&g);
            let back = read_nrrd(&bytes).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(write_nrrd(&back), bytes);
        }
    }
}
