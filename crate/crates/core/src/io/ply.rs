use std::path::Path;

use super::{fmt_f64, read_bytes, write_bytes, IoError, Location};
use crate::geometry::{Point3, Vec3};
use crate::io::image::quantize_unit;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => f64::from(b[0] as i8),
            Scalar::U8 => f64::from(b[0]),
            Scalar::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Scalar::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Scalar::I32 => f64::from(i32::from_le_bytes(b[..4].try_into().unwrap())),
            Scalar::U32 => f64::from(u32::from_le_bytes(b[..4].try_into().unwrap())),
            Scalar::F32 => f64::from(f32::from_le_bytes(b[..4].try_into().unwrap())),
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    X,
    Y,
    Z,
    Red,
    Green,
    Blue,
}

struct Header {
    encoding: PlyEncoding,
    count: usize,
    props: Vec<(Field, Scalar)>,
    has_color: bool,
    /// Byte offset of the first data byte.
    data_start: usize,
    /// Line number of the first data line.
    data_line: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header, IoError> {
    let err = |line: usize, m: String| IoError::parse(path, Location::Line(line), m);
    let mut pos = 0usize;
    let mut lineno = 0usize;
    let next_line = |pos: &mut usize| -> Option<String> {
        if *pos >= bytes.len() {
            return None;
        }
        let end = bytes[*pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |i| *pos + i);
        let line = String::from_utf8_lossy(&bytes[*pos..end]).trim_end_matches('\r').to_string();
        *pos = end + 1;
        Some(line)
    };

    lineno += 1;
    if next_line(&mut pos).as_deref() != Some("ply") {
        return Err(err(1, "missing 'ply' magic".into()));
    }
    let mut encoding = None;
    let mut count = None;
    let mut props = Vec::new();
    let mut in_vertex = false;
    loop {
        lineno += 1;
        let Some(line) = next_line(&mut pos) else {
            return Err(err(lineno, "header ended without 'end_header'".into()));
        };
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, version] => {
                if *version != "1.0" {
                    return Err(err(lineno, format!("unsupported PLY version {version}")));
                }
                encoding = Some(match *fmt {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    other => return Err(err(lineno, format!("unsupported PLY format {other}"))),
                });
            }
            ["element", name, n] => {
                let n: usize = n.parse().map_err(|_| err(lineno, format!("bad element count '{n}'")))?;
                if *name == "vertex" {
                    if count.is_some() {
                        return Err(err(lineno, "duplicate vertex element".into()));
                    }
                    count = Some(n);
                    in_vertex = true;
                } else if n == 0 {
                    in_vertex = false;
                } else {
                    return Err(IoError::UnsupportedProperty { path: path.to_path_buf(), property: format!("element {name}") });
                }
            }
            ["property", "list", ..] if !in_vertex => {}
            ["property", ty, name] if in_vertex => {
                let field = match *name {
                    "x" => Field::X,
                    "y" => Field::Y,
                    "z" => Field::Z,
                    "red" => Field::Red,
                    "green" => Field::Green,
                    "blue" => Field::Blue,
                    other => {
                        return Err(IoError::UnsupportedProperty { path: path.to_path_buf(), property: other.into() })
                    }
                };
                let scalar = Scalar::parse(ty).ok_or_else(|| err(lineno, format!("unknown property type '{ty}'")))?;
                let ok_type = match field {
                    Field::X | Field::Y | Field::Z => matches!(scalar, Scalar::F32 | Scalar::F64),
                    _ => scalar == Scalar::U8,
                };
                if !ok_type {
                    return Err(IoError::UnsupportedProperty { path: path.to_path_buf(), property: format!("{ty} {name}") });
                }
                if props.iter().any(|(f, _)| *f == field) {
                    return Err(err(lineno, format!("duplicate property {name}")));
                }
                props.push((field, scalar));
            }
            ["property", ..] if !in_vertex => {}
            _ => {
                if tok.first() == Some(&"property") {
                    return Err(IoError::UnsupportedProperty { path: path.to_path_buf(), property: line.clone() });
                }
                return Err(err(lineno, format!("unrecognized header line '{line}'")));
            }
        }
    }
    let encoding = encoding.ok_or_else(|| err(lineno, "missing format line".into()))?;
    let count = count.ok_or_else(|| err(lineno, "missing vertex element".into()))?;
    let has = |f: Field| props.iter().any(|(p, _)| *p == f);
    if !(has(Field::X) && has(Field::Y) && has(Field::Z)) {
        return Err(err(lineno, "vertex element needs x, y and z".into()));
    }
    let colors = [Field::Red, Field::Green, Field::Blue].map(has);
    if colors.iter().any(|c| *c) && !colors.iter().all(|c| *c) {
        return Err(err(lineno, "red, green and blue must appear together".into()));
    }
    Ok(Header { encoding, count, props, has_color: colors[0], data_start: pos, data_line: lineno + 1 })
}

fn assemble(values: &[f64; 6], has_color: bool) -> Point3 {
    let rgb = has_color.then(|| [values[3] / 255.0, values[4] / 255.0, values[5] / 255.0]);
    Point3 { position: Vec3::new(values[0], values[1], values[2]), rgb }
}

fn slot(f: Field) -> usize {
    match f {
        Field::X => 0,
        Field::Y => 1,
        Field::Z => 2,
        Field::Red => 3,
        Field::Green => 4,
        Field::Blue => 5,
    }
}

/// Parse PLY bytes; `path` is only used in error messages.
pub fn parse_point_cloud(path: &Path, bytes: &[u8]) -> Result<Vec<Point3>, IoError> {
    let h = parse_header(path, bytes)?;
    let data = &bytes[h.data_start.min(bytes.len())..];
    let mut points = Vec::with_capacity(h.count);
    match h.encoding {
        PlyEncoding::Ascii => {
            let text = std::str::from_utf8(data)
                .map_err(|e| IoError::parse(path, Location::Offset((h.data_start + e.valid_up_to()) as u64), "invalid UTF-8"))?;
            let mut lines = text.lines().enumerate().map(|(i, l)| (h.data_line + i, l)).filter(|(_, l)| !l.trim().is_empty());
            for _ in 0..h.count {
                let Some((ln, line)) = lines.next() else {
                    return Err(IoError::parse(path, Location::Line(h.data_line + points.len()), format!(
                        "expected {} vertices, found {}",
                        h.count,
                        points.len()
                    )));
                };
                let tok: Vec<&str> = line.split_whitespace().collect();
                if tok.len() != h.props.len() {
                    return Err(IoError::parse(path, Location::Line(ln), format!(
                        "expected {} values, found {}",
                        h.props.len(),
                        tok.len()
                    )));
                }
                let mut v = [0.0; 6];
                for ((field, scalar), t) in h.props.iter().zip(&tok) {
                    let x: f64 = t.parse().map_err(|_| IoError::parse(path, Location::Line(ln), format!("bad number '{t}'")))?;
                    if *scalar == Scalar::U8 && !(x.fract() == 0.0 && (0.0..=255.0).contains(&x)) {
                        return Err(IoError::parse(path, Location::Line(ln), format!("color '{t}' is not a uchar")));
                    }
                    v[slot(*field)] = x;
                }
                points.push(assemble(&v, h.has_color));
            }
            if let Some((ln, _)) = lines.next() {
                return Err(IoError::parse(path, Location::Line(ln), "data after the last vertex"));
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            let stride: usize = h.props.iter().map(|(_, s)| s.size()).sum();
            let need = stride * h.count;
            if data.len() < need {
                return Err(IoError::parse(path, Location::Offset(bytes.len() as u64), format!(
                    "truncated vertex data: need {need} bytes, found {}",
                    data.len()
                )));
            }
            if data.len() > need {
                return Err(IoError::parse(path, Location::Offset((h.data_start + need) as u64), "data after the last vertex"));
            }
            for rec in data.chunks_exact(stride) {
                let mut v = [0.0; 6];
                let mut off = 0;
                for (field, scalar) in &h.props {
                    v[slot(*field)] = scalar.read_le(&rec[off..]);
                    off += scalar.size();
                }
                points.push(assemble(&v, h.has_color));
            }
        }
    }
    let bad = points.iter().filter(|p| !p.position.iter().all(|c| c.is_finite())).count();
    if bad > 0 {
        return Err(IoError::NonFinitePoints { path: path.to_path_buf(), count: bad });
    }
    Ok(points)
}

pub fn load_point_cloud(path: &Path) -> Result<Vec<Point3>, IoError> {
    parse_point_cloud(path, &read_bytes(path)?)
}

/// Coordinates are written as doubles; colors, present when any point has
/// one, are quantized to 8 bits (uncolored points get white).
pub fn save_point_cloud(path: &Path, cloud: &[Point3], encoding: PlyEncoding) -> Result<(), IoError> {
    let colored = cloud.iter().any(|p| p.rgb.is_some());
    let mut out = Vec::new();
    let fmt = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    out.extend_from_slice(format!("ply\nformat {fmt} 1.0\nelement vertex {}\n", cloud.len()).as_bytes());
    out.extend_from_slice(b"property double x\nproperty double y\nproperty double z\n");
    if colored {
        out.extend_from_slice(b"property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    out.extend_from_slice(b"end_header\n");
    for p in cloud {
        let rgb = p.rgb.unwrap_or([1.0; 3]).map(quantize_unit);
        match encoding {
            PlyEncoding::Ascii => {
                let mut line = format!("{} {} {}", fmt_f64(p.position.x), fmt_f64(p.position.y), fmt_f64(p.position.z));
                if colored {
                    line.push_str(&format!(" {} {} {}", rgb[0], rgb[1], rgb[2]));
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
            PlyEncoding::BinaryLittleEndian => {
                for c in p.position.iter() {
                    out.extend_from_slice(&c.to_le_bytes());
                }
                if colored {
                    out.extend_from_slice(&rgb);
                }
            }
        }
    }
    write_bytes(path, &out)
}
