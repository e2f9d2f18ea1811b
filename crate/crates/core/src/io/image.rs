use std::io::Cursor;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};

use super::{read_bytes, write_bytes, IoError, Location};
use crate::render::ConditionMap;

/// `[0, 1]` to 8 bits, rounding half up; out-of-range values clamp.
pub fn quantize_unit(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn encode_png(path: &Path, data: &[u8], width: usize, height: usize, color: png::ColorType) -> Result<Vec<u8>, IoError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| IoError::invalid(path, e.to_string()))?;
        w.write_image_data(data).map_err(|e| IoError::invalid(path, e.to_string()))?;
    }
    Ok(out)
}

/// 8-bit RGB from a `(height, width, 3)` array.
pub fn write_rgb_png(path: &Path, rgb: &ArrayView3<f64>) -> Result<(), IoError> {
    let (h, w, c) = rgb.dim();
    if c != 3 {
        return Err(IoError::invalid(path, format!("expected 3 channels, got {c}")));
    }
    let data: Vec<u8> = rgb.iter().map(|v| quantize_unit(*v)).collect();
    write_bytes(path, &encode_png(path, &data, w, h, png::ColorType::Rgb)?)
}

/// 8-bit grayscale mask: 0 or 255.
pub fn write_gray_png(path: &Path, mask: &ArrayView2<bool>) -> Result<(), IoError> {
    let (h, w) = mask.dim();
    let data: Vec<u8> = mask.iter().map(|m| if *m { 255 } else { 0 }).collect();
    write_bytes(path, &encode_png(path, &data, w, h, png::ColorType::Grayscale)?)
}

/// 8-bit PNG as `(height, width, channels)` in `[0, 1]`; alpha is dropped.
pub fn read_png(path: &Path) -> Result<Array3<f64>, IoError> {
    let bytes = read_bytes(path)?;
    let decode_err = |e: png::DecodingError| IoError::parse(path, Location::Offset(0), e.to_string());
    let mut reader = png::Decoder::new(Cursor::new(bytes)).read_info().map_err(decode_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| IoError::invalid(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(decode_err)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(IoError::invalid(path, format!("unsupported bit depth {:?}", info.bit_depth)));
    }
    let (src_c, keep) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => return Err(IoError::invalid(path, "indexed PNG is not supported")),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let stride = info.line_size;
    Ok(Array3::from_shape_fn((h, w, keep), |(y, x, c)| f64::from(buf[y * stride + x * src_c + c]) / 255.0))
}

/// Single-channel little-endian PFM, rows stored bottom to top.
pub fn write_pfm(path: &Path, values: &ArrayView2<f64>) -> Result<(), IoError> {
    let (h, w) = values.dim();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * w * h);
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(values[(y, x)] as f32).to_le_bytes());
        }
    }
    write_bytes(path, &out)
}

/// Reads single-channel PFM (either byte order) into top-to-bottom rows.
pub fn read_pfm(path: &Path) -> Result<Array2<f32>, IoError> {
    let bytes = read_bytes(path)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(IoError::parse(path, Location::Offset(pos as u64), "truncated PFM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1; // the single whitespace byte ending the header
    let bad = |m: &str| IoError::parse(path, Location::Offset(0), m.to_string());
    if fields[0] != "Pf" {
        return Err(bad("expected single-channel 'Pf' magic"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| bad("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("scale must be non-zero"));
    }
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() != 4 * w * h {
        return Err(IoError::parse(path, Location::Offset(pos as u64), format!(
            "expected {} data bytes, found {}",
            4 * w * h,
            data.len()
        )));
    }
    let little = scale < 0.0;
    let mut out = Array2::<f32>::zeros((h, w));
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let b: [u8; 4] = chunk.try_into().unwrap();
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        out[(h - 1 - i / w, i % w)] = v;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionPaths {
    pub rgb: PathBuf,
    pub depth: PathBuf,
    pub mask: PathBuf,
}

impl ConditionPaths {
    pub fn for_stem(stem: &Path) -> Self {
        let with = |suffix: &str| {
            let mut s = stem.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        Self { rgb: with(".png"), depth: with(".depth.pfm"), mask: with(".mask.png") }
    }
}

/// `stem.png`, `stem.depth.pfm` and `stem.mask.png`.
pub fn write_condition_outputs(map: &ConditionMap, stem: &Path) -> Result<ConditionPaths, IoError> {
    let paths = ConditionPaths::for_stem(stem);
    write_rgb_png(&paths.rgb, &map.rgb.view())?;
    write_pfm(&paths.depth, &map.depth.view())?;
    write_gray_png(&paths.mask, &map.mask.view())?;
    Ok(paths)
}
