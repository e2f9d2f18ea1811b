use std::path::Path;

use super::{fmt_f64, read_string, write_bytes, IoError, Location};
use crate::geometry::{Pixel, PoseSE3};
use crate::spc::Correspondence2D2D;

/// Parse `anchor_view_index, u_q, v_q, u_w, v_w` records; `#` starts a comment line.
pub fn parse_correspondences(path: &Path, text: &str) -> Result<Vec<Correspondence2D2D>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            IoError::parse(path, Location::Line(line), e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 5 {
            return Err(IoError::parse(path, Location::Line(line), format!("expected 5 fields, found {}", rec.len())));
        }
        let idx: i64 = rec[0]
            .parse()
            .map_err(|_| IoError::parse(path, Location::Line(line), format!("bad anchor view index '{}'", &rec[0])))?;
        if idx < 0 {
            return Err(IoError::NegativeIndex { path: path.to_path_buf(), line });
        }
        let mut v = [0.0; 4];
        for (k, slot) in v.iter_mut().enumerate() {
            let s = &rec[k + 1];
            *slot = s
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| IoError::parse(path, Location::Line(line), format!("bad coordinate '{s}'")))?;
        }
        out.push(Correspondence2D2D {
            anchor_view_index: idx as usize,
            anchor_pixel: Pixel::new(v[0], v[1]),
            wrist_pixel: Pixel::new(v[2], v[3]),
        });
    }
    Ok(out)
}

pub fn load_correspondences(path: &Path) -> Result<Vec<Correspondence2D2D>, IoError> {
    parse_correspondences(path, &read_string(path)?)
}

pub fn save_correspondences(path: &Path, corrs: &[Correspondence2D2D]) -> Result<(), IoError> {
    let mut s = String::from("# anchor_view_index,u_q,v_q,u_w,v_w\n");
    for c in corrs {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            c.anchor_view_index,
            fmt_f64(c.anchor_pixel.u),
            fmt_f64(c.anchor_pixel.v),
            fmt_f64(c.wrist_pixel.u),
            fmt_f64(c.wrist_pixel.v)
        ));
    }
    write_bytes(path, s.as_bytes())
}

/// One pose per line: 9 rotation entries row-major, then 3 translation entries.
pub fn parse_trajectory(path: &Path, text: &str) -> Result<Vec<PoseSE3>, IoError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = Location::Line(i + 1);
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| IoError::parse(path, at, format!("bad number: {e}")))?;
        let arr: [f64; 12] = vals
            .as_slice()
            .try_into()
            .map_err(|_| IoError::parse(path, at, format!("expected 12 values, found {}", vals.len())))?;
        out.push(PoseSE3::from_array(&arr).map_err(|e| IoError::parse(path, at, e.to_string()))?);
    }
    Ok(out)
}

pub fn load_trajectory(path: &Path) -> Result<Vec<PoseSE3>, IoError> {
    parse_trajectory(path, &read_string(path)?)
}

pub fn save_trajectory(path: &Path, poses: &[PoseSE3]) -> Result<(), IoError> {
    let mut s = String::from("# r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz (world to camera)\n");
    for p in poses {
        let row: Vec<String> = p.to_array().iter().map(|v| fmt_f64(*v)).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    write_bytes(path, s.as_bytes())
}

/// `name=value` per line, in the given order.
pub fn write_key_values(path: &Path, entries: &[(String, String)]) -> Result<(), IoError> {
    let s: String = entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    write_bytes(path, s.as_bytes())
}
