//! Minimal PLY reader/writer for point clouds and simulated scans.
//!
//! The reader accepts `format ascii 1.0` and `format binary_little_endian
//! 1.0` files whose first element is `vertex` with scalar properties. `x`,
//! `y`, `z` are required; `range`, `beam_id`, `azimuth` and `class_id` are
//! picked up when present and unknown scalar properties are skipped. List
//! properties and non-leading vertex elements are outside the subset.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// One input point: world position plus optional semantic class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub position: Vector3<f64>,
    pub class_id: u16,
}

/// One simulated LiDAR return in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub position: Vector3<f64>,
    pub range: f64,
    pub beam_id: u8,
    pub azimuth: f64,
    pub class_id: u16,
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
    fn parse(word: &str) -> Option<Scalar> {
        Some(match word {
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

    fn read_le(self, bytes: &[u8]) -> f64 {
        match self {
            Scalar::I8 => bytes[0] as i8 as f64,
            Scalar::U8 => bytes[0] as f64,
            Scalar::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes([
                bytes[0], bytes[1], bytes[2], bytes[3], bytes[4], bytes[5], bytes[6], bytes[7],
            ]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

struct Property {
    name: String,
    scalar: Scalar,
}

struct Header {
    format: Format,
    vertex_count: usize,
    properties: Vec<Property>,
    /// Byte offset where vertex data starts.
    data_start: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header> {
    let mut pos = 0usize;
    let next_line = |pos: &mut usize| -> Result<String> {
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos] != b'\n' {
            *pos += 1;
        }
        if *pos >= bytes.len() {
            return Err(Error::parse(path, "unterminated header"));
        }
        let line = String::from_utf8_lossy(&bytes[start..*pos]).trim_end().to_string();
        *pos += 1;
        Ok(line)
    };

    if next_line(&mut pos)? != "ply" {
        return Err(Error::parse(path, "missing 'ply' magic"));
    }
    let mut format = None;
    let mut vertex_count = None;
    let mut properties = Vec::new();
    let mut in_vertex = false;
    loop {
        let line = next_line(&mut pos)?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | [] => {}
            ["format", "ascii", "1.0"] => format = Some(Format::Ascii),
            ["format", "binary_little_endian", "1.0"] => format = Some(Format::BinaryLe),
            ["format", other, ..] => {
                return Err(Error::parse(path, format!("unsupported format '{other}'")));
            }
            ["element", "vertex", count] => {
                if vertex_count.is_some() {
                    return Err(Error::parse(path, "duplicate vertex element"));
                }
                vertex_count = Some(
                    count
                        .parse()
                        .map_err(|_| Error::parse(path, "bad vertex count"))?,
                );
                in_vertex = true;
            }
            ["element", ..] => {
                if vertex_count.is_none() {
                    return Err(Error::parse(path, "vertex must be the first element"));
                }
                in_vertex = false;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::parse(path, "list properties on vertex unsupported"));
            }
            ["property", ty, name] if in_vertex => {
                let scalar = Scalar::parse(ty)
                    .ok_or_else(|| Error::parse(path, format!("unknown type '{ty}'")))?;
                properties.push(Property {
                    name: (*name).to_string(),
                    scalar,
                });
            }
            ["property", ..] => {} // property of a later, skipped element
            _ => return Err(Error::parse(path, format!("bad header line '{line}'"))),
        }
    }
    let format = format.ok_or_else(|| Error::parse(path, "missing format line"))?;
    let vertex_count =
        vertex_count.ok_or_else(|| Error::parse(path, "missing vertex element"))?;
    Ok(Header {
        format,
        vertex_count,
        properties,
        data_start: pos,
    })
}

/// Raw per-vertex rows keyed by the header's property order.
fn read_rows(path: &Path, bytes: &[u8], header: &Header) -> Result<Vec<Vec<f64>>> {
    let nprop = header.properties.len();
    let mut rows = Vec::with_capacity(header.vertex_count);
    match header.format {
        Format::Ascii => {
            let text = String::from_utf8_lossy(&bytes[header.data_start..]);
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            for i in 0..header.vertex_count {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::parse(path, format!("vertex {i}: missing row")))?;
                let mut row = Vec::with_capacity(nprop);
                let mut fields = line.split_whitespace();
                for prop in &header.properties {
                    let field = fields.next().ok_or_else(|| {
                        Error::parse(path, format!("vertex {i}: missing field '{}'", prop.name))
                    })?;
                    row.push(field.parse::<f64>().map_err(|_| {
                        Error::parse(path, format!("vertex {i}: bad value '{field}'"))
                    })?);
                }
                rows.push(row);
            }
        }
        Format::BinaryLe => {
            let stride: usize = header.properties.iter().map(|p| p.scalar.size()).sum();
            let need = header.vertex_count * stride;
            let data = &bytes[header.data_start..];
            if data.len() < need {
                return Err(Error::parse(
                    path,
                    format!("vertex payload is {} bytes, expected {}", data.len(), need),
                ));
            }
            for i in 0..header.vertex_count {
                let mut offset = i * stride;
                let mut row = Vec::with_capacity(nprop);
                for prop in &header.properties {
                    row.push(prop.scalar.read_le(&data[offset..]));
                    offset += prop.scalar.size();
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn column(header: &Header, name: &str) -> Option<usize> {
    header.properties.iter().position(|p| p.name == name)
}

pub fn read_point_cloud(path: &Path) -> Result<Vec<CloudPoint>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header(path, &bytes)?;
    let (x, y, z) = match (
        column(&header, "x"),
        column(&header, "y"),
        column(&header, "z"),
    ) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::parse(path, "vertex element must carry x, y, z")),
    };
    let class = column(&header, "class_id");
    let rows = read_rows(path, &bytes, &header)?;
    Ok(rows
        .into_iter()
        .map(|row| CloudPoint {
            position: Vector3::new(row[x], row[y], row[z]),
            class_id: class.map_or(0, |c| row[c] as u16),
        })
        .collect())
}

pub fn read_scan(path: &Path) -> Result<Vec<ScanPoint>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header(path, &bytes)?;
    let need = |name: &str| {
        column(&header, name)
            .ok_or_else(|| Error::parse(path, format!("scan is missing property '{name}'")))
    };
    let (x, y, z) = (need("x")?, need("y")?, need("z")?);
    let range = need("range")?;
    let beam = need("beam_id")?;
    let azimuth = need("azimuth")?;
    let class = need("class_id")?;
    let rows = read_rows(path, &bytes, &header)?;
    Ok(rows
        .into_iter()
        .map(|row| ScanPoint {
            position: Vector3::new(row[x], row[y], row[z]),
            range: row[range],
            beam_id: row[beam] as u8,
            azimuth: row[azimuth],
            class_id: row[class] as u16,
        })
        .collect())
}

pub fn write_point_cloud(path: &Path, points: &[CloudPoint]) -> Result<()> {
    let mut out = Vec::with_capacity(64 + points.len() * 14);
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property ushort class_id\nend_header\n",
        points.len()
    )
    .expect("vec write");
    for p in points {
        out.extend_from_slice(&(p.position.x as f32).to_le_bytes());
        out.extend_from_slice(&(p.position.y as f32).to_le_bytes());
        out.extend_from_slice(&(p.position.z as f32).to_le_bytes());
        out.extend_from_slice(&p.class_id.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_scan(path: &Path, points: &[ScanPoint]) -> Result<()> {
    let mut out = Vec::with_capacity(128 + points.len() * 23);
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property float range\nproperty uchar beam_id\n\
         property float azimuth\nproperty ushort class_id\nend_header\n",
        points.len()
    )
    .expect("vec write");
    for p in points {
        out.extend_from_slice(&(p.position.x as f32).to_le_bytes());
        out.extend_from_slice(&(p.position.y as f32).to_le_bytes());
        out.extend_from_slice(&(p.position.z as f32).to_le_bytes());
        out.extend_from_slice(&(p.range as f32).to_le_bytes());
        out.push(p.beam_id);
        out.extend_from_slice(&(p.azimuth as f32).to_le_bytes());
        out.extend_from_slice(&p.class_id.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
