//! PLY reading and writing (ASCII, binary little and big endian).
//!
//! Only the `vertex` element's `x`, `y`, `z` properties are kept; any other
//! elements and properties are parsed and skipped. Every parse error carries
//! the byte offset at which the problem was detected.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Point3;

use crate::geometry::{PointCloud, RigidTransform};
use crate::matching::CorrespondenceSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyFormat {
    Ascii,
    #[default]
    BinaryLittleEndian,
    BinaryBigEndian,
}

impl PlyFormat {
    fn keyword(self) -> &'static str {
        match self {
            PlyFormat::Ascii => "ascii",
            PlyFormat::BinaryLittleEndian => "binary_little_endian",
            PlyFormat::BinaryBigEndian => "binary_big_endian",
        }
    }
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
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
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

    fn decode(self, b: &[u8], little: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let mut a = [0u8; $n];
                a.copy_from_slice(&b[..$n]);
                (if little { <$t>::from_le_bytes(a) } else { <$t>::from_be_bytes(a) }) as f64
            }};
        }
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => num!(i16, 2),
            Scalar::U16 => num!(u16, 2),
            Scalar::I32 => num!(i32, 4),
            Scalar::U32 => num!(u32, 4),
            Scalar::F32 => num!(f32, 4),
            Scalar::F64 => num!(f64, 8),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
    /// Offset of the `element` line, for layout errors.
    offset: usize,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    body: usize,
}

fn parse_error(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0usize;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut first = true;
    loop {
        let start = pos;
        let Some(nl) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(parse_error(bytes.len(), "header ends without end_header"));
        };
        pos += nl + 1;
        let line = std::str::from_utf8(&bytes[start..start + nl])
            .map_err(|_| parse_error(start, "header line is not valid UTF-8"))?
            .trim_end_matches('\r');
        let words: Vec<&str> = line.split_whitespace().collect();
        if first {
            if line != "ply" {
                return Err(parse_error(start, "missing `ply` magic line"));
            }
            first = false;
            continue;
        }
        match words.as_slice() {
            [] => {}
            ["comment" | "obj_info", ..] => {}
            ["format", f, "1.0"] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    "binary_big_endian" => PlyFormat::BinaryBigEndian,
                    other => return Err(parse_error(start, format!("unknown format `{other}`"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| parse_error(start, format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    offset: start,
                });
            }
            ["property", "list", count, item, _name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_error(start, "property before any element"))?;
                let count = Scalar::parse(count).ok_or_else(|| parse_error(start, format!("unknown type `{count}`")))?;
                let item = Scalar::parse(item).ok_or_else(|| parse_error(start, format!("unknown type `{item}`")))?;
                if matches!(count, Scalar::F32 | Scalar::F64) {
                    return Err(parse_error(start, "list count type must be an integer"));
                }
                el.properties.push(Property::List { count, item });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_error(start, "property before any element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| parse_error(start, format!("unknown type `{ty}`")))?;
                el.properties.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            ["end_header"] => break,
            _ => return Err(parse_error(start, format!("unrecognized header line `{line}`"))),
        }
    }
    let format = format.ok_or_else(|| parse_error(pos, "header has no format line"))?;
    Ok(Header {
        format,
        elements,
        body: pos,
    })
}

/// Positions of x, y, z among the vertex element's properties.
fn xyz_slots(el: &Element) -> Result<[usize; 3]> {
    let mut slots = [usize::MAX; 3];
    for (i, p) in el.properties.iter().enumerate() {
        match p {
            Property::Scalar { name, .. } => {
                if let Some(axis) = ["x", "y", "z"].iter().position(|a| a == name) {
                    slots[axis] = i;
                }
            }
            Property::List { .. } => {
                return Err(parse_error(el.offset, "list properties on vertex are not supported"));
            }
        }
    }
    if slots.contains(&usize::MAX) {
        return Err(parse_error(el.offset, "vertex element lacks x, y or z"));
    }
    Ok(slots)
}

struct AsciiCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl AsciiCursor<'_> {
    /// Next whitespace-separated token on the current line.
    fn token(&mut self) -> Result<(usize, &str)> {
        while self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b' ' | b'\t' | b'\r') {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(parse_error(start, "record ends early"));
        }
        let s = std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| parse_error(start, "token is not UTF-8"))?;
        Ok((start, s))
    }

    fn number(&mut self) -> Result<f64> {
        let (at, s) = self.token()?;
        s.parse().map_err(|_| parse_error(at, format!("`{s}` is not a number")))
    }

    fn end_line(&mut self) -> Result<()> {
        while self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b' ' | b'\t' | b'\r') {
            self.pos += 1;
        }
        match self.bytes.get(self.pos) {
            None => Ok(()),
            Some(b'\n') => {
                self.pos += 1;
                Ok(())
            }
            Some(_) => Err(parse_error(self.pos, "extra values at the end of a record")),
        }
    }

    /// Skips blank lines; errors if the payload is exhausted.
    fn begin_record(&mut self) -> Result<usize> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.bytes.len() {
            return Err(parse_error(self.pos, "payload truncated: missing record"));
        }
        Ok(self.pos)
    }
}

fn check_point(p: [f64; 3], offset: usize) -> Result<Point3<f64>> {
    if p.iter().all(|v| v.is_finite()) {
        Ok(Point3::from(p))
    } else {
        Err(parse_error(offset, "non-finite coordinate"))
    }
}

fn read_ascii(bytes: &[u8], header: &Header) -> Result<Vec<Point3<f64>>> {
    let mut cur = AsciiCursor {
        bytes,
        pos: header.body,
    };
    let mut points = Vec::new();
    for el in &header.elements {
        let slots = if el.name == "vertex" { Some(xyz_slots(el)?) } else { None };
        for _ in 0..el.count {
            let record = cur.begin_record()?;
            let mut xyz = [0.0; 3];
            for (i, p) in el.properties.iter().enumerate() {
                match p {
                    Property::Scalar { .. } => {
                        let v = cur.number()?;
                        if let Some(axis) = slots.and_then(|s| s.iter().position(|&k| k == i)) {
                            xyz[axis] = v;
                        }
                    }
                    Property::List { .. } => {
                        let (at, s) = cur.token()?;
                        let n: usize = s.parse().map_err(|_| parse_error(at, format!("bad list length `{s}`")))?;
                        for _ in 0..n {
                            cur.number()?;
                        }
                    }
                }
            }
            cur.end_line()?;
            if slots.is_some() {
                points.push(check_point(xyz, record)?);
            }
        }
    }
    Ok(points)
}

fn read_binary(bytes: &[u8], header: &Header) -> Result<Vec<Point3<f64>>> {
    let little = header.format == PlyFormat::BinaryLittleEndian;
    let mut pos = header.body;
    let mut points = Vec::new();
    let take = |pos: &mut usize, n: usize, record: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(parse_error(record, "payload truncated inside a record"));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    for el in &header.elements {
        let slots = if el.name == "vertex" { Some(xyz_slots(el)?) } else { None };
        for _ in 0..el.count {
            let record = pos;
            if record >= bytes.len() {
                return Err(parse_error(record, "payload truncated: missing record"));
            }
            let mut xyz = [0.0; 3];
            for (i, p) in el.properties.iter().enumerate() {
                match p {
                    Property::Scalar { ty, .. } => {
                        let v = ty.decode(take(&mut pos, ty.size(), record)?, little);
                        if let Some(axis) = slots.and_then(|s| s.iter().position(|&k| k == i)) {
                            xyz[axis] = v;
                        }
                    }
                    Property::List { count, item } => {
                        let n = count.decode(take(&mut pos, count.size(), record)?, little);
                        if n < 0.0 {
                            return Err(parse_error(record, "negative list length"));
                        }
                        take(&mut pos, n as usize * item.size(), record)?;
                    }
                }
            }
            if slots.is_some() {
                points.push(check_point(xyz, record)?);
            }
        }
    }
    Ok(points)
}

/// Parses a PLY document held in memory.
pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud> {
    let header = parse_header(bytes)?;
    if !header.elements.iter().any(|e| e.name == "vertex") {
        return Err(parse_error(header.body, "no vertex element"));
    }
    let points = match header.format {
        PlyFormat::Ascii => read_ascii(bytes, &header)?,
        _ => read_binary(bytes, &header)?,
    };
    PointCloud::new(points)
}

pub fn read_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    parse_ply(&fs::read(path)?)
}

struct Encoder {
    format: PlyFormat,
    out: Vec<u8>,
}

impl Encoder {
    fn f64(&mut self, v: f64) {
        match self.format {
            PlyFormat::Ascii => self.out.extend_from_slice(format!("{v} ").as_bytes()),
            PlyFormat::BinaryLittleEndian => self.out.extend_from_slice(&v.to_le_bytes()),
            PlyFormat::BinaryBigEndian => self.out.extend_from_slice(&v.to_be_bytes()),
        }
    }

    fn u8(&mut self, v: u8) {
        match self.format {
            PlyFormat::Ascii => self.out.extend_from_slice(format!("{v} ").as_bytes()),
            _ => self.out.push(v),
        }
    }

    fn i32(&mut self, v: i32) {
        match self.format {
            PlyFormat::Ascii => self.out.extend_from_slice(format!("{v} ").as_bytes()),
            PlyFormat::BinaryLittleEndian => self.out.extend_from_slice(&v.to_le_bytes()),
            PlyFormat::BinaryBigEndian => self.out.extend_from_slice(&v.to_be_bytes()),
        }
    }

    fn end_record(&mut self) {
        if self.format == PlyFormat::Ascii {
            self.out.pop();
            self.out.push(b'\n');
        }
    }
}

/// Serializes `cloud` with double-precision coordinates.
pub fn encode_ply(cloud: &PointCloud, format: PlyFormat) -> Vec<u8> {
    let mut enc = Encoder {
        format,
        out: format!(
            "ply\nformat {} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
            format.keyword(),
            cloud.len()
        )
        .into_bytes(),
    };
    for p in cloud {
        enc.f64(p.x);
        enc.f64(p.y);
        enc.f64(p.z);
        enc.end_record();
    }
    enc.out
}

pub fn write_point_cloud(path: impl AsRef<Path>, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_ply(cloud, format))?;
    Ok(())
}

pub const SOURCE_COLOR: [u8; 3] = [255, 200, 0];
pub const TARGET_COLOR: [u8; 3] = [0, 120, 255];
pub const INLIER_COLOR: [u8; 3] = [0, 255, 0];
pub const OUTLIER_COLOR: [u8; 3] = [255, 0, 0];

/// Both clouds plus one colored edge per correspondence: green when
/// `‖gt(p) − q‖ < tau1`, red otherwise. Edge endpoints are appended as extra
/// vertices after the two clouds.
pub fn encode_correspondence_visualization(
    source: &PointCloud,
    target: &PointCloud,
    correspondences: &CorrespondenceSet,
    gt: &RigidTransform,
    tau1: f64,
    format: PlyFormat,
) -> Vec<u8> {
    let n_vertices = source.len() + target.len() + 2 * correspondences.len();
    let mut enc = Encoder {
        format,
        out: format!(
            "ply\nformat {} 1.0\nelement vertex {n_vertices}\nproperty double x\nproperty double y\nproperty double z\n\
             property uchar red\nproperty uchar green\nproperty uchar blue\n\
             element edge {}\nproperty int vertex1\nproperty int vertex2\n\
             property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
            format.keyword(),
            correspondences.len()
        )
        .into_bytes(),
    };
    let vertex = |enc: &mut Encoder, p: &Point3<f64>, c: [u8; 3]| {
        enc.f64(p.x);
        enc.f64(p.y);
        enc.f64(p.z);
        c.iter().for_each(|&v| enc.u8(v));
        enc.end_record();
    };
    source.iter().for_each(|p| vertex(&mut enc, p, SOURCE_COLOR));
    target.iter().for_each(|p| vertex(&mut enc, p, TARGET_COLOR));
    for c in correspondences.iter() {
        vertex(&mut enc, &c.source, SOURCE_COLOR);
        vertex(&mut enc, &c.target, TARGET_COLOR);
    }
    let base = source.len() + target.len();
    for (k, c) in correspondences.iter().enumerate() {
        let inlier = (gt.transform_point(&c.source) - c.target).norm() < tau1;
        enc.i32((base + 2 * k) as i32);
        enc.i32((base + 2 * k + 1) as i32);
        let color = if inlier { INLIER_COLOR } else { OUTLIER_COLOR };
        color.iter().for_each(|&v| enc.u8(v));
        enc.end_record();
    }
    enc.out
}

pub fn write_correspondence_visualization(
    path: impl AsRef<Path>,
    source: &PointCloud,
    target: &PointCloud,
    correspondences: &CorrespondenceSet,
    gt: &RigidTransform,
    tau1: f64,
) -> Result<()> {
    let bytes =
        encode_correspondence_visualization(source, target, correspondences, gt, tau1, PlyFormat::BinaryLittleEndian);
    fs::write(path, bytes)?;
    Ok(())
}
