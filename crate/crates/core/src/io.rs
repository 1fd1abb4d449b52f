//! File formats: PNG/PPM/PGM images, `x1..xN,value` CSV, ASCII PLY
//! point clouds and JSON tensors.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{CrnlError, Result};
use crate::observed::ObservedSet;
use crate::tensor::DenseTensor;

/// Reads an 8- or 16-bit grayscale or colour image into an
/// `rows x cols x bands` tensor scaled to `[0, 1]`. Alpha is dropped.
pub fn load_image(path: &Path) -> Result<DenseTensor> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (bands, data): (usize, Vec<f64>) = match &img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => (
            1,
            img.to_luma8().into_raw().iter().map(|&v| f64::from(v) / 255.0).collect(),
        ),
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => (
            1,
            img.to_luma16().into_raw().iter().map(|&v| f64::from(v) / 65535.0).collect(),
        ),
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => (
            3,
            img.to_rgb8().into_raw().iter().map(|&v| f64::from(v) / 255.0).collect(),
        ),
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => (
            3,
            img.to_rgb16().into_raw().iter().map(|&v| f64::from(v) / 65535.0).collect(),
        ),
        other => {
            return Err(CrnlError::parse(
                path.display().to_string(),
                format!("unsupported pixel format {:?}", other.color()),
            ))
        }
    };
    DenseTensor::new(vec![h, w, bands], data)
}

/// Writes a 1- or 3-band tensor as an 8-bit image (values clamped to
/// `[0, 1]`). `.ppm`/`.pgm` give binary PNM, anything else PNG.
pub fn save_image(x: &DenseTensor, path: &Path) -> Result<()> {
    let (h, w, bands) = match x.shape() {
        [h, w] => (*h, *w, 1),
        [h, w, b] => (*h, *w, *b),
        s => return Err(CrnlError::shape(format!("cannot save a {s:?} tensor as an image"))),
    };
    let color = match bands {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        b => return Err(CrnlError::shape(format!("images need 1 or 3 bands, got {b}"))),
    };
    let bytes: Vec<u8> = x
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("ppm") | Some("pgm") | Some("pnm") => {
            let subtype = if bands == 1 {
                PnmSubtype::Graymap(SampleEncoding::Binary)
            } else {
                PnmSubtype::Pixmap(SampleEncoding::Binary)
            };
            let file = fs::File::create(path)?;
            PnmEncoder::new(std::io::BufWriter::new(file))
                .with_subtype(subtype)
                .write_image(&bytes, w as u32, h as u32, color)?;
        }
        _ => image::save_buffer_with_format(
            path,
            &bytes,
            w as u32,
            h as u32,
            color,
            image::ImageFormat::Png,
        )?,
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorDoc {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// JSON `{shape, data}` with row-major data; used for multi-band outputs.
pub fn save_tensor_json(x: &DenseTensor, path: &Path) -> Result<()> {
    let doc = TensorDoc {
        shape: x.shape().to_vec(),
        data: x.data().to_vec(),
    };
    fs::write(path, serde_json::to_string(&doc)?)?;
    Ok(())
}

pub fn load_tensor_json(path: &Path) -> Result<DenseTensor> {
    let doc: TensorDoc = serde_json::from_str(&fs::read_to_string(path)?)?;
    DenseTensor::new(doc.shape, doc.data)
}

/// Reads a CSV with header `x1,..,xN,value`.
pub fn load_points_csv(path: &Path) -> Result<ObservedSet> {
    let ctx = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || headers.get(headers.len() - 1) != Some("value") {
        return Err(CrnlError::parse(ctx, "header must be x1,..,xN,value"));
    }
    let dim = headers.len() - 1;
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            return Err(CrnlError::parse(
                ctx,
                format!("row {} has {} fields, expected {}", line + 1, rec.len(), dim + 1),
            ));
        }
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CrnlError::parse(ctx.clone(), format!("row {}: bad number {field:?}", line + 1))
            })?;
            if k < dim {
                coords.push(v);
            } else {
                values.push(v);
            }
        }
    }
    if values.is_empty() {
        return Err(CrnlError::Empty(format!("{ctx} has no data rows")));
    }
    let points = Array2::from_shape_vec((values.len(), dim), coords).expect("row width");
    ObservedSet::new(points, values)
}

/// Writes `x1,..,xN,value` rows.
pub fn save_points_csv(path: &Path, points: ArrayView2<f64>, values: &[f64]) -> Result<()> {
    if points.nrows() != values.len() {
        return Err(CrnlError::shape("points and values differ in count"));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=points.ncols()).map(|d| format!("x{d}")).collect();
    header.push("value".into());
    w.write_record(&header)?;
    for (row, v) in points.rows().into_iter().zip(values) {
        let mut rec: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        rec.push(v.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Points with RGB colours in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub positions: Array2<f64>,
    pub colors: Array2<f64>,
}

impl PointCloud {
    pub fn new(positions: Array2<f64>, colors: Array2<f64>) -> Result<Self> {
        if positions.ncols() != 3 || colors.ncols() != 3 || positions.nrows() != colors.nrows() {
            return Err(CrnlError::shape("point cloud needs n x 3 positions and colours"));
        }
        if positions.nrows() == 0 {
            return Err(CrnlError::Empty("point cloud".into()));
        }
        Ok(Self { positions, colors })
    }

    pub fn len(&self) -> usize {
        self.positions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Each point becomes three observations `(x, y, z, channel) -> colour`.
    pub fn to_observed(&self) -> Result<ObservedSet> {
        let n = self.len();
        let mut pts = Array2::zeros((3 * n, 4));
        let mut vals = Vec::with_capacity(3 * n);
        for i in 0..n {
            for c in 0..3 {
                let r = 3 * i + c;
                for d in 0..3 {
                    pts[[r, d]] = self.positions[[i, d]];
                }
                pts[[r, 3]] = c as f64;
                vals.push(self.colors[[i, c]]);
            }
        }
        ObservedSet::new(pts, vals)
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let pick = |a: &Array2<f64>| {
            Array2::from_shape_fn((idx.len(), 3), |(r, c)| a[[idx[r], c]])
        };
        Self::new(pick(&self.positions), pick(&self.colors))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyScalar {
    Int(f64),
    Float,
}

fn ply_scalar(ty: &str) -> Option<PlyScalar> {
    match ty {
        "uchar" | "uint8" => Some(PlyScalar::Int(255.0)),
        "char" | "int8" => Some(PlyScalar::Int(127.0)),
        "ushort" | "uint16" => Some(PlyScalar::Int(65535.0)),
        "short" | "int16" => Some(PlyScalar::Int(32767.0)),
        "uint" | "uint32" | "int" | "int32" => Some(PlyScalar::Int(1.0)),
        "float" | "float32" | "double" | "float64" => Some(PlyScalar::Float),
        _ => None,
    }
}

/// Reads an ASCII PLY file with `x, y, z, red, green, blue` vertex
/// properties. Integer colours are scaled by their type's maximum.
pub fn load_ply(path: &Path) -> Result<PointCloud> {
    parse_ply(&fs::read_to_string(path)?, &path.display().to_string())
}

pub fn parse_ply(text: &str, ctx: &str) -> Result<PointCloud> {
    let err = |m: String| CrnlError::parse(ctx.to_string(), m);
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(err("missing 'ply' magic".into()));
    }
    let mut ascii = false;
    let mut count = None;
    let mut props: Vec<(String, PlyScalar)> = Vec::new();
    let mut in_vertex = false;
    let mut ended = false;
    for line in lines.by_ref() {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["format", "ascii", ..] => ascii = true,
            ["format", other, ..] => return Err(err(format!("unsupported format {other}"))),
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| err(format!("bad count {n}")))?);
                in_vertex = true;
            }
            ["element", ..] => {
                if count.is_none() {
                    return Err(err("vertex element must come first".into()));
                }
                in_vertex = false;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(err("list properties on vertices are not supported".into()))
            }
            ["property", ty, name] if in_vertex => {
                let s = ply_scalar(ty).ok_or_else(|| err(format!("unknown type {ty}")))?;
                props.push((name.to_string(), s));
            }
            ["end_header"] => {
                ended = true;
                break;
            }
            _ => {}
        }
    }
    if !ascii || !ended {
        return Err(err("header must declare ascii format and end_header".into()));
    }
    let n = count.ok_or_else(|| err("no vertex element".into()))?;
    let find = |name: &str| {
        props
            .iter()
            .position(|(p, _)| p == name)
            .ok_or_else(|| err(format!("missing vertex property {name}")))
    };
    let pos_idx = [find("x")?, find("y")?, find("z")?];
    let col_idx = [find("red")?, find("green")?, find("blue")?];
    let mut positions = Array2::zeros((n, 3));
    let mut colors = Array2::zeros((n, 3));
    let mut rows = lines.filter(|l| !l.trim().is_empty());
    for i in 0..n {
        let line = rows
            .next()
            .ok_or_else(|| err(format!("expected {n} vertices, found {i}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>().map_err(|_| err(format!("vertex {i}: bad number {f}"))))
            .collect::<Result<_>>()?;
        if vals.len() < props.len() {
            return Err(err(format!("vertex {i} has {} fields", vals.len())));
        }
        for d in 0..3 {
            positions[[i, d]] = vals[pos_idx[d]];
            colors[[i, d]] = match props[col_idx[d]].1 {
                PlyScalar::Int(max) => vals[col_idx[d]] / max,
                PlyScalar::Float => vals[col_idx[d]],
            };
        }
    }
    PointCloud::new(positions, colors)
}

/// Point cloud as observations with the channel as fourth coordinate.
pub fn load_ply_observed(path: &Path) -> Result<ObservedSet> {
    load_ply(path)?.to_observed()
}

/// Writes an ASCII PLY with `uchar` colours.
pub fn save_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    for p in ["x", "y", "z"] {
        out.push_str(&format!("property double {p}\n"));
    }
    for p in ["red", "green", "blue"] {
        out.push_str(&format!("property uchar {p}\n"));
    }
    out.push_str("end_header\n");
    for i in 0..cloud.len() {
        let c: Vec<u8> = (0..3)
            .map(|d| (cloud.colors[[i, d]].clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            cloud.positions[[i, 0]],
            cloud.positions[[i, 1]],
            cloud.positions[[i, 2]],
            c[0],
            c[1],
            c[2]
        ));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn image_round_trip_png_and_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let x = DenseTensor::from_fn(&[3, 4, 3], |i| ((i[0] * 31 + i[1] * 7 + i[2] * 50) % 256) as f64 / 255.0);
        for name in ["a.png", "a.ppm"] {
            let p = dir.path().join(name);
            save_image(&x, &p).unwrap();
            let y = load_image(&p).unwrap();
            assert_eq!(y.shape(), x.shape());
            for (a, b) in x.data().iter().zip(y.data()) {
                assert!((a - b).abs() <= 1.0 / 255.0);
            }
        }
    }

    #[test]
    fn hand_built_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.ppm");
        fs::write(&p, "P3\n2 2\n255\n255 0 0  0 255 0\n0 0 255  255 255 255\n").unwrap();
        let t = load_image(&p).unwrap();
        assert_eq!(t.shape(), &[2, 2, 3]);
        assert_eq!(t.get(&[0, 0, 0]), 1.0);
        assert_eq!(t.get(&[0, 1, 1]), 1.0);
        assert_eq!(t.get(&[1, 0, 2]), 1.0);
        assert_eq!(t.get(&[1, 0, 0]), 0.0);
    }

    #[test]
    fn grayscale_png_has_one_band() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        let x = DenseTensor::from_fn(&[5, 6, 1], |i| (i[0] + i[1]) as f64 / 10.0);
        save_image(&x, &p).unwrap();
        assert_eq!(load_image(&p).unwrap().shape(), &[5, 6, 1]);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "x1,x2,value\n0.5,1,2.25\n-1,0,3\n2,2,-0.125\n").unwrap();
        let obs = load_points_csv(&p).unwrap();
        assert_eq!(obs.len(), 3);
        assert_eq!(obs.values(), &[2.25, 3.0, -0.125]);
        assert_eq!(obs.point(1).to_vec(), vec![-1.0, 0.0]);

        let q = dir.path().join("o.csv");
        save_points_csv(&q, obs.points().view(), obs.values()).unwrap();
        assert_eq!(load_points_csv(&q).unwrap(), obs);

        let e = dir.path().join("e.csv");
        fs::write(&e, "").unwrap();
        assert!(load_points_csv(&e).is_err());
        fs::write(&e, "x1,value\n").unwrap();
        assert!(load_points_csv(&e).is_err());
        fs::write(&e, "x1,value\n1,abc\n").unwrap();
        assert!(load_points_csv(&e).is_err());
    }

    const TWO_POINTS: &str = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n0 0 0 255 0 51\n1 2 3 0 255 102\n";

    #[test]
    fn ply_expands_to_channel_observations() {
        let cloud = parse_ply(TWO_POINTS, "t").unwrap();
        assert_eq!(cloud.positions, array![[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]);
        let obs = cloud.to_observed().unwrap();
        assert_eq!(obs.len(), 6);
        assert_eq!(obs.dim(), 4);
        assert_eq!(obs.point(5).to_vec(), vec![1.0, 2.0, 3.0, 2.0]);
        assert!((obs.values()[5] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn ply_errors() {
        assert!(parse_ply("", "t").is_err());
        let missing = TWO_POINTS.replace("property uchar blue\n", "");
        assert!(parse_ply(&missing, "t").is_err());
        let short = TWO_POINTS.replace("1 2 3 0 255 102\n", "");
        assert!(parse_ply(&short, "t").is_err());
    }

    #[test]
    fn ply_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        let cloud = parse_ply(TWO_POINTS, "t").unwrap();
        save_ply(&p, &cloud).unwrap();
        assert_eq!(load_ply(&p).unwrap(), cloud);
    }

    #[test]
    fn tensor_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        let x = DenseTensor::from_fn(&[2, 3, 4], |i| (i[0] * 12 + i[1] * 4 + i[2]) as f64 * 0.1);
        save_tensor_json(&x, &p).unwrap();
        assert_eq!(load_tensor_json(&p).unwrap(), x);
    }
}
