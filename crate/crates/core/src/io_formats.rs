//! Files in and out: images, box lists, metric reports and annotated renders.
//!
//! Box files hold one box per line, either an ICDAR-style quadrilateral
//! `x1,y1,x2,y2,x3,y3,x4,y4` or a rotated rectangle `cx,cy,w,h,angle`. An
//! optional trailing field is kept as a label (ICDAR transcriptions, scores).
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{min_area_rect, HeightAxis, OrientedBox, Point};
use crate::imagecolor::{ImageBuffer, Pixel};
use crate::metrics::MetricsReport;

/// Quads whose rectangle fit moves a vertex further than this are reported.
pub const FIT_WARN_PX: f64 = 2.0;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot decode image: {msg}")]
    Decode { path: PathBuf, msg: String },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
}

type Result<T> = std::result::Result<T, FormatError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Decodes a PNG or JPEG file into 8-bit RGB.
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| FormatError::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    let pixels: Vec<Pixel> = rgb.pixels().map(|p| p.0).collect();
    ImageBuffer::from_pixels(w, h, pixels).map_err(|e| FormatError::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn save_png(img: &ImageBuffer, path: &Path) -> Result<()> {
    let raw: Vec<u8> = img.pixels().iter().flatten().copied().collect();
    let buf = image::RgbImage::from_raw(img.width(), img.height(), raw)
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(source) => FormatError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => FormatError::Decode {
                path: path.to_path_buf(),
                msg: other.to_string(),
            },
        })
}

/// One parsed line of a box file.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRecord {
    pub bbox: OrientedBox,
    /// Largest distance from an input quad vertex to the fitted rectangle's
    /// nearest corner; 0 for 5-tuples.
    pub fit_deviation: f64,
    pub label: Option<String>,
    pub line: usize,
}

/// Detector output for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFile {
    pub path: PathBuf,
    /// Image named by a JSON sidecar; text files do not carry one.
    pub image: Option<PathBuf>,
    pub records: Vec<BoxRecord>,
}

impl DetectionFile {
    pub fn boxes(&self) -> Vec<OrientedBox> {
        self.records.iter().map(|r| r.bbox).collect()
    }
}

/// Ground truth for one image; same grammar as detections.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFile {
    pub path: PathBuf,
    pub books: Vec<OrientedBox>,
    pub labels: Vec<Option<String>>,
}

/// Fits the minimum-area rectangle to a quad. The longer side becomes the
/// height; a square is taken as upright.
pub fn quad_to_box(quad: &[f64; 8]) -> std::result::Result<(OrientedBox, f64), String> {
    let pts: Vec<Point> = quad.chunks(2).map(|c| Point::new(c[0], c[1])).collect();
    let fitted = min_area_rect(&pts, HeightAxis::LongerSide).map_err(|e| e.to_string())?;
    let corners = fitted.corners();
    let deviation = pts
        .iter()
        .map(|p| {
            corners
                .iter()
                .map(|c| c.distance(*p))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    Ok((fitted, deviation))
}

/// ICDAR vertex order: clockwise on screen from the top-left of an upright box.
pub fn box_to_quad(b: &OrientedBox) -> [Point; 4] {
    let c = b.corners();
    [c[1], c[2], c[3], c[0]]
}

fn parse_fields(
    fields: &[&str],
) -> std::result::Result<(OrientedBox, f64, Option<String>), String> {
    let numeric = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    let label_from = |rest: &[&str]| (!rest.is_empty()).then(|| rest.join(",").trim().to_string());
    let nums: Vec<Option<f64>> = fields.iter().map(|f| numeric(f)).collect();
    let coords = if fields.len() >= 8 {
        8
    } else {
        fields.len().min(5)
    };
    if fields[..coords]
        .iter()
        .any(|f| f.trim().parse::<f64>().is_ok_and(|v| !v.is_finite()))
    {
        return Err("non-finite coordinate".into());
    }
    if fields.len() >= 8 && nums[..8].iter().all(Option::is_some) {
        let mut quad = [0.0; 8];
        for (q, n) in quad.iter_mut().zip(&nums[..8]) {
            *q = n.unwrap();
        }
        let (bbox, dev) = quad_to_box(&quad)?;
        return Ok((bbox, dev, label_from(&fields[8..])));
    }
    if (fields.len() == 5 || fields.len() == 6) && nums[..5].iter().all(Option::is_some) {
        let v: Vec<f64> = nums[..5].iter().map(|n| n.unwrap()).collect();
        let bbox = OrientedBox::new(v[0], v[1], v[2], v[3], v[4]).map_err(|e| e.to_string())?;
        return Ok((bbox, 0.0, label_from(&fields[5..])));
    }
    let count = nums.iter().take_while(|n| n.is_some()).count();
    Err(format!(
        "expected 8 quad coordinates or 5 box parameters, found {count} numeric field(s) in {} field(s)",
        fields.len()
    ))
}

/// Parses box-file text; `path` is only used in messages.
pub fn parse_boxes(text: &str, path: &Path) -> Result<Vec<BoxRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_start_matches('\u{feff}').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let (bbox, fit_deviation, label) =
            parse_fields(&fields).map_err(|msg| FormatError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            })?;
        if fit_deviation > FIT_WARN_PX {
            warn!(
                "{}:{}: quad is not rectangular, fit moved a vertex {fit_deviation:.2} px",
                path.display(),
                i + 1
            );
        }
        out.push(BoxRecord {
            bbox,
            fit_deviation,
            label,
            line: i + 1,
        });
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonDetections {
    #[serde(default)]
    image: Option<PathBuf>,
    boxes: Vec<Vec<f64>>,
}

/// Loads `<stem>.boxes.txt` (or a `.json` sidecar with `image` and `boxes`).
pub fn load_detections(path: &Path) -> Result<DetectionFile> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    if path.extension().is_some_and(|e| e == "json") {
        let parsed: JsonDetections =
            serde_json::from_str(&text).map_err(|e| FormatError::Parse {
                path: path.to_path_buf(),
                line: e.line(),
                msg: e.to_string(),
            })?;
        let mut records = Vec::new();
        for (i, row) in parsed.boxes.iter().enumerate() {
            let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let refs: Vec<&str> = fields.iter().map(String::as_str).collect();
            let (bbox, fit_deviation, _) =
                parse_fields(&refs).map_err(|msg| FormatError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("box #{}: {msg}", i + 1),
                })?;
            records.push(BoxRecord {
                bbox,
                fit_deviation,
                label: None,
                line: i + 1,
            });
        }
        return Ok(DetectionFile {
            path: path.to_path_buf(),
            image: parsed.image,
            records,
        });
    }
    Ok(DetectionFile {
        path: path.to_path_buf(),
        image: None,
        records: parse_boxes(&text, path)?,
    })
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruthFile> {
    let det = load_detections(path)?;
    Ok(GroundTruthFile {
        path: det.path,
        books: det.records.iter().map(|r| r.bbox).collect(),
        labels: det.records.into_iter().map(|r| r.label).collect(),
    })
}

/// One quad per line with three decimals.
pub fn format_boxes(boxes: &[OrientedBox]) -> String {
    format_labeled_boxes(boxes, &[])
}

/// Like [`format_boxes`], appending `labels[i]` (when present) as a trailing field.
pub fn format_labeled_boxes(boxes: &[OrientedBox], labels: &[Option<String>]) -> String {
    let mut s = String::new();
    for (i, b) in boxes.iter().enumerate() {
        let q = box_to_quad(b);
        let mut fields: Vec<String> = q
            .iter()
            .flat_map(|p| [p.x, p.y])
            .map(|v| {
                let v = if v.abs() < 5e-4 { 0.0 } else { v };
                format!("{v:.3}")
            })
            .collect();
        if let Some(Some(label)) = labels.get(i) {
            fields.push(label.clone());
        }
        let _ = writeln!(s, "{}", fields.join(","));
    }
    s
}

pub fn write_boxes(path: &Path, boxes: &[OrientedBox]) -> Result<()> {
    fs::write(path, format_boxes(boxes)).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// A labelled row of metrics (an image, a configuration, or `TOTAL`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub metrics: MetricsReport,
}

/// Per-row metrics plus an optional corpus total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Header of the name column: `image` or `config`.
    pub key: String,
    pub rows: Vec<ReportRow>,
    pub total: Option<MetricsReport>,
}

pub const TOTAL_ROW: &str = "TOTAL";
const CSV_METRIC_COLUMNS: [&str; 7] = [
    "BA",
    "EDBC",
    "IoU",
    "ADM",
    "matched_books",
    "total_books",
    "false_boxes",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn report_to_csv(report: &Report) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![report.key.as_str()];
    header.extend(CSV_METRIC_COLUMNS);
    w.write_record(&header).expect("in-memory write");
    let rows = report
        .rows
        .iter()
        .map(|r| (r.name.as_str(), &r.metrics))
        .chain(report.total.as_ref().map(|t| (TOTAL_ROW, t)));
    for (name, m) in rows {
        w.write_record([
            name.to_string(),
            m.ba.to_string(),
            opt(m.edbc_mean),
            opt(m.iou_mean),
            opt(m.adm_mean),
            m.matched_books.to_string(),
            m.total_books.to_string(),
            m.false_boxes.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn report_from_csv(text: &str, path: &Path) -> Result<Report> {
    let parse_err = |line: usize, msg: String| FormatError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.len() != 8 || header.iter().skip(1).ne(CSV_METRIC_COLUMNS) {
        return Err(parse_err(1, format!("unexpected header {header:?}")));
    }
    let mut report = Report {
        key: header[0].to_string(),
        rows: Vec::new(),
        total: None,
    };
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let f = |k: usize| -> Result<f64> {
            rec[k]
                .parse()
                .map_err(|e| parse_err(line, format!("column {k}: {e}")))
        };
        let of = |k: usize| -> Result<Option<f64>> {
            if rec[k].is_empty() {
                Ok(None)
            } else {
                f(k).map(Some)
            }
        };
        let u = |k: usize| -> Result<usize> {
            rec[k]
                .parse()
                .map_err(|e| parse_err(line, format!("column {k}: {e}")))
        };
        let metrics = MetricsReport {
            ba: f(1)?,
            edbc_mean: of(2)?,
            iou_mean: of(3)?,
            adm_mean: of(4)?,
            matched_books: u(5)?,
            total_books: u(6)?,
            false_boxes: u(7)?,
        };
        if &rec[0] == TOTAL_ROW {
            report.total = Some(metrics);
        } else {
            report.rows.push(ReportRow {
                name: rec[0].to_string(),
                metrics,
            });
        }
    }
    Ok(report)
}

pub fn write_report(report: &Report, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => report_to_csv(report),
    };
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_report(path: &Path, format: ReportFormat) -> Result<Report> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    match format {
        ReportFormat::Json => serde_json::from_str(&text).map_err(|e| FormatError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        }),
        ReportFormat::Csv => report_from_csv(&text, path),
    }
}

pub const PREDICTION_STROKE: Pixel = [255, 0, 0];
pub const TRUTH_STROKE: Pixel = [0, 255, 0];
/// Truth outlines are dashed: this many pixels on, then off.
const DASH_ON: usize = 4;
const DASH_OFF: usize = 3;

/// Pixel-index vertices of the outline through the box's boundary pixels.
pub fn outline_vertices(b: &OrientedBox) -> [(i64, i64); 4] {
    let inset = OrientedBox::new(
        b.cx(),
        b.cy(),
        (b.width() - 1.0).max(1e-6),
        (b.height() - 1.0).max(1e-6),
        b.angle(),
    )
    .expect("positive size");
    box_to_quad(&inset).map(|p| (p.x.floor() as i64, p.y.floor() as i64))
}

/// Bresenham segment including both end points.
pub fn line_pixels(from: (i64, i64), to: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = from;
    let dx = (to.0 - x).abs();
    let dy = -(to.1 - y).abs();
    let sx = if x < to.0 { 1 } else { -1 };
    let sy = if y < to.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push((x, y));
        if (x, y) == to {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

fn stroke(img: &mut ImageBuffer, b: &OrientedBox, color: Pixel, dashed: bool) {
    let v = outline_vertices(b);
    let mut step = 0usize;
    for k in 0..4 {
        for (x, y) in line_pixels(v[k], v[(k + 1) % 4]) {
            let on = !dashed || step % (DASH_ON + DASH_OFF) < DASH_ON;
            step += 1;
            if on && x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
                img.set(x as u32, y as u32, color);
            }
        }
    }
}

/// Draws dashed truth outlines, then solid prediction outlines.
pub fn draw_annotations(
    img: &ImageBuffer,
    boxes: &[OrientedBox],
    truth: Option<&[OrientedBox]>,
) -> ImageBuffer {
    let mut out = img.clone();
    for t in truth.unwrap_or_default() {
        stroke(&mut out, t, TRUTH_STROKE, true);
    }
    for b in boxes {
        stroke(&mut out, b, PREDICTION_STROKE, false);
    }
    out
}

pub fn render_annotated(
    img: &ImageBuffer,
    boxes: &[OrientedBox],
    truth: Option<&[OrientedBox]>,
    path: &Path,
) -> Result<()> {
    save_png(&draw_annotations(img, boxes, truth), path)
}
