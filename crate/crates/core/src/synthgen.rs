//! Seeded synthetic bookshelves.
//!
//! A shelf is a row of rotated spine rectangles standing on the bottom of the
//! canvas. Each spine carries a few text bands stacked along its length; a
//! band is drawn as a solid ink rectangle in the text color, inset inside the
//! band so the band's corners show the spine color. The detector-like raw
//! boxes are the bands with Gaussian noise on center and angle, and every raw
//! box remembers which book it came from.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, OrientedBox};
use crate::imagecolor::{for_each_pixel_in, ImageBuffer, Pixel, Rgb};
use crate::io_formats::{self, format_labeled_boxes, FormatError};
use crate::metrics::GroundTruth;

/// Ink rectangle size relative to its band (across, along).
pub const INK_FRACTION: (f64, f64) = (0.85, 0.55);
/// Band width relative to the spine width.
pub const BAND_WIDTH_FRACTION: f64 = 0.55;
/// Bands are kept at least this much longer than they are wide.
pub const BAND_ASPECT_MARGIN_PX: f64 = 10.0;
const CANVAS_MARGIN_PX: f64 = 8.0;
const COLOR_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("books need {needed:.0}x{needed_height:.0} px but the canvas is {width}x{height}")]
    LayoutOverflow {
        needed: f64,
        needed_height: f64,
        width: u32,
        height: u32,
    },
    #[error("invalid shelf spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorPair {
    pub spine: Pixel,
    pub text: Pixel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShelfSpec {
    pub seed: u64,
    pub canvas_width: u32,
    pub canvas_height: u32,
    pub background: Pixel,
    pub books: usize,
    /// Explicit colors for the first books; the rest are drawn at random.
    pub colors: Vec<ColorPair>,
    /// Minimum RGB distance between a spine and its text, and between
    /// neighbouring spines.
    pub min_color_distance: f64,
    pub angle_range: [f64; 2],
    pub spine_width_range: [f64; 2],
    pub spine_length_range: [f64; 2],
    pub fragments_per_book: [usize; 2],
    pub center_jitter_px: f64,
    pub angle_jitter_deg: f64,
}

impl Default for ShelfSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            canvas_width: 1600,
            canvas_height: 1200,
            background: [24, 24, 24],
            books: 4,
            colors: Vec::new(),
            min_color_distance: 80.0,
            angle_range: [82.0, 98.0],
            spine_width_range: [100.0, 140.0],
            spine_length_range: [480.0, 720.0],
            fragments_per_book: [2, 4],
            center_jitter_px: 3.0,
            angle_jitter_deg: 2.0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], min: f64) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] >= min && r[0] <= r[1]) {
        return Err(SynthError::InvalidSpec(format!(
            "{name} {r:?} must satisfy {min} <= lo <= hi"
        )));
    }
    Ok(())
}

impl ShelfSpec {
    pub fn validate(&self) -> Result<()> {
        if self.canvas_width == 0 || self.canvas_height == 0 {
            return Err(SynthError::InvalidSpec("canvas must be non-empty".into()));
        }
        check_range("angle_range", self.angle_range, 0.0)?;
        if self.angle_range[0] <= 0.0 || self.angle_range[1] >= 180.0 {
            return Err(SynthError::InvalidSpec(
                "angle_range must lie inside (0, 180)".into(),
            ));
        }
        check_range("spine_width_range", self.spine_width_range, 1.0)?;
        check_range("spine_length_range", self.spine_length_range, 1.0)?;
        let [lo, hi] = self.fragments_per_book;
        if lo == 0 || lo > hi {
            return Err(SynthError::InvalidSpec(format!(
                "fragments_per_book {:?} must satisfy 1 <= lo <= hi",
                self.fragments_per_book
            )));
        }
        for (name, v) in [
            ("center_jitter_px", self.center_jitter_px),
            ("angle_jitter_deg", self.angle_jitter_deg),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SynthError::InvalidSpec(format!(
                    "{name} must be finite and >= 0"
                )));
            }
        }
        if !(0.0..=441.0).contains(&self.min_color_distance) {
            return Err(SynthError::InvalidSpec(
                "min_color_distance must be in [0, 441]".into(),
            ));
        }
        // Every band must fit its slot and stay longer than wide.
        let band_w = BAND_WIDTH_FRACTION * self.spine_width_range[1];
        let slot = 0.9 * self.spine_length_range[0] / hi as f64;
        if 0.85 * slot < band_w + BAND_ASPECT_MARGIN_PX {
            return Err(SynthError::InvalidSpec(format!(
                "spines of length {} cannot hold {hi} bands of width {band_w:.1}",
                self.spine_length_range[0]
            )));
        }
        Ok(())
    }
}

/// Ground-truth spine and its colors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Book {
    pub spine: OrientedBox,
    pub colors: ColorPair,
}

/// One detector-like box: the drawn band, the noisy raw box and its book.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    pub band: OrientedBox,
    pub raw: OrientedBox,
    pub book: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticShelf {
    pub image: ImageBuffer,
    pub books: Vec<Book>,
    pub fragments: Vec<Fragment>,
}

impl SyntheticShelf {
    pub fn raw_boxes(&self) -> Vec<OrientedBox> {
        self.fragments.iter().map(|f| f.raw).collect()
    }

    pub fn bands(&self) -> Vec<OrientedBox> {
        self.fragments.iter().map(|f| f.band).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.fragments.iter().map(|f| f.book).collect()
    }

    pub fn truth(&self, image_id: &str) -> GroundTruth {
        GroundTruth::new(image_id, self.books.iter().map(|b| b.spine).collect())
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * sigma
}

fn distance(a: Pixel, b: Pixel) -> f64 {
    Rgb::from(a).distance(&Rgb::from(b))
}

fn pick_colors(
    rng: &mut ChaCha8Rng,
    min_dist: f64,
    previous_spine: Option<Pixel>,
) -> Result<ColorPair> {
    for _ in 0..COLOR_ATTEMPTS {
        let spine: Pixel = rng.random();
        if previous_spine.is_some_and(|p| distance(p, spine) < min_dist) {
            continue;
        }
        for _ in 0..64 {
            let text: Pixel = rng.random();
            if distance(spine, text) >= min_dist {
                return Ok(ColorPair { spine, text });
            }
        }
    }
    Err(SynthError::InvalidSpec(format!(
        "no colors found at distance {min_dist}"
    )))
}

fn paint(img: &mut ImageBuffer, bx: &OrientedBox, color: Pixel) {
    let (w, h) = (img.width(), img.height());
    for_each_pixel_in(w, h, bx, |x, y| img.set(x, y, color));
}

struct Pose {
    width: f64,
    length: f64,
    angle: f64,
    extent_x: f64,
    extent_y: f64,
}

/// Renders one shelf. Equal specs give byte-identical shelves.
pub fn generate(spec: &ShelfSpec) -> Result<SyntheticShelf> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let poses: Vec<Pose> = (0..spec.books)
        .map(|_| {
            let angle = uniform(&mut rng, spec.angle_range);
            let width = uniform(&mut rng, spec.spine_width_range);
            let length = uniform(&mut rng, spec.spine_length_range);
            let (sin, cos) = angle.to_radians().sin_cos();
            Pose {
                width,
                length,
                angle,
                extent_x: length * cos.abs() + width * sin,
                extent_y: length * sin + width * cos.abs(),
            }
        })
        .collect();
    let gaps: Vec<f64> = (0..spec.books.saturating_sub(1))
        .map(|_| rng.random_range(8.0..24.0))
        .collect();
    let needed = poses.iter().map(|p| p.extent_x).sum::<f64>()
        + gaps.iter().sum::<f64>()
        + 2.0 * CANVAS_MARGIN_PX;
    let needed_height =
        poses.iter().map(|p| p.extent_y).fold(0.0, f64::max) + 2.0 * CANVAS_MARGIN_PX;
    if needed > spec.canvas_width as f64 || needed_height > spec.canvas_height as f64 {
        return Err(SynthError::LayoutOverflow {
            needed,
            needed_height,
            width: spec.canvas_width,
            height: spec.canvas_height,
        });
    }

    let mut image = ImageBuffer::new(spec.canvas_width, spec.canvas_height, spec.background)
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let mut books = Vec::with_capacity(spec.books);
    let mut fragments = Vec::new();
    let slack = spec.canvas_width as f64 - needed;
    let mut left = CANVAS_MARGIN_PX + rng.random_range(0.0..=slack);
    for (i, pose) in poses.iter().enumerate() {
        let lift = rng.random_range(0.0..=(spec.canvas_height as f64 - needed_height).min(12.0));
        let cx = left + pose.extent_x / 2.0;
        let cy = spec.canvas_height as f64 - CANVAS_MARGIN_PX - lift - pose.extent_y / 2.0;
        left += pose.extent_x + gaps.get(i).copied().unwrap_or(0.0);

        let colors = match spec.colors.get(i) {
            Some(c) => *c,
            None => pick_colors(
                &mut rng,
                spec.min_color_distance,
                books.last().map(|b: &Book| b.colors.spine),
            )?,
        };
        let spine = OrientedBox::new(cx, cy, pose.width, pose.length, pose.angle)?;
        paint(&mut image, &spine, colors.spine);

        let [lo, hi] = spec.fragments_per_book;
        let n = rng.random_range(lo..=hi);
        let band_w = BAND_WIDTH_FRACTION * pose.width;
        let slot = 0.9 * pose.length / n as f64;
        let axis = spine.height_axis();
        for k in 0..n {
            let band_h =
                rng.random_range((band_w + BAND_ASPECT_MARGIN_PX).max(0.5 * slot)..=0.85 * slot);
            let play = (slot - band_h) / 2.0;
            let along =
                -0.45 * pose.length + slot * (k as f64 + 0.5) + rng.random_range(-play..=play);
            let band = OrientedBox::new(
                cx + axis.x * along,
                cy + axis.y * along,
                band_w,
                band_h,
                pose.angle,
            )?;
            paint(
                &mut image,
                &band.scaled(INK_FRACTION.0, INK_FRACTION.1)?,
                colors.text,
            );
            let raw = OrientedBox::new(
                band.cx() + gauss(&mut rng, spec.center_jitter_px),
                band.cy() + gauss(&mut rng, spec.center_jitter_px),
                band_w,
                band_h,
                pose.angle + gauss(&mut rng, spec.angle_jitter_deg),
            )?;
            fragments.push(Fragment { band, raw, book: i });
        }
        books.push(Book { spine, colors });
    }
    // Detectors report boxes in no particular order.
    fragments.shuffle(&mut rng);
    Ok(SyntheticShelf {
        image,
        books,
        fragments,
    })
}

/// A directory of shelves sharing one template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub seed: u64,
    pub images: usize,
    /// Book count per image, drawn uniformly from this inclusive range.
    pub books: [usize; 2],
    pub shelf: ShelfSpec,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            images: 20,
            books: [3, 6],
            shelf: ShelfSpec::default(),
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.books[0] > self.books[1] {
            return Err(SynthError::InvalidSpec(format!(
                "books {:?} must satisfy lo <= hi",
                self.books
            )));
        }
        self.shelf.validate()
    }

    /// Per-image shelf specs, derived from the corpus seed.
    pub fn shelves(&self) -> Vec<(String, ShelfSpec)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.images)
            .map(|i| {
                let spec = ShelfSpec {
                    seed: rng.random(),
                    books: rng.random_range(self.books[0]..=self.books[1]),
                    ..self.shelf.clone()
                };
                (format!("shelf_{i:03}"), spec)
            })
            .collect()
    }
}

/// Files written for one shelf.
#[derive(Debug, Clone, PartialEq)]
pub struct ShelfFiles {
    pub image: PathBuf,
    pub detections: PathBuf,
    pub truth: PathBuf,
}

/// Writes `<stem>.png`, `<stem>.boxes.txt` (raw boxes labelled with their
/// book index) and `<stem>.gt.txt`.
pub fn write_shelf(shelf: &SyntheticShelf, dir: &Path, stem: &str) -> Result<ShelfFiles> {
    let files = ShelfFiles {
        image: dir.join(format!("{stem}.png")),
        detections: dir.join(format!("{stem}.boxes.txt")),
        truth: dir.join(format!("{stem}.gt.txt")),
    };
    io_formats::save_png(&shelf.image, &files.image)?;
    let labels: Vec<Option<String>> = shelf
        .fragments
        .iter()
        .map(|f| Some(format!("book{}", f.book)))
        .collect();
    write_text(
        &files.detections,
        &format_labeled_boxes(&shelf.raw_boxes(), &labels),
    )?;
    let spines: Vec<OrientedBox> = shelf.books.iter().map(|b| b.spine).collect();
    let labels: Vec<Option<String>> = (0..spines.len())
        .map(|i| Some(format!("book{i}")))
        .collect();
    write_text(&files.truth, &format_labeled_boxes(&spines, &labels))?;
    Ok(files)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| {
        SynthError::Format(FormatError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}
