//! RGB image buffer, 5x5 Gaussian smoothing and the two-color spine/text model.
//!
//! Each box is summarized by exactly two colors: the book's spine color and
//! the color of the text printed on it. They come from a 2-means clustering
//! of the pixels inside the box; the cluster that owns most of the box's four
//! corners is the spine.

use thiserror::Error;

use crate::geometry::{OrientedBox, Point};

/// One 8-bit RGB pixel.
pub type Pixel = [u8; 3];

pub const GAUSSIAN_SIGMA: f64 = 1.1;
pub const GAUSSIAN_RADIUS: usize = 2;

const KMEANS_MAX_ITERATIONS: usize = 20;
const KMEANS_TOLERANCE: f64 = 0.5;
/// Above this many distinct colors the exact farthest-pair search is replaced
/// by repeated farthest-point sweeps.
const EXACT_SEEDING_LIMIT: usize = 4096;
/// Corner samples are pulled this far (px, per axis) inside the box.
const CORNER_INSET: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ColorError {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("no pixel center falls inside box {0}")]
    EmptyPatch(String),
}

type Result<T> = std::result::Result<T, ColorError>;

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    pixels: Vec<Pixel>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, fill: Pixel) -> Result<Self> {
        Self::from_pixels(width, height, vec![fill; width as usize * height as usize])
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<Pixel>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ColorError::InvalidImage(format!(
                "dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(ColorError::InvalidImage(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width as usize * height as usize,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[Pixel] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<Pixel> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Pixel {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, px: Pixel) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = px;
    }

    /// Rotates the image a quarter turn clockwise (as displayed). A point
    /// `(x, y)` maps to `(height - y, x)`.
    pub fn rotated_cw(&self) -> ImageBuffer {
        let (w, h) = (self.width, self.height);
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for j in 0..w {
            for i in 0..h {
                pixels.push(self.get(j, h - 1 - i));
            }
        }
        ImageBuffer {
            width: h,
            height: w,
            pixels,
        }
    }
}

/// Real-valued RGB color; cluster means may be fractional.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl Rgb {
    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        Self { r, g, b }
    }

    pub fn distance(&self, other: &Rgb) -> f64 {
        self.distance_sq(other).sqrt()
    }

    fn distance_sq(&self, other: &Rgb) -> f64 {
        let (dr, dg, db) = (self.r - other.r, self.g - other.g, self.b - other.b);
        dr * dr + dg * dg + db * db
    }

    pub fn to_pixel(&self) -> Pixel {
        let q = |v: f64| v.round().clamp(0.0, 255.0) as u8;
        [q(self.r), q(self.g), q(self.b)]
    }
}

impl From<Pixel> for Rgb {
    fn from(p: Pixel) -> Self {
        Rgb::new(p[0] as f64, p[1] as f64, p[2] as f64)
    }
}

/// The binary color description of a box.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoxColors {
    pub spine: Rgb,
    pub text: Rgb,
}

/// Normalized 1-D Gaussian taps; the 2-D kernel is their outer product.
pub fn gaussian_kernel() -> [f64; 2 * GAUSSIAN_RADIUS + 1] {
    let mut k = [0.0; 2 * GAUSSIAN_RADIUS + 1];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - GAUSSIAN_RADIUS as f64;
        *v = (-d * d / (2.0 * GAUSSIAN_SIGMA * GAUSSIAN_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable 5x5 Gaussian over one real-valued plane, replicating borders.
pub fn blur_plane(width: usize, height: usize, plane: &[f64]) -> Vec<f64> {
    assert_eq!(plane.len(), width * height, "plane size mismatch");
    let k = gaussian_kernel();
    let r = GAUSSIAN_RADIUS as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            tmp[y * width + x] = (-r..=r)
                .map(|d| k[(d + r) as usize] * row[clamp(x as isize + d, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = (-r..=r)
                .map(|d| k[(d + r) as usize] * tmp[clamp(y as isize + d, height) * width + x])
                .sum();
        }
    }
    out
}

/// 5x5 Gaussian filter (sigma 1.1) applied per channel, rounded back to 8 bits.
pub fn gaussian_filter(img: &ImageBuffer) -> ImageBuffer {
    let (w, h) = (img.width as usize, img.height as usize);
    let mut out = img.pixels.clone();
    for c in 0..3 {
        let plane: Vec<f64> = img.pixels.iter().map(|p| p[c] as f64).collect();
        for (dst, v) in out.iter_mut().zip(blur_plane(w, h, &plane)) {
            dst[c] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    ImageBuffer {
        width: img.width,
        height: img.height,
        pixels: out,
    }
}

/// Calls `f(x, y)` for every pixel whose center lies inside `bx`, row by row.
pub(crate) fn for_each_pixel_in(
    width: u32,
    height: u32,
    bx: &OrientedBox,
    mut f: impl FnMut(u32, u32),
) {
    let (_, y0, _, y1) = bx.bounds();
    let u = bx.height_axis();
    let v = bx.width_axis();
    let (hw, hh) = (bx.width() / 2.0, bx.height() / 2.0);
    let j0 = ((y0 - 0.5).ceil().max(0.0)) as i64;
    let j1 = ((y1 - 0.5).floor()).min(height as f64 - 1.0) as i64;
    for j in j0..=j1 {
        let dy = j as f64 + 0.5 - bx.cy();
        // |dx * a.x + dy * a.y| <= half  ->  interval of dx.
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (axis, half) in [(v, hw), (u, hh)] {
            let off = dy * axis.y;
            if axis.x.abs() < 1e-12 {
                if off.abs() > half {
                    lo = f64::INFINITY;
                }
                continue;
            }
            let a = (-half - off) / axis.x;
            let b = (half - off) / axis.x;
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
        if lo > hi {
            continue;
        }
        let i0 = ((bx.cx() + lo - 0.5).ceil().max(0.0)) as i64;
        let i1 = ((bx.cx() + hi - 0.5).floor()).min(width as f64 - 1.0) as i64;
        for i in i0..=i1 {
            f(i as u32, j as u32);
        }
    }
}

/// Pixels whose centers fall inside `bx`, clipped to the image.
pub fn sample_patch(img: &ImageBuffer, bx: &OrientedBox) -> Result<Vec<Pixel>> {
    let mut patch = Vec::new();
    for_each_pixel_in(img.width, img.height, bx, |x, y| patch.push(img.get(x, y)));
    if patch.is_empty() {
        return Err(ColorError::EmptyPatch(bx.to_string()));
    }
    Ok(patch)
}

/// Per-channel arithmetic mean of the patch under `bx`.
pub fn mean_color(img: &ImageBuffer, bx: &OrientedBox) -> Result<Rgb> {
    let mut sum = [0u64; 3];
    let mut n = 0u64;
    for_each_pixel_in(img.width, img.height, bx, |x, y| {
        let p = img.get(x, y);
        for c in 0..3 {
            sum[c] += p[c] as u64;
        }
        n += 1;
    });
    if n == 0 {
        return Err(ColorError::EmptyPatch(bx.to_string()));
    }
    let n = n as f64;
    Ok(Rgb::new(
        sum[0] as f64 / n,
        sum[1] as f64 / n,
        sum[2] as f64 / n,
    ))
}

/// Result of 2-means clustering on a set of pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoMeans {
    pub means: [Rgb; 2],
    pub counts: [usize; 2],
}

impl TwoMeans {
    pub fn nearest(&self, c: &Rgb) -> usize {
        if c.distance_sq(&self.means[1]) < c.distance_sq(&self.means[0]) {
            1
        } else {
            0
        }
    }
}

fn histogram(pixels: &[Pixel]) -> Vec<(Pixel, u64)> {
    let mut sorted = pixels.to_vec();
    sorted.sort_unstable();
    let mut hist: Vec<(Pixel, u64)> = Vec::new();
    for p in sorted {
        match hist.last_mut() {
            Some((q, n)) if *q == p => *n += 1,
            _ => hist.push((p, 1)),
        }
    }
    hist
}

fn dist_sq(a: Pixel, b: Pixel) -> i64 {
    (0..3)
        .map(|c| {
            let d = a[c] as i64 - b[c] as i64;
            d * d
        })
        .sum()
}

/// The two distinct colors at maximal distance. Exact up to
/// `EXACT_SEEDING_LIMIT` distinct colors, iterated farthest-point sweeps above.
fn farthest_pair(colors: &[Pixel]) -> (Pixel, Pixel) {
    let farthest_from = |a: Pixel| {
        colors.iter().copied().fold((a, 0i64), |best, c| {
            let d = dist_sq(a, c);
            if d > best.1 {
                (c, d)
            } else {
                best
            }
        })
    };
    if colors.len() <= EXACT_SEEDING_LIMIT {
        let mut best = (colors[0], colors[0], 0i64);
        for (i, &a) in colors.iter().enumerate() {
            for &b in &colors[i + 1..] {
                let d = dist_sq(a, b);
                if d > best.2 {
                    best = (a, b, d);
                }
            }
        }
        return (best.0, best.1);
    }
    let mut a = colors[0];
    let mut best = (a, a, 0i64);
    for _ in 0..8 {
        let (b, d) = farthest_from(a);
        if d <= best.2 {
            break;
        }
        best = (a, b, d);
        a = b;
    }
    (best.0, best.1)
}

/// 2-means in RGB seeded with the farthest pair of patch colors. Returns
/// `None` when the patch holds a single distinct color.
pub fn two_means(pixels: &[Pixel]) -> Option<TwoMeans> {
    let hist = histogram(pixels);
    if hist.len() < 2 {
        return None;
    }
    let colors: Vec<Pixel> = hist.iter().map(|(c, _)| *c).collect();
    let (s0, s1) = farthest_pair(&colors);
    let mut means = [Rgb::from(s0), Rgb::from(s1)];
    let mut counts = [0usize; 2];
    for _ in 0..KMEANS_MAX_ITERATIONS {
        let mut sums = [[0.0f64; 3]; 2];
        let mut n = [0u64; 2];
        let current = TwoMeans { means, counts };
        for (c, k) in &hist {
            let idx = current.nearest(&Rgb::from(*c));
            for ch in 0..3 {
                sums[idx][ch] += c[ch] as f64 * *k as f64;
            }
            n[idx] += k;
        }
        let mut moved = 0.0f64;
        for idx in 0..2 {
            counts[idx] = n[idx] as usize;
            if n[idx] == 0 {
                continue;
            }
            let m = n[idx] as f64;
            let next = Rgb::new(sums[idx][0] / m, sums[idx][1] / m, sums[idx][2] / m);
            moved = moved
                .max((next.r - means[idx].r).abs())
                .max((next.g - means[idx].g).abs())
                .max((next.b - means[idx].b).abs());
            means[idx] = next;
        }
        if moved < KMEANS_TOLERANCE {
            break;
        }
    }
    // Final memberships under the settled means.
    let settled = TwoMeans { means, counts };
    let mut final_counts = [0usize; 2];
    for (c, k) in &hist {
        final_counts[settled.nearest(&Rgb::from(*c))] += *k as usize;
    }
    Some(TwoMeans {
        means,
        counts: final_counts,
    })
}

fn patch_mean(pixels: &[Pixel]) -> Rgb {
    let mut sum = [0u64; 3];
    for p in pixels {
        for c in 0..3 {
            sum[c] += p[c] as u64;
        }
    }
    let n = pixels.len().max(1) as f64;
    Rgb::new(sum[0] as f64 / n, sum[1] as f64 / n, sum[2] as f64 / n)
}

/// The four box corners pulled `CORNER_INSET` px toward the center on each axis.
pub fn corner_samples(bx: &OrientedBox) -> [Point; 4] {
    let c = bx.center();
    let u = bx.height_axis() * (bx.height() / 2.0 - CORNER_INSET).max(0.0);
    let v = bx.width_axis() * (bx.width() / 2.0 - CORNER_INSET).max(0.0);
    [c - v - u, c - v + u, c + v + u, c + v - u]
}

/// Spine and text colors of the region under `bx`.
pub fn extract_box_colors(img: &ImageBuffer, bx: &OrientedBox) -> Result<BoxColors> {
    let patch = sample_patch(img, bx)?;
    let Some(clusters) = two_means(&patch) else {
        let mean = patch_mean(&patch);
        return Ok(BoxColors {
            spine: mean,
            text: mean,
        });
    };
    let mut votes = [0usize; 2];
    for p in corner_samples(bx) {
        let x = (p.x.floor().max(0.0) as u32).min(img.width - 1);
        let y = (p.y.floor().max(0.0) as u32).min(img.height - 1);
        votes[clusters.nearest(&Rgb::from(img.get(x, y)))] += 1;
    }
    // 2-2 ties go to the larger cluster: the spine dominates a box's area.
    let spine = if votes[0] != votes[1] {
        if votes[0] > votes[1] {
            0
        } else {
            1
        }
    } else if clusters.counts[1] > clusters.counts[0] {
        1
    } else {
        0
    };
    // The majority cluster's mean is the provisional spine color; the cluster
    // mean nearest to it is the spine, which is that same cluster.
    Ok(BoxColors {
        spine: clusters.means[spine],
        text: clusters.means[1 - spine],
    })
}
