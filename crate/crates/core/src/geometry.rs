//! Rotated-rectangle geometry.
//!
//! Boxes live in image coordinates: `x` grows to the right, `y` grows
//! downward, and pixel `(i, j)` covers `[i, i + 1) x [j, j + 1)`. A box's
//! `angle` is measured in degrees, counter-clockwise as seen on screen, from
//! the positive x-axis to the box's *height* axis, and is kept in `(0, 180]`.
//! A perfectly upright book spine therefore has `angle == 90`, with `height`
//! running along the spine and `width` across it.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use thiserror::Error;

/// Angles closer than this (degrees) to 0 or 180 are treated as horizontal.
pub const DEGENERATE_ANGLE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("book range is undefined for a horizontal box (angle {0} deg)")]
    DegenerateAngle(f64),
    #[error("cannot enclose an empty group of boxes")]
    EmptyGroup,
}

type Result<T> = std::result::Result<T, GeometryError>;

/// A point in continuous image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product.
    #[inline]
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

/// Maps any angle in degrees into `(0, 180]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(180.0);
    if a <= 0.0 {
        180.0
    } else {
        a
    }
}

/// Smallest difference between two axis directions, in `[0, 90]` degrees.
pub fn angle_delta(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

/// Unit vector of an axis at `angle` degrees (screen counter-clockwise, y down).
#[inline]
pub fn axis_direction(angle: f64) -> Point {
    let (s, c) = angle.to_radians().sin_cos();
    Point::new(c, -s)
}

fn direction_angle(d: Point) -> f64 {
    normalize_angle((-d.y).atan2(d.x).to_degrees())
}

/// Rotated rectangle: center, width (across), height (along the angle), angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    cx: f64,
    cy: f64,
    width: f64,
    height: f64,
    angle: f64,
}

impl OrientedBox {
    /// Builds a box, normalizing `angle` into `(0, 180]`.
    pub fn new(cx: f64, cy: f64, width: f64, height: f64, angle: f64) -> Result<Self> {
        if ![cx, cy, width, height, angle].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidBox(format!(
                "non-finite parameter in ({cx}, {cy}, {width}, {height}, {angle})"
            )));
        }
        if width <= 0.0 || height <= 0.0 {
            return Err(GeometryError::InvalidBox(format!(
                "width and height must be positive, got {width} x {height}"
            )));
        }
        Ok(Self {
            cx,
            cy,
            width,
            height,
            angle: normalize_angle(angle),
        })
    }

    /// Axis-aligned box from its top-left corner and size.
    pub fn from_rect(x: f64, y: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(x + width / 2.0, y + height / 2.0, width, height, 90.0)
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Unit vector along the height axis (points "up" the spine for angles in (0, 180)).
    pub fn height_axis(&self) -> Point {
        axis_direction(self.angle)
    }

    /// Unit vector along the width axis; `(1, 0)` for an upright box.
    pub fn width_axis(&self) -> Point {
        let u = self.height_axis();
        Point::new(-u.y, u.x)
    }

    /// The four vertices in counter-clockwise order of the (x, y) frame, i.e.
    /// with a positive shoelace area. The first edge runs along the height
    /// axis and the second along the width axis.
    pub fn corners(&self) -> [Point; 4] {
        let c = self.center();
        let u = self.height_axis() * (self.height / 2.0);
        let v = self.width_axis() * (self.width / 2.0);
        [c - v - u, c - v + u, c + v + u, c + v - u]
    }

    pub fn polygon(&self) -> Polygon {
        Polygon::new(self.corners().to_vec())
    }

    /// Inverse of [`corners`](Self::corners) for vertices in the same order.
    pub fn from_corners(corners: &[Point; 4]) -> Result<Self> {
        let center = corners.iter().fold(Point::default(), |acc, p| acc + *p) * 0.25;
        let along = corners[1] - corners[0];
        let across = corners[2] - corners[1];
        let height = along.norm();
        let width = across.norm();
        if height == 0.0 {
            return Err(GeometryError::InvalidBox("coincident corners".into()));
        }
        Self::new(
            center.x,
            center.y,
            width,
            height,
            direction_angle(along * (1.0 / height)),
        )
    }

    /// Coordinates of `p` in the box frame: (along width axis, along height axis).
    pub fn to_local(&self, p: Point) -> (f64, f64) {
        let d = p - self.center();
        (d.dot(self.width_axis()), d.dot(self.height_axis()))
    }

    pub fn contains_point(&self, p: Point) -> bool {
        let (s, t) = self.to_local(p);
        s.abs() <= self.width / 2.0 && t.abs() <= self.height / 2.0
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    /// Same center and size, new angle.
    pub fn with_angle(&self, angle: f64) -> Self {
        Self {
            angle: normalize_angle(angle),
            ..*self
        }
    }

    /// Same pose with both sides scaled.
    pub fn scaled(&self, sx: f64, sy: f64) -> Result<Self> {
        Self::new(
            self.cx,
            self.cy,
            self.width * sx,
            self.height * sy,
            self.angle,
        )
    }

    /// Rotates the whole box about `pivot` by `degrees` (screen counter-clockwise).
    pub fn rotated_about(&self, pivot: Point, degrees: f64) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        let d = self.center() - pivot;
        let rotated = Point::new(d.x * c + d.y * s, -d.x * s + d.y * c);
        Self {
            cx: pivot.x + rotated.x,
            cy: pivot.y + rotated.y,
            angle: normalize_angle(self.angle + degrees),
            ..*self
        }
    }

    /// Axis-aligned bounds `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.corners().iter().fold(
            (
                f64::INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
            ),
            |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
        )
    }
}

impl fmt::Display for OrientedBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({:.3}, {:.3}) {:.3}x{:.3} @ {:.3} deg",
            self.cx, self.cy, self.width, self.height, self.angle
        )
    }
}

/// Ordered vertex list. Operations here assume a simple polygon; the
/// intersection routines additionally assume convexity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Self {
        Self { vertices }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace area; positive for counter-clockwise vertex order.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let twice: f64 = (0..n)
            .map(|i| self.vertices[i].cross(self.vertices[(i + 1) % n]))
            .sum();
        twice / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn centroid(&self) -> Point {
        let n = self.vertices.len().max(1) as f64;
        self.vertices
            .iter()
            .fold(Point::default(), |acc, p| acc + *p)
            * (1.0 / n)
    }

    fn counter_clockwise(&self) -> Polygon {
        if self.signed_area() < 0.0 {
            let mut v = self.vertices.clone();
            v.reverse();
            Polygon::new(v)
        } else {
            self.clone()
        }
    }
}

/// Sutherland-Hodgman: clips convex `subject` against convex `clip`.
fn clip_convex(subject: &Polygon, clip: &Polygon) -> Polygon {
    let clip = clip.counter_clockwise();
    let mut output = subject.vertices.clone();
    let cv = clip.vertices();
    for i in 0..cv.len() {
        if output.is_empty() {
            break;
        }
        let a = cv[i];
        let b = cv[(i + 1) % cv.len()];
        let edge = b - a;
        let side = |p: Point| edge.cross(p - a);
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(prev + (cur - prev) * (sp / (sp - sc)));
                }
                output.push(cur);
            } else if sp >= 0.0 {
                output.push(prev + (cur - prev) * (sp / (sp - sc)));
            }
        }
    }
    Polygon::new(output)
}

/// Area of the intersection of two convex polygons.
pub fn intersection_area(a: &Polygon, b: &Polygon) -> f64 {
    if a.len() < 3 || b.len() < 3 || a.area() <= 0.0 || b.area() <= 0.0 {
        return 0.0;
    }
    let area = clip_convex(a, b).area();
    area.min(a.area()).min(b.area()).max(0.0)
}

/// Intersection over union of two oriented boxes.
pub fn iou(b: &OrientedBox, g: &OrientedBox) -> f64 {
    let inter = intersection_area(&b.polygon(), &g.polygon());
    let union = b.area() + g.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Intermediate terms of the book-range construction, kept for inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeTerms {
    /// Horizontal extent of the top box.
    pub box_w: f64,
    /// Vertical offset of the range's upper end above the top box's center.
    pub rise: f64,
    /// Vertical span from the upper end to the image bottom.
    pub line_h: f64,
    /// Signed horizontal span covered while descending `line_h`.
    pub line_w: f64,
}

/// Inferred extent of a whole book, derived from its topmost box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BookRange {
    rect: OrientedBox,
    terms: RangeTerms,
}

impl BookRange {
    pub fn rect(&self) -> &OrientedBox {
        &self.rect
    }

    pub fn terms(&self) -> RangeTerms {
        self.terms
    }

    /// Multiplies the range width by `rate`.
    pub fn widened(&self, rate: f64) -> Result<Self> {
        Ok(Self {
            rect: self.rect.scaled(rate, 1.0)?,
            terms: self.terms,
        })
    }
}

/// Builds the book range hanging from `top` down to the bottom of an image
/// `image_height` pixels tall.
///
/// The range shares `top`'s angle and width and runs along its height axis
/// from a point `box_w / 2` above the top box's center to the image bottom.
/// With `a` the angle:
///
/// ```text
/// box_w   = height * |cos a| + width * sin a
/// line_h  = box_w / 2 + (image_height - cy)
/// line_w  = line_h / tan a
/// range.h = line_h / sin a
/// range.x = cx + (box_w / 2) / tan a - line_w / 2
/// range.y = cy - box_w / 2 + line_h / 2
/// ```
///
/// The range is continuous in `a` on `(0, 180)` and mirror-symmetric about
/// 90 degrees; at 45 degrees every term coincides with the tangent form
/// `rise = (box_w / 2) * tan a`, `range.x = cx + box_w / 2 - line_w / 2`.
pub fn book_range(top: &OrientedBox, image_height: f64) -> Result<BookRange> {
    let a = top.angle();
    if a < DEGENERATE_ANGLE_EPS || 180.0 - a < DEGENERATE_ANGLE_EPS {
        return Err(GeometryError::DegenerateAngle(a));
    }
    let (sin, cos) = a.to_radians().sin_cos();
    let box_w = top.height() * cos.abs() + top.width() * sin;
    let rise = box_w / 2.0;
    let line_h = rise + (image_height - top.cy());
    if line_h <= 0.0 {
        return Err(GeometryError::InvalidBox(format!(
            "top box {top} lies below the image bottom ({image_height})"
        )));
    }
    let cot = cos / sin;
    let line_w = line_h * cot;
    let range_height = line_h / sin;
    let range_x = top.cx() + rise * cot - line_w / 2.0;
    let range_y = top.cy() - rise + line_h / 2.0;
    Ok(BookRange {
        rect: OrientedBox::new(range_x, range_y, top.width(), range_height, a)?,
        terms: RangeTerms {
            box_w,
            rise,
            line_h,
            line_w,
        },
    })
}

/// Fraction of `inner`'s area that lies inside `outer`.
pub fn contained_fraction(inner: &OrientedBox, outer: &BookRange) -> Result<f64> {
    let area = inner.area();
    if area <= 0.0 {
        return Err(GeometryError::InvalidBox("zero-area box".into()));
    }
    let inter = intersection_area(&inner.polygon(), &outer.rect().polygon());
    Ok((inter / area).clamp(0.0, 1.0))
}

/// Convex hull (Andrew's monotone chain), counter-clockwise, without
/// collinear points.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if (b - a).cross(p - a) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// How [`min_area_rect`] decides which side of the fitted rectangle is the height.
#[derive(Debug, Clone, Copy)]
pub enum HeightAxis {
    /// The side whose direction is closest to this unit vector.
    Like(Point),
    /// The longer side; equal sides pick the one nearest to vertical.
    LongerSide,
}

/// Minimum-area rectangle enclosing `points`, searched over the hull's edge
/// directions (one side of the optimum is always collinear with a hull edge).
pub fn min_area_rect(points: &[Point], height_axis: HeightAxis) -> Result<OrientedBox> {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return Err(GeometryError::InvalidBox(
            "points are collinear; no enclosing rectangle with positive area".into(),
        ));
    }
    let mut best: Option<(f64, Point, Point, f64, f64)> = None;
    for i in 0..hull.len() {
        let edge = hull[(i + 1) % hull.len()] - hull[i];
        let len = edge.norm();
        if len == 0.0 {
            continue;
        }
        let e = edge * (1.0 / len);
        let n = Point::new(-e.y, e.x);
        let (mut e0, mut e1, mut n0, mut n1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for p in &hull {
            let pe = p.dot(e);
            let pn = p.dot(n);
            e0 = e0.min(pe);
            e1 = e1.max(pe);
            n0 = n0.min(pn);
            n1 = n1.max(pn);
        }
        let area = (e1 - e0) * (n1 - n0);
        if best.is_none_or(|b| area < b.0 * (1.0 - 1e-12)) {
            let center = e * ((e0 + e1) / 2.0) + n * ((n0 + n1) / 2.0);
            best = Some((area, center, e, e1 - e0, n1 - n0));
        }
    }
    let (_, center, e, len_e, len_n) =
        best.ok_or_else(|| GeometryError::InvalidBox("degenerate hull".into()))?;
    let n = Point::new(-e.y, e.x);
    let along_e = match height_axis {
        HeightAxis::Like(reference) => e.dot(reference).abs() >= n.dot(reference).abs(),
        HeightAxis::LongerSide => {
            let tol = 1e-9 * len_e.max(len_n);
            if (len_e - len_n).abs() <= tol {
                e.y.abs() >= n.y.abs()
            } else {
                len_e > len_n
            }
        }
    };
    let (dir, height, width) = if along_e {
        (e, len_e, len_n)
    } else {
        (n, len_n, len_e)
    };
    OrientedBox::new(center.x, center.y, width, height, direction_angle(dir))
}

/// Smallest oriented rectangle containing every corner of every box. The
/// result's height axis follows the first box's height axis.
pub fn enclosing_box(boxes: &[OrientedBox]) -> Result<OrientedBox> {
    let first = boxes.first().ok_or(GeometryError::EmptyGroup)?;
    if boxes.len() == 1 {
        return Ok(*first);
    }
    let points: Vec<Point> = boxes.iter().flat_map(|b| b.corners()).collect();
    min_area_rect(&points, HeightAxis::Like(first.height_axis()))
}
