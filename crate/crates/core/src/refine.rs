//! Box refinement: color-guided adjusting, book-range grouping, merging,
//! non-maximum suppression and small-box removal.

use std::cmp::Ordering;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    angle_delta, book_range, contained_fraction, enclosing_box, iou, GeometryError, OrientedBox,
    Point,
};
use crate::imagecolor::{extract_box_colors, gaussian_filter, mean_color, BoxColors, ImageBuffer};

/// Hard cap on grouping passes in the fixed-point loop.
pub const MAX_GROUPING_PASSES: usize = 10;
/// Inputs whose median box lies within this many degrees of horizontal are
/// processed a quarter turn rotated.
pub const HORIZONTAL_TOLERANCE_DEG: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RefineError {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Tunables for the refinement pipeline. Field names double as the JSON
/// config keys and, kebab-cased, as CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Location search range, +/- pixels.
    pub adjust_range_px: u32,
    /// Angle search range, +/- degrees.
    pub adjust_range_deg: u32,
    /// Max RGB distance between text colors of grouped boxes.
    pub threshold_text: f64,
    /// Max RGB distance between spine colors of grouped boxes.
    pub threshold_spine: f64,
    /// Multiplier on the book range's width.
    pub wide_range_rate: f64,
    /// Scoring-box shrink across the spine.
    pub shrink_x: f64,
    /// Scoring-box shrink along the spine.
    pub shrink_y: f64,
    /// NMS suppression threshold.
    pub nms_iou: f64,
    /// Boxes with both sides at or below this length are dropped.
    pub min_edge_px: f64,
    pub enable_adjust_location: bool,
    pub enable_adjust_angle: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            adjust_range_px: 5,
            adjust_range_deg: 10,
            threshold_text: 100.0,
            threshold_spine: 60.0,
            wide_range_rate: 2.0,
            shrink_x: 0.85,
            shrink_y: 0.6,
            nms_iou: 0.3,
            min_edge_px: 100.0,
            enable_adjust_location: true,
            enable_adjust_angle: true,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        fn bad(field: &'static str, reason: &str) -> Result<(), RefineError> {
            Err(RefineError::Config {
                field,
                reason: reason.to_string(),
            })
        }
        let positive = [
            ("threshold_text", self.threshold_text),
            ("threshold_spine", self.threshold_spine),
            ("wide_range_rate", self.wide_range_rate),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(field, "must be a positive finite number");
            }
        }
        for (field, v) in [("shrink_x", self.shrink_x), ("shrink_y", self.shrink_y)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(field, "must lie in (0, 1]");
            }
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return bad("nms_iou", "must lie in (0, 1)");
        }
        if !(self.min_edge_px.is_finite() && self.min_edge_px >= 0.0) {
            return bad("min_edge_px", "must be a non-negative finite number");
        }
        if self.adjust_range_deg > 90 {
            return bad("adjust_range_deg", "must not exceed 90");
        }
        Ok(())
    }
}

/// A box together with its spine/text colors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColoredBox {
    pub bbox: OrientedBox,
    pub colors: BoxColors,
}

/// Top-to-bottom, then left-to-right, by center.
pub fn spatial_order(a: &OrientedBox, b: &OrientedBox) -> Ordering {
    a.cy().total_cmp(&b.cy()).then(a.cx().total_cmp(&b.cx()))
}

/// An image's boxes with their colors, kept in spatial order.
#[derive(Debug, Clone)]
pub struct DetectionSet<'a> {
    image: &'a ImageBuffer,
    boxes: Vec<ColoredBox>,
}

impl<'a> DetectionSet<'a> {
    /// Sorts `boxes` and computes their colors on `image`. Boxes that cover
    /// no pixel center have no colors and are dropped.
    pub fn new(image: &'a ImageBuffer, boxes: &[OrientedBox]) -> Self {
        let colored = boxes
            .iter()
            .filter_map(|b| match extract_box_colors(image, b) {
                Ok(colors) => Some(ColoredBox { bbox: *b, colors }),
                Err(e) => {
                    warn!("dropping box outside the image: {e}");
                    None
                }
            })
            .collect();
        Self::from_colored(image, colored)
    }

    pub fn from_colored(image: &'a ImageBuffer, mut boxes: Vec<ColoredBox>) -> Self {
        boxes.sort_by(|a, b| spatial_order(&a.bbox, &b.bbox));
        Self { image, boxes }
    }

    pub fn image(&self) -> &'a ImageBuffer {
        self.image
    }

    pub fn boxes(&self) -> &[ColoredBox] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn into_boxes(self) -> Vec<ColoredBox> {
        self.boxes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjustMode {
    Location,
    Angle,
}

/// A candidate pose and the shrunken box it is scored with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedBox {
    pub pose: OrientedBox,
    pub scoring: OrientedBox,
}

/// Moves `bx` across its width axis (location, px) or rotates it about its
/// center (angle, degrees).
pub fn shift(bx: &OrientedBox, mode: AdjustMode, offset: f64, cfg: &RefineConfig) -> ShiftedBox {
    let pose = match mode {
        AdjustMode::Location => {
            let d = bx.width_axis() * offset;
            bx.translated(d.x, d.y)
        }
        AdjustMode::Angle => bx.with_angle(bx.angle() + offset),
    };
    let scoring = pose
        .scaled(cfg.shrink_x, cfg.shrink_y)
        .expect("validated shrink factors keep the box non-degenerate");
    ShiftedBox { pose, scoring }
}

/// `|mean - spine| - |mean - text|` over the scoring box; `None` if it covers
/// no pixel.
pub fn adjust_score(img: &ImageBuffer, scoring: &OrientedBox, colors: &BoxColors) -> Option<f64> {
    let mean = mean_color(img, scoring).ok()?;
    Some(mean.distance(&colors.spine) - mean.distance(&colors.text))
}

/// Outcome of the search for one box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustOutcome {
    pub pose: OrientedBox,
    pub offset: i32,
    pub score: f64,
    pub score_at_zero: Option<f64>,
}

/// Offsets in search order: 0, -1, 1, -2, 2, ...  Only strict improvements
/// replace the incumbent, so ties go to the smaller |offset|, negative first.
fn search_offsets(range: u32) -> impl Iterator<Item = i32> {
    let r = range as i32;
    std::iter::once(0).chain((1..=r).flat_map(|k| [-k, k]))
}

pub fn adjust_box(
    img: &ImageBuffer,
    cb: &ColoredBox,
    mode: AdjustMode,
    cfg: &RefineConfig,
) -> AdjustOutcome {
    let range = match mode {
        AdjustMode::Location => cfg.adjust_range_px,
        AdjustMode::Angle => cfg.adjust_range_deg,
    };
    let mut best = AdjustOutcome {
        pose: cb.bbox,
        offset: 0,
        score: f64::NEG_INFINITY,
        score_at_zero: None,
    };
    for offset in search_offsets(range) {
        let candidate = shift(&cb.bbox, mode, offset as f64, cfg);
        let Some(score) = adjust_score(img, &candidate.scoring, &cb.colors) else {
            continue;
        };
        if offset == 0 {
            best.score_at_zero = Some(score);
        }
        if score > best.score {
            best.pose = candidate.pose;
            best.offset = offset;
            best.score = score;
        }
    }
    best
}

/// Runs the per-box search on every box and restores spatial order.
pub fn adjust<'a>(ds: &DetectionSet<'a>, mode: AdjustMode, cfg: &RefineConfig) -> DetectionSet<'a> {
    let boxes = ds
        .boxes
        .iter()
        .map(|cb| ColoredBox {
            bbox: adjust_box(ds.image, cb, mode, cfg).pose,
            colors: cb.colors,
        })
        .collect();
    DetectionSet::from_colored(ds.image, boxes)
}

/// Boxes judged to belong to one book.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGroup {
    /// Positions of the members in the grouped [`DetectionSet`]; founder first.
    pub indices: Vec<usize>,
    pub members: Vec<OrientedBox>,
    /// Colors of the founder.
    pub colors: BoxColors,
}

/// Whether `candidate` passes both gates against `founder`'s widened range.
fn joins(
    founder: &ColoredBox,
    candidate: &ColoredBox,
    range: &crate::geometry::BookRange,
    cfg: &RefineConfig,
) -> bool {
    let inside = contained_fraction(&candidate.bbox, range).is_ok_and(|f| f > 0.5);
    inside
        && founder.colors.text.distance(&candidate.colors.text) < cfg.threshold_text
        && founder.colors.spine.distance(&candidate.colors.spine) < cfg.threshold_spine
}

/// Partitions the set: the topmost unassigned box founds a group, its book
/// range (widened by `wide_range_rate`) is computed, and every unassigned box
/// that lies more than half inside the range with matching colors joins.
pub fn grouping(ds: &DetectionSet<'_>, wide_range_rate: f64, cfg: &RefineConfig) -> Vec<BoxGroup> {
    let image_height = ds.image.height() as f64;
    let mut remaining: Vec<usize> = (0..ds.len()).collect();
    let mut groups = Vec::new();
    while let Some(&first) = remaining.first() {
        let founder = &ds.boxes[first];
        let mut indices = vec![first];
        match book_range(&founder.bbox, image_height).and_then(|r| r.widened(wide_range_rate)) {
            Ok(range) => indices.extend(
                remaining[1..]
                    .iter()
                    .copied()
                    .filter(|&j| joins(founder, &ds.boxes[j], &range, cfg)),
            ),
            Err(e) => debug!("box {} founds a singleton group: {e}", founder.bbox),
        }
        remaining.retain(|i| !indices.contains(i));
        groups.push(BoxGroup {
            members: indices.iter().map(|&i| ds.boxes[i].bbox).collect(),
            indices,
            colors: founder.colors,
        });
    }
    groups
}

/// One box covering the whole group, carrying the founder's colors.
pub fn merge_group(group: &BoxGroup) -> Result<ColoredBox, GeometryError> {
    Ok(ColoredBox {
        bbox: enclosing_box(&group.members)?,
        colors: group.colors,
    })
}

/// Greedy NMS by descending area; a box is dropped if its IoU with an
/// already kept box exceeds `iou_threshold`. Output is in spatial order.
pub fn nms(boxes: &[OrientedBox], iou_threshold: f64) -> Vec<OrientedBox> {
    let mut order: Vec<OrientedBox> = boxes.to_vec();
    order.sort_by(|a, b| b.area().total_cmp(&a.area()).then(spatial_order(a, b)));
    let mut kept: Vec<OrientedBox> = Vec::with_capacity(order.len());
    for b in order {
        if kept.iter().all(|k| iou(k, &b) <= iou_threshold) {
            kept.push(b);
        }
    }
    kept.sort_by(spatial_order);
    kept
}

/// Drops boxes whose edges are all at most `min_edge` long.
pub fn filter_small(boxes: &[OrientedBox], min_edge: f64) -> Vec<OrientedBox> {
    boxes
        .iter()
        .filter(|b| b.width() > min_edge || b.height() > min_edge)
        .copied()
        .collect()
}

/// Everything the pipeline decided, for inspection and testing.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineTrace {
    pub boxes: Vec<OrientedBox>,
    /// Group count after each grouping pass.
    pub group_counts: Vec<usize>,
    /// Boxes entering the first grouping pass.
    pub grouped_inputs: usize,
    /// Whether the input was processed a quarter turn rotated.
    pub rotated: bool,
}

impl RefineTrace {
    pub fn grouping_passes(&self) -> usize {
        self.group_counts.len()
    }
}

fn is_mostly_horizontal(boxes: &[OrientedBox]) -> bool {
    let mut tilt: Vec<f64> = boxes
        .iter()
        .map(|b| angle_delta(b.angle(), 180.0))
        .collect();
    tilt.sort_by(f64::total_cmp);
    let median = if tilt.len() % 2 == 1 {
        tilt[tilt.len() / 2]
    } else {
        (tilt[tilt.len() / 2 - 1] + tilt[tilt.len() / 2]) / 2.0
    };
    median <= HORIZONTAL_TOLERANCE_DEG
}

/// Box pose after [`ImageBuffer::rotated_cw`] of an image `height` tall.
fn rotate_box_cw(b: &OrientedBox, height: f64) -> OrientedBox {
    OrientedBox::new(
        height - b.cy(),
        b.cx(),
        b.width(),
        b.height(),
        b.angle() - 90.0,
    )
    .expect("rotation preserves validity")
}

fn unrotate_box(b: &OrientedBox, height: f64) -> OrientedBox {
    OrientedBox::new(
        b.cy(),
        height - b.cx(),
        b.width(),
        b.height(),
        b.angle() + 90.0,
    )
    .expect("rotation preserves validity")
}

/// The full refinement: smooth, sort, color, adjust location then angle,
/// group-and-merge until the group count stops changing, NMS, small-box
/// removal.
pub fn refine_pipeline(
    img: &ImageBuffer,
    raw_boxes: &[OrientedBox],
    cfg: &RefineConfig,
) -> Result<Vec<OrientedBox>, RefineError> {
    Ok(refine_traced(img, raw_boxes, cfg)?.boxes)
}

pub fn refine_traced(
    img: &ImageBuffer,
    raw_boxes: &[OrientedBox],
    cfg: &RefineConfig,
) -> Result<RefineTrace, RefineError> {
    cfg.validate()?;
    if raw_boxes.is_empty() {
        return Ok(RefineTrace {
            boxes: Vec::new(),
            group_counts: Vec::new(),
            grouped_inputs: 0,
            rotated: false,
        });
    }

    let rotated = is_mostly_horizontal(raw_boxes);
    let height = img.height() as f64;
    let (work_img, work_boxes) = if rotated {
        let boxes: Vec<OrientedBox> = raw_boxes.iter().map(|b| rotate_box_cw(b, height)).collect();
        (img.rotated_cw(), boxes)
    } else {
        (img.clone(), raw_boxes.to_vec())
    };

    let smoothed = gaussian_filter(&work_img);
    let mut ds = DetectionSet::new(&smoothed, &work_boxes);
    if cfg.enable_adjust_location {
        ds = adjust(&ds, AdjustMode::Location, cfg);
    }
    if cfg.enable_adjust_angle {
        ds = adjust(&ds, AdjustMode::Angle, cfg);
    }

    let grouped_inputs = ds.len();
    let mut previous = ds.len();
    let mut current = ds.into_boxes();
    let mut group_counts = Vec::new();
    while !current.is_empty() {
        let set = DetectionSet::from_colored(&smoothed, current);
        let groups = grouping(&set, cfg.wide_range_rate, cfg);
        current = groups
            .iter()
            .map(merge_group)
            .collect::<Result<Vec<_>, _>>()?;
        group_counts.push(groups.len());
        if groups.len() == previous || group_counts.len() >= MAX_GROUPING_PASSES {
            break;
        }
        previous = groups.len();
    }

    let merged: Vec<OrientedBox> = current.iter().map(|c| c.bbox).collect();
    let kept = filter_small(&nms(&merged, cfg.nms_iou), cfg.min_edge_px);
    let mut boxes: Vec<OrientedBox> = if rotated {
        kept.iter().map(|b| unrotate_box(b, height)).collect()
    } else {
        kept
    };
    boxes.sort_by(spatial_order);
    Ok(RefineTrace {
        boxes,
        group_counts,
        grouped_inputs,
        rotated,
    })
}

/// Baseline without refinement: NMS and small-box removal on the raw boxes.
pub fn naive_pipeline(raw_boxes: &[OrientedBox], cfg: &RefineConfig) -> Vec<OrientedBox> {
    filter_small(&nms(raw_boxes, cfg.nms_iou), cfg.min_edge_px)
}

/// Center of `b` moved by `offset` px across its width axis.
pub fn across_offset_center(b: &OrientedBox, offset: f64) -> Point {
    b.center() + b.width_axis() * offset
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecolor::Rgb;
    use proptest::prelude::*;

    const SPINE: [u8; 3] = [30, 60, 160];
    const INK: [u8; 3] = [240, 220, 40];

    fn bx(cx: f64, cy: f64, w: f64, h: f64, a: f64) -> OrientedBox {
        OrientedBox::new(cx, cy, w, h, a).unwrap()
    }

    fn paint(img: &mut ImageBuffer, b: &OrientedBox, px: [u8; 3]) {
        crate::imagecolor::for_each_pixel_in(img.width(), img.height(), b, |x, y| {
            img.set(x, y, px)
        });
    }

    fn colors(spine: [u8; 3], text: [u8; 3]) -> BoxColors {
        BoxColors {
            spine: Rgb::from(spine),
            text: Rgb::from(text),
        }
    }

    /// Upright word box at (cx, 100) sized 40x80 with ink filling 85% of its
    /// width and 80% of its height on a spine-colored field.
    fn band_image(band_cx: f64) -> (ImageBuffer, OrientedBox) {
        let mut img = ImageBuffer::new(120, 200, SPINE).unwrap();
        let band = bx(band_cx, 100.0, 40.0, 80.0, 90.0);
        paint(&mut img, &band.scaled(0.85, 0.8).unwrap(), INK);
        (img, band)
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = RefineConfig::default();
        assert_eq!(cfg.adjust_range_px, 5);
        assert_eq!(cfg.adjust_range_deg, 10);
        assert_eq!(cfg.threshold_text, 100.0);
        assert_eq!(cfg.threshold_spine, 60.0);
        assert_eq!(cfg.wide_range_rate, 2.0);
        assert_eq!((cfg.shrink_x, cfg.shrink_y), (0.85, 0.6));
        assert_eq!(cfg.min_edge_px, 100.0);
        cfg.validate().unwrap();
        let bad = RefineConfig {
            nms_iou: 1.0,
            ..cfg.clone()
        };
        assert!(matches!(
            bad.validate(),
            Err(RefineError::Config {
                field: "nms_iou",
                ..
            })
        ));
        let bad = RefineConfig {
            shrink_x: 0.0,
            ..cfg
        };
        assert!(matches!(
            bad.validate(),
            Err(RefineError::Config {
                field: "shrink_x",
                ..
            })
        ));
    }

    #[test]
    fn config_json_rejects_unknown_fields() {
        let err = serde_json::from_str::<RefineConfig>(r#"{"threshold_spin": 3}"#).unwrap_err();
        assert!(err.to_string().contains("threshold_spin"));
        let cfg: RefineConfig = serde_json::from_str(r#"{"threshold_spine": 42}"#).unwrap();
        assert_eq!(cfg.threshold_spine, 42.0);
        assert_eq!(cfg.threshold_text, 100.0);
    }

    #[test]
    fn shift_cases() {
        let cfg = RefineConfig::default();
        let b = bx(50.0, 60.0, 20.0, 70.0, 90.0);
        let zero = shift(&b, AdjustMode::Location, 0.0, &cfg);
        assert_eq!(zero.pose, b);
        assert!((zero.scoring.width() - 17.0).abs() < 1e-12);
        assert!((zero.scoring.height() - 42.0).abs() < 1e-12);

        let moved = shift(&b, AdjustMode::Location, 3.0, &cfg).pose;
        let (c0, c1) = (b.corners(), moved.corners());
        for k in 0..4 {
            assert!((c1[k].x - c0[k].x - 3.0).abs() < 1e-12);
            assert!((c1[k].y - c0[k].y).abs() < 1e-12);
        }

        let there = shift(&b, AdjustMode::Angle, 10.0, &cfg).pose;
        let back = shift(&there, AdjustMode::Angle, -10.0, &cfg).pose;
        assert!((back.angle() - b.angle()).abs() < 1e-9);
        assert_eq!(back.center(), b.center());
    }

    #[test]
    fn search_order_prefers_small_offsets() {
        let v: Vec<i32> = search_offsets(2).collect();
        assert_eq!(v, vec![0, -1, 1, -2, 2]);
    }

    #[test]
    fn adjust_keeps_centered_box() {
        let (img, band) = band_image(60.0);
        let cb = ColoredBox {
            bbox: band,
            colors: colors(SPINE, INK),
        };
        let out = adjust_box(&img, &cb, AdjustMode::Location, &RefineConfig::default());
        assert_eq!(out.offset, 0);
        // Strictly better than every other offset.
        for k in (-5..=5).filter(|&k| k != 0) {
            let s = shift(
                &band,
                AdjustMode::Location,
                k as f64,
                &RefineConfig::default(),
            );
            assert!(adjust_score(&img, &s.scoring, &cb.colors).unwrap() < out.score);
        }
    }

    #[test]
    fn adjust_recenters_displaced_box() {
        let (img, band) = band_image(60.0);
        let displaced = band.translated(3.0, 0.0);
        let cb = ColoredBox {
            bbox: displaced,
            colors: colors(SPINE, INK),
        };
        let out = adjust_box(&img, &cb, AdjustMode::Location, &RefineConfig::default());
        assert!((out.pose.cx() - band.cx()).abs() <= 1.0, "{out:?}");
        assert!(out.score >= out.score_at_zero.unwrap());
    }

    #[test]
    fn adjust_on_uniform_image_keeps_pose() {
        let img = ImageBuffer::new(100, 100, [80; 3]).unwrap();
        let cb = ColoredBox {
            bbox: bx(50.0, 50.0, 20.0, 40.0, 80.0),
            colors: colors([80; 3], [200; 3]),
        };
        for mode in [AdjustMode::Location, AdjustMode::Angle] {
            let out = adjust_box(&img, &cb, mode, &RefineConfig::default());
            assert_eq!(out.offset, 0);
            assert_eq!(out.pose, cb.bbox);
        }
    }

    #[test]
    fn adjust_skips_empty_offsets() {
        let img = ImageBuffer::new(10, 10, [0; 3]).unwrap();
        let cb = ColoredBox {
            bbox: bx(500.0, 500.0, 4.0, 4.0, 90.0),
            colors: colors([0; 3], [255; 3]),
        };
        let out = adjust_box(&img, &cb, AdjustMode::Location, &RefineConfig::default());
        assert_eq!(out.pose, cb.bbox);
        assert_eq!(out.score, f64::NEG_INFINITY);
    }

    fn set_of(boxes: &[(OrientedBox, BoxColors)]) -> Vec<ColoredBox> {
        boxes
            .iter()
            .map(|(b, c)| ColoredBox {
                bbox: *b,
                colors: *c,
            })
            .collect()
    }

    #[test]
    fn grouping_same_color_inside_range() {
        let img = ImageBuffer::new(400, 600, [0; 3]).unwrap();
        let c = colors(SPINE, INK);
        let boxes = set_of(&[
            (bx(200.0, 100.0, 40.0, 80.0, 90.0), c),
            (bx(200.0, 300.0, 40.0, 80.0, 90.0), c),
        ]);
        let ds = DetectionSet::from_colored(&img, boxes);
        let groups = grouping(&ds, 2.0, &RefineConfig::default());
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].indices, vec![0, 1]);
    }

    #[test]
    fn grouping_spine_color_gate() {
        let img = ImageBuffer::new(400, 600, [0; 3]).unwrap();
        let a = colors([0, 0, 0], [255, 255, 255]);
        // Spine distance 200 > 60.
        let b = colors([200, 0, 0], [255, 255, 255]);
        assert!((a.spine.distance(&b.spine) - 200.0).abs() < 1e-12);
        let boxes = set_of(&[
            (bx(200.0, 100.0, 40.0, 80.0, 90.0), a),
            (bx(200.0, 300.0, 40.0, 80.0, 90.0), b),
        ]);
        let ds = DetectionSet::from_colored(&img, boxes);
        assert_eq!(grouping(&ds, 2.0, &RefineConfig::default()).len(), 2);
    }

    #[test]
    fn grouping_three_collinear_on_tilted_spine() {
        let img = ImageBuffer::new(800, 900, [0; 3]).unwrap();
        let c = colors(SPINE, INK);
        let top = bx(400.0, 150.0, 50.0, 100.0, 80.0);
        let down = |d: f64| {
            let p = top.center() - top.height_axis() * d;
            bx(p.x, p.y, 50.0, 100.0, 80.0)
        };
        let boxes = set_of(&[(down(250.0), c), (top, c), (down(500.0), c)]);
        let ds = DetectionSet::from_colored(&img, boxes);
        assert_eq!(ds.boxes()[0].bbox, top);
        let groups = grouping(&ds, 2.0, &RefineConfig::default());
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].members.len(), 3);
    }

    #[test]
    fn grouping_degenerate_founder_is_singleton() {
        let img = ImageBuffer::new(400, 600, [0; 3]).unwrap();
        let c = colors(SPINE, INK);
        let boxes = set_of(&[
            (bx(200.0, 100.0, 40.0, 80.0, 180.0), c),
            (bx(200.0, 110.0, 40.0, 80.0, 180.0), c),
        ]);
        let ds = DetectionSet::from_colored(&img, boxes);
        let groups = grouping(&ds, 2.0, &RefineConfig::default());
        assert_eq!(groups.len(), 2);
    }

    #[test]
    fn merge_keeps_founder_colors() {
        let g = BoxGroup {
            indices: vec![0, 1],
            members: vec![
                bx(5.0, 5.0, 10.0, 10.0, 90.0),
                bx(25.0, 5.0, 10.0, 10.0, 90.0),
            ],
            colors: colors(SPINE, INK),
        };
        let m = merge_group(&g).unwrap();
        assert_eq!(m.colors, g.colors);
        assert!((m.bbox.width() - 30.0).abs() < 1e-9);
        let empty = BoxGroup {
            indices: vec![],
            members: vec![],
            colors: g.colors,
        };
        assert_eq!(merge_group(&empty), Err(GeometryError::EmptyGroup));
    }

    #[test]
    fn nms_cases() {
        let a = bx(50.0, 50.0, 20.0, 40.0, 90.0);
        assert_eq!(nms(&[a, a], 0.3), vec![a]);
        let far = a.translated(100.0, 0.0);
        assert_eq!(nms(&[a, far], 0.3).len(), 2);
        // Small box 60% inside the big one: IoU = 0.6*s / (B + 0.4*s).
        let big = OrientedBox::from_rect(0.0, 0.0, 20.0, 20.0).unwrap();
        let small = OrientedBox::from_rect(10.4, 0.0, 16.0, 20.0).unwrap();
        assert!(iou(&big, &small) > 0.3);
        assert_eq!(nms(&[small, big], 0.3), vec![big]);
    }

    #[test]
    fn filter_small_cases() {
        let thin = bx(0.0, 0.0, 90.0, 300.0, 90.0);
        let ok = bx(0.0, 0.0, 101.0, 300.0, 90.0);
        let tiny = bx(0.0, 0.0, 100.0, 100.0, 90.0);
        let kept = filter_small(&[thin, ok, tiny], 100.0);
        assert_eq!(kept, vec![thin, ok]);
        assert!(filter_small(&[], 100.0).is_empty());
    }

    #[test]
    fn pipeline_empty_and_tiny() {
        let img = ImageBuffer::new(50, 50, [0; 3]).unwrap();
        let cfg = RefineConfig::default();
        assert!(refine_pipeline(&img, &[], &cfg).unwrap().is_empty());
        let small = [bx(25.0, 25.0, 10.0, 20.0, 90.0)];
        assert!(refine_pipeline(&img, &small, &cfg).unwrap().is_empty());
    }

    #[test]
    fn pipeline_single_perfect_box_is_fixed_point() {
        let mut img = ImageBuffer::new(300, 600, [10, 10, 10]).unwrap();
        let spine = bx(150.0, 300.0, 140.0, 560.0, 90.0);
        paint(&mut img, &spine, SPINE);
        let word = bx(150.0, 200.0, 120.0, 200.0, 90.0);
        paint(&mut img, &word.scaled(0.85, 0.8).unwrap(), INK);
        let out = refine_pipeline(&img, &[word], &RefineConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].cx() - word.cx()).abs() < 1e-9);
        assert!((out[0].cy() - word.cy()).abs() < 1e-9);
        assert!((out[0].angle() - word.angle()).abs() < 1e-9);
    }

    #[test]
    fn pipeline_rejects_bad_config() {
        let img = ImageBuffer::new(50, 50, [0; 3]).unwrap();
        let cfg = RefineConfig {
            wide_range_rate: -1.0,
            ..RefineConfig::default()
        };
        assert!(refine_pipeline(&img, &[], &cfg).is_err());
    }

    #[test]
    fn horizontal_input_round_trips_through_rotation() {
        let b = bx(120.0, 40.0, 30.0, 200.0, 178.0);
        let r = rotate_box_cw(&b, 300.0);
        assert!((r.angle() - 88.0).abs() < 1e-9);
        let back = unrotate_box(&r, 300.0);
        assert!((back.cx() - b.cx()).abs() < 1e-9 && (back.cy() - b.cy()).abs() < 1e-9);
        assert!(angle_delta(back.angle(), b.angle()) < 1e-9);
        assert!(is_mostly_horizontal(&[
            b,
            b.with_angle(5.0),
            b.with_angle(90.0)
        ]));
        assert!(!is_mostly_horizontal(&[b.with_angle(80.0)]));
    }

    #[test]
    fn rotated_box_follows_rotated_pixels() {
        let mut img = ImageBuffer::new(40, 30, [0; 3]).unwrap();
        let b = bx(12.0, 9.0, 6.0, 10.0, 60.0);
        paint(&mut img, &b, [255; 3]);
        let rimg = img.rotated_cw();
        let rb = rotate_box_cw(&b, 30.0);
        let mut painted = ImageBuffer::new(rimg.width(), rimg.height(), [0; 3]).unwrap();
        paint(&mut painted, &rb, [255; 3]);
        let diff = rimg
            .pixels()
            .iter()
            .zip(painted.pixels())
            .filter(|(a, b)| a != b)
            .count();
        assert!(diff <= 2, "{diff} pixels differ");
    }

    fn arb_boxes() -> impl Strategy<Value = Vec<OrientedBox>> {
        proptest::collection::vec(
            (
                0.0..400.0f64,
                0.0..400.0f64,
                5.0..150.0f64,
                5.0..150.0f64,
                0.0..180.0f64,
            ),
            0..12,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(x, y, w, h, a)| bx(x, y, w, h, a))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn nms_is_idempotent(boxes in arb_boxes(), thr in 0.05..0.95f64) {
            let once = nms(&boxes, thr);
            prop_assert_eq!(nms(&once, thr), once.clone());
            for (i, a) in once.iter().enumerate() {
                for b in &once[i + 1..] {
                    prop_assert!(iou(a, b) <= thr);
                }
            }
        }

        #[test]
        fn filter_is_idempotent(boxes in arb_boxes(), edge in 0.0..200.0f64) {
            let once = filter_small(&boxes, edge);
            prop_assert_eq!(filter_small(&once, edge), once);
        }
    }
}
