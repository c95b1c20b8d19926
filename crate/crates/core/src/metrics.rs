//! Book-level evaluation: box accuracy (BA), center error (EDBC), IoU and
//! area difference (ADM).
//!
//! Every prediction is assigned to the ground-truth book it overlaps most.
//! BA is the share of books that end up with exactly one prediction, and the
//! three distance metrics are averaged over exactly those books.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, OrientedBox};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("ground truth contains no books")]
    EmptyTruth,
}

/// The books of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image_id: String,
    pub books: Vec<OrientedBox>,
}

impl GroundTruth {
    pub fn new(image_id: impl Into<String>, books: Vec<OrientedBox>) -> Self {
        let truth = Self {
            image_id: image_id.into(),
            books,
        };
        for (i, j, v) in truth.overlapping_pairs(0.5) {
            warn!(
                "{}: ground-truth books {i} and {j} overlap (IoU {v:.3})",
                truth.image_id
            );
        }
        truth
    }

    /// Book pairs whose IoU exceeds `threshold`.
    pub fn overlapping_pairs(&self, threshold: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.books.len() {
            for j in i + 1..self.books.len() {
                let v = iou(&self.books[i], &self.books[j]);
                if v > threshold {
                    out.push((i, j, v));
                }
            }
        }
        out
    }
}

/// Which predictions landed on which book.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// Prediction indices per book, in prediction order.
    pub per_book: Vec<Vec<usize>>,
    /// Predictions that overlap no book.
    pub unassigned: Vec<usize>,
}

pub fn edbc(b: &OrientedBox, g: &OrientedBox) -> f64 {
    b.center().distance(g.center())
}

pub fn adm(b: &OrientedBox, g: &OrientedBox) -> f64 {
    (b.area() - g.area()).abs()
}

/// Each prediction goes to the book with the highest IoU (ties: nearer
/// center, then lower index); predictions with IoU 0 everywhere stay
/// unassigned.
pub fn assign(predictions: &[OrientedBox], truth: &GroundTruth) -> Assignment {
    let mut per_book = vec![Vec::new(); truth.books.len()];
    let mut unassigned = Vec::new();
    for (p, pred) in predictions.iter().enumerate() {
        let mut best: Option<(usize, f64, f64)> = None;
        for (g, book) in truth.books.iter().enumerate() {
            let v = iou(pred, book);
            if v <= 0.0 {
                continue;
            }
            let d = edbc(pred, book);
            let better = match best {
                None => true,
                Some((_, bv, bd)) => v > bv || (v == bv && d < bd),
            };
            if better {
                best = Some((g, v, d));
            }
        }
        match best {
            Some((g, _, _)) => per_book[g].push(p),
            None => unassigned.push(p),
        }
    }
    Assignment {
        per_book,
        unassigned,
    }
}

pub fn box_accuracy(assignment: &Assignment) -> Result<f64, MetricsError> {
    let total = assignment.per_book.len();
    if total == 0 {
        return Err(MetricsError::EmptyTruth);
    }
    let single = assignment.per_book.iter().filter(|p| p.len() == 1).count();
    Ok(single as f64 / total as f64)
}

/// Scores of one book that received exactly one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BookMatch {
    pub book: usize,
    pub prediction: usize,
    pub edbc: f64,
    pub iou: f64,
    pub adm: f64,
}

/// Aggregate metrics. Means are `None` when no book was matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ba: f64,
    pub edbc_mean: Option<f64>,
    pub iou_mean: Option<f64>,
    pub adm_mean: Option<f64>,
    pub matched_books: usize,
    pub total_books: usize,
    /// Predictions that overlapped no book.
    pub false_boxes: usize,
}

impl MetricsReport {
    /// Pools per-book matches; `total_books` must be positive.
    pub fn from_matches(
        total_books: usize,
        matches: &[BookMatch],
        false_boxes: usize,
    ) -> Result<Self, MetricsError> {
        if total_books == 0 {
            return Err(MetricsError::EmptyTruth);
        }
        let n = matches.len();
        let mean = |f: fn(&BookMatch) -> f64| {
            (n > 0).then(|| matches.iter().map(f).sum::<f64>() / n as f64)
        };
        Ok(Self {
            ba: n as f64 / total_books as f64,
            edbc_mean: mean(|m| m.edbc),
            iou_mean: mean(|m| m.iou),
            adm_mean: mean(|m| m.adm),
            matched_books: n,
            total_books,
            false_boxes,
        })
    }
}

/// Per-image result with the matches that feed corpus-level pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub assignment: Assignment,
    pub matches: Vec<BookMatch>,
    pub report: MetricsReport,
}

pub fn evaluate_detailed(
    predictions: &[OrientedBox],
    truth: &GroundTruth,
) -> Result<Evaluation, MetricsError> {
    let assignment = assign(predictions, truth);
    let matches: Vec<BookMatch> = assignment
        .per_book
        .iter()
        .enumerate()
        .filter(|(_, preds)| preds.len() == 1)
        .map(|(g, preds)| {
            let (b, t) = (&predictions[preds[0]], &truth.books[g]);
            BookMatch {
                book: g,
                prediction: preds[0],
                edbc: edbc(b, t),
                iou: iou(b, t),
                adm: adm(b, t),
            }
        })
        .collect();
    let report =
        MetricsReport::from_matches(truth.books.len(), &matches, assignment.unassigned.len())?;
    Ok(Evaluation {
        assignment,
        matches,
        report,
    })
}

pub fn evaluate(
    predictions: &[OrientedBox],
    truth: &GroundTruth,
) -> Result<MetricsReport, MetricsError> {
    Ok(evaluate_detailed(predictions, truth)?.report)
}

/// Corpus metrics: BA over all books, means over all matched books.
pub fn aggregate(evaluations: &[Evaluation]) -> Result<MetricsReport, MetricsError> {
    let total: usize = evaluations.iter().map(|e| e.report.total_books).sum();
    let false_boxes = evaluations.iter().map(|e| e.report.false_boxes).sum();
    let matches: Vec<BookMatch> = evaluations
        .iter()
        .flat_map(|e| e.matches.iter().copied())
        .collect();
    MetricsReport::from_matches(total, &matches, false_boxes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(cx: f64, cy: f64, w: f64, h: f64, a: f64) -> OrientedBox {
        OrientedBox::new(cx, cy, w, h, a).unwrap()
    }

    fn shelf() -> GroundTruth {
        GroundTruth::new(
            "shelf",
            vec![
                bx(50.0, 200.0, 60.0, 300.0, 90.0),
                bx(150.0, 200.0, 60.0, 300.0, 90.0),
                bx(250.0, 200.0, 60.0, 300.0, 90.0),
                bx(350.0, 200.0, 60.0, 300.0, 90.0),
            ],
        )
    }

    #[test]
    fn assignment_basics() {
        let t = shelf();
        let a = assign(&[t.books[0]], &t);
        assert_eq!(a.per_book[0], vec![0]);
        let a = assign(&[bx(900.0, 900.0, 10.0, 10.0, 90.0)], &t);
        assert_eq!(a.unassigned, vec![0]);
    }

    #[test]
    fn assignment_prefers_higher_iou() {
        let t = GroundTruth::new(
            "pair",
            vec![
                bx(0.0, 0.0, 10.0, 10.0, 90.0),
                bx(10.0, 0.0, 10.0, 10.0, 90.0),
            ],
        );
        // Spans x in [-2, 8]: 70 px^2 on A, 30 px^2 on B.
        let p = bx(3.0, 0.0, 10.0, 10.0, 90.0);
        let (ia, ib) = (iou(&p, &t.books[0]), iou(&p, &t.books[1]));
        assert!(ia > ib && ib > 0.0);
        assert_eq!(assign(&[p], &t).per_book[0], vec![0]);
    }

    #[test]
    fn box_accuracy_counts_single_boxes() {
        let a = Assignment {
            per_book: vec![vec![0], vec![1, 2], vec![], vec![3]],
            unassigned: vec![],
        };
        assert_eq!(box_accuracy(&a).unwrap(), 0.5);
        let none = Assignment {
            per_book: vec![],
            unassigned: vec![],
        };
        assert_eq!(box_accuracy(&none), Err(MetricsError::EmptyTruth));
    }

    #[test]
    fn pointwise_metrics() {
        let a = bx(5.0, 5.0, 10.0, 10.0, 90.0);
        assert_eq!(edbc(&a, &a), 0.0);
        assert_eq!(edbc(&a, &bx(10.0, 5.0, 10.0, 10.0, 90.0)), 5.0);
        assert_eq!(adm(&a, &a.translated(40.0, -3.0)), 0.0);
        assert_eq!(adm(&a, &bx(5.0, 5.0, 10.0, 20.0, 90.0)), 100.0);
    }

    #[test]
    fn perfect_and_empty() {
        let t = shelf();
        let r = evaluate(&t.books, &t).unwrap();
        assert_eq!(r.ba, 1.0);
        assert_eq!(r.edbc_mean, Some(0.0));
        assert!((r.iou_mean.unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(r.adm_mean, Some(0.0));
        let r = evaluate(&[], &t).unwrap();
        assert_eq!(r.ba, 0.0);
        assert_eq!((r.edbc_mean, r.iou_mean, r.adm_mean), (None, None, None));
        assert_eq!(
            evaluate(&[], &GroundTruth::new("x", vec![])),
            Err(MetricsError::EmptyTruth)
        );
    }

    #[test]
    fn multi_box_books_are_excluded_from_means() {
        let t = shelf();
        let preds = vec![
            t.books[0].translated(3.0, 4.0),
            t.books[1].translated(0.0, -20.0),
            t.books[1].translated(0.0, 20.0),
            bx(350.0, 200.0, 60.0, 250.0, 90.0),
        ];
        let r = evaluate(&preds, &t).unwrap();
        assert_eq!(r.ba, 0.5);
        assert_eq!(r.matched_books, 2);
        assert!((r.edbc_mean.unwrap() - 2.5).abs() < 1e-9);
        assert!((r.adm_mean.unwrap() - 1500.0).abs() < 1e-9);
    }

    #[test]
    fn corpus_pooling() {
        let t = shelf();
        let e1 = evaluate_detailed(&t.books, &t).unwrap();
        let e2 = evaluate_detailed(&[t.books[0].translated(6.0, 8.0)], &t).unwrap();
        let r = aggregate(&[e1, e2]).unwrap();
        assert_eq!(r.total_books, 8);
        assert_eq!(r.matched_books, 5);
        assert!((r.edbc_mean.unwrap() - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn translation_and_scale(dx in -500.0..500.0f64, dy in -500.0..500.0f64, s in 0.2..5.0f64,
                                 jitter in proptest::collection::vec((-20.0..20.0f64, -20.0..20.0f64, 0.7..1.3f64), 4)) {
            let t = shelf();
            let preds: Vec<OrientedBox> = t.books.iter().zip(&jitter)
                .map(|(b, (jx, jy, k))| bx(b.cx() + jx, b.cy() + jy, b.width() * k, b.height(), b.angle()))
                .collect();
            let base = evaluate(&preds, &t).unwrap();
            let moved_t = GroundTruth::new("m", t.books.iter().map(|b| b.translated(dx, dy)).collect());
            let moved_p: Vec<_> = preds.iter().map(|b| b.translated(dx, dy)).collect();
            let moved = evaluate(&moved_p, &moved_t).unwrap();
            prop_assert_eq!(base.ba, moved.ba);
            prop_assert!((base.edbc_mean.unwrap() - moved.edbc_mean.unwrap()).abs() < 1e-6);
            prop_assert!((base.iou_mean.unwrap() - moved.iou_mean.unwrap()).abs() < 1e-6);
            prop_assert!((base.adm_mean.unwrap() - moved.adm_mean.unwrap()).abs() < 1e-6);

            let scale = |b: &OrientedBox| bx(b.cx() * s, b.cy() * s, b.width() * s, b.height() * s, b.angle());
            let scaled_t = GroundTruth::new("s", t.books.iter().map(scale).collect());
            let scaled_p: Vec<_> = preds.iter().map(scale).collect();
            let scaled = evaluate(&scaled_p, &scaled_t).unwrap();
            prop_assert_eq!(base.ba, scaled.ba);
            prop_assert!((base.iou_mean.unwrap() - scaled.iou_mean.unwrap()).abs() < 1e-6);
            prop_assert!((base.edbc_mean.unwrap() * s - scaled.edbc_mean.unwrap()).abs() < 1e-6);
            prop_assert!((base.adm_mean.unwrap() * s * s - scaled.adm_mean.unwrap()).abs() < 1e-4);
        }
    }
}
