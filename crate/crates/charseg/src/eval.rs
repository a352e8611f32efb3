//! Segment-wise evaluation and the learning-curve harness.
//!
//! Predicted BIO tags are decoded into typed segments (repairing ill-formed
//! runs the way conlleval does), and scored against gold segments by exact
//! (start, end, label) match. The curve harness retrains a labeler on
//! nested character prefixes of the training pool and reports one score row
//! per (fraction × feature set).

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::corpus::{BioTag, LabeledSequence, Segment, SegmentLabel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("fractions must be ascending and in (0, 100], got {0:?}")]
    BadFractions(Vec<f64>),
    #[error("no feature sets requested")]
    NoFeatureSets,
    #[error("empty training pool")]
    EmptyTrainingPool,
    #[error("curve cell (fraction {fraction}%, features {feature_set}) failed: {source}")]
    Cell {
        fraction: f64,
        feature_set: String,
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

/// Decode a BIO tag sequence into maximal typed segments.
///
/// Total on arbitrary input: an `I-X` with no preceding `B-X`/`I-X` opens a
/// new segment as if it were `B-X` (the conlleval repair), and a label
/// switch between adjacent inside tags starts a new segment.
pub fn extract_segments(tags: &[BioTag]) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut open: Option<(usize, SegmentLabel)> = None;
    for (t, tag) in tags.iter().enumerate() {
        let next = match (tag.label(), open) {
            // O closes anything open.
            (None, _) => None,
            // B-X always opens fresh; I-X continues only a same-label run.
            (Some(label), Some((start, cur))) if label == cur && tag.is_inside() => {
                Some((start, cur))
            }
            (Some(label), prev) => {
                if let Some((start, cur)) = prev {
                    out.push(Segment::new(start, t, cur));
                }
                Some((t, label))
            }
        };
        if next.is_none() {
            if let Some((start, cur)) = open {
                out.push(Segment::new(start, t, cur));
            }
        }
        open = next;
    }
    if let Some((start, cur)) = open {
        out.push(Segment::new(start, tags.len(), cur));
    }
    out
}

/// Gold/predicted/matched segment tallies with derived scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PrfCounts {
    pub gold: usize,
    pub predicted: usize,
    pub matched: usize,
}

impl PrfCounts {
    /// Percent of predicted segments that are correct; 0 when nothing was
    /// predicted.
    pub fn precision(&self) -> f64 {
        percent(self.matched, self.predicted)
    }

    /// Percent of gold segments that were found; 0 when there is no gold.
    pub fn recall(&self) -> f64 {
        percent(self.matched, self.gold)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

fn percent(num: usize, denom: usize) -> f64 {
    if denom == 0 {
        0.0
    } else {
        100.0 * num as f64 / denom as f64
    }
}

/// Segment-wise precision/recall/F1, per label and pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PrfReport {
    pub block: PrfCounts,
    pub inline: PrfCounts,
}

impl PrfReport {
    pub fn counts(&self, label: SegmentLabel) -> PrfCounts {
        match label {
            SegmentLabel::Block => self.block,
            SegmentLabel::Inline => self.inline,
        }
    }

    /// Micro-average: both labels' tallies pooled.
    pub fn overall(&self) -> PrfCounts {
        PrfCounts {
            gold: self.block.gold + self.inline.gold,
            predicted: self.block.predicted + self.inline.predicted,
            matched: self.block.matched + self.inline.matched,
        }
    }

    /// Tab-separated rows `label P R F1 gold predicted matched`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (name, c) in self.rows() {
            out.push_str(&format!(
                "{name}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\t{}\n",
                c.precision(),
                c.recall(),
                c.f1(),
                c.gold,
                c.predicted,
                c.matched
            ));
        }
        out
    }

    fn rows(&self) -> [(&'static str, PrfCounts); 3] {
        [("BLOCK", self.block), ("INLINE", self.inline), ("Overall", self.overall())]
    }
}

impl fmt::Display for PrfReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:>11} {:>8} {:>8}", "Label", "%Precision", "%Recall", "%F1")?;
        for (name, c) in self.rows() {
            writeln!(
                f,
                "{name:<8} {:>11.2} {:>8.2} {:>8.2}",
                c.precision(),
                c.recall(),
                c.f1()
            )?;
        }
        Ok(())
    }
}

/// Score predicted segments against gold, sequence by sequence. A predicted
/// segment is correct only when its start, end, and label all match a gold
/// segment of the same sequence.
///
/// Panics if `gold` and `pred` cover different numbers of sequences.
pub fn segment_prf(gold: &[Vec<Segment>], pred: &[Vec<Segment>]) -> PrfReport {
    assert_eq!(gold.len(), pred.len(), "gold and pred must cover the same sequences");
    let mut report = PrfReport::default();
    for (g, p) in gold.iter().zip(pred) {
        let gold_set: HashSet<(usize, usize, SegmentLabel)> =
            g.iter().map(|s| (s.start, s.end, s.label)).collect();
        for s in g {
            tally(&mut report, s.label).gold += 1;
        }
        for s in p {
            let c = tally(&mut report, s.label);
            c.predicted += 1;
            if gold_set.contains(&(s.start, s.end, s.label)) {
                c.matched += 1;
            }
        }
    }
    report
}

fn tally(report: &mut PrfReport, label: SegmentLabel) -> &mut PrfCounts {
    match label {
        SegmentLabel::Block => &mut report.block,
        SegmentLabel::Inline => &mut report.inline,
    }
}

/// Default labeled-data fractions (percent) for the learning curve.
pub const DEFAULT_FRACTIONS: [f64; 4] = [12.5, 25.0, 50.0, 100.0];

/// One cell of the learning curve.
#[derive(Debug, Clone)]
pub struct CurvePoint {
    /// Percent of training characters used.
    pub fraction: f64,
    pub feature_set: String,
    pub report: PrfReport,
}

impl CurvePoint {
    /// `fraction feature_set P R F1` as one tab-separated line (overall
    /// scores).
    pub fn to_tsv_row(&self) -> String {
        let o = self.report.overall();
        format!(
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}",
            self.fraction,
            self.feature_set,
            o.precision(),
            o.recall(),
            o.f1()
        )
    }
}

/// Largest prefix (in sequences) whose character count is nearest to
/// `fraction`% of the pool; never fewer than one sequence. Ascending
/// fractions give nested prefixes.
pub fn prefix_len(pool: &[LabeledSequence], fraction: f64) -> usize {
    let total: usize = pool.iter().map(|s| s.chars.len()).sum();
    let target = total as f64 * fraction / 100.0;
    let mut best = (1, f64::INFINITY);
    let mut cum = 0usize;
    for (i, seq) in pool.iter().enumerate() {
        cum += seq.chars.len();
        let gap = (cum as f64 - target).abs();
        if gap < best.1 {
            best = (i + 1, gap);
        }
    }
    best.0
}

/// Train and score one labeler per (fraction × feature set).
///
/// `train` receives the feature-set id and a nested character-prefix of the
/// training pool (cut at a sequence boundary); `predict` tags one dev
/// sequence with the trained model. Cells run sequentially, fractions
/// outermost, and any cell failure aborts with its coordinates attached.
pub fn learning_curve<M, E>(
    pool: &[LabeledSequence],
    dev: &[LabeledSequence],
    fractions: &[f64],
    feature_sets: &[&str],
    mut train: impl FnMut(&str, &[LabeledSequence]) -> Result<M, E>,
    mut predict: impl FnMut(&str, &M, &LabeledSequence) -> Result<Vec<BioTag>, E>,
) -> Result<Vec<CurvePoint>, EvalError>
where
    E: std::error::Error + Send + Sync + 'static,
{
    let ascending = fractions.windows(2).all(|w| w[0] < w[1]);
    if fractions.is_empty() || !ascending || fractions.iter().any(|f| !(0.0..=100.0).contains(f) || *f <= 0.0)
    {
        return Err(EvalError::BadFractions(fractions.to_vec()));
    }
    if feature_sets.is_empty() {
        return Err(EvalError::NoFeatureSets);
    }
    if pool.is_empty() {
        return Err(EvalError::EmptyTrainingPool);
    }

    let gold: Vec<Vec<Segment>> = dev.iter().map(|s| extract_segments(&s.tags)).collect();
    let mut points = Vec::with_capacity(fractions.len() * feature_sets.len());
    for &fraction in fractions {
        let prefix = &pool[..prefix_len(pool, fraction)];
        for &feature_set in feature_sets {
            let cell = |e: E| EvalError::Cell {
                fraction,
                feature_set: feature_set.to_string(),
                source: Box::new(e),
            };
            let model = train(feature_set, prefix).map_err(cell)?;
            let mut pred = Vec::with_capacity(dev.len());
            for seq in dev {
                let cell = |e: E| EvalError::Cell {
                    fraction,
                    feature_set: feature_set.to_string(),
                    source: Box::new(e),
                };
                pred.push(extract_segments(&predict(feature_set, &model, seq).map_err(cell)?));
            }
            points.push(CurvePoint {
                fraction,
                feature_set: feature_set.to_string(),
                report: segment_prf(&gold, &pred),
            });
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{to_bio, BioTag::*, MarkedDocument};
    use proptest::prelude::*;

    fn seg(start: usize, end: usize, label: SegmentLabel) -> Segment {
        Segment::new(start, end, label)
    }

    #[test]
    fn extracts_well_formed_runs() {
        assert_eq!(
            extract_segments(&[Outside, BeginBlock, InsideBlock, Outside]),
            vec![seg(1, 3, SegmentLabel::Block)]
        );
        assert_eq!(extract_segments(&[Outside, Outside]), vec![]);
        assert_eq!(extract_segments(&[]), vec![]);
    }

    #[test]
    fn extracts_block_from_marked_fixture() {
        // "just\npublic " with BLOCK over the final 7 characters.
        let doc = MarkedDocument::new(
            "d",
            "just\npublic ",
            vec![seg(5, 12, SegmentLabel::Block)],
        )
        .unwrap();
        let bio = to_bio(&doc);
        assert_eq!(extract_segments(&bio.tags), vec![seg(5, 12, SegmentLabel::Block)]);
    }

    #[test]
    fn repairs_leading_inside_tags() {
        assert_eq!(
            extract_segments(&[InsideInline, InsideInline, Outside]),
            vec![seg(0, 2, SegmentLabel::Inline)]
        );
        assert_eq!(
            extract_segments(&[Outside, InsideBlock]),
            vec![seg(1, 2, SegmentLabel::Block)]
        );
    }

    #[test]
    fn label_switch_between_inside_tags_splits() {
        assert_eq!(
            extract_segments(&[BeginBlock, InsideBlock, InsideInline]),
            vec![seg(0, 2, SegmentLabel::Block), seg(2, 3, SegmentLabel::Inline)]
        );
    }

    #[test]
    fn adjacent_begins_split() {
        assert_eq!(
            extract_segments(&[BeginBlock, BeginBlock, BeginInline]),
            vec![
                seg(0, 1, SegmentLabel::Block),
                seg(1, 2, SegmentLabel::Block),
                seg(2, 3, SegmentLabel::Inline)
            ]
        );
    }

    #[test]
    fn run_reaching_end_is_closed() {
        assert_eq!(
            extract_segments(&[Outside, BeginInline, InsideInline]),
            vec![seg(1, 3, SegmentLabel::Inline)]
        );
    }

    proptest! {
        #[test]
        fn extraction_is_total_sorted_and_tiles(tag_idx in proptest::collection::vec(0usize..5, 0..40)) {
            let tags: Vec<BioTag> = tag_idx.iter().map(|&i| BioTag::from_index(i).unwrap()).collect();
            let segs = extract_segments(&tags);
            for w in segs.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            for s in &segs {
                prop_assert!(s.start < s.end && s.end <= tags.len());
                // Every covered position carries that label.
                for t in s.start..s.end {
                    prop_assert_eq!(tags[t].label(), Some(s.label));
                }
            }
            // Uncovered positions are exactly the O tags.
            let covered: usize = segs.iter().map(|s| s.end - s.start).sum();
            let non_o = tags.iter().filter(|t| t.label().is_some()).count();
            prop_assert_eq!(covered, non_o);
        }

        #[test]
        fn round_trips_with_marked_documents(
            a in 0usize..5, b in 1usize..5, c in 0usize..5, d in 1usize..5, e in 0usize..5,
            first_block in proptest::bool::ANY,
        ) {
            // Build gap/segment/gap/segment/gap, then check
            // extract_segments(to_bio(doc)) == doc.segments.
            let s1 = a + if a == 0 && !first_block { 1 } else { 0 }; // inline needs a B at 0 anyway
            let start1 = s1;
            let end1 = start1 + b;
            let start2 = end1 + c.max(1); // keep segments non-adjacent in char space
            let end2 = start2 + d;
            let len = end2 + e;
            let text: String = "x".repeat(len);
            let (l1, l2) = if first_block {
                (SegmentLabel::Block, SegmentLabel::Inline)
            } else {
                (SegmentLabel::Inline, SegmentLabel::Block)
            };
            let segs = vec![seg(start1, end1, l1), seg(start2, end2, l2)];
            let doc = MarkedDocument::new("p", &text, segs.clone()).unwrap();
            prop_assert_eq!(extract_segments(&to_bio(&doc).tags), segs);
        }
    }

    #[test]
    fn perfect_prediction_scores_100() {
        let gold = vec![vec![seg(0, 2, SegmentLabel::Block)], vec![seg(1, 3, SegmentLabel::Inline)]];
        let r = segment_prf(&gold, &gold);
        let o = r.overall();
        assert_eq!((o.gold, o.predicted, o.matched), (2, 2, 2));
        assert_eq!(o.precision(), 100.0);
        assert_eq!(o.recall(), 100.0);
        assert_eq!(o.f1(), 100.0);
    }

    #[test]
    fn boundary_miss_scores_zero() {
        let gold = vec![vec![seg(1, 3, SegmentLabel::Block)]];
        let pred = vec![vec![seg(1, 4, SegmentLabel::Block)]];
        let r = segment_prf(&gold, &pred);
        assert_eq!(r.block.matched, 0);
        assert_eq!(r.block.precision(), 0.0);
        assert_eq!(r.block.recall(), 0.0);
        assert_eq!(r.block.f1(), 0.0);
    }

    #[test]
    fn label_miss_halves_overall() {
        let gold = vec![vec![seg(0, 2, SegmentLabel::Block), seg(5, 7, SegmentLabel::Inline)]];
        let pred = vec![vec![seg(0, 2, SegmentLabel::Block), seg(5, 7, SegmentLabel::Block)]];
        let r = segment_prf(&gold, &pred);
        let o = r.overall();
        assert_eq!(o.precision(), 50.0);
        assert_eq!(o.recall(), 50.0);
        assert_eq!(o.f1(), 50.0);
        // Per label: BLOCK has 1 gold, 2 predicted, 1 matched.
        assert_eq!((r.block.gold, r.block.predicted, r.block.matched), (1, 2, 1));
        assert_eq!((r.inline.gold, r.inline.predicted, r.inline.matched), (1, 0, 0));
    }

    #[test]
    fn empty_prediction_reports_zero_not_nan() {
        let gold = vec![vec![seg(0, 2, SegmentLabel::Block)]];
        let pred = vec![vec![]];
        let r = segment_prf(&gold, &pred);
        assert_eq!(r.block.precision(), 0.0);
        assert_eq!(r.block.recall(), 0.0);
        assert_eq!(r.overall().f1(), 0.0);
    }

    #[test]
    fn counts_pool_additively() {
        let gold = vec![
            vec![seg(0, 2, SegmentLabel::Block), seg(3, 5, SegmentLabel::Inline)],
            vec![seg(1, 2, SegmentLabel::Inline)],
        ];
        let pred = vec![
            vec![seg(0, 2, SegmentLabel::Block)],
            vec![seg(1, 2, SegmentLabel::Block), seg(3, 4, SegmentLabel::Inline)],
        ];
        let r = segment_prf(&gold, &pred);
        let o = r.overall();
        assert_eq!(o.gold, r.block.gold + r.inline.gold);
        assert_eq!(o.predicted, r.block.predicted + r.inline.predicted);
        assert_eq!(o.matched, r.block.matched + r.inline.matched);
    }

    #[test]
    fn report_formats_align() {
        let gold = vec![vec![seg(0, 2, SegmentLabel::Block)]];
        let r = segment_prf(&gold, &gold);
        let text = r.to_string();
        assert!(text.contains("%Precision"));
        assert!(text.lines().count() == 4);
        let tsv = r.to_tsv();
        assert!(tsv.starts_with("BLOCK\t100.0000\t100.0000\t100.0000\t1\t1\t1"));
        assert_eq!(tsv.lines().count(), 3);
    }

    fn run(chars: usize, tag: BioTag) -> LabeledSequence {
        let tags = vec![tag; chars];
        LabeledSequence::new("x".repeat(chars).chars().collect(), tags).unwrap()
    }

    #[test]
    fn prefix_cuts_at_nearest_boundary() {
        // Sequences of 40, 40, 20 chars; total 100.
        let pool = vec![run(40, Outside), run(40, Outside), run(20, Outside)];
        assert_eq!(prefix_len(&pool, 12.5), 1); // target 12.5 → nearest cut 40
        assert_eq!(prefix_len(&pool, 50.0), 1); // 40 vs 80: 40 is nearer
        assert_eq!(prefix_len(&pool, 61.0), 2); // 61 → 80
        assert_eq!(prefix_len(&pool, 100.0), 3);
        // Nested for ascending fractions.
        let lens: Vec<usize> =
            DEFAULT_FRACTIONS.iter().map(|f| prefix_len(&pool, *f)).collect();
        assert!(lens.windows(2).all(|w| w[0] <= w[1]));
    }

    #[derive(Debug, thiserror::Error)]
    #[error("boom")]
    struct Boom;

    #[test]
    fn degenerate_curve_equals_direct_run() {
        // A "model" that memorizes nothing: predicts O everywhere except it
        // echoes the feature-set id's block flag. Train on 100% only.
        let pool = vec![run(10, Outside)];
        let dev = vec![
            LabeledSequence::new(
                vec!['a', 'b', 'c'],
                vec![Outside, BeginBlock, InsideBlock],
            )
            .unwrap(),
        ];
        let points = learning_curve(
            &pool,
            &dev,
            &[100.0],
            &["echo-gold"],
            |_, prefix| {
                assert_eq!(prefix.len(), 1);
                Ok::<_, Boom>(())
            },
            |_, _, seq| Ok(seq.tags.clone()),
        )
        .unwrap();
        assert_eq!(points.len(), 1);
        let direct = segment_prf(
            &[extract_segments(&dev[0].tags)],
            &[extract_segments(&dev[0].tags)],
        );
        assert_eq!(points[0].report, direct);
        assert_eq!(points[0].report.overall().f1(), 100.0);
        assert!(points[0].to_tsv_row().starts_with("100\techo-gold\t"));
    }

    #[test]
    fn curve_orders_cells_fraction_major() {
        let pool = vec![run(4, Outside), run(4, Outside)];
        let dev = vec![run(2, Outside)];
        let points = learning_curve(
            &pool,
            &dev,
            &[50.0, 100.0],
            &["baseline", "augmented"],
            |_, _| Ok::<_, Boom>(()),
            |_, _, seq| Ok(vec![Outside; seq.chars.len()]),
        )
        .unwrap();
        let coords: Vec<(f64, &str)> =
            points.iter().map(|p| (p.fraction, p.feature_set.as_str())).collect();
        assert_eq!(
            coords,
            vec![
                (50.0, "baseline"),
                (50.0, "augmented"),
                (100.0, "baseline"),
                (100.0, "augmented")
            ]
        );
    }

    #[test]
    fn curve_validates_inputs_and_wraps_failures() {
        let pool = vec![run(4, Outside)];
        let dev = vec![run(2, Outside)];
        let ok_train = |_: &str, _: &[LabeledSequence]| Ok::<_, Boom>(());
        let ok_predict =
            |_: &str, _: &(), s: &LabeledSequence| Ok(vec![Outside; s.chars.len()]);

        for bad in [vec![], vec![50.0, 25.0], vec![0.0], vec![120.0]] {
            let r = learning_curve(&pool, &dev, &bad, &["b"], ok_train, ok_predict);
            assert!(matches!(r, Err(EvalError::BadFractions(_))), "{bad:?}");
        }
        assert!(matches!(
            learning_curve(&pool, &dev, &[100.0], &[], ok_train, ok_predict),
            Err(EvalError::NoFeatureSets)
        ));
        assert!(matches!(
            learning_curve(&[], &dev, &[100.0], &["b"], ok_train, ok_predict),
            Err(EvalError::EmptyTrainingPool)
        ));

        let err = learning_curve(
            &pool,
            &dev,
            &[25.0, 100.0],
            &["b"],
            |_, prefix| {
                if prefix.len() == 1 { Err(Boom) } else { Ok(()) }
            },
            ok_predict,
        )
        .unwrap_err();
        match err {
            EvalError::Cell { fraction, feature_set, .. } => {
                assert_eq!(fraction, 25.0);
                assert_eq!(feature_set, "b");
            }
            other => panic!("wrong error: {other}"),
        }
    }
}
