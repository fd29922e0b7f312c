//! Matching detections to ground truth, recall and mean-error metrics.

use std::fmt::Write as _;

use crate::cluster::{detection_order, Detection};
use crate::error::{Error, Result};
use crate::synthgen::VortexSpec;

pub const DEFAULT_D_MATCH: f64 = 50.0;

/// Greedy class-gated matching. Candidate pairs within `d_match` are taken in
/// ascending distance order, ties by truth index and then by the detection's
/// rank in canonical order (descending support, then centre), so the result
/// does not depend on the order `detections` are given in.
///
/// Returns, per truth, the matched detection index (into `detections`) and
/// the distance.
pub fn match_detections(truth: &[VortexSpec], detections: &[Detection], d_match: f64) -> Vec<Option<(usize, f64)>> {
    let mut canonical: Vec<usize> = (0..detections.len()).collect();
    canonical.sort_by(|&a, &b| detection_order(&detections[a], &detections[b]).then(a.cmp(&b)));
    let mut rank = vec![0; detections.len()];
    for (r, &d) in canonical.iter().enumerate() {
        rank[d] = r;
    }
    let mut pairs = Vec::new();
    for (t, v) in truth.iter().enumerate() {
        for (d, det) in detections.iter().enumerate() {
            if det.class != v.class {
                continue;
            }
            let dist = (det.center.0 - v.center.0).hypot(det.center.1 - v.center.1);
            if dist <= d_match {
                pairs.push((dist, t, rank[d], d));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; truth.len()];
    let mut used = vec![false; detections.len()];
    for (dist, t, _, d) in pairs {
        if out[t].is_none() && !used[d] {
            out[t] = Some((d, dist));
            used[d] = true;
        }
    }
    out
}

/// Evaluation of a single scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanEval {
    pub scan_id: String,
    pub truth: Vec<VortexSpec>,
    pub detections: Vec<Detection>,
    /// Per truth: matched detection index and distance.
    pub matches: Vec<Option<(usize, f64)>>,
}

impl ScanEval {
    pub fn new(scan_id: impl Into<String>, truth: Vec<VortexSpec>, detections: Vec<Detection>, d_match: f64) -> Self {
        let matches = match_detections(&truth, &detections, d_match);
        Self {
            scan_id: scan_id.into(),
            truth,
            detections,
            matches,
        }
    }

    pub fn true_positives(&self) -> usize {
        self.matches.iter().filter(|m| m.is_some()).count()
    }

    pub fn false_negatives(&self) -> usize {
        self.truth.len() - self.true_positives()
    }

    pub fn false_positives(&self) -> usize {
        self.detections.len() - self.true_positives()
    }

    /// Error charged to truth `i`: the match distance, or for a miss the
    /// distance of the true centre from the origin.
    pub fn error(&self, i: usize) -> f64 {
        match self.matches[i] {
            Some((_, d)) => d,
            None => self.truth[i].center.0.hypot(self.truth[i].center.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_truth: usize,
    pub n_detected: usize,
    pub true_positives: usize,
    pub false_negatives: usize,
    pub false_positives: usize,
    pub recall: f64,
    pub mean_error: f64,
    /// Mean over matched vortices only; NaN when nothing matched.
    pub mean_error_no_fn: f64,
    pub scans: Vec<ScanEval>,
}

impl EvalReport {
    pub fn from_scans(scans: Vec<ScanEval>) -> Result<Self> {
        let n_truth: usize = scans.iter().map(|s| s.truth.len()).sum();
        if n_truth == 0 {
            return Err(Error::NoGroundTruth);
        }
        let n_detected = scans.iter().map(|s| s.detections.len()).sum();
        let tp: usize = scans.iter().map(ScanEval::true_positives).sum();
        let fp = scans.iter().map(ScanEval::false_positives).sum();
        let mut all = 0.0;
        let mut matched = 0.0;
        for s in &scans {
            for i in 0..s.truth.len() {
                let e = s.error(i);
                all += e;
                if s.matches[i].is_some() {
                    matched += e;
                }
            }
        }
        Ok(Self {
            n_truth,
            n_detected,
            true_positives: tp,
            false_negatives: n_truth - tp,
            false_positives: fp,
            recall: tp as f64 / n_truth as f64,
            mean_error: all / n_truth as f64,
            mean_error_no_fn: if tp > 0 { matched / tp as f64 } else { f64::NAN },
            scans,
        })
    }

    /// One record per true vortex:
    /// `scan_id TAB class TAB truth_y TAB truth_z TAB status TAB error_m`.
    pub fn records(&self) -> String {
        let mut out = String::from("scan_id\tclass\ttruth_y\ttruth_z\tstatus\terror_m\n");
        for s in &self.scans {
            for (i, v) in s.truth.iter().enumerate() {
                let status = if s.matches[i].is_some() { "TP" } else { "FN" };
                let _ = writeln!(
                    out,
                    "{}\t{}\t{:.3}\t{:.3}\t{}\t{:.3}",
                    s.scan_id,
                    v.class.name(),
                    v.center.0,
                    v.center.1,
                    status,
                    s.error(i)
                );
            }
        }
        out
    }

    /// Per-scan counts, including false positives.
    pub fn scan_summary(&self) -> String {
        let mut out = String::from("scan_id\ttruth\tdetected\ttp\tfn\tfp\n");
        for s in &self.scans {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                s.scan_id,
                s.truth.len(),
                s.detections.len(),
                s.true_positives(),
                s.false_negatives(),
                s.false_positives()
            );
        }
        out
    }
}

/// Plain-text results table, one row per `(method, report)`: recall in
/// percent and both errors in metres, two decimals each.
pub fn render_table(rows: &[(String, &EvalReport)]) -> String {
    let header = ["Method", "Recall (%)", "ME (m)", "ME excl. FN (m)"];
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|(name, r)| {
            [
                name.clone(),
                format!("{:.2}", r.recall * 100.0),
                format!("{:.2}", r.mean_error),
                format!("{:.2}", r.mean_error_no_fn),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: [&str; 4]| {
        let _ = writeln!(
            out,
            "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}",
            row[0],
            row[1],
            row[2],
            row[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3]
        );
    };
    line(&mut out, header);
    let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 6));
    for row in &cells {
        line(&mut out, [&row[0], &row[1], &row[2], &row[3]]);
    }
    out
}
