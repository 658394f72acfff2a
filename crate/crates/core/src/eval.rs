//! Scoring, confusion matrices and paired system comparison.
//!
//! Precision and recall with a zero denominator are 0, and macro F1 always
//! averages over all seven label codes, so a class absent from both gold
//! and predictions contributes an F1 of 0.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::label::{LabelCode, NUM_LABELS};

/// Rows are gold labels, columns are predictions, both in label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[u64; NUM_LABELS]; NUM_LABELS]);

impl ConfusionMatrix {
    pub fn from_pairs(gold: &[LabelCode], predicted: &[LabelCode]) -> Result<Self> {
        if gold.len() != predicted.len() {
            return Err(Error::invalid(format!(
                "{} gold labels but {} predictions",
                gold.len(),
                predicted.len()
            )));
        }
        let mut m = [[0u64; NUM_LABELS]; NUM_LABELS];
        for (g, p) in gold.iter().zip(predicted) {
            m[g.index()][p.index()] += 1;
        }
        Ok(ConfusionMatrix(m))
    }

    pub fn get(&self, gold: LabelCode, predicted: LabelCode) -> u64 {
        self.0[gold.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn support(&self, gold: LabelCode) -> u64 {
        self.0[gold.index()].iter().sum()
    }

    pub fn predicted_count(&self, label: LabelCode) -> u64 {
        self.0.iter().map(|row| row[label.index()]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    #[serde(rename = "p")]
    pub precision: f64,
    #[serde(rename = "r")]
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Keyed by label code, in label order.
    pub per_class: BTreeMap<LabelCode, ClassScores>,
    pub matrix: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Recomputes every metric from a confusion matrix.
pub fn report_from_matrix(system: &str, matrix: ConfusionMatrix) -> EvalReport {
    let mut per_class = BTreeMap::new();
    for l in LabelCode::ALL {
        let tp = matrix.get(l, l);
        let precision = ratio(tp, matrix.predicted_count(l));
        let recall = ratio(tp, matrix.support(l));
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.insert(
            l,
            ClassScores {
                precision,
                recall,
                f1,
                support: matrix.support(l),
            },
        );
    }
    let macro_f1 = per_class.values().map(|s| s.f1).sum::<f64>() / NUM_LABELS as f64;
    let correct: u64 = LabelCode::ALL.iter().map(|&l| matrix.get(l, l)).sum();
    EvalReport {
        system: system.to_string(),
        accuracy: ratio(correct, matrix.total()),
        macro_f1,
        per_class,
        matrix,
    }
}

pub fn score(system: &str, gold: &[LabelCode], predicted: &[LabelCode]) -> Result<EvalReport> {
    if gold.is_empty() {
        return Err(Error::invalid("nothing to score"));
    }
    Ok(report_from_matrix(
        system,
        ConfusionMatrix::from_pairs(gold, predicted)?,
    ))
}

impl EvalReport {
    pub fn class(&self, label: LabelCode) -> &ClassScores {
        &self.per_class[&label]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// CSV with a `gold\predicted` header row and label-code row headers.
pub fn confusion_csv(matrix: &ConfusionMatrix) -> String {
    let mut out = String::from("gold\\predicted");
    for l in LabelCode::ALL {
        out.push(',');
        out.push_str(l.as_str());
    }
    out.push('\n');
    for g in LabelCode::ALL {
        out.push_str(g.as_str());
        for p in LabelCode::ALL {
            let _ = write!(out, ",{}", matrix.get(g, p));
        }
        out.push('\n');
    }
    out
}

pub fn parse_confusion_csv(csv: &str) -> Result<ConfusionMatrix> {
    let bad = |line: usize, msg: &str| Error::Parse {
        line,
        message: msg.to_string(),
    };
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad(1, "empty CSV"))?.split(',').collect();
    let expected: Vec<&str> = LabelCode::ALL.iter().map(|l| l.as_str()).collect();
    if header.len() != NUM_LABELS + 1 || header[1..] != expected[..] {
        return Err(bad(1, "unexpected header"));
    }
    let mut m = [[0u64; NUM_LABELS]; NUM_LABELS];
    for (row, g) in LabelCode::ALL.iter().enumerate() {
        let line_no = row + 2;
        let fields: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad(line_no, "missing row"))?
            .split(',')
            .collect();
        if fields.len() != NUM_LABELS + 1 || fields[0] != g.as_str() {
            return Err(bad(line_no, "malformed row"));
        }
        for (col, f) in fields[1..].iter().enumerate() {
            m[row][col] = f.parse().map_err(|_| bad(line_no, "bad count"))?;
        }
    }
    Ok(ConfusionMatrix(m))
}

/// Row-normalized heatmap with per-cell counts. Output bytes depend only on
/// the matrix.
pub fn confusion_svg(matrix: &ConfusionMatrix, title: &str) -> String {
    const CELL: usize = 60;
    const LEFT: usize = 80;
    const TOP: usize = 80;
    let size = LEFT + CELL * NUM_LABELS + 20;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{size}" height="{size}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + CELL * NUM_LABELS / 2,
        escape_xml(title)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="45" text-anchor="middle">predicted</text>"#,
        LEFT + CELL * NUM_LABELS / 2
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">gold</text>"#,
        TOP + CELL * NUM_LABELS / 2,
        TOP + CELL * NUM_LABELS / 2
    );
    for (i, l) in LabelCode::ALL.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{l}</text>"#,
            LEFT + i * CELL + CELL / 2,
            TOP - 8
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{l}</text>"#,
            LEFT - 8,
            TOP + i * CELL + CELL / 2 + 4
        );
    }
    for (r, g) in LabelCode::ALL.iter().enumerate() {
        let support = matrix.support(*g);
        for (c, p) in LabelCode::ALL.iter().enumerate() {
            let count = matrix.get(*g, *p);
            let intensity = ratio(count, support);
            // White (0) to dark blue (1).
            let red = (255.0 * (1.0 - intensity)).round() as u8;
            let green = (255.0 * (1.0 - 0.7 * intensity)).round() as u8;
            let text = if intensity > 0.5 { "white" } else { "black" };
            let (x, y) = (LEFT + c * CELL, TOP + r * CELL);
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#{red:02x}{green:02x}ff" stroke="#cccccc" data-gold="{g}" data-predicted="{p}" data-intensity="{intensity:.4}"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{text}">{count}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 4
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// A right, B wrong.
    pub b: u64,
    /// A wrong, B right.
    pub c: u64,
    pub p_value: f64,
}

/// Exact two-sided McNemar test: `min(1, 2 * P[X <= min(b, c)])` with
/// `X ~ Binomial(b + c, 1/2)`; 1.0 when there are no disagreements.
pub fn mcnemar_exact(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let dist = Binomial::new(0.5, n).expect("valid binomial");
    (2.0 * dist.cdf(b.min(c))).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub system_a: String,
    pub system_b: String,
    pub macro_f1_a: f64,
    pub macro_f1_b: f64,
    /// `a - b`.
    pub macro_f1_delta: f64,
    pub accuracy_delta: f64,
    /// Per-class `f1_a - f1_b`, in label order.
    pub per_class_f1_delta: BTreeMap<LabelCode, f64>,
    pub mcnemar: McNemar,
}

pub fn compare(
    report_a: &EvalReport,
    report_b: &EvalReport,
    predictions_a: &[LabelCode],
    predictions_b: &[LabelCode],
    gold: &[LabelCode],
) -> Result<Comparison> {
    if predictions_a.len() != gold.len() || predictions_b.len() != gold.len() {
        return Err(Error::invalid("prediction and gold lengths differ"));
    }
    if report_a.matrix.total() != gold.len() as u64 || report_b.matrix.total() != gold.len() as u64 {
        return Err(Error::invalid("reports were not computed on this gold set"));
    }
    let (mut b, mut c) = (0u64, 0u64);
    for ((pa, pb), g) in predictions_a.iter().zip(predictions_b).zip(gold) {
        match (pa == g, pb == g) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(Comparison {
        system_a: report_a.system.clone(),
        system_b: report_b.system.clone(),
        macro_f1_a: report_a.macro_f1,
        macro_f1_b: report_b.macro_f1,
        macro_f1_delta: report_a.macro_f1 - report_b.macro_f1,
        accuracy_delta: report_a.accuracy - report_b.accuracy,
        per_class_f1_delta: LabelCode::ALL
            .iter()
            .map(|&l| (l, report_a.class(l).f1 - report_b.class(l).f1))
            .collect(),
        mcnemar: McNemar {
            b,
            c,
            p_value: mcnemar_exact(b, c),
        },
    })
}

/// One label per line.
pub fn format_predictions(predictions: &[LabelCode]) -> String {
    predictions.iter().map(|l| format!("{l}\n")).collect()
}
