use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Number of language/dialect classes.
pub const NUM_LABELS: usize = 7;

/// The seven language and dialect codes of the cuneiform corpus.
///
/// The declaration order is the fixed class order used everywhere: model
/// weight rows, decision-value columns, confusion-matrix rows and columns,
/// and every tie-break ("lowest class index wins").
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LabelCode {
    /// Late Babylonian
    LTB,
    /// Middle Babylonian peripheral
    MPB,
    /// Neo-Assyrian
    NE,
    /// Neo-Babylonian
    NEB,
    /// Old Babylonian
    OLB,
    /// Standard Babylonian
    STB,
    /// Sumerian
    SUX,
}

impl LabelCode {
    pub const ALL: [LabelCode; NUM_LABELS] = [
        LabelCode::LTB,
        LabelCode::MPB,
        LabelCode::NE,
        LabelCode::NEB,
        LabelCode::OLB,
        LabelCode::STB,
        LabelCode::SUX,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<LabelCode> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelCode::LTB => "LTB",
            LabelCode::MPB => "MPB",
            LabelCode::NE => "NE",
            LabelCode::NEB => "NEB",
            LabelCode::OLB => "OLB",
            LabelCode::STB => "STB",
            LabelCode::SUX => "SUX",
        }
    }
}

impl fmt::Display for LabelCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LabelCode::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
