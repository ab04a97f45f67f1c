use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Utterance class. Spoof is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    BonaFide = 0,
    Spoof = 1,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn is_spoof(self) -> bool {
        self == Label::Spoof
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::BonaFide => Label::Spoof,
            Label::Spoof => Label::BonaFide,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "0" | "bonafide" | "bona-fide" | "bona_fide" | "genuine" | "real" => Ok(Label::BonaFide),
            "1" | "spoof" | "fake" => Ok(Label::Spoof),
            other => Err(Error::data(format!("unknown label {other:?}"))),
        }
    }
}
