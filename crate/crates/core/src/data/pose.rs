//! Pose codes and the configurable code-to-angle map.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Frontal,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Frontal => "frontal",
        })
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            "frontal" => Ok(Side::Frontal),
            other => Err(Error::InvalidPoseMap(format!("unknown side `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseLabel {
    pub code: String,
    pub angle_degrees: f64,
    pub side: Side,
}

impl PoseLabel {
    pub fn is_frontal(&self) -> bool {
        self.side == Side::Frontal
    }
}

/// Maps corpus pose codes to `(angle, side)`.
///
/// Text form, one entry per line, `#` starts a comment:
///
/// ```text
/// fa = 0 frontal
/// hl = 67.5 left
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct PoseMap {
    entries: BTreeMap<String, (f64, Side)>,
}

const COLOR_FERET: &str = "\
# Color FERET yaw codes
fa = 0 frontal
fb = 0 frontal
ql = 22.5 left
qr = 22.5 right
hl = 67.5 left
hr = 67.5 right
pl = 90 left
pr = 90 right
";

impl Default for PoseMap {
    fn default() -> Self {
        Self::color_feret()
    }
}

impl PoseMap {
    pub fn color_feret() -> Self {
        Self::parse(COLOR_FERET).expect("built-in pose map is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad =
                |why: &str| Error::InvalidPoseMap(format!("line {}: {why}: `{raw}`", lineno + 1));
            let (code, rest) = line
                .split_once('=')
                .ok_or_else(|| bad("expected `code = angle side`"))?;
            let code = code.trim();
            if code.is_empty() || !code.chars().all(|c| c.is_ascii_alphanumeric()) {
                return Err(bad("pose codes must be non-empty and alphanumeric"));
            }
            let mut fields = rest.split_whitespace();
            let angle: f64 = fields
                .next()
                .ok_or_else(|| bad("missing angle"))?
                .parse()
                .map_err(|_| bad("angle is not a number"))?;
            let side: Side = fields.next().ok_or_else(|| bad("missing side"))?.parse()?;
            if fields.next().is_some() {
                return Err(bad("trailing fields"));
            }
            if !(0.0..=90.0).contains(&angle) {
                return Err(bad("angle must lie in [0, 90]"));
            }
            if (angle == 0.0) != (side == Side::Frontal) {
                return Err(bad("angle 0 and side `frontal` must go together"));
            }
            if entries.insert(code.to_string(), (angle, side)).is_some() {
                return Err(bad("duplicate code"));
            }
        }
        if entries.is_empty() {
            return Err(Error::InvalidPoseMap("no entries".into()));
        }
        Ok(Self { entries })
    }

    pub fn parse_code(&self, code: &str) -> Result<PoseLabel> {
        self.entries
            .get(code)
            .map(|&(angle_degrees, side)| PoseLabel {
                code: code.to_string(),
                angle_degrees,
                side,
            })
            .ok_or_else(|| Error::UnknownPoseCode(code.to_string()))
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Looks `code` up in the default Color FERET map.
pub fn parse_pose_code(code: &str) -> Result<PoseLabel> {
    PoseMap::color_feret().parse_code(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frontal_code_is_zero_degrees() {
        let p = parse_pose_code("fa").unwrap();
        assert_eq!(p.angle_degrees, 0.0);
        assert_eq!(p.side, Side::Frontal);
    }

    // Values from the Color FERET pose-code table (hl/hr = +/-67.5, pl/pr = +/-90).
    #[test]
    fn feret_half_and_profile_codes() {
        let hl = parse_pose_code("hl").unwrap();
        assert_eq!((hl.angle_degrees, hl.side), (67.5, Side::Left));
        let pr = parse_pose_code("pr").unwrap();
        assert_eq!((pr.angle_degrees, pr.side), (90.0, Side::Right));
    }

    #[test]
    fn unknown_code_errors() {
        assert!(matches!(parse_pose_code("zz"), Err(Error::UnknownPoseCode(c)) if c == "zz"));
    }

    #[test]
    fn rejects_inconsistent_frontal_entries() {
        assert!(PoseMap::parse("xx = 0 left").is_err());
        assert!(PoseMap::parse("xx = 10 frontal").is_err());
        assert!(PoseMap::parse("xx = 95 left").is_err());
        assert!(PoseMap::parse("a = 1 left\na = 2 left").is_err());
    }

    #[test]
    fn custom_map_with_comments() {
        let m = PoseMap::parse("# multi-pie\n f = 0 frontal # center\nl45 = 45 left\n").unwrap();
        assert_eq!(m.parse_code("l45").unwrap().angle_degrees, 45.0);
        assert_eq!(m.codes().count(), 2);
    }
}
