use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Electrode labels and their 2-D head-disk coordinates.
///
/// Coordinates are an azimuthal-equidistant projection of the scalp onto
/// the unit disk: `Cz` at the origin, the nose along +y, the left hemisphere
/// at negative x. The projection radius is the polar angle from the vertex
/// divided by 112.5°, so the inferior temporal row (`FT9`, `TP9`, ...) lies
/// on the rim and the 10-20 equator (`Fp1`, `T7`, `O1`, ...) at 0.8.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayoutRepr", into = "LayoutRepr")]
pub struct ChannelLayout {
    names: Vec<String>,
    positions: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct LayoutRepr {
    names: Vec<String>,
    positions: Vec<[f64; 2]>,
    n_channels: usize,
}

impl TryFrom<LayoutRepr> for ChannelLayout {
    type Error = Error;

    fn try_from(r: LayoutRepr) -> Result<Self> {
        if r.n_channels != r.names.len() {
            return Err(Error::ShapeMismatch(format!(
                "layout declares {} channels but names {}",
                r.n_channels,
                r.names.len()
            )));
        }
        ChannelLayout::new(r.names, r.positions)
    }
}

impl From<ChannelLayout> for LayoutRepr {
    fn from(l: ChannelLayout) -> Self {
        LayoutRepr {
            n_channels: l.names.len(),
            names: l.names,
            positions: l.positions,
        }
    }
}

const RIM_POLAR_DEG: f64 = 112.5;

// (row label, midline polar angle in degrees with negative meaning posterior,
//  left-to-right channel names, signed lateral fraction of each channel)
type Row = (&'static [&'static str], &'static [f64], f64, f64);

// Each row is interpolated between its midline point (polar angle, front or
// back) and its 10-20 equator point (azimuth from the nose, degrees).
const ROWS: &[Row] = &[
    (&["Fp1", "Fp2"], &[-1.0, 1.0], 90.0, 18.0),
    (&["AF7", "AF3", "AFz", "AF4", "AF8"], &[-1.0, -0.5, 0.0, 0.5, 1.0], 67.5, 36.0),
    (
        &["F7", "F5", "F3", "F1", "Fz", "F2", "F4", "F6", "F8"],
        &[-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0],
        45.0,
        54.0,
    ),
    (
        &["FT7", "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "FT8"],
        &[-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0],
        22.5,
        72.0,
    ),
    (
        &["T7", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "T8"],
        &[-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0],
        0.0,
        90.0,
    ),
    (
        &["TP7", "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "TP8"],
        &[-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0],
        -22.5,
        108.0,
    ),
    (
        &["P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8"],
        &[-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0],
        -45.0,
        126.0,
    ),
    (&["PO7", "PO3", "POz", "PO4", "PO8"], &[-1.0, -0.5, 0.0, 0.5, 1.0], -67.5, 144.0),
    (&["O1", "Oz", "O2"], &[-1.0, 0.0, 1.0], -90.0, 162.0),
];

// Inferior temporal electrodes, below the equator: (name, azimuth).
const INFERIOR: &[(&str, f64)] = &[("FT9", -72.0), ("FT10", 72.0), ("TP9", -108.0), ("TP10", 108.0)];

fn project(polar_deg: f64, azimuth_deg: f64) -> [f64; 2] {
    let r = polar_deg / RIM_POLAR_DEG;
    let a = azimuth_deg.to_radians();
    [r * a.sin(), r * a.cos()]
}

impl ChannelLayout {
    pub fn new(names: Vec<String>, positions: Vec<[f64; 2]>) -> Result<Self> {
        if names.len() != positions.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} channel names but {} positions",
                names.len(),
                positions.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate channel name {n}")));
            }
        }
        for (n, p) in names.iter().zip(&positions) {
            if !(p[0].is_finite() && p[1].is_finite()) || p[0].hypot(p[1]) > 1.0 + 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "channel {n} at {p:?} lies outside the unit disk"
                )));
            }
        }
        Ok(Self { names, positions })
    }

    /// The 64-electrode extended 10-20 montage.
    pub fn standard_64() -> Self {
        let mut names = Vec::with_capacity(64);
        let mut positions = Vec::with_capacity(64);
        for &(row, fractions, mid_polar, rim_azimuth) in ROWS {
            // A midline polar angle of ±90° means the row's midline point is
            // itself on the equator (Fpz / Oz).
            let mid = if mid_polar >= 0.0 {
                project(mid_polar, 0.0)
            } else {
                project(-mid_polar, 180.0)
            };
            let right = project(90.0, rim_azimuth);
            let left = [-right[0], right[1]];
            for (&name, &f) in row.iter().zip(fractions) {
                let rim = if f < 0.0 { left } else { right };
                let t = f.abs();
                names.push(name.to_string());
                positions.push([mid[0] + t * (rim[0] - mid[0]), mid[1] + t * (rim[1] - mid[1])]);
            }
        }
        for &(name, az) in INFERIOR {
            names.push(name.to_string());
            positions.push(project(RIM_POLAR_DEG, az));
        }
        Self::new(names, positions).expect("standard montage is valid")
    }

    pub fn n_channels(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n.eq_ignore_ascii_case(name))
    }
}
