//! Keyframe selection from grayscale frame energy.
//!
//! The energy of a frame is the sum of its squared intensities. A frame is a
//! keyframe when its energy is the maximum or the minimum of the window
//! `[t-K, t+K]`, clipped at the ends of the sequence.

use std::collections::VecDeque;
use std::io::Read;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_WINDOW: usize = 15;

#[derive(Debug, Error)]
pub enum KeyframeError {
    #[error("energy series is empty")]
    EmptySeries,
    #[error("window half-width must be at least 1")]
    ZeroWindow,
    #[error("frame {index} is {got:?}, expected {expected:?} like frame 0")]
    SizeMismatch {
        index: usize,
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("energy CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("energy CSV line {line}: cannot read `{text}`")]
    BadRow { line: u64, text: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One grayscale frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width as usize * height as usize, "pixel buffer size");
        Self { width, height, pixels }
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    /// Converts any decoded image; color goes through BT.601 luma, rounded.
    pub fn from_image(img: &DynamicImage) -> Self {
        match img {
            DynamicImage::ImageLuma8(g) => Self::new(g.width(), g.height(), g.as_raw().clone()),
            other => {
                let rgb = other.to_rgb8();
                let pixels = rgb.pixels().map(|p| luma601(p.0)).collect();
                Self::new(rgb.width(), rgb.height(), pixels)
            }
        }
    }

    fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}

/// ITU-R BT.601 luma, rounded half away from zero.
pub fn luma601([r, g, b]: [u8; 3]) -> u8 {
    // Scaled by 1000 to stay in integers: 299 + 587 + 114 = 1000.
    let y = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((y + 500) / 1000) as u8
}

/// A nonempty sequence of same-sized frames.
#[derive(Debug, Clone)]
pub struct FrameSeq {
    frames: Vec<Frame>,
    sources: Vec<String>,
}

impl FrameSeq {
    pub fn new(frames: Vec<Frame>, sources: Vec<String>) -> Result<Self, KeyframeError> {
        let first = frames.first().ok_or(KeyframeError::EmptySeries)?;
        if let Some((index, f)) = frames.iter().enumerate().find(|(_, f)| f.size() != first.size()) {
            return Err(KeyframeError::SizeMismatch {
                index,
                expected: first.size(),
                got: f.size(),
            });
        }
        Ok(Self { frames, sources })
    }

    /// Loads every PGM/PPM/PNM/PNG file in `dir`, in lexicographic order.
    pub fn load_dir(dir: &Path) -> Result<Self, KeyframeError> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "ppm" | "pnm" | "png"))
            })
            .collect();
        paths.sort();
        let frames = paths
            .par_iter()
            .map(|p| {
                image::open(p).map(|img| Frame::from_image(&img)).map_err(|e| KeyframeError::Image {
                    path: p.clone(),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let sources = paths
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect();
        Self::new(frames, sources)
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    pub fn energies(&self) -> Vec<u64> {
        self.frames.par_iter().map(frame_energy).collect()
    }
}

/// Sum of squared intensities, exact.
pub fn frame_energy(frame: &Frame) -> u64 {
    frame.pixels.iter().map(|&p| (p as u64) * (p as u64)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    Max,
    Min,
    /// Flat window: the frame is both the maximum and the minimum.
    Both,
}

impl ExtremumKind {
    fn from_flags(is_max: bool, is_min: bool) -> Option<Self> {
        match (is_max, is_min) {
            (true, true) => Some(Self::Both),
            (true, false) => Some(Self::Max),
            (false, true) => Some(Self::Min),
            (false, false) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keyframe {
    pub index: usize,
    pub kind: ExtremumKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KeyframeSet {
    pub keyframes: Vec<Keyframe>,
}

impl KeyframeSet {
    pub fn indices(&self) -> Vec<usize> {
        self.keyframes.iter().map(|k| k.index).collect()
    }

    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    /// `[{index, kind, filename}]`; `filename` is omitted when unknown.
    pub fn to_json(&self, sources: &[String]) -> serde_json::Value {
        self.keyframes
            .iter()
            .map(|k| {
                let mut v = serde_json::json!({ "index": k.index, "kind": k.kind });
                if let Some(name) = sources.get(k.index) {
                    v["filename"] = name.clone().into();
                }
                v
            })
            .collect()
    }
}

/// Per-index `(is_window_max, is_window_min)` before plateau thinning.
/// Monotone deques make this linear in the series length.
pub fn window_extrema(energies: &[u64], k: usize) -> Vec<(bool, bool)> {
    let n = energies.len();
    let mut flags = vec![(false, false); n];
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for (t, flag) in flags.iter_mut().enumerate() {
        let hi = (t + k).min(n - 1);
        while next <= hi {
            let e = energies[next];
            while maxq.back().is_some_and(|&j| energies[j] <= e) {
                maxq.pop_back();
            }
            maxq.push_back(next);
            while minq.back().is_some_and(|&j| energies[j] >= e) {
                minq.pop_back();
            }
            minq.push_back(next);
            next += 1;
        }
        let lo = t.saturating_sub(k);
        while maxq.front().is_some_and(|&j| j < lo) {
            maxq.pop_front();
        }
        while minq.front().is_some_and(|&j| j < lo) {
            minq.pop_front();
        }
        let e = energies[t];
        *flag = (e == energies[maxq[0]], e == energies[minq[0]]);
    }
    flags
}

/// Window extrema with plateau thinning: of a run of consecutive selected
/// indices sharing kind and energy, only the first survives.
pub fn extract_keyframes(energies: &[u64], k: usize) -> Result<KeyframeSet, KeyframeError> {
    if energies.is_empty() {
        return Err(KeyframeError::EmptySeries);
    }
    if k == 0 {
        return Err(KeyframeError::ZeroWindow);
    }
    let kinds: Vec<Option<ExtremumKind>> = window_extrema(energies, k)
        .into_iter()
        .map(|(mx, mn)| ExtremumKind::from_flags(mx, mn))
        .collect();
    let keyframes = kinds
        .iter()
        .enumerate()
        .filter_map(|(t, kind)| {
            let kind = (*kind)?;
            let continues_run = t > 0 && kinds[t - 1] == Some(kind) && energies[t - 1] == energies[t];
            (!continues_run).then_some(Keyframe { index: t, kind })
        })
        .collect();
    Ok(KeyframeSet { keyframes })
}

pub fn segment_demo(frames: &FrameSeq, k: usize) -> Result<KeyframeSet, KeyframeError> {
    extract_keyframes(&frames.energies(), k)
}

/// Reads `index,energy` rows (header optional) and returns energies in
/// index order.
pub fn read_energy_csv(reader: impl Read) -> Result<Vec<u64>, KeyframeError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<(usize, u64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let (Some(i), Some(e)) = (rec.get(0), rec.get(1)) else {
            continue;
        };
        match (i.parse(), e.parse::<f64>()) {
            (Ok(i), Ok(e)) if e >= 0.0 && e.is_finite() => rows.push((i, e.round() as u64)),
            // A header row or junk line.
            _ if rows.is_empty() && i.parse::<usize>().is_err() => {}
            _ => {
                return Err(KeyframeError::BadRow {
                    line: rec.position().map_or(0, |p| p.line()),
                    text: format!("{i},{e}"),
                })
            }
        }
    }
    rows.sort_unstable();
    Ok(rows.into_iter().map(|(_, e)| e).collect())
}
