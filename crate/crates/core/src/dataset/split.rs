//! Labeled/unlabeled assignments over training videos.
//!
//! Splits are stored apart from the dataset so a single dataset file serves
//! every protocol and label fraction. The text form lists one video per line
//! with its mask as a run of `0`/`1` characters.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use super::VideoRecord;
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Every video contributes frames sampled at a fixed stride from frame 0.
    FrameStride,
    /// Whole videos are labeled; the rest are entirely unlabeled.
    WholeVideo,
}

impl Protocol {
    pub fn number(self) -> u8 {
        match self {
            Protocol::FrameStride => 1,
            Protocol::WholeVideo => 2,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Protocol::FrameStride),
            2 => Ok(Protocol::WholeVideo),
            _ => Err(Error::Config(format!("unknown protocol {n}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub protocol: Protocol,
    pub label_fraction: f64,
    pub seed: u64,
    /// `(video id, per-frame labeled flag)` for every training video.
    pub masks: Vec<(u32, Vec<bool>)>,
}

fn check_fraction(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("label fraction must lie in (0, 1], got {p}")))
    }
}

/// Labels frames `0, k, 2k, ...` of every video with `k = round(1 / p)`.
pub fn split_protocol1(videos: &[&VideoRecord], p: f64, seed: u64) -> Result<DatasetSplit> {
    check_fraction(p)?;
    let stride = ((1.0 / p).round() as usize).max(1);
    let masks = videos
        .iter()
        .map(|v| (v.id, (0..v.len()).map(|t| t % stride == 0).collect()))
        .collect();
    Ok(DatasetSplit {
        protocol: Protocol::FrameStride,
        label_fraction: p,
        seed,
        masks,
    })
}

/// Fully labels a seeded uniform subset of `ceil(p * V)` videos.
pub fn split_protocol2(videos: &[&VideoRecord], p: f64, seed: u64) -> Result<DatasetSplit> {
    check_fraction(p)?;
    if videos.is_empty() {
        return Err(Error::Config("no videos to split".into()));
    }
    let n_labeled = ((p * videos.len() as f64).ceil() as usize).clamp(1, videos.len());
    let mut order: Vec<usize> = (0..videos.len()).collect();
    order.shuffle(&mut seeded(seed));
    let mut labeled = vec![false; videos.len()];
    for &i in &order[..n_labeled] {
        labeled[i] = true;
    }
    let masks = videos.iter().zip(labeled).map(|(v, l)| (v.id, vec![l; v.len()])).collect();
    Ok(DatasetSplit {
        protocol: Protocol::WholeVideo,
        label_fraction: p,
        seed,
        masks,
    })
}

impl DatasetSplit {
    pub fn mask(&self, id: u32) -> Option<&[bool]> {
        self.masks.iter().find(|(v, _)| *v == id).map(|(_, m)| m.as_slice())
    }

    /// `(video id, frame)` of every labeled frame, in video then frame order.
    pub fn labeled_frames(&self) -> Vec<(u32, usize)> {
        self.masks
            .iter()
            .flat_map(|(id, m)| m.iter().enumerate().filter(|(_, l)| **l).map(move |(t, _)| (*id, t)))
            .collect()
    }

    pub fn labeled_count(&self) -> usize {
        self.masks.iter().map(|(_, m)| m.iter().filter(|l| **l).count()).sum()
    }

    pub fn frame_count(&self) -> usize {
        self.masks.iter().map(|(_, m)| m.len()).sum()
    }

    /// Videos containing at least one labeled frame.
    pub fn videos_with_labels(&self) -> Vec<u32> {
        self.masks.iter().filter(|(_, m)| m.iter().any(|l| *l)).map(|(id, _)| *id).collect()
    }

    /// Videos without any labeled frame.
    pub fn unlabeled_videos(&self) -> Vec<u32> {
        self.masks.iter().filter(|(_, m)| !m.iter().any(|l| *l)).map(|(id, _)| *id).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "protocol = {}", self.protocol.number());
        let _ = writeln!(out, "label_fraction = {}", self.label_fraction);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "labeled_frames = {}", self.labeled_count());
        for (id, m) in &self.masks {
            let bits: String = m.iter().map(|&l| if l { '1' } else { '0' }).collect();
            let _ = writeln!(out, "video {id} {bits}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut protocol = None;
        let mut fraction = None;
        let mut seed = None;
        let mut masks = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if let Some(rest) = line.strip_prefix("video ") {
                let (id, bits) = rest
                    .split_once(' ')
                    .ok_or_else(|| Error::Format(format!("bad split line `{line}`")))?;
                let id: u32 = id.parse().map_err(|_| Error::Format(format!("bad video id in `{line}`")))?;
                let mask = bits
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        _ => Err(Error::Format(format!("bad mask character `{c}`"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                masks.push((id, mask));
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Format(format!("bad split line `{line}`")))?;
            let bad = || Error::Format(format!("bad value in `{line}`"));
            match k {
                "protocol" => protocol = Some(Protocol::from_number(v.parse().map_err(|_| bad())?)?),
                "label_fraction" => fraction = Some(v.parse::<f64>().map_err(|_| bad())?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad())?),
                _ => {}
            }
        }
        Ok(DatasetSplit {
            protocol: protocol.ok_or_else(|| Error::Format("split lacks protocol".into()))?,
            label_fraction: fraction.ok_or_else(|| Error::Format("split lacks label_fraction".into()))?,
            seed: seed.ok_or_else(|| Error::Format("split lacks seed".into()))?,
            masks,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        DatasetSplit::from_text(&std::fs::read_to_string(path)?)
    }
}
