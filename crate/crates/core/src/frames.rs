//! Task-relevant frame selection around each action.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{cosine, Gateway, GatewayError, ImageRef};

pub const WINDOW_PAD_S: f64 = 15.0;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("cannot read video {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("action span [{start}, {end}] is inverted")]
    Span { start: f64, end: f64 },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSample {
    pub timestamp: u32,
    pub image_ref: ImageRef,
    pub score: Option<f64>,
    pub kept: bool,
}

/// Anything that can hand out the encoded frame at a whole second.
pub trait VideoSource {
    fn title(&self) -> &str;
    fn duration_s(&self) -> f64;
    fn frame_at(&self, second: u32) -> Result<Vec<u8>, FrameError>;
}

#[derive(Debug, Deserialize)]
struct DirManifest {
    title: String,
    duration_s: f64,
}

/// A directory of pre-extracted 1 Hz frames:
/// `video.json` with `{title, duration_s}` and `frames/00000.<ext>` onward.
/// The nearest earlier frame stands in for a missing second.
pub struct FrameDir {
    root: PathBuf,
    title: String,
    duration_s: f64,
    frames: Vec<(u32, PathBuf)>,
}

impl FrameDir {
    pub fn open(root: &Path) -> Result<Self, FrameError> {
        let io = |msg: String| FrameError::Io {
            path: root.display().to_string(),
            msg,
        };
        let raw = std::fs::read_to_string(root.join("video.json")).map_err(|e| io(e.to_string()))?;
        let manifest: DirManifest = serde_json::from_str(&raw).map_err(|e| io(e.to_string()))?;
        let mut frames = Vec::new();
        let dir = root.join("frames");
        for entry in std::fs::read_dir(&dir).map_err(|e| io(format!("{}: {e}", dir.display())))? {
            let path = entry.map_err(|e| io(e.to_string()))?.path();
            let second = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<u32>().ok());
            if let Some(second) = second {
                frames.push((second, path));
            }
        }
        frames.sort();
        if frames.is_empty() {
            return Err(io("no frames".into()));
        }
        Ok(FrameDir {
            root: root.to_path_buf(),
            title: manifest.title,
            duration_s: manifest.duration_s,
            frames,
        })
    }
}

impl VideoSource for FrameDir {
    fn title(&self) -> &str {
        &self.title
    }

    fn duration_s(&self) -> f64 {
        self.duration_s
    }

    fn frame_at(&self, second: u32) -> Result<Vec<u8>, FrameError> {
        let idx = self.frames.partition_point(|(s, _)| *s <= second);
        let (_, path) = &self.frames[idx.saturating_sub(1)];
        std::fs::read(path).map_err(|e| FrameError::Io {
            path: self.root.display().to_string(),
            msg: format!("{}: {e}", path.display()),
        })
    }
}

/// A media file decoded through `ffmpeg`/`ffprobe` subprocesses.
pub struct FfmpegVideo {
    path: PathBuf,
    title: String,
    duration_s: f64,
}

impl FfmpegVideo {
    pub fn open(path: &Path) -> Result<Self, FrameError> {
        let io = |msg: String| FrameError::Io {
            path: path.display().to_string(),
            msg,
        };
        if !path.is_file() {
            return Err(io("no such file".into()));
        }
        let out = Command::new("ffprobe")
            .args(["-v", "error", "-show_entries", "format=duration", "-of", "csv=p=0"])
            .arg(path)
            .output()
            .map_err(|e| io(format!("ffprobe: {e}")))?;
        if !out.status.success() {
            return Err(io(String::from_utf8_lossy(&out.stderr).trim().to_string()));
        }
        let duration_s = String::from_utf8_lossy(&out.stdout)
            .trim()
            .parse::<f64>()
            .map_err(|e| io(format!("duration: {e}")))?;
        let title = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(FfmpegVideo {
            path: path.to_path_buf(),
            title,
            duration_s,
        })
    }
}

impl VideoSource for FfmpegVideo {
    fn title(&self) -> &str {
        &self.title
    }

    fn duration_s(&self) -> f64 {
        self.duration_s
    }

    fn frame_at(&self, second: u32) -> Result<Vec<u8>, FrameError> {
        let out = Command::new("ffmpeg")
            .args(["-v", "error", "-ss", &second.to_string(), "-i"])
            .arg(&self.path)
            .args(["-frames:v", "1", "-f", "image2pipe", "-vcodec", "mjpeg", "-"])
            .output()
            .map_err(|e| FrameError::Io {
                path: self.path.display().to_string(),
                msg: format!("ffmpeg: {e}"),
            })?;
        if !out.status.success() || out.stdout.is_empty() {
            return Err(FrameError::Io {
                path: self.path.display().to_string(),
                msg: format!("no frame at {second}s"),
            });
        }
        Ok(out.stdout)
    }
}

/// Opens a frame directory or, failing that, a media file.
pub fn open_video(path: &Path) -> Result<Box<dyn VideoSource>, FrameError> {
    if path.is_dir() {
        Ok(Box::new(FrameDir::open(path)?))
    } else {
        Ok(Box::new(FfmpegVideo::open(path)?))
    }
}

/// Whole seconds in `[max(0, start − 15), min(duration, end + 15)]`.
pub fn window(start: f64, end: f64, duration: f64) -> Result<Vec<u32>, FrameError> {
    if start > end {
        return Err(FrameError::Span { start, end });
    }
    let lo = (start - WINDOW_PAD_S).max(0.0).ceil();
    let hi = (end + WINDOW_PAD_S).min(duration).floor();
    if hi < lo {
        return Ok(Vec::new());
    }
    Ok((lo as u32..=hi as u32).collect())
}

pub fn sample_frames(
    video: &dyn VideoSource,
    gateway: &Gateway,
    start: f64,
    end: f64,
) -> Result<Vec<FrameSample>, FrameError> {
    window(start, end, video.duration_s())?
        .into_iter()
        .map(|t| {
            let bytes = video.frame_at(t)?;
            Ok(FrameSample {
                timestamp: t,
                image_ref: gateway.images().put(&bytes),
                score: None,
                kept: false,
            })
        })
        .collect()
}

/// Scores each frame against the action text. Frames whose embedding fails
/// are dropped.
pub fn score_frames(
    gateway: &Gateway,
    frames: Vec<FrameSample>,
    action_text: &str,
) -> Result<Vec<FrameSample>, FrameError> {
    let text = gateway.embed(action_text)?;
    Ok(frames
        .into_iter()
        .filter_map(|mut f| match gateway.embed_image(&f.image_ref) {
            Ok(v) => {
                f.score = Some(cosine(&v, &text).clamp(-1.0, 1.0));
                Some(f)
            }
            Err(e) => {
                tracing::warn!(t = f.timestamp, error = %e, "dropping frame without embedding");
                None
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdPolicy {
    pub floor: f64,
    pub base: f64,
    pub ceiling: f64,
    pub high_density_frac: f64,
    pub low_density_frac: f64,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy {
            floor: 0.27,
            base: 0.285,
            ceiling: 0.30,
            high_density_frac: 0.6,
            low_density_frac: 0.1,
        }
    }
}

impl ThresholdPolicy {
    pub fn check(&self) -> Result<(), String> {
        if !(self.floor <= self.base && self.base <= self.ceiling) {
            return Err(format!(
                "threshold policy needs floor <= base <= ceiling, got {} / {} / {}",
                self.floor, self.base, self.ceiling
            ));
        }
        if !(0.0..=1.0).contains(&self.low_density_frac)
            || !(0.0..=1.0).contains(&self.high_density_frac)
            || self.low_density_frac > self.high_density_frac
        {
            return Err("density fractions must satisfy 0 <= low <= high <= 1".into());
        }
        Ok(())
    }

    /// Effective threshold for a set of scores.
    pub fn threshold(&self, scores: &[f64]) -> f64 {
        if scores.is_empty() {
            return self.base;
        }
        let above = scores.iter().filter(|s| **s > self.base).count();
        let frac = above as f64 / scores.len() as f64;
        if frac > self.high_density_frac {
            self.ceiling
        } else if frac < self.low_density_frac {
            self.floor
        } else {
            self.base
        }
    }
}

/// Marks frames scoring at least the density-adjusted threshold. When none
/// pass, the single best frame (earliest on ties) is kept.
pub fn select_relevant(frames: Vec<FrameSample>, policy: &ThresholdPolicy) -> Vec<FrameSample> {
    let scores: Vec<f64> = frames.iter().map(|f| f.score.unwrap_or(-1.0)).collect();
    let t = policy.threshold(&scores);
    let mut kept: Vec<FrameSample> = frames
        .iter()
        .zip(&scores)
        .filter(|(_, s)| **s >= t)
        .map(|(f, _)| FrameSample {
            kept: true,
            ..f.clone()
        })
        .collect();
    if kept.is_empty() {
        let best = scores
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |best, (i, s)| match best {
                Some((_, b)) if b >= *s => best,
                _ => Some((i, *s)),
            });
        if let Some((i, _)) = best {
            kept.push(FrameSample {
                kept: true,
                ..frames[i].clone()
            });
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::{FixtureValue, Fixtures, MockBackend, ModelRequest, CAPTION_PROMPT};

    fn scored(scores: &[f64]) -> Vec<FrameSample> {
        scores
            .iter()
            .enumerate()
            .map(|(i, s)| FrameSample {
                timestamp: i as u32,
                image_ref: ImageRef::of(&[i as u8]),
                score: Some(*s),
                kept: false,
            })
            .collect()
    }

    #[test]
    fn window_arithmetic() {
        assert_eq!(window(30.0, 40.0, 300.0).unwrap(), (15..=55).collect::<Vec<_>>());
        let w = window(5.0, 10.0, 300.0).unwrap();
        assert_eq!((w[0], *w.last().unwrap(), w.len()), (0, 25, 26));
        let w = window(295.0, 300.0, 300.0).unwrap();
        assert_eq!((w[0], *w.last().unwrap(), w.len()), (280, 300, 21));
        assert!(window(3.0, 2.0, 10.0).is_err());
    }

    #[test]
    fn threshold_bands() {
        let p = ThresholdPolicy::default();
        let kept = select_relevant(scored(&[0.5; 10]), &p);
        assert_eq!(kept.len(), 10);
        assert_eq!(p.threshold(&[0.5; 10]), 0.30);

        let mut s = vec![0.26; 9];
        s.push(0.28);
        assert_eq!(p.threshold(&s), 0.27);
        let kept = select_relevant(scored(&s), &p);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, Some(0.28));

        let kept = select_relevant(scored(&[0.10; 4]), &p);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].timestamp, 0);
        assert!(kept[0].kept);

        assert!(select_relevant(vec![], &p).is_empty());
    }

    #[test]
    fn middle_band_uses_base() {
        let p = ThresholdPolicy::default();
        // 3 of 10 above base -> base threshold
        let s = [0.29, 0.29, 0.29, 0.285, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2];
        assert_eq!(p.threshold(&s), 0.285);
        assert_eq!(select_relevant(scored(&s), &p).len(), 4);
    }

    #[test]
    fn scoring_follows_cosine() {
        let mut fx = Fixtures::default();
        let frame = b"frame bytes";
        let r = ImageRef::of(frame);
        fx.insert(
            &ModelRequest::batch(CAPTION_PROMPT).with_images([r.clone()]),
            FixtureValue::Text("a bowl".into()),
        );
        fx.insert(&ModelRequest::embed("a bowl"), FixtureValue::Vector(vec![1.0, 0.0]));
        fx.insert(&ModelRequest::embed("stir"), FixtureValue::Vector(vec![0.6, 0.8]));
        let gw = Gateway::new(Arc::new(MockBackend::new(fx).strict(true)));
        gw.images().put(frame);
        let frames = vec![FrameSample {
            timestamp: 0,
            image_ref: r,
            score: None,
            kept: false,
        }];
        let s = score_frames(&gw, frames, "stir").unwrap();
        assert!((s[0].score.unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn frames_without_embeddings_are_dropped() {
        let gw = Gateway::new(Arc::new(MockBackend::new(Fixtures::default()).strict(true)));
        let r = gw.images().put(b"x");
        let frames = vec![FrameSample {
            timestamp: 0,
            image_ref: r,
            score: None,
            kept: false,
        }];
        assert!(score_frames(&gw, frames, "stir").unwrap().is_empty());
    }

    #[test]
    fn frame_dir_falls_back_to_earlier_frame() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("video.json"), r#"{"title":"t","duration_s":9}"#).unwrap();
        std::fs::create_dir(dir.path().join("frames")).unwrap();
        std::fs::write(dir.path().join("frames/00000.txt"), "zero").unwrap();
        std::fs::write(dir.path().join("frames/00004.txt"), "four").unwrap();
        let v = FrameDir::open(dir.path()).unwrap();
        assert_eq!(v.frame_at(3).unwrap(), b"zero");
        assert_eq!(v.frame_at(8).unwrap(), b"four");
        assert_eq!(v.duration_s(), 9.0);
    }

    #[test]
    fn missing_video_is_an_io_error() {
        assert!(matches!(
            open_video(Path::new("/nonexistent/v.mp4")),
            Err(FrameError::Io { .. })
        ));
    }
}
